//! Regenerates the network fixtures under `fixtures/`.
//!
//! `cargo run -p cluster-dcg --example make_fixtures`

use std::path::PathBuf;

use cluster_dcg::graph::{
    build_cluster_network, save_network, spectral_constants, ClusterLink, ClusterNetwork, ClusterSpec, Density,
    ExternalEdges, IntraTopology,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn links(pairs: &[(usize, usize)]) -> ExternalEdges {
    ExternalEdges::Random(pairs.iter().map(|&clusters| ClusterLink { clusters, count: 1 }).collect())
}

/// Adds one more random link per cluster pair, avoiding existing edges.
fn add_links(net: &ClusterNetwork, pairs: &[(usize, usize)], seed: u64) -> ClusterNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = net.edges().to_vec();
    for &(a, b) in pairs {
        loop {
            let (ra, rb) = (net.cluster_nodes(a), net.cluster_nodes(b));
            let u = rng.random_range(ra);
            let v = rng.random_range(rb);
            let e = (u.min(v), u.max(v));
            if !edges.contains(&e) {
                edges.push(e);
                break;
            }
        }
    }
    ClusterNetwork::from_edges(net.cluster_sizes(), &edges).expect("valid edges")
}

fn report(name: &str, net: &ClusterNetwork) {
    let sc = spectral_constants(net).expect("connected");
    println!(
        "{name}: N = {}, σ₂ per cluster = {:?}, σ₂(L̃ᴱ) = {:.4}, σ₂(L) = {:.4}",
        net.num_nodes(),
        sc.sigma2_per_cluster.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
        sc.sigma2_agg,
        sc.sigma2_full
    );
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    let triangle = [(0, 1), (1, 2), (0, 2)];
    let small = build_cluster_network(&ClusterSpec {
        cluster_sizes: vec![10, 20, 30],
        intra: IntraTopology::Density(Density::PerCluster(vec![0.8, 0.95, 0.4])),
        external: links(&triangle),
        seed: 261,
    })
    .unwrap();
    report("small_3links", &small);
    save_network(&small, dir.join("small_3links.json")).unwrap();

    let doubled = add_links(&small, &triangle, 262);
    report("small_6links", &doubled);
    save_network(&doubled, dir.join("small_6links.json")).unwrap();

    let ring = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)];
    let large = build_cluster_network(&ClusterSpec {
        cluster_sizes: vec![60; 5],
        intra: IntraTopology::Density(Density::Shared(0.4)),
        external: links(&ring),
        seed: 5,
    })
    .unwrap();
    report("large_5clusters", &large);
    save_network(&large, dir.join("large_5clusters.json")).unwrap();
}
