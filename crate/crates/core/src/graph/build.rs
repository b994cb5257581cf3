use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{is_connected, ClusterNetwork, GraphError};

/// Maximum number of Erdős–Rényi draws per cluster before giving up on connectivity.
pub const MAX_CONNECTIVITY_ATTEMPTS: usize = 100;

/// Recipe for a random (or partly explicit) cluster network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub cluster_sizes: Vec<usize>,
    #[serde(default)]
    pub intra: IntraTopology,
    #[serde(default)]
    pub external: ExternalEdges,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraTopology {
    Complete,
    /// Erdős–Rényi edge probability, shared or per cluster.
    Density(Density),
}

impl Default for IntraTopology {
    fn default() -> Self {
        Self::Complete
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Density {
    Shared(f64),
    PerCluster(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalEdges {
    /// Explicit cross-cluster node pairs (global, 0-indexed).
    Edges(Vec<(usize, usize)>),
    /// Uniformly random endpoints for a number of links per cluster pair.
    Random(Vec<ClusterLink>),
}

impl Default for ExternalEdges {
    fn default() -> Self {
        Self::Edges(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLink {
    pub clusters: (usize, usize),
    pub count: usize,
}

impl ClusterSpec {
    fn densities(&self) -> Result<Option<Vec<f64>>, GraphError> {
        let r = self.cluster_sizes.len();
        let values = match &self.intra {
            IntraTopology::Complete => return Ok(None),
            IntraTopology::Density(Density::Shared(p)) => vec![*p; r],
            IntraTopology::Density(Density::PerCluster(ps)) => {
                if ps.len() != r {
                    return Err(GraphError::DensityCount { expected: r, got: ps.len() });
                }
                ps.clone()
            }
        };
        for (cluster, &value) in values.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(GraphError::InvalidDensity { cluster, value });
            }
        }
        Ok(Some(values))
    }
}

/// Samples a network from `spec`.
///
/// Each cluster is drawn as an Erdős–Rényi graph and redrawn until connected
/// (at most [`MAX_CONNECTIVITY_ATTEMPTS`] times). The same seed always
/// reproduces the same adjacency.
pub fn build_cluster_network(spec: &ClusterSpec) -> Result<ClusterNetwork, GraphError> {
    let sizes = &spec.cluster_sizes;
    if sizes.is_empty() {
        return Err(GraphError::NoClusters);
    }
    if let Some(a) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::EmptyCluster(a));
    }
    let r = sizes.len();
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(sizes.iter().scan(0, |acc, &s| {
            *acc += s;
            Some(*acc)
        }))
        .collect();
    let densities = spec.densities()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for a in 0..r {
        let size = sizes[a];
        let local = match &densities {
            None => complete_edges(size),
            Some(ps) => sample_connected(size, ps[a], &mut rng)
                .ok_or(GraphError::DisconnectedCluster { cluster: a, attempts: MAX_CONNECTIVITY_ATTEMPTS })?,
        };
        edges.extend(local.into_iter().map(|(i, j)| (i + offsets[a], j + offsets[a])));
    }

    let cluster_of = |node: usize| offsets.partition_point(|&o| o <= node) - 1;
    match &spec.external {
        ExternalEdges::Edges(list) => {
            let n = offsets[r];
            for &(i, j) in list {
                if i >= n || j >= n {
                    return Err(GraphError::NodeOutOfRange(i, j, n));
                }
                if cluster_of(i) == cluster_of(j) {
                    return Err(GraphError::ExternalEdgeInsideCluster(i, j));
                }
                edges.push((i, j));
            }
        }
        ExternalEdges::Random(links) => {
            let mut taken = BTreeSet::new();
            for link in links {
                let (a, b) = link.clusters;
                if a >= r || b >= r {
                    return Err(GraphError::ClusterOutOfRange(a.max(b), r));
                }
                if a == b {
                    return Err(GraphError::LinkInsideCluster(a));
                }
                let max = sizes[a] * sizes[b];
                let already = taken
                    .iter()
                    .filter(|&&(i, j)| {
                        let (ci, cj) = (cluster_of(i), cluster_of(j));
                        (ci == a && cj == b) || (ci == b && cj == a)
                    })
                    .count();
                if link.count + already > max {
                    return Err(GraphError::TooManyLinks { a, b, count: link.count, max });
                }
                let mut placed = 0;
                while placed < link.count {
                    let u = offsets[a] + rng.random_range(0..sizes[a]);
                    let v = offsets[b] + rng.random_range(0..sizes[b]);
                    if taken.insert((u.min(v), u.max(v))) {
                        edges.push((u, v));
                        placed += 1;
                    }
                }
            }
        }
    }

    let net = ClusterNetwork::from_edges(sizes, &edges)?.with_seed(Some(spec.seed));
    net.check_connectivity()?;
    Ok(net)
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn sample_connected(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    for _ in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let edges: Vec<(usize, usize)> = complete_edges(n)
            .into_iter()
            .filter(|_| rng.random_bool(p))
            .collect();
        if is_connected(n, edges.iter().copied()) {
            return Some(edges);
        }
    }
    None
}
