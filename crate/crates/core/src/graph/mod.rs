//! Cluster networks: a graph whose nodes are partitioned into contiguous
//! clusters, together with every matrix the cluster analysis needs.
//!
//! Node `i` belongs to cluster `α` when it falls in the `α`-th block of
//! `cluster_sizes`, so the indicator matrix `U` is block-diagonal with ones
//! columns, `P = UᵀU = diag(N_α)` and the centering matrix
//! `W = diag(I - 11ᵀ/N_α)`.

mod build;
mod io;
mod spectral;

pub use build::{build_cluster_network, ClusterLink, ClusterSpec, Density, ExternalEdges, IntraTopology};
pub use io::{load_network, save_network, NetworkFile};
pub use spectral::{
    check_cluster_assumption, metropolis_weights, spectral_constants, AssumptionCheck,
    ConditionCheck, MixingMatrix, SpectralConstants,
};

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::SparseSym;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("a cluster network needs at least one cluster")]
    NoClusters,
    #[error("cluster {0} has zero nodes")]
    EmptyCluster(usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("external edge ({0}, {1}) joins two nodes of the same cluster")]
    ExternalEdgeInsideCluster(usize, usize),
    #[error("cluster index {0} out of range (r = {1})")]
    ClusterOutOfRange(usize, usize),
    #[error("cluster link joins cluster {0} to itself")]
    LinkInsideCluster(usize),
    #[error("intra-cluster density {value} for cluster {cluster} is outside (0, 1]")]
    InvalidDensity { cluster: usize, value: f64 },
    #[error("expected {expected} per-cluster densities, got {got}")]
    DensityCount { expected: usize, got: usize },
    #[error("cannot place {count} distinct edges between clusters {a} and {b} (at most {max})")]
    TooManyLinks { a: usize, b: usize, count: usize, max: usize },
    #[error("Assumption 1 violated: internal graph of cluster {cluster} is disconnected (after {attempts} sampling attempts)")]
    DisconnectedCluster { cluster: usize, attempts: usize },
    #[error("Assumption 1 violated: the aggregate external graph is disconnected")]
    DisconnectedAggregate,
    #[error("Assumption 1 violated: algebraic connectivity of {what} is {value:e}")]
    DegenerateSpectrum { what: String, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("Metropolis weight matrix has negative diagonal {value} at node {node}")]
    NegativeSelfWeight { node: usize, value: f64 },
    #[error("inconsistent partition: {0}")]
    InconsistentPartition(String),
    #[error("network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("network file: {0}")]
    Json(#[from] serde_json::Error),
}

/// An undirected cluster network and its derived matrices.
///
/// Immutable after construction; every accessor borrows.
#[derive(Debug, Clone)]
pub struct ClusterNetwork {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    partition: Vec<usize>,
    edges: Vec<(usize, usize)>,
    seed: Option<u64>,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    internal_laplacian: DMatrix<f64>,
    external_laplacian: DMatrix<f64>,
    aggregate_laplacian: DMatrix<f64>,
    indicator: DMatrix<f64>,
    size_matrix: DMatrix<f64>,
    centering: DMatrix<f64>,
    sparse_laplacian: SparseSym,
}

impl ClusterNetwork {
    /// Builds a network from cluster sizes and an undirected edge list.
    ///
    /// Only structural validity is checked here (indices, loops, duplicates);
    /// connectivity is a separate question answered by [`Self::check_connectivity`].
    pub fn from_edges(sizes: &[usize], edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if sizes.is_empty() {
            return Err(GraphError::NoClusters);
        }
        if let Some(a) = sizes.iter().position(|&s| s == 0) {
            return Err(GraphError::EmptyCluster(a));
        }
        let n: usize = sizes.iter().sum();
        let r = sizes.len();

        let mut offsets = Vec::with_capacity(r + 1);
        offsets.push(0);
        for &s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let partition: Vec<usize> = (0..r).flat_map(|a| std::iter::repeat(a).take(sizes[a])).collect();

        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            normalized.push(e);
        }

        let (internal, external): (Vec<_>, Vec<_>) =
            normalized.iter().partition(|&&(i, j)| partition[i] == partition[j]);

        let mut adjacency = DMatrix::zeros(n, n);
        for &(i, j) in &normalized {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        let internal_laplacian = SparseSym::laplacian(n, &internal).to_dense();
        let external_laplacian = SparseSym::laplacian(n, &external).to_dense();
        let sparse_laplacian = SparseSym::laplacian(n, &normalized);
        let laplacian = sparse_laplacian.to_dense();

        // Aggregate Laplacian straight from cluster-level edge counts; the
        // product UᵀLᴱU is computed separately by `aggregate_laplacian`.
        let mut aggregate = DMatrix::zeros(r, r);
        for &(i, j) in &external {
            let (a, b) = (partition[i], partition[j]);
            aggregate[(a, a)] += 1.0;
            aggregate[(b, b)] += 1.0;
            aggregate[(a, b)] -= 1.0;
            aggregate[(b, a)] -= 1.0;
        }

        let mut indicator = DMatrix::zeros(n, r);
        let mut centering = DMatrix::zeros(n, n);
        for a in 0..r {
            let inv = 1.0 / sizes[a] as f64;
            for i in offsets[a]..offsets[a + 1] {
                indicator[(i, a)] = 1.0;
                for j in offsets[a]..offsets[a + 1] {
                    centering[(i, j)] = if i == j { 1.0 - inv } else { -inv };
                }
            }
        }
        let size_matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            r,
            sizes.iter().map(|&s| s as f64),
        ));

        Ok(Self {
            sizes: sizes.to_vec(),
            offsets,
            partition,
            edges: normalized,
            seed: None,
            adjacency,
            laplacian,
            internal_laplacian,
            external_laplacian,
            aggregate_laplacian: aggregate,
            indicator,
            size_matrix,
            centering,
            sparse_laplacian,
        })
    }

    pub(crate) fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Assumption 1: every internal graph and the aggregate external graph are connected.
    pub fn check_connectivity(&self) -> Result<(), GraphError> {
        for a in 0..self.num_clusters() {
            let nodes: Vec<usize> = self.cluster_nodes(a).collect();
            let edges = self
                .internal_edges()
                .filter(|&(i, _)| self.partition[i] == a)
                .map(|(i, j)| (i - self.offsets[a], j - self.offsets[a]));
            if !is_connected(nodes.len(), edges) {
                return Err(GraphError::DisconnectedCluster { cluster: a, attempts: 1 });
            }
        }
        let agg_edges = self
            .external_edges()
            .map(|(i, j)| (self.partition[i], self.partition[j]));
        if !is_connected(self.num_clusters(), agg_edges) {
            return Err(GraphError::DisconnectedAggregate);
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.partition.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.partition[node]
    }

    pub fn cluster_nodes(&self, cluster: usize) -> std::ops::Range<usize> {
        self.offsets[cluster]..self.offsets[cluster + 1]
    }

    /// All edges as `(i, j)` with `i < j`, in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn internal_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(i, j)| self.partition[i] == self.partition[j])
    }

    pub fn external_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(i, j)| self.partition[i] != self.partition[j])
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Full Laplacian `L`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Block-diagonal internal Laplacian `Lᴵ`.
    pub fn internal_laplacian(&self) -> &DMatrix<f64> {
        &self.internal_laplacian
    }

    /// External Laplacian `Lᴱ` of the cross-cluster edges.
    pub fn external_laplacian(&self) -> &DMatrix<f64> {
        &self.external_laplacian
    }

    /// Laplacian of the aggregate external graph (one vertex per cluster,
    /// multi-edges counted), built combinatorially.
    pub fn aggregate_laplacian(&self) -> &DMatrix<f64> {
        &self.aggregate_laplacian
    }

    /// Cluster indicator `U` (N×r).
    pub fn indicator(&self) -> &DMatrix<f64> {
        &self.indicator
    }

    /// `P = diag(N_1, …, N_r)`.
    pub fn size_matrix(&self) -> &DMatrix<f64> {
        &self.size_matrix
    }

    /// Block-diagonal centering projection `W`.
    pub fn centering(&self) -> &DMatrix<f64> {
        &self.centering
    }

    /// Internal Laplacian block `L_α` of one cluster.
    pub fn cluster_laplacian(&self, cluster: usize) -> DMatrix<f64> {
        let range = self.cluster_nodes(cluster);
        self.internal_laplacian
            .view((range.start, range.start), (range.len(), range.len()))
            .into_owned()
    }

    pub(crate) fn sparse_laplacian(&self) -> &SparseSym {
        &self.sparse_laplacian
    }

    /// Per-cluster column means of an N×d state: the rows of `P⁻¹UᵀX`.
    pub fn cluster_means(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.num_clusters(), x.ncols());
        for a in 0..self.num_clusters() {
            let range = self.cluster_nodes(a);
            let inv = 1.0 / range.len() as f64;
            for c in 0..x.ncols() {
                y[(a, c)] = x.view((range.start, c), (range.len(), 1)).sum() * inv;
            }
        }
        y
    }

    /// `U·Y`: broadcast per-cluster rows back onto the nodes.
    pub fn lift(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_nodes(), y.ncols(), |i, c| y[(self.partition[i], c)])
    }
}

/// `UᵀLᴱU`, the product form of the aggregate Laplacian.
pub fn aggregate_laplacian(net: &ClusterNetwork) -> DMatrix<f64> {
    net.indicator().transpose() * net.external_laplacian() * net.indicator()
}

pub(crate) fn is_connected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}
