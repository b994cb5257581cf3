use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClusterNetwork, GraphError};

/// On-disk network: cluster sizes (contiguous blocks), 0-indexed undirected
/// edges and the seed that generated them, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub cluster_sizes: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Optional explicit node→cluster map; must agree with `cluster_sizes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<usize>>,
}

impl NetworkFile {
    pub fn from_network(net: &ClusterNetwork) -> Self {
        Self {
            cluster_sizes: net.cluster_sizes().to_vec(),
            edges: net.edges().iter().map(|&(i, j)| [i, j]).collect(),
            seed: net.seed(),
            partition: None,
        }
    }

    pub fn into_network(self) -> Result<ClusterNetwork, GraphError> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let net = ClusterNetwork::from_edges(&self.cluster_sizes, &edges)?;
        if let Some(partition) = &self.partition {
            if partition.len() != net.num_nodes() {
                return Err(GraphError::InconsistentPartition(format!(
                    "{} partition entries for {} nodes",
                    partition.len(),
                    net.num_nodes()
                )));
            }
            if let Some(i) = (0..net.num_nodes()).find(|&i| partition[i] != net.cluster_of(i)) {
                return Err(GraphError::InconsistentPartition(format!(
                    "node {i} listed in cluster {} but cluster_sizes place it in {}",
                    partition[i],
                    net.cluster_of(i)
                )));
            }
        }
        Ok(net.with_seed(self.seed))
    }
}

/// Reads a network file. Connectivity is not enforced here.
pub fn load_network(path: impl AsRef<Path>) -> Result<ClusterNetwork, GraphError> {
    let text = fs::read_to_string(path)?;
    let file: NetworkFile = serde_json::from_str(&text)?;
    file.into_network()
}

pub fn save_network(net: &ClusterNetwork, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let text = serde_json::to_string(&NetworkFile::from_network(net))?;
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let net = ClusterNetwork::from_edges(&[2, 2], &[(0, 1), (2, 3), (1, 2)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back.adjacency(), net.adjacency());
        assert_eq!(back.partition(), net.partition());
        assert_eq!(back.edges(), net.edges());
    }

    #[test]
    fn rejects_out_of_range_node() {
        let file = NetworkFile {
            cluster_sizes: vec![2, 2],
            edges: vec![[0, 1], [3, 4]],
            seed: None,
            partition: None,
        };
        assert!(matches!(file.into_network(), Err(GraphError::NodeOutOfRange(3, 4, 4))));
    }

    #[test]
    fn rejects_inconsistent_partition() {
        let file = NetworkFile {
            cluster_sizes: vec![2, 2],
            edges: vec![[0, 1]],
            seed: None,
            partition: Some(vec![0, 1, 1, 1]),
        };
        assert!(matches!(file.into_network(), Err(GraphError::InconsistentPartition(_))));
    }

    #[test]
    fn rejects_malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\"cluster_sizes\": [2], \"edges\": [[0]]}").unwrap();
        assert!(matches!(load_network(&path), Err(GraphError::Json(_))));
    }
}
