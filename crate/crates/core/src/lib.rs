pub mod graph;
pub mod linalg;
pub mod objective;
pub mod decomposition;
pub mod dynamics;
pub mod discrete;
pub mod cli;
