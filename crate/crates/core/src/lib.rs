//! Critical bond percolation on `Z^d`, incipient infinite cluster samplers,
//! effective resistance and random walk observables on sampled clusters.

pub mod cluster;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod lattice;
pub mod lattice_iic;
pub mod resistance;
pub mod rng;
pub mod stats;
pub mod tree_iic;
pub mod walk;

pub use cluster::{
    cluster_profile, cluster_size_capped, explore_ball, h_event, BetheLattice, ClusterSize, ClusterStats, ExploreStatus,
    HEvent, IntrinsicBall, Region,
};
pub use error::{Error, Result};
pub use graph::GraphSample;
pub use lattice_iic::{sample_iic_ball, sample_iic_two_point, IicSample, LatticeIic};
pub use lattice::{EdgeRule, EdgeState, Lattice, LatticeSpec, PercolationConfig, Vertex};
pub use resistance::{
    commute_time_check, effective_resistance, lane_report, nash_williams_bound, resistance_to_level, LaneReport,
    ResistanceMethod, ResistanceResult,
};
