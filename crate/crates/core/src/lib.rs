pub mod data;
pub mod dtree;
pub mod error;
pub mod graph;
pub mod inference;
pub mod learner;
pub mod metrics;
pub mod potentials;
pub mod qp;
