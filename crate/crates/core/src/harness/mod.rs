//! Simulation harness: synthetic catalogs with planted concepts, noisy
//! sampling, set metrics, and the two experiment grids.

pub mod experiment;
pub mod metrics;
pub mod world;

pub use experiment::{
    run_experiment_1, run_experiment_1_with, run_experiment_2, run_experiment_2_with, Exp1Config,
    Exp1Report, Exp1Row, Exp2Config, Exp2Report, Exp2Row,
};
pub use metrics::{set_metrics, Metrics};
pub use world::{generate_world, sample_with_noise, GroundTruthConcept, World, WorldSpec};
