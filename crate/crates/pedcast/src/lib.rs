//! Pedestrian stream forecasting with online continual adaptation.
//!
//! The crate simulates pedestrian crowds in a handful of environments,
//! extracts hindsight-labeled training examples from the resulting state
//! streams, and continually adapts a small recurrent velocity-sequence
//! predictor while guarding against catastrophic forgetting through an
//! importance-weighted parameter anchor penalty and a fixed-size rehearsal
//! coreset. An evaluation layer measures displacement errors, forgetting
//! across task sequences, and pairwise significance.
//!
//! See the crate `examples/` directory for end-to-end usage; the `pedcast`
//! binary exposes the same flows as subcommands.

pub mod binfmt;
pub mod config;
pub mod continual;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod features;
pub mod learn;
pub mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod world;

pub use config::ExperimentConfig;
pub use continual::{Coreset, Strategy, StreamBuffer};
pub use dataset::{Dataset, Example, ExampleSequence};
pub use error::{Error, Result};
pub use features::{FeatureConfig, ModelInput, OccupancyPatch, SocialVector};
pub use math::Vec2;
pub use model::{ModelConfig, ParamVector, Prediction, RecurrentState};
pub use sim::{EnvKind, Scenario, SimState};
pub use world::{AgentState, OccupancyMap};
