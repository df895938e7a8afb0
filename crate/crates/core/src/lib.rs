//! Deterministic simulation of pedestrian and vehicle interactions at an
//! unsignalized zebra crossing, with the analytics used to study driver
//! compliance.

pub mod calibration;
pub mod config;
pub mod error;
pub mod geometry;
pub mod interaction;
pub mod metrics;
pub mod pedestrian;
pub mod runner;
pub mod stats;
pub mod vehicle;
pub mod world;

pub use config::ScenarioConfig;
pub use error::RunError;
pub use world::{init_world, simulate, step, RunLog, WorldState};
