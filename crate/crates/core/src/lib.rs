//! Stochastic simulation of contact-driven exploration of grid floor plans.
//!
//! An agent modelled on the behavioural repertoire of the medicinal leech
//! (resting, swimming, wall-crawling, local exploration) wanders a
//! floor-plan template. Ensembles of trials are reduced to visit-frequency
//! matrices and per-domain statistics that can be compared against the
//! corner-based geometric complexity of each domain.
//!
//! Modules:
//! - [`floorplan`]: plan parsing, domains, corner counting and complexity.
//! - [`behavior`]: the behavioural automaton and per-mode kinematics.
//! - [`engine`]: trials, ensembles, the thermal field and calibration.
//! - [`metrics`]: frequency matrices, threshold maps, hierarchies, clusters.
//! - [`imaging`]: time-colour overlays and dark-pixel trace extraction.
//! - [`trace`]: trajectory CSV and parameter file formats.

pub mod behavior;
pub mod engine;
pub mod error;
pub mod floorplan;
pub mod imaging;
pub mod metrics;
pub mod trace;

pub use behavior::{AgentState, BehaviorParams, Heading, Mode, WallSide};
pub use engine::{
    CalibrationResult, ThermalField, TrialConfig, Trajectory, TrialOutcome,
};
pub use error::{Error, Result};
pub use floorplan::{CellKind, ComplexityReport, Dir4, DomainId, FloorPlan, Pos};
