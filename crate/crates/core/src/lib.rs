//! Coupled active perception and manipulation (CAPM) planning for a mobile
//! manipulator, with a seeded Monte Carlo harness comparing three planners.
//!
//! The crate is organised bottom-up: [`geom`] (camera homography and
//! footprints), [`constraints`] (task indicators), [`reach`] (arm model and
//! feasible body regions), [`uncertainty`] (MPOI model and feasibility
//! probability), [`energy`] (motion cost), [`planner`] and [`sim`].

pub mod constraints;
pub mod energy;
pub mod geom;
pub mod planner;
pub mod reach;
pub mod sim;
pub mod uncertainty;

pub use constraints::{Mpoi, ParamError, TaskParams, Troi};
pub use energy::{DistanceMetric, EnergyParams};
pub use geom::{CameraModel, EePose, GeomError};
pub use planner::{Branch, Plan, PlanError, Planner, PlannerKind, PolarGrid, TrialScene};
pub use reach::{Annulus, ArmModel, BodyPose, ProblemType, ReachError, Robot, SearchGrid};
pub use sim::{ExperimentConfig, MetricsTable, SimError};
pub use uncertainty::{MpoiDistribution, MpoiSamples, RngStream, SigmaMode};
