//! Core library for experience-driven disturbance modeling on a ground
//! vehicle: reference paths, Gaussian-process disturbance models, a
//! simulated plant, an experience store, the run-recommendation engine that
//! decides which stored experiences feed the control model, a
//! receding-horizon tracking controller, and the experiment harness tying
//! them together.

pub mod gp;
pub mod harness;
pub mod mpc;
pub mod path;
pub mod recommender;
pub mod sim;
pub mod store;

pub use gp::{FeatureVector, GpModel, Hyperparameters, Prediction};
pub use mpc::{Controller, ControllerConfig, Solution, TrackingError};
pub use path::{CourseSpec, RefPath, VertexId};
pub use recommender::{CycleOutcome, Recommender, RecommenderConfig, RunScore};
pub use sim::{Command, ModeConfig, VehicleState, CONTROL_DT};
pub use store::{Experience, ExperienceStore, RunId};
