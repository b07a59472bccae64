//! Energy-aware user association for cellular networks.
//!
//! The crate bundles a small system-level downlink simulator ([`scenario`]),
//! a base-station power model ([`power`]), legacy and exhaustive association
//! policies ([`baselines`]), a dense reverse-mode autodiff engine
//! ([`autodiff`]), a two-layer graph attention network that outputs a soft
//! UE-to-cell association ([`gat`]), an unsupervised trainer ([`training`])
//! and the evaluation/sweep harness ([`evaluate`], [`experiment`]).

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod gat;
pub mod io;
pub mod power;
pub mod scenario;
pub mod training;

pub use autodiff::{Adam, AdamConfig, AdamState, Graph, Tensor, Var};
pub use baselines::{HardAssociation, SubSinrAggregation};
pub use error::{Error, Result};
pub use evaluate::{EvalConfig, PolicyReport, SweepResult};
pub use gat::{Activation, AssociationMatrix, GatConfig, GatLayerParams, GatModel};
pub use power::PowerParams;
pub use scenario::{GraphInstance, NormStats, Scenario, ScenarioConfig};
pub use training::{LossConfig, TrainConfig};
