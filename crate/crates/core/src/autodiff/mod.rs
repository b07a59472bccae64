//! Minimal dense reverse-mode automatic differentiation.
//!
//! [`Graph`] records primitive ops on [`Tensor`] values and replays them in
//! reverse to accumulate gradients. Only the primitives needed by the graph
//! attention model and the energy loss are provided. [`Adam`] updates
//! parameters from the gradients.

mod adam;
pub mod check;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
