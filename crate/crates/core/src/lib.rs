//! Differentiable logic-gate networks and fan-in based explanations.
//!
//! The crate covers the full workflow: relaxed training of gate mixtures,
//! discretization to hard netlists, signed fan-in saliency maps, gradient
//! baselines, the switch-distance evaluation, and per-class MiniNet pruning.

pub mod baselines;
pub mod data;
pub mod error;
pub mod explain;
pub mod format;
pub mod gate;
pub mod mininet;
pub mod network;
pub mod saliency;
pub mod switchdist;
pub mod train;

pub use error::{Error, ErrorFamily, Result};
pub use gate::{Dependence, GateType, Port, PortSign, Sign};
pub use network::{argmax, Layer, LayerGates, LogicNetwork, Mode, NodeId, Source, Wire};
