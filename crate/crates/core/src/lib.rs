//! Wave-domain multiuser beamfocusing with a stacked intelligent metasurface.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the experiment harness uses.

pub mod allocation;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metasurface;
pub mod optimizer;
pub mod propagation;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SceneConfig = geometry::SceneConfig<f64>;
pub type SceneGeometry = geometry::SceneGeometry<f64>;
pub type MetaAtomCircuit = metasurface::MetaAtomCircuit<f64>;
pub type AmplitudeModel = metasurface::AmplitudeModel<f64>;
pub type AmplitudeMode = metasurface::AmplitudeMode<f64>;
pub type SimState = metasurface::SimState<f64>;
pub type PropagationSet = propagation::PropagationSet<f64>;
pub type ChannelSet = channel::ChannelSet<f64>;
pub type ZfTarget = channel::ZfTarget<f64>;
pub type OptimizerConfig = optimizer::OptimizerConfig<f64>;
pub type OptimizerReport = optimizer::OptimizerReport<f64>;
pub type PowerAllocation = allocation::PowerAllocation<f64>;
pub type RateReport = allocation::RateReport<f64>;
pub type Heatmap = allocation::Heatmap<f64>;
pub type CMatrix = scalar::CMatrix<f64>;

/// Single-precision variants for quick exploratory runs.
pub mod f32 {
    pub type SceneGeometry = crate::geometry::SceneGeometry<f32>;
    pub type SimState = crate::metasurface::SimState<f32>;
    pub type PropagationSet = crate::propagation::PropagationSet<f32>;
    pub type OptimizerReport = crate::optimizer::OptimizerReport<f32>;
}
