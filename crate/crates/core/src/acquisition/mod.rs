//! Acquisition functions: expected improvement, knowledge gradient and
//! their composite, multi-fidelity and constituent variants.

mod composite;
mod cost;
mod costaware;
mod ei;
mod eicf;
pub mod envelope;
mod incumbent;
mod kg;
mod outer;

pub use composite::CompositeKg;
pub use cost::{CostFunction, CostModel, TagCost};
pub use costaware::{constituent_kg_value, mf_kg_value, TaggedKg};
pub use ei::{ei_analytic, ei_from_moments, ei_gradient, ei_value_grad};
pub use eicf::{eicf_estimate, eicf_gradient_sample, eicf_value, eicf_value_grad};
pub use incumbent::Incumbent;
pub use kg::{
    kg_discretized, kg_value, kg_value_mo, DiscreteKg, Fantasy, InnerMax, KgEstimate, KgModel,
    KgSamplePlan, OneShotKg, TargetPoint,
};
pub use outer::OuterFunction;
