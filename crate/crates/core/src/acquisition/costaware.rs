//! Multi-fidelity and constituent KG: KG of a target functional with the
//! fantasy at one output, optionally per unit of predicted cost.

use crate::acquisition::kg::{kg_value_mo, DiscreteKg, KgEstimate, KgModel, KgSamplePlan};
use crate::acquisition::CostModel;
use crate::error::Result;

/// Monte-Carlo multi-fidelity KG per unit cost. `model` targets the
/// target fidelity; the fantasy observes fidelity `tag` at `x`.
pub fn mf_kg_value(
    model: &KgModel<'_>,
    cost: &CostModel,
    x: &[f64],
    tag: usize,
    plan: &KgSamplePlan,
) -> Result<KgEstimate> {
    let c = cost.predict(x, tag)?;
    let e = kg_value_mo(model, x, tag, plan)?;
    Ok(KgEstimate {
        value: e.value / c,
        std_error: e.std_error / c,
    })
}

/// Monte-Carlo constituent KG, divided by cost only when `cost` is given.
pub fn constituent_kg_value(
    model: &KgModel<'_>,
    cost: Option<&CostModel>,
    x: &[f64],
    tag: usize,
    plan: &KgSamplePlan,
) -> Result<KgEstimate> {
    match cost {
        Some(c) => mf_kg_value(model, c, x, tag, plan),
        None => kg_value_mo(model, x, tag, plan),
    }
}

/// Discretized KG with a fixed fantasy tag, optionally cost-normalized.
/// Value and gradient are what the acquisition optimizer sees.
#[derive(Clone, Debug)]
pub struct TaggedKg<'a> {
    pub kg: DiscreteKg<'a>,
    pub tag: usize,
    pub cost: Option<CostModel>,
}

impl TaggedKg<'_> {
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let v = self.kg.value(x, self.tag);
        match &self.cost {
            Some(c) => Ok(v / c.predict(x, self.tag)?),
            None => Ok(v),
        }
    }

    /// Non-positive predicted costs give `-inf`.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.kg.value_grad(x, self.tag, grad);
        match &self.cost {
            None => v,
            Some(c) => match c.predict_grad(x, self.tag) {
                Ok((cv, cg)) => {
                    for (g, dc) in grad.iter_mut().zip(cg) {
                        *g = *g / cv - v * dc / (cv * cv);
                    }
                    v / cv
                }
                Err(_) => {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    f64::NEG_INFINITY
                }
            },
        }
    }
}
