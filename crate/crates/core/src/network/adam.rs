use ndarray::{Array, Dimension, Zip};

use super::mlp::{Layer, MlpGrads, MlpParams};
use crate::error::{shape_err, Result};
use crate::real::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    first: Vec<Layer<F>>,
    second: Vec<Layer<F>>,
    step: u64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &MlpParams<F>) -> Self {
        Self {
            first: params.zero_grads(),
            second: params.zero_grads(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

fn update_all<F: Real, D: Dimension>(
    p: &mut Array<F, D>,
    g: &Array<F, D>,
    m: &mut Array<F, D>,
    v: &mut Array<F, D>,
    update: impl Fn(&mut F, F, &mut F, &mut F),
) {
    if let (Some(ps), Some(gs), Some(ms), Some(vs)) = (
        p.as_slice_mut(),
        g.as_slice(),
        m.as_slice_mut(),
        v.as_slice_mut(),
    ) {
        for (((p, &g), m), v) in ps.iter_mut().zip(gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
            update(p, g, m, v);
        }
        return;
    }
    Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| update(p, g, m, v));
}

/// One bias-corrected Adam update with the standard constants.
pub fn adam_step<F: Real>(
    params: &mut MlpParams<F>,
    grads: &MlpGrads<F>,
    state: &mut OptimizerState<F>,
    lr: F,
) -> Result<()> {
    if grads.len() != params.layers().len() || state.first.len() != grads.len() {
        return Err(shape_err("adam layers", params.layers().len(), grads.len()));
    }
    for (layer, g) in params.layers().iter().zip(grads) {
        if layer.weight.dim() != g.weight.dim() || layer.bias.len() != g.bias.len() {
            return Err(shape_err("adam layer", layer.weight.dim(), g.weight.dim()));
        }
    }

    state.step += 1;
    let (b1, b2, eps) = (F::lit(BETA1), F::lit(BETA2), F::lit(EPSILON));
    let t = state.step as i32;
    let c1 = F::one() - b1.powi(t);
    let c2 = F::one() - b2.powi(t);
    let one = F::one();

    let (c1, c2) = (F::one() / c1, F::one() / c2);
    let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        *p = *p - lr * (*m * c1) / ((*v * c2).sqrt() + eps);
    };

    let layers = params.layers_mut();
    for (((layer, g), m), v) in layers
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        update_all(&mut layer.weight, &g.weight, &mut m.weight, &mut v.weight, update);
        update_all(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, update);
    }
    Ok(())
}
