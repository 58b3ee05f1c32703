//! Feed-forward networks, reverse-mode gradients and the Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod tape;

pub use adam::{adam_step, OptimizerState};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, BoundMlp, Layer, MlpGrads, MlpParams};
pub use tape::{Gradients, Tape, Var};

use crate::real::Real;

/// Global L2 norm over a set of gradient collections.
pub fn global_norm<F: Real>(grads: &[&MlpGrads<F>]) -> F {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|l| {
            l.weight.iter().map(|&v| v * v).sum::<F>() + l.bias.iter().map(|&v| v * v).sum::<F>()
        })
        .sum::<F>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Real>(grads: &mut [&mut MlpGrads<F>], max_norm: F) -> F {
    let norm = {
        let views: Vec<&MlpGrads<F>> = grads.iter().map(|g| &**g).collect();
        global_norm(&views)
    };
    if norm > max_norm && norm > F::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for layer in g.iter_mut() {
                layer.weight.mapv_inplace(|v| v * scale);
                layer.bias.mapv_inplace(|v| v * scale);
            }
        }
    }
    norm
}
