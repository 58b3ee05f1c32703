//! Cooperative completion: cross-view inference heads in latent space,
//! the inference consistency loss, and filling of missing latents.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};

use crate::alignment::sum_vars;
use crate::dataio::AvailabilityMask;
use crate::error::{shape_err, Error, Result};
use crate::network::{MlpParams, Tape, Var};
use crate::real::Real;

/// An MLP mapping the latents of `source` to predictions of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceHead<F> {
    pub source: usize,
    pub target: usize,
    pub params: MlpParams<F>,
}

/// Inferred latents per ordered view pair `(source, target)`.
///
/// Each matrix has one row per sample; rows are meaningful only for
/// samples available in `source`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompletionOutputs<F> {
    inferred: BTreeMap<(usize, usize), Array2<F>>,
}

impl<F: Real> CompletionOutputs<F> {
    pub fn new() -> Self {
        Self {
            inferred: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, source: usize, target: usize, q: Array2<F>) {
        self.inferred.insert((source, target), q);
    }

    pub fn get(&self, source: usize, target: usize) -> Option<&Array2<F>> {
        self.inferred.get(&(source, target))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inferred.keys().copied()
    }
}

pub fn infer_cross_view<F: Real>(head: &MlpParams<F>, z_source: ArrayView2<F>) -> Result<Array2<F>> {
    if head.in_dim() != head.out_dim() {
        return Err(shape_err("inference head", head.in_dim(), head.out_dim()));
    }
    head.forward(z_source)
}

/// Runs every head on the samples available in its source view.
pub fn infer_all<F: Real>(
    heads: &[InferenceHead<F>],
    latents: &[Array2<F>],
    mask: &AvailabilityMask,
) -> Result<CompletionOutputs<F>> {
    let mut out = CompletionOutputs::new();
    for head in heads {
        let z = latents
            .get(head.source)
            .ok_or_else(|| shape_err("inference source view", latents.len(), head.source))?;
        let rows = mask.rows_with(head.source);
        let mut q = Array2::zeros((z.nrows(), head.params.out_dim()));
        if !rows.is_empty() {
            let pred = infer_cross_view(&head.params, z.select(Axis(0), &rows).view())?;
            for (r, &i) in rows.iter().enumerate() {
                q.row_mut(i).assign(&pred.row(r));
            }
        }
        out.insert(head.source, head.target, q);
    }
    Ok(out)
}

/// Inference consistency loss from per-pair `(target latents, predictions)`
/// restricted to samples observed in both views of the pair.
///
/// Each pair contributes its mean squared row error; the sum is divided by
/// the number of ordered pairs `V (V - 1)`. Returns `None` when no pair has
/// any selected sample.
pub fn inference_loss_var<F: Real>(
    tape: &mut Tape<F>,
    pairs: &[(Var, Var)],
    n_views: usize,
) -> Result<Option<Var>> {
    let mut terms = Vec::with_capacity(pairs.len());
    for &(target, q) in pairs {
        let rows = tape.value(target).nrows();
        if rows == 0 {
            continue;
        }
        let diff = tape.sub(target, q)?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum(sq);
        terms.push(tape.scale(total, F::one() / F::lit(rows as f64)));
    }
    if terms.is_empty() {
        log::debug!("inference loss: no sample observed in both views of any pair");
        return Ok(None);
    }
    let ordered_pairs = (n_views * (n_views - 1)).max(1);
    let total = sum_vars(tape, &terms)?;
    Ok(Some(tape.scale(total, F::one() / F::lit(ordered_pairs as f64))))
}

/// Plain evaluation of the inference loss over full-length latents.
pub fn inference_loss<F: Real>(
    latents: &[ArrayView2<F>],
    outputs: &CompletionOutputs<F>,
    mask: &AvailabilityMask,
) -> Result<F> {
    let v = latents.len();
    if v != mask.n_views() {
        return Err(shape_err("inference loss views", mask.n_views(), v));
    }
    let mut tape = Tape::new();
    let mut pairs = Vec::new();
    for (source, target) in outputs.pairs() {
        if source >= v || target >= v {
            return Err(shape_err("inference pair", v, source.max(target)));
        }
        let q = outputs.get(source, target).expect("listed pair");
        let z = latents[target];
        if q.dim() != z.dim() {
            return Err(shape_err("inference output", z.dim(), q.dim()));
        }
        let rows: Vec<usize> = (0..mask.n())
            .filter(|&i| mask.available(i, source) && mask.available(i, target))
            .collect();
        let zt = tape.constant(z.select(Axis(0), &rows));
        let qs = tape.constant(q.select(Axis(0), &rows));
        pairs.push((zt, qs));
    }
    match inference_loss_var(&mut tape, &pairs, v)? {
        Some(loss) => Ok(tape.scalar(loss)),
        None => Ok(F::zero()),
    }
}

/// Replaces every missing latent row with the mean of its predictions from
/// all available source views; available rows are copied unchanged.
pub fn complete_latents<F: Real>(
    latents: &[Array2<F>],
    outputs: &CompletionOutputs<F>,
    mask: &AvailabilityMask,
) -> Result<Vec<Array2<F>>> {
    let v = latents.len();
    if v != mask.n_views() {
        return Err(shape_err("completion views", mask.n_views(), v));
    }
    let mut completed = latents.to_vec();
    for (target, out) in completed.iter_mut().enumerate() {
        if out.nrows() != mask.n() {
            return Err(shape_err("completion rows", mask.n(), out.nrows()));
        }
        for i in (0..mask.n()).filter(|&i| !mask.available(i, target)) {
            let mut acc = ndarray::Array1::<F>::zeros(out.ncols());
            let mut sources = 0usize;
            for source in (0..v).filter(|&s| s != target && mask.available(i, s)) {
                let q = outputs.get(source, target).ok_or_else(|| {
                    Error::InvalidArgument(format!("no inference head for view {source} -> {target}"))
                })?;
                acc += &q.row(i);
                sources += 1;
            }
            if sources == 0 {
                return Err(Error::InvalidArgument(format!("sample {i} has no available view")));
            }
            out.row_mut(i).assign(&(acc / F::lit(sources as f64)));
        }
    }
    Ok(completed)
}
