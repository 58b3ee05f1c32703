//! Joint optimization of the autoencoders, alignment losses and inference
//! heads with masked mini-batches.

mod config;
mod experiments;
mod history;
mod model;

pub use config::{total_loss, Lambdas, LossTerms, Precision, TrainConfig};
pub use experiments::{run_ablation, run_lambda_sweep, AblationRow, LossSet, SweepRow, LAMBDA_GRID};
pub use history::{EpochRecord, History, Metrics};
pub use model::HsaccModel;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::alignment::{
    estimate_weights, fuse_var, mmd_alignment_loss_with_bandwidths_var, mmd_bandwidths, pairwise_mi_loss_var, Kernel,
    ViewWeights,
};
use crate::clustering::evaluate;
use crate::completion::inference_loss_var;
use crate::dataio::{AvailabilityMask, MultiViewDataset};
use crate::error::{shape_err, Error, Result};
use crate::network::{adam_step, clip_global_norm, BoundMlp, Gradients, MlpGrads, OptimizerState, Tape, Var};
use crate::real::Real;
use crate::seed;

/// Tape handles for every network of a model.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub encoders: Vec<BoundMlp>,
    pub decoders: Vec<BoundMlp>,
    pub heads: Vec<BoundMlp>,
}

impl<F: Real> HsaccModel<F> {
    pub fn bind(&self, tape: &mut Tape<F>) -> BoundModel {
        BoundModel {
            encoders: self.encoders.iter().map(|p| p.bind(tape)).collect(),
            decoders: self.decoders.iter().map(|p| p.bind(tape)).collect(),
            heads: self.heads.iter().map(|h| h.params.bind(tape)).collect(),
        }
    }

    /// Moves every parameter onto `tape`; see [`MlpParams::bind_owned`].
    ///
    /// [`MlpParams::bind_owned`]: crate::network::MlpParams::bind_owned
    pub fn bind_owned(&mut self, tape: &mut Tape<F>) -> BoundModel {
        BoundModel {
            encoders: self.encoders.iter_mut().map(|p| p.bind_owned(tape)).collect(),
            decoders: self.decoders.iter_mut().map(|p| p.bind_owned(tape)).collect(),
            heads: self.heads.iter_mut().map(|h| h.params.bind_owned(tape)).collect(),
        }
    }

    pub fn restore(&mut self, bound: &BoundModel, tape: &mut Tape<F>) {
        for (b, p) in bound.encoders.iter().zip(&mut self.encoders) {
            b.restore(tape, p);
        }
        for (b, p) in bound.decoders.iter().zip(&mut self.decoders) {
            b.restore(tape, p);
        }
        for (b, h) in bound.heads.iter().zip(&mut self.heads) {
            b.restore(tape, &mut h.params);
        }
    }
}

/// Per-batch term values and the gradients of the weighted objective.
struct BatchStep<F: Real> {
    values: [Option<f64>; 4],
    weights: Option<Vec<f64>>,
    grads: Option<Gradients<F>>,
}

#[allow(clippy::too_many_arguments)]
fn batch_step<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    model: &HsaccModel<F>,
    views: &[Array2<F>],
    mask: &AvailabilityMask,
    batch: &[usize],
    config: &TrainConfig,
    with_inference: bool,
) -> Result<BatchStep<F>> {
    let terms = batch_terms(tape, bound, model, views, mask, batch, config.kernel, with_inference, None)?;
    let values = terms.as_array().map(|t| t.map(|v| tape.scalar(v).to_f64().unwrap_or(f64::NAN)));
    let weights = terms
        .detached
        .as_ref()
        .map(|d| d.weights.weights.iter().map(|w| w.to_f64().unwrap_or(f64::NAN)).collect());
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Ok(BatchStep {
            values,
            weights,
            grads: None,
        });
    }
    let grads = match terms.objective(tape, &config.lambdas)? {
        Some(objective) => {
            let recorded = values.map(|v| v.unwrap_or(0.0));
            check_linearity(tape.scalar(objective), &recorded, &config.lambdas)?;
            Some(tape.backward(objective)?)
        }
        None => None,
    };
    Ok(BatchStep { values, weights, grads })
}

/// Loss terms recorded for one mini-batch. A term is `None` when the batch
/// has no sample it could be computed on.
#[derive(Debug)]
pub struct BatchTerms<F> {
    pub rec: Option<Var>,
    pub inf: Option<Var>,
    pub mmi: Option<Var>,
    pub mmd: Option<Var>,
    /// Stop-gradient quantities used by the MMD term.
    pub detached: Option<Detached<F>>,
}

/// Fusion weights and kernel bandwidths, treated as constants by the
/// gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Detached<F> {
    pub weights: ViewWeights<F>,
    pub sigma2: Vec<F>,
}

impl<F: Real> BatchTerms<F> {
    /// In objective order: rec, inf, mmi, mmd.
    pub fn as_array(&self) -> [Option<Var>; 4] {
        [self.rec, self.inf, self.mmi, self.mmd]
    }

    /// `sum lambda_i term_i` over defined terms with a positive weight.
    pub fn objective(&self, tape: &mut Tape<F>, lambdas: &Lambdas) -> Result<Option<Var>> {
        let mut parts = Vec::new();
        for (term, l) in self.as_array().into_iter().zip(lambdas.as_array()) {
            if let Some(t) = term {
                if l > 0.0 {
                    parts.push(tape.scale(t, F::lit(l)));
                }
            }
        }
        if parts.is_empty() {
            return Ok(None);
        }
        crate::alignment::sum_vars(tape, &parts).map(Some)
    }
}

/// Records all four loss terms for the samples `batch` onto `tape`.
///
/// Reconstruction uses each view's available samples; mutual information
/// uses samples observed in both views of a pair; weights, fusion and MMD
/// use samples observed in every view; the inference loss (when
/// `with_inference`) uses samples observed in both views of each ordered
/// pair. Unavailable entries are never read.
///
/// `frozen` replaces the fusion weights and bandwidths that would otherwise
/// be estimated from the batch.
#[allow(clippy::too_many_arguments)]
pub fn batch_terms<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    model: &HsaccModel<F>,
    views: &[Array2<F>],
    mask: &AvailabilityMask,
    batch: &[usize],
    kernel: Kernel,
    with_inference: bool,
    frozen: Option<&Detached<F>>,
) -> Result<BatchTerms<F>> {
    let v_count = views.len();
    if v_count != bound.encoders.len() || v_count != mask.n_views() {
        return Err(shape_err("batch views", bound.encoders.len(), v_count));
    }

    // position of each batch member within each view's latent matrix
    let mut slot: Vec<Vec<Option<usize>>> = vec![vec![None; batch.len()]; v_count];
    let mut latents: Vec<Option<Var>> = vec![None; v_count];
    let mut rec_terms = Vec::new();
    for v in 0..v_count {
        let ids: Vec<usize> = batch.iter().copied().filter(|&i| mask.available(i, v)).collect();
        let mut next = 0;
        for (p, &i) in batch.iter().enumerate() {
            if mask.available(i, v) {
                slot[v][p] = Some(next);
                next += 1;
            }
        }
        if ids.is_empty() {
            continue;
        }
        let x = tape.constant(views[v].select(Axis(0), &ids));
        let z = bound.encoders[v].forward(tape, x)?;
        let x_hat = bound.decoders[v].forward(tape, z)?;
        let diff = tape.sub(x_hat, x)?;
        let sq = tape.mul(diff, diff)?;
        rec_terms.push(tape.mean(sq));
        latents[v] = Some(z);
    }
    let rec = if rec_terms.is_empty() {
        None
    } else {
        Some(crate::alignment::sum_vars(tape, &rec_terms)?)
    };

    let shared_rows = |tape: &mut Tape<F>, views_needed: &[usize]| -> Result<Option<Vec<Var>>> {
        let positions: Vec<usize> = (0..batch.len())
            .filter(|&p| views_needed.iter().all(|&v| slot[v][p].is_some()))
            .collect();
        if positions.is_empty() {
            return Ok(None);
        }
        views_needed
            .iter()
            .map(|&v| {
                let rows: Vec<usize> = positions.iter().map(|&p| slot[v][p].expect("filtered")).collect();
                tape.gather_rows(latents[v].expect("view has rows"), &rows)
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    };

    let mut mi_terms = Vec::new();
    for a in 0..v_count {
        for b in a + 1..v_count {
            if let Some(pair) = shared_rows(tape, &[a, b])? {
                mi_terms.push(pairwise_mi_loss_var(tape, &pair)?);
            }
        }
    }
    let mmi = if mi_terms.is_empty() {
        None
    } else {
        let total = crate::alignment::sum_vars(tape, &mi_terms)?;
        Some(tape.scale(total, F::one() / F::lit(mi_terms.len() as f64)))
    };

    let all_views: Vec<usize> = (0..v_count).collect();
    let (mmd, detached) = match shared_rows(tape, &all_views)? {
        Some(full) => {
            let weights = match frozen {
                Some(d) => d.weights.clone(),
                None => {
                    let values: Vec<ArrayView2<F>> = full.iter().map(|&z| tape.value(z).view()).collect();
                    estimate_weights(&values)?.1
                }
            };
            let h = fuse_var(tape, &full, &weights)?;
            let sigma2 = match frozen {
                Some(d) => d.sigma2.clone(),
                None => mmd_bandwidths(tape, &full, h, kernel),
            };
            let loss = mmd_alignment_loss_with_bandwidths_var(tape, &full, h, kernel, &sigma2)?;
            (Some(loss), Some(Detached { weights, sigma2 }))
        }
        None => (None, None),
    };

    let inf = if with_inference {
        let mut pairs = Vec::new();
        for (head, bound_head) in model.heads.iter().zip(&bound.heads) {
            if let Some(pair) = shared_rows(tape, &[head.source, head.target])? {
                let q = bound_head.forward(tape, pair[0])?;
                pairs.push((pair[1], q));
            }
        }
        inference_loss_var(tape, &pairs, v_count)?
    } else {
        None
    };

    Ok(BatchTerms {
        rec,
        inf,
        mmi,
        mmd,
        detached,
    })
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: HsaccModel<F>,
    pub history: History,
}

/// Cluster count from the config, falling back to the label classes.
pub fn cluster_count(config: &TrainConfig, ds: &MultiViewDataset) -> Result<usize> {
    config
        .k
        .or_else(|| ds.n_classes())
        .ok_or_else(|| Error::InvalidArgument("k is required when the dataset has no labels".into()))
}

pub fn train<F: Real>(config: &TrainConfig, ds: &MultiViewDataset, mask: &AvailabilityMask) -> Result<TrainOutcome<F>> {
    train_with(config, ds, mask, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with<F: Real>(
    config: &TrainConfig,
    ds: &MultiViewDataset,
    mask: &AvailabilityMask,
    mut on_epoch: impl FnMut(&EpochRecord, &HsaccModel<F>) -> Result<()>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    mask.check_matches(ds)?;
    let evaluating = config.eval_every > 0 && ds.labels().is_some();
    if evaluating {
        cluster_count(config, ds)?;
    }

    let mut model = HsaccModel::<F>::init(&ds.dims(), config)?;
    let views: Vec<Array2<F>> = ds.views().iter().map(|x| x.mapv(F::lit)).collect();
    let mut enc_state: Vec<_> = model.encoders.iter().map(OptimizerState::new).collect();
    let mut dec_state: Vec<_> = model.decoders.iter().map(OptimizerState::new).collect();
    let mut head_state: Vec<_> = model.heads.iter().map(|h| OptimizerState::new(&h.params)).collect();
    let lr = F::lit(config.lr);
    let clip = F::lit(config.clip_norm);
    let shuffle_seed = seed::derive(config.seed, seed::SHUFFLE);
    let mut history = History {
        n_views: ds.n_views(),
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let with_inference = epoch >= config.warmup;
        let mut order: Vec<usize> = (0..ds.n()).collect();
        order.shuffle(&mut seed::rng(seed::derive(shuffle_seed, epoch as u64)));

        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        let mut weight_sum = vec![0.0f64; ds.n_views()];
        let mut weight_batches = 0usize;

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = model.bind_owned(&mut tape);
            let step = batch_step(&mut tape, &bound, &model, &views, mask, batch, config, with_inference);
            model.restore(&bound, &mut tape);
            drop(tape);
            let step = step.map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch: epoch + 1,
                    batch: b,
                    term: "objective",
                },
                other => other,
            })?;

            for (i, value) in step.values.iter().enumerate() {
                if let Some(val) = *value {
                    if !val.is_finite() {
                        return Err(Error::Divergence {
                            epoch: epoch + 1,
                            batch: b,
                            term: ["rec", "inf", "mmi", "mmd"][i],
                        });
                    }
                    sums[i] += val;
                    counts[i] += 1;
                }
            }
            if let Some(w) = &step.weights {
                for (acc, &wv) in weight_sum.iter_mut().zip(w) {
                    *acc += wv;
                }
                weight_batches += 1;
            }
            let Some(mut grads) = step.grads else {
                continue;
            };

            let mut enc_g: Vec<Option<MlpGrads<F>>> = bound
                .encoders
                .iter()
                .zip(&model.encoders)
                .map(|(bm, p)| bm.grads(&mut grads, p))
                .collect();
            let mut dec_g: Vec<Option<MlpGrads<F>>> = bound
                .decoders
                .iter()
                .zip(&model.decoders)
                .map(|(bm, p)| bm.grads(&mut grads, p))
                .collect();
            let mut head_g: Vec<Option<MlpGrads<F>>> = bound
                .heads
                .iter()
                .zip(&model.heads)
                .map(|(bm, h)| bm.grads(&mut grads, &h.params))
                .collect();
            drop(grads);

            {
                let mut all: Vec<&mut MlpGrads<F>> = enc_g
                    .iter_mut()
                    .chain(dec_g.iter_mut())
                    .chain(head_g.iter_mut())
                    .flatten()
                    .collect();
                clip_global_norm(&mut all, clip);
            }
            for ((p, g), s) in model.encoders.iter_mut().zip(&enc_g).zip(&mut enc_state) {
                if let Some(g) = g {
                    adam_step(p, g, s, lr)?;
                }
            }
            for ((p, g), s) in model.decoders.iter_mut().zip(&dec_g).zip(&mut dec_state) {
                if let Some(g) = g {
                    adam_step(p, g, s, lr)?;
                }
            }
            for ((h, g), s) in model.heads.iter_mut().zip(&head_g).zip(&mut head_state) {
                if let Some(g) = g {
                    adam_step(&mut h.params, g, s, lr)?;
                }
            }
        }

        let mean = |i: usize| if counts[i] > 0 { sums[i] / counts[i] as f64 } else { 0.0 };
        let terms = LossTerms::weighted(mean(0), mean(1), mean(2), mean(3), &config.lambdas)?;
        let weights = (weight_batches > 0).then(|| weight_sum.iter().map(|w| w / weight_batches as f64).collect());
        let metrics = if evaluating && (epoch + 1) % config.eval_every == 0 {
            let eval = evaluate(&model, ds, mask, config)?;
            eval.report.metrics()
        } else {
            None
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            terms,
            weights,
            metrics,
        };
        log::debug!(
            "epoch {} rec={:.5} inf={:.5} mmi={:.5} mmd={:.5} total={:.5}",
            record.epoch,
            terms.rec,
            terms.inf,
            terms.mmi,
            terms.mmd,
            terms.total
        );
        on_epoch(&record, &model)?;
        history.epochs.push(record);
    }

    Ok(TrainOutcome { model, history })
}

/// The recorded objective must equal the lambda-weighted sum of the
/// recorded terms up to the working precision.
fn check_linearity<F: Real>(objective: F, values: &[f64; 4], lambdas: &Lambdas) -> Result<()> {
    let expected: f64 = values.iter().zip(lambdas.as_array()).map(|(v, l)| v * l).sum();
    let scale: f64 = 1.0 + values.iter().zip(lambdas.as_array()).map(|(v, l)| (v * l).abs()).sum::<f64>();
    let got = objective.to_f64().unwrap_or(f64::NAN);
    if !got.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    let tol = 64.0 * F::epsilon().to_f64().unwrap_or(1e-7) * scale;
    if (got - expected).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "objective {got} differs from weighted terms {expected}"
        )));
    }
    Ok(())
}
