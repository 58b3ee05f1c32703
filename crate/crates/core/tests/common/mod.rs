#![allow(dead_code)]

use hsacc::alignment::Kernel;
use hsacc::dataio::{synth_gaussian, AvailabilityMask, MultiViewDataset, SynthParams};
use hsacc::network::{MlpParams, Tape};
use hsacc::seed;
use hsacc::trainer::{batch_terms, BatchTerms, Detached, HsaccModel, TrainConfig};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v * scale
    })
}

/// The clustering benchmark: four well separated blobs in two 10-d views.
pub fn benchmark_dataset(seed: u64) -> MultiViewDataset {
    synth_gaussian(&SynthParams {
        n: 1000,
        k: 4,
        dims: vec![10, 10],
        sep: 10.0,
        noise: 0.5,
        seed,
    })
    .unwrap()
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        warmup: 1,
        batch_size: 16,
        latent_dim: 4,
        encoder_hidden: vec![8],
        inference_hidden: vec![6],
        eval_every: 0,
        restarts: 3,
        ..TrainConfig::default()
    }
}

/// Index of a loss term in rec, inf, mmi, mmd order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Rec,
    Inf,
    Mmi,
    Mmd,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Rec, Term::Inf, Term::Mmi, Term::Mmd];

    fn pick(self, t: &BatchTerms<f64>) -> hsacc::network::Var {
        match self {
            Term::Rec => t.rec,
            Term::Inf => t.inf,
            Term::Mmi => t.mmi,
            Term::Mmd => t.mmd,
        }
        .expect("term defined on the check instance")
    }
}

pub struct GradInstance {
    pub model: HsaccModel<f64>,
    pub views: Vec<Array2<f64>>,
    pub mask: AvailabilityMask,
    pub kernel: Kernel,
}

impl GradInstance {
    /// `n` samples, two views, latent width `d`; `incomplete` leading rows
    /// drop one view each.
    pub fn new(n: usize, d: usize, incomplete: usize, kernel: Kernel, seed: u64) -> Self {
        let config = TrainConfig {
            latent_dim: d,
            encoder_hidden: vec![6],
            inference_hidden: vec![6],
            seed,
            ..TrainConfig::default()
        };
        let dims = [4, 3];
        let model = HsaccModel::<f64>::init(&dims, &config).unwrap();
        let mut rng = seed::rng(seed ^ 0xA5A5);
        let views = dims.iter().map(|&dv| random_matrix(&mut rng, n, dv, 1.0)).collect();
        let mut entries = Array2::from_elem((n, 2), true);
        for i in 0..incomplete {
            entries[[i, i % 2]] = false;
        }
        let mask = AvailabilityMask::new(entries).unwrap();
        Self {
            model,
            views,
            mask,
            kernel,
        }
    }

    fn value(&self, model: &HsaccModel<f64>, term: Term, frozen: &Detached<f64>) -> f64 {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let batch: Vec<usize> = (0..self.mask.n()).collect();
        let t = batch_terms(
            &mut tape,
            &bound,
            model,
            &self.views,
            &self.mask,
            &batch,
            self.kernel,
            true,
            Some(frozen),
        )
        .unwrap();
        tape.scalar(term.pick(&t))
    }

    /// Analytic and central-difference gradients over every parameter.
    pub fn gradients(&self, term: Term, h: f64) -> Vec<(f64, f64)> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let batch: Vec<usize> = (0..self.mask.n()).collect();
        let t = batch_terms(
            &mut tape,
            &bound,
            &self.model,
            &self.views,
            &self.mask,
            &batch,
            self.kernel,
            true,
            None,
        )
        .unwrap();
        let frozen = t.detached.clone().expect("complete rows present");
        let mut grads = tape.backward(term.pick(&t)).unwrap();

        let networks: Vec<(&hsacc::network::BoundMlp, &MlpParams<f64>)> = bound
            .encoders
            .iter()
            .zip(&self.model.encoders)
            .chain(bound.decoders.iter().zip(&self.model.decoders))
            .chain(bound.heads.iter().zip(self.model.heads.iter().map(|h| &h.params)))
            .collect();
        let mut analytic = Vec::new();
        for (bm, p) in networks {
            let g = bm.grads(&mut grads, p).unwrap_or_else(|| p.zero_grads());
            for layer in &g {
                analytic.extend(layer.weight.iter().chain(layer.bias.iter()).copied());
            }
        }

        let mut out = Vec::with_capacity(analytic.len());
        let mut index = 0;
        let n_nets = 2 * self.model.n_views() + self.model.heads.len();
        for net in 0..n_nets {
            let count = network(&self.model, net).num_params();
            for j in 0..count {
                let mut plus = self.model.clone();
                *network_mut(&mut plus, net).values_mut().nth(j).unwrap() += h;
                let mut minus = self.model.clone();
                *network_mut(&mut minus, net).values_mut().nth(j).unwrap() -= h;
                let numeric = (self.value(&plus, term, &frozen) - self.value(&minus, term, &frozen)) / (2.0 * h);
                out.push((analytic[index], numeric));
                index += 1;
            }
        }
        out
    }
}

fn network(m: &HsaccModel<f64>, i: usize) -> &MlpParams<f64> {
    let v = m.n_views();
    if i < v {
        &m.encoders[i]
    } else if i < 2 * v {
        &m.decoders[i - v]
    } else {
        &m.heads[i - 2 * v].params
    }
}

fn network_mut(m: &mut HsaccModel<f64>, i: usize) -> &mut MlpParams<f64> {
    let v = m.n_views();
    if i < v {
        &mut m.encoders[i]
    } else if i < 2 * v {
        &mut m.decoders[i - v]
    } else {
        &mut m.heads[i - 2 * v].params
    }
}

/// Relative error with a floor of `1e-6` on the denominator.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Mutual-information loss computed entry by entry.
pub fn mi_loss_oracle(z1: &Array2<f64>, z2: &Array2<f64>) -> f64 {
    let softmax = |z: &Array2<f64>| {
        let mut s = z.clone();
        for mut row in s.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let t: f64 = e.iter().sum();
            for (x, ev) in row.iter_mut().zip(e) {
                *x = ev / t;
            }
        }
        s
    };
    let (s1, s2) = (softmax(z1), softmax(z2));
    let (n, d) = s1.dim();
    let mut p = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += s1[[i, a]] * s2[[i, b]];
            }
            p[a][b] = acc / n as f64;
        }
    }
    let mut q = vec![vec![0.0; d]; d];
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            q[a][b] = (0.5 * (p[a][b] + p[b][a])).max(1e-10);
            total += q[a][b];
        }
    }
    let mut rowm = vec![0.0; d];
    let mut colm = vec![0.0; d];
    for a in 0..d {
        for b in 0..d {
            q[a][b] /= total;
            rowm[a] += q[a][b];
            colm[b] += q[a][b];
        }
    }
    let mut loss = 0.0;
    for a in 0..d {
        for b in 0..d {
            loss -= q[a][b] * (q[a][b] / (rowm[a] * colm[b])).ln();
        }
    }
    loss
}

pub fn column_mean(z: &Array2<f64>) -> Array1<f64> {
    let mut m = Array1::zeros(z.ncols());
    for row in z.rows() {
        m += &row;
    }
    m / z.nrows() as f64
}

/// Squared-distance ground truth for the Gaussian-kernel MMD.
pub fn rbf_mmd_oracle(z: &Array2<f64>, h: &Array2<f64>, sigma2: f64) -> f64 {
    let k = |a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize| {
        let mut d2 = 0.0;
        for c in 0..a.ncols() {
            d2 += (a[[i, c]] - b[[j, c]]).powi(2);
        }
        (-d2 / (2.0 * sigma2)).exp()
    };
    let mean = |a: &Array2<f64>, b: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            for j in 0..b.nrows() {
                s += k(a, i, b, j);
            }
        }
        s / (a.nrows() * b.nrows()) as f64
    };
    mean(z, z) + mean(h, h) - 2.0 * mean(z, h)
}

/// Exhaustive best matching between predicted clusters and classes.
pub fn acc_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let m = pred.iter().chain(truth).max().unwrap() + 1;
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits = pred.iter().zip(truth).filter(|(a, b)| p[**a] == **b).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Normalized mutual information from label frequencies.
pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let m = pred.iter().chain(truth).max().unwrap() + 1;
    let mut joint = vec![vec![0usize; m]; m];
    let mut ca = vec![0usize; m];
    let mut cb = vec![0usize; m];
    for (&a, &b) in pred.iter().zip(truth) {
        joint[a][b] += 1;
        ca[a] += 1;
        cb[b] += 1;
    }
    let joint: Vec<Vec<f64>> = joint.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect();
    let pa: Vec<f64> = ca.iter().map(|&c| c as f64 / n).collect();
    let pb: Vec<f64> = cb.iter().map(|&c| c as f64 / n).collect();
    let mut mi = 0.0;
    for a in 0..m {
        for b in 0..m {
            if joint[a][b] > 0.0 {
                mi += joint[a][b] * (joint[a][b] / (pa[a] * pb[b])).ln();
            }
        }
    }
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
    let denom = 0.5 * (h(&pa) + h(&pb));
    if denom <= 0.0 {
        0.0
    } else {
        mi / denom
    }
}

/// Adjusted Rand index from agreement counts over all sample pairs.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / den
    }
}
