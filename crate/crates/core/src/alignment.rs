//! Hierarchical semantic alignment.
//!
//! Low level: a mutual-information consistency loss between the latent
//! representations of every pair of views. High level: per-view weights
//! from the linear-kernel discrepancy to the mean representation, a
//! weighted fusion `H = sum_v w_v Z_v`, and an MMD loss pulling every view
//! toward `H`.
//!
//! Every loss has a `*_var` form that records onto a [`Tape`] and a plain
//! form that returns the value.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::network::{Tape, Var};
use crate::real::Real;

/// Floor applied to joint-distribution entries before taking logs.
pub const PROB_FLOOR: f64 = 1e-10;

/// Symmetrized, clamped, renormalized joint distribution of two views'
/// softmax features.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution<F> {
    pub p: Array2<F>,
    pub row_marginal: Array1<F>,
    pub col_marginal: Array1<F>,
}

impl<F: Real> JointDistribution<F> {
    /// Builds the joint from row-stochastic feature matrices.
    pub fn from_probabilities(s1: ArrayView2<F>, s2: ArrayView2<F>) -> Result<Self> {
        check_pair("joint distribution", s1, s2)?;
        let n = F::lit(s1.nrows() as f64);
        let raw = s1.t().dot(&s2) / n;
        let mut p = (&raw + &raw.t()) * F::lit(0.5);
        let floor = F::lit(PROB_FLOOR);
        p.mapv_inplace(|v| if v < floor { floor } else { v });
        let total = p.sum();
        p /= total;
        let row_marginal = p.sum_axis(Axis(1));
        let col_marginal = p.sum_axis(Axis(0));
        Ok(Self {
            p,
            row_marginal,
            col_marginal,
        })
    }

    pub fn mutual_information(&self) -> F {
        let mut mi = F::zero();
        for ((m, n), &pmn) in self.p.indexed_iter() {
            mi += pmn * (pmn / (self.row_marginal[m] * self.col_marginal[n])).ln();
        }
        mi
    }
}

fn check_pair<F>(context: &'static str, a: ArrayView2<F>, b: ArrayView2<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_err(context, a.dim(), b.dim()));
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidArgument(format!("{context}: no samples")));
    }
    Ok(())
}

fn check_vars<F: Real>(tape: &Tape<F>, context: &'static str, a: Var, b: Var) -> Result<()> {
    check_pair(context, tape.value(a).view(), tape.value(b).view())
}

/// Negative mutual information of two views' latents, recorded on `tape`.
///
/// Rows are softmax-normalized first; the loss lies in `[-ln D, 0]`.
pub fn mutual_information_loss_var<F: Real>(tape: &mut Tape<F>, z1: Var, z2: Var) -> Result<Var> {
    check_vars(tape, "mutual information", z1, z2)?;
    let n = tape.value(z1).nrows();
    let s1 = tape.softmax_rows(z1);
    let s2 = tape.softmax_rows(z2);
    let s1t = tape.transpose(s1);
    let joint = tape.matmul(s1t, s2)?;
    let joint = tape.scale(joint, F::one() / F::lit(n as f64));
    let joint_t = tape.transpose(joint);
    let sym = tape.add(joint, joint_t)?;
    let sym = tape.scale(sym, F::lit(0.5));
    let clamped = tape.clamp_min(sym, F::lit(PROB_FLOOR));
    let total = tape.sum(clamped);
    let p = tape.div_scalar(clamped, total)?;
    let row_marg = tape.sum_cols(p);
    let col_marg = tape.sum_rows(p);
    let product = tape.matmul(row_marg, col_marg)?;
    let log_p = tape.ln(p);
    let log_product = tape.ln(product);
    let log_ratio = tape.sub(log_p, log_product)?;
    let weighted = tape.mul(p, log_ratio)?;
    let mi = tape.sum(weighted);
    Ok(tape.scale(mi, -F::one()))
}

pub fn mutual_information_loss<F: Real>(z1: ArrayView2<F>, z2: ArrayView2<F>) -> Result<F> {
    check_pair("mutual information", z1, z2)?;
    let mut tape = Tape::new();
    let a = tape.constant(z1.to_owned());
    let b = tape.constant(z2.to_owned());
    let loss = mutual_information_loss_var(&mut tape, a, b)?;
    Ok(tape.scalar(loss))
}

/// Mean of the pairwise MI loss over all unordered view pairs.
pub fn pairwise_mi_loss_var<F: Real>(tape: &mut Tape<F>, latents: &[Var]) -> Result<Var> {
    let v = latents.len();
    if v < 2 {
        return Err(Error::InvalidArgument(format!("pairwise MI needs at least 2 views, got {v}")));
    }
    let mut terms = Vec::with_capacity(v * (v - 1) / 2);
    for a in 0..v {
        for b in a + 1..v {
            terms.push(mutual_information_loss_var(tape, latents[a], latents[b])?);
        }
    }
    let total = sum_vars(tape, &terms)?;
    Ok(tape.scale(total, F::one() / F::lit(terms.len() as f64)))
}

pub fn pairwise_mi_loss<F: Real>(latents: &[ArrayView2<F>]) -> Result<F> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = latents.iter().map(|z| tape.constant(z.to_owned())).collect();
    let loss = pairwise_mi_loss_var(&mut tape, &vars)?;
    Ok(tape.scalar(loss))
}

pub(crate) fn sum_vars<F: Real>(tape: &mut Tape<F>, vars: &[Var]) -> Result<Var> {
    let (&first, rest) = vars
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty sum".into()))?;
    rest.iter().try_fold(first, |acc, &v| tape.add(acc, v))
}

/// Linear-kernel discrepancy between a view's latents and the initial
/// fusion, from the three Gram-matrix double sums.
pub fn view_discrepancy<F: Real>(z: ArrayView2<F>, r: ArrayView2<F>) -> Result<F> {
    check_pair("view discrepancy", z, r)?;
    let n2 = F::lit((z.nrows() * z.nrows()) as f64);
    let zz = z.dot(&z.t()).sum();
    let rr = r.dot(&r.t()).sum();
    let zr = r.dot(&z.t()).sum();
    let d = (zz + rr - F::lit(2.0) * zr) / n2;
    Ok(if d < F::zero() { F::zero() } else { d })
}

/// Per-view fusion weights: the softmax of negated discrepancies.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights<F> {
    pub weights: Array1<F>,
    pub discrepancies: Array1<F>,
}

impl<F: Real> ViewWeights<F> {
    pub fn uniform(v: usize) -> Self {
        Self {
            weights: Array1::from_elem(v, F::one() / F::lit(v as f64)),
            discrepancies: Array1::zeros(v),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn view_weights<F: Real>(discrepancies: &[F]) -> Result<ViewWeights<F>> {
    if discrepancies.is_empty() {
        return Err(Error::InvalidArgument("no discrepancies".into()));
    }
    if discrepancies.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("view discrepancies".into()));
    }
    let smallest = discrepancies
        .iter()
        .fold(F::infinity(), |m, &d| if d < m { d } else { m });
    let exps: Array1<F> = discrepancies.iter().map(|&d| (smallest - d).exp()).collect();
    let total = exps.sum();
    Ok(ViewWeights {
        weights: exps / total,
        discrepancies: Array1::from(discrepancies.to_vec()),
    })
}

/// Discrepancies of every view to their elementwise mean, and the
/// resulting weights. Returns the mean representation as well.
pub fn estimate_weights<F: Real>(latents: &[ArrayView2<F>]) -> Result<(Array2<F>, ViewWeights<F>)> {
    let r = mean_representation(latents)?;
    let disc = latents
        .iter()
        .map(|z| view_discrepancy(*z, r.view()))
        .collect::<Result<Vec<_>>>()?;
    Ok((r, view_weights(&disc)?))
}

fn mean_representation<F: Real>(latents: &[ArrayView2<F>]) -> Result<Array2<F>> {
    let first = latents
        .first()
        .ok_or_else(|| Error::InvalidArgument("no views to fuse".into()))?;
    let mut r = Array2::zeros(first.dim());
    for z in latents {
        if z.dim() != first.dim() {
            return Err(shape_err("fusion", first.dim(), z.dim()));
        }
        r += z;
    }
    Ok(r / F::lit(latents.len() as f64))
}

/// View latents with their mean `r` and weighted fusion `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBundle<F> {
    pub z: Vec<Array2<F>>,
    pub r: Array2<F>,
    pub h: Array2<F>,
    pub weights: ViewWeights<F>,
}

pub fn fuse<F: Real>(latents: &[ArrayView2<F>], weights: &ViewWeights<F>) -> Result<LatentBundle<F>> {
    if latents.len() != weights.len() {
        return Err(shape_err("fusion weights", latents.len(), weights.len()));
    }
    let r = mean_representation(latents)?;
    let mut h = Array2::zeros(r.dim());
    for (z, &w) in latents.iter().zip(weights.weights.iter()) {
        h.scaled_add(w, z);
    }
    Ok(LatentBundle {
        z: latents.iter().map(|z| z.to_owned()).collect(),
        r,
        h,
        weights: weights.clone(),
    })
}

/// `H = sum_v w_v Z_v` on the tape; the weights are constants.
pub fn fuse_var<F: Real>(tape: &mut Tape<F>, latents: &[Var], weights: &ViewWeights<F>) -> Result<Var> {
    if latents.len() != weights.len() || latents.is_empty() {
        return Err(shape_err("fusion weights", latents.len(), weights.len()));
    }
    let scaled: Vec<Var> = latents
        .iter()
        .zip(weights.weights.iter())
        .map(|(&z, &w)| tape.scale(z, w))
        .collect();
    sum_vars(tape, &scaled)
}

/// Kernel for the distribution-alignment loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Linear,
    /// Gaussian kernel with median-heuristic bandwidth.
    Rbf,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Linear => "linear",
            Kernel::Rbf => "rbf",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Kernel::Linear),
            "rbf" | "gaussian" => Ok(Kernel::Rbf),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Median of the pairwise squared distances among the pooled rows of
/// `x` and `y`; falls back to 1 when every point coincides.
pub fn rbf_bandwidth<F: Real>(x: ArrayView2<F>, y: ArrayView2<F>) -> F {
    let pooled: Vec<_> = x.rows().into_iter().chain(y.rows()).collect();
    let mut d2 = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            let s: F = pooled[i]
                .iter()
                .zip(pooled[j].iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d2.push(s);
        }
    }
    if d2.is_empty() {
        return F::one();
    }
    d2.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 {
        d2[mid]
    } else {
        (d2[mid - 1] + d2[mid]) * F::lit(0.5)
    };
    if median > F::zero() && median.is_finite() {
        median
    } else {
        F::one()
    }
}

/// Mean entry of the kernel matrix `K(a, b)`.
fn kernel_mean<F: Real>(tape: &mut Tape<F>, a: Var, b: Var, kernel: Kernel, sigma2: F) -> Result<Var> {
    let k = match kernel {
        Kernel::Linear => {
            let bt = tape.transpose(b);
            tape.matmul(a, bt)?
        }
        Kernel::Rbf => {
            let d2 = tape.sq_dist(a, b)?;
            let scaled = tape.scale(d2, -F::one() / (F::lit(2.0) * sigma2));
            tape.exp(scaled)
        }
    };
    Ok(tape.mean(k))
}

/// Per-view kernel bandwidths `sigma^2`; 1 for the linear kernel.
pub fn mmd_bandwidths<F: Real>(tape: &Tape<F>, latents: &[Var], h: Var, kernel: Kernel) -> Vec<F> {
    latents
        .iter()
        .map(|&z| match kernel {
            Kernel::Linear => F::one(),
            Kernel::Rbf => rbf_bandwidth(tape.value(z).view(), tape.value(h).view()),
        })
        .collect()
}

/// `sum_v MMD^2(Z_v, H)` expanded through kernel matrices.
pub fn mmd_alignment_loss_var<F: Real>(
    tape: &mut Tape<F>,
    latents: &[Var],
    h: Var,
    kernel: Kernel,
) -> Result<Var> {
    let sigma2 = mmd_bandwidths(tape, latents, h, kernel);
    mmd_alignment_loss_with_bandwidths_var(tape, latents, h, kernel, &sigma2)
}

/// [`mmd_alignment_loss_var`] with fixed per-view bandwidths.
pub fn mmd_alignment_loss_with_bandwidths_var<F: Real>(
    tape: &mut Tape<F>,
    latents: &[Var],
    h: Var,
    kernel: Kernel,
    sigma2: &[F],
) -> Result<Var> {
    if latents.is_empty() {
        return Err(Error::InvalidArgument("no views for MMD".into()));
    }
    if sigma2.len() != latents.len() {
        return Err(shape_err("mmd bandwidths", latents.len(), sigma2.len()));
    }
    let mut terms = Vec::with_capacity(latents.len());
    for (&z, &s2) in latents.iter().zip(sigma2) {
        check_vars(tape, "mmd alignment", z, h)?;
        let kzz = kernel_mean(tape, z, z, kernel, s2)?;
        let khh = kernel_mean(tape, h, h, kernel, s2)?;
        let kzh = kernel_mean(tape, z, h, kernel, s2)?;
        let cross = tape.scale(kzh, F::lit(-2.0));
        let partial = tape.add(kzz, khh)?;
        terms.push(tape.add(partial, cross)?);
    }
    sum_vars(tape, &terms)
}

pub fn mmd_alignment_loss<F: Real>(latents: &[ArrayView2<F>], h: ArrayView2<F>, kernel: Kernel) -> Result<F> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = latents.iter().map(|z| tape.constant(z.to_owned())).collect();
    let hv = tape.constant(h.to_owned());
    let loss = mmd_alignment_loss_var(&mut tape, &vars, hv, kernel)?;
    Ok(tape.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_joint_gives_minus_ln_two() {
        let big = 60.0;
        let z = array![[big, 0.0], [0.0, big]];
        let loss = mutual_information_loss(z.view(), z.view()).unwrap();
        assert!((loss + 2f64.ln()).abs() < 1e-6, "{loss}");

        let s = array![[1.0f64, 0.0], [0.0, 1.0]];
        let joint = JointDistribution::from_probabilities(s.view(), s.view()).unwrap();
        assert!((joint.p[[0, 0]] - 0.5).abs() < 1e-9);
        assert!(joint.p[[0, 1]] < 1e-9);
        assert!((joint.mutual_information() - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn constant_rows_give_zero() {
        let z = array![[3.0f64, 3.0], [-1.0, -1.0], [0.5, 0.5]];
        let loss = mutual_information_loss(z.view(), z.view()).unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn mi_rejects_bad_shapes() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(mutual_information_loss(a.view(), b.view()).is_err());
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(mutual_information_loss(empty.view(), empty.view()).is_err());
        assert!(pairwise_mi_loss(&[a.view()]).is_err());
    }

    #[test]
    fn discrepancy_examples() {
        let z = array![[1.0f64, 0.0]];
        let r = array![[0.0, 1.0]];
        assert!((view_discrepancy(z.view(), r.view()).unwrap() - 2.0).abs() < 1e-12);

        let z = array![[1.0f64, 0.0], [1.0, 0.0]];
        let r = Array2::zeros((2, 2));
        assert!((view_discrepancy(z.view(), r.view()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(view_discrepancy(z.view(), z.view()).unwrap(), 0.0);
    }

    #[test]
    fn weight_closed_forms() {
        let w = view_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w.weights, array![0.5, 0.5]);
        let w = view_weights(&[1.0f64, 2.0]).unwrap();
        assert!((w.weights[0] - 0.7311).abs() < 1e-4);
        assert!((w.weights[1] - 0.2689).abs() < 1e-4);
        let w = view_weights(&[0.0, 3f64.ln()]).unwrap();
        assert!((w.weights[0] - 0.75).abs() < 1e-12);
        assert!(view_weights(&[f64::NAN, 1.0]).is_err());
        // Large discrepancies stay finite thanks to the shift.
        let w = view_weights(&[1000.0f64, 1001.0]).unwrap();
        assert!((w.weights[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn fuse_examples() {
        let w = view_weights(&[0.0, 0.0]).unwrap();
        let z1 = array![[2.0, 0.0]];
        let z2 = array![[0.0, 2.0]];
        let b = fuse(&[z1.view(), z2.view()], &w).unwrap();
        assert_eq!(b.h, array![[1.0, 1.0]]);
        assert_eq!(b.r, array![[1.0, 1.0]]);

        let one_hot = ViewWeights {
            weights: array![1.0, 0.0],
            discrepancies: array![0.0, 0.0],
        };
        let b = fuse(&[z1.view(), z2.view()], &one_hot).unwrap();
        assert_eq!(b.h, z1);
    }

    #[test]
    fn mmd_examples() {
        let z = array![[1.0f64, 2.0], [3.0, 4.0]];
        assert!(mmd_alignment_loss(&[z.view(), z.view()], z.view(), Kernel::Linear).unwrap().abs() < 1e-12);
        assert!(mmd_alignment_loss(&[z.view()], z.view(), Kernel::Rbf).unwrap().abs() < 1e-12);

        let z = array![[1.0f64, 0.0], [1.0, 0.0]];
        let h = Array2::zeros((2, 2));
        let l = mmd_alignment_loss(&[z.view()], h.view(), Kernel::Linear).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_parses() {
        assert_eq!("RBF".parse::<Kernel>().unwrap(), Kernel::Rbf);
        assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
        assert!("cosine".parse::<Kernel>().is_err());
    }
}
