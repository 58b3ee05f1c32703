use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{shape_err, Error, Result};

/// Label contingency table with compacted row (pred) and column (truth) ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(shape_err("label lengths", truth.len(), pred.len()));
        }
        let compact = |labels: &[usize]| {
            let ids: BTreeMap<usize, usize> = labels
                .iter()
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, l)| (l, i))
                .collect();
            (labels.iter().map(|l| ids[l]).collect::<Vec<_>>(), ids.len())
        };
        let (p, rows) = compact(pred);
        let (t, cols) = compact(truth);
        let mut counts = vec![vec![0usize; cols]; rows];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: pred.len(),
        })
    }
}

/// Best one-to-one cluster-to-class matching, as a fraction of samples.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Err(Error::InvalidArgument("accuracy of an empty labelling".into()));
    }
    let size = c.row_sums.len().max(c.col_sums.len());
    let mut weights = Matrix::new(size, size, 0i64);
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            weights[(i, j)] = v as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / c.n as f64)
}

fn entropy(sums: &[usize], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies; `0/0` is taken as 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Err(Error::InvalidArgument("NMI of an empty labelling".into()));
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.row_sums[i] as f64 * c.col_sums[j] as f64)).ln();
            }
        }
    }
    let denom = 0.5 * (entropy(&c.row_sums, n) + entropy(&c.col_sums, n));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index with the expected-index correction.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n < 2 {
        return Err(Error::InvalidArgument(format!("ARI needs at least 2 samples, got {}", c.n)));
    }
    let index: f64 = c.counts.iter().flatten().map(|&v| pairs(v)).sum();
    let rows: f64 = c.row_sums.iter().map(|&v| pairs(v)).sum();
    let cols: f64 = c.col_sums.iter().map(|&v| pairs(v)).sum();
    let expected = rows * cols / pairs(c.n);
    let max_index = 0.5 * (rows + cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        // Both partitions trivial (one cluster, or all singletons).
        return Ok(if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}
