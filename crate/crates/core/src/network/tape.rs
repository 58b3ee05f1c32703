//! A small reverse-mode automatic differentiation tape over dense matrices.
//!
//! Every value is an `Array2`; scalars are `1 x 1`. Nodes are appended in
//! evaluation order, so a reverse sweep over the node list is a valid
//! topological order for backpropagation. Nodes that do not depend on a
//! parameter are marked constant and skipped during the sweep.

use ndarray::{Array2, Axis, Zip};

use crate::error::{shape_err, Error, Result};
use crate::real::Real;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    SoftmaxRows(Var),
    Ln(Var),
    Exp(Var),
    ClampMin(Var, F),
    DivScalar(Var, Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    SqDist(Var, Var),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node<F> {
    value: Array2<F>,
    op: Op<F>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

/// Gradients of one scalar with respect to every node that feeds it.
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Array2<F>>>,
}

impl<F: Real> Gradients<F> {
    /// `None` when `var` is constant or not on the path to the loss.
    pub fn get(&self, var: Var) -> Option<&Array2<F>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<F>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn same_shape<F>(context: &'static str, a: &Array2<F>, b: &Array2<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_err(context, a.dim(), b.dim()));
    }
    Ok(())
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<F> {
        &self.nodes[v.0].value
    }

    /// Moves a leaf value out, leaving an empty array in its place.
    pub(crate) fn take_value(&mut self, v: Var) -> Array2<F> {
        std::mem::take(&mut self.nodes[v.0].value)
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(shape_err("matmul", av.ncols(), bv.nrows()));
        }
        let out = av.dot(bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    /// `x + b` with the `1 x m` row `b` broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(shape_err("add_bias", (1, xv.ncols()), bv.dim()));
        }
        let out = xv + bv;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let out = self.value(a) * c;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > F::zero() { x } else { F::zero() });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(F::ln);
        let rg = self.rg(a);
        self.push(out, Op::Ln(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(F::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: F) -> Var {
        let out = self.value(a).mapv(|x| if x < floor { floor } else { x });
        let rg = self.rg(a);
        self.push(out, Op::ClampMin(a, floor), rg)
    }

    /// `a / s` for a `1 x 1` node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).dim() != (1, 1) {
            return Err(shape_err("div_scalar", (1, 1), self.value(s).dim()));
        }
        let out = self.value(a) / self.scalar(s);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::DivScalar(a, s), rg))
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, F::one() / F::lit(n as f64))
    }

    /// Sums over rows, giving a `1 x m` row of column totals.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Sums over columns, giving an `n x 1` column of row totals.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(out, Op::SumCols(a), rg)
    }

    /// Pairwise squared Euclidean distances between the rows of `x` and `y`.
    pub fn sq_dist(&mut self, x: Var, y: Var) -> Result<Var> {
        let (xv, yv) = (self.value(x), self.value(y));
        if xv.ncols() != yv.ncols() {
            return Err(shape_err("sq_dist", xv.ncols(), yv.ncols()));
        }
        let out = pairwise_sq_dist(xv, yv);
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(out, Op::SqDist(x, y), rg))
    }

    /// Selects rows by index; the backward pass scatter-adds.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= av.nrows()) {
            return Err(shape_err("gather_rows", av.nrows(), bad));
        }
        let out = av.select(Axis(0), rows);
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec()), rg))
    }

    /// Reverse sweep from the `1 x 1` node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(shape_err("backward", (1, 1), lv.dim()));
        }
        if !lv[[0, 0]].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Array2<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::from_elem((1, 1), F::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            } else {
                self.propagate(node, g, &mut grads);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<F>, mut g: Array2<F>, grads: &mut [Option<Array2<F>>]) {
        let mut acc = |v: Var, delta: Array2<F>| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).t().dot(&g));
                }
            }
            Op::Transpose(a) => acc(*a, g.t().as_standard_layout().into_owned()),
            Op::AddBias(x, b) => {
                if self.rg(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                acc(*x, g);
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    acc(*a, g.clone());
                    acc(*b, g);
                } else {
                    acc(*a, g);
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.clone());
                }
                g.mapv_inplace(|v| -v);
                acc(*b, g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, &g * self.value(*b));
                }
                if self.rg(*b) {
                    acc(*b, g * self.value(*a));
                }
            }
            Op::Scale(a, c) => {
                g.mapv_inplace(|v| v * *c);
                acc(*a, g);
            }
            Op::Relu(a) => {
                Zip::from(&mut g).and(&node.value).for_each(|d, &y| {
                    if y <= F::zero() {
                        *d = F::zero();
                    }
                });
                acc(*a, g);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let dot: F = drow.sum();
                    drow.zip_mut_with(&yrow, |dv, &yv| *dv = *dv - yv * dot);
                }
                acc(*a, d);
            }
            Op::Ln(a) => acc(*a, g / self.value(*a)),
            Op::Exp(a) => acc(*a, g * &node.value),
            Op::ClampMin(a, floor) => {
                Zip::from(&mut g).and(self.value(*a)).for_each(|d, &x| {
                    if x < *floor {
                        *d = F::zero();
                    }
                });
                acc(*a, g);
            }
            Op::DivScalar(a, s) => {
                let sv = self.scalar(*s);
                if self.rg(*a) {
                    acc(*a, &g / sv);
                }
                if self.rg(*s) {
                    let num: F = (&g * self.value(*a)).sum();
                    acc(*s, Array2::from_elem((1, 1), -num / (sv * sv)));
                }
            }
            Op::Sum(a) => {
                let shape = self.value(*a).dim();
                acc(*a, Array2::from_elem(shape, g[[0, 0]]));
            }
            Op::SumRows(a) => {
                let shape = self.value(*a).dim();
                acc(*a, g.broadcast(shape).expect("row broadcast").to_owned());
            }
            Op::SumCols(a) => {
                let shape = self.value(*a).dim();
                acc(*a, g.broadcast(shape).expect("column broadcast").to_owned());
            }
            Op::SqDist(x, y) => {
                let two = F::lit(2.0);
                let (xv, yv) = (self.value(*x), self.value(*y));
                if self.rg(*x) {
                    let row_tot = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*x, (xv * &row_tot - g.dot(yv)) * two);
                }
                if self.rg(*y) {
                    let col_tot = g.sum_axis(Axis(0)).insert_axis(Axis(1));
                    acc(*y, (yv * &col_tot - g.t().dot(xv)) * two);
                }
            }
            Op::GatherRows(a, rows) => {
                let mut d = Array2::zeros(self.value(*a).dim());
                for (r, &src) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(src);
                    dst += &g.row(r);
                }
                acc(*a, d);
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Real>(x: &Array2<F>) -> Array2<F> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| if v > m { v } else { m });
        row.mapv_inplace(|v| (v - max).exp());
        let total: F = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

pub(crate) fn pairwise_sq_dist<F: Real>(x: &Array2<F>, y: &Array2<F>) -> Array2<F> {
    let mut out = Array2::zeros((x.nrows(), y.nrows()));
    for (i, xr) in x.rows().into_iter().enumerate() {
        for (j, yr) in y.rows().into_iter().enumerate() {
            out[[i, j]] = xr
                .iter()
                .zip(yr.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
        }
    }
    out
}
