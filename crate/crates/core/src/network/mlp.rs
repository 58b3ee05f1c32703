use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::real::Real;
use crate::seed;

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// One affine layer: `y = x W + b` with `W` stored `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Layer<F> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }
}

/// Parameters of a feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F> {
    layers: Vec<Layer<F>>,
    activation: Activation,
}

/// Per-layer gradients with the same shapes as the parameters.
pub type MlpGrads<F> = Vec<Layer<F>>;

impl<F: Real> MlpParams<F> {
    /// He-uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        Self::init_with(layer_dims, Activation::Relu, seed)
    }

    pub fn init_with(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = seed::rng(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    F::lit(rng.random_range(-bound..bound))
                });
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer<F>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.ncols() {
                return Err(shape_err("layer bias", layer.weight.ncols(), layer.bias.len()));
            }
            if i > 0 && layers[i - 1].weight.ncols() != layer.weight.nrows() {
                return Err(shape_err(
                    "layer chain",
                    layers[i - 1].weight.ncols(),
                    layer.weight.nrows(),
                ));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    /// Every weight then bias entry, layer by layer, in row-major order.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut F> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.ncols()));
        dims
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn zero_grads(&self) -> MlpGrads<F> {
        self.layers.iter().map(Layer::zeros_like).collect()
    }

    /// Plain forward pass without recording a tape.
    pub fn forward(&self, batch: ArrayView2<F>) -> Result<Array2<F>> {
        if batch.ncols() != self.in_dim() {
            return Err(shape_err("mlp forward", self.in_dim(), batch.ncols()));
        }
        let last = self.layers.len() - 1;
        let mut h = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if i < last && self.activation == Activation::Relu {
                h.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            }
        }
        Ok(h)
    }

    /// Registers the parameters as leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape<F>) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.param(l.weight.clone());
                let b = tape.param(l.bias.clone().insert_axis(Axis(0)));
                (w, b)
            })
            .collect();
        BoundMlp {
            layers,
            activation: self.activation,
        }
    }

    /// Like [`MlpParams::bind`] but moves the parameters onto `tape`
    /// instead of copying them. `self` holds empty layers until
    /// [`BoundMlp::restore`] is called.
    pub fn bind_owned(&mut self, tape: &mut Tape<F>) -> BoundMlp {
        let layers = self
            .layers
            .iter_mut()
            .map(|l| {
                let w = tape.param(std::mem::take(&mut l.weight));
                let b = tape.param(std::mem::take(&mut l.bias).insert_axis(Axis(0)));
                (w, b)
            })
            .collect();
        BoundMlp {
            layers,
            activation: self.activation,
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "network needs at least two layer dims, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Tape handles for a network's parameters.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let lin = tape.matmul(h, w)?;
            h = tape.add_bias(lin, b)?;
            if i < last && self.activation == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Moves parameters bound with [`MlpParams::bind_owned`] back.
    pub fn restore<F: Real>(&self, tape: &mut Tape<F>, params: &mut MlpParams<F>) {
        for (&(w, b), layer) in self.layers.iter().zip(params.layers.iter_mut()) {
            layer.weight = tape.take_value(w);
            layer.bias = tape.take_value(b).index_axis_move(Axis(0), 0);
        }
    }

    pub fn vars(&self) -> &[(Var, Var)] {
        &self.layers
    }

    /// `None` when no parameter of this network reached the loss.
    pub fn grads<F: Real>(
        &self,
        grads: &mut Gradients<F>,
        params: &MlpParams<F>,
    ) -> Option<MlpGrads<F>> {
        let reached = self
            .layers
            .iter()
            .any(|&(w, b)| grads.get(w).is_some() || grads.get(b).is_some());
        if !reached {
            return None;
        }
        let out = self
            .layers
            .iter()
            .zip(params.layers())
            .map(|(&(w, b), layer)| Layer {
                weight: grads
                    .take(w)
                    .unwrap_or_else(|| Array2::zeros(layer.weight.dim())),
                bias: grads
                    .take(b)
                    .map(|g| g.index_axis_move(Axis(0), 0))
                    .unwrap_or_else(|| Array1::zeros(layer.bias.len())),
            })
            .collect();
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_chain() {
        let p = MlpParams::<f64>::init(&[4, 8, 2], 1).unwrap();
        assert_eq!(p.layers()[0].weight.dim(), (4, 8));
        assert_eq!(p.layers()[1].weight.dim(), (8, 2));
        assert_eq!(p.layers()[0].bias.len(), 8);
        assert_eq!(p.layers()[1].bias.len(), 2);
        assert_eq!(p.dims(), vec![4, 8, 2]);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let p = MlpParams::<f64>::init(&[4, 8], 11).unwrap();
        let bound = (6.0f64 / 4.0).sqrt();
        assert!((bound - 1.2247).abs() < 1e-4);
        assert!(p.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(p.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::<f32>::init(&[3, 5, 2], 9).unwrap();
        let b = MlpParams::<f32>::init(&[3, 5, 2], 9).unwrap();
        let c = MlpParams::<f32>::init(&[3, 5, 2], 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(MlpParams::<f64>::init(&[], 0).is_err());
        assert!(MlpParams::<f64>::init(&[4], 0).is_err());
        assert!(MlpParams::<f64>::init(&[4, 0, 2], 0).is_err());
    }

    #[test]
    fn identity_layer_is_identity() {
        let eye = Layer {
            weight: Array2::<f64>::eye(3),
            bias: Array1::zeros(3),
        };
        let p = MlpParams::from_layers(vec![eye], Activation::Relu).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]];
        assert_eq!(p.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::<f64>::from_layers(
            vec![Layer::zeros(3, 4), Layer::zeros(4, 2)],
            Activation::Relu,
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0]];
        assert_eq!(p.forward(x.view()).unwrap(), Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = MlpParams::<f64>::init(&[3, 2], 0).unwrap();
        assert!(p.forward(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let err = MlpParams::<f64>::from_layers(
            vec![Layer::zeros(3, 4), Layer::zeros(5, 2)],
            Activation::Relu,
        );
        assert!(err.is_err());
    }

    #[test]
    fn taped_forward_matches_plain_forward() {
        let p = MlpParams::<f64>::init(&[3, 6, 6, 2], 4).unwrap();
        let x = array![[0.1, -0.4, 0.9], [1.5, 0.2, -0.3]];
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = bound.forward(&mut tape, xv).unwrap();
        let plain = p.forward(x.view()).unwrap();
        assert!((tape.value(y) - &plain).iter().all(|d| d.abs() < 1e-14));
    }
}
