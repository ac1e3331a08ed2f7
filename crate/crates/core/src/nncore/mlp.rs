//! Network specification, parameters, and the SGD-with-momentum update.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::scalar::Scalar;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Shape of a fully connected network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Probability of dropping a hidden activation entry in train mode.
    pub dropout_prob: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers,
            output_dim,
            activation: Activation::Relu,
            dropout_prob: 0.0,
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_prob = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() {
            return Err(Error::InvalidSpec("hidden_layers must be nonempty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidSpec("all layer dims must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidSpec(format!(
                "dropout_prob {} outside [0, 1]",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    /// Per-layer `(fan_in, fan_out)` pairs, hidden layers then output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_layers {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// One layer's weights, bias, and momentum buffers.
#[derive(Debug, Clone)]
pub struct LayerParams<T: Scalar> {
    /// `out x in`.
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub vw: Array2<T>,
    pub vb: Array1<T>,
}

/// All trainable parameters plus the spec they were built for.
#[derive(Debug, Clone)]
pub struct Params<T: Scalar> {
    pub spec: MlpSpec,
    pub layers: Vec<LayerParams<T>>,
}

/// Per-parameter gradients, same shapes as [`Params`].
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &Params<T>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.dim())))
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.zip_mut_with(ow, |a, &g| *a += scale * g);
            b.zip_mut_with(ob, |a, &g| *a += scale * g);
        }
    }

    /// Iterates over all gradient entries in a fixed order (layer, weights
    /// row-major, then bias).
    pub fn flat_iter(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

/// Glorot-uniform initialization: weights uniform on
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` drawn row-major
/// layer by layer from the `Init` stream of `seed`; biases and momentum
/// buffers zero.
pub fn init_params<T: Scalar>(spec: &MlpSpec, seed: u64) -> Result<Params<T>> {
    spec.validate()?;
    let mut rng = Rng::new(seed, Stream::Init);
    let layers = spec
        .layer_dims()
        .iter()
        .map(|&(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                T::cst(rng.uniform(-limit, limit))
            });
            LayerParams {
                w,
                b: Array1::zeros(fan_out),
                vw: Array2::zeros((fan_out, fan_in)),
                vb: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Params {
        spec: spec.clone(),
        layers,
    })
}

/// Classical (Polyak) momentum update:
/// `v <- momentum * v + grad; theta <- theta - lr * v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Gradients<T>,
    lr: T,
    momentum: T,
) {
    for (layer, (gw, gb)) in params.layers.iter_mut().zip(&grads.layers) {
        layer.vw.zip_mut_with(gw, |v, &g| *v = momentum * *v + g);
        layer.vb.zip_mut_with(gb, |v, &g| *v = momentum * *v + g);
        layer.w.zip_mut_with(&layer.vw, |w, &v| *w -= lr * v);
        layer.b.zip_mut_with(&layer.vb, |b, &v| *b -= lr * v);
    }
}

/// Exponentially decaying learning rate `alpha0 * 0.95^(i / 3520)` with a
/// real-valued exponent.
pub fn lr_schedule<T: Scalar>(iteration: u64, alpha0: T) -> T {
    alpha0 * T::cst(0.95).powf(T::cst(iteration as f64 / 3520.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_2_3_1() -> MlpSpec {
        MlpSpec::new(2, vec![3], 1)
    }

    #[test]
    fn init_shapes_match_spec() {
        let params: Params<f64> = init_params(&spec_2_3_1(), 7).unwrap();
        assert_eq!(params.layers.len(), 2);
        assert_eq!(params.layers[0].w.dim(), (3, 2));
        assert_eq!(params.layers[0].b.len(), 3);
        assert_eq!(params.layers[1].w.dim(), (1, 3));
        assert_eq!(params.layers[1].b.len(), 1);
        assert!(params.layers.iter().all(|l| l.vw.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a: Params<f64> = init_params(&spec_2_3_1(), 7).unwrap();
        let b: Params<f64> = init_params(&spec_2_3_1(), 7).unwrap();
        let c: Params<f64> = init_params(&spec_2_3_1(), 8).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.w, lb.w);
            assert_eq!(la.b, lb.b);
        }
        assert!(a
            .layers
            .iter()
            .zip(&c.layers)
            .any(|(la, lc)| la.w != lc.w));
    }

    #[test]
    fn glorot_bounds_hold() {
        let params: Params<f64> = init_params(&spec_2_3_1(), 3).unwrap();
        let limit0 = (6.0 / 5.0_f64).sqrt();
        assert!(params.layers[0].w.iter().all(|w| w.abs() <= limit0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MlpSpec::new(2, vec![], 1).validate().is_err());
        assert!(MlpSpec::new(0, vec![3], 1).validate().is_err());
        assert!(MlpSpec::new(2, vec![3], 1)
            .with_dropout(1.5)
            .validate()
            .is_err());
    }

    #[test]
    fn sgd_zero_grad_zero_velocity_is_identity() {
        let mut params: Params<f64> = init_params(&spec_2_3_1(), 1).unwrap();
        let before = params.clone();
        let grads = Gradients::zeros_like(&params);
        sgd_momentum_step(&mut params, &grads, 0.1, 0.9);
        for (a, b) in params.layers.iter().zip(&before.layers) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn sgd_zero_momentum_is_plain_sgd() {
        let mut params: Params<f64> = init_params(&spec_2_3_1(), 1).unwrap();
        let w0 = params.layers[0].w[(0, 0)];
        let mut grads = Gradients::zeros_like(&params);
        grads.layers[0].0[(0, 0)] = 2.0;
        sgd_momentum_step(&mut params, &grads, 0.01, 0.0);
        assert_eq!(params.layers[0].w[(0, 0)], w0 - 0.02);
    }

    #[test]
    fn sgd_momentum_two_step_displacement() {
        // Constant gradient g: step one moves lr*g, step two lr*(1.9)*g.
        let mut params: Params<f64> = init_params(&spec_2_3_1(), 1).unwrap();
        let w0 = params.layers[0].w[(0, 0)];
        let g = 3.0;
        let mut grads = Gradients::zeros_like(&params);
        grads.layers[0].0[(0, 0)] = g;
        sgd_momentum_step(&mut params, &grads, 0.01, 0.9);
        sgd_momentum_step(&mut params, &grads, 0.01, 0.9);
        let expected = w0 - 0.01 * g - 0.019 * g;
        assert!((params.layers[0].w[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn lr_schedule_examples() {
        assert_eq!(lr_schedule(0, 0.01_f64), 0.01);
        assert!((lr_schedule(3520, 0.01_f64) - 0.0095).abs() < 1e-15);
        assert!((lr_schedule(7040, 0.01_f64) - 0.009025).abs() < 1e-15);
    }
}
