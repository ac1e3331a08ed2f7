//! Op-level tape: forward recording and reverse-mode backward sweep.
//!
//! Nodes are whole-matrix operations rather than scalars, so a forward pass
//! over a batch records a handful of nodes per layer. The backward sweep
//! walks nodes in reverse creation order (creation order is topological by
//! construction) and accumulates parameter gradients. External adjoints --
//! the regularizer gradients with respect to captured activations -- can be
//! injected as seeds before the sweep.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::scalar::Scalar;

use super::loss::softmax_and_loss;
use super::mlp::{Gradients, Params};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Forward-pass mode. Dropout applies only in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Op<T: Scalar> {
    /// Constant matrix leaf (batch inputs).
    Input,
    /// `W_layer * x + b_layer` column-broadcast.
    Affine { layer: usize, input: NodeId },
    Relu { input: NodeId },
    /// Elementwise multiply by a fixed mask of `0` / `1/(1-p)` entries.
    Dropout { input: NodeId, mask: Array2<T> },
    /// Mean categorical cross entropy of the logits; caches the softmax.
    Cce {
        logits: NodeId,
        labels: Vec<usize>,
        softmax: Array2<T>,
    },
    /// Constant scalar leaf.
    ConstScalar,
}

enum Value<T: Scalar> {
    Matrix(Array2<T>),
    Scalar(T),
}

/// Recorded computation of one forward pass.
pub struct Tape<T: Scalar> {
    ops: Vec<Op<T>>,
    values: Vec<Value<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<T>, value: Value<T>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId(self.ops.len() - 1)
    }

    pub fn input(&mut self, m: Array2<T>) -> NodeId {
        self.push(Op::Input, Value::Matrix(m))
    }

    pub fn const_scalar(&mut self, v: T) -> NodeId {
        self.push(Op::ConstScalar, Value::Scalar(v))
    }

    /// Records `params.layers[layer].w * x + b`.
    pub fn affine(&mut self, params: &Params<T>, layer: usize, input: NodeId) -> NodeId {
        let x = self.matrix(input);
        let lp = &params.layers[layer];
        let mut z = lp.w.dot(x);
        for (mut col, _) in z.axis_iter_mut(Axis(1)).zip(0..) {
            col.zip_mut_with(&lp.b, |v, &b| *v += b);
        }
        self.push(Op::Affine { layer, input }, Value::Matrix(z))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let a = self.matrix(input).mapv(|v| v.max(T::zero()));
        self.push(Op::Relu { input }, Value::Matrix(a))
    }

    pub fn dropout(&mut self, input: NodeId, mask: Array2<T>) -> NodeId {
        let a = self.matrix(input) * &mask;
        self.push(Op::Dropout { input, mask }, Value::Matrix(a))
    }

    pub fn cce(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let (softmax, loss) = softmax_and_loss(self.matrix(logits), &labels)?;
        Ok(self.push(
            Op::Cce {
                logits,
                labels,
                softmax,
            },
            Value::Scalar(loss),
        ))
    }

    /// Matrix value of a node. Panics if the node is scalar.
    pub fn matrix(&self, id: NodeId) -> &Array2<T> {
        match &self.values[id.0] {
            Value::Matrix(m) => m,
            Value::Scalar(_) => panic!("node {:?} holds a scalar", id),
        }
    }

    /// Scalar value of a node, if it is one.
    pub fn scalar(&self, id: NodeId) -> Option<T> {
        match &self.values[id.0] {
            Value::Scalar(v) => Some(*v),
            Value::Matrix(_) => None,
        }
    }

    /// Reverse sweep from a scalar root. Parameters not reached by the sweep
    /// keep zero gradients.
    pub fn backward(&self, params: &Params<T>, root: NodeId) -> Result<Gradients<T>> {
        self.backward_seeded(params, Some(root), &[])
    }

    /// Reverse sweep with optional root and externally injected matrix
    /// adjoints. Seeds accumulate onto the node adjoints before propagation,
    /// so a node may receive both a seed and downstream contributions.
    pub fn backward_seeded(
        &self,
        params: &Params<T>,
        root: Option<NodeId>,
        seeds: &[(NodeId, Array2<T>)],
    ) -> Result<Gradients<T>> {
        let n = self.ops.len();
        let mut madj: Vec<Option<Array2<T>>> = (0..n).map(|_| None).collect();
        let mut sadj: Vec<T> = vec![T::zero(); n];

        if let Some(r) = root {
            if self.scalar(r).is_none() {
                return Err(Error::NonScalarRoot);
            }
            sadj[r.0] = T::one();
        }
        for (id, seed) in seeds {
            let shape = self.matrix(*id).dim();
            if seed.dim() != shape {
                return Err(Error::LengthMismatch {
                    left: shape.0 * shape.1,
                    right: seed.len(),
                });
            }
            match &mut madj[id.0] {
                Some(a) => *a += seed,
                slot => *slot = Some(seed.clone()),
            }
        }

        let mut grads = Gradients::zeros_like(params);
        for idx in (0..n).rev() {
            match &self.ops[idx] {
                Op::Input | Op::ConstScalar => {}
                Op::Affine { layer, input } => {
                    let Some(dz) = madj[idx].take() else { continue };
                    let x = self.matrix(*input);
                    let lp = &params.layers[*layer];
                    let (gw, gb) = &mut grads.layers[*layer];
                    *gw += &dz.dot(&x.t());
                    *gb += &dz.sum_axis(Axis(1));
                    let dx = lp.w.t().dot(&dz);
                    accumulate(&mut madj[input.0], dx);
                }
                Op::Relu { input } => {
                    let Some(da) = madj[idx].take() else { continue };
                    let z = self.matrix(*input);
                    let mut dx = da;
                    dx.zip_mut_with(z, |g, &v| {
                        if v <= T::zero() {
                            *g = T::zero();
                        }
                    });
                    accumulate(&mut madj[input.0], dx);
                }
                Op::Dropout { input, mask } => {
                    let Some(da) = madj[idx].take() else { continue };
                    accumulate(&mut madj[input.0], da * mask);
                }
                Op::Cce {
                    logits,
                    labels,
                    softmax,
                } => {
                    let a = sadj[idx];
                    if a == T::zero() {
                        continue;
                    }
                    let batch = labels.len();
                    let scale = a / T::count(batch);
                    let mut dl = softmax.clone();
                    for (j, &label) in labels.iter().enumerate() {
                        dl[(label, j)] -= T::one();
                    }
                    accumulate(&mut madj[logits.0], dl * scale);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Array2<T>>, contribution: Array2<T>) {
    match slot {
        Some(a) => *a += &contribution,
        None => *slot = Some(contribution),
    }
}

/// Post-nonlinearity activations of one forward pass: every hidden layer
/// (after ReLU and, in train mode, dropout) plus the output logits.
pub struct ActivationCapture<T: Scalar> {
    layers: Vec<CapturedLayer<T>>,
    batch: usize,
}

pub struct CapturedLayer<T: Scalar> {
    pub node: NodeId,
    /// `units x batch`.
    pub acts: Array2<T>,
}

impl<T: Scalar> ActivationCapture<T> {
    /// Builds a capture directly from matrices, without a tape behind it.
    /// Node ids are dangling; only useful where no backward pass happens.
    pub fn from_matrices(layers: Vec<Array2<T>>) -> Self {
        let batch = layers.first().map_or(0, |m| m.ncols());
        Self {
            layers: layers
                .into_iter()
                .map(|acts| CapturedLayer {
                    node: NodeId(usize::MAX),
                    acts,
                })
                .collect(),
            batch,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn units(&self, layer: usize) -> usize {
        self.layers[layer].acts.nrows()
    }

    pub fn acts(&self, layer: usize) -> &Array2<T> {
        &self.layers[layer].acts
    }

    pub fn node(&self, layer: usize) -> NodeId {
        self.layers[layer].node
    }

    /// Index of the output layer (the last captured layer).
    pub fn output_layer(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Runs the network on a `input_dim x batch` matrix of inputs.
///
/// Returns the tape, the logits node, and the activation capture. In train
/// mode with `dropout_prob > 0`, each hidden activation entry is dropped
/// independently with probability `p` and survivors are scaled by `1/(1-p)`;
/// masks are drawn from the `Dropout` stream of `dropout_seed`, layer by
/// layer in unit-major order. The capture records the same (post-dropout)
/// values the loss sees.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    inputs: &Array2<T>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Tape<T>, NodeId, ActivationCapture<T>)> {
    let batch = inputs.ncols();
    if batch < 2 {
        return Err(Error::BatchTooSmall { min: 2, got: batch });
    }
    if inputs.nrows() != params.spec.input_dim {
        return Err(Error::LengthMismatch {
            left: params.spec.input_dim,
            right: inputs.nrows(),
        });
    }

    let p = params.spec.dropout_prob;
    let apply_dropout = mode == Mode::Train && p > 0.0;
    let mut mask_rng = Rng::new(dropout_seed, Stream::Dropout);

    let mut tape = Tape::new();
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut x = tape.input(inputs.clone());

    let hidden_count = params.spec.hidden_layers.len();
    for layer in 0..hidden_count {
        let z = tape.affine(params, layer, x);
        let mut a = tape.relu(z);
        if apply_dropout {
            let units = params.spec.hidden_layers[layer];
            let keep = T::cst(1.0 / (1.0 - p));
            let mask = Array2::from_shape_fn((units, batch), |_| {
                if mask_rng.bernoulli(p) {
                    T::zero()
                } else {
                    keep
                }
            });
            a = tape.dropout(a, mask);
        }
        layers.push(CapturedLayer {
            node: a,
            acts: tape.matrix(a).clone(),
        });
        x = a;
    }
    let logits = tape.affine(params, hidden_count, x);
    layers.push(CapturedLayer {
        node: logits,
        acts: tape.matrix(logits).clone(),
    });

    Ok((tape, logits, ActivationCapture { layers, batch }))
}
