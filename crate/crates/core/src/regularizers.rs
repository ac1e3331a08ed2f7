//! Regularization terms and their parameter gradients.
//!
//! The two persistence terms reward large diagram values: `t1` is the
//! negated sum of MST edge weights, `t2` trades off their mean against their
//! dispersion. `c_term` is the naive alternative (mean absolute pairwise
//! correlation), and `l1`/`l2` the classical weight penalties. For the
//! activation-based terms, [`value_and_pull`] produces the adjoints of the
//! captured activations; composing them with the tape's backward sweep gives
//! exact gradients with respect to every network parameter on the
//! differentiable locus, and the documented subgradient conventions
//! elsewhere.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{ActivationCapture, Gradients, NodeId, Params, Tape};
use crate::scalar::Scalar;
use crate::topology::{
    correlation_adjoint, correlation_entries_adjoint, diagram_adjoint, dissimilarity_matrix,
    mst_diagram, selected_activations, CorrelationMatrix, Diagram0, NeuronId,
};

/// Which term to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    #[default]
    None,
    T1,
    T2,
    C,
    L1,
    L2,
}

impl RegKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::T1 => "t1",
            RegKind::T2 => "t2",
            RegKind::C => "c",
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
        }
    }

    /// Terms computed from captured activations (as opposed to parameters).
    pub fn needs_activations(self) -> bool {
        matches!(self, RegKind::T1 | RegKind::T2 | RegKind::C)
    }
}

/// Term choice plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    /// Loss weight; the trainer skips the term entirely at `omega == 0`.
    pub omega: f64,
    /// Mean weight in `t2`.
    pub alpha: f64,
    /// Dispersion weight in `t2`.
    pub beta: f64,
    /// Per-hidden-layer selection percentage for importance sampling.
    pub sample_percent: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self {
            kind: RegKind::None,
            omega: 0.0,
            alpha: 0.5,
            beta: 0.5,
            sample_percent: 0.5,
        }
    }
}

impl RegularizerSpec {
    pub fn new(kind: RegKind, omega: f64) -> Self {
        Self {
            kind,
            omega,
            ..Self::default()
        }
    }
}

/// Negated total persistence: `-sum(weights)`.
pub fn t1<T: Scalar>(diagram: &Diagram0<T>) -> Result<T> {
    if diagram.is_empty() {
        return Err(Error::EmptyDiagram);
    }
    Ok(-diagram.total_weight())
}

/// `-alpha * mean(weights) + beta * std(weights)`, population variance over
/// the diagram points (no Bessel correction).
pub fn t2<T: Scalar>(diagram: &Diagram0<T>, alpha: T, beta: T) -> Result<T> {
    if diagram.is_empty() {
        return Err(Error::EmptyDiagram);
    }
    let m = T::count(diagram.len());
    let mean = diagram.total_weight() / m;
    let var = diagram
        .points
        .iter()
        .map(|p| (p.weight - mean) * (p.weight - mean))
        .sum::<T>()
        / m;
    Ok(-alpha * mean + beta * var.sqrt())
}

fn t2_weight_adjoints<T: Scalar>(diagram: &Diagram0<T>, alpha: T, beta: T) -> Vec<T> {
    let m = T::count(diagram.len());
    let mean = diagram.total_weight() / m;
    let var = diagram
        .points
        .iter()
        .map(|p| (p.weight - mean) * (p.weight - mean))
        .sum::<T>()
        / m;
    let sigma = var.sqrt();
    diagram
        .points
        .iter()
        .map(|p| {
            let mut g = -alpha / m;
            // sqrt is not differentiable at zero dispersion; the zero
            // subgradient keeps all-equal diagrams quiet.
            if sigma > T::zero() {
                g += beta * (p.weight - mean) / (m * sigma);
            }
            g
        })
        .collect()
}

/// Mean of `|corr(x, y)|` over ordered pairs `x != y` with `corr != 0`
/// (exact floating-point test); `0` when no pair qualifies.
pub fn c_term<T: Scalar>(corr: &CorrelationMatrix<T>) -> Result<T> {
    let c = corr.size();
    if c < 2 {
        return Err(Error::TooFewNeurons { min: 2, got: c });
    }
    let mut sum = T::zero();
    let mut count = 0usize;
    for i in 0..c {
        for j in 0..c {
            if i != j && corr.valid[(i, j)] && corr.values[(i, j)] != T::zero() {
                sum += corr.values[(i, j)].abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(T::zero());
    }
    Ok(sum / T::count(count))
}

/// Adjoints of `c_term` with respect to the correlation entries, placed on
/// the upper triangle (the symmetric pair is summed downstream).
fn c_corr_adjoints<T: Scalar>(corr: &CorrelationMatrix<T>) -> Array2<T> {
    let c = corr.size();
    let mut count = 0usize;
    for i in 0..c {
        for j in 0..c {
            if i != j && corr.valid[(i, j)] && corr.values[(i, j)] != T::zero() {
                count += 1;
            }
        }
    }
    let mut adj = Array2::zeros((c, c));
    if count == 0 {
        return adj;
    }
    let inv = T::one() / T::count(count);
    for i in 0..c {
        for j in (i + 1)..c {
            let r = corr.values[(i, j)];
            if corr.valid[(i, j)] && r != T::zero() {
                // Both ordered pairs contribute |r|; d|r|/dr = sign(r).
                let s = if r > T::zero() { T::one() } else { -T::one() };
                adj[(i, j)] = (inv + inv) * s;
            }
        }
    }
    adj
}

/// Sum of absolute values over all weights and biases.
pub fn l1<T: Scalar>(params: &Params<T>) -> T {
    params
        .layers
        .iter()
        .map(|l| l.w.iter().map(|w| w.abs()).sum::<T>() + l.b.iter().map(|b| b.abs()).sum::<T>())
        .sum()
}

/// Sum of squares over all weights and biases.
pub fn l2<T: Scalar>(params: &Params<T>) -> T {
    params
        .layers
        .iter()
        .map(|l| l.w.iter().map(|&w| w * w).sum::<T>() + l.b.iter().map(|&b| b * b).sum::<T>())
        .sum()
}

fn l1_grad<T: Scalar>(params: &Params<T>) -> Gradients<T> {
    let mut grads = Gradients::zeros_like(params);
    for (layer, (gw, gb)) in params.layers.iter().zip(&mut grads.layers) {
        gw.zip_mut_with(&layer.w, |g, &w| *g = sign(w));
        gb.zip_mut_with(&layer.b, |g, &b| *g = sign(b));
    }
    grads
}

fn l2_grad<T: Scalar>(params: &Params<T>) -> Gradients<T> {
    let two = T::cst(2.0);
    let mut grads = Gradients::zeros_like(params);
    for (layer, (gw, gb)) in params.layers.iter().zip(&mut grads.layers) {
        gw.zip_mut_with(&layer.w, |g, &w| *g = two * w);
        gb.zip_mut_with(&layer.b, |g, &b| *g = two * b);
    }
    grads
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// How a term's gradient reaches the parameters: either as adjoint seeds on
/// captured activation nodes (backpropagated by the tape) or directly.
pub enum RegPull<T: Scalar> {
    ActivationSeeds(Vec<(NodeId, Array2<T>)>),
    ParamGrads(Gradients<T>),
}

/// Evaluates the configured term and produces its gradient carrier.
///
/// For `t1`/`t2`/`c` the value comes from the selected activations and the
/// pull is a set of activation-node seeds; for `l1`/`l2` the gradient is
/// immediate. `kind == None` is rejected (the trainer never calls in that
/// case).
pub fn value_and_pull<T: Scalar>(
    spec: &RegularizerSpec,
    capture: &ActivationCapture<T>,
    selected: &[NeuronId],
    params: &Params<T>,
) -> Result<(T, RegPull<T>)> {
    match spec.kind {
        RegKind::None => Err(Error::InvalidConfig(
            "regularizer kind 'none' cannot be evaluated".into(),
        )),
        RegKind::L1 => Ok((l1(params), RegPull::ParamGrads(l1_grad(params)))),
        RegKind::L2 => Ok((l2(params), RegPull::ParamGrads(l2_grad(params)))),
        RegKind::T1 | RegKind::T2 | RegKind::C => {
            if selected.len() < 2 {
                return Err(Error::TooFewNeurons {
                    min: 2,
                    got: selected.len(),
                });
            }
            let acts = selected_activations(capture, selected);
            let (corr, diss) = dissimilarity_matrix(&acts)?;
            let (value, act_adj) = match spec.kind {
                RegKind::T1 => {
                    let diagram = mst_diagram(&diss)?;
                    let value = t1(&diagram)?;
                    let w_adj = vec![-T::one(); diagram.len()];
                    let d_adj = diagram_adjoint(&diagram, &w_adj)?;
                    (value, correlation_adjoint(&d_adj, &corr, &acts))
                }
                RegKind::T2 => {
                    let diagram = mst_diagram(&diss)?;
                    let alpha = T::cst(spec.alpha);
                    let beta = T::cst(spec.beta);
                    let value = t2(&diagram, alpha, beta)?;
                    let w_adj = t2_weight_adjoints(&diagram, alpha, beta);
                    let d_adj = diagram_adjoint(&diagram, &w_adj)?;
                    (value, correlation_adjoint(&d_adj, &corr, &acts))
                }
                RegKind::C => {
                    let value = c_term(&corr)?;
                    let corr_adj = c_corr_adjoints(&corr);
                    (value, correlation_entries_adjoint(&corr_adj, &corr, &acts))
                }
                _ => unreachable!(),
            };
            let seeds = scatter_to_layers(capture, selected, &act_adj);
            Ok((value, RegPull::ActivationSeeds(seeds)))
        }
    }
}

/// Value of the configured term alone (no gradient); the independent path
/// used by finite-difference checks.
pub fn regularizer_value<T: Scalar>(
    spec: &RegularizerSpec,
    capture: &ActivationCapture<T>,
    selected: &[NeuronId],
    params: &Params<T>,
) -> Result<T> {
    match spec.kind {
        RegKind::None => Err(Error::InvalidConfig(
            "regularizer kind 'none' cannot be evaluated".into(),
        )),
        RegKind::L1 => Ok(l1(params)),
        RegKind::L2 => Ok(l2(params)),
        RegKind::T1 | RegKind::T2 | RegKind::C => {
            if selected.len() < 2 {
                return Err(Error::TooFewNeurons {
                    min: 2,
                    got: selected.len(),
                });
            }
            let acts = selected_activations(capture, selected);
            let (corr, diss) = dissimilarity_matrix(&acts)?;
            match spec.kind {
                RegKind::T1 => t1(&mst_diagram(&diss)?),
                RegKind::T2 => t2(&mst_diagram(&diss)?, T::cst(spec.alpha), T::cst(spec.beta)),
                RegKind::C => c_term(&corr),
                _ => unreachable!(),
            }
        }
    }
}

/// Value of the configured term and its gradient with respect to every
/// parameter, chaining the term adjoints through the tape when needed.
pub fn regularizer_value_and_grad<T: Scalar>(
    spec: &RegularizerSpec,
    tape: &Tape<T>,
    capture: &ActivationCapture<T>,
    selected: &[NeuronId],
    params: &Params<T>,
) -> Result<(T, Gradients<T>)> {
    let (value, pull) = value_and_pull(spec, capture, selected, params)?;
    let grads = match pull {
        RegPull::ParamGrads(g) => g,
        RegPull::ActivationSeeds(seeds) => tape.backward_seeded(params, None, &seeds)?,
    };
    Ok((value, grads))
}

/// Distributes selected-row adjoints onto per-layer matrices keyed by the
/// capture's tape nodes.
fn scatter_to_layers<T: Scalar>(
    capture: &ActivationCapture<T>,
    selected: &[NeuronId],
    act_adj: &Array2<T>,
) -> Vec<(NodeId, Array2<T>)> {
    let mut per_layer: BTreeMap<usize, Array2<T>> = BTreeMap::new();
    for (row, id) in selected.iter().enumerate() {
        let layer_adj = per_layer
            .entry(id.layer)
            .or_insert_with(|| Array2::zeros((capture.units(id.layer), capture.batch())));
        let mut target = layer_adj.row_mut(id.unit);
        target += &act_adj.row(row);
    }
    per_layer
        .into_iter()
        .map(|(layer, m)| (capture.node(layer), m))
        .collect()
}
