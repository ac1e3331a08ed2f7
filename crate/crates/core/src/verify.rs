//! Self-verification suites: oracle equivalence, gradient checks, fixture
//! reproduction. The CLI `verify` subcommand runs them and prints one line
//! per suite; the acceptance tests call the same functions.

use ndarray::Array2;

use crate::nncore::{forward, init_params, Gradients, MlpSpec, Mode, Params};
use crate::regularizers::{
    regularizer_value, regularizer_value_and_grad, t1, t2, RegKind, RegularizerSpec,
};
use crate::rng::{Rng, Stream};
use crate::sampler::{select_neurons, SamplerConfig};
use crate::stats::{cd_diagram_data, friedman, nemenyi, rank_table, AccuracyTable};
use crate::topology::{
    diagram_brute_force, dissimilarity_matrix, mst_diagram, CorrelationMatrix, Diagram0,
    DiagramPoint, DissimilarityMatrix,
};
use crate::Real;

/// Statistics fixture bundled with the crate (also a valid `stats` CLI
/// input).
pub const BENCHMARK_ACCURACIES_CSV: &str = include_str!("../fixtures/benchmark_accuracies.csv");

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: true,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: false,
            detail,
        }
    }
}

/// Runs every suite.
pub fn run_all() -> Vec<SuiteReport> {
    vec![
        mst_oracle_suite(),
        cut_property_suite(),
        closed_form_suite(),
        gradient_suite(),
        stats_fixture_suite(),
    ]
}

fn random_dissimilarity(c: usize, rng: &mut Rng) -> DissimilarityMatrix<Real> {
    let mut values = Array2::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let w = rng.next_f64();
            values[(i, j)] = w;
            values[(j, i)] = w;
        }
    }
    DissimilarityMatrix::from_values(values)
}

/// Kruskal against exhaustive spanning-tree enumeration: 200 random
/// matrices, 3 to 7 vertices, exact sorted-weight equality.
pub fn mst_oracle_suite() -> SuiteReport {
    const NAME: &str = "mst-oracle-equivalence";
    let mut rng = Rng::new(0x4D53_5431, Stream::Probe);
    for case in 0..200 {
        let c = 3 + rng.below(5);
        let d = random_dissimilarity(c, &mut rng);
        let fast = mst_diagram(&d).expect("mst");
        let slow = diagram_brute_force(&d).expect("brute force");
        if fast.weights() != slow.weights() {
            return SuiteReport::fail(
                NAME,
                format!("case {case} (c = {c}): kruskal != brute force"),
            );
        }
    }
    SuiteReport::pass(NAME, "200 random cliques, c in 3..=7, exact match".into())
}

/// Cut property over random activation matrices: the smallest diagram value
/// equals one minus the largest absolute correlation, exactly, and the
/// diagram has `c - 1` points.
pub fn cut_property_suite() -> SuiteReport {
    const NAME: &str = "cut-property";
    let mut rng = Rng::new(0x4355_5450, Stream::Probe);
    for case in 0..1000 {
        let c = 10 + rng.below(41);
        let n = 8 + rng.below(57);
        let acts = Array2::from_shape_fn((c, n), |_| rng.uniform(-1.0, 1.0));
        let (corr, diss) = dissimilarity_matrix(&acts).expect("matrix");
        let diagram = mst_diagram(&diss).expect("diagram");
        if diagram.len() != c - 1 {
            return SuiteReport::fail(NAME, format!("case {case}: |diagram| != c - 1"));
        }
        let mut max_abs: Real = 0.0;
        for i in 0..c {
            for j in (i + 1)..c {
                max_abs = max_abs.max(corr.values[(i, j)].abs());
            }
        }
        let min_weight = diagram.weights()[0];
        if min_weight != 1.0 - max_abs {
            return SuiteReport::fail(
                NAME,
                format!(
                    "case {case}: min diagram weight {min_weight} != 1 - max |corr| {}",
                    1.0 - max_abs
                ),
            );
        }
    }
    SuiteReport::pass(NAME, "1000 random captures, exact equality".into())
}

/// Closed-form values of the three terms on their pinned fixtures.
pub fn closed_form_suite() -> SuiteReport {
    const NAME: &str = "closed-form-terms";
    let diagram = Diagram0::<Real> {
        points: [0.2, 0.3, 0.4]
            .iter()
            .enumerate()
            .map(|(i, &w)| DiagramPoint {
                weight: w,
                edge: (0, i + 1),
            })
            .collect(),
        vertex_count: 4,
    };
    let v1 = t1(&diagram).expect("t1");
    if v1 != -0.9 {
        return SuiteReport::fail(NAME, format!("t1 = {v1}, expected -0.9 exactly"));
    }
    let v2 = t2(&diagram, 0.5, 0.5).expect("t2");
    let expected = -0.10917517095361369;
    if (v2 - expected).abs() >= 1e-9 {
        return SuiteReport::fail(NAME, format!("t2 = {v2}, expected {expected} +- 1e-9"));
    }
    // Off-diagonal correlations {0.5, -0.25, 0}: mean over the four ordered
    // pairs with nonzero correlation is 0.375.
    let mut values = Array2::zeros((3, 3));
    for i in 0..3 {
        values[(i, i)] = 1.0;
    }
    values[(0, 1)] = 0.5;
    values[(1, 0)] = 0.5;
    values[(0, 2)] = -0.25;
    values[(2, 0)] = -0.25;
    let corr = CorrelationMatrix {
        values,
        valid: Array2::from_elem((3, 3), true),
    };
    let vc = crate::regularizers::c_term(&corr).expect("c");
    if vc != 0.375 {
        return SuiteReport::fail(NAME, format!("c = {vc}, expected 0.375 exactly"));
    }
    SuiteReport::pass(NAME, "t1 = -0.9, t2 within 1e-9, c = 0.375".into())
}

/// Addresses one scalar parameter inside [`Params`].
#[derive(Clone, Copy)]
enum ParamTarget {
    Weight(usize, usize, usize),
    Bias(usize, usize),
}

fn nudge(params: &Params<Real>, target: ParamTarget, h: Real) -> Params<Real> {
    let mut out = params.clone();
    match target {
        ParamTarget::Weight(layer, r, c) => out.layers[layer].w[(r, c)] += h,
        ParamTarget::Bias(layer, r) => out.layers[layer].b[r] += h,
    }
    out
}

/// Central finite difference of the term through the whole pipeline with
/// respect to one parameter entry.
fn central_difference(
    params: &Params<Real>,
    inputs: &Array2<Real>,
    spec: &RegularizerSpec,
    sampler: &SamplerConfig,
    target: ParamTarget,
    h: Real,
) -> Real {
    let eval = |p: &Params<Real>| -> Real {
        let (_, _, capture) = forward(p, inputs, Mode::Eval, 0).expect("forward");
        let selected = select_neurons(&capture, sampler).expect("selection");
        regularizer_value(spec, &capture, &selected, p).expect("value")
    };
    (eval(&nudge(params, target, h)) - eval(&nudge(params, target, -h))) / (2.0 * h)
}

/// Finite-difference gradient of the term over every parameter.
pub fn finite_difference_gradient(
    params: &Params<Real>,
    inputs: &Array2<Real>,
    spec: &RegularizerSpec,
    sampler: &SamplerConfig,
    h: Real,
) -> Gradients<Real> {
    let mut out = Gradients::zeros_like(params);
    for layer in 0..params.layers.len() {
        let (rows, cols) = params.layers[layer].w.dim();
        for r in 0..rows {
            for c in 0..cols {
                out.layers[layer].0[(r, c)] = central_difference(
                    params,
                    inputs,
                    spec,
                    sampler,
                    ParamTarget::Weight(layer, r, c),
                    h,
                );
            }
            out.layers[layer].1[r] =
                central_difference(params, inputs, spec, sampler, ParamTarget::Bias(layer, r), h);
        }
    }
    out
}

/// Tests whether a sampled configuration sits safely inside the
/// differentiable locus. The terms are smooth only where no selected neuron
/// has (near) zero variance, no pair is (near) perfectly or (near) zero
/// correlated, no pre-activation sits on the ReLU kink, and the
/// dissimilarities are pairwise separated. ReLU nets hit those loci with
/// non-negligible probability -- a dead unit pins a whole fan of edges to an
/// exact tie at `d = 1`, and a zero-initialized bias puts the kink exactly
/// under the finite-difference probe whenever a sample deadens a whole
/// layer -- so degenerate draws are redrawn, which is exactly the
/// "non-degenerate random configuration" sampling the gradient contract is
/// stated for.
fn is_degenerate(params: &Params<Real>, inputs: &Array2<Real>, acts: &Array2<Real>) -> bool {
    // Pre-activations near the ReLU kink: walk the affine stack directly.
    let mut x = inputs.clone();
    for (idx, layer) in params.layers.iter().enumerate() {
        let mut z = layer.w.dot(&x);
        for mut col in z.columns_mut() {
            col.zip_mut_with(&layer.b, |v, &b| *v += b);
        }
        if z.iter().any(|v| v.abs() < 1e-5) {
            return true;
        }
        if idx + 1 < params.layers.len() {
            x = z.mapv(|v| v.max(0.0));
        }
    }

    let Ok((corr, diss)) = dissimilarity_matrix(acts) else {
        return true;
    };
    let c = corr.size();
    let mut entries = Vec::with_capacity(c * (c - 1) / 2);
    for i in 0..c {
        for j in (i + 1)..c {
            if !corr.valid[(i, j)] {
                return true; // dead neuron: exact ties at d = 1
            }
            let r = corr.values[(i, j)].abs();
            if r > 1.0 - 1e-4 {
                return true; // near-colinear pair: |corr| kink in reach
            }
            if r < 1e-4 {
                return true; // near-zero pair: the kink of |corr| at zero
            }
            entries.push(diss.values[(i, j)]);
        }
    }
    // Rows with tiny variance make the correlation derivative huge, letting
    // an h-sized parameter step swing dissimilarities across ties.
    for row in acts.rows() {
        let n = row.len() as Real;
        let mean = row.sum() / n;
        let sum_sq: Real = row.iter().map(|&v| (v - mean) * (v - mean)).sum();
        if sum_sq < 1e-4 {
            return true;
        }
    }
    entries.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    entries.windows(2).any(|w| w[1] - w[0] < 1e-4)
}

/// Worst mismatch between analytic and finite-difference gradients for one
/// configuration; `None` when every entry passes the tolerance.
fn check_one_gradient_config(
    mlp: &MlpSpec,
    kind: RegKind,
    batch: usize,
    seed: u64,
) -> Option<String> {
    let params: Params<Real> = init_params(mlp, seed).expect("init");
    let mut rng = Rng::new(seed ^ 0x47524144, Stream::Probe);
    let inputs = Array2::from_shape_fn((mlp.input_dim, batch), |_| rng.uniform(-1.5, 1.5));
    let spec = RegularizerSpec::new(kind, 1.0);
    let sampler = SamplerConfig::full();

    let (tape, _, capture) = forward(&params, &inputs, Mode::Eval, 0).expect("forward");
    let selected = select_neurons(&capture, &sampler).expect("selection");
    let (_, analytic) =
        regularizer_value_and_grad(&spec, &tape, &capture, &selected, &params).expect("grad");
    let fd = finite_difference_gradient(&params, &inputs, &spec, &sampler, 1e-6);

    for ((aw, ab), (fw, fb)) in analytic.layers.iter().zip(&fd.layers) {
        for (a, f) in aw.iter().chain(ab.iter()).zip(fw.iter().chain(fb.iter())) {
            let err = (a - f).abs();
            let tol = (1e-4 * a.abs().max(f.abs())).max(1e-8);
            if err > tol {
                return Some(format!(
                    "{kind:?} seed {seed}: analytic {a} vs fd {f} (err {err:.3e})"
                ));
            }
        }
    }
    None
}

/// Gradient checks across 50 random non-degenerate configurations per the
/// documented protocol: two architectures, batches of 8 to 16, all three
/// activation-based terms, central differences at `h = 1e-6`, relative
/// tolerance 1e-4 with an absolute floor of 1e-8.
pub fn gradient_suite() -> SuiteReport {
    const NAME: &str = "gradient-checks";
    let arch_a = MlpSpec::new(2, vec![4], 3);
    let arch_b = MlpSpec::new(3, vec![5, 5], 2);
    let kinds = [RegKind::T1, RegKind::T2, RegKind::C];
    let mut rng = Rng::new(0x4744_4330, Stream::Probe);
    let mut checked = 0;
    let mut redrawn = 0;
    for case in 0..50u64 {
        let mlp = if case % 2 == 0 { &arch_a } else { &arch_b };
        let kind = kinds[case as usize % kinds.len()];
        let mut attempts = 0;
        let (batch, seed) = loop {
            let batch = 8 + rng.below(9);
            let seed = rng.next_u64();
            let params: Params<Real> = init_params(mlp, seed).expect("init");
            let mut input_rng = Rng::new(seed ^ 0x47524144, Stream::Probe);
            let inputs = Array2::from_shape_fn((mlp.input_dim, batch), |_| {
                input_rng.uniform(-1.5, 1.5)
            });
            let (_, _, capture) = forward(&params, &inputs, Mode::Eval, 0).expect("forward");
            let selected =
                select_neurons(&capture, &SamplerConfig::full()).expect("selection");
            let acts = crate::topology::selected_activations(&capture, &selected);
            if !is_degenerate(&params, &inputs, &acts) {
                break (batch, seed);
            }
            redrawn += 1;
            attempts += 1;
            if attempts > 500 {
                return SuiteReport::fail(
                    NAME,
                    format!("case {case}: no non-degenerate configuration in 500 draws"),
                );
            }
        };
        if let Some(problem) = check_one_gradient_config(mlp, kind, batch, seed) {
            return SuiteReport::fail(NAME, format!("case {case}: {problem}"));
        }
        checked += 1;
    }
    SuiteReport::pass(
        NAME,
        format!("{checked} configurations x every parameter within 1e-4 ({redrawn} degenerate draws skipped)"),
    )
}

/// Reproduces the bundled benchmark statistics: average ranks, the omnibus
/// p-value, the published Nemenyi entries, and the critical-difference
/// groups.
pub fn stats_fixture_suite() -> SuiteReport {
    const NAME: &str = "stats-fixtures";
    let table = match AccuracyTable::from_csv_str(BENCHMARK_ACCURACIES_CSV, "bundled fixture") {
        Ok(t) => t,
        Err(e) => return SuiteReport::fail(NAME, format!("fixture parse: {e}")),
    };
    let ranks = match rank_table(&table) {
        Ok(r) => r,
        Err(e) => return SuiteReport::fail(NAME, format!("rank table: {e}")),
    };
    let expected_ranks = [
        ("t2", 1.727),
        ("t1", 2.182),
        ("l2", 3.727),
        ("c", 4.091),
        ("l1", 4.545),
        ("none", 4.727),
    ];
    let idx = |m: &str| ranks.methods.iter().position(|x| x == m).unwrap();
    for (method, want) in expected_ranks {
        let got = ranks.average[idx(method)];
        if (got - want).abs() > 0.001 {
            return SuiteReport::fail(
                NAME,
                format!("average rank of {method}: {got}, expected {want} +- 0.001"),
            );
        }
    }

    let fr = friedman(&ranks);
    if !(0.9e-5..=1.2e-5).contains(&fr.p_f) {
        return SuiteReport::fail(
            NAME,
            format!("F-form omnibus p = {:.4e}, expected within [0.9e-5, 1.2e-5]", fr.p_f),
        );
    }

    let p = nemenyi(&ranks);
    for (a, b, want) in [
        ("none", "t1", 0.018),
        ("none", "t2", 0.002),
        ("t2", "c", 0.036),
        ("t2", "l1", 0.006),
    ] {
        let got = p[(idx(a), idx(b))];
        if (got - want).abs() > 0.005 {
            return SuiteReport::fail(
                NAME,
                format!("nemenyi p({a}, {b}) = {got:.4}, expected {want} +- 0.005"),
            );
        }
    }
    for (a, b) in [
        ("none", "l1"),
        ("none", "c"),
        ("t1", "t2"),
        ("l1", "l2"),
        ("l1", "c"),
        ("l2", "c"),
    ] {
        let got = p[(idx(a), idx(b))];
        if got < 0.9 {
            return SuiteReport::fail(
                NAME,
                format!("nemenyi p({a}, {b}) = {got:.4}, published as capped 0.900"),
            );
        }
    }

    let cd = cd_diagram_data(&ranks, 0.05);
    let order: Vec<&str> = cd.entries.iter().map(|e| e.method.as_str()).collect();
    let named: Vec<Vec<&str>> = cd
        .groups
        .iter()
        .map(|g| g.iter().map(|&i| order[i]).collect())
        .collect();
    let expected_groups = [
        vec!["t2", "t1", "l2"],
        vec!["t1", "l2", "c"],
        vec!["l2", "c", "l1", "none"],
    ];
    if named != expected_groups {
        return SuiteReport::fail(NAME, format!("cd groups {named:?} != {expected_groups:?}"));
    }

    SuiteReport::pass(
        NAME,
        format!(
            "ranks, omnibus p = {:.3e}, 4 pairwise entries, 3 cd groups",
            fr.p_f
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for report in run_all() {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }
}
