//! Correlation dissimilarities and zero-dimensional persistence diagrams.
//!
//! For a set of selected neurons, the pairwise correlation dissimilarities
//! `d(u, v) = 1 - |corr(u, v)|` weight the complete graph over the neurons.
//! The multiset of edge weights of a minimum spanning tree of that clique is
//! the zero-dimensional persistence diagram of the finite dissimilarity
//! space (connected components of the filtration merge exactly at MST edge
//! weights). Because the minimizing tree is locally constant in the weights,
//! each diagram value is locally a single matrix entry, which is what makes
//! the diagram differentiable almost everywhere and lets the adjoint of each
//! weight route to its generating edge.
//!
//! Degenerate inputs are guarded rather than rejected: zero-variance neurons
//! get `d = 1` and no gradient, `corr == 0` gets the zero subgradient of
//! `|.|`, and tie-breaking in the MST is lexicographic so the forward pass is
//! deterministic.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nncore::ActivationCapture;
use crate::scalar::Scalar;

/// Variance-product guard: a correlation entry whose centered sum-of-squares
/// product falls below this is flagged invalid.
const VARIANCE_GUARD: f64 = 1e-24;

/// Position of a neuron in the capture: `layer` indexes hidden layers in
/// order with the output layer last, `unit` is the row within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NeuronId {
    pub layer: usize,
    pub unit: usize,
}

/// Sample correlations over selected neurons with a validity mask; entries
/// where either vector has (guarded) zero variance are invalid.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix<T: Scalar> {
    /// `c x c`; invalid entries hold 0.
    pub values: Array2<T>,
    pub valid: Array2<bool>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

/// `d[i][j] = 1 - |corr[i][j]|`, with invalid entries pinned to 1 and an
/// exactly zero diagonal.
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix<T: Scalar> {
    pub values: Array2<T>,
}

impl<T: Scalar> DissimilarityMatrix<T> {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Builds a matrix from raw values (test and oracle hook). The input
    /// must already be symmetric with zero diagonal.
    pub fn from_values(values: Array2<T>) -> Self {
        Self { values }
    }

    /// Smallest off-diagonal entry.
    pub fn min_off_diagonal(&self) -> T {
        let c = self.size();
        let mut min = T::infinity();
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    min = min.min(self.values[(i, j)]);
                }
            }
        }
        min
    }
}

/// One diagram point: an MST edge weight with its generating edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramPoint<T: Scalar> {
    pub weight: T,
    /// `(i, j)` with `i < j`, indices into the selected-neuron set.
    pub edge: (usize, usize),
}

/// Zero-dimensional persistence diagram: the `c - 1` MST edge weights in
/// ascending order, with edge provenance for gradient routing.
#[derive(Debug, Clone)]
pub struct Diagram0<T: Scalar> {
    pub points: Vec<DiagramPoint<T>>,
    pub vertex_count: usize,
}

impl<T: Scalar> Diagram0<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<T> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn total_weight(&self) -> T {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Union-find with path halving and union by rank.
struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Pearson sample correlation of two equal-length vectors.
///
/// Returns `None` when either centered vector is (guarded) zero, in which
/// case the correlation is undefined.
pub fn sample_correlation<T: Scalar>(x: &[T], y: &[T]) -> Result<Option<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: x.len(),
        });
    }
    let n = T::count(x.len());
    let mean_x = x.iter().cloned().sum::<T>() / n;
    let mean_y = y.iter().cloned().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx * syy < T::cst(VARIANCE_GUARD) {
        return Ok(None);
    }
    let corr = sxy / (sxx * syy).sqrt();
    Ok(Some(corr.max(-T::one()).min(T::one())))
}

/// Gathers the rows of the capture addressed by `ids` into a `c x batch`
/// matrix, in selection order.
pub fn selected_activations<T: Scalar>(
    capture: &ActivationCapture<T>,
    ids: &[NeuronId],
) -> Array2<T> {
    let batch = capture.batch();
    let mut out = Array2::zeros((ids.len(), batch));
    for (row, id) in ids.iter().enumerate() {
        out.row_mut(row).assign(&capture.acts(id.layer).row(id.unit));
    }
    out
}

/// Row statistics shared by the correlation forward and adjoint passes.
struct RowStats<T: Scalar> {
    centered: Array2<T>,
    sum_sq: Vec<T>,
}

fn row_stats<T: Scalar>(selected: &Array2<T>) -> RowStats<T> {
    let (c, n) = selected.dim();
    let nt = T::count(n);
    let mut centered = selected.clone();
    let mut sum_sq = Vec::with_capacity(c);
    for mut row in centered.rows_mut() {
        let mean = row.iter().cloned().sum::<T>() / nt;
        row.mapv_inplace(|v| v - mean);
        sum_sq.push(row.iter().map(|&v| v * v).sum());
    }
    RowStats { centered, sum_sq }
}

/// Correlations and dissimilarities of a `c x batch` selected-activation
/// matrix. Zero-variance neurons produce invalid entries with `d = 1`.
pub fn dissimilarity_matrix<T: Scalar>(
    selected: &Array2<T>,
) -> Result<(CorrelationMatrix<T>, DissimilarityMatrix<T>)> {
    let (c, n) = selected.dim();
    if c < 2 {
        return Err(Error::TooFewNeurons { min: 2, got: c });
    }
    if n < 2 {
        return Err(Error::BatchTooSmall { min: 2, got: n });
    }

    let stats = row_stats(selected);
    let guard = T::cst(VARIANCE_GUARD);
    let mut corr = Array2::zeros((c, c));
    let mut valid = Array2::from_elem((c, c), false);
    let mut d = Array2::zeros((c, c));
    for i in 0..c {
        let var_ok = stats.sum_sq[i] * stats.sum_sq[i] >= guard;
        valid[(i, i)] = var_ok;
        corr[(i, i)] = if var_ok { T::one() } else { T::zero() };
        // d(x, x) = 0 regardless of validity.
        for j in (i + 1)..c {
            let denom = stats.sum_sq[i] * stats.sum_sq[j];
            if denom < guard {
                d[(i, j)] = T::one();
                d[(j, i)] = T::one();
                continue;
            }
            let sxy = stats.centered.row(i).dot(&stats.centered.row(j));
            let r = (sxy / denom.sqrt()).max(-T::one()).min(T::one());
            corr[(i, j)] = r;
            corr[(j, i)] = r;
            valid[(i, j)] = true;
            valid[(j, i)] = true;
            let dist = T::one() - r.abs();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    Ok((
        CorrelationMatrix {
            values: corr,
            valid,
        },
        DissimilarityMatrix { values: d },
    ))
}

/// Kruskal MST of the dissimilarity clique; ties broken by lexicographic
/// `(i, j)` edge order. Points come out sorted ascending by weight.
pub fn mst_diagram<T: Scalar>(d: &DissimilarityMatrix<T>) -> Result<Diagram0<T>> {
    let c = d.size();
    if c < 2 {
        return Err(Error::TooFewNeurons { min: 2, got: c });
    }
    let mut edges = Vec::with_capacity(c * (c - 1) / 2);
    for i in 0..c {
        for j in (i + 1)..c {
            edges.push((d.values[(i, j)], i, j));
        }
    }
    edges.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("dissimilarities are ordered")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut uf = UnionFind::new(c);
    let mut points = Vec::with_capacity(c - 1);
    for (w, i, j) in edges {
        if uf.union(i, j) {
            points.push(DiagramPoint {
                weight: w,
                edge: (i, j),
            });
            if points.len() == c - 1 {
                break;
            }
        }
    }
    Ok(Diagram0 {
        points,
        vertex_count: c,
    })
}

/// Exhaustive minimum spanning tree over all edge subsets of size `c - 1`.
/// Independent oracle for [`mst_diagram`]; limited to `c <= 8`.
pub fn diagram_brute_force<T: Scalar>(d: &DissimilarityMatrix<T>) -> Result<Diagram0<T>> {
    let c = d.size();
    if c < 2 {
        return Err(Error::TooFewNeurons { min: 2, got: c });
    }
    if c > 8 {
        return Err(Error::TooManyVertices { max: 8, got: c });
    }
    let mut edges = Vec::new();
    for i in 0..c {
        for j in (i + 1)..c {
            edges.push((i, j));
        }
    }

    use itertools::Itertools;
    let mut best: Option<(T, Vec<usize>)> = None;
    for subset in (0..edges.len()).combinations(c - 1) {
        let mut uf = UnionFind::new(c);
        let mut connected_pairs = 0;
        let mut total = T::zero();
        for &e in &subset {
            let (i, j) = edges[e];
            if uf.union(i, j) {
                connected_pairs += 1;
            }
            total += d.values[(i, j)];
        }
        // c - 1 edges and no cycle => spanning tree.
        if connected_pairs == c - 1 && best.as_ref().is_none_or(|(w, _)| total < *w) {
            best = Some((total, subset));
        }
    }
    let (_, subset) = best.expect("complete graph always has a spanning tree");
    let mut points: Vec<DiagramPoint<T>> = subset
        .into_iter()
        .map(|e| DiagramPoint {
            weight: d.values[edges[e]],
            edge: edges[e],
        })
        .collect();
    points.sort_by(|a, b| {
        a.weight
            .partial_cmp(&b.weight)
            .expect("weights are ordered")
            .then(a.edge.cmp(&b.edge))
    });
    Ok(Diagram0 {
        points,
        vertex_count: c,
    })
}

/// Routes diagram-weight adjoints back to the dissimilarity matrix.
///
/// The minimizing tree is locally constant, so each weight is locally the
/// matrix entry of its generating edge: entry `(i, j)` and `(j, i)` each
/// receive half of the weight's adjoint (the symmetric pair sums to the full
/// adjoint), everything else is zero.
pub fn diagram_adjoint<T: Scalar>(
    diagram: &Diagram0<T>,
    weight_adjoints: &[T],
) -> Result<Array2<T>> {
    if weight_adjoints.len() != diagram.len() {
        return Err(Error::AdjointLengthMismatch {
            expected: diagram.len(),
            got: weight_adjoints.len(),
        });
    }
    let c = diagram.vertex_count;
    let mut adj = Array2::zeros((c, c));
    let half = T::cst(0.5);
    for (point, &a) in diagram.points.iter().zip(weight_adjoints) {
        let (i, j) = point.edge;
        adj[(i, j)] += a * half;
        adj[(j, i)] += a * half;
    }
    Ok(adj)
}

/// Pushes adjoints on dissimilarity entries back to the selected activations
/// through `d = 1 - |corr|` and the sample-correlation formula.
///
/// Entries on the non-differentiable loci (invalid pairs, `corr == 0`) are
/// guarded to zero gradient. The symmetric entries `(i, j)` and `(j, i)` are
/// summed to form the pair's total adjoint.
pub fn correlation_adjoint<T: Scalar>(
    d_adjoints: &Array2<T>,
    corr: &CorrelationMatrix<T>,
    selected: &Array2<T>,
) -> Array2<T> {
    let c = corr.size();
    let mut corr_adj = Array2::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let upstream = d_adjoints[(i, j)] + d_adjoints[(j, i)];
            // d = 1 - |corr|: dd/dcorr = -sign(corr), zero subgradient at 0.
            corr_adj[(i, j)] = -sign(corr.values[(i, j)]) * upstream;
        }
    }
    correlation_entries_adjoint(&corr_adj, corr, selected)
}

/// Pushes adjoints sitting directly on correlation entries back to the
/// selected activations. For each pair `i < j`, `corr_adj[(i, j)] +
/// corr_adj[(j, i)]` is the total adjoint of that pair's correlation.
pub fn correlation_entries_adjoint<T: Scalar>(
    corr_adj: &Array2<T>,
    corr: &CorrelationMatrix<T>,
    selected: &Array2<T>,
) -> Array2<T> {
    let (c, n) = selected.dim();
    let stats = row_stats(selected);
    let mut out = Array2::zeros((c, n));
    for i in 0..c {
        for j in (i + 1)..c {
            let a = corr_adj[(i, j)] + corr_adj[(j, i)];
            if a == T::zero() || !corr.valid[(i, j)] {
                continue;
            }
            let r = corr.values[(i, j)];
            let sxx = stats.sum_sq[i];
            let syy = stats.sum_sq[j];
            let denom = (sxx * syy).sqrt();
            // dcorr/dx_k = yhat_k / sqrt(Sxx Syy) - corr * xhat_k / Sxx
            // and symmetrically for y; centering terms cancel.
            for k in 0..n {
                let xh = stats.centered[(i, k)];
                let yh = stats.centered[(j, k)];
                out[(i, k)] += a * (yh / denom - r * xh / sxx);
                out[(j, k)] += a * (xh / denom - r * yh / syy);
            }
        }
    }
    out
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Rng, Stream};
    use ndarray::array;
    use proptest::prelude::*;

    fn random_dissimilarity(c: usize, rng: &mut Rng) -> DissimilarityMatrix<f64> {
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

    #[test]
    fn correlation_of_exact_linear_relation_is_one() {
        let r = sample_correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r, Some(1.0));
        let r = sample_correlation(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap();
        assert_eq!(r, Some(-1.0));
    }

    #[test]
    fn orthogonal_centered_vectors_have_zero_correlation() {
        let r = sample_correlation(&[1.0, 0.0, -1.0], &[1.0, -2.0, 1.0]).unwrap();
        assert_eq!(r, Some(0.0));
    }

    #[test]
    fn degenerate_correlations_are_flagged() {
        assert_eq!(
            sample_correlation(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(),
            None
        );
        assert!(sample_correlation(&[1.0], &[2.0]).is_err());
        assert!(sample_correlation(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn dissimilarity_examples() {
        // Rows: perfectly correlated pair, then a constant (dead) row.
        let acts = array![
            [1.0, 2.0, 3.0, 4.0],
            [2.0, 4.0, 6.0, 8.0],
            [5.0, 5.0, 5.0, 5.0]
        ];
        let (corr, d) = dissimilarity_matrix(&acts).unwrap();
        assert_eq!(d.values[(0, 1)], 0.0);
        assert_eq!(d.values[(0, 2)], 1.0);
        assert_eq!(d.values[(2, 2)], 0.0);
        assert!(!corr.valid[(0, 2)]);
        assert!(corr.valid[(0, 1)]);
        // corr = -0.25 -> d = 0.75: y = -x + sqrt(15) z with z orthogonal to
        // x gives corr(x, y) = -1/sqrt(1 + 15).
        let s = 15.0_f64.sqrt();
        let x = [1.0_f64, 0.0, -1.0, 0.0];
        let y = [-1.0, s, 1.0, -s];
        let r = sample_correlation(&x, &y).unwrap().unwrap();
        assert!((r + 0.25).abs() < 1e-12);
        assert!(((1.0 - r.abs()) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn triangle_mst_drops_largest_edge() {
        let d = DissimilarityMatrix::from_values(array![
            [0.0, 0.1, 0.5],
            [0.1, 0.0, 0.3],
            [0.5, 0.3, 0.0]
        ]);
        let diag = mst_diagram(&d).unwrap();
        assert_eq!(diag.weights(), vec![0.1, 0.3]);
        assert_eq!(diag.points[0].edge, (0, 1));
        assert_eq!(diag.points[1].edge, (1, 2));
    }

    #[test]
    fn four_vertex_clique_matches_brute_force() {
        let d = DissimilarityMatrix::from_values(array![
            [0.0, 0.2, 0.9, 0.8],
            [0.2, 0.0, 0.4, 0.7],
            [0.9, 0.4, 0.0, 0.3],
            [0.8, 0.7, 0.3, 0.0]
        ]);
        let fast = mst_diagram(&d).unwrap();
        let slow = diagram_brute_force(&d).unwrap();
        assert_eq!(fast.weights(), vec![0.2, 0.3, 0.4]);
        assert_eq!(slow.weights(), vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn two_vertex_diagram_is_the_single_edge() {
        let d = DissimilarityMatrix::from_values(array![[0.0, 0.6], [0.6, 0.0]]);
        assert_eq!(diagram_brute_force(&d).unwrap().weights(), vec![0.6]);
        assert_eq!(mst_diagram(&d).unwrap().weights(), vec![0.6]);
    }

    #[test]
    fn brute_force_rejects_large_cliques() {
        let mut rng = Rng::new(1, Stream::Probe);
        let d = random_dissimilarity(9, &mut rng);
        assert!(matches!(
            diagram_brute_force(&d),
            Err(Error::TooManyVertices { got: 9, .. })
        ));
    }

    #[test]
    fn cut_property_minimum_edge_enters_diagram() {
        let mut rng = Rng::new(7, Stream::Probe);
        for _ in 0..50 {
            let c = 3 + rng.below(10);
            let d = random_dissimilarity(c, &mut rng);
            let diag = mst_diagram(&d).unwrap();
            assert_eq!(diag.len(), c - 1);
            assert_eq!(diag.weights()[0], d.min_off_diagonal());
        }
    }

    #[test]
    fn tied_edges_break_lexicographically() {
        let d = DissimilarityMatrix::from_values(array![
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0]
        ]);
        let diag = mst_diagram(&d).unwrap();
        assert_eq!(
            diag.points.iter().map(|p| p.edge).collect::<Vec<_>>(),
            vec![(0, 1), (0, 2)]
        );
    }

    #[test]
    fn diagram_adjoint_routes_halves_to_symmetric_entries() {
        let d = DissimilarityMatrix::from_values(array![
            [0.0, 0.2, 0.9, 0.8],
            [0.2, 0.0, 0.4, 0.7],
            [0.9, 0.4, 0.0, 0.3],
            [0.8, 0.7, 0.3, 0.0]
        ]);
        let diag = mst_diagram(&d).unwrap();
        let adj = diagram_adjoint(&diag, &[1.0, 1.0, 1.0]).unwrap();
        let nonzero = adj.iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 6);
        for p in &diag.points {
            assert_eq!(adj[(p.edge.0, p.edge.1)], 0.5);
            assert_eq!(adj[(p.edge.1, p.edge.0)], 0.5);
        }

        let zeros = diagram_adjoint(&diag, &[0.0, 0.0, 0.0]).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
        assert!(diagram_adjoint(&diag, &[1.0]).is_err());
    }

    #[test]
    fn perturbing_non_mst_edges_leaves_total_weight_unchanged() {
        let base = array![
            [0.0, 0.2, 0.9, 0.8],
            [0.2, 0.0, 0.4, 0.7],
            [0.9, 0.4, 0.0, 0.3],
            [0.8, 0.7, 0.3, 0.0]
        ];
        let total = |values: Array2<f64>| {
            mst_diagram(&DissimilarityMatrix::from_values(values))
                .unwrap()
                .total_weight()
        };
        let t0 = total(base.clone());
        // Edge (0, 2) = 0.9 is not in the tree; its one-sided derivative is 0.
        for delta in [-1e-6, 1e-6] {
            let mut values = base.clone();
            values[(0, 2)] += delta;
            values[(2, 0)] += delta;
            assert_eq!(total(values), t0);
        }
    }

    #[test]
    fn activation_rescaling_leaves_dissimilarities_unchanged() {
        let mut rng = Rng::new(21, Stream::Probe);
        let acts = Array2::from_shape_fn((5, 16), |_| rng.uniform(-1.0, 1.0));
        let (_, d0) = dissimilarity_matrix(&acts).unwrap();
        let mut scaled = acts.clone();
        scaled.row_mut(2).mapv_inplace(|v| 3.5 * v);
        let (_, d1) = dissimilarity_matrix(&scaled).unwrap();
        for (a, b) in d0.values.iter().zip(d1.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Finite-difference check of the full chain activations -> correlations
    /// -> dissimilarities -> diagram -> total persistence.
    #[test]
    fn activation_adjoints_match_finite_differences() {
        let mut rng = Rng::new(33, Stream::Probe);
        let acts = Array2::from_shape_fn((5, 16), |_| rng.uniform(-1.0, 1.0));

        let value = |a: &Array2<f64>| {
            let (_, d) = dissimilarity_matrix(a).unwrap();
            // Negated total persistence: adjoint of each weight is -1.
            -mst_diagram(&d).unwrap().total_weight()
        };

        let (corr, d) = dissimilarity_matrix(&acts).unwrap();
        let diag = mst_diagram(&d).unwrap();
        let w_adj = vec![-1.0; diag.len()];
        let d_adj = diagram_adjoint(&diag, &w_adj).unwrap();
        let analytic = correlation_adjoint(&d_adj, &corr, &acts);

        let h = 1e-6;
        for i in 0..acts.nrows() {
            for k in 0..acts.ncols() {
                let mut plus = acts.clone();
                plus[(i, k)] += h;
                let mut minus = acts.clone();
                minus[(i, k)] -= h;
                let fd = (value(&plus) - value(&minus)) / (2.0 * h);
                let an = analytic[(i, k)];
                let err = (an - fd).abs();
                assert!(
                    err <= 1e-5 * an.abs().max(fd.abs()).max(1e-3),
                    "({i},{k}): analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn zero_upstream_adjoints_give_zero_activation_adjoints() {
        let mut rng = Rng::new(5, Stream::Probe);
        let acts = Array2::from_shape_fn((4, 8), |_| rng.uniform(-1.0, 1.0));
        let (corr, _) = dissimilarity_matrix(&acts).unwrap();
        let zeros = Array2::zeros((4, 4));
        let out = correlation_adjoint(&zeros, &corr, &acts);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_neurons_receive_no_gradient() {
        let mut rng = Rng::new(6, Stream::Probe);
        let mut acts = Array2::from_shape_fn((4, 8), |_| rng.uniform(-1.0, 1.0));
        acts.row_mut(1).fill(0.0);
        let (corr, d) = dissimilarity_matrix(&acts).unwrap();
        let diag = mst_diagram(&d).unwrap();
        let d_adj = diagram_adjoint(&diag, &vec![-1.0; diag.len()]).unwrap();
        let out = correlation_adjoint(&d_adj, &corr, &acts);
        assert!(out.row(1).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn prop_mst_matches_brute_force(seed in 0u64..500) {
            let mut rng = Rng::new(seed, Stream::Probe);
            let c = 3 + rng.below(5); // 3..=7
            let d = random_dissimilarity(c, &mut rng);
            let fast = mst_diagram(&d).unwrap();
            let slow = diagram_brute_force(&d).unwrap();
            prop_assert_eq!(fast.weights(), slow.weights());
        }

        #[test]
        fn prop_permutation_leaves_sorted_weights_unchanged(seed in 0u64..200) {
            let mut rng = Rng::new(seed, Stream::Probe);
            let c = 3 + rng.below(5);
            let acts = Array2::from_shape_fn((c, 12), |_| rng.uniform(-1.0, 1.0));
            let mut perm: Vec<usize> = (0..c).collect();
            rng.shuffle(&mut perm);
            let permuted = {
                let mut m = Array2::zeros((c, 12));
                for (to, &from) in perm.iter().enumerate() {
                    m.row_mut(to).assign(&acts.row(from));
                }
                m
            };
            let (_, d0) = dissimilarity_matrix(&acts).unwrap();
            let (_, d1) = dissimilarity_matrix(&permuted).unwrap();
            let mut w0 = mst_diagram(&d0).unwrap().weights();
            let mut w1 = mst_diagram(&d1).unwrap().weights();
            w0.sort_by(|a, b| a.partial_cmp(b).unwrap());
            w1.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(w0.len(), w1.len());
            for (a, b) in w0.iter().zip(&w1) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_affine_rescaling_is_invariant(seed in 0u64..200, a in 0.01f64..10.0, b in -5.0f64..5.0) {
            let mut rng = Rng::new(seed, Stream::Probe);
            let x: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let xs: Vec<f64> = x.iter().map(|&v| a * v + b).collect();
            let r0 = sample_correlation(&x, &y).unwrap().unwrap();
            let r1 = sample_correlation(&xs, &y).unwrap().unwrap();
            prop_assert!((r0.abs() - r1.abs()).abs() < 1e-12);
        }

        #[test]
        fn prop_mst_total_weight_is_minimal_among_random_trees(seed in 0u64..50) {
            let mut rng = Rng::new(seed, Stream::Probe);
            let c = 4 + rng.below(8);
            let d = random_dissimilarity(c, &mut rng);
            let diag = mst_diagram(&d).unwrap();
            let mst_total = diag.total_weight();
            for _ in 0..100 {
                // Random spanning tree: random vertex order, attach each new
                // vertex to a random earlier one.
                let mut order: Vec<usize> = (0..c).collect();
                rng.shuffle(&mut order);
                let mut total = 0.0;
                for k in 1..c {
                    let attach = order[rng.below(k)];
                    total += d.values[(order[k], attach)];
                }
                prop_assert!(mst_total <= total + 1e-12);
            }
        }

        #[test]
        fn prop_raising_minimum_edge_never_lowers_total_persistence(seed in 0u64..100) {
            let mut rng = Rng::new(seed, Stream::Probe);
            let c = 3 + rng.below(5);
            let d = random_dissimilarity(c, &mut rng);
            let base = mst_diagram(&d).unwrap().total_weight();
            // Strictly decreasing the top correlation = raising the smallest
            // dissimilarity entry.
            let mut bumped = d.values.clone();
            let mut argmin = (0, 1);
            for i in 0..c {
                for j in (i + 1)..c {
                    if bumped[(i, j)] < bumped[argmin] {
                        argmin = (i, j);
                    }
                }
            }
            let delta = 1e-4;
            bumped[argmin] += delta;
            bumped[(argmin.1, argmin.0)] += delta;
            let after = mst_diagram(&DissimilarityMatrix::from_values(bumped))
                .unwrap()
                .total_weight();
            prop_assert!(after + 1e-12 >= base);
        }
    }
}
