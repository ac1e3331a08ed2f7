//! Nonparametric comparison of training procedures.
//!
//! Methods are ranked per network (rank 1 = best accuracy, ties averaged),
//! the Friedman test decides whether the procedures differ at all, and the
//! Nemenyi post-hoc assigns a p-value to every method pair from the
//! studentized-range distribution of average-rank differences. The
//! critical-difference data groups methods whose pairwise p-values exceed
//! the significance level.

pub mod range;

use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::Real;

pub use range::{range_cdf, range_survival};

/// `k` methods by `N` networks accuracy matrix.
#[derive(Debug, Clone)]
pub struct AccuracyTable {
    pub methods: Vec<String>,
    pub networks: Vec<String>,
    /// `k x N`.
    pub accuracies: Array2<Real>,
}

impl AccuracyTable {
    /// Parses the CSV interface: optional `#` comment lines, a header row of
    /// network ids, then one row per method (label first).
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let malformed = |detail: String| Error::MalformedTable {
            path: origin.to_string(),
            detail,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| malformed(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.len() < 3 {
            return Err(malformed("need a header row and at least two methods".into()));
        }
        let networks: Vec<String> = rows[0][1..].to_vec();
        if networks.len() < 2 {
            return Err(malformed("need at least two networks".into()));
        }
        let k = rows.len() - 1;
        let mut methods = Vec::with_capacity(k);
        let mut accuracies = Array2::zeros((k, networks.len()));
        for (i, row) in rows[1..].iter().enumerate() {
            if row.len() != networks.len() + 1 {
                return Err(malformed(format!(
                    "method row `{}` has {} values, expected {}",
                    row.first().map(String::as_str).unwrap_or(""),
                    row.len() - 1,
                    networks.len()
                )));
            }
            methods.push(row[0].clone());
            for (j, cell) in row[1..].iter().enumerate() {
                let value: Real = cell
                    .parse()
                    .map_err(|_| malformed(format!("bad accuracy `{cell}`")))?;
                if !value.is_finite() {
                    return Err(malformed(format!("non-finite accuracy `{cell}`")));
                }
                accuracies[(i, j)] = value;
            }
        }
        Ok(Self {
            methods,
            networks,
            accuracies,
        })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text, &path.display().to_string())
    }
}

/// Per-network ranks (rank 1 = highest accuracy, ties averaged) and the
/// resulting average rank per method.
#[derive(Debug, Clone)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub networks: Vec<String>,
    /// `k x N`.
    pub ranks: Array2<Real>,
    pub average: Vec<Real>,
}

/// Ranks every network column by descending accuracy with average ranks on
/// ties.
pub fn rank_table(acc: &AccuracyTable) -> Result<RankTable> {
    let (k, n) = acc.accuracies.dim();
    if k < 2 || n < 2 {
        return Err(Error::MalformedTable {
            path: "accuracy table".into(),
            detail: format!("need k >= 2 methods and N >= 2 networks, got {k} x {n}"),
        });
    }
    let mut ranks = Array2::zeros((k, n));
    for j in 0..n {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            acc.accuracies[(b, j)]
                .partial_cmp(&acc.accuracies[(a, j)])
                .expect("accuracies are finite")
        });
        let mut pos = 0;
        while pos < k {
            let mut end = pos + 1;
            while end < k
                && acc.accuracies[(order[end], j)] == acc.accuracies[(order[pos], j)]
            {
                end += 1;
            }
            // Positions pos..end hold equal values; ranks are 1-based.
            let avg = (pos + 1 + end) as Real / 2.0;
            for &method in &order[pos..end] {
                ranks[(method, j)] = avg;
            }
            pos = end;
        }
    }
    let average = (0..k)
        .map(|i| ranks.row(i).sum() / n as Real)
        .collect();
    Ok(RankTable {
        methods: acc.methods.clone(),
        networks: acc.networks.clone(),
        ranks,
        average,
    })
}

/// Friedman test in both common forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    /// Chi-squared statistic with `k - 1` degrees of freedom.
    pub chi2: Real,
    pub p_chi2: Real,
    /// The F-distributed refinement of the chi-squared form
    /// (`(N-1) chi2 / (N (k-1) - chi2)`), degrees of freedom
    /// `(k - 1, (k - 1)(N - 1))`.
    pub f_stat: Real,
    pub p_f: Real,
}

/// Both Friedman variants on a rank table.
pub fn friedman(ranks: &RankTable) -> FriedmanResult {
    let (k, n) = ranks.ranks.dim();
    let (kf, nf) = (k as Real, n as Real);
    let rank_sums: Vec<Real> = (0..k).map(|i| ranks.ranks.row(i).sum()).collect();
    let sum_sq: Real = rank_sums.iter().map(|r| r * r).sum();
    let chi2 = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let chi2 = chi2.max(0.0);
    let p_chi2 = ChiSquared::new(kf - 1.0)
        .expect("k >= 2")
        .sf(chi2)
        .clamp(0.0, 1.0);
    let denom = nf * (kf - 1.0) - chi2;
    let (f_stat, p_f) = if denom <= 0.0 {
        (Real::INFINITY, 0.0)
    } else {
        let f = (nf - 1.0) * chi2 / denom;
        let dist = FisherSnedecor::new(kf - 1.0, (kf - 1.0) * (nf - 1.0)).expect("valid dof");
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    FriedmanResult {
        chi2,
        p_chi2,
        f_stat,
        p_f,
    }
}

/// Pairwise Nemenyi p-values: `p[(i, j)] = P(range of k normals >
/// |avg_rank_i - avg_rank_j| / sqrt(k(k+1)/(6N)) * sqrt(2))`. Symmetric with
/// NaN on the diagonal; values are reported uncapped.
pub fn nemenyi(ranks: &RankTable) -> Array2<Real> {
    let (k, n) = ranks.ranks.dim();
    let se = ((k * (k + 1)) as Real / (6.0 * n as Real)).sqrt();
    let mut p = Array2::from_elem((k, k), Real::NAN);
    for i in 0..k {
        for j in (i + 1)..k {
            let q = (ranks.average[i] - ranks.average[j]).abs() / se;
            let value = range_survival(q * std::f64::consts::SQRT_2, k);
            p[(i, j)] = value;
            p[(j, i)] = value;
        }
    }
    p
}

/// One method's position on the critical-difference axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CdEntry {
    pub method: String,
    pub average_rank: Real,
}

/// Critical-difference diagram data: methods ordered by average rank plus
/// the maximal groups of statistically indistinguishable methods.
#[derive(Debug, Clone)]
pub struct CdDiagram {
    pub alpha: Real,
    /// Sorted ascending by average rank.
    pub entries: Vec<CdEntry>,
    /// Each group lists indices into `entries`, contiguous and of size >= 2.
    pub groups: Vec<Vec<usize>>,
}

/// Computes the diagram data at significance level `alpha`: a group is a
/// maximal run of rank-adjacent methods whose pairwise Nemenyi p-values all
/// exceed `alpha`.
pub fn cd_diagram_data(ranks: &RankTable, alpha: Real) -> CdDiagram {
    let k = ranks.methods.len();
    let p = nemenyi(ranks);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        ranks.average[a]
            .partial_cmp(&ranks.average[b])
            .expect("ranks are finite")
    });
    let entries: Vec<CdEntry> = order
        .iter()
        .map(|&i| CdEntry {
            method: ranks.methods[i].clone(),
            average_rank: ranks.average[i],
        })
        .collect();

    let indistinguishable = |a: usize, b: usize| p[(order[a], order[b])] > alpha;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut furthest = 0usize;
    for start in 0..k {
        let mut end = start;
        'extend: while end + 1 < k {
            for inner in start..=end {
                if !indistinguishable(inner, end + 1) {
                    break 'extend;
                }
            }
            end += 1;
        }
        if end > start && (groups.is_empty() || end > furthest) {
            groups.push((start..=end).collect());
            furthest = end;
        }
    }
    CdDiagram {
        alpha,
        entries,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const FIXTURE: &str = include_str!("../../fixtures/benchmark_accuracies.csv");

    fn fixture_ranks() -> RankTable {
        let table = AccuracyTable::from_csv_str(FIXTURE, "fixture").unwrap();
        rank_table(&table).unwrap()
    }

    fn column_table(values: &[Real]) -> AccuracyTable {
        // One informative column plus a constant one (N >= 2).
        let k = values.len();
        let mut accuracies = Array2::zeros((k, 2));
        for (i, &v) in values.iter().enumerate() {
            accuracies[(i, 0)] = v;
            accuracies[(i, 1)] = 0.5;
        }
        AccuracyTable {
            methods: (0..k).map(|i| format!("m{i}")).collect(),
            networks: vec!["a".into(), "b".into()],
            accuracies,
        }
    }

    #[test]
    fn descending_ranks_with_tie_averaging() {
        let ranks = rank_table(&column_table(&[0.9, 0.8, 0.7])).unwrap();
        assert_eq!(
            ranks.ranks.column(0).to_vec(),
            vec![1.0, 2.0, 3.0]
        );
        let ranks = rank_table(&column_table(&[0.9, 0.9, 0.7])).unwrap();
        assert_eq!(ranks.ranks.column(0).to_vec(), vec![1.5, 1.5, 3.0]);
        // Column sums are k(k+1)/2 even with ties.
        assert_eq!(ranks.ranks.column(0).sum(), 6.0);
    }

    #[test]
    fn fixture_average_ranks_match_published_positions() {
        let ranks = fixture_ranks();
        let expected = [
            ("none", 4.727272727272727),
            ("t1", 2.1818181818181817),
            ("t2", 1.7272727272727273),
            ("l1", 4.545454545454546),
            ("l2", 3.727272727272727),
            ("c", 4.090909090909091),
        ];
        for (method, want) in expected {
            let i = ranks.methods.iter().position(|m| m == method).unwrap();
            assert!(
                (ranks.average[i] - want).abs() <= 0.001,
                "{method}: {} vs {want}",
                ranks.average[i]
            );
        }
        // Mean of average ranks is (k + 1) / 2.
        let mean: Real = ranks.average.iter().sum::<Real>() / 6.0;
        assert!((mean - 3.5).abs() < 1e-12);
    }

    #[test]
    fn friedman_on_identical_accuracies_is_null() {
        let mut accuracies = Array2::zeros((4, 3));
        accuracies.fill(0.75);
        let table = AccuracyTable {
            methods: (0..4).map(|i| format!("m{i}")).collect(),
            networks: (0..3).map(|j| format!("n{j}")).collect(),
            accuracies,
        };
        let result = friedman(&rank_table(&table).unwrap());
        assert_eq!(result.chi2, 0.0);
        assert_eq!(result.p_chi2, 1.0);
        assert_eq!(result.p_f, 1.0);
    }

    #[test]
    fn fixture_friedman_reproduces_oracle_values() {
        let result = friedman(&fixture_ranks());
        // Chi-squared form, pinned against an independent statistics
        // implementation on the same fixture.
        assert!((result.chi2 - 24.766233766233796).abs() < 1e-9);
        assert!((result.p_chi2 - 1.5458542495902944e-4).abs() < 1e-12);
        // F form reproduces the published omnibus p-value.
        assert!((result.f_stat - 8.191580756013764).abs() < 1e-9);
        assert!((result.p_f - 1.0439591219932045e-5).abs() < 1e-12);
        assert!((0.9e-5..=1.2e-5).contains(&result.p_f));
    }

    #[test]
    fn fixture_nemenyi_reproduces_published_entries() {
        let ranks = fixture_ranks();
        let p = nemenyi(&ranks);
        let idx = |m: &str| ranks.methods.iter().position(|x| x == m).unwrap();
        let published = [
            ("none", "t1", 0.018),
            ("none", "t2", 0.002),
            ("t2", "c", 0.036),
            ("t2", "l1", 0.006),
        ];
        for (a, b, want) in published {
            let got = p[(idx(a), idx(b))];
            assert!(
                (got - want).abs() <= 0.005,
                "p({a}, {b}) = {got}, published {want}"
            );
        }
        // Entries the published table prints as a capped 0.900.
        for (a, b) in [
            ("none", "l1"),
            ("none", "c"),
            ("t1", "t2"),
            ("l1", "l2"),
            ("l1", "c"),
            ("l2", "c"),
        ] {
            let got = p[(idx(a), idx(b))];
            assert!(got >= 0.9, "p({a}, {b}) = {got}, expected >= 0.9");
        }
        // Symmetry, diagonal NaN.
        for i in 0..6 {
            assert!(p[(i, i)].is_nan());
            for j in 0..6 {
                if i != j {
                    assert_eq!(p[(i, j)], p[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn identical_rank_vectors_give_top_p() {
        let table = column_table(&[0.9, 0.9, 0.1]);
        let ranks = rank_table(&table).unwrap();
        let p = nemenyi(&ranks);
        assert!(p[(0, 1)] >= 0.999);
    }

    #[test]
    fn fixture_cd_groups_match_published_segments() {
        let cd = cd_diagram_data(&fixture_ranks(), 0.05);
        let order: Vec<&str> = cd.entries.iter().map(|e| e.method.as_str()).collect();
        assert_eq!(order, vec!["t2", "t1", "l2", "c", "l1", "none"]);
        let named: Vec<Vec<&str>> = cd
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| order[i]).collect())
            .collect();
        assert_eq!(
            named,
            vec![
                vec!["t2", "t1", "l2"],
                vec!["t1", "l2", "c"],
                vec!["l2", "c", "l1", "none"],
            ]
        );
    }

    #[test]
    fn cd_degenerate_cases() {
        // All methods identical: a single group holding everything.
        let mut accuracies = Array2::zeros((3, 2));
        accuracies.fill(0.6);
        let table = AccuracyTable {
            methods: vec!["a".into(), "b".into(), "c".into()],
            networks: vec!["x".into(), "y".into()],
            accuracies,
        };
        let cd = cd_diagram_data(&rank_table(&table).unwrap(), 0.05);
        assert_eq!(cd.groups, vec![vec![0, 1, 2]]);

        // Two clearly separated methods over many networks: no groups.
        let n = 30;
        let mut accuracies = Array2::zeros((2, n));
        for j in 0..n {
            accuracies[(0, j)] = 0.9;
            accuracies[(1, j)] = 0.1;
        }
        let table = AccuracyTable {
            methods: vec!["good".into(), "bad".into()],
            networks: (0..n).map(|j| format!("n{j}")).collect(),
            accuracies,
        };
        let cd = cd_diagram_data(&rank_table(&table).unwrap(), 0.05);
        assert!(cd.groups.is_empty());
    }

    #[test]
    fn csv_rejects_malformed_tables() {
        assert!(AccuracyTable::from_csv_str("method,a\nonly,0.5\n", "t").is_err());
        assert!(
            AccuracyTable::from_csv_str("method,a,b\nm1,0.5\nm2,0.4,0.3\n", "t").is_err()
        );
        assert!(
            AccuracyTable::from_csv_str("method,a,b\nm1,x,0.2\nm2,0.4,0.3\n", "t").is_err()
        );
        assert!(
            AccuracyTable::from_csv_str("method,a,b\nm1,NaN,0.2\nm2,0.4,0.3\n", "t").is_err()
        );
    }

    proptest! {
        #[test]
        fn prop_column_rank_sums_are_conserved(seed in 0u64..200) {
            let mut rng = crate::rng::Rng::new(seed, crate::rng::Stream::Probe);
            let k = 2 + rng.below(6);
            let n = 2 + rng.below(6);
            // Quantize to force occasional ties.
            let accuracies = Array2::from_shape_fn((k, n), |_| {
                (rng.next_f64() * 10.0).round() / 10.0
            });
            let table = AccuracyTable {
                methods: (0..k).map(|i| format!("m{i}")).collect(),
                networks: (0..n).map(|j| format!("n{j}")).collect(),
                accuracies,
            };
            let ranks = rank_table(&table).unwrap();
            let expected = (k * (k + 1)) as Real / 2.0;
            for j in 0..n {
                prop_assert!((ranks.ranks.column(j).sum() - expected).abs() < 1e-9);
            }
        }

        #[test]
        fn prop_friedman_is_permutation_invariant(seed in 0u64..100) {
            let mut rng = crate::rng::Rng::new(seed, crate::rng::Stream::Probe);
            let k = 3 + rng.below(4);
            let n = 3 + rng.below(5);
            let accuracies = Array2::from_shape_fn((k, n), |_| rng.next_f64());
            let table = AccuracyTable {
                methods: (0..k).map(|i| format!("m{i}")).collect(),
                networks: (0..n).map(|j| format!("n{j}")).collect(),
                accuracies: accuracies.clone(),
            };
            let base = friedman(&rank_table(&table).unwrap());

            let mut method_perm: Vec<usize> = (0..k).collect();
            let mut network_perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut method_perm);
            rng.shuffle(&mut network_perm);
            let permuted = Array2::from_shape_fn((k, n), |(i, j)| {
                accuracies[(method_perm[i], network_perm[j])]
            });
            let table2 = AccuracyTable {
                methods: (0..k).map(|i| format!("p{i}")).collect(),
                networks: (0..n).map(|j| format!("q{j}")).collect(),
                accuracies: permuted,
            };
            let shuffled = friedman(&rank_table(&table2).unwrap());
            prop_assert!((base.chi2 - shuffled.chi2).abs() < 1e-9);
            prop_assert!((base.p_chi2 - shuffled.p_chi2).abs() < 1e-12);
        }

        #[test]
        fn prop_nemenyi_depends_only_on_rank_difference(seed in 0u64..50) {
            let mut rng = crate::rng::Rng::new(seed, crate::rng::Stream::Probe);
            let k = 3 + rng.below(4);
            let n = 3 + rng.below(5);
            let accuracies = Array2::from_shape_fn((k, n), |_| rng.next_f64());
            let table = AccuracyTable {
                methods: (0..k).map(|i| format!("m{i}")).collect(),
                networks: (0..n).map(|j| format!("n{j}")).collect(),
                accuracies,
            };
            let ranks = rank_table(&table).unwrap();
            let p = nemenyi(&ranks);
            let se = ((k * (k + 1)) as Real / (6.0 * n as Real)).sqrt();
            for i in 0..k {
                for j in (i + 1)..k {
                    let q = (ranks.average[i] - ranks.average[j]).abs() / se;
                    let direct = range_survival(q * std::f64::consts::SQRT_2, k);
                    prop_assert!((p[(i, j)] - direct).abs() < 1e-12);
                }
            }
        }
    }
}
