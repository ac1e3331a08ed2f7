//! Synthetic Gaussian-blob datasets for desk-scale runs and tests.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::Real;

use super::dataset::{Dataset, Portion};

/// Blob layout: one unit-covariance Gaussian per class.
///
/// Centers sit on a scaled simplex (`separation`-spaced standard-basis
/// vertices) when the class count fits the dimension, otherwise evenly on a
/// circle in the first two dimensions with adjacent centers `separation`
/// apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    pub seed: u64,
    /// Distance between (adjacent) class centers, in units of the noise
    /// standard deviation.
    pub separation: f64,
}

impl SynthSpec {
    pub fn new(classes: usize, per_class: usize, dims: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            dims,
            seed,
            separation: 6.0,
        }
    }
}

fn centers(spec: &SynthSpec) -> Vec<Vec<Real>> {
    let k = spec.classes;
    let d = spec.dims;
    if k == 1 {
        return vec![vec![0.0; d]];
    }
    if k <= d {
        // Regular simplex: scaled standard-basis vertices are pairwise
        // sqrt(2)*s apart.
        let s = spec.separation / std::f64::consts::SQRT_2;
        (0..k)
            .map(|i| {
                let mut c = vec![0.0; d];
                c[i] = s;
                c
            })
            .collect()
    } else if d >= 2 {
        let radius = spec.separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
        (0..k)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                let mut c = vec![0.0; d];
                c[0] = radius * angle.cos();
                c[1] = radius * angle.sin();
                c
            })
            .collect()
    } else {
        (0..k).map(|i| vec![spec.separation * i as f64]).collect()
    }
}

/// Deterministic Gaussian blobs with an internal 80/20 train/test split
/// (per class, preserving balance).
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dims == 0 {
        return Err(Error::InvalidConfig(
            "synthetic dataset needs classes, per_class, dims >= 1".into(),
        ));
    }
    let mut rng = Rng::new(spec.seed, Stream::Synth);
    let mut cache = None;
    let centers = centers(spec);

    let train_per_class = (spec.per_class as f64 * 0.8).floor() as usize;
    let mut train_rows: Vec<Vec<Real>> = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows: Vec<Vec<Real>> = Vec::new();
    let mut test_labels = Vec::new();

    for (label, center) in centers.iter().enumerate() {
        for i in 0..spec.per_class {
            let point: Vec<Real> = center
                .iter()
                .map(|&c| c + rng.next_gaussian(&mut cache))
                .collect();
            if i < train_per_class {
                train_rows.push(point);
                train_labels.push(label);
            } else {
                test_rows.push(point);
                test_labels.push(label);
            }
        }
    }

    let to_matrix = |rows: Vec<Vec<Real>>| {
        let n = rows.len();
        Array2::from_shape_fn((n, spec.dims), |(i, j)| rows[i][j])
    };
    let dataset = Dataset {
        name: format!(
            "synth-{}x{}-d{}-s{}",
            spec.classes, spec.per_class, spec.dims, spec.seed
        ),
        feature_dim: spec.dims,
        class_count: spec.classes,
        train: Portion {
            features: to_matrix(train_rows),
            labels: train_labels,
        },
        test: Portion {
            features: to_matrix(test_rows),
            labels: test_labels,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}
