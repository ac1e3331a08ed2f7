//! In-memory dataset representation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::Real;

/// One designated portion (train or test): examples are rows.
#[derive(Debug, Clone)]
pub struct Portion {
    /// `examples x features`.
    pub features: Array2<Real>,
    pub labels: Vec<usize>,
}

impl Portion {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers the indexed examples as a `features x batch` column matrix
    /// (the layout the forward pass consumes) plus their labels.
    pub fn gather(&self, indices: &[usize]) -> (Array2<Real>, Vec<usize>) {
        let dim = self.features.ncols();
        let mut x = Array2::zeros((dim, indices.len()));
        let mut labels = Vec::with_capacity(indices.len());
        for (col, &i) in indices.iter().enumerate() {
            x.column_mut(col).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        (x, labels)
    }
}

/// A dataset with designated train and test portions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub class_count: usize,
    pub train: Portion,
    pub test: Portion,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for portion in [&self.train, &self.test] {
            if portion.features.ncols() != self.feature_dim {
                return Err(Error::LengthMismatch {
                    left: self.feature_dim,
                    right: portion.features.ncols(),
                });
            }
            if portion.labels.len() != portion.len() {
                return Err(Error::LengthMismatch {
                    left: portion.len(),
                    right: portion.labels.len(),
                });
            }
            if let Some(&bad) = portion.labels.iter().find(|&&l| l >= self.class_count) {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes: self.class_count,
                });
            }
        }
        Ok(())
    }
}
