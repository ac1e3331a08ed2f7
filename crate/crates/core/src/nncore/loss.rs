//! Categorical cross entropy.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column-wise softmax (stabilized by max subtraction) together with the mean
/// negative log likelihood of the labels.
pub(crate) fn softmax_and_loss<T: Scalar>(
    logits: &Array2<T>,
    labels: &[usize],
) -> Result<(Array2<T>, T)> {
    let (classes, batch) = logits.dim();
    if labels.len() != batch {
        return Err(Error::LengthMismatch {
            left: batch,
            right: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let mut softmax = Array2::zeros((classes, batch));
    let mut total = T::zero();
    for (j, col) in logits.axis_iter(Axis(1)).enumerate() {
        let max = col.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (i, &z) in col.iter().enumerate() {
            let e = (z - max).exp();
            softmax[(i, j)] = e;
            sum += e;
        }
        for i in 0..classes {
            softmax[(i, j)] /= sum;
        }
        // -ln softmax[label] = ln(sum) - (z_label - max)
        total += sum.ln() - (logits[(labels[j], j)] - max);
    }
    Ok((softmax, total / T::count(batch)))
}

/// Mean over the batch of `-ln softmax(logits)[label]`.
///
/// `logits` is `classes x batch`; one label per column.
pub fn cce_loss<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> Result<T> {
    softmax_and_loss(logits, labels).map(|(_, loss)| loss)
}
