//! Per-batch neuron selection.
//!
//! Importance mode keeps, for every hidden layer, the top `percent`% of
//! units ranked by mean absolute activation over the batch (quota floored,
//! so tiny layers may contribute nothing), and always keeps the entire
//! output layer. Full mode keeps every non-input neuron. Input neurons are
//! never candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::ActivationCapture;
use crate::scalar::Scalar;
use crate::topology::NeuronId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    #[default]
    Full,
    Importance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    /// Percentage of units kept per hidden layer in importance mode,
    /// in `(0, 100]`.
    pub percent: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Full,
            percent: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn full() -> Self {
        Self {
            mode: SamplerMode::Full,
            percent: 100.0,
        }
    }

    pub fn importance(percent: f64) -> Self {
        Self {
            mode: SamplerMode::Importance,
            percent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == SamplerMode::Importance && !(self.percent > 0.0 && self.percent <= 100.0)
        {
            return Err(Error::InvalidConfig(format!(
                "sample percent {} outside (0, 100]",
                self.percent
            )));
        }
        Ok(())
    }
}

/// Mean absolute activation of every unit in a layer over the batch.
pub fn importance_scores<T: Scalar>(capture: &ActivationCapture<T>, layer: usize) -> Vec<T> {
    let acts = capture.acts(layer);
    let batch = T::count(acts.ncols());
    acts.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<T>() / batch)
        .collect()
}

/// Selects the per-batch neuron set.
///
/// Importance mode: per hidden layer, the `floor(percent/100 * units)`
/// top-scoring units in descending score order with ties broken by ascending
/// unit index; the whole output layer is appended. Full mode: every hidden
/// and output unit. Selections of fewer than two neurons are rejected.
pub fn select_neurons<T: Scalar>(
    capture: &ActivationCapture<T>,
    config: &SamplerConfig,
) -> Result<Vec<NeuronId>> {
    config.validate()?;
    let output_layer = capture.output_layer();
    let mut selected = Vec::new();
    match config.mode {
        SamplerMode::Full => {
            for layer in 0..capture.num_layers() {
                selected.extend((0..capture.units(layer)).map(|unit| NeuronId { layer, unit }));
            }
        }
        SamplerMode::Importance => {
            for layer in 0..output_layer {
                let units = capture.units(layer);
                let quota = ((config.percent / 100.0) * units as f64).floor() as usize;
                if quota == 0 {
                    continue;
                }
                let scores = importance_scores(capture, layer);
                let mut order: Vec<usize> = (0..units).collect();
                // Stable sort on descending score keeps ascending-index
                // order within ties.
                order.sort_by(|&a, &b| {
                    scores[b]
                        .partial_cmp(&scores[a])
                        .expect("importance scores are finite")
                });
                selected.extend(
                    order
                        .into_iter()
                        .take(quota)
                        .map(|unit| NeuronId { layer, unit }),
                );
            }
            selected.extend(
                (0..capture.units(output_layer)).map(|unit| NeuronId {
                    layer: output_layer,
                    unit,
                }),
            );
        }
    }
    if selected.len() < 2 {
        return Err(Error::TooFewNeurons {
            min: 2,
            got: selected.len(),
        });
    }
    Ok(selected)
}
