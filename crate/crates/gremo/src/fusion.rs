//! Combining the per-face ensemble with the scene network.
//!
//! The primary mode redirects the ensemble's predicted class into the scene
//! network as one more observed node, whose CPT comes from a validation
//! confusion matrix. Mean and weighted-mean combiners are kept for
//! comparison.

use crate::bottom_up::GroupPrediction;
use crate::error::{Error, Result};
use crate::tensor::argmax;
use crate::top_down::{infer_posterior, set_evidence, ScenePosteriorModel};

/// P(cnn predicts k | true class y), indexed [k][y]; each column y sums to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnEvidenceCpt {
    table: [[f64; 3]; 3],
}

impl CnnEvidenceCpt {
    pub fn new(table: [[f64; 3]; 3]) -> Result<CnnEvidenceCpt> {
        for (k, row) in table.iter().enumerate() {
            for (y, p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidArg(format!(
                        "cnn cpt entry [{k}][{y}] = {p} outside [0,1]"
                    )));
                }
            }
        }
        for y in 0..3 {
            let col: f64 = (0..3).map(|k| table[k][y]).sum();
            if (col - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArg(format!(
                    "cnn cpt column {y} sums to {col}, expected 1"
                )));
            }
        }
        Ok(CnnEvidenceCpt { table })
    }

    pub fn p(&self, predicted: usize, true_class: usize) -> f64 {
        self.table[predicted][true_class]
    }

    pub fn table(&self) -> &[[f64; 3]; 3] {
        &self.table
    }
}

/// Estimates the evidence CPT from validation confusion counts indexed
/// [true class y][predicted k]: P(k|y) = (count + alpha) / (row total + 3
/// alpha).
pub fn build_cnn_cpt(confusion: &[[u64; 3]; 3], smoothing_alpha: f64) -> Result<CnnEvidenceCpt> {
    if !(smoothing_alpha.is_finite() && smoothing_alpha >= 0.0) {
        return Err(Error::InvalidArg(format!(
            "smoothing alpha {smoothing_alpha} must be finite and non-negative"
        )));
    }
    let mut table = [[0.0; 3]; 3];
    for y in 0..3 {
        let row_total: u64 = confusion[y].iter().sum();
        if row_total == 0 && smoothing_alpha == 0.0 {
            return Err(Error::EmptyConfusionRow { row: y });
        }
        let denom = row_total as f64 + 3.0 * smoothing_alpha;
        for k in 0..3 {
            table[k][y] = (confusion[y][k] as f64 + smoothing_alpha) / denom;
        }
    }
    CnnEvidenceCpt::new(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionMode {
    /// Scene inference with the ensemble's argmax class as hard evidence.
    Redirection,
    /// Elementwise mean of the two posteriors.
    Mean,
    /// w * bottom-up + (1 - w) * top-down, w in [0, 1].
    WeightedMean(f64),
}

impl FusionMode {
    /// Parses `redirection`, `mean`, or `weighted:W`.
    pub fn parse(s: &str) -> Result<FusionMode> {
        match s {
            "redirection" => Ok(FusionMode::Redirection),
            "mean" => Ok(FusionMode::Mean),
            _ => {
                if let Some(w) = s.strip_prefix("weighted:") {
                    let w: f64 = w.parse().map_err(|_| {
                        Error::InvalidArg(format!("bad fusion weight in {s:?}"))
                    })?;
                    if !(0.0..=1.0).contains(&w) {
                        return Err(Error::InvalidArg(format!(
                            "fusion weight {w} outside [0,1]"
                        )));
                    }
                    Ok(FusionMode::WeightedMean(w))
                } else {
                    Err(Error::InvalidArg(format!(
                        "unknown fusion mode {s:?} (expected redirection, mean, weighted:W)"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionMode::Redirection => f.write_str("redirection"),
            FusionMode::Mean => f.write_str("mean"),
            FusionMode::WeightedMean(w) => write!(f, "weighted:{w}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub posterior: [f64; 3],
    pub predicted: usize,
}

/// Combines a group-level bottom-up prediction with the scene network.
/// When the bottom-up side saw no faces, every mode degrades to the pure
/// top-down posterior.
pub fn fuse(
    mode: FusionMode,
    bottom: &GroupPrediction,
    model: &ScenePosteriorModel,
    descriptors: &[String],
) -> Result<FusedPrediction> {
    if matches!(mode, FusionMode::Redirection) && model.cnn_cpt.is_none() {
        return Err(Error::MissingCnnCpt);
    }
    let mut evidence = set_evidence(model, descriptors);
    let posterior = match (mode, bottom.predicted, bottom.mean_probs) {
        (FusionMode::Redirection, predicted, _) => {
            evidence.cnn_class = predicted;
            infer_posterior(model, &evidence)?
        }
        (_, None, _) | (_, _, None) => infer_posterior(model, &evidence)?,
        (FusionMode::Mean, _, Some(probs)) => {
            let top = infer_posterior(model, &evidence)?;
            [
                (probs[0] + top[0]) / 2.0,
                (probs[1] + top[1]) / 2.0,
                (probs[2] + top[2]) / 2.0,
            ]
        }
        (FusionMode::WeightedMean(w), _, Some(probs)) => {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidArg(format!("fusion weight {w} outside [0,1]")));
            }
            let top = infer_posterior(model, &evidence)?;
            [
                w * probs[0] + (1.0 - w) * top[0],
                w * probs[1] + (1.0 - w) * top[1],
                w * probs[2] + (1.0 - w) * top[2],
            ]
        }
    };
    Ok(FusedPrediction { posterior, predicted: argmax(&posterior) })
}
