//! Scene-descriptor naive Bayes network over the three emotion classes.
//!
//! The class node has a categorical prior; each vocabulary descriptor is a
//! Bernoulli child. Descriptors listed for an image are observed true;
//! everything else stays unobserved. Inference multiplies the factored
//! product in log space, which on this star topology is exact.

use crate::error::{Error, Result};
use crate::fusion::CnnEvidenceCpt;
use crate::preprocess::{normalize_descriptor, DatasetManifest, LABELS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Per-descriptor presence counts for each class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorCounts {
    /// Lexicographically sorted union of all descriptors seen.
    pub vocabulary: Vec<String>,
    /// n_true[d][y]: labeled images of class y listing descriptor d.
    pub n_true: Vec<[u64; 3]>,
    /// Labeled images per class.
    pub class_counts: [u64; 3],
}

impl DescriptorCounts {
    /// Images of class y that do not list descriptor d.
    pub fn n_false(&self, d: usize, y: usize) -> u64 {
        self.class_counts[y] - self.n_true[d][y]
    }
}

/// Tallies descriptor presence per class; a descriptor repeated within one
/// record still counts once for that image.
pub fn count_from_manifest(manifest: &DatasetManifest) -> Result<DescriptorCounts> {
    let mut class_counts = [0u64; 3];
    let mut per_record: Vec<(usize, BTreeSet<String>)> = Vec::new();
    let mut vocab_set = BTreeSet::new();
    for (i, record) in manifest.records.iter().enumerate() {
        let label = record.label.ok_or(Error::UnlabeledRecord { index: i })?;
        class_counts[label.index()] += 1;
        let set: BTreeSet<String> = record
            .descriptors
            .iter()
            .map(|d| normalize_descriptor(d))
            .filter(|d| !d.is_empty())
            .collect();
        vocab_set.extend(set.iter().cloned());
        per_record.push((label.index(), set));
    }
    let vocabulary: Vec<String> = vocab_set.into_iter().collect();
    let index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut n_true = vec![[0u64; 3]; vocabulary.len()];
    for (y, set) in &per_record {
        for d in set {
            n_true[index[d.as_str()]][*y] += 1;
        }
    }
    Ok(DescriptorCounts { vocabulary, n_true, class_counts })
}

/// Fitted network: class prior plus one Bernoulli CPT per descriptor, and
/// optionally the CNN evidence node used by fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePosteriorModel {
    pub prior: [f64; 3],
    pub vocabulary: Vec<String>,
    /// cpt_true[d][y] = P(descriptor d present | class y); the absent side
    /// is its exact complement.
    pub cpt_true: Vec<[f64; 3]>,
    pub smoothing_alpha: f64,
    pub cnn_cpt: Option<CnnEvidenceCpt>,
}

impl ScenePosteriorModel {
    pub fn p_true(&self, d: usize, y: usize) -> f64 {
        self.cpt_true[d][y]
    }

    pub fn descriptor_index(&self, name: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|v| v.as_str().cmp(name)).ok()
    }
}

/// Maximum-likelihood fit with Laplace smoothing:
/// P(true|y) = (n_true + alpha) / (class_count + 2 alpha), prior = class
/// frequencies (unsmoothed).
pub fn fit(counts: &DescriptorCounts, smoothing_alpha: f64) -> Result<ScenePosteriorModel> {
    if !(smoothing_alpha.is_finite() && smoothing_alpha >= 0.0) {
        return Err(Error::InvalidArg(format!(
            "smoothing alpha {smoothing_alpha} must be finite and non-negative"
        )));
    }
    for label in LABELS {
        if counts.class_counts[label.index()] == 0 {
            return Err(Error::EmptyClass { class: label.as_str().to_string() });
        }
    }
    if counts.n_true.len() != counts.vocabulary.len() {
        return Err(Error::Internal("descriptor counts out of sync with vocabulary".into()));
    }
    let total: u64 = counts.class_counts.iter().sum();
    let mut prior = [0.0; 3];
    for y in 0..3 {
        prior[y] = counts.class_counts[y] as f64 / total as f64;
    }
    let cpt_true = counts
        .n_true
        .iter()
        .map(|row| {
            let mut p = [0.0; 3];
            for y in 0..3 {
                p[y] = (row[y] as f64 + smoothing_alpha)
                    / (counts.class_counts[y] as f64 + 2.0 * smoothing_alpha);
            }
            p
        })
        .collect();
    Ok(ScenePosteriorModel {
        prior,
        vocabulary: counts.vocabulary.clone(),
        cpt_true,
        smoothing_alpha,
        cnn_cpt: None,
    })
}

/// Evidence for one image: vocabulary descriptors observed true, descriptors
/// the model has never seen, and optionally the CNN's predicted class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    /// Sorted, deduplicated vocabulary indices observed true.
    pub observed: Vec<usize>,
    /// Out-of-vocabulary descriptors, first-seen order, deduplicated.
    pub unknown: Vec<String>,
    pub cnn_class: Option<usize>,
}

/// Marks in-vocabulary descriptors as observed true. Descriptors not listed
/// stay unobserved; unknown ones are reported, never silently dropped.
pub fn set_evidence(model: &ScenePosteriorModel, descriptors: &[String]) -> Evidence {
    let mut observed = BTreeSet::new();
    let mut unknown = Vec::new();
    for d in descriptors {
        let d = normalize_descriptor(d);
        if d.is_empty() {
            continue;
        }
        match model.descriptor_index(&d) {
            Some(i) => {
                observed.insert(i);
            }
            None => {
                if !unknown.contains(&d) {
                    unknown.push(d);
                }
            }
        }
    }
    Evidence { observed: observed.into_iter().collect(), unknown, cnn_class: None }
}

fn check_evidence(model: &ScenePosteriorModel, evidence: &Evidence) -> Result<()> {
    if model.cpt_true.len() != model.vocabulary.len() {
        return Err(Error::Internal("model CPT out of sync with vocabulary".into()));
    }
    for &d in &evidence.observed {
        if d >= model.vocabulary.len() {
            return Err(Error::InvalidArg(format!(
                "evidence index {d} outside the {}-entry vocabulary",
                model.vocabulary.len()
            )));
        }
    }
    match evidence.cnn_class {
        Some(k) if k > 2 => Err(Error::InvalidArg(format!("cnn class {k} out of range"))),
        Some(_) if model.cnn_cpt.is_none() => Err(Error::MissingCnnCpt),
        _ => Ok(()),
    }
}

/// Exact posterior over classes given the evidence, in log space:
/// log P(y | e) = log P(y) + sum over observed d of log P(d true | y)
/// (+ log P(cnn = k | y) when present), then normalized.
pub fn infer_posterior(model: &ScenePosteriorModel, evidence: &Evidence) -> Result<[f64; 3]> {
    check_evidence(model, evidence)?;
    let mut log_post = [0.0; 3];
    for y in 0..3 {
        let mut lp = model.prior[y].ln();
        for &d in &evidence.observed {
            lp += model.p_true(d, y).ln();
        }
        if let (Some(k), Some(cpt)) = (evidence.cnn_class, &model.cnn_cpt) {
            lp += cpt.p(k, y).ln();
        }
        log_post[y] = lp;
    }
    let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ZeroLikelihoodEvidence);
    }
    let mut post = [0.0; 3];
    let mut sum = 0.0;
    for y in 0..3 {
        post[y] = (log_post[y] - max).exp();
        sum += post[y];
    }
    for p in &mut post {
        *p /= sum;
    }
    Ok(post)
}

/// Test oracle: sums the full joint over every unobserved node (including
/// the CNN node when the model has one). Exponential in vocabulary size.
pub fn brute_force_joint(model: &ScenePosteriorModel, evidence: &Evidence) -> Result<[f64; 3]> {
    const MAX_VOCAB: usize = 20;
    check_evidence(model, evidence)?;
    let n = model.vocabulary.len();
    if n > MAX_VOCAB {
        return Err(Error::VocabularyTooLarge { size: n, max: MAX_VOCAB });
    }
    let observed: BTreeSet<usize> = evidence.observed.iter().copied().collect();
    let free: Vec<usize> = (0..n).filter(|d| !observed.contains(d)).collect();
    let mut totals = [0.0; 3];
    for y in 0..3 {
        let mut sum_y = 0.0;
        for mask in 0u64..(1u64 << free.len()) {
            let mut p = model.prior[y];
            for &d in &observed {
                p *= model.p_true(d, y);
            }
            for (bit, &d) in free.iter().enumerate() {
                let present = (mask >> bit) & 1 == 1;
                let pt = model.p_true(d, y);
                p *= if present { pt } else { 1.0 - pt };
            }
            if let Some(cpt) = &model.cnn_cpt {
                p *= match evidence.cnn_class {
                    Some(k) => cpt.p(k, y),
                    None => (0..3).map(|k| cpt.p(k, y)).sum::<f64>(),
                };
            }
            sum_y += p;
        }
        totals[y] = sum_y;
    }
    let sum: f64 = totals.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ZeroLikelihoodEvidence);
    }
    Ok([totals[0] / sum, totals[1] / sum, totals[2] / sum])
}

#[derive(Serialize, Deserialize)]
struct BnFile {
    classes: Vec<String>,
    prior: [f64; 3],
    alpha: f64,
    cpt: BTreeMap<String, [f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cnn_cpt: Option<[[f64; 3]; 3]>,
}

/// Writes the model as pretty-printed JSON with lexicographic CPT order.
pub fn save_scene_model(path: &Path, model: &ScenePosteriorModel) -> Result<()> {
    let file = BnFile {
        classes: LABELS.iter().map(|l| l.as_str().to_string()).collect(),
        prior: model.prior,
        alpha: model.smoothing_alpha,
        cpt: model
            .vocabulary
            .iter()
            .cloned()
            .zip(model.cpt_true.iter().copied())
            .collect(),
        cnn_cpt: model.cnn_cpt.as_ref().map(|c| *c.table()),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scene_model(path: &Path) -> Result<ScenePosteriorModel> {
    let bad = |msg: String| Error::BnFormat { path: path.display().to_string(), msg };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: BnFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let expected: Vec<String> = LABELS.iter().map(|l| l.as_str().to_string()).collect();
    if file.classes != expected {
        return Err(bad(format!("classes must be {expected:?}, got {:?}", file.classes)));
    }
    let prior_sum: f64 = file.prior.iter().sum();
    if file.prior.iter().any(|p| !(0.0..=1.0).contains(p)) || (prior_sum - 1.0).abs() > 1e-6 {
        return Err(bad(format!("prior {:?} is not a distribution", file.prior)));
    }
    if !(file.alpha.is_finite() && file.alpha >= 0.0) {
        return Err(bad(format!("alpha {} must be finite and non-negative", file.alpha)));
    }
    let mut vocabulary = Vec::with_capacity(file.cpt.len());
    let mut cpt_true = Vec::with_capacity(file.cpt.len());
    for (name, row) in &file.cpt {
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(bad(format!("cpt row for {name:?} has entries outside [0,1]")));
        }
        vocabulary.push(name.clone());
        cpt_true.push(*row);
    }
    let cnn_cpt = match file.cnn_cpt {
        None => None,
        Some(table) => Some(CnnEvidenceCpt::new(table).map_err(|e| bad(e.to_string()))?),
    };
    Ok(ScenePosteriorModel {
        prior: file.prior,
        vocabulary,
        cpt_true,
        smoothing_alpha: file.alpha,
        cnn_cpt,
    })
}
