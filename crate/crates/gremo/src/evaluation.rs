//! Accuracy reporting and random hyperparameter search.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Label;
use crate::rng::{split, stream_rng, STREAM_TRIAL_SAMPLE, STREAM_TRIAL_SEED};
use rand::RngExt;

/// Confusion columns are positive, neutral, negative, none; rows are the true
/// class. Images the pipeline could not classify land in the none column and
/// stay in the accuracy denominator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: [[u64; 4]; 3],
    /// Recall per true class; null for classes absent from the sample.
    pub per_class_recall: [Option<f64>; 3],
    pub n_samples: u64,
}

pub fn evaluate(predictions: &[(Label, Option<usize>)]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut confusion = [[0u64; 4]; 3];
    for (truth, pred) in predictions {
        let col = pred.unwrap_or(3).min(3);
        confusion[truth.index()][col] += 1;
    }
    let n_samples = predictions.len() as u64;
    let correct: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let per_class_recall = std::array::from_fn(|i| {
        let total: u64 = confusion[i].iter().sum();
        (total > 0).then(|| confusion[i][i] as f64 / total as f64)
    });
    Ok(EvalReport {
        accuracy: correct as f64 / n_samples as f64,
        confusion,
        per_class_recall,
        n_samples,
    })
}

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_confusion_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = String::from("true_class,positive,neutral,negative,none\n");
    for (i, row) in report.confusion.iter().enumerate() {
        out.push_str(Label::from_index(i).expect("3 rows").as_str());
        for count in row {
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Hyperparameter ranges to draw from. Learning rate samples log-uniform,
/// dropout uniform, the rest are finite choice sets. Defaults bracket the
/// values the reference model settled on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub trials: u64,
    pub seed: u64,
    pub learning_rate: [f64; 2],
    pub batch_size: Vec<usize>,
    pub fc1: Vec<usize>,
    pub fc2: Vec<usize>,
    pub dropout: [f64; 2],
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            trials: 20,
            seed: 0,
            learning_rate: [1e-4, 1e-1],
            batch_size: vec![32, 64, 128],
            fc1: vec![256, 512, 1024],
            fc2: vec![128, 256, 512],
            dropout: [0.25, 0.75],
        }
    }
}

impl SearchSpace {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let space: SearchSpace = serde_json::from_str(&text)
            .map_err(|e| Error::SearchSpace(format!("{}: {e}", path.display())))?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::SearchSpace(msg.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        let [lo, hi] = self.learning_rate;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("learning_rate range must satisfy 0 < lo <= hi");
        }
        if self.batch_size.is_empty() || self.batch_size.contains(&0) {
            return bad("batch_size choices must be non-empty and positive");
        }
        if self.fc1.is_empty() || self.fc1.contains(&0) {
            return bad("fc1 choices must be non-empty and positive");
        }
        if self.fc2.is_empty() || self.fc2.contains(&0) {
            return bad("fc2 choices must be non-empty and positive");
        }
        let [dlo, dhi] = self.dropout;
        if !(0.0..1.0).contains(&dlo) || !(0.0..1.0).contains(&dhi) || dhi < dlo {
            return bad("dropout range must satisfy 0 <= lo <= hi < 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub config: TrialConfig,
    /// Training seed for this trial, derived from the search seed and index.
    pub seed: u64,
    pub score: f64,
}

fn pick<T: Copy>(choices: &[T], rng: &mut impl rand::Rng) -> T {
    choices[rng.random_range(0..choices.len())]
}

/// Draws `trials` independent configs and scores each with `objective`,
/// which receives the config and a per-trial training seed. Returns the
/// best-scoring config, ties broken toward the earliest trial.
pub fn random_search(
    space: &SearchSpace,
    mut objective: impl FnMut(&TrialConfig, u64) -> Result<f64>,
) -> Result<(TrialConfig, Vec<TrialRecord>)> {
    space.validate()?;
    let mut records = Vec::with_capacity(space.trials as usize);
    let mut best: Option<(f64, TrialConfig)> = None;
    for trial in 0..space.trials {
        let mut rng = stream_rng(space.seed, STREAM_TRIAL_SAMPLE, trial);
        let [lo, hi] = space.learning_rate;
        let learning_rate = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        let config = TrialConfig {
            learning_rate,
            batch_size: pick(&space.batch_size, &mut rng),
            fc1: pick(&space.fc1, &mut rng),
            fc2: pick(&space.fc2, &mut rng),
            dropout: {
                let [dlo, dhi] = space.dropout;
                dlo + rng.random::<f64>() * (dhi - dlo)
            },
        };
        let seed = split(space.seed, STREAM_TRIAL_SEED, trial);
        let score = objective(&config, seed)?;
        records.push(TrialRecord { trial, config, seed, score });
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, config));
        }
    }
    let (_, config) = best.expect("trials >= 1");
    Ok((config, records))
}

pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = String::from("trial,learning_rate,batch_size,fc1,fc2,dropout,seed,score\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.config.learning_rate,
            r.config.batch_size,
            r.config.fc1,
            r.config.fc2,
            r.config.dropout,
            r.seed,
            r.score
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: Label = Label::Positive;
    const NU: Label = Label::Neutral;
    const NG: Label = Label::Negative;

    #[test]
    fn perfect_predictions_score_one() {
        let r = evaluate(&[(P, Some(0)), (NU, Some(1)), (NG, Some(2))]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.per_class_recall, [Some(1.0); 3]);
        assert_eq!(r.n_samples, 3);
    }

    #[test]
    fn none_counts_as_wrong() {
        // correct, wrong, unclassified
        let r = evaluate(&[(P, Some(0)), (NU, Some(2)), (NG, None)]).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion[0], [1, 0, 0, 0]);
        assert_eq!(r.confusion[1], [0, 0, 1, 0]);
        assert_eq!(r.confusion[2], [0, 0, 0, 1]);
        assert_eq!(r.per_class_recall, [Some(1.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn absent_class_has_no_recall() {
        let r = evaluate(&[(P, Some(0)), (P, Some(1))]).unwrap();
        assert_eq!(r.per_class_recall, [Some(0.5), None, None]);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("[0.5,null,null]"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(evaluate(&[]), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn confusion_csv_layout() {
        let r = evaluate(&[(P, Some(0)), (NU, Some(2)), (NG, None), (NG, Some(2))]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("confusion.csv");
        write_confusion_csv(&r, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "true_class,positive,neutral,negative,none\n\
             positive,1,0,0,0\n\
             neutral,0,0,1,0\n\
             negative,0,0,1,1\n"
        );
    }

    proptest! {
        #[test]
        fn report_is_internally_consistent(
            preds in prop::collection::vec((0usize..3, prop::option::of(0usize..3)), 1..200)
        ) {
            let pairs: Vec<(Label, Option<usize>)> = preds
                .iter()
                .map(|(t, p)| (Label::from_index(*t).unwrap(), *p))
                .collect();
            let r = evaluate(&pairs).unwrap();
            let total: u64 = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total, r.n_samples);
            let trace: u64 = (0..3).map(|i| r.confusion[i][i]).sum();
            prop_assert_eq!(trace as f64 / r.n_samples as f64, r.accuracy);
            for (i, row) in r.confusion.iter().enumerate() {
                let row_total: u64 = row.iter().sum();
                let expected: u64 = pairs.iter().filter(|(t, _)| t.index() == i).count() as u64;
                prop_assert_eq!(row_total, expected);
            }
        }

        #[test]
        fn permuting_predictions_keeps_the_report(
            preds in prop::collection::vec((0usize..3, prop::option::of(0usize..3)), 1..50)
        ) {
            let pairs: Vec<(Label, Option<usize>)> = preds
                .iter()
                .map(|(t, p)| (Label::from_index(*t).unwrap(), *p))
                .collect();
            let mut reversed = pairs.clone();
            reversed.reverse();
            prop_assert_eq!(evaluate(&pairs).unwrap(), evaluate(&reversed).unwrap());
        }

        #[test]
        fn sampled_configs_stay_inside_the_space(seed in any::<u64>()) {
            let space = SearchSpace { trials: 30, seed, ..SearchSpace::default() };
            let (_, records) = random_search(&space, |_, _| Ok(0.0)).unwrap();
            for r in &records {
                let c = &r.config;
                prop_assert!(c.learning_rate >= space.learning_rate[0]);
                prop_assert!(c.learning_rate <= space.learning_rate[1]);
                prop_assert!(space.batch_size.contains(&c.batch_size));
                prop_assert!(space.fc1.contains(&c.fc1));
                prop_assert!(space.fc2.contains(&c.fc2));
                prop_assert!(c.dropout >= space.dropout[0] && c.dropout <= space.dropout[1]);
            }
        }
    }

    #[test]
    fn single_trial_wins_by_default() {
        let space = SearchSpace { trials: 1, seed: 7, ..SearchSpace::default() };
        let (best, records) = random_search(&space, |_, _| Ok(0.5)).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(best, records[0].config);
    }

    #[test]
    fn search_is_deterministic() {
        let space = SearchSpace { trials: 10, seed: 42, ..SearchSpace::default() };
        let run = || random_search(&space, |c, s| Ok(c.learning_rate + s as f64)).unwrap();
        let (a_best, a_records) = run();
        let (b_best, b_records) = run();
        assert_eq!(a_best, b_best);
        assert_eq!(a_records, b_records);
    }

    #[test]
    fn search_finds_the_good_region() {
        // indicator objective: only small learning rates score
        let space = SearchSpace { trials: 50, seed: 3, ..SearchSpace::default() };
        let (best, _) =
            random_search(&space, |c, _| Ok(if c.learning_rate < 0.01 { 1.0 } else { 0.0 }))
                .unwrap();
        assert!(best.learning_rate < 0.01);
    }

    #[test]
    fn ties_go_to_the_earliest_trial() {
        let space = SearchSpace { trials: 8, seed: 11, ..SearchSpace::default() };
        let (best, records) = random_search(&space, |_, _| Ok(1.0)).unwrap();
        assert_eq!(best, records[0].config);
    }

    #[test]
    fn trial_seeds_depend_only_on_search_seed_and_index() {
        let space = SearchSpace { trials: 4, seed: 99, ..SearchSpace::default() };
        let (_, records) = random_search(&space, |_, _| Ok(0.0)).unwrap();
        for r in &records {
            assert_eq!(r.seed, split(99, STREAM_TRIAL_SEED, r.trial));
        }
        let seeds: std::collections::BTreeSet<u64> = records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), records.len());
    }

    #[test]
    fn degenerate_spaces_are_rejected() {
        let mut space = SearchSpace { trials: 0, ..SearchSpace::default() };
        assert!(space.validate().is_err());
        space.trials = 1;
        space.learning_rate = [0.0, 0.1];
        assert!(space.validate().is_err());
        space.learning_rate = [1e-3, 1e-3];
        assert!(space.validate().is_ok());
        space.batch_size.clear();
        assert!(space.validate().is_err());
        space.batch_size = vec![64];
        space.dropout = [0.5, 1.0];
        assert!(space.validate().is_err());
    }

    #[test]
    fn space_json_overrides_only_named_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.json");
        std::fs::write(&path, r#"{"trials": 3, "batch_size": [16]}"#).unwrap();
        let space = SearchSpace::load(&path).unwrap();
        assert_eq!(space.trials, 3);
        assert_eq!(space.batch_size, vec![16]);
        assert_eq!(space.fc1, SearchSpace::default().fc1);
        std::fs::write(&path, r#"{"trails": 3}"#).unwrap();
        assert!(matches!(SearchSpace::load(&path), Err(Error::SearchSpace(_))));
    }
}
