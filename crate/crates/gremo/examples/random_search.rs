//! Random hyperparameter search against a cheap stand-in objective, to show
//! the sampling, logging, and tie-breaking behavior without a long training
//! run. The real objective (train + evaluate per trial) is what `gremo
//! search` wires in.

use gremo::evaluation::{random_search, write_trials_csv, SearchSpace};

fn main() {
    let space = SearchSpace {
        trials: 8,
        seed: 99,
        learning_rate: [1e-4, 1e-1],
        batch_size: vec![32, 64, 128],
        fc1: vec![256, 512, 1024],
        fc2: vec![128, 256, 512],
        dropout: [0.25, 0.75],
    };

    // pretend larger fc1 and moderate dropout are what the task wants
    let (best, records) = random_search(&space, |cfg, _seed| {
        let sweet = 1.0 - (cfg.dropout - 0.5).abs();
        Ok(cfg.fc1 as f64 / 1024.0 + sweet - (cfg.learning_rate.log10() + 2.0).abs() * 0.1)
    })
    .unwrap();

    for r in &records {
        println!(
            "trial {:>2}: lr {:.5} batch {:>3} fc1 {:>4} fc2 {:>3} dropout {:.3} -> {:.4}",
            r.trial,
            r.config.learning_rate,
            r.config.batch_size,
            r.config.fc1,
            r.config.fc2,
            r.config.dropout,
            r.score
        );
    }
    println!(
        "best: fc1 {} dropout {:.3} (score beats {} other trials)",
        best.fc1,
        best.dropout,
        records.len() - 1
    );

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trials.csv");
    write_trials_csv(&records, &csv).unwrap();
    println!("--- trials.csv ---\n{}", std::fs::read_to_string(&csv).unwrap());
}
