//! Trains a small classifier on the synthetic face task and prints the
//! epoch history. Finishes in well under a minute; crank `max_epochs` and
//! the channel counts if you want to watch a longer run.

use gremo::cli::split_train_val;
use gremo::nn::augment::AugmentConfig;
use gremo::nn::train::{fit, TrainConfig};
use gremo::nn::{LayerSpec, ModelSpec, ParamStore};
use gremo::rng::stream_rng;
use gremo::synthetic::generate_face_task;

fn main() {
    let samples = generate_face_task(150, 3, 0.05);
    let (train, val) = split_train_val(samples, 0.2, 3).unwrap();
    println!("{} train / {} val, 5% of patterns lie about their label", train.len(), val.len());

    let pool = LayerSpec::MaxPool { kernel: 2, stride: 2 };
    let spec = ModelSpec {
        input_shape: [64, 64, 3],
        num_classes: 3,
        layers: vec![
            LayerSpec::Conv { out_channels: 4, kernel: (3, 3), stride: 1, padding: 1 },
            LayerSpec::Relu,
            pool.clone(),
            LayerSpec::Conv { out_channels: 8, kernel: (3, 3), stride: 1, padding: 1 },
            LayerSpec::Relu,
            pool.clone(),
            LayerSpec::Conv { out_channels: 8, kernel: (3, 3), stride: 1, padding: 1 },
            LayerSpec::Relu,
            pool,
            LayerSpec::Flatten,
            LayerSpec::Dense { out: 64 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { out: 3 },
            LayerSpec::Softmax,
        ],
    };
    let cfg = TrainConfig {
        batch_size: 32,
        max_epochs: 8,
        early_stop_patience: 8,
        learning_rate: 0.002,
        seed: 3,
        augmentation: AugmentConfig::default(),
    };

    let params = ParamStore::init(&spec, &mut stream_rng(cfg.seed, 1, 0)).unwrap();
    let (_best, history) = fit(&spec, params, &train, &val, &cfg).unwrap();

    println!("epoch  train loss/acc    val loss/acc");
    for e in &history {
        println!(
            "{:>5}  {:.4} / {:.3}    {:.4} / {:.3}",
            e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
        );
    }
    let last = history.last().unwrap();
    println!("final train accuracy {:.3}, val accuracy {:.3}", last.train_acc, last.val_acc);
}
