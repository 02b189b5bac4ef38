//! The whole pipeline in one sitting, library calls only: generate a
//! synthetic corpus, isolate faces, train the bottom-up classifier, fit the
//! scene network, calibrate the evidence table, then compare bottom-up,
//! top-down, and fused accuracy on a held-out corpus.

use gremo::bottom_up::{ensemble_predict, group_average};
use gremo::cli::split_train_val;
use gremo::fusion::{build_cnn_cpt, fuse, FusionMode};
use gremo::nn::augment::AugmentConfig;
use gremo::nn::train::{fit, Sample, TrainConfig};
use gremo::nn::{Classifier, LayerSpec, ModelSpec, ParamStore};
use gremo::preprocess::{
    build_isolated_dataset, crop_faces, load_image, normalize, scale_to_64, DatasetManifest,
    ImageRecord,
};
use gremo::rng::stream_rng;
use gremo::synthetic::{generate_corpus, CorpusConfig};
use gremo::tensor::argmax;
use gremo::top_down::{count_from_manifest, fit as fit_scene, infer_posterior, set_evidence};

fn faces_of(record: &ImageRecord, ri: usize, models: &[Classifier]) -> Vec<gremo::bottom_up::FacePrediction> {
    let image = load_image(&record.image).unwrap();
    crop_faces(&image, &record.faces)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(fi, crop)| {
            let input = normalize(&scale_to_64(crop).unwrap());
            ensemble_predict(models, &input, ri, fi).unwrap()
        })
        .collect()
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let train_manifest = generate_corpus(
        &CorpusConfig { n_images: 400, seed: 21, ..CorpusConfig::default() },
        &dir.path().join("train"),
    )
    .unwrap();
    let test_manifest = generate_corpus(
        &CorpusConfig { n_images: 200, seed: 22, ..CorpusConfig::default() },
        &dir.path().join("test"),
    )
    .unwrap();
    println!("generated 400 training and 200 test images");

    let full = DatasetManifest::load(&train_manifest).unwrap();
    // hold the last 60 records out of CNN training to measure its confusion
    let cnn_part = DatasetManifest { records: full.records[..340].to_vec() };
    let isolated = build_isolated_dataset(&cnn_part).unwrap();
    println!("isolated {} faces ({} skipped)", isolated.faces.len(), isolated.skipped.len());

    let samples: Vec<Sample> = isolated
        .faces
        .iter()
        .map(|f| Sample { input: f.tensor.clone(), label: f.label.index() })
        .collect();
    let (train, val) = split_train_val(samples, 0.15, 21).unwrap();

    let pool = LayerSpec::MaxPool { kernel: 2, stride: 2 };
    let conv = |out| LayerSpec::Conv { out_channels: out, kernel: (3, 3), stride: 1, padding: 1 };
    let spec = ModelSpec {
        input_shape: [64, 64, 3],
        num_classes: 3,
        layers: vec![
            conv(8), LayerSpec::Relu, pool.clone(),
            conv(8), LayerSpec::Relu, pool.clone(),
            conv(8), LayerSpec::Relu, pool,
            LayerSpec::Flatten,
            LayerSpec::Dense { out: 32 }, LayerSpec::Relu,
            LayerSpec::Dense { out: 3 }, LayerSpec::Softmax,
        ],
    };
    let cfg = TrainConfig {
        batch_size: 64,
        max_epochs: 3,
        early_stop_patience: 3,
        learning_rate: 0.002,
        seed: 21,
        augmentation: AugmentConfig::none(),
    };
    let params = ParamStore::init(&spec, &mut stream_rng(21, 1, 0)).unwrap();
    let (best, history) = fit(&spec, params, &train, &val, &cfg).unwrap();
    println!("trained {} epochs, val acc {:.3}", history.len(), history.last().unwrap().val_acc);
    let models = [Classifier::new(spec, best).unwrap()];

    let mut scene = fit_scene(&count_from_manifest(&full).unwrap(), 1.0).unwrap();
    let mut confusion = [[0u64; 3]; 3];
    for (ri, record) in full.records[340..].iter().enumerate() {
        if let Some(k) = group_average(&faces_of(record, ri, &models)).predicted {
            confusion[record.label.unwrap().index()][k] += 1;
        }
    }
    scene.cnn_cpt = Some(build_cnn_cpt(&confusion, 1.0).unwrap());
    println!("calibrated evidence table from 60 held-out records");

    let test = DatasetManifest::load(&test_manifest).unwrap();
    let (mut bottom_ok, mut top_ok, mut fused_ok) = (0, 0, 0);
    for (ri, record) in test.records.iter().enumerate() {
        let truth = record.label.unwrap().index();
        let group = group_average(&faces_of(record, ri, &models));
        let top = infer_posterior(&scene, &set_evidence(&scene, &record.descriptors)).unwrap();
        let fused = fuse(FusionMode::Redirection, &group, &scene, &record.descriptors).unwrap();
        bottom_ok += (group.predicted == Some(truth)) as u32;
        top_ok += (argmax(&top) == truth) as u32;
        fused_ok += (fused.predicted == truth) as u32;
    }
    let pct = |k: u32| k as f64 / test.records.len() as f64;
    println!("test accuracy: bottom-up {:.3}", pct(bottom_ok));
    println!("test accuracy: top-down  {:.3}", pct(top_ok));
    println!("test accuracy: fused     {:.3}", pct(fused_ok));
}
