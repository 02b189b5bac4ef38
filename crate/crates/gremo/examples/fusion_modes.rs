//! Shows how the three fusion modes combine a bottom-up group prediction
//! with the scene posterior, including the no-faces degradation.

use gremo::bottom_up::{group_average, FacePrediction};
use gremo::fusion::{build_cnn_cpt, fuse, FusionMode};
use gremo::top_down::ScenePosteriorModel;

fn main() {
    // scene network leaning negative when "protest" is observed
    let model = ScenePosteriorModel {
        prior: [0.4, 0.35, 0.25],
        vocabulary: vec!["party".into(), "protest".into()],
        cpt_true: vec![[0.7, 0.3, 0.05], [0.05, 0.1, 0.8]],
        smoothing_alpha: 1.0,
        // validation confusion: the classifier is right often but not always
        cnn_cpt: Some(
            build_cnn_cpt(&[[20, 3, 2], [4, 15, 6], [1, 5, 19]], 1.0).unwrap(),
        ),
    };

    // two faces, averaged: mildly positive
    let faces = [
        FacePrediction { probs: [0.55, 0.30, 0.15], record: 0, face: 0 },
        FacePrediction { probs: [0.45, 0.35, 0.20], record: 0, face: 1 },
    ];
    let group = group_average(&faces);
    println!(
        "bottom-up: probs {:?} predicted {:?}",
        group.mean_probs, group.predicted
    );

    let descriptors = vec!["protest".to_string()];
    for mode in [
        FusionMode::Redirection,
        FusionMode::Mean,
        FusionMode::WeightedMean(0.7),
    ] {
        let fused = fuse(mode, &group, &model, &descriptors).unwrap();
        println!(
            "{mode:<16} posterior [{:.4}, {:.4}, {:.4}] -> class {}",
            fused.posterior[0], fused.posterior[1], fused.posterior[2], fused.predicted
        );
    }

    // a record with no detectable faces falls back to the scene posterior
    let empty = group_average(&[]);
    let fused = fuse(FusionMode::Mean, &empty, &model, &descriptors).unwrap();
    println!(
        "no faces, mean    posterior [{:.4}, {:.4}, {:.4}] (pure top-down)",
        fused.posterior[0], fused.posterior[1], fused.posterior[2]
    );
}
