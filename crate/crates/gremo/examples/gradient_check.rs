//! Checks analytic gradients against central finite differences for a small
//! conv network, the same way the test suite does but with printed numbers.

use gremo::nn::loss::cross_entropy;
use gremo::nn::{backward_pass, forward_pass, LayerSpec, ModelSpec, ParamStore};
use gremo::rng::stream_rng;
use gremo::tensor::Tensor;
use rand::RngExt;

fn main() {
    let spec = ModelSpec {
        input_shape: [8, 8, 1],
        num_classes: 3,
        layers: vec![
            LayerSpec::Conv { out_channels: 2, kernel: (3, 3), stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out: 3 },
            LayerSpec::Softmax,
        ],
    };
    let params = ParamStore::init(&spec, &mut stream_rng(1, 1, 0)).unwrap();

    let mut rng = stream_rng(2, 1, 0);
    let data = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let input = Tensor::new(vec![8, 8, 1], data).unwrap();
    let label = 1usize;

    let loss_at = |p: &ParamStore| -> f64 {
        let (probs, _) = forward_pass(&spec, p, &input, false, None).unwrap();
        let row = probs.reshape(vec![1, 3]).unwrap();
        cross_entropy(&row, &[label]).unwrap().loss
    };

    let (probs, caches) = forward_pass(&spec, &params, &input, false, None).unwrap();
    let row = probs.reshape(vec![1, 3]).unwrap();
    let out = cross_entropy(&row, &[label]).unwrap();
    let grad_logits = out.grad_logits.reshape(vec![3]).unwrap();
    let grads = backward_pass(&spec, &params, &caches, &grad_logits).unwrap();

    println!("loss at start: {:.6}", out.loss);
    println!("layer  param      analytic        numeric         rel err");

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (li, entry) in params.entries.iter().enumerate() {
        let Some(lp) = entry else { continue };
        let g = grads.entries[li].as_ref().unwrap();
        // probe three weight coordinates and one bias coordinate per layer
        let picks: Vec<(bool, usize)> = (0..3)
            .map(|k| (true, k * lp.weights.len() / 3))
            .chain([(false, 0)])
            .collect();
        for (is_weight, j) in picks {
            let bump = |d: f64| -> f64 {
                let mut p2 = params.clone();
                let e = p2.entries[li].as_mut().unwrap();
                let t = if is_weight { &mut e.weights } else { &mut e.bias };
                t.data_mut()[j] += d;
                loss_at(&p2)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let analytic = if is_weight { g.weights.data()[j] } else { g.bias.data()[j] };
            let rel = (analytic - numeric).abs()
                / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            println!(
                "{li:>5}  {}[{j:>3}]  {analytic:>14.8e}  {numeric:>14.8e}  {rel:.2e}",
                if is_weight { "w" } else { "b" },
            );
        }
    }
    println!("worst relative error: {worst:.2e} (threshold 1e-4)");
    assert!(worst < 1e-4);
}
