//! Fits the scene-descriptor network from a six-record manifest and walks
//! through a few posterior queries.

use gremo::preprocess::DatasetManifest;
use gremo::top_down::{count_from_manifest, fit, infer_posterior, set_evidence};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"image\":\"a.png\",\"label\":\"positive\",\"descriptors\":[\"party\",\"balloons\"]}\n",
            "{\"image\":\"b.png\",\"label\":\"positive\",\"descriptors\":[\"party\"]}\n",
            "{\"image\":\"c.png\",\"label\":\"neutral\",\"descriptors\":[\"street\"]}\n",
            "{\"image\":\"d.png\",\"label\":\"neutral\",\"descriptors\":[\"street\",\"party\"]}\n",
            "{\"image\":\"e.png\",\"label\":\"negative\",\"descriptors\":[\"protest\"]}\n",
            "{\"image\":\"f.png\",\"label\":\"negative\",\"descriptors\":[\"protest\",\"street\"]}\n",
        ),
    )
    .unwrap();

    let manifest = DatasetManifest::load(&path).unwrap();
    let counts = count_from_manifest(&manifest).unwrap();
    let model = fit(&counts, 1.0).unwrap();

    println!("vocabulary: {:?}", model.vocabulary);
    println!("prior:      {:?}", model.prior);

    for descriptors in [
        vec!["party".to_string()],
        vec!["street".to_string()],
        vec!["protest".to_string(), "street".to_string()],
        vec![],
    ] {
        let evidence = set_evidence(&model, &descriptors);
        let posterior = infer_posterior(&model, &evidence).unwrap();
        println!(
            "P(class | {descriptors:?}) = [{:.4}, {:.4}, {:.4}]",
            posterior[0], posterior[1], posterior[2]
        );
    }
}
