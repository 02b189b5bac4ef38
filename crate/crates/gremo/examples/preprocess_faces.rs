//! Generates a small synthetic corpus, then runs one record through the
//! crop / scale / normalize chain and prints what each stage produces.

use gremo::preprocess::{crop_faces, load_image, normalize, scale_to_64, DatasetManifest};
use gremo::synthetic::{generate_corpus, CorpusConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig { n_images: 6, seed: 42, ..CorpusConfig::default() };
    let manifest_path = generate_corpus(&cfg, dir.path()).unwrap();
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    println!("corpus: {} records at {}", manifest.records.len(), dir.path().display());

    let record = &manifest.records[0];
    println!(
        "record 0: label {:?}, {} faces, descriptors {:?}",
        record.label,
        record.faces.len(),
        record.descriptors
    );

    let image = load_image(&record.image).unwrap();
    println!("image shape {:?}", image.shape());

    let crops = crop_faces(&image, &record.faces).unwrap();
    for (i, crop) in crops.iter().enumerate() {
        let scaled = scale_to_64(crop).unwrap();
        let input = normalize(&scaled);
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in input.data() {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        println!(
            "face {i}: crop {:?} -> {:?}, values in [{lo:.3}, {hi:.3}], mean {:.3}",
            crop.shape(),
            input.shape(),
            sum / input.len() as f64
        );
    }
}
