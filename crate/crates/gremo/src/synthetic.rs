//! Deterministic synthetic data generators.
//!
//! Two artifacts: a group-image corpus on disk (PNG files plus a manifest)
//! whose faces carry a class-colored pattern and whose descriptors come from
//! class-conditional vocabularies, and an in-memory single-face task for
//! training sanity checks. Both derive every draw from a per-index RNG
//! stream, so record i is identical no matter how many records are asked
//! for.

use std::path::{Path, PathBuf};

use rand::RngExt;

use crate::error::{Error, Result};
use crate::nn::train::Sample;
use crate::preprocess::{
    save_image, DatasetManifest, FaceBox, ImageRecord, Label, INPUT_SIDE,
};
use crate::rng::{stream_rng, STREAM_SYNTH};
use crate::tensor::Tensor;

/// Scene vocabulary per class; words are disjoint across classes so the
/// descriptor channel carries signal exactly as strong as the noise allows.
pub const SCENE_WORDS: [[&str; 4]; 3] = [
    ["party", "celebration", "parade", "wedding"],
    ["street", "meeting", "museum", "queue"],
    ["protest", "funeral", "riot", "accident"],
];

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_images: usize,
    pub seed: u64,
    /// Chance a face carries another class's color pattern. The manifest
    /// label stays the group truth, so this is label noise from the
    /// classifier's point of view.
    pub face_noise: f64,
    /// Chance a descriptor is drawn from another class's vocabulary.
    pub descriptor_noise: f64,
    pub image_side: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_images: 600,
            seed: 0,
            face_noise: 0.2,
            descriptor_noise: 0.3,
            image_side: 128,
        }
    }
}

fn other_class(y: usize, rng: &mut impl rand::Rng) -> usize {
    (y + 1 + rng.random_range(0..2)) % 3
}

/// Writes `images/img_NNNN.png` plus `manifest.jsonl` under `dir` and
/// returns the manifest path. Labels cycle through the three classes; each
/// image holds 1 to 3 faces placed in distinct quadrants, so boxes never
/// overlap.
pub fn generate_corpus(cfg: &CorpusConfig, dir: &Path) -> Result<PathBuf> {
    if cfg.n_images == 0 {
        return Err(Error::InvalidArg("corpus needs at least one image".into()));
    }
    if cfg.image_side < 64 {
        return Err(Error::InvalidArg("corpus image side must be at least 64".into()));
    }
    for p in [cfg.face_noise, cfg.descriptor_noise] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArg(format!("noise rate {p} outside [0,1]")));
        }
    }
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let side = cfg.image_side;
    let half = side / 2;
    let mut records = Vec::with_capacity(cfg.n_images);
    for i in 0..cfg.n_images {
        let mut rng = stream_rng(cfg.seed, STREAM_SYNTH, i as u64);
        let y = i % 3;

        let mut img = Tensor::zeros(vec![side, side, 3]);
        for py in 0..side {
            for px in 0..side {
                let g = 40.0 + rng.random::<f64>() * 40.0;
                for c in 0..3 {
                    let idx = img.at3(py, px, c);
                    img.data_mut()[idx] = g;
                }
            }
        }

        let n_faces = rng.random_range(1..=3);
        let mut cells = [0usize, 1, 2, 3];
        for k in (1..cells.len()).rev() {
            cells.swap(k, rng.random_range(0..=k));
        }
        let mut faces = Vec::with_capacity(n_faces);
        for &cell in &cells[..n_faces] {
            let (cell_x, cell_y) = ((cell % 2) * half, (cell / 2) * half);
            let margin = 2;
            let s = rng.random_range(half / 2..half - 2 * margin);
            let ox = margin + rng.random_range(0..=half - 2 * margin - s);
            let oy = margin + rng.random_range(0..=half - 2 * margin - s);
            let bx = FaceBox {
                x: (cell_x + ox) as i64,
                y: (cell_y + oy) as i64,
                w: s as i64,
                h: s as i64,
            };
            let shown = if rng.random_bool(cfg.face_noise) { other_class(y, &mut rng) } else { y };
            for py in bx.y..bx.y + bx.h {
                for px in bx.x..bx.x + bx.w {
                    for c in 0..3 {
                        let v = if c == shown {
                            170.0 + rng.random::<f64>() * 80.0
                        } else {
                            rng.random::<f64>() * 60.0
                        };
                        let idx = img.at3(py as usize, px as usize, c);
                        img.data_mut()[idx] = v;
                    }
                }
            }
            faces.push(bx);
        }

        let n_desc = rng.random_range(1..=3);
        let mut descriptors = Vec::with_capacity(n_desc);
        for _ in 0..n_desc {
            let src =
                if rng.random_bool(cfg.descriptor_noise) { other_class(y, &mut rng) } else { y };
            descriptors.push(SCENE_WORDS[src][rng.random_range(0..4)].to_string());
        }

        let name = format!("img_{i:04}.png");
        save_image(&image_dir.join(&name), &img)?;
        records.push(ImageRecord {
            image: PathBuf::from("images").join(&name),
            label: Some(Label::from_index(y).expect("y < 3")),
            faces,
            descriptors,
        });
    }

    let manifest_path = dir.join("manifest.jsonl");
    DatasetManifest { records }.save(&manifest_path)?;
    Ok(manifest_path)
}

/// Balanced in-memory face task: 64x64x3 inputs in [0,1] whose dominant
/// channel encodes the class. Every image also carries a private brightness
/// signature (small per-channel offsets plus an occasionally large grey
/// shift) that never disturbs the cross-channel class signal but lets a
/// high-capacity model tell individual training images apart.
/// `pattern_noise` flips a sample's pattern to a wrong class while keeping
/// its label, capping the accuracy a non-memorizing model can reach.
pub fn generate_face_task(n: usize, seed: u64, pattern_noise: f64) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, STREAM_SYNTH, i as u64);
        let label = i % 3;
        let shown = if pattern_noise > 0.0 && rng.random_bool(pattern_noise) {
            other_class(label, &mut rng)
        } else {
            label
        };
        let offset: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.06..0.06));
        let brightness = if rng.random_bool(0.3) {
            rng.random_range(-0.28..0.28)
        } else {
            rng.random_range(-0.05..0.05)
        };
        let mut t = Tensor::zeros(vec![INPUT_SIDE, INPUT_SIDE, 3]);
        for py in 0..INPUT_SIDE {
            for px in 0..INPUT_SIDE {
                for c in 0..3 {
                    let signal = if c == shown { 0.16 } else { 0.0 };
                    let v =
                        0.35 + 0.12 * rng.random::<f64>() + offset[c] + brightness + signal;
                    let idx = t.at3(py, px, c);
                    t.data_mut()[idx] = v;
                }
            }
        }
        samples.push(Sample { input: t, label });
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::normalize_descriptor;

    fn boxes_overlap(a: &FaceBox, b: &FaceBox) -> bool {
        a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h
    }

    #[test]
    fn corpus_is_balanced_and_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig { n_images: 12, ..CorpusConfig::default() };
        let manifest_path = generate_corpus(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.records.len(), 12);

        let mut per_class = [0; 3];
        let vocab: Vec<String> = SCENE_WORDS
            .iter()
            .flatten()
            .map(|w| normalize_descriptor(w))
            .collect();
        for r in &manifest.records {
            per_class[r.label.unwrap().index()] += 1;
            assert!((1..=3).contains(&r.faces.len()));
            assert!((1..=3).contains(&r.descriptors.len()));
            for d in &r.descriptors {
                assert!(vocab.contains(d), "unknown descriptor {d}");
            }
            for (i, a) in r.faces.iter().enumerate() {
                assert!(a.x >= 0 && a.y >= 0 && a.w > 0 && a.h > 0);
                assert!(a.x + a.w <= cfg.image_side as i64);
                assert!(a.y + a.h <= cfg.image_side as i64);
                for b in &r.faces[i + 1..] {
                    assert!(!boxes_overlap(a, b), "faces overlap in {:?}", r.image);
                }
            }
            let img = crate::preprocess::load_image(&r.image).unwrap();
            assert_eq!(img.shape(), &[cfg.image_side, cfg.image_side, 3]);
        }
        assert_eq!(per_class, [4, 4, 4]);
    }

    #[test]
    fn corpus_generation_is_byte_deterministic() {
        let cfg = CorpusConfig { n_images: 5, ..CorpusConfig::default() };
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = generate_corpus(&cfg, da.path()).unwrap();
        let mb = generate_corpus(&cfg, db.path()).unwrap();
        assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
        let png = |d: &Path| std::fs::read(d.join("images/img_0003.png")).unwrap();
        assert_eq!(png(da.path()), png(db.path()));
    }

    #[test]
    fn records_do_not_depend_on_corpus_size() {
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let small = CorpusConfig { n_images: 4, seed: 9, ..CorpusConfig::default() };
        let large = CorpusConfig { n_images: 8, seed: 9, ..CorpusConfig::default() };
        let ma = generate_corpus(&small, da.path()).unwrap();
        let mb = generate_corpus(&large, db.path()).unwrap();
        let lines = |p: &Path| -> Vec<String> {
            std::fs::read_to_string(p).unwrap().lines().map(String::from).collect()
        };
        assert_eq!(lines(&ma), lines(&mb)[..4].to_vec());
        let png = |d: &Path| std::fs::read(d.join("images/img_0002.png")).unwrap();
        assert_eq!(png(da.path()), png(db.path()));
    }

    #[test]
    fn degenerate_corpus_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = CorpusConfig { n_images: 0, ..CorpusConfig::default() };
        assert!(generate_corpus(&cfg, dir.path()).is_err());
        cfg.n_images = 1;
        cfg.image_side = 32;
        assert!(generate_corpus(&cfg, dir.path()).is_err());
        cfg.image_side = 128;
        cfg.face_noise = 1.5;
        assert!(generate_corpus(&cfg, dir.path()).is_err());
    }

    #[test]
    fn face_task_is_balanced_and_separable() {
        let samples = generate_face_task(30, 7, 0.0);
        assert_eq!(samples.len(), 30);
        let mut per_class = [0; 3];
        for s in &samples {
            per_class[s.label] += 1;
            assert_eq!(s.input.shape(), &[64, 64, 3]);
            assert!(s.input.data().iter().all(|v| (0.0..=1.0).contains(v)));
            // dominant channel mean clears the others by construction
            let mut means = [0.0; 3];
            for (i, v) in s.input.data().iter().enumerate() {
                means[i % 3] += v;
            }
            let own = means[s.label];
            for (c, m) in means.iter().enumerate() {
                if c != s.label {
                    assert!(own > *m, "class {} channel means {means:?}", s.label);
                }
            }
        }
        assert_eq!(per_class, [10, 10, 10]);
    }

    #[test]
    fn pattern_noise_flips_roughly_the_stated_fraction() {
        let samples = generate_face_task(300, 1, 0.2);
        let mut flipped = 0;
        for s in &samples {
            let mut means = [0.0; 3];
            for (i, v) in s.input.data().iter().enumerate() {
                means[i % 3] += v;
            }
            let shown = crate::tensor::argmax(&means);
            if shown != s.label {
                flipped += 1;
            }
        }
        assert!((30..=90).contains(&flipped), "flipped {flipped} of 300");
    }

    #[test]
    fn face_task_is_deterministic() {
        let a = generate_face_task(6, 3, 0.1);
        let b = generate_face_task(6, 3, 0.1);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.input.data(), y.input.data());
        }
    }
}
