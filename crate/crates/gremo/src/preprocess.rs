//! Dataset manifests and face preprocessing.
//!
//! A manifest is JSON Lines: one record per group image with an optional
//! label, face boxes as [x, y, w, h], and free-text scene descriptors.
//! Preprocessing crops each face, scales it onto a 64x64 canvas preserving
//! aspect ratio, and maps pixel values to [0, 1].

use crate::error::{Error, Result};
use crate::tensor::{bilinear_sample, Tensor};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

/// Side length of the network input volume.
pub const INPUT_SIDE: usize = 64;

/// The three group emotion classes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Neutral,
    Negative,
}

pub const LABELS: [Label; 3] = [Label::Positive, Label::Neutral, Label::Negative];

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Positive => 0,
            Label::Neutral => 1,
            Label::Negative => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        LABELS.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Neutral => "neutral",
            Label::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "positive" => Some(Label::Positive),
            "neutral" => Some(Label::Neutral),
            "negative" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Face bounding box in pixel coordinates; may extend past the image edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

/// One group image: path, optional label, face boxes, scene descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image: PathBuf,
    pub label: Option<Label>,
    pub faces: Vec<FaceBox>,
    pub descriptors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    image: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    faces: Vec<[i64; 4]>,
    #[serde(default)]
    descriptors: Vec<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    image: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    faces: Vec<[i64; 4]>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    descriptors: Vec<&'a str>,
}

/// Trim and lowercase a descriptor; empty results are rejected by the caller.
pub fn normalize_descriptor(s: &str) -> String {
    s.trim().to_lowercase()
}

impl DatasetManifest {
    /// Reads JSON Lines; image paths are resolved relative to the manifest's
    /// directory. Blank lines are skipped.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let err = |line: usize, msg: String| Error::Manifest {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut records = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let ln = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| err(ln, e.to_string()))?;
            let label = match &raw.label {
                None => None,
                Some(s) => Some(
                    Label::parse(s)
                        .ok_or_else(|| err(ln, format!("unknown label {s:?}")))?,
                ),
            };
            let mut descriptors = Vec::new();
            for d in &raw.descriptors {
                let d = normalize_descriptor(d);
                if d.is_empty() {
                    return Err(err(ln, "empty descriptor".into()));
                }
                descriptors.push(d);
            }
            records.push(ImageRecord {
                image: base.join(&raw.image),
                label,
                faces: raw
                    .faces
                    .iter()
                    .map(|&[x, y, w, h]| FaceBox { x, y, w, h })
                    .collect(),
                descriptors,
            });
        }
        Ok(DatasetManifest { records })
    }

    /// Writes JSON Lines with image paths as given in the records.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for r in &self.records {
            let out = OutRecord {
                image: r.image.to_str().ok_or_else(|| {
                    Error::InvalidArg(format!("non-UTF-8 image path {:?}", r.image))
                })?,
                label: r.label.map(Label::as_str),
                faces: r.faces.iter().map(|b| [b.x, b.y, b.w, b.h]).collect(),
                descriptors: r.descriptors.iter().map(String::as_str).collect(),
            };
            buf.push_str(&serde_json::to_string(&out).map_err(|e| Error::Io {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?);
            buf.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Decodes a PNG or JPEG into [h, w, 3] with values in 0..=255.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::ImageRead { path: path.display().to_string(), msg: e.to_string() })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(f64::from).collect();
    Tensor::new(vec![h, w, 3], data)
}

/// Encodes [h, w, 3] values in 0..=255 as an RGB PNG.
pub fn save_image(path: &Path, tensor: &Tensor) -> Result<()> {
    if tensor.rank() != 3 || tensor.shape()[2] != 3 {
        return Err(Error::InvalidArg(format!(
            "expected an [h, w, 3] tensor, got {:?}",
            tensor.shape()
        )));
    }
    let (h, w) = (tensor.shape()[0], tensor.shape()[1]);
    let bytes: Vec<u8> = tensor
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .ok_or_else(|| Error::Internal("pixel buffer size mismatch".into()))?;
    img.save(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })
}

/// Pixel-exact crop of `bx` clamped to the image; rejects boxes that leave
/// no area inside.
pub fn crop_face(image: &Tensor, bx: &FaceBox) -> Result<Tensor> {
    if image.rank() != 3 {
        return Err(Error::InvalidArg(format!(
            "crop expects an [h, w, c] image, got {:?}",
            image.shape()
        )));
    }
    let (h, w, c) = (image.shape()[0] as i64, image.shape()[1] as i64, image.shape()[2]);
    let x0 = bx.x.clamp(0, w);
    let y0 = bx.y.clamp(0, h);
    let x1 = bx.x.saturating_add(bx.w).clamp(x0, w);
    let y1 = bx.y.saturating_add(bx.h).clamp(y0, h);
    if x1 - x0 < 1 || y1 - y0 < 1 {
        return Err(Error::EmptyBox { index: 0 });
    }
    let (ch, cw) = ((y1 - y0) as usize, (x1 - x0) as usize);
    let mut out = Tensor::zeros(vec![ch, cw, c]);
    for y in 0..ch {
        let src_row = image.at3(y0 as usize + y, x0 as usize, 0);
        let dst_row = y * cw * c;
        out.data_mut()[dst_row..dst_row + cw * c]
            .copy_from_slice(&image.data()[src_row..src_row + cw * c]);
    }
    Ok(out)
}

/// Crops every box, attributing failures to their box index.
pub fn crop_faces(image: &Tensor, boxes: &[FaceBox]) -> Result<Vec<Tensor>> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, bx)| {
            crop_face(image, bx).map_err(|e| match e {
                Error::EmptyBox { .. } => Error::EmptyBox { index: i },
                other => other,
            })
        })
        .collect()
}

/// Bilinear resize to exactly (out_h, out_w).
fn bilinear_resize(src: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w, c) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    let mut out = Tensor::zeros(vec![out_h, out_w, c]);
    let sy_scale = h as f64 / out_h as f64;
    let sx_scale = w as f64 / out_w as f64;
    let od = out.data_mut();
    let mut oi = 0;
    for y in 0..out_h {
        let sy = (y as f64 + 0.5) * sy_scale - 0.5;
        for x in 0..out_w {
            let sx = (x as f64 + 0.5) * sx_scale - 0.5;
            for ci in 0..c {
                od[oi] = bilinear_sample(src, sy, sx, ci);
                oi += 1;
            }
        }
    }
    out
}

/// Scales a crop so its longest side is 64 and centers it on a zero 64x64
/// canvas, preserving aspect ratio.
pub fn scale_to_64(crop: &Tensor) -> Result<Tensor> {
    if crop.rank() != 3 || crop.shape()[0] == 0 || crop.shape()[1] == 0 {
        return Err(Error::InvalidArg(format!(
            "scale expects a non-empty [h, w, c] crop, got {:?}",
            crop.shape()
        )));
    }
    let (h, w, c) = (crop.shape()[0], crop.shape()[1], crop.shape()[2]);
    let side = INPUT_SIDE as f64;
    let longest = h.max(w) as f64;
    let content_h = ((h as f64 * side / longest).round() as usize).clamp(1, INPUT_SIDE);
    let content_w = ((w as f64 * side / longest).round() as usize).clamp(1, INPUT_SIDE);
    let scaled = bilinear_resize(crop, content_h, content_w);
    let mut canvas = Tensor::zeros(vec![INPUT_SIDE, INPUT_SIDE, c]);
    let oy = (INPUT_SIDE - content_h) / 2;
    let ox = (INPUT_SIDE - content_w) / 2;
    for y in 0..content_h {
        let dst = canvas.at3(oy + y, ox, 0);
        let src = scaled.at3(y, 0, 0);
        canvas.data_mut()[dst..dst + content_w * c]
            .copy_from_slice(&scaled.data()[src..src + content_w * c]);
    }
    Ok(canvas)
}

/// Maps 0..=255 pixel values to [0, 1].
pub fn normalize(image: &Tensor) -> Tensor {
    image.map(|v| v / 255.0)
}

/// One preprocessed face with its provenance in the manifest.
#[derive(Debug, Clone)]
pub struct FaceSample {
    /// Normalized 64x64x3 input volume.
    pub tensor: Tensor,
    pub label: Label,
    pub record: usize,
    pub face: usize,
    pub image: PathBuf,
}

/// A record or box that contributed no face, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedFace {
    pub record: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face: Option<usize>,
    pub image: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IsolatedDataset {
    pub faces: Vec<FaceSample>,
    pub skipped: Vec<SkippedFace>,
}

/// Crops, scales, and normalizes every face of every labeled record.
///
/// Unreadable images and rejected boxes are skipped with a reason rather
/// than aborting the run; an unlabeled record or a manifest yielding no
/// faces at all is an error.
pub fn build_isolated_dataset(manifest: &DatasetManifest) -> Result<IsolatedDataset> {
    let mut out = IsolatedDataset::default();
    for (ri, record) in manifest.records.iter().enumerate() {
        let label = record.label.ok_or(Error::UnlabeledRecord { index: ri })?;
        let image_name = record.image.display().to_string();
        if record.faces.is_empty() {
            out.skipped.push(SkippedFace {
                record: ri,
                face: None,
                image: image_name,
                reason: "no face boxes".into(),
            });
            continue;
        }
        let image = match load_image(&record.image) {
            Ok(t) => t,
            Err(e) => {
                out.skipped.push(SkippedFace {
                    record: ri,
                    face: None,
                    image: image_name,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for (fi, bx) in record.faces.iter().enumerate() {
            match crop_face(&image, bx) {
                Ok(crop) => {
                    let tensor = normalize(&scale_to_64(&crop)?);
                    out.faces.push(FaceSample {
                        tensor,
                        label,
                        record: ri,
                        face: fi,
                        image: record.image.clone(),
                    });
                }
                Err(e) => out.skipped.push(SkippedFace {
                    record: ri,
                    face: Some(fi),
                    image: image_name.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    if out.faces.is_empty() {
        return Err(Error::NoFaces);
    }
    Ok(out)
}
