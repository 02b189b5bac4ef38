//! Model persistence: a versioned text descriptor next to a weights blob.
//!
//! A model directory holds `model.txt` (architecture, human-readable) and
//! `weights.gmw` (named f32 tensors). Loading cross-checks the two and
//! rejects version drift, malformed descriptors, and weight mismatches as
//! three distinct errors.

use super::{Classifier, LayerParams, LayerSpec, ModelSpec, ParamStore};
use crate::blob;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const DESCRIPTOR_FILE: &str = "model.txt";
pub const WEIGHTS_FILE: &str = "weights.gmw";

const HEADER_PREFIX: &str = "gremo model ";
const VERSION: &str = "v1";

/// Text form of a model spec, one layer per line.
pub fn format_spec(spec: &ModelSpec) -> String {
    let mut out = format!(
        "{HEADER_PREFIX}{VERSION}\ninput {} {} {}\nclasses {}\n",
        spec.input_shape[0], spec.input_shape[1], spec.input_shape[2], spec.num_classes
    );
    for layer in &spec.layers {
        out.push_str(&format_layer(layer));
        out.push('\n');
    }
    out
}

/// One descriptor line per layer; also the config-file architecture syntax.
pub fn format_layer(layer: &LayerSpec) -> String {
    match *layer {
        LayerSpec::Conv { out_channels, kernel: (kh, kw), stride, padding } => format!(
            "conv out_channels={out_channels} kernel={kh}x{kw} stride={stride} padding={padding}"
        ),
        LayerSpec::Relu => "relu".to_string(),
        LayerSpec::MaxPool { kernel, stride } => {
            format!("maxpool kernel={kernel} stride={stride}")
        }
        LayerSpec::Flatten => "flatten".to_string(),
        LayerSpec::Dense { out } => format!("dense out={out}"),
        LayerSpec::Dropout { rate } => format!("dropout rate={rate}"),
        LayerSpec::Softmax => "softmax".to_string(),
    }
}

pub fn parse_spec(text: &str) -> Result<ModelSpec> {
    let bad = |line: usize, msg: String| Error::ModelFormat(format!("line {line}: {msg}"));
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("empty descriptor".into()))?;
    match header.strip_prefix(HEADER_PREFIX) {
        Some(v) if v == VERSION => {}
        Some(v) => {
            return Err(Error::ModelVersion { found: v.to_string(), expected: VERSION.into() })
        }
        None => {
            return Err(Error::ModelFormat(format!(
                "descriptor must start with {HEADER_PREFIX:?}, got {header:?}"
            )))
        }
    }

    let (ln, input_line) = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("missing input line".into()))?;
    let input_shape = match input_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["input", h, w, c] => {
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(ln, format!("bad input extent {s:?}")))
            };
            [parse(h)?, parse(w)?, parse(c)?]
        }
        _ => return Err(bad(ln, format!("expected 'input H W C', got {input_line:?}"))),
    };

    let (ln, classes_line) = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("missing classes line".into()))?;
    let num_classes = match classes_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["classes", n] => n
            .parse::<usize>()
            .map_err(|_| bad(ln, format!("bad class count {n:?}")))?,
        _ => return Err(bad(ln, format!("expected 'classes N', got {classes_line:?}"))),
    };

    let mut layers = Vec::new();
    for (ln, line) in lines {
        layers.push(parse_layer(line).map_err(|msg| bad(ln, msg))?);
    }
    Ok(ModelSpec { input_shape, num_classes, layers })
}

/// Parses a single layer line such as `dense out=512`.
pub fn parse_layer(line: &str) -> std::result::Result<LayerSpec, String> {
    let mut parts = line.split_whitespace();
    let kind = parts.next().ok_or("empty layer line")?;
    let mut kv = BTreeMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {part:?}"))?;
        if kv.insert(k, v).is_some() {
            return Err(format!("duplicate key {k:?}"));
        }
    }
    let mut take = |key: &str| kv.remove(key).ok_or_else(|| format!("missing {key}="));
    let layer = match kind {
        "conv" => {
            let (kh, kw) = parse_kernel(take("kernel")?)?;
            LayerSpec::Conv {
                out_channels: parse_num(take("out_channels")?)?,
                kernel: (kh, kw),
                stride: parse_num(take("stride")?)?,
                padding: parse_num(take("padding")?)?,
            }
        }
        "maxpool" => LayerSpec::MaxPool {
            kernel: parse_num(take("kernel")?)?,
            stride: parse_num(take("stride")?)?,
        },
        "dense" => LayerSpec::Dense { out: parse_num(take("out")?)? },
        "dropout" => {
            let v = take("rate")?;
            let rate: f64 = v.parse().map_err(|_| format!("bad rate {v:?}"))?;
            LayerSpec::Dropout { rate }
        }
        "relu" => LayerSpec::Relu,
        "flatten" => LayerSpec::Flatten,
        "softmax" => LayerSpec::Softmax,
        other => return Err(format!("unknown layer kind {other:?}")),
    };
    if let Some(k) = kv.keys().next() {
        return Err(format!("unexpected key {k:?} for {kind}"));
    }
    Ok(layer)
}

fn parse_num(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("bad number {v:?}"))
}

fn parse_kernel(v: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = v.split_once('x').ok_or_else(|| format!("kernel must be HxW, got {v:?}"))?;
    Ok((parse_num(h)?, parse_num(w)?))
}

fn tensor_names(i: usize) -> (String, String) {
    (format!("layer{i}.weights"), format!("layer{i}.bias"))
}

/// Writes `model.txt` and `weights.gmw` into `dir`, creating it if needed.
pub fn save_model(dir: &Path, spec: &ModelSpec, params: &ParamStore) -> Result<()> {
    spec.validate()?;
    if params.entries.len() != spec.layers.len() {
        return Err(Error::Internal(format!(
            "{} parameter entries for {} layers",
            params.entries.len(),
            spec.layers.len()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let desc = dir.join(DESCRIPTOR_FILE);
    std::fs::write(&desc, format_spec(spec)).map_err(|e| Error::io(&desc, e))?;
    let mut entries = Vec::new();
    for (i, entry) in params.entries.iter().enumerate() {
        if let Some(p) = entry {
            let (wname, bname) = tensor_names(i);
            entries.push((wname, &p.weights));
            entries.push((bname, &p.bias));
        }
    }
    blob::write_tensors(&dir.join(WEIGHTS_FILE), &entries)
}

/// Loads a model directory, checking the weights against the descriptor.
pub fn load_model(dir: &Path) -> Result<Classifier> {
    let desc_path = dir.join(DESCRIPTOR_FILE);
    let text = std::fs::read_to_string(&desc_path).map_err(|e| Error::io(&desc_path, e))?;
    let spec = parse_spec(&text)?;
    let expected = spec.param_shapes()?;

    let mut by_name: BTreeMap<String, crate::tensor::Tensor> =
        blob::read_tensors(&dir.join(WEIGHTS_FILE))?.into_iter().collect();

    let mut entries = Vec::with_capacity(spec.layers.len());
    for (i, shapes) in expected.iter().enumerate() {
        entries.push(match shapes {
            None => None,
            Some((w_shape, b_shape)) => {
                let (wname, bname) = tensor_names(i);
                let weights = by_name.remove(&wname).ok_or_else(|| {
                    Error::WeightsMismatch(format!("missing tensor {wname}"))
                })?;
                let bias = by_name.remove(&bname).ok_or_else(|| {
                    Error::WeightsMismatch(format!("missing tensor {bname}"))
                })?;
                if weights.shape() != &w_shape[..] {
                    return Err(Error::WeightsMismatch(format!(
                        "{wname}: expected shape {w_shape:?}, got {:?}",
                        weights.shape()
                    )));
                }
                if bias.shape() != &b_shape[..] {
                    return Err(Error::WeightsMismatch(format!(
                        "{bname}: expected shape {b_shape:?}, got {:?}",
                        bias.shape()
                    )));
                }
                Some(LayerParams { weights, bias })
            }
        });
    }
    if let Some(name) = by_name.keys().next() {
        return Err(Error::WeightsMismatch(format!(
            "blob contains tensor {name} not named by the descriptor"
        )));
    }
    Classifier::new(spec, ParamStore { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_classifier;
    use crate::tensor::Tensor;

    fn small_spec() -> ModelSpec {
        ModelSpec {
            input_shape: [6, 6, 3],
            num_classes: 3,
            layers: vec![
                LayerSpec::Conv { out_channels: 2, kernel: (3, 3), stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 4 },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { out: 3 },
                LayerSpec::Softmax,
            ],
        }
    }

    #[test]
    fn descriptor_round_trips_through_text() {
        let spec = small_spec();
        let parsed = parse_spec(&format_spec(&spec)).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn save_load_reproduces_parameters_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let c = init_classifier(small_spec(), 21).unwrap();
        save_model(dir.path(), &c.spec, &c.params).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.spec, c.spec);
        // init keeps values f32-exact, so the round trip is bit-identical
        assert_eq!(back.params, c.params);
        let input = Tensor::filled(vec![6, 6, 3], 0.25);
        assert_eq!(back.predict_probs(&input).unwrap(), c.predict_probs(&input).unwrap());
    }

    #[test]
    fn version_drift_is_its_own_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = init_classifier(small_spec(), 22).unwrap();
        save_model(dir.path(), &c.spec, &c.params).unwrap();
        let desc = dir.path().join(DESCRIPTOR_FILE);
        let text = std::fs::read_to_string(&desc).unwrap();
        std::fs::write(&desc, text.replace("model v1", "model v9")).unwrap();
        match load_model(dir.path()) {
            Err(Error::ModelVersion { found, .. }) => assert_eq!(found, "v9"),
            other => panic!("expected ModelVersion, got {other:?}"),
        }
    }

    #[test]
    fn malformed_descriptor_lines_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let c = init_classifier(small_spec(), 23).unwrap();
        save_model(dir.path(), &c.spec, &c.params).unwrap();
        let desc = dir.path().join(DESCRIPTOR_FILE);
        let text = std::fs::read_to_string(&desc).unwrap();
        std::fs::write(&desc, text.replace("dense out=4", "dense out=banana")).unwrap();
        match load_model(dir.path()) {
            Err(Error::ModelFormat(msg)) => {
                assert!(msg.contains("line 8"), "got {msg}");
                assert!(msg.contains("banana"), "got {msg}");
            }
            other => panic!("expected ModelFormat, got {other:?}"),
        }
    }

    #[test]
    fn truncated_weights_are_a_mismatch_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = init_classifier(small_spec(), 24).unwrap();
        save_model(dir.path(), &c.spec, &c.params).unwrap();
        let wpath = dir.path().join(WEIGHTS_FILE);
        let bytes = std::fs::read(&wpath).unwrap();
        std::fs::write(&wpath, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::WeightsMismatch(_))));
    }

    #[test]
    fn descriptor_weights_shape_disagreement_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = init_classifier(small_spec(), 25).unwrap();
        save_model(dir.path(), &c.spec, &c.params).unwrap();
        // change the architecture without touching the weights
        let desc = dir.path().join(DESCRIPTOR_FILE);
        let text = std::fs::read_to_string(&desc).unwrap();
        std::fs::write(&desc, text.replace("dense out=4", "dense out=5")).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::WeightsMismatch(_))));
    }

    #[test]
    fn parse_layer_rejects_unknown_kinds_and_stray_keys() {
        assert!(parse_layer("pool kernel=2").is_err());
        assert!(parse_layer("relu extra=1").is_err());
        assert!(parse_layer("conv out_channels=4 kernel=3x3 stride=1").is_err());
        assert!(parse_layer("dropout rate=half").is_err());
    }
}
