//! Model files: a JSON envelope carrying a CRC32 of the exact payload text.
//!
//! Layout: `{"format":"glyphspot-model","version":1,"kind":K,"checksum":C,"payload":P}`
//! with the payload last, so the payload bytes can be checksummed before they
//! are parsed. Numeric arrays are base64 little-endian `f32` (`f64` for PCA).

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::cascade::{CascadeMode, CascadeModel};
use super::model::{ClassifierModel, FeatureSpec};
use crate::classifiers::{KnnModel, SvmModel, SvmTrainMeta};
use crate::encoder::{BatchNorm, Dense, EncoderArch, EncoderModel, EncoderTrainMeta};
use crate::error::{Error, Result};
use crate::features::{HogParams, PcaModel};
use crate::types::Label;

pub const MODEL_FORMAT: &str = "glyphspot-model";
pub const MODEL_VERSION: u32 = 1;
const PAYLOAD_KEY: &str = ",\"payload\":";

fn f32_b64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    B64.encode(bytes)
}

fn f64_b64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| bad(format!("missing field {key:?}")))
}

fn as_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    field(v, key)?
        .as_str()
        .ok_or_else(|| bad(format!("{key:?} is not a string")))
}

fn as_usize(v: &Value, key: &str) -> Result<usize> {
    field(v, key)?
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| bad(format!("{key:?} is not an unsigned integer")))
}

fn decode_bytes(v: &Value, key: &str) -> Result<Vec<u8>> {
    B64.decode(as_str(v, key)?).map_err(|e| bad(format!("{key:?}: {e}")))
}

fn read_f32s(v: &Value, key: &str) -> Result<Vec<f64>> {
    parse_f32s(as_str(v, key)?, key)
}

fn parse_f32s(text: &str, key: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(text).map_err(|e| bad(format!("{key:?}: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(bad(format!("{key:?}: length not a multiple of 4")));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect())
}

fn read_f64s(v: &Value, key: &str) -> Result<Vec<f64>> {
    let bytes = decode_bytes(v, key)?;
    if bytes.len() % 8 != 0 {
        return Err(bad(format!("{key:?}: length not a multiple of 8")));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn sized(values: Vec<f64>, len: usize, key: &str) -> Result<Vec<f64>> {
    if values.len() != len {
        return Err(bad(format!("{key:?}: expected {len} values, found {}", values.len())));
    }
    Ok(values)
}

fn rows(flat: Vec<f64>, n: usize, d: usize, key: &str) -> Result<Vec<Vec<f64>>> {
    let flat = sized(flat, n * d, key)?;
    Ok(if d == 0 {
        vec![Vec::new(); n]
    } else {
        flat.chunks(d).map(<[f64]>::to_vec).collect()
    })
}

fn features_payload(f: &FeatureSpec) -> Value {
    let flat: Vec<f64> = f.pca.components.iter().flatten().copied().collect();
    json!({
        "hog": serde_json::to_value(f.hog).expect("hog params serialize"),
        "pca": {
            "dim": f.pca.input_dim(),
            "k": f.pca.k(),
            "mean": f64_b64(&f.pca.mean),
            "components": f64_b64(&flat),
            "eigenvalues": f64_b64(&f.pca.eigenvalues),
            "total_variance": f64_b64(&[f.pca.total_variance]),
        }
    })
}

fn features_from(v: &Value) -> Result<FeatureSpec> {
    let hog: HogParams =
        serde_json::from_value(field(v, "hog")?.clone()).map_err(|e| bad(format!("hog params: {e}")))?;
    let p = field(v, "pca")?;
    let (dim, k) = (as_usize(p, "dim")?, as_usize(p, "k")?);
    Ok(FeatureSpec {
        hog,
        pca: PcaModel {
            mean: sized(read_f64s(p, "mean")?, dim, "mean")?,
            components: rows(read_f64s(p, "components")?, k, dim, "components")?,
            eigenvalues: sized(read_f64s(p, "eigenvalues")?, k, "eigenvalues")?,
            total_variance: sized(read_f64s(p, "total_variance")?, 1, "total_variance")?[0],
        },
    })
}

fn dense_payload(d: &Dense) -> Value {
    json!({"inputs": d.inputs, "outputs": d.outputs, "weights": f32_b64(&d.weights), "bias": f32_b64(&d.bias)})
}

fn dense_from(v: &Value) -> Result<Dense> {
    let (inputs, outputs) = (as_usize(v, "inputs")?, as_usize(v, "outputs")?);
    Ok(Dense {
        inputs,
        outputs,
        weights: sized(read_f32s(v, "weights")?, inputs * outputs, "weights")?,
        bias: sized(read_f32s(v, "bias")?, outputs, "bias")?,
    })
}

fn payload(model: &ClassifierModel) -> Value {
    match model {
        ClassifierModel::Knn { features, model } => {
            let flat: Vec<f64> = model.points.iter().flatten().copied().collect();
            let labels: Vec<u8> = model.labels.iter().map(|l| l.as_u8()).collect();
            json!({
                "features": features_payload(features),
                "k": model.k,
                "n": model.points.len(),
                "dim": model.dim(),
                "points": f32_b64(&flat),
                "labels": B64.encode(labels),
            })
        }
        ClassifierModel::Svm { features, model } => json!({
            "features": features_payload(features),
            "w": f32_b64(&model.w),
            "b": f32_b64(&[model.b]),
            "c": f64_b64(&[model.c]),
            "epochs": model.meta.epochs,
            "seed": model.meta.seed,
            "final_objective": f64_b64(&[model.meta.final_objective]),
            "objective_history": f64_b64(&model.meta.objective_history),
        }),
        ClassifierModel::Encoder(m) => json!({
            "input_height": m.arch.input_height,
            "input_width": m.arch.input_width,
            "channels": m.arch.channels,
            "hidden": m.arch.hidden,
            "convs": m.convs.iter().map(|c| f32_b64(&c.weights)).collect::<Vec<_>>(),
            "norms": m.norms.iter().map(|bn| json!({
                "gamma": f32_b64(&bn.gamma),
                "beta": f32_b64(&bn.beta),
                "running_mean": f32_b64(&bn.running_mean),
                "running_var": f32_b64(&bn.running_var),
                "epsilon": f64_b64(&[bn.epsilon]),
                "momentum": f64_b64(&[bn.momentum]),
            })).collect::<Vec<_>>(),
            "dense1": dense_payload(&m.dense1),
            "dense2": dense_payload(&m.dense2),
            "seed": m.meta.seed,
            "epochs": m.meta.epochs,
            "lr": f64_b64(&[m.meta.lr]),
            "final_loss": f64_b64(&[m.meta.final_loss]),
        }),
        ClassifierModel::Cascade(c) => json!({
            "first": {"kind": c.first.kind(), "payload": payload(&c.first)},
            "second": {"kind": c.second.kind(), "payload": payload(&c.second)},
            "mode": serde_json::to_value(c.mode).expect("mode serializes"),
            "threshold": f64_b64(&[c.threshold]),
        }),
    }
}

fn scalar(v: &Value, key: &str, f64_width: bool) -> Result<f64> {
    let values = if f64_width {
        read_f64s(v, key)?
    } else {
        read_f32s(v, key)?
    };
    Ok(sized(values, 1, key)?[0])
}

fn from_payload(kind: &str, v: &Value) -> Result<ClassifierModel> {
    if !v.is_object() {
        return Err(bad("payload is not an object"));
    }
    let model = match kind {
        "knn" => {
            let (n, dim) = (as_usize(v, "n")?, as_usize(v, "dim")?);
            let labels = decode_bytes(v, "labels")?
                .into_iter()
                .map(|b| match b {
                    0 | 1 => Ok(Label::from_bit(b)),
                    other => Err(bad(format!("label byte {other}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if labels.len() != n {
                return Err(bad(format!("expected {n} labels, found {}", labels.len())));
            }
            ClassifierModel::Knn {
                features: features_from(field(v, "features")?)?,
                model: KnnModel::new(
                    rows(read_f32s(v, "points")?, n, dim, "points")?,
                    labels,
                    as_usize(v, "k")?,
                )?,
            }
        }
        "svm" => ClassifierModel::Svm {
            features: features_from(field(v, "features")?)?,
            model: SvmModel {
                w: read_f32s(v, "w")?,
                b: scalar(v, "b", false)?,
                c: scalar(v, "c", true)?,
                meta: SvmTrainMeta {
                    epochs: as_usize(v, "epochs")?,
                    seed: field(v, "seed")?.as_u64().ok_or_else(|| bad("seed"))?,
                    final_objective: scalar(v, "final_objective", true)?,
                    objective_history: read_f64s(v, "objective_history")?,
                },
            },
        },
        "encoder" => {
            let channels: Vec<usize> =
                serde_json::from_value(field(v, "channels")?.clone()).map_err(|e| bad(format!("channels: {e}")))?;
            let arch = EncoderArch {
                input_height: as_usize(v, "input_height")?,
                input_width: as_usize(v, "input_width")?,
                channels,
                hidden: as_usize(v, "hidden")?,
            };
            let mut m = EncoderModel::zeros(arch)?;
            let convs = field(v, "convs")?.as_array().ok_or_else(|| bad("convs"))?;
            let norms = field(v, "norms")?.as_array().ok_or_else(|| bad("norms"))?;
            if convs.len() != m.convs.len() || norms.len() != m.norms.len() {
                return Err(bad("layer count does not match channel list"));
            }
            for (conv, raw) in m.convs.iter_mut().zip(convs) {
                let text = raw.as_str().ok_or_else(|| bad("conv weights are not a string"))?;
                conv.weights = sized(parse_f32s(text, "convs")?, conv.weights.len(), "convs")?;
            }
            for (bn, raw) in m.norms.iter_mut().zip(norms) {
                let c = bn.channels();
                *bn = BatchNorm {
                    gamma: sized(read_f32s(raw, "gamma")?, c, "gamma")?,
                    beta: sized(read_f32s(raw, "beta")?, c, "beta")?,
                    running_mean: sized(read_f32s(raw, "running_mean")?, c, "running_mean")?,
                    running_var: sized(read_f32s(raw, "running_var")?, c, "running_var")?,
                    epsilon: scalar(raw, "epsilon", true)?,
                    momentum: scalar(raw, "momentum", true)?,
                };
            }
            let (d1, d2) = (dense_from(field(v, "dense1")?)?, dense_from(field(v, "dense2")?)?);
            if (d1.inputs, d1.outputs, d2.inputs, d2.outputs)
                != (m.dense1.inputs, m.dense1.outputs, m.dense2.inputs, m.dense2.outputs)
            {
                return Err(bad("dense layer shapes do not match architecture"));
            }
            m.dense1 = d1;
            m.dense2 = d2;
            m.meta = EncoderTrainMeta {
                seed: field(v, "seed")?.as_u64().ok_or_else(|| bad("seed"))?,
                epochs: as_usize(v, "epochs")?,
                lr: scalar(v, "lr", true)?,
                final_loss: scalar(v, "final_loss", true)?,
            };
            ClassifierModel::Encoder(m)
        }
        "cascade" => {
            let stage = |key: &str| -> Result<ClassifierModel> {
                let s = field(v, key)?;
                from_payload(as_str(s, "kind")?, field(s, "payload")?)
            };
            let mode: CascadeMode =
                serde_json::from_value(field(v, "mode")?.clone()).map_err(|e| bad(format!("mode: {e}")))?;
            ClassifierModel::Cascade(Box::new(CascadeModel::new(
                stage("first")?,
                stage("second")?,
                mode,
                scalar(v, "threshold", true)?,
            )?))
        }
        other => return Err(bad(format!("unknown model kind {other:?}"))),
    };
    model.validate()?;
    Ok(model)
}

fn payload_text(model: &ClassifierModel) -> String {
    serde_json::to_string(&payload(model)).expect("payload serializes")
}

/// `kind-crc32` of the serialized payload; stable across save/load.
pub fn model_id(model: &ClassifierModel) -> String {
    format!(
        "{}-{:08x}",
        model.kind(),
        crc32fast::hash(payload_text(model).as_bytes())
    )
}

pub fn model_to_bytes(model: &ClassifierModel) -> Vec<u8> {
    let text = payload_text(model);
    let checksum = crc32fast::hash(text.as_bytes());
    format!(
        "{{\"format\":\"{MODEL_FORMAT}\",\"version\":{MODEL_VERSION},\"kind\":\"{}\",\"checksum\":{checksum}{PAYLOAD_KEY}{text}}}\n",
        model.kind()
    )
    .into_bytes()
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    checksum: u32,
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ClassifierModel> {
    let text = std::str::from_utf8(bytes).map_err(|_| bad("model file is not UTF-8"))?;
    let split = text.find(PAYLOAD_KEY).ok_or_else(|| bad("no payload"))?;
    let header: Header =
        serde_json::from_str(&format!("{}}}", &text[..split])).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(bad(format!("format {:?}", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Version(header.version));
    }
    let body = text[split + PAYLOAD_KEY.len()..].trim_end();
    let body = body.strip_suffix('}').ok_or_else(|| bad("unterminated envelope"))?;
    let computed = crc32fast::hash(body.as_bytes());
    if computed != header.checksum {
        return Err(Error::Checksum {
            stored: header.checksum,
            computed,
        });
    }
    let value: Value = serde_json::from_str(body).map_err(|e| bad(format!("payload: {e}")))?;
    from_payload(&header.kind, &value)
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
