//! Little-endian float32 payloads with a JSON sidecar.
//!
//! `name.bin` holds the C-order samples and `name.json` describes them:
//! `{"shape": [...], "kind": "cube|mask|measurement|checkpoint", "cfa":
//! "rggb|none", "B": frames, ...}`. Cubes are stored as `[B, C, H, W]`,
//! masks as `[B, H, W]` and measurements as `[H, W]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Result, SciError};
use crate::model::{MaskStack, Measurement, NoiseRecord, Plane, VideoCube};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Cube,
    Mask,
    Measurement,
    Checkpoint,
}

impl TensorKind {
    pub fn tag(self) -> &'static str {
        match self {
            TensorKind::Cube => "cube",
            TensorKind::Mask => "mask",
            TensorKind::Measurement => "measurement",
            TensorKind::Checkpoint => "checkpoint",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "cube" => Ok(TensorKind::Cube),
            "mask" => Ok(TensorKind::Mask),
            "measurement" => Ok(TensorKind::Measurement),
            "checkpoint" => Ok(TensorKind::Checkpoint),
            other => Err(SciError::Format(format!("unknown tensor kind '{other}'"))),
        }
    }
}

/// Decoded sidecar plus payload.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub meta: Map<String, Value>,
}

/// `path` with its extension replaced by `.bin` / `.json`.
pub fn tensor_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("json"))
}

fn encode_f32<T: Real>(data: &[T]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 * data.len());
    for v in data {
        bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    bytes
}

/// SHA-256 (hex) of a tensor's float32 payload.
pub fn payload_digest<T: Real>(data: &[T]) -> String {
    hex::encode(Sha256::digest(encode_f32(data)))
}

pub fn write_raw<T: Real>(
    path: &Path,
    kind: TensorKind,
    shape: &[usize],
    data: &[T],
    mut meta: Map<String, Value>,
) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(SciError::DimensionMismatch(format!(
            "shape {shape:?} vs {} values",
            data.len()
        )));
    }
    let (bin, side) = tensor_paths(path);
    if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SciError::io(dir, e))?;
    }
    meta.insert("shape".into(), json!(shape));
    meta.insert("kind".into(), json!(kind.tag()));
    meta.insert("dtype".into(), json!("float32"));
    meta.insert("byte_order".into(), json!("little"));
    meta.entry("cfa").or_insert(json!("none"));
    let text = serde_json::to_string_pretty(&Value::Object(meta)).expect("sidecar serializes");
    fs::write(&bin, encode_f32(data)).map_err(|e| SciError::io(&bin, e))?;
    fs::write(&side, text + "\n").map_err(|e| SciError::io(&side, e))?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<RawTensor> {
    let (bin, side) = tensor_paths(path);
    let text = fs::read_to_string(&side).map_err(|e| SciError::io(&side, e))?;
    let mut meta: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(SciError::Format(format!("{}: sidecar is not an object", side.display()))),
        Err(e) => return Err(SciError::Format(format!("{}: {e}", side.display()))),
    };
    let kind = meta
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| SciError::Format(format!("{}: missing 'kind'", side.display())))
        .and_then(TensorKind::parse)?;
    let shape: Vec<usize> = meta
        .get("shape")
        .and_then(Value::as_array)
        .and_then(|a| a.iter().map(|v| v.as_u64().map(|n| n as usize)).collect())
        .ok_or_else(|| SciError::Format(format!("{}: missing or invalid 'shape'", side.display())))?;
    if let Some(order) = meta.get("byte_order").and_then(Value::as_str) {
        if order != "little" {
            return Err(SciError::Format(format!("unsupported byte order '{order}'")));
        }
    }
    let bytes = fs::read(&bin).map_err(|e| SciError::io(&bin, e))?;
    let count: usize = shape.iter().product();
    if bytes.len() != 4 * count {
        return Err(SciError::Format(format!(
            "{}: payload has {} bytes, shape {shape:?} needs {}",
            bin.display(),
            bytes.len(),
            4 * count
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    meta.remove("shape");
    meta.remove("kind");
    Ok(RawTensor { kind, shape, data, meta })
}

fn expect_kind(raw: &RawTensor, kind: TensorKind) -> Result<()> {
    if raw.kind != kind {
        return Err(SciError::Format(format!(
            "expected a {} tensor, found {}",
            kind.tag(),
            raw.kind.tag()
        )));
    }
    Ok(())
}

fn cast<T: Real>(data: &[f32]) -> Vec<T> {
    data.iter().map(|&v| T::from_f32_lossy(v)).collect()
}

pub fn save_cube<T: Real>(path: &Path, cube: &VideoCube<T>) -> Result<()> {
    let (h, w, c, b) = cube.shape();
    let mut meta = Map::new();
    meta.insert("B".into(), json!(b));
    meta.insert("cfa".into(), json!("none"));
    meta.insert("channels".into(), json!(c));
    write_raw(path, TensorKind::Cube, &[b, c, h, w], cube.as_slice(), meta)
}

pub fn load_cube<T: Real>(path: &Path) -> Result<VideoCube<T>> {
    let raw = read_raw(path)?;
    expect_kind(&raw, TensorKind::Cube)?;
    let [b, c, h, w] = raw.shape[..] else {
        return Err(SciError::Format(format!("cube shape {:?} is not [B, C, H, W]", raw.shape)));
    };
    VideoCube::from_vec(h, w, c, b, cast(&raw.data))
}

pub fn save_masks<T: Real>(path: &Path, masks: &MaskStack<T>) -> Result<()> {
    let mut meta = Map::new();
    meta.insert("B".into(), json!(masks.frames()));
    meta.insert("sha256".into(), json!(payload_digest(masks.as_cube().as_slice())));
    write_raw(
        path,
        TensorKind::Mask,
        &[masks.frames(), masks.height(), masks.width()],
        masks.as_cube().as_slice(),
        meta,
    )
}

pub fn load_masks<T: Real>(path: &Path) -> Result<MaskStack<T>> {
    let raw = read_raw(path)?;
    expect_kind(&raw, TensorKind::Mask)?;
    let [b, h, w] = raw.shape[..] else {
        return Err(SciError::Format(format!("mask shape {:?} is not [B, H, W]", raw.shape)));
    };
    MaskStack::new(VideoCube::from_vec(h, w, 1, b, cast(&raw.data))?)
}

/// Writes a measurement; `masks`, when given, stamps its payload digest so
/// later loads can detect a mismatched mask file.
pub fn save_measurement<T: Real>(path: &Path, m: &Measurement<T>, masks: Option<&MaskStack<T>>) -> Result<()> {
    let mut meta = Map::new();
    meta.insert("cfa".into(), json!(if m.mosaicked { "rggb" } else { "none" }));
    if let Some(masks) = masks {
        meta.insert("B".into(), json!(masks.frames()));
        meta.insert("masks_sha256".into(), json!(payload_digest(masks.as_cube().as_slice())));
    }
    if let Some(noise) = &m.noise {
        meta.insert("noise".into(), serde_json::to_value(noise).expect("noise record serializes"));
    }
    write_raw(path, TensorKind::Measurement, &[m.y.height(), m.y.width()], m.y.as_slice(), meta)
}

/// Loads a measurement and, when `masks` is given, checks the recorded
/// mask digest against it.
pub fn load_measurement<T: Real>(path: &Path, masks: Option<&MaskStack<T>>) -> Result<Measurement<T>> {
    let raw = read_raw(path)?;
    expect_kind(&raw, TensorKind::Measurement)?;
    let [h, w] = raw.shape[..] else {
        return Err(SciError::Format(format!("measurement shape {:?} is not [H, W]", raw.shape)));
    };
    let cfa = raw.meta.get("cfa").and_then(Value::as_str).unwrap_or("none");
    let mosaicked = match cfa {
        "none" => false,
        "rggb" => true,
        other => return Err(SciError::UnsupportedCfa(other.to_string())),
    };
    if let (Some(masks), Some(want)) = (masks, raw.meta.get("masks_sha256").and_then(Value::as_str)) {
        let got = payload_digest(masks.as_cube().as_slice());
        if got != want {
            return Err(SciError::DigestMismatch(format!(
                "measurement {} was simulated with masks {want}, got {got}",
                path.display()
            )));
        }
    }
    let noise: Option<NoiseRecord> = raw.meta.get("noise").and_then(|v| serde_json::from_value(v.clone()).ok());
    Ok(Measurement {
        y: Plane::from_vec(h, w, cast(&raw.data))?,
        noise,
        mosaicked,
    })
}
