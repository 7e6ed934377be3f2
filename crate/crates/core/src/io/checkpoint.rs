//! Network weights in the tensor format: one flat payload with the layer
//! layout in the sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::tensor::{read_raw, write_raw, TensorKind};
use crate::error::{Result, SciError};
use crate::priors::{Activation, ConvLayer, DdnetParams, DdnetSpec, PriorParams};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub activation: Activation,
}

/// Sidecar fields other than shape and kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub steps: usize,
    /// Anything else worth recording (source checkpoint, event log, ...).
    pub extra: Map<String, Value>,
}

fn layout<T>(p: &PriorParams<T>) -> Vec<LayerShape> {
    p.layers
        .iter()
        .map(|l| LayerShape {
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            kernel: [3, 3],
            activation: l.activation,
        })
        .collect()
}

fn from_layout<T: Real>(shapes: &[LayerShape]) -> Result<PriorParams<T>> {
    if shapes.is_empty() {
        return Err(SciError::Format("checkpoint lists no layers".into()));
    }
    if shapes.iter().any(|s| s.kernel != [3, 3]) {
        return Err(SciError::Format("only 3x3 kernels are supported".into()));
    }
    let p = PriorParams {
        layers: shapes
            .iter()
            .map(|s| ConvLayer::zeros(s.in_channels, s.out_channels, s.activation))
            .collect(),
    };
    Ok(p)
}

fn info_meta(info: &CheckpointInfo) -> Map<String, Value> {
    let mut meta = info.extra.clone();
    meta.insert("seed".into(), json!(info.seed));
    meta.insert("steps".into(), json!(info.steps));
    meta
}

fn read_info(meta: &Map<String, Value>) -> CheckpointInfo {
    let mut extra = meta.clone();
    for k in ["seed", "steps", "model", "layers", "ddnet", "dtype", "byte_order", "cfa"] {
        extra.remove(k);
    }
    CheckpointInfo {
        seed: meta.get("seed").and_then(Value::as_u64).unwrap_or(0),
        steps: meta.get("steps").and_then(Value::as_u64).unwrap_or(0) as usize,
        extra,
    }
}

fn layers_of(meta: &Map<String, Value>, key: &str) -> Result<Vec<LayerShape>> {
    let v = meta
        .get(key)
        .ok_or_else(|| SciError::Format(format!("checkpoint sidecar lacks '{key}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| SciError::Format(format!("'{key}': {e}")))
}

pub fn save_prior_params<T: Real>(path: &Path, params: &PriorParams<T>, info: &CheckpointInfo) -> Result<()> {
    let mut meta = info_meta(info);
    meta.insert("model".into(), json!("cnn"));
    meta.insert("layers".into(), serde_json::to_value(layout(params)).expect("layout serializes"));
    let flat = params.to_flat();
    write_raw(path, TensorKind::Checkpoint, &[flat.len()], &flat, meta)
}

pub fn load_prior_params<T: Real>(path: &Path) -> Result<(PriorParams<T>, CheckpointInfo)> {
    let raw = read_raw(path)?;
    if raw.kind != TensorKind::Checkpoint || raw.meta.get("model").and_then(Value::as_str) != Some("cnn") {
        return Err(SciError::Format(format!("{} is not a CNN checkpoint", path.display())));
    }
    let mut p = from_layout(&layers_of(&raw.meta, "layers")?)?;
    let flat: Vec<T> = raw.data.iter().map(|&v| T::from_f32_lossy(v)).collect();
    p.set_flat(&flat)?;
    p.validate()?;
    Ok((p, read_info(&raw.meta)))
}

pub fn save_ddnet<T: Real>(path: &Path, params: &DdnetParams<T>, info: &CheckpointInfo) -> Result<()> {
    let mut meta = info_meta(info);
    meta.insert("model".into(), json!("ddnet"));
    meta.insert(
        "ddnet".into(),
        json!({"window": params.spec.window, "width": params.spec.width, "depth": params.spec.depth}),
    );
    meta.insert(
        "layers".into(),
        json!({"fusion": layout(&params.fusion), "refine": layout(&params.refine)}),
    );
    let flat = params.to_flat();
    write_raw(path, TensorKind::Checkpoint, &[flat.len()], &flat, meta)
}

pub fn load_ddnet<T: Real>(path: &Path) -> Result<(DdnetParams<T>, CheckpointInfo)> {
    let raw = read_raw(path)?;
    if raw.kind != TensorKind::Checkpoint || raw.meta.get("model").and_then(Value::as_str) != Some("ddnet") {
        return Err(SciError::Format(format!("{} is not a DDNet checkpoint", path.display())));
    }
    let spec = raw
        .meta
        .get("ddnet")
        .and_then(|d| {
            Some(DdnetSpec {
                window: d.get("window")?.as_u64()? as usize,
                width: d.get("width")?.as_u64()? as usize,
                depth: d.get("depth")?.as_u64()? as usize,
            })
        })
        .ok_or_else(|| SciError::Format("checkpoint sidecar lacks a valid 'ddnet' spec".into()))?;
    let layers = raw
        .meta
        .get("layers")
        .and_then(Value::as_object)
        .ok_or_else(|| SciError::Format("checkpoint sidecar lacks 'layers'".into()))?;
    let mut params = DdnetParams {
        spec,
        fusion: from_layout(&layers_of(layers, "fusion")?)?,
        refine: from_layout(&layers_of(layers, "refine")?)?,
    };
    let flat: Vec<T> = raw.data.iter().map(|&v| T::from_f32_lossy(v)).collect();
    params.set_flat(&flat)?;
    params.validate()?;
    Ok((params, read_info(&raw.meta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cnn.bin");
        let params = PriorParams::<f32>::kaiming(2, 4, 1, 3, 0.1, 5);
        let mut info = CheckpointInfo { seed: 5, steps: 12, ..Default::default() };
        info.extra.insert("note".into(), json!("x"));
        save_prior_params(&p, &params, &info).unwrap();
        let (back, got) = load_prior_params::<f32>(&p).unwrap();
        assert_eq!(back, params);
        assert_eq!(got, info);
        assert!(load_ddnet::<f32>(&p).is_err());
    }

    #[test]
    fn ddnet_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dd.bin");
        let spec = DdnetSpec { window: 3, width: 4, depth: 2 };
        let params = DdnetParams::<f32>::new(spec, 3);
        save_ddnet(&p, &params, &CheckpointInfo::default()).unwrap();
        let (back, _) = load_ddnet::<f32>(&p).unwrap();
        assert_eq!(back, params);
    }
}
