//! JSON checkpoints. Weights serialize through the shortest-round-trip f64
//! formatter, so save followed by load reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::DescriptorError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    patch_side: usize,
    hidden: usize,
    dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Writes `params` to `path` as JSON.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), DescriptorError> {
    let doc = CheckpointDoc {
        patch_side: params.patch_side,
        hidden: params.hidden,
        dim: params.dim,
        w1: params.w1.clone(),
        b1: params.b1.clone(),
        w2: params.w2.clone(),
        b2: params.b2.clone(),
    };
    let mut text = serde_json::to_string(&doc).map_err(|e| DescriptorError::BadCheckpoint {
        field: "document",
        problem: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a checkpoint, validating shapes, dimension rules, and finiteness.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams, DescriptorError> {
    let text = fs::read_to_string(path)?;
    let doc: CheckpointDoc =
        serde_json::from_str(&text).map_err(|e| DescriptorError::BadCheckpoint {
            field: "document",
            problem: e.to_string(),
        })?;
    if !matches!(doc.patch_side, 8 | 16 | 32) {
        return Err(DescriptorError::BadPatchSide(doc.patch_side));
    }
    if doc.dim < 8 {
        return Err(DescriptorError::DimTooSmall(doc.dim));
    }
    if doc.hidden < doc.dim {
        return Err(DescriptorError::HiddenTooSmall {
            hidden: doc.hidden,
            dim: doc.dim,
        });
    }
    let in_len = doc.patch_side * doc.patch_side;
    let checks: [(&'static str, usize, usize); 4] = [
        ("w1", doc.w1.len(), doc.hidden * in_len),
        ("b1", doc.b1.len(), doc.hidden),
        ("w2", doc.w2.len(), doc.dim * doc.hidden),
        ("b2", doc.b2.len(), doc.dim),
    ];
    for (field, got, want) in checks {
        if got != want {
            return Err(DescriptorError::BadCheckpoint {
                field,
                problem: format!("holds {got} values, shape requires {want}"),
            });
        }
    }
    for (field, values) in [
        ("w1", &doc.w1),
        ("b1", &doc.b1),
        ("w2", &doc.w2),
        ("b2", &doc.b2),
    ] {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(DescriptorError::BadCheckpoint {
                field,
                problem: format!("contains non-finite value {v}"),
            });
        }
    }
    Ok(ModelParams {
        patch_side: doc.patch_side,
        hidden: doc.hidden,
        dim: doc.dim,
        w1: doc.w1,
        b1: doc.b1,
        w2: doc.w2,
        b2: doc.b2,
    })
}
