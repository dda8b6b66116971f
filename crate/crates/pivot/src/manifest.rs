//! Line-delimited evaluation manifests.
//!
//! ```text
//! {"image": "img/0001.png", "instruction": "go to the chair", "category": "in-view",
//!  "truth_kind": "pixel", "truth": [412, 300]}
//! ```
//!
//! `truth_kind` is `action` (any length), `pixel` (`[u, v]`) or `bbox`
//! (`[x, y, w, h]`). Image paths are relative to the manifest.

use std::path::{Path, PathBuf};

use pivot_core::metrics::{BBox, Truth};
use pivot_core::space::{Action, CameraModel};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_path: PathBuf,
    pub instruction: String,
    pub category: String,
    pub truth: Truth,
    pub camera: Option<CameraModel>,
    /// 1-based line in the manifest.
    pub line: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    image: PathBuf,
    instruction: String,
    #[serde(default)]
    category: String,
    truth_kind: String,
    truth: Vec<f64>,
    #[serde(default)]
    camera: Option<CameraModel>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    image: &'a Path,
    instruction: &'a str,
    category: &'a str,
    truth_kind: &'a str,
    truth: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    camera: Option<&'a CameraModel>,
}

fn truth_from(kind: &str, v: Vec<f64>) -> std::result::Result<Truth, String> {
    match kind {
        "action" if !v.is_empty() => Ok(Truth::Action(Action::new(v))),
        "pixel" => match *v.as_slice() {
            [u, w] => Ok(Truth::Pixel([u, w])),
            _ => Err(format!("pixel truth needs 2 numbers, got {}", v.len())),
        },
        "bbox" => match *v.as_slice() {
            [x, y, w, h] => {
                let b = BBox::new(x, y, w, h);
                b.validate().map_err(|e| e.to_string())?;
                Ok(Truth::Bbox(b))
            }
            _ => Err(format!("bbox truth needs 4 numbers, got {}", v.len())),
        },
        "action" => Err("action truth is empty".into()),
        other => Err(format!("unknown truth_kind {other:?} (expected action, pixel or bbox)")),
    }
}

pub fn parse_manifest(text: &str, base: &Path, source: &str) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |m: String| CliError::Config(format!("{source}:{n}: {m}"));
        let raw: RawRecord = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
        let truth = truth_from(&raw.truth_kind, raw.truth).map_err(err)?;
        if let Some(cam) = &raw.camera {
            cam.validate().map_err(|e| err(format!("camera: {e}")))?;
        }
        out.push(EvalRecord {
            image_path: base.join(&raw.image),
            instruction: raw.instruction,
            category: raw.category,
            truth,
            camera: raw.camera,
            line: n,
        });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("{source}: manifest has no records")));
    }
    // Every record must be scored by the same metric.
    let metric = out[0].truth.metric();
    if let Some(r) = out.iter().find(|r| r.truth.metric() != metric) {
        return Err(CliError::Config(format!(
            "{source}:{}: truth_kind scored by {} but the manifest starts with {}",
            r.line,
            r.truth.metric().name(),
            metric.name()
        )));
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base, &path.display().to_string())
}

/// One manifest line for `record`, with the image path written as given.
pub fn record_line(
    image: &Path,
    instruction: &str,
    category: &str,
    truth: &Truth,
    camera: Option<&CameraModel>,
) -> String {
    let (truth_kind, values) = match truth {
        Truth::Action(a) => ("action", a.components.clone()),
        Truth::Pixel(p) => ("pixel", p.to_vec()),
        Truth::Bbox(b) => ("bbox", vec![b.x, b.y, b.w, b.h]),
    };
    serde_json::to_string(&OutRecord { image, instruction, category, truth_kind, truth: values, camera })
        .expect("record serializes")
}

/// Seeded subset of `n` records, kept in manifest order.
pub fn subset(records: Vec<EvalRecord>, n: usize, seed: u64) -> Vec<EvalRecord> {
    if n >= records.len() {
        return records;
    }
    let mut rng = pivot_core::seed::rng_for(seed, &[0x5eed]);
    let mut idx = sample(&mut rng, records.len(), n).into_vec();
    idx.sort_unstable();
    let mut slots: Vec<Option<EvalRecord>> = records.into_iter().map(Some).collect();
    idx.into_iter().map(|i| slots[i].take().expect("indices are distinct")).collect()
}
