//! TOML run configuration.

use std::path::{Path, PathBuf};

use pivot_core::annotate::AnnotationStyle;
use pivot_core::optimize::PivotConfig;
use pivot_core::oracle::PromptOptions;
use pivot_core::space::{ActionSpaceSpec, CameraModel, HeightMode, ImageSize, OriginMode, SpaceKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::remote::RemoteConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceKind,
    /// Defaults to the whole image for pixel spaces; required for cart3d.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<OriginMode>,
    #[serde(default)]
    pub gripper_flag: bool,
    #[serde(default)]
    pub height: HeightMode,
    #[serde(default)]
    pub end_effector: [f64; 3],
}

impl SpaceConfig {
    pub fn resolve(&self, image: ImageSize) -> Result<ActionSpaceSpec> {
        let mut spec = match self.kind {
            SpaceKind::Nav2d => ActionSpaceSpec::nav2d(image),
            SpaceKind::Keypoint2d => ActionSpaceSpec::keypoint2d(image),
            SpaceKind::Pickplace => ActionSpaceSpec::pickplace(image),
            SpaceKind::Cart3d => {
                let (Some(lo), Some(hi)) = (&self.lower, &self.upper) else {
                    return Err(CliError::Config("space: cart3d needs `lower` and `upper`".into()));
                };
                let arr = |v: &Vec<f64>, name: &str| -> Result<[f64; 3]> {
                    v.as_slice()
                        .try_into()
                        .map_err(|_| CliError::Config(format!("space: `{name}` must have 3 components")))
                };
                ActionSpaceSpec::cart3d(arr(lo, "lower")?, arr(hi, "upper")?, self.end_effector)
            }
        };
        if let Some(lo) = &self.lower {
            spec.lower = lo.clone();
        }
        if let Some(hi) = &self.upper {
            spec.upper = hi.clone();
        }
        if let Some(origin) = self.origin {
            spec.origin = origin;
        }
        spec.gripper_flag = self.gripper_flag;
        spec.height = self.height;
        spec.end_effector = self.end_effector;
        spec.validate().map_err(|e| CliError::Config(format!("space: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Remote,
    Synthetic,
    Replay,
    TextBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Synthetic noise, as a fraction of the largest bound extent.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Reference action for the synthetic oracle when the command has no
    /// ground truth of its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    /// Canned replies for the replay oracle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    /// JSON array of replies, read when `script` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
}

impl OracleConfig {
    pub fn replay_script(&self, base: &Path) -> Result<Vec<String>> {
        if !self.script.is_empty() || self.script_path.is_none() {
            return Ok(self.script.clone());
        }
        let path = base.join(self.script_path.as_ref().expect("checked above"));
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: expected a JSON array of strings: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    pub iterations: Vec<usize>,
    /// `0` means a single instance without aggregation.
    pub parallel: Vec<usize>,
    /// Evaluate a seeded random subset of this many records.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    /// Sample counts for the ablation table; empty disables it.
    pub samples_ablation: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 3,
            iterations: vec![1, 2, 3],
            parallel: vec![0, 2, 3],
            subset: None,
            samples_ablation: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub episodes: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { episodes: 10 }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads for sweeps and episode batches; defaults to the number
    /// of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub space: SpaceConfig,
    #[serde(default)]
    pub pivot: PivotConfig,
    #[serde(default)]
    pub style: AnnotationStyle,
    #[serde(default)]
    pub prompt: PromptOptions,
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraModel>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sim: SimConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub iterations: Option<usize>,
    pub parallel: Option<usize>,
    pub samples: Option<usize>,
    pub k: Option<usize>,
    pub oracle: Option<OracleKind>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.pivot.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = o.iterations {
            self.pivot.iterations = v;
        }
        if let Some(v) = o.parallel {
            self.pivot.parallel = v;
        }
        if let Some(v) = o.samples {
            self.pivot.samples = v;
        }
        if let Some(v) = o.k {
            self.pivot.select = v;
        }
        if let Some(v) = o.oracle {
            self.oracle.kind = v;
        }
        if let Some(v) = &o.out {
            self.out_dir = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.pivot.validate().map_err(|e| cfg(&e))?;
        self.style.validate().map_err(|e| cfg(&e))?;
        self.prompt.validate().map_err(|e| cfg(&e))?;
        if let Some(cam) = &self.camera {
            cam.validate().map_err(|e| cfg(&format!("camera: {e}")))?;
        }
        if self.oracle.kind == OracleKind::Remote && self.oracle.remote.is_none() {
            return Err(CliError::Config("oracle: kind = \"remote\" needs an [oracle.remote] section".into()));
        }
        if self.oracle.noise_sigma.is_nan() || self.oracle.noise_sigma < 0.0 {
            return Err(CliError::Config("oracle: noise_sigma must be non-negative".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[space]
kind = "nav2d"

[oracle]
kind = "replay"
script = ['{"points": [1]}']
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.pivot, PivotConfig::default());
        assert_eq!(c.eval.repeats, 3);
        let spec = c.space.resolve(ImageSize::new(640, 480)).unwrap();
        assert_eq!(spec.upper, vec![639.0, 479.0]);
        assert_eq!(spec.origin, OriginMode::ImageBottomCenter);
    }

    #[test]
    fn missing_field_is_named() {
        let err = RunConfig::parse("[space]\nkind = \"nav2d\"\n[oracle]\nnoise_sigma = 0.1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("kind"), "{err}");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.camera = Some(CameraModel {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            image_w: 640,
            image_h: 480,
            extrinsic: Default::default(),
        });
        c.space.origin = Some(OriginMode::EndEffectorPixel { u: 3.0, v: 4.0 });
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.apply(&Overrides { seed: Some(9), iterations: Some(5), k: Some(1), ..Default::default() });
        assert_eq!((c.pivot.seed, c.pivot.iterations, c.pivot.select), (9, 5, 1));
    }

    #[test]
    fn bundled_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let c = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                c.validate().unwrap();
                n += 1;
            }
        }
        assert!(n >= 2);
    }

    #[test]
    fn cart3d_needs_bounds() {
        let c = RunConfig::parse("[space]\nkind = \"cart3d\"\n[oracle]\nkind = \"synthetic\"\n").unwrap();
        assert!(c.space.resolve(ImageSize::new(10, 10)).is_err());
    }
}
