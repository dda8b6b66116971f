//! Oracle construction from a run configuration.

use std::path::Path;

use pivot_core::metrics::Truth;
use pivot_core::oracle::baseline::{RegionOracle, RegionReply, SyntheticRegionPicker};
use pivot_core::oracle::{
    Concurrency, OracleError, ReplayOracle, SelectionOracle, SelectionQuery, SelectionResponse, SyntheticOracle,
};
use pivot_core::{Action, Raster};

use crate::config::{OracleKind, RunConfig};
use crate::error::{CliError, Result};
use crate::remote::RemoteOracle;

#[derive(Debug, Clone)]
pub enum AnyOracle {
    Synthetic(SyntheticOracle),
    Replay(ReplayOracle),
    Remote(RemoteOracle),
}

impl SelectionOracle for AnyOracle {
    fn select(&mut self, q: &SelectionQuery<'_>) -> std::result::Result<SelectionResponse, OracleError> {
        match self {
            AnyOracle::Synthetic(o) => o.select(q),
            AnyOracle::Replay(o) => o.select(q),
            AnyOracle::Remote(o) => o.select(q),
        }
    }

    fn concurrency(&self) -> Concurrency {
        match self {
            AnyOracle::Remote(o) => o.concurrency(),
            _ => Concurrency::Serial,
        }
    }

    fn set_reference(&mut self, truth: &Action) {
        if let AnyOracle::Synthetic(o) = self {
            o.set_reference(truth);
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyRegionOracle {
    Synthetic(SyntheticRegionPicker),
    Remote(RemoteOracle),
}

impl RegionOracle for AnyRegionOracle {
    fn pick_region(&mut self, image: &Raster, instruction: &str) -> std::result::Result<RegionReply, OracleError> {
        match self {
            AnyRegionOracle::Synthetic(o) => o.pick_region(image, instruction),
            AnyRegionOracle::Remote(o) => o.pick_region(image, instruction),
        }
    }

    fn set_reference(&mut self, truth_px: [f64; 2]) {
        if let AnyRegionOracle::Synthetic(o) = self {
            o.set_reference(truth_px);
        }
    }
}

/// Builds oracles for a configuration. The replay script and the remote
/// client are prepared once and cloned per use.
#[derive(Debug, Clone)]
pub struct OracleFactory {
    kind: OracleKind,
    noise_sigma: f64,
    script: Vec<String>,
    remote: Option<RemoteOracle>,
}

impl OracleFactory {
    pub fn from_config(cfg: &RunConfig, base_dir: &Path) -> Result<Self> {
        let remote = match (&cfg.oracle.kind, &cfg.oracle.remote) {
            (OracleKind::Remote, Some(r)) => Some(RemoteOracle::new(r.clone())?),
            (OracleKind::Remote, None) => {
                return Err(CliError::Config("oracle: kind = \"remote\" needs an [oracle.remote] section".into()))
            }
            (OracleKind::TextBaseline, Some(r)) => Some(RemoteOracle::new(r.clone())?),
            _ => None,
        };
        let script = if cfg.oracle.kind == OracleKind::Replay {
            let s = cfg.oracle.replay_script(base_dir)?;
            if s.is_empty() {
                return Err(CliError::Config("oracle: kind = \"replay\" needs `script` or `script_path`".into()));
            }
            s
        } else {
            Vec::new()
        };
        Ok(Self { kind: cfg.oracle.kind, noise_sigma: cfg.oracle.noise_sigma, script, remote })
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// Selection oracle seeded with `seed`. `reference` is the known answer
    /// handed to the synthetic oracle; `extent` scales its noise.
    pub fn selection(&self, reference: Option<Action>, extent: f64, seed: u64) -> Result<AnyOracle> {
        match self.kind {
            OracleKind::Synthetic => {
                Ok(AnyOracle::Synthetic(SyntheticOracle::new(reference, self.noise_sigma, extent, seed)))
            }
            OracleKind::Replay => Ok(AnyOracle::Replay(ReplayOracle::new(self.script.iter().cloned()))),
            OracleKind::Remote => Ok(AnyOracle::Remote(self.remote.clone().expect("checked at construction"))),
            OracleKind::TextBaseline => {
                Err(CliError::Config("the text baseline names image regions and cannot rank candidates".into()))
            }
        }
    }

    pub fn region(&self, truth_px: Option<[f64; 2]>, seed: u64) -> Result<AnyRegionOracle> {
        match (&self.kind, &self.remote) {
            (OracleKind::TextBaseline, Some(r)) => Ok(AnyRegionOracle::Remote(r.clone())),
            (OracleKind::TextBaseline, None) => {
                Ok(AnyRegionOracle::Synthetic(SyntheticRegionPicker::new(truth_px, self.noise_sigma, seed)))
            }
            _ => Err(CliError::Config("region oracle requested for a non-baseline oracle kind".into())),
        }
    }
}

/// What a synthetic oracle should aim for, given a record's ground truth.
pub fn reference_for(truth: &Truth) -> Action {
    match truth {
        Truth::Action(a) => a.clone(),
        Truth::Pixel(p) => Action::new(p.to_vec()),
        Truth::Bbox(b) => Action::new(b.center().to_vec()),
    }
}
