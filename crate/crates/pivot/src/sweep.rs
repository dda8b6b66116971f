//! Evaluation sweeps over iteration and parallel-instance counts.

use std::fmt::Write as _;
use std::path::Path;

use pivot_core::metrics::MetricKind;
use pivot_core::optimize::{Aggregation, PivotConfig, Problem};
use pivot_core::oracle::baseline::RegionOracle;
use pivot_core::seed::{derive_seed, PivotRng};
use pivot_core::{Action, Raster};
use rand::SeedableRng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::engine::run_parallel;
use crate::error::{CliError, Result};
use crate::imageio::load_image;
use crate::manifest::EvalRecord;
use crate::oracles::{reference_for, OracleFactory};

/// Records with their images loaded once.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<EvalRecord>,
    pub images: Vec<Raster>,
}

impl Dataset {
    pub fn load(records: Vec<EvalRecord>) -> Result<Self> {
        let images = records
            .par_iter()
            .map(|r| load_image(&r.image_path).map_err(|e| CliError::Io(format!("record at line {}: {e}", r.line))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records, images })
    }

    pub fn metric(&self) -> MetricKind {
        self.records.first().map_or(MetricKind::NormalizedL2, |r| r.truth.metric())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Iteration counts × parallel-instance counts. A parallel count of 0 means
/// one instance without aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub iterations: Vec<usize>,
    pub parallel: Vec<usize>,
}

impl Grid {
    /// Parses `"1,2,3 x 0,2,3"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("--grid {s:?}: expected ITERATIONS x PARALLEL, e.g. \"1,2,3 x 0,2,3\""));
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let list = |t: &str| -> Result<Vec<usize>> {
            let v = t.split(',').map(|n| n.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
            if v.is_empty() {
                Err(bad())
            } else {
                Ok(v)
            }
        };
        let grid = Self { iterations: list(a)?, parallel: list(b)? };
        if grid.iterations.contains(&0) {
            return Err(CliError::Config("--grid: iteration counts must be at least 1".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub iterations: usize,
    pub parallel: usize,
    pub metric_mean: f64,
    /// Sample standard deviation of the per-repeat dataset means.
    pub metric_std: f64,
    /// Number of repeats.
    pub n: usize,
    pub repeat_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub metric: MetricKind,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub samples: usize,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub n: usize,
}

/// Shared inputs of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepSetup<'a> {
    pub dataset: &'a Dataset,
    pub base: &'a RunConfig,
    pub factory: &'a OracleFactory,
    pub repeats: usize,
    pub seed: u64,
    pub jobs: usize,
}

/// Seeds for one (repeat, record) pair. They do not depend on the cell, so
/// every cell sees the same draws.
fn run_seeds(seed: u64, repeat: usize, record: usize) -> (u64, u64) {
    let path = [repeat as u64, record as u64];
    (derive_seed(seed, &[path[0], path[1], 0]), derive_seed(seed, &[path[0], path[1], 1]))
}

/// Metric for one record under `pivot`. Oracle and optimizer failures score
/// the metric's penalty; configuration problems abort the sweep.
fn eval_record(setup: &SweepSetup<'_>, pivot: &PivotConfig, repeat: usize, j: usize) -> Result<f64> {
    let record = &setup.dataset.records[j];
    let image = &setup.dataset.images[j];
    let base = setup.base;
    let spec = base
        .space
        .resolve(image.size())
        .map_err(|e| CliError::Config(format!("record at line {}: {e}", record.line)))?;
    let camera = record.camera.as_ref().or(base.camera.as_ref());
    let (rng_seed, oracle_seed) = run_seeds(setup.seed, repeat, j);
    let mut oracle = setup.factory.selection(Some(reference_for(&record.truth)), spec.max_extent(), oracle_seed)?;
    let problem = Problem {
        image,
        instruction: &record.instruction,
        spec: &spec,
        camera,
        style: &base.style,
        prompt: &base.prompt,
    };
    let penalty = record.truth.metric().penalty();
    let image_w = f64::from(image.width());
    let mut rng = PivotRng::seed_from_u64(rng_seed);
    Ok(match run_parallel(&problem, &mut oracle, pivot, &mut rng) {
        Ok(out) => record.truth.score(&out.best, image_w).unwrap_or(penalty),
        Err(_) => penalty,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Per-repeat dataset means for each configuration, in input order.
fn run_configs(setup: &SweepSetup<'_>, configs: &[PivotConfig]) -> Result<Vec<Vec<f64>>> {
    if setup.repeats == 0 {
        return Err(CliError::Config("repeats must be at least 1".into()));
    }
    if setup.dataset.is_empty() {
        return Err(CliError::Config("no records to evaluate".into()));
    }
    for c in configs {
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let n = setup.dataset.len();
    let tasks: Vec<(usize, usize, usize)> =
        (0..configs.len()).flat_map(|c| (0..setup.repeats).flat_map(move |r| (0..n).map(move |j| (c, r, j)))).collect();
    let values = pool(setup.jobs)?.install(|| {
        tasks.par_iter().map(|&(c, r, j)| eval_record(setup, &configs[c], r, j)).collect::<Result<Vec<f64>>>()
    })?;
    Ok(values
        .chunks(setup.repeats * n)
        .map(|cell| cell.chunks(n).map(|rep| rep.iter().sum::<f64>() / n as f64).collect())
        .collect())
}

fn cell_config(base: &PivotConfig, iterations: usize, parallel: usize) -> PivotConfig {
    PivotConfig {
        iterations,
        parallel: parallel.max(1),
        aggregation: if parallel == 0 { Aggregation::Refit } else { base.aggregation },
        ..base.clone()
    }
}

pub fn run_sweep(setup: &SweepSetup<'_>, grid: &Grid) -> Result<SweepResult> {
    let pairs: Vec<(usize, usize)> =
        grid.iterations.iter().flat_map(|&t| grid.parallel.iter().map(move |&e| (t, e))).collect();
    let configs: Vec<PivotConfig> = pairs.iter().map(|&(t, e)| cell_config(&setup.base.pivot, t, e)).collect();
    let means = run_configs(setup, &configs)?;
    let cells = pairs
        .into_iter()
        .zip(means)
        .map(|((iterations, parallel), repeat_means)| {
            let (metric_mean, metric_std) = mean_std(&repeat_means);
            SweepCell { iterations, parallel, metric_mean, metric_std, n: repeat_means.len(), repeat_means }
        })
        .collect();
    Ok(SweepResult { metric: setup.dataset.metric(), cells })
}

/// Varies the number of drawn candidates with everything else from the base
/// configuration.
pub fn run_sample_ablation(setup: &SweepSetup<'_>, samples: &[usize]) -> Result<Vec<AblationRow>> {
    let configs: Vec<PivotConfig> =
        samples.iter().map(|&m| PivotConfig { samples: m, ..setup.base.pivot.clone() }).collect();
    let means = run_configs(setup, &configs)?;
    Ok(samples
        .iter()
        .zip(means)
        .map(|(&samples, m)| {
            let (metric_mean, metric_std) = mean_std(&m);
            AblationRow { samples, metric_mean, metric_std, n: m.len() }
        })
        .collect())
}

/// Text-only baseline: one cell with iterations and parallel both 0.
pub fn run_baseline(setup: &SweepSetup<'_>) -> Result<SweepResult> {
    let metric = setup.dataset.metric();
    if metric == MetricKind::Cosine {
        return Err(CliError::Config("the text baseline needs pixel or bbox ground truth".into()));
    }
    let n = setup.dataset.len();
    let tasks: Vec<(usize, usize)> = (0..setup.repeats).flat_map(|r| (0..n).map(move |j| (r, j))).collect();
    let values = pool(setup.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(r, j)| {
                let record = &setup.dataset.records[j];
                let image = &setup.dataset.images[j];
                let (_, oracle_seed) = run_seeds(setup.seed, r, j);
                let mut oracle = setup.factory.region(record.truth.target_px(), oracle_seed)?;
                let penalty = metric.penalty();
                Ok(match oracle.pick_region(image, &record.instruction) {
                    Ok(reply) => {
                        let c = reply.region.center(image.size());
                        record.truth.score(&Action::new(c.to_vec()), f64::from(image.width())).unwrap_or(penalty)
                    }
                    Err(_) => penalty,
                })
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let repeat_means: Vec<f64> = values.chunks(n).map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let (metric_mean, metric_std) = mean_std(&repeat_means);
    Ok(SweepResult {
        metric,
        cells: vec![SweepCell {
            iterations: 0,
            parallel: 0,
            metric_mean,
            metric_std,
            n: repeat_means.len(),
            repeat_means,
        }],
    })
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(["iterations", "parallel", "metric_mean", "metric_std", "n"]).map_err(io)?;
    for c in &result.cells {
        w.write_record([
            c.iterations.to_string(),
            c.parallel.to_string(),
            c.metric_mean.to_string(),
            c.metric_std.to_string(),
            c.n.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(["samples", "metric_mean", "metric_std"]).map_err(io)?;
    for r in rows {
        w.write_record([r.samples.to_string(), r.metric_mean.to_string(), r.metric_std.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Iterations down, parallel counts across, `mean ± std` in each cell.
pub fn format_table(result: &SweepResult) -> String {
    let mut iters: Vec<usize> = result.cells.iter().map(|c| c.iterations).collect();
    iters.dedup();
    let mut pars: Vec<usize> = Vec::new();
    for c in &result.cells {
        if !pars.contains(&c.parallel) {
            pars.push(c.parallel);
        }
    }
    let better = if result.metric.higher_is_better() { "higher" } else { "lower" };
    let mut out = format!("metric: {} ({better} is better)\n", result.metric.name());
    let _ = write!(out, "{:>10}", "iter\\par");
    for p in &pars {
        let _ = write!(out, " {:>17}", p);
    }
    out.push('\n');
    for t in &iters {
        let _ = write!(out, "{t:>10}");
        for p in &pars {
            match result.cells.iter().find(|c| c.iterations == *t && c.parallel == *p) {
                Some(c) => {
                    let _ = write!(out, " {:>17}", format!("{:.4} ± {:.4}", c.metric_mean, c.metric_std));
                }
                None => {
                    let _ = write!(out, " {:>17}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
