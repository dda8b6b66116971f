//! `pivot` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pivot_core::annotate::dataset::{gen_arrow_dataset, ArrowDatasetParams, DatasetMode};
use pivot_core::optimize::{ParallelOutcome, Problem};
use pivot_core::seed::{derive_seed, PivotRng};
use pivot_core::sim::{geometric_step_bound, rollout_with, EpisodeResult, RolloutOptions, WorldKind, WorldState};
use pivot_core::space::ImageSize;
use pivot_core::Action;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{OracleKind, Overrides, RunConfig};
use crate::engine::run_parallel;
use crate::error::{CliError, Result};
use crate::imageio::{load_image, save_png};
use crate::manifest::{load_manifest, subset};
use crate::oracles::OracleFactory;
use crate::rundir::{create_run_dir, write_config_snapshot, write_json, write_lines, write_outcome};
use crate::sweep::{
    format_table, run_baseline, run_sample_ablation, run_sweep, write_ablation_csv, write_sweep_csv, Dataset, Grid,
    SweepSetup,
};

#[derive(Debug, Parser)]
#[command(name = "pivot", version, about = "Iterative visual prompting for action selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Parallel instances.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Candidates drawn per iteration.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Candidates the oracle keeps per iteration.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub oracle: Option<OracleKind>,
    /// Parent directory for run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize an action for one image and instruction.
    Optimize {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        instruction: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep iterations × parallel instances over a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// e.g. "1,2,3 x 0,2,3"; 0 parallel means one instance.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        subset: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop episodes in the toy world.
    Sim {
        /// JSON world description.
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic arrow dataset as PNGs plus manifest.jsonl.
    GenArrows {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ArrowMode::Blank)]
        mode: ArrowMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArrowMode {
    #[value(alias = "blank-background")]
    Blank,
    #[value(name = "object-referential", alias = "objects")]
    ObjectReferential,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            jobs: self.jobs,
            iterations: self.iterations,
            parallel: self.parallel,
            samples: self.samples,
            k: self.k,
            oracle: self.oracle,
            out: self.out.clone(),
        }
    }

    /// Loads the configuration (or the synthetic default), applies flags and
    /// validates. Returns it with the directory relative paths resolve from.
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(p) => (RunConfig::load(p)?, p.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)),
            None => (RunConfig::parse(DEFAULT_CONFIG)?, PathBuf::from(".")),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok((cfg, base))
    }
}

const DEFAULT_CONFIG: &str = "[space]\nkind = \"nav2d\"\n\n[oracle]\nkind = \"synthetic\"\n";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize { image, instruction, common } => optimize(&image, instruction, &common),
        Command::Eval { manifest, grid, repeats, subset, common } => eval(&manifest, grid, repeats, subset, &common),
        Command::Sim { world, episodes, common } => sim(&world, episodes, &common),
        Command::GenArrows { out, mode, seed } => gen_arrows(&out, mode, seed),
    }
}

fn optimize(image_path: &Path, instruction: Option<String>, common: &Common) -> Result<()> {
    let (cfg, base) = common.load()?;
    let instruction = instruction
        .or_else(|| cfg.instruction.clone())
        .ok_or_else(|| CliError::Config("no instruction: pass --instruction or set `instruction`".into()))?;
    let image = load_image(image_path)?;
    let spec = cfg.space.resolve(image.size())?;
    let factory = OracleFactory::from_config(&cfg, &base)?;
    let reference = cfg.oracle.truth.clone().map(Action::new);
    let seed = cfg.pivot.seed;
    let mut oracle = factory.selection(reference, spec.max_extent(), derive_seed(seed, &[1]))?;
    let problem = Problem {
        image: &image,
        instruction: &instruction,
        spec: &spec,
        camera: cfg.camera.as_ref(),
        style: &cfg.style,
        prompt: &cfg.prompt,
    };
    let mut rng = PivotRng::seed_from_u64(derive_seed(seed, &[0]));
    let outcome: ParallelOutcome = run_parallel(&problem, &mut oracle, &cfg.pivot, &mut rng)?;
    let dir = create_run_dir(&cfg.out_dir, seed)?;
    write_config_snapshot(&dir, &cfg)?;
    write_outcome(&dir, &outcome)?;
    println!("best action: {:?}", outcome.best.as_slice());
    println!("run directory: {}", dir.display());
    Ok(())
}

fn eval(
    manifest: &Path,
    grid: Option<String>,
    repeats: Option<usize>,
    subset_n: Option<usize>,
    common: &Common,
) -> Result<()> {
    let (mut cfg, base) = common.load()?;
    if let Some(r) = repeats {
        cfg.eval.repeats = r;
    }
    if let Some(s) = subset_n {
        cfg.eval.subset = Some(s);
    }
    let grid = match grid {
        Some(g) => Grid::parse(&g)?,
        None => Grid { iterations: cfg.eval.iterations.clone(), parallel: cfg.eval.parallel.clone() },
    };
    let mut records = load_manifest(manifest)?;
    if let Some(n) = cfg.eval.subset {
        records = subset(records, n, cfg.pivot.seed);
    }
    let dataset = Dataset::load(records)?;
    let factory = OracleFactory::from_config(&cfg, &base)?;
    let setup = SweepSetup {
        dataset: &dataset,
        base: &cfg,
        factory: &factory,
        repeats: cfg.eval.repeats,
        seed: cfg.pivot.seed,
        jobs: cfg.jobs(),
    };
    let result =
        if factory.kind() == OracleKind::TextBaseline { run_baseline(&setup)? } else { run_sweep(&setup, &grid)? };
    let ablation = if cfg.eval.samples_ablation.is_empty() || factory.kind() == OracleKind::TextBaseline {
        None
    } else {
        Some(run_sample_ablation(&setup, &cfg.eval.samples_ablation)?)
    };
    let dir = create_run_dir(&cfg.out_dir, cfg.pivot.seed)?;
    write_config_snapshot(&dir, &cfg)?;
    write_sweep_csv(&dir.join("sweep.csv"), &result)?;
    if let Some(rows) = &ablation {
        write_ablation_csv(&dir.join("samples.csv"), rows)?;
    }
    print!("{}", format_table(&result));
    if let Some(rows) = &ablation {
        println!("samples  metric_mean  metric_std");
        for r in rows {
            println!("{:>7}  {:>11.4}  {:>10.4}", r.samples, r.metric_mean, r.metric_std);
        }
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    episode: usize,
    success: bool,
    reached: bool,
    steps: u32,
    trajectory: &'a [[f64; 3]],
    actions: Vec<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub median_steps: f64,
    pub step_bound: u32,
}

pub fn load_world(path: &Path) -> Result<WorldState> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let world: WorldState =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    world.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(world)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs `episodes` seeded episodes of `world`. Episode `e` uses seeds derived
/// from `(seed, e)` only, so results do not depend on the thread count.
pub fn run_episodes(
    world: &WorldState,
    cfg: &RunConfig,
    factory: &OracleFactory,
    episodes: usize,
) -> Result<Vec<EpisodeResult>> {
    let extent = match world.kind {
        WorldKind::Planar => f64::from(world.view.image_w.max(world.view.image_h)),
        WorldKind::Spatial => 2.0 * world.max_step,
    };
    let options = RolloutOptions { style: cfg.style.clone(), prompt: None, instruction: cfg.instruction.clone() };
    let seed = cfg.pivot.seed;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs())
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..episodes)
            .into_par_iter()
            .map(|e| {
                let mut oracle = factory.selection(None, extent, derive_seed(seed, &[e as u64, 1]))?;
                let mut rng = PivotRng::seed_from_u64(derive_seed(seed, &[e as u64, 0]));
                Ok(rollout_with(world, &mut oracle, &cfg.pivot, &options, &mut rng)?)
            })
            .collect()
    })
}

pub fn summarize(world: &WorldState, results: &[EpisodeResult]) -> SimSummary {
    let n = results.len();
    let successes = results.iter().filter(|r| r.success).count();
    let mut steps: Vec<f64> = results.iter().map(|r| f64::from(r.steps)).collect();
    SimSummary {
        episodes: n,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        median_steps: median(&mut steps),
        step_bound: geometric_step_bound(world),
    }
}

fn sim(world_path: &Path, episodes: Option<usize>, common: &Common) -> Result<()> {
    let (mut cfg, base) = common.load()?;
    if let Some(n) = episodes {
        cfg.sim.episodes = n;
    }
    let world = load_world(world_path)?;
    let factory = OracleFactory::from_config(&cfg, &base)?;
    let results = run_episodes(&world, &cfg, &factory, cfg.sim.episodes)?;
    let summary = summarize(&world, &results);
    let dir = create_run_dir(&cfg.out_dir, cfg.pivot.seed)?;
    write_config_snapshot(&dir, &cfg)?;
    let lines: Vec<String> = results
        .iter()
        .enumerate()
        .map(|(episode, r)| {
            serde_json::to_string(&EpisodeLine {
                episode,
                success: r.success,
                reached: r.reached,
                steps: r.steps,
                trajectory: &r.trajectory,
                actions: r.actions.iter().map(|a| a.as_slice()).collect(),
            })
            .expect("episode serializes")
        })
        .collect();
    write_lines(&dir.join("episodes.jsonl"), &lines)?;
    for (e, r) in results.iter().enumerate() {
        for (s, frame) in r.frames.iter().enumerate() {
            save_png(frame, &dir.join(format!("ep{e}_step{}.png", s + 1)))?;
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "episodes: {}  success rate: {:.3}  median steps: {}  (geometric bound {})",
        summary.episodes, summary.success_rate, summary.median_steps, summary.step_bound
    );
    println!("run directory: {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ArrowLine<'a> {
    image: String,
    query: &'a str,
    answer: &'a str,
    color: &'a str,
    thickness: u32,
    head_ratio: f64,
    direction: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    difficulty: Option<pivot_core::annotate::dataset::Difficulty>,
}

fn gen_arrows(out: &Path, mode: ArrowMode, seed: u64) -> Result<()> {
    let params = ArrowDatasetParams {
        mode: match mode {
            ArrowMode::Blank => DatasetMode::BlankBackground,
            ArrowMode::ObjectReferential => DatasetMode::ObjectReferential,
        },
        seed,
        image: ImageSize::new(256, 256),
        ..ArrowDatasetParams::default()
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let samples = gen_arrow_dataset(&params);
    let mut lines = Vec::with_capacity(samples.len());
    for s in &samples {
        let name = format!("arrow_{:03}.png", s.index);
        save_png(&s.image, &out.join(&name))?;
        lines.push(
            serde_json::to_string(&ArrowLine {
                image: name,
                query: &s.query,
                answer: &s.answer,
                color: s.color.name(),
                thickness: s.thickness,
                head_ratio: s.head_ratio,
                direction: s.direction.name(),
                difficulty: s.difficulty(),
            })
            .expect("arrow line serializes"),
        );
    }
    write_lines(&out.join("manifest.jsonl"), &lines)?;
    println!("wrote {} images to {}", samples.len(), out.display());
    Ok(())
}
