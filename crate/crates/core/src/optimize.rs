//! The iterative optimizer: sample candidates from an isotropic Gaussian,
//! draw them, let the oracle pick, refit, repeat. Parallel instances are
//! aggregated by refitting or by one arbitration query.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotate::{self, AnnotateError, AnnotatedImage, AnnotationStyle, Candidate};
use crate::oracle::{OracleError, PromptError, PromptOptions, SelectionOracle, SelectionQuery, SelectionResponse};
use crate::raster::Raster;
use crate::seed::{derive_seed, PivotRng};
use crate::space::{action_to_geometry, Action, ActionSpaceSpec, ArrowGeometry, CameraModel, SpaceError, SpaceKind};

use rand::SeedableRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot fit a distribution to an empty selection")]
    EmptySelection,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("all {count} parallel instances failed; first error: {first}")]
    AllInstancesFailed { count: usize, first: Box<OptimizeError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Fit a distribution to the instance answers and return its mean.
    #[default]
    Refit,
    /// Draw the instance answers and ask the oracle for the single best.
    Arbitrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PivotConfig {
    /// Candidates drawn per iteration (M).
    pub samples: usize,
    /// Maximum iterations (N).
    pub iterations: usize,
    /// Labels the oracle is asked to pick (K).
    pub select: usize,
    /// Independent instances (E).
    pub parallel: usize,
    pub aggregation: Aggregation,
    /// Lower bound on sigma. `None` means 1% of the largest bound extent.
    pub sigma_floor: Option<f64>,
    /// Sigma may shrink by at most this factor per iteration.
    pub shrink: f64,
    pub seed: u64,
    /// Extra attempts after a transient oracle failure.
    pub transport_retries: u32,
    /// Top-up rounds for candidates rejected by the spacing filter.
    pub spacing_retries: u32,
    /// Keep each iteration's annotated raster in the trace.
    pub keep_images: bool,
}

impl Default for PivotConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            iterations: 3,
            select: 3,
            parallel: 3,
            aggregation: Aggregation::Refit,
            sigma_floor: None,
            shrink: 0.5,
            seed: 0,
            transport_retries: 2,
            spacing_retries: 3,
            keep_images: true,
        }
    }
}

impl PivotConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.samples < 1 {
            return Err(OptimizeError::InvalidConfig("samples (M) must be at least 1"));
        }
        if self.iterations < 1 {
            return Err(OptimizeError::InvalidConfig("iterations (N) must be at least 1"));
        }
        if self.select < 1 || self.select > self.samples {
            return Err(OptimizeError::InvalidConfig("select (K) must lie in [1, samples]"));
        }
        if self.parallel < 1 {
            return Err(OptimizeError::InvalidConfig("parallel (E) must be at least 1"));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(OptimizeError::InvalidConfig("shrink must lie in (0, 1]"));
        }
        if let Some(f) = self.sigma_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(OptimizeError::InvalidConfig("sigma_floor must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    pub fn sigma_floor_for(&self, spec: &ActionSpaceSpec) -> f64 {
        self.sigma_floor.unwrap_or(0.01 * spec.max_extent())
    }
}

/// Isotropic Gaussian proposal over an action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalDistribution {
    pub mean: Action,
    pub sigma: f64,
}

/// Everything about one optimization problem except the oracle.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub image: &'a Raster,
    pub instruction: &'a str,
    pub spec: &'a ActionSpaceSpec,
    pub camera: Option<&'a CameraModel>,
    pub style: &'a AnnotationStyle,
    pub prompt: &'a PromptOptions,
}

impl Problem<'_> {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        self.spec.validate()?;
        if self.spec.kind == SpaceKind::Cart3d {
            self.camera.ok_or(SpaceError::MissingCamera)?.validate()?;
        }
        self.style.validate()?;
        self.prompt.validate()?;
        Ok(())
    }

    fn gripper(&self) -> Option<bool> {
        (self.spec.kind == SpaceKind::Cart3d).then_some(self.spec.gripper_flag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Drawn candidates; `samples[i]` carries label `i + 1`.
    pub samples: Vec<Action>,
    pub geometries: Vec<ArrowGeometry>,
    pub image: Option<Raster>,
    pub raw_text: String,
    /// Labels the oracle picked, best first, truncated to K.
    pub selected: Vec<u32>,
    /// Distribution after this iteration.
    pub distribution: ProposalDistribution,
    /// The oracle reply held no usable labels; the distribution is unchanged.
    pub noop: bool,
}

impl IterationRecord {
    pub fn label_ids(&self) -> Vec<u32> {
        (1..=self.samples.len() as u32).collect()
    }

    pub fn action_for(&self, label: u32) -> Option<&Action> {
        label.checked_sub(1).and_then(|i| self.samples.get(i as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PivotTrace {
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotOutcome {
    pub best: Action,
    pub trace: PivotTrace,
    /// `false` when no iteration produced a selection and `best` is the
    /// proposal mean.
    pub from_selection: bool,
}

/// Covers the whole space: mean at the bounds midpoint, sigma half the
/// largest extent.
pub fn init_distribution(spec: &ActionSpaceSpec) -> ProposalDistribution {
    ProposalDistribution { mean: spec.midpoint(), sigma: 0.5 * spec.max_extent() }
}

/// `m` i.i.d. draws from N(mean, sigma² I), each clamped to the bounds.
pub fn sample<R: Rng + ?Sized>(
    dist: &ProposalDistribution,
    spec: &ActionSpaceSpec,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Action>, SpaceError> {
    spec.check_dims(&dist.mean)?;
    (0..m)
        .map(|_| {
            let raw: Vec<f64> = dist
                .mean
                .components
                .iter()
                .map(|&mu| {
                    let z: f64 = StandardNormal.sample(rng);
                    mu + dist.sigma * z
                })
                .collect();
            spec.clamp(&Action::new(raw))
        })
        .collect()
}

/// Refits the proposal to the selected actions.
///
/// mean = component-wise average; sigma = RMS deviation from the new mean
/// over the non-frozen components, then bounded to
/// `[max(floor, shrink · prev.sigma), prev.sigma]` with the floor winning.
pub fn fit(
    selected: &[Action],
    prev: &ProposalDistribution,
    spec: &ActionSpaceSpec,
    config: &PivotConfig,
) -> Result<ProposalDistribution, OptimizeError> {
    let first = selected.first().ok_or(OptimizeError::EmptySelection)?;
    let dims = first.len();
    for a in selected {
        spec.check_dims(a)?;
    }
    let n = selected.len() as f64;
    let mut mean = alloc::vec![0.0; dims];
    for a in selected {
        for (m, x) in mean.iter_mut().zip(&a.components) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let active: Vec<usize> = (0..dims).filter(|&i| !spec.is_frozen(i)).collect();
    let mut sq = 0.0;
    for a in selected {
        for &i in &active {
            let d = a.components[i] - mean[i];
            sq += d * d;
        }
    }
    let spread = if active.is_empty() { 0.0 } else { libm::sqrt(sq / (n * active.len() as f64)) };
    let floor = config.sigma_floor_for(spec);
    let sigma = spread.min(prev.sigma).max(config.shrink * prev.sigma).max(floor);
    Ok(ProposalDistribution { mean: spec.clamp(&Action::new(mean))?, sigma })
}

/// Draws candidates, keeping only those whose label circle respects the
/// minimum spacing; rejected slots are refilled from the same distribution
/// for up to `spacing_retries` rounds.
fn draw_candidates<R: Rng + ?Sized>(
    dist: &ProposalDistribution,
    problem: &Problem<'_>,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<Vec<Candidate>, OptimizeError> {
    let size = problem.image.size();
    let min_spacing = problem.style.min_spacing_px;
    let mut kept: Vec<Candidate> = Vec::with_capacity(config.samples);
    let mut last_err = None;
    for round in 0..=config.spacing_retries {
        let need = config.samples - kept.len();
        if need == 0 {
            break;
        }
        let batch = sample(dist, problem.spec, need, rng)?;
        let mut fresh: Vec<Candidate> = Vec::with_capacity(need);
        for action in batch {
            match action_to_geometry(problem.spec, problem.camera, size, &action, 0) {
                Ok(geometries) => fresh.push(Candidate { action, geometries }),
                Err(e @ SpaceError::NonPositiveDepth(_)) => last_err = Some(e),
                Err(e) => return Err(e.into()),
            }
        }
        if round == 0 {
            let centers: Vec<[f64; 2]> = fresh.iter().filter_map(Candidate::label_center).collect();
            let keep = annotate::enforce_spacing(&centers, min_spacing);
            kept.extend(keep.into_iter().map(|i| fresh[i].clone()));
        } else {
            for c in fresh {
                let center = c.label_center();
                let ok = center.is_some_and(|p| {
                    kept.iter().filter_map(Candidate::label_center).all(|q| annotate::spaced(q, p, min_spacing))
                });
                if ok && kept.len() < config.samples {
                    kept.push(c);
                }
            }
        }
    }
    if kept.is_empty() {
        return Err(last_err.map_or(OptimizeError::Annotate(AnnotateError::EmptyCandidateSet), Into::into));
    }
    Ok(kept)
}

fn query_with_retries<O: SelectionOracle + ?Sized>(
    oracle: &mut O,
    query: &SelectionQuery<'_>,
    retries: u32,
) -> Result<SelectionResponse, OracleError> {
    let mut attempt = 0;
    loop {
        match oracle.select(query) {
            Err(e) if e.is_transient() && attempt < retries => attempt += 1,
            other => return other,
        }
    }
}

/// Asks the oracle about `annotated`. Unusable replies come back as
/// `Ok((raw_text, []))`; only transport-level and script errors are `Err`.
fn ask<O: SelectionOracle + ?Sized>(
    oracle: &mut O,
    problem: &Problem<'_>,
    annotated: &AnnotatedImage,
    k: usize,
    retries: u32,
) -> Result<(String, Vec<u32>), OptimizeError> {
    let query = SelectionQuery {
        annotated,
        instruction: problem.instruction,
        k: k.min(annotated.labels.len()).max(1),
        prompt: problem.prompt,
        gripper: problem.gripper(),
    };
    match query_with_retries(oracle, &query, retries) {
        Ok(resp) => {
            let mut selected: Vec<u32> = Vec::new();
            for l in resp.ranked_labels {
                if annotated.labels.contains_key(&l) && !selected.contains(&l) {
                    selected.push(l);
                }
            }
            selected.truncate(k);
            Ok((resp.raw_text, selected))
        }
        Err(OracleError::Parse { raw_text, .. }) => Ok((raw_text, Vec::new())),
        Err(e) => Err(e.into()),
    }
}

/// One iteration: sample → geometry → spacing → render → query → fit.
pub fn pivot_step<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    dist: &ProposalDistribution,
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<(ProposalDistribution, IterationRecord), OptimizeError> {
    let candidates = draw_candidates(dist, problem, config, rng)?;
    let depth_range = problem.spec.depth_range(problem.camera);
    let annotated = annotate::render(problem.image, &candidates, depth_range, problem.style)?;
    let (raw_text, selected) = ask(oracle, problem, &annotated, config.select, config.transport_retries)?;

    let samples: Vec<Action> = candidates.into_iter().map(|c| c.action).collect();
    let noop = selected.is_empty();
    let distribution = if noop {
        dist.clone()
    } else {
        let chosen: Vec<Action> = selected.iter().map(|&l| samples[l as usize - 1].clone()).collect();
        fit(&chosen, dist, problem.spec, config)?
    };
    let AnnotatedImage { pixels, geometries, .. } = annotated;
    let record = IterationRecord {
        samples,
        geometries,
        image: config.keep_images.then_some(pixels),
        raw_text,
        selected,
        distribution: distribution.clone(),
        noop,
    };
    Ok((distribution, record))
}

/// Runs up to `config.iterations` steps from the full-space proposal.
///
/// Stops early once sigma sits at the floor and the mean moved less than the
/// floor. The answer is the top-ranked pick of the last iteration that
/// produced a selection.
pub fn pivot_run<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<PivotOutcome, OptimizeError> {
    config.validate()?;
    problem.validate()?;
    let floor = config.sigma_floor_for(problem.spec);
    let mut dist = init_distribution(problem.spec);
    let mut trace = PivotTrace::default();
    for _ in 0..config.iterations {
        let (next, record) = pivot_step(&dist, problem, oracle, config, rng)?;
        let settled = !record.noop && next.sigma <= floor && next.mean.distance(&dist.mean) < floor;
        trace.records.push(record);
        dist = next;
        if settled {
            break;
        }
    }
    let best = trace.records.iter().rev().find_map(|r| r.selected.first().and_then(|&l| r.action_for(l)).cloned());
    Ok(match best {
        Some(best) => PivotOutcome { best, trace, from_selection: true },
        None => PivotOutcome { best: dist.mean, trace, from_selection: false },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arbitration {
    pub image: Option<Raster>,
    pub raw_text: String,
    pub chosen: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOutcome {
    pub best: Action,
    /// Per-instance results, indexed by instance number.
    pub instances: Vec<Result<PivotOutcome, OptimizeError>>,
    pub arbitration: Option<Arbitration>,
}

impl ParallelOutcome {
    pub fn successes(&self) -> impl Iterator<Item = &PivotOutcome> {
        self.instances.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Seed for parallel instance `index` given the caller's base seed.
pub fn instance_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, &[index as u64])
}

/// Runs `config.parallel` independent instances one after another and
/// aggregates their answers. With a single instance this is exactly
/// [`pivot_run`] on `rng`.
pub fn parallel_pivot<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<ParallelOutcome, OptimizeError> {
    config.validate()?;
    if config.parallel == 1 {
        let run = pivot_run(problem, oracle, config, rng)?;
        return Ok(ParallelOutcome { best: run.best.clone(), instances: alloc::vec![Ok(run)], arbitration: None });
    }
    let base: u64 = rng.random();
    let instances: Vec<_> = (0..config.parallel)
        .map(|i| {
            let mut irng = PivotRng::seed_from_u64(instance_seed(base, i));
            pivot_run(problem, oracle, config, &mut irng)
        })
        .collect();
    let mut arb_rng = PivotRng::seed_from_u64(instance_seed(base, config.parallel));
    aggregate(problem, oracle, config, instances, &mut arb_rng)
}

/// Joins instance results in index order.
pub fn aggregate<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    instances: Vec<Result<PivotOutcome, OptimizeError>>,
    _rng: &mut R,
) -> Result<ParallelOutcome, OptimizeError> {
    let answers: Vec<Action> = instances.iter().filter_map(|r| r.as_ref().ok()).map(|o| o.best.clone()).collect();
    if answers.is_empty() {
        let first = instances
            .into_iter()
            .find_map(Result::err)
            .unwrap_or(OptimizeError::InvalidConfig("no parallel instances were run"));
        return Err(OptimizeError::AllInstancesFailed { count: config.parallel, first: Box::new(first) });
    }
    let (best, arbitration) = match config.aggregation {
        Aggregation::Refit => (refit_answers(&answers, problem.spec, config)?, None),
        Aggregation::Arbitrate => {
            let (arb, chosen) = arbitrate(problem, oracle, config, &answers)?;
            let best = match chosen {
                Some(l) => answers[l as usize - 1].clone(),
                None => refit_answers(&answers, problem.spec, config)?,
            };
            (best, Some(arb))
        }
    };
    Ok(ParallelOutcome { best, instances, arbitration })
}

/// Mean of a distribution fitted to the instance answers.
pub fn refit_answers(
    answers: &[Action],
    spec: &ActionSpaceSpec,
    config: &PivotConfig,
) -> Result<Action, OptimizeError> {
    let wide = init_distribution(spec);
    Ok(fit(answers, &wide, spec, config)?.mean)
}

/// Draws every instance answer (no spacing filter) and asks for the single
/// best using the task prompt with K = 1.
fn arbitrate<O: SelectionOracle + ?Sized>(
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    answers: &[Action],
) -> Result<(Arbitration, Option<u32>), OptimizeError> {
    let size = problem.image.size();
    let candidates = answers
        .iter()
        .map(|a| {
            Ok(Candidate {
                action: a.clone(),
                geometries: action_to_geometry(problem.spec, problem.camera, size, a, 0)?,
            })
        })
        .collect::<Result<Vec<_>, SpaceError>>()?;
    let annotated =
        annotate::render(problem.image, &candidates, problem.spec.depth_range(problem.camera), problem.style)?;
    let (raw_text, chosen) = match ask(oracle, problem, &annotated, 1, config.transport_retries) {
        Ok((raw, sel)) => (raw, sel.first().copied()),
        Err(OptimizeError::Oracle(e)) if e.is_transient() => (String::new(), None),
        Err(e) => return Err(e),
    };
    let image = config.keep_images.then_some(annotated.pixels);
    Ok((Arbitration { image, raw_text, chosen }, chosen))
}
