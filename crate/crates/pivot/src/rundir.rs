//! Timestamped run directories and their trace files.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use pivot_core::optimize::{IterationRecord, ParallelOutcome};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::imageio::save_png;

/// Creates `<out>/<YYYYmmdd-HHMMSS>-seed<seed>`, adding `-2`, `-3`, ... if
/// the name is taken. Existing directories are never reused.
pub fn create_run_dir(out: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let stem = format!("{}-seed{seed}", chrono::Local::now().format("%Y%m%d-%H%M%S"));
    for n in 1.. {
        let name = if n == 1 { stem.clone() } else { format!("{stem}-{n}") };
        let path = out.join(name);
        match std::fs::create_dir(&path) {
            Ok(()) => return Ok(path),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&path, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

pub fn write_config_snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct IterationLine<'a> {
    instance: usize,
    iteration: usize,
    samples: Vec<&'a [f64]>,
    raw_text: &'a str,
    selected: &'a [u32],
    mean: &'a [f64],
    sigma: f64,
    noop: bool,
}

#[derive(Serialize)]
struct FailureLine {
    instance: usize,
    error: String,
}

#[derive(Serialize)]
struct ArbitrationLine<'a> {
    arbitration: ArbitrationBody<'a>,
}

#[derive(Serialize)]
struct ArbitrationBody<'a> {
    raw_text: &'a str,
    chosen: Option<u32>,
}

#[derive(Serialize)]
struct BestLine<'a> {
    best: &'a [f64],
}

fn iteration_line(instance: usize, iteration: usize, r: &IterationRecord) -> String {
    serde_json::to_string(&IterationLine {
        instance,
        iteration,
        samples: r.samples.iter().map(|a| a.as_slice()).collect(),
        raw_text: &r.raw_text,
        selected: &r.selected,
        mean: r.distribution.mean.as_slice(),
        sigma: r.distribution.sigma,
        noop: r.noop,
    })
    .expect("trace line serializes")
}

/// JSONL trace of a parallel run: one line per instance iteration, a line per
/// failed instance, the arbitration reply if any, then the final answer.
pub fn trace_lines(outcome: &ParallelOutcome) -> Vec<String> {
    let mut lines = Vec::new();
    for (e, inst) in outcome.instances.iter().enumerate() {
        match inst {
            Ok(o) => {
                for (i, r) in o.trace.records.iter().enumerate() {
                    lines.push(iteration_line(e, i + 1, r));
                }
            }
            Err(err) => lines
                .push(serde_json::to_string(&FailureLine { instance: e, error: err.to_string() }).expect("serializes")),
        }
    }
    if let Some(a) = &outcome.arbitration {
        lines.push(
            serde_json::to_string(&ArbitrationLine {
                arbitration: ArbitrationBody { raw_text: &a.raw_text, chosen: a.chosen },
            })
            .expect("serializes"),
        );
    }
    lines.push(serde_json::to_string(&BestLine { best: outcome.best.as_slice() }).expect("serializes"));
    lines
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| CliError::io(path, e))?);
    for l in lines {
        writeln!(f, "{l}").map_err(|e| CliError::io(path, e))?;
    }
    f.flush().map_err(|e| CliError::io(path, e))
}

/// Writes the trace, the per-iteration images `inst{e}_iter{i}.png`,
/// `arbitration.png` and `best_action.json` into `dir`.
pub fn write_outcome(dir: &Path, outcome: &ParallelOutcome) -> Result<()> {
    write_lines(&dir.join("trace.jsonl"), &trace_lines(outcome))?;
    for (e, inst) in outcome.instances.iter().enumerate() {
        if let Ok(o) = inst {
            for (i, r) in o.trace.records.iter().enumerate() {
                if let Some(img) = &r.image {
                    save_png(img, &dir.join(format!("inst{e}_iter{}.png", i + 1)))?;
                }
            }
        }
    }
    if let Some(img) = outcome.arbitration.as_ref().and_then(|a| a.image.as_ref()) {
        save_png(img, &dir.join("arbitration.png"))?;
    }
    let from_selection = outcome.successes().any(|o| o.from_selection);
    write_json(
        &dir.join("best_action.json"),
        &serde_json::json!({"action": outcome.best.as_slice(), "from_selection": from_selection}),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collisions_get_a_suffix() {
        let dir = tempfile::tempdir().unwrap();
        let a = create_run_dir(dir.path(), 7).unwrap();
        let b = create_run_dir(dir.path(), 7).unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().ends_with("-seed7"));
        // Same second in practice; the second one carries a suffix.
        if a.file_name().unwrap().len() + 2 == b.file_name().unwrap().len() {
            assert!(b.to_str().unwrap().ends_with("-seed7-2"));
        }
    }
}
