//! Parallel instances on threads for oracles that allow overlapping calls.

use pivot_core::optimize::{
    aggregate, instance_seed, parallel_pivot, pivot_run, OptimizeError, ParallelOutcome, PivotConfig, Problem,
};
use pivot_core::oracle::{Concurrency, SelectionOracle};
use pivot_core::seed::PivotRng;
use rand::{Rng, SeedableRng};

/// Same contract and seeding as [`parallel_pivot`], but instances of a
/// concurrent oracle run on scoped threads, each with its own clone, at most
/// `max_in_flight` at a time. Results are joined in instance order.
pub fn run_parallel<O, R>(
    problem: &Problem<'_>,
    oracle: &mut O,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<ParallelOutcome, OptimizeError>
where
    O: SelectionOracle + Clone + Send,
    R: Rng + ?Sized,
{
    let max_in_flight = match oracle.concurrency() {
        Concurrency::Concurrent { max_in_flight } if config.parallel > 1 && max_in_flight > 1 => max_in_flight,
        _ => return parallel_pivot(problem, oracle, config, rng),
    };
    config.validate()?;
    let base: u64 = rng.random();
    let e = config.parallel;
    let mut instances = Vec::with_capacity(e);
    let mut start = 0;
    while start < e {
        let end = (start + max_in_flight).min(e);
        let batch: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (start..end)
                .map(|i| {
                    let mut o = oracle.clone();
                    let p = *problem;
                    s.spawn(move || {
                        let mut r = PivotRng::seed_from_u64(instance_seed(base, i));
                        pivot_run(&p, &mut o, config, &mut r)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("instance thread panicked")).collect()
        });
        instances.extend(batch);
        start = end;
    }
    let mut arb_rng = PivotRng::seed_from_u64(instance_seed(base, e));
    aggregate(problem, oracle, config, instances, &mut arb_rng)
}

#[cfg(test)]
mod tests {
    use pivot_core::oracle::{OracleError, PromptOptions, SelectionQuery, SelectionResponse, SyntheticOracle};
    use pivot_core::{Action, ActionSpaceSpec, AnnotationStyle, ImageSize, Raster, Rgb};

    use super::*;

    /// Noiseless synthetic oracle that claims to be concurrent.
    #[derive(Clone)]
    struct Threaded(SyntheticOracle);

    impl SelectionOracle for Threaded {
        fn select(&mut self, q: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError> {
            self.0.select(q)
        }

        fn concurrency(&self) -> Concurrency {
            Concurrency::Concurrent { max_in_flight: 2 }
        }
    }

    #[test]
    fn threaded_matches_serial_for_stateless_oracle() {
        let size = ImageSize::new(200, 150);
        let image = Raster::new(200, 150, Rgb::WHITE);
        let spec = ActionSpaceSpec::nav2d(size);
        let style = AnnotationStyle::default();
        let prompt = PromptOptions::default();
        let problem =
            Problem { image: &image, instruction: "x", spec: &spec, camera: None, style: &style, prompt: &prompt };
        let cfg = PivotConfig { parallel: 3, ..PivotConfig::default() };
        let truth = Action::new(vec![30.0, 20.0]);

        let mut threaded = Threaded(SyntheticOracle::noiseless(truth.clone(), 199.0));
        let a = run_parallel(&problem, &mut threaded, &cfg, &mut PivotRng::seed_from_u64(5)).unwrap();
        let mut serial = SyntheticOracle::noiseless(truth, 199.0);
        let b = parallel_pivot(&problem, &mut serial, &cfg, &mut PivotRng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
