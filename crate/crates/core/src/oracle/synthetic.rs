//! Deterministic stand-in for a vision-language model: ranks labels by the
//! distance of their actions to a hidden reference action, optionally
//! perturbed by Gaussian noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{OracleError, SelectionOracle, SelectionQuery, SelectionResponse};
use crate::seed::PivotRng;
use crate::space::Action;

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    truth: Option<Action>,
    /// Noise standard deviation as a fraction of `extent`.
    noise_sigma: f64,
    /// Scale of the action space (its largest bound extent).
    extent: f64,
    rng: PivotRng,
}

impl SyntheticOracle {
    pub fn new(truth: Option<Action>, noise_sigma: f64, extent: f64, seed: u64) -> Self {
        Self { truth, noise_sigma, extent, rng: PivotRng::seed_from_u64(seed) }
    }

    pub fn noiseless(truth: Action, extent: f64) -> Self {
        Self::new(Some(truth), 0.0, extent, 0)
    }

    pub fn truth(&self) -> Option<&Action> {
        self.truth.as_ref()
    }
}

/// Scores each labeled action and returns the `k` best (lowest score) labels.
///
/// score = ‖action − truth‖ + noise_sigma · extent · N(0, 1); ties break
/// toward the lower label. One normal draw is taken per label, in ascending
/// label order, whether or not the noise scale is zero.
pub fn synthetic_select<R: rand::Rng + ?Sized>(
    query: &SelectionQuery<'_>,
    truth: &Action,
    noise_sigma: f64,
    extent: f64,
    rng: &mut R,
) -> Result<SelectionResponse, OracleError> {
    query.validate()?;
    let scale = noise_sigma * extent;
    let mut scored: Vec<(f64, u32)> = query
        .annotated
        .labels
        .iter()
        .map(|(&label, action)| {
            let z: f64 = StandardNormal.sample(rng);
            (action.distance(truth) + scale * z, label)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ranked_labels: Vec<u32> = scored.iter().take(query.k).map(|&(_, l)| l).collect();
    let list: Vec<String> = ranked_labels.iter().map(|l| format!("{l}")).collect();
    let raw_text = format!("{{\"points\": [{}]}}", list.join(", "));
    Ok(SelectionResponse { ranked_labels, raw_text })
}

impl SelectionOracle for SyntheticOracle {
    fn select(&mut self, query: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError> {
        let truth = self.truth.as_ref().ok_or(OracleError::MissingReference)?;
        synthetic_select(query, truth, self.noise_sigma, self.extent, &mut self.rng)
    }

    fn set_reference(&mut self, truth: &Action) {
        self.truth = Some(truth.clone());
    }
}

#[cfg(test)]
mod tests {
    use alloc::collections::BTreeMap;
    use alloc::vec;

    use super::*;
    use crate::annotate::AnnotatedImage;
    use crate::oracle::PromptOptions;
    use crate::raster::{Raster, Rgb};

    fn image_with(actions: &[[f64; 2]]) -> AnnotatedImage {
        let labels: BTreeMap<u32, Action> =
            actions.iter().enumerate().map(|(i, a)| (i as u32 + 1, Action::new(a.to_vec()))).collect();
        AnnotatedImage { pixels: Raster::new(2, 2, Rgb::WHITE), labels, geometries: vec![] }
    }

    #[test]
    fn exact_match_ranked_first() {
        let img = image_with(&[[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]]);
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 1, prompt: &opts, gripper: None };
        let mut o = SyntheticOracle::noiseless(Action::new(vec![3.0, 4.0]), 10.0);
        let r = o.select(&q).unwrap();
        assert_eq!(r.ranked_labels, vec![2]);
        assert_eq!(r.raw_text, "{\"points\": [2]}");
    }

    #[test]
    fn full_ranking_sorted_by_distance() {
        let img = image_with(&[[5.0, 0.0], [1.0, 0.0], [3.0, 0.0], [2.0, 0.0]]);
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 4, prompt: &opts, gripper: None };
        let mut o = SyntheticOracle::noiseless(Action::new(vec![0.0, 0.0]), 10.0);
        assert_eq!(o.select(&q).unwrap().ranked_labels, vec![2, 4, 3, 1]);
    }

    #[test]
    fn ties_break_to_lower_label() {
        let img = image_with(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]);
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 3, prompt: &opts, gripper: None };
        let mut o = SyntheticOracle::noiseless(Action::new(vec![0.0, 0.0]), 1.0);
        assert_eq!(o.select(&q).unwrap().ranked_labels, vec![1, 2, 3]);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let img = image_with(&[[1.0, 0.0]]);
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 1, prompt: &opts, gripper: None };
        let mut o = SyntheticOracle::new(None, 0.0, 1.0, 0);
        assert_eq!(o.select(&q), Err(OracleError::MissingReference));
        o.set_reference(&Action::new(vec![1.0, 0.0]));
        assert_eq!(o.select(&q).unwrap().ranked_labels, vec![1]);
    }
}
