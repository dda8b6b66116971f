//! Metrics and the synthetic oracle against independent recomputation.

use std::collections::BTreeMap;

use pivot_core::annotate::AnnotatedImage;
use pivot_core::metrics::{bbox_metrics, cosine_metric, normalized_l2, BBox};
use pivot_core::oracle::{PromptOptions, SelectionOracle, SelectionQuery, SyntheticOracle};
use pivot_core::seed::rng_for;
use pivot_core::{Action, Raster, Rgb};
use rand::Rng;

#[test]
fn sixty_degrees_is_one_half() {
    // Exactly 60° apart, so the result is exactly one half.
    assert_eq!(cosine_metric(&Action::new(vec![1.0, 1.0, 0.0]), &Action::new(vec![0.0, 1.0, 1.0])), Ok(0.5));
    let a = Action::new(vec![1.0, 0.0]);
    let (s, c) = 60f64.to_radians().sin_cos();
    let b = Action::new(vec![c, s]);
    let got = cosine_metric(&a, &b).unwrap();
    assert!((got - 0.5).abs() < 1e-15, "{got}");
    assert!((got.acos().to_degrees() - 60.0).abs() < 1e-9);
}

#[test]
fn l2_and_bbox_match_brute_force() {
    let mut rng = rng_for(17, &[0]);
    for _ in 0..1000 {
        let p: [f64; 2] = [rng.random_range(-100.0..1000.0), rng.random_range(-100.0..800.0)];
        let q: [f64; 2] = [rng.random_range(-100.0..1000.0), rng.random_range(-100.0..800.0)];
        let w: f64 = rng.random_range(16.0..2048.0);
        let brute = ((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1])).sqrt() / w;
        assert!((normalized_l2(p, q, w) - brute).abs() < 1e-12);

        let b = BBox::new(q[0], q[1], rng.random_range(1.0..400.0), rng.random_range(1.0..400.0));
        let inside = p[0] >= b.x && p[0] <= b.x + b.w && p[1] >= b.y && p[1] <= b.y + b.h;
        let (cx, cy) = (b.x + 0.5 * b.w, b.y + 0.5 * b.h);
        let dist = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() / w;
        let got = bbox_metrics(p, &b, w);
        assert_eq!(got.hit, inside);
        assert!((got.center_distance - dist).abs() < 1e-12);
    }
}

#[test]
fn low_noise_oracle_prefers_closer_candidate() {
    // Best at distance 0.25, runner-up at 0.5, extent 1, noise 0.05: the
    // score gap is 0.25 against a difference of two N(0, 0.05²) draws, so
    // P(wrong) = Phi(-0.25 / (0.05·√2)) ≈ 2e-4.
    let labels: BTreeMap<u32, Action> =
        [(1, Action::new(vec![0.5, 0.0])), (2, Action::new(vec![0.25, 0.0]))].into_iter().collect();
    let img = AnnotatedImage { pixels: Raster::new(2, 2, Rgb::WHITE), labels, geometries: vec![] };
    let opts = PromptOptions::default();
    let q = SelectionQuery { annotated: &img, instruction: "", k: 1, prompt: &opts, gripper: None };
    let mut o = SyntheticOracle::new(Some(Action::new(vec![0.0, 0.0])), 0.05, 1.0, 99);
    let trials = 2000;
    let correct = (0..trials).filter(|_| o.select(&q).unwrap().ranked_labels == vec![2]).count();
    assert!(correct as f64 / trials as f64 > 0.95, "{correct}/{trials}");
}
