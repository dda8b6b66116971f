use std::collections::BTreeMap;

use pivot_core::annotate::{depth_to_style, enforce_spacing, AnnotatedImage, AnnotationStyle};
use pivot_core::metrics::{bbox_metrics, cosine_metric, normalized_l2, BBox};
use pivot_core::optimize::{fit, PivotConfig, ProposalDistribution};
use pivot_core::oracle::{parse_selection, PromptOptions, SelectionOracle, SelectionQuery, SyntheticOracle};
use pivot_core::space::{Action, ActionSpaceSpec, CameraModel, Extrinsic, ImageSize};
use pivot_core::{Raster, Rgb};
use proptest::prelude::*;

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        r
    };
    mul(rz, mul(ry, rx))
}

fn spec_2d(lo: [f64; 2], ext: [f64; 2]) -> ActionSpaceSpec {
    let mut s = ActionSpaceSpec::nav2d(ImageSize::new(2, 2));
    s.lower = lo.to_vec();
    s.upper = vec![lo[0] + ext[0], lo[1] + ext[1]];
    s
}

fn pt() -> impl Strategy<Value = [f64; 2]> {
    [-500.0..500.0f64, -500.0..500.0f64]
}

proptest! {
    #[test]
    fn clamp_is_idempotent(lo in pt(), ext in [0.0..100.0f64, 0.1..100.0f64], x in [-1e4..1e4f64, -1e4..1e4f64]) {
        let spec = spec_2d(lo, ext);
        let once = spec.clamp(&Action::new(x.to_vec())).unwrap();
        prop_assert!(spec.contains(&once));
        prop_assert_eq!(spec.clamp(&once).unwrap(), once);
    }

    #[test]
    fn project_unproject_round_trip(
        angles in [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64],
        t in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
        px in [0.0..639.0f64, 0.0..479.0f64],
        depth in 0.1..50.0f64,
        f in 100.0..1000.0f64,
    ) {
        let cam = CameraModel::new(
            f, f * 1.1, 320.0, 240.0, ImageSize::new(640, 480),
            Extrinsic::from_rotation_translation(rotation(angles[0], angles[1], angles[2]), t),
        ).unwrap();
        let p = cam.unproject(px, depth);
        let back = cam.project(p).unwrap();
        prop_assert!((back[0] - px[0]).abs() < 1e-6 && (back[1] - px[1]).abs() < 1e-6, "{:?} vs {:?}", back, px);
        prop_assert!((cam.to_camera_frame(p)[2] - depth).abs() < 1e-9);
    }

    #[test]
    fn depth_style_is_monotone(z_min in -5.0..5.0f64, span in 0.01..10.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        prop_assume!((a - b).abs() >= 0.01);
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        let style = AnnotationStyle::default();
        let z_max = z_min + span;
        let (c1, r1) = depth_to_style(z_min + near * span, z_min, z_max, &style).unwrap();
        let (c2, r2) = depth_to_style(z_min + far * span, z_min, z_max, &style).unwrap();
        prop_assert!(r1 > r2);
        // Near is blue, far is red.
        prop_assert!(c1.0[0] <= c2.0[0] && c1.0[2] >= c2.0[2]);
    }

    #[test]
    fn spacing_keeps_separation_and_is_maximal(pts in prop::collection::vec([0.0..300.0f64, 0.0..300.0f64], 0..40), min in 0.0..60.0f64) {
        let kept = enforce_spacing(&pts, min);
        for (i, &a) in kept.iter().enumerate() {
            for &b in &kept[i + 1..] {
                prop_assert!((pts[a][0] - pts[b][0]).hypot(pts[a][1] - pts[b][1]) >= min);
            }
        }
        for j in 0..pts.len() {
            if !kept.contains(&j) {
                prop_assert!(kept.iter().any(|&k| k < j && (pts[k][0] - pts[j][0]).hypot(pts[k][1] - pts[j][1]) < min));
            }
        }
    }

    #[test]
    fn parsed_labels_are_valid_and_unique(raw in ".{0,80}", nums in prop::collection::vec(0u32..30, 0..8), n in 1u32..15) {
        let valid: Vec<u32> = (1..=n).collect();
        let list = nums.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        for text in [format!("{raw} {{\"points\": [{list}]}}"), format!("{raw} Arrow: [{list}]"), raw.clone()] {
            if let Ok(out) = parse_selection(&text, &valid) {
                prop_assert!(!out.is_empty());
                prop_assert!(out.iter().all(|l| valid.contains(l)));
                let mut dedup = out.clone();
                dedup.sort_unstable();
                dedup.dedup();
                prop_assert_eq!(dedup.len(), out.len());
            }
        }
    }

    #[test]
    fn noiseless_synthetic_matches_brute_force(acts in prop::collection::vec([-50.0..50.0f64, -50.0..50.0f64], 1..15), truth in [-50.0..50.0f64, -50.0..50.0f64], k in 1usize..15) {
        let k = k.min(acts.len());
        let labels: BTreeMap<u32, Action> = acts.iter().enumerate().map(|(i, a)| (i as u32 + 1, Action::new(a.to_vec()))).collect();
        let img = AnnotatedImage { pixels: Raster::new(2, 2, Rgb::WHITE), labels, geometries: vec![] };
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k, prompt: &opts, gripper: None };
        let got = SyntheticOracle::noiseless(Action::new(truth.to_vec()), 100.0).select(&q).unwrap().ranked_labels;
        let mut brute: Vec<(f64, u32)> = acts.iter().enumerate()
            .map(|(i, a)| (((a[0] - truth[0]).powi(2) + (a[1] - truth[1]).powi(2)).sqrt(), i as u32 + 1))
            .collect();
        brute.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let want: Vec<u32> = brute.iter().take(k).map(|p| p.1).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn fit_sigma_stays_between_floor_and_previous(
        sel in prop::collection::vec([0.0..100.0f64, 0.0..100.0f64], 1..10),
        prev_sigma in 1.0..80.0f64,
        shrink in 0.01..1.0f64,
    ) {
        let spec = spec_2d([0.0, 0.0], [100.0, 100.0]);
        let cfg = PivotConfig { shrink, sigma_floor: Some(1.0), ..PivotConfig::default() };
        let prev = ProposalDistribution { mean: Action::new(vec![50.0, 50.0]), sigma: prev_sigma };
        let acts: Vec<Action> = sel.iter().map(|a| Action::new(a.to_vec())).collect();
        let d = fit(&acts, &prev, &spec, &cfg).unwrap();
        prop_assert!(d.sigma <= prev_sigma + 1e-12);
        prop_assert!(d.sigma >= 1.0 && d.sigma >= shrink * prev_sigma - 1e-12);
        for dim in 0..2 {
            let m = sel.iter().map(|a| a[dim]).sum::<f64>() / sel.len() as f64;
            prop_assert!((d.mean.components[dim] - m).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_is_scale_invariant(a in [-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64], b in [-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64], s in 0.01..100.0f64, t in 0.01..100.0f64) {
        let (pa, pb) = (Action::new(a.to_vec()), Action::new(b.to_vec()));
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let base = cosine_metric(&pa, &pb).unwrap();
        let scaled = cosine_metric(&Action::new(a.iter().map(|x| x * s).collect()), &Action::new(b.iter().map(|x| x * t).collect())).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn l2_is_symmetric_and_translation_invariant(p in pt(), q in pt(), d in pt(), w in 1.0..2000.0f64) {
        let base = normalized_l2(p, q, w);
        prop_assert_eq!(base, normalized_l2(q, p, w));
        let moved = normalized_l2([p[0] + d[0], p[1] + d[1]], [q[0] + d[0], q[1] + d[1]], w);
        prop_assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn bbox_hit_survives_dilation(p in pt(), corner in pt(), size in [0.1..300.0f64, 0.1..300.0f64], margin in 0.0..100.0f64) {
        let b = BBox::new(corner[0], corner[1], size[0], size[1]);
        if bbox_metrics(p, &b, 640.0).hit {
            prop_assert!(bbox_metrics(p, &b.dilate(margin), 640.0).hit);
        }
    }
}

fn brute_line(w: u32, h: u32, a: [f64; 2], b: [f64; 2], thickness: f64) -> Raster {
    let mut r = Raster::new(w, h, Rgb::WHITE);
    let half = (thickness / 2.0).max(0.5);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    for y in 0..h {
        for x in 0..w {
            let p = [f64::from(x) - a[0], f64::from(y) - a[1]];
            let t = if len2 > 0.0 { ((p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (ex, ey) = (p[0] - t * d[0], p[1] - t * d[1]);
            if ex * ex + ey * ey <= half * half {
                r.put(i64::from(x), i64::from(y), Rgb::BLACK);
            }
        }
    }
    r
}

proptest! {
    #[test]
    fn line_matches_full_scan(a in [-10.0..90.0f64, -10.0..70.0f64], b in [-10.0..90.0f64, -10.0..70.0f64], t in 0.5..9.0f64) {
        let mut fast = Raster::new(80, 60, Rgb::WHITE);
        fast.draw_line(a, b, t, Rgb::BLACK);
        prop_assert_eq!(fast, brute_line(80, 60, a, b, t));
    }
}
