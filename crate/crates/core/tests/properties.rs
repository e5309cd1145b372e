use dwlab_core::adops::majorant;
use dwlab_core::dyadic::{CubeFilter, CubeId, Truncation};
use dwlab_core::harness::{fmt_sig, ratio_stats};
use dwlab_core::linalg::{matrix_power, CMat, C64};
use dwlab_core::reducing::mvee_centered;
use dwlab_core::seqspace::{random_sequence, seq_norm, vec_norm, CoeffSeq, Family, ScaleLaw, SpaceParams};
use dwlab_core::transforms::{dwt_analyze, dwt_synthesize, Filter, GridSpec};
use proptest::prelude::*;

fn window() -> Truncation {
    Truncation::new(1, 0, 4, 2).unwrap()
}

fn seq(seed: u64, m: usize) -> CoeffSeq {
    random_sequence(&window(), m, seed, 0.4, ScaleLaw { sigma: 0.0 }, false).unwrap()
}

fn add(a: &CoeffSeq, b: &CoeffSeq) -> CoeffSeq {
    let mut out = a.clone();
    for (q, v) in &b.entries {
        let cur = out.entries.entry(q.clone()).or_insert_with(|| vec![C64::new(0.0, 0.0); v.len()]);
        for (x, y) in cur.iter_mut().zip(v) {
            *x += y;
        }
    }
    out
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::B), Just(Family::F)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_homogeneous(seed in any::<u64>(), fam in family(), p in 0.5f64..4.0, q in 0.5f64..4.0, s in -1.0f64..1.0, lam in 0.1f64..10.0) {
        let t = window();
        let tv = seq(seed, 2);
        let sp = SpaceParams::new(fam, s, p, q);
        let a = seq_norm(&tv.scale(C64::new(0.0, lam)), &sp, &t).unwrap();
        let b = seq_norm(&tv, &sp, &t).unwrap();
        prop_assert!((a - lam * b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn triangle_inequality_for_banach_indices(s1 in any::<u64>(), s2 in any::<u64>(), fam in family(), p in 1.0f64..4.0, q in 1.0f64..4.0) {
        let t = window();
        let (a, b) = (seq(s1, 1), seq(s2, 1));
        let sp = SpaceParams::new(fam, 0.0, p, q);
        let lhs = seq_norm(&add(&a, &b), &sp, &t).unwrap();
        let rhs = seq_norm(&a, &sp, &t).unwrap() + seq_norm(&b, &sp, &t).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn b_f_sandwich(seed in any::<u64>(), p in 0.5f64..4.0, q in 0.5f64..4.0) {
        let t = window();
        let tv = seq(seed, 1);
        let f = seq_norm(&tv, &SpaceParams::new(Family::F, 0.0, p, q), &t).unwrap();
        let bmin = seq_norm(&tv, &SpaceParams::new(Family::B, 0.0, p, p.min(q)), &t).unwrap();
        let bmax = seq_norm(&tv, &SpaceParams::new(Family::B, 0.0, p, p.max(q)), &t).unwrap();
        prop_assert!(bmax <= f * (1.0 + 1e-12) && f <= bmin * (1.0 + 1e-12));
    }

    #[test]
    fn majorant_dominates(seed in any::<u64>(), r in 0.5f64..3.0, lambda in 1.0f64..4.0) {
        let t = window();
        let tv = seq(seed, 2);
        let star = majorant(&tv, r, lambda, &t).unwrap();
        for (q, v) in &tv.entries {
            let bound = star.get(q).map_or(0.0, |w| w[0].re);
            prop_assert!(vec_norm(v) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ratio_stats_are_ordered_and_scale(a in prop::collection::vec(0.01f64..100.0, 1..40), c in 0.1f64..10.0) {
        let b: Vec<f64> = a.iter().map(|x| x.sqrt()).collect();
        let s = ratio_stats(&a, &b).unwrap();
        prop_assert!(s.min.0 <= s.median.0 && s.median.0 <= s.max.0);
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        let s2 = ratio_stats(&scaled, &b).unwrap();
        prop_assert!((s2.max.0 - c * s.max.0).abs() <= 1e-12 * s2.max.0);
    }

    #[test]
    fn twelve_digit_text_round_trips(x in -1e12f64..1e12) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
    }

    #[test]
    fn matrix_powers_compose(a in -2.0f64..2.0, b in -2.0f64..2.0, d1 in 0.1f64..10.0, d2 in 0.1f64..10.0, off in -1.0f64..1.0) {
        let mut m = CMat::diag(&[d1, d2]);
        let o = off * (d1 * d2).sqrt() * 0.8;
        m.set(0, 1, C64::new(o, 0.5 * o));
        m.set(1, 0, C64::new(o, -0.5 * o));
        let lhs = matrix_power(&m, a).unwrap().mul(&matrix_power(&m, b).unwrap());
        let rhs = matrix_power(&m, a + b).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-8 * rhs.op_norm().max(1.0));
    }

    #[test]
    fn ellipsoid_contains_points(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..30)) {
        prop_assume!(pts.iter().filter(|p| p[0].abs() + p[1].abs() > 0.1).count() >= 2);
        let (x0, y0) = (pts[0][0], pts[0][1]);
        prop_assume!(pts.iter().any(|p| (p[0] * y0 - p[1] * x0).abs() > 0.1));
        let h = mvee_centered(&pts, 1e-9, 2000).unwrap();
        for p in &pts {
            let v = h[0] * p[0] * p[0] + 2.0 * h[1] * p[0] * p[1] + h[3] * p[1] * p[1];
            prop_assert!(v <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn dwt_round_trip(seed in any::<u64>(), k in prop::sample::select(vec![2usize, 3, 4]), levels in 1u32..4) {
        let f = GridSpec::Noise { n: 1, size: 64, seed, m: 1, band_limited: false }.build().unwrap();
        let c = dwt_analyze(&f, Filter::new(k).unwrap(), levels).unwrap();
        prop_assert!(f.max_abs_diff(&dwt_synthesize(&c).unwrap()) < 1e-10);
        prop_assert!((c.energy() - f.energy()).abs() < 1e-10);
    }

    #[test]
    fn cubes_nest(j in 0i32..6, k in -40i64..40) {
        let q = CubeId::new(j, &[k]);
        for ch in q.children() {
            prop_assert!(q.contains(&ch));
            prop_assert_eq!(ch.parent(), q.clone());
        }
    }
}

#[test]
fn window_enumeration_counts() {
    let t = Truncation::new(1, 0, 4, 2).unwrap();
    assert_eq!(t.enumerate(&CubeFilter::All).unwrap().len(), 2 * 31);
}
