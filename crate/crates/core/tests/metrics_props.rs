//! Divergence, histogram and moment properties.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use qgaze_core::metrics::{
    coarsen, histogram, js_divergence, kl_divergence, log_transform_view, moment_report,
    uniform_edges,
};

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_filter_map("all zero", |w| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| w.iter().map(|x| x / total).collect())
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..20).prop_flat_map(|n| (distribution(n), distribution(n)))
}

fn direct_jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            s += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            s += 0.5 * b * (b / m).ln();
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn jsd_is_symmetric_and_bounded((p, q) in pair()) {
        let pq = js_divergence(&p, &q).unwrap();
        let qp = js_divergence(&q, &p).unwrap();
        prop_assert_eq!(pq, qp);
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&pq));
        prop_assert!((pq - direct_jsd(&p, &q)).abs() < 1e-12);
    }

    #[test]
    fn jsd_of_identical_is_zero(p in (1usize..20).prop_flat_map(distribution)) {
        prop_assert!(js_divergence(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kl_is_nonnegative((p, q) in pair()) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
    }

    #[test]
    fn coarsening_never_raises_jsd((p, q) in (1usize..8).prop_flat_map(|n| (distribution(2 * n), distribution(2 * n)))) {
        let fine = js_divergence(&p, &q).unwrap();
        let coarse = js_divergence(&coarsen(&p, 2).unwrap(), &coarsen(&q, 2).unwrap()).unwrap();
        prop_assert!(coarse <= fine + 1e-12);
    }

    #[test]
    fn moments_are_affine_invariant(
        xs in prop::collection::vec(-50.0..50.0f64, 3..200),
        a in 0.1..10.0f64,
        b in -100.0..100.0f64,
    ) {
        let base = moment_report(&xs).unwrap();
        prop_assume!(base.std_dev > 1e-3);
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let moved = moment_report(&ys).unwrap();
        prop_assert!((moved.mean - (a * base.mean + b)).abs() < 1e-9 * (1.0 + moved.mean.abs()));
        prop_assert!((moved.std_dev - a * base.std_dev).abs() < 1e-9 * moved.std_dev);
        prop_assert!((moved.skewness - base.skewness).abs() < 1e-8);
        prop_assert!((moved.kurtosis - base.kurtosis).abs() < 1e-8);
    }

    #[test]
    fn histogram_counts_every_point(
        xs in prop::collection::vec(-2.0..3.0f64, 0..300),
        bins in 1usize..30,
    ) {
        let edges = uniform_edges(0.0, 1.0, bins).unwrap();
        let h = histogram(&xs, &edges).unwrap();
        prop_assert_eq!(h.total(), xs.len() as u64);
        prop_assert_eq!(h.clamped_low, xs.iter().filter(|&&x| x < 0.0).count() as u64);
        prop_assert_eq!(h.clamped_high, xs.iter().filter(|&&x| x > 1.0).count() as u64);
        if let Some(p) = h.normalized() {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (i, &c) in h.counts.iter().enumerate() {
            let inside = xs
                .iter()
                .filter(|&&x| {
                    let x = x.clamp(0.0, 1.0);
                    x >= edges[i] && (x < edges[i + 1] || (i + 1 == bins && x <= edges[i + 1]))
                })
                .count() as u64;
            prop_assert_eq!(c, inside);
        }
    }
}

#[test]
fn kl_worked_example() {
    let p = [0.5, 0.5];
    let q = [0.9, 0.1];
    let want = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
    assert!((kl_divergence(&p, &q).unwrap() - want).abs() < 1e-15);
    assert!((want - 0.510_825_6).abs() < 1e-7);
    let k = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    assert!((k - 0.14384).abs() < 1e-5, "{k}");
}

#[test]
fn jsd_of_disjoint_is_ln2() {
    let j = js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    assert!((j - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn kl_floors_missing_support() {
    let k = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
    assert!(k.is_finite() && k > 10.0);
}

#[test]
fn mismatched_or_invalid_inputs_are_rejected() {
    assert!(js_divergence(&[1.0], &[0.5, 0.5]).is_err());
    assert!(js_divergence(&[0.7, 0.7], &[0.5, 0.5]).is_err());
    assert!(kl_divergence(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
    assert!(moment_report(&[1.0, 2.0]).is_err());
    assert!(histogram(&[0.1], &[0.0]).is_err());
}

#[test]
fn exponential_shape_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let xs: Vec<f64> = (0..2_000_000).map(|_| Exp1.sample(&mut rng)).collect();
    let m = moment_report(&xs).unwrap();
    assert!((m.mean - 1.0).abs() < 0.005);
    assert!((m.std_dev - 1.0).abs() < 0.005);
    assert!((m.skewness - 2.0).abs() < 0.05, "{}", m.skewness);
    assert!((m.kurtosis - 6.0).abs() < 0.4, "{}", m.kurtosis);
}

#[test]
fn log_view_floors_zeros() {
    let v = log_transform_view(&[0.0, 1.0, std::f64::consts::E], 1e-9);
    assert!((v[0] - 1e-9f64.ln()).abs() < 1e-12);
    assert_eq!(v[1], 0.0);
    assert!((v[2] - 1.0).abs() < 1e-15);
}
