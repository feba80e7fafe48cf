mod common;

use ccs_core::dataset::{make_folds, Dataset, FoldMode, Observation, OutcomeKind};
use ccs_core::estimators::{all_requests, Estimand};
use ccs_core::nuisance::{compose_pi, ClipPolicy, ConstantLearner};
use ccs_core::report::sig6;
use ccs_core::simlab::{bvn_cdf_std, distort_mixture, distort_shrink, std_normal_cdf};
use common::{constant_fitter, k1, one_covariate_schema};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prob() -> impl Strategy<Value = f64> {
    0.02f64..0.98
}

fn learner() -> impl Strategy<Value = ConstantLearner> {
    (
        prob(),
        prob(),
        [[prob(), prob()], [prob(), prob()]],
        [prob(), prob()],
    )
        .prop_map(|(lambda1, pi1_obs, tau, tau_pooled)| ConstantLearner {
            lambda1,
            pi1_obs,
            tau,
            tau_pooled,
        })
}

/// Rows covering every `(r, t)` cell plus random extras.
fn dataset() -> impl Strategy<Value = Dataset> {
    let row = (0u8..2, 0u8..2, 0u8..2, -5.0f64..5.0);
    prop::collection::vec(row, 0..40).prop_map(|extra| {
        let mut rows: Vec<Observation> = [(1, 1), (1, 0), (0, 1), (0, 0)]
            .iter()
            .enumerate()
            .map(|(i, &(r, t))| Observation {
                x: vec![i as f64 * 0.1],
                r,
                t,
                y: f64::from(i as u8 % 2),
            })
            .collect();
        rows.extend(extra.into_iter().map(|(r, t, y, x)| Observation {
            x: vec![x],
            r,
            t,
            y: f64::from(y),
        }));
        Dataset::new(one_covariate_schema(), rows, OutcomeKind::Binary, 0.5).unwrap()
    })
}

proptest! {
    #[test]
    fn folds_partition_the_rows(n in 2usize..300, k in 1usize..10, seed in any::<u64>(), multi in any::<bool>()) {
        prop_assume!(k <= n);
        let mode = if multi { FoldMode::Multinomial } else { FoldMode::Balanced };
        let plan = make_folds(n, k, seed, mode).unwrap();
        let mut seen = vec![0usize; n];
        let mut sizes = Vec::new();
        for f in 1..=k {
            let m = plan.members(f);
            sizes.push(m.len());
            for &i in &m {
                seen[i] += 1;
            }
            let mut all = m.clone();
            all.extend(plan.complement(f));
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        if !multi {
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(plan, make_folds(n, k, seed, mode).unwrap());
    }

    #[test]
    fn clipping_is_bounded_and_idempotent(p in -1.0f64..2.0, eps in 0.001f64..0.49) {
        let c = ClipPolicy::new(eps).unwrap();
        let q = c.apply(p);
        prop_assert!(q >= eps && q <= 1.0 - eps);
        prop_assert_eq!(c.apply(q), q);
    }

    #[test]
    fn composed_treatment_probability_mixes_its_inputs(l in 0.0f64..=1.0, pt in 0.0f64..=1.0, po in 0.0f64..=1.0) {
        let p1 = compose_pi(l, pt, po);
        prop_assert!(p1 >= pt.min(po) - 1e-15 && p1 <= pt.max(po) + 1e-15);
        prop_assert!((p1 + compose_pi(l, 1.0 - pt, 1.0 - po) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn six_significant_digits_round_trip(x in prop_oneof![-1e9f64..1e9, -1e-3f64..1e-3]) {
        let back: f64 = sig6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + f64::MIN_POSITIVE, "{} -> {}", x, sig6(x));
    }

    #[test]
    fn bivariate_cdf_respects_the_frechet_bounds(a in -6.0f64..6.0, b in -6.0f64..6.0, rho in -0.99f64..0.99) {
        let p = bvn_cdf_std(a, b, rho);
        let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
        prop_assert!(p >= (pa + pb - 1.0).max(0.0) - 1e-12);
        prop_assert!(p <= pa.min(pb) + 1e-12);
        prop_assert!((p - bvn_cdf_std(b, a, rho)).abs() < 1e-14);
    }

    #[test]
    fn distortions_stay_in_the_unit_interval_and_preserve_order(p in 0.001f64..0.999, q in 0.001f64..0.999) {
        for f in [distort_mixture as fn(f64) -> f64, |p| distort_shrink(p, 0.0, 25.0)] {
            let (fp, fq) = (f(p), f(q));
            prop_assert!(fp > 0.0 && fp < 1.0);
            if p < q {
                prop_assert!(fp <= fq);
            }
        }
    }

    #[test]
    fn influence_values_are_centered_and_intervals_symmetric(d in dataset(), l in learner()) {
        let out = constant_fitter(l).run(&d, &k1(d.len()), &all_requests()).unwrap();
        for r in &out.reports {
            let mean = r.if_values.iter().sum::<f64>() / d.len() as f64;
            let scale = r.if_values.iter().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!(mean.abs() < 1e-12 * scale, "{}: {}", r.request.label(), mean);
            prop_assert!(((r.ci95.1 - r.point) - (r.point - r.ci95.0)).abs() < 1e-12);
            prop_assert!(r.se >= 0.0);
            if r.request.estimand == Estimand::Mu && r.per_fold.len() == 1 {
                prop_assert!((r.per_fold[0].fold_point - r.point).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn row_order_does_not_matter(d in dataset(), l in learner(), seed in any::<u64>()) {
        let out = constant_fitter(l).run(&d, &k1(d.len()), &all_requests()).unwrap();
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = d.permuted(&order);
        let back = constant_fitter(l).run(&p, &k1(p.len()), &all_requests()).unwrap();
        for (a, b) in out.reports.iter().zip(&back.reports) {
            prop_assert_eq!(a.point.to_bits(), b.point.to_bits());
            prop_assert_eq!(a.se.to_bits(), b.se.to_bits());
        }
    }
}
