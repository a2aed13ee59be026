use proptest::prelude::*;

use gdsq_core::composition::{
    composition_jacobian, composition_jacobian_ad, immersion_check, ImmersionOptions,
};
use gdsq_core::genericity::{mc_genericity_immersion, sample_map, trial_rng, MonteCarloOptions};
use gdsq_core::linalg;
use gdsq_core::manifolds::{self, ParamManifold};
use gdsq_core::singularity::{conic_coefficients, verify_lemma_singular};
use gdsq_core::{CoefficientMatrix, GdsMap};

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0..-0.1f64, 0.1..3.0f64]
}

/// (A, p, x) with A l x m, p l x m, x in R^m.
fn map_and_point() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..5, 1usize..5).prop_flat_map(|(l, m)| {
        (
            prop::collection::vec(prop::collection::vec(coefficient(), m), l),
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, m), l),
            prop::collection::vec(-3.0..3.0f64, m),
        )
    })
}

fn specimens() -> Vec<ParamManifold> {
    vec![
        manifolds::circle(1.0, &[0.0, 0.0], 2).unwrap(),
        manifolds::circle(0.7, &[0.1, -0.2, 0.3], 3).unwrap(),
        manifolds::trefoil(),
        manifolds::figure_eight(),
        manifolds::cusp_curve(),
        manifolds::torus_surface(4, 2.0, 1.0).unwrap(),
        manifolds::torus_surface(5, 2.0, 1.0).unwrap(),
    ]
}

fn param_for(f: &ParamManifold, u: &[f64]) -> Vec<f64> {
    f.domain()
        .axes()
        .iter()
        .zip(u)
        .map(|(ax, t)| ax.lo + t * (ax.hi - ax.lo))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jacobian_matches_ad_and_differences((a, p, x) in map_and_point()) {
        let g = GdsMap::from_rows(a, p).unwrap();
        let jc = g.jacobian_closed_form(&x).unwrap();
        let ja = g.jacobian_ad(&x).unwrap();
        let size = 1.0 + linalg::max_abs(&jc);
        prop_assert!(linalg::max_abs(&(&jc - &ja)) <= 1e-12 * size);
        let h = 1e-6;
        for j in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm) = (g.eval(&xp).unwrap(), g.eval(&xm).unwrap());
            for i in 0..g.rows() {
                let d = (gp[i] - gm[i]) / (2.0 * h);
                prop_assert!((d - jc[(i, j)]).abs() <= 1e-5 * size);
            }
        }
    }

    #[test]
    fn map_is_nonnegative_combination((a, p, x) in map_and_point()) {
        // with A = |A| every component is a weighted squared distance
        let abs: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
        let g = GdsMap::from_rows(abs, p.clone()).unwrap();
        let y = g.eval(&x).unwrap();
        prop_assert!(y.iter().all(|v| *v >= 0.0));
        let at_center = g.eval(&p[0]).unwrap();
        prop_assert!(at_center[0].abs() < 1e-12);
    }

    #[test]
    fn conic_agrees_with_determinant(
        a in prop::collection::vec(coefficient(), 4),
        p in prop::collection::vec(-2.0..2.0f64, 4),
        x in prop::collection::vec(-4.0..4.0f64, 2),
    ) {
        let g = GdsMap::from_rows(
            vec![a[..2].to_vec(), a[2..].to_vec()],
            vec![p[..2].to_vec(), p[2..].to_vec()],
        ).unwrap();
        let det = g.det_jacobian(&x).unwrap();
        let conic = conic_coefficients(&g).unwrap().eval(&x);
        prop_assert!((det - conic).abs() <= 1e-9 * (1.0 + det.abs()));
    }

    #[test]
    fn central_points_drop_rank(m in 1usize..6, seed in 0u64..1000) {
        let g = sample_map(m, &mut trial_rng(seed, 0)).unwrap();
        let rep = verify_lemma_singular(&g, linalg::DEFAULT_RANK_TOL).unwrap();
        prop_assert!(rep.all_pass);
    }

    #[test]
    fn manifold_derivatives_match(k in 0usize..7, u in prop::collection::vec(0.0..1.0f64, 2)) {
        let f = &specimens()[k];
        let q = param_for(f, &u);
        let j = f.jacobian(&q).unwrap();
        let ja = f.jacobian_ad(&q).unwrap();
        prop_assert!(linalg::max_abs(&(&j - &ja)) < 1e-12 * (1.0 + linalg::max_abs(&j)));
        let h = 1e-6;
        for c in 0..f.source_dim() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[c] += h;
            qm[c] -= h;
            let (fp, fm) = (f.eval(&qp).unwrap(), f.eval(&qm).unwrap());
            for r in 0..f.ambient_dim() {
                prop_assert!(((fp[r] - fm[r]) / (2.0 * h) - j[(r, c)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn domain_separation_is_a_metric(
        k in 0usize..7,
        u in prop::collection::vec(0.0..1.0f64, 2),
        v in prop::collection::vec(0.0..1.0f64, 2),
        w in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let f = &specimens()[k];
        let (a, b, c) = (param_for(f, &u), param_for(f, &v), param_for(f, &w));
        let ab = f.domain_separation(&a, &b).unwrap();
        let ba = f.domain_separation(&b, &a).unwrap();
        let ac = f.domain_separation(&a, &c).unwrap();
        let cb = f.domain_separation(&c, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(f.domain_separation(&a, &a).unwrap() < 1e-12);
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(ab <= f.domain().diameter() + 1e-12);
    }

    #[test]
    fn chain_rule_holds(
        k in 0usize..7,
        u in prop::collection::vec(0.0..1.0f64, 2),
        seed in 0u64..500,
    ) {
        let f = &specimens()[k];
        let g = sample_map(f.ambient_dim(), &mut trial_rng(seed, 0)).unwrap();
        let q = param_for(f, &u);
        let jc = composition_jacobian(&g, f, &q).unwrap();
        let ja = composition_jacobian_ad(&g, f, &q).unwrap();
        let chain = g.jacobian_closed_form(&f.eval(&q).unwrap()).unwrap() * f.jacobian(&q).unwrap();
        let size = 1.0 + linalg::max_abs(&jc);
        prop_assert!(linalg::max_abs(&(&jc - &ja)) < 1e-10 * size);
        prop_assert!(linalg::max_abs(&(&jc - &chain)) < 1e-10 * size);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // A finer grid containing the coarse one can only lower the screened minimum.
    #[test]
    fn screening_is_monotone_on_nested_grids(n in 8usize..60, seed in 0u64..200) {
        let f = manifolds::trefoil();
        let g = sample_map(3, &mut trial_rng(seed, 0)).unwrap();
        let run = |res: usize| {
            let opts = ImmersionOptions { grid: Some(vec![res]), refine_rounds: 0, ..Default::default() };
            immersion_check(&g, &f, &opts).unwrap().screened_sigma_min
        };
        prop_assert!(run(2 * n) <= run(n));
    }
}

// Holds once the image diameter dominates the unit floor of the scale.
#[test]
fn verdict_is_invariant_under_scaling() {
    let base = sample_map(2, &mut trial_rng(11, 0)).unwrap();
    let mut verdicts = Vec::new();
    for lambda in [10.0, 1e2, 1e3] {
        let f = manifolds::circle(lambda, &[0.0, 0.0], 2).unwrap();
        let p: Vec<Vec<f64>> = base
            .central_points()
            .points()
            .iter()
            .map(|r| r.iter().map(|v| v * lambda).collect())
            .collect();
        let g = GdsMap::from_rows(base.coefficients().to_rows(), p).unwrap();
        verdicts.push(immersion_check(&g, &f, &ImmersionOptions::default()).unwrap().verdict);
    }
    assert!(verdicts.windows(2).all(|w| w[0] == w[1]), "{verdicts:?}");
}

#[test]
fn monte_carlo_is_deterministic_across_thread_counts() {
    let f = manifolds::circle(1.0, &[0.0, 0.0], 2).unwrap();
    let opts = MonteCarloOptions {
        trials: 40,
        seed: 5,
        ..Default::default()
    };
    let a = CoefficientMatrix::ones(2, 2);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let x = one.install(|| mc_genericity_immersion(&f, &a, &opts).unwrap());
    let y = four.install(|| mc_genericity_immersion(&f, &a, &opts).unwrap());
    assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
}
