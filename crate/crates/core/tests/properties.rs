//! Property-based checks of the library's invariants.

use dica::eval::{hungarian, pearson};
use dica::geometry::{
    certify_sdi, check_det_bound, ellipsoid_in_polytope, hull_facets, mvie_weighted_l1, polar_weighted_l1,
    sign_vectors, WeightedL1Ball, DEFAULT_SAMPLED_TOL,
};
use dica::mixtures::{gen_sdi_matrix, gen_sdi_matrix_with, project_weighted_l1, weighted_l1_norm};
use dica::models::{softplus, Activation, MlpParams};
use dica::numerics::{Matrix, Rng};
use dica::trainer::lambda_vol_schedule;
use proptest::prelude::*;

fn brute_force(cost: &Matrix<f64>) -> f64 {
    fn rec(c: &Matrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
        let n = c.rows();
        if row == n {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                best = best.min(c[(row, j)] + rec(c, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    rec(cost, 0, &mut vec![false; cost.rows()])
}

fn weights(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..4.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn hungarian_is_optimal(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let cost = Matrix::from_fn(n, n, |_, _| rng.uniform());
        let perm = hungarian(&cost);
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        prop_assert!((total - brute_force(&cost)).abs() <= 1e-12);
    }

    #[test]
    fn pearson_is_affine_invariant(seed in any::<u64>(), a in 0.1f64..10.0, b in -5.0f64..5.0, flip in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let x: Vec<f64> = rng.normal_vec(50);
        let y: Vec<f64> = x.iter().map(|v| v + 0.5 * rng.normal()).collect();
        let s = if flip { -a } else { a };
        let r = pearson(&x, &y).unwrap();
        let r2 = pearson(&x.iter().map(|v| s * v + b).collect::<Vec<_>>(), &y).unwrap();
        let expect = if flip { -r } else { r };
        prop_assert!((r2 - expect).abs() <= 1e-12);
        prop_assert!(r.abs() <= 1.0);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..6), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let w: Vec<f64> = (0..v.len()).map(|_| rng.uniform_range(0.2, 3.0)).collect();
        let p = project_weighted_l1(&v, &w);
        prop_assert!(weighted_l1_norm(&p, &w) <= 1.0 + 1e-10);
        let q = project_weighted_l1(&p, &w);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn mvie_is_tangent_to_every_facet(w in (1usize..=5).prop_flat_map(weights)) {
        let ball = WeightedL1Ball::new(w).unwrap();
        let e = mvie_weighted_l1(&ball);
        let p = ball.to_hpolytope();
        for a in p.normals().row_iter() {
            prop_assert!((e.support(a) - 1.0).abs() <= 1e-10);
        }
        prop_assert!(ellipsoid_in_polytope(&e, &p).abs() <= 1e-10);
    }

    #[test]
    fn polar_vertices_lie_on_ball_facets(w in (1usize..=5).prop_flat_map(weights)) {
        let ball = WeightedL1Ball::new(w.clone()).unwrap();
        let polar = polar_weighted_l1(&ball);
        // each polar vertex y satisfies max_{x ∈ ball} xᵀy = 1
        for y in polar.vertices() {
            let support = ball.vertices().iter().map(|x| x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()).fold(f64::MIN, f64::max);
            prop_assert!((support - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(polar.polar(), ball);
    }

    #[test]
    fn hull_contains_its_points(d in 2usize..=4, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let pts = Matrix::from_fn(40, d, |_, _| rng.normal());
        if let Ok(p) = hull_facets(&pts) {
            for r in pts.row_iter() {
                prop_assert!(p.max_violation(r) <= 1e-9);
            }
        }
    }

    #[test]
    fn certificate_ignores_gradient_order_and_axis_order(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = Rng::new(seed);
        let w: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.5, 2.0)).collect();
        let g = gen_sdi_matrix(&mut rng, d, 4 * d + 4, &w).unwrap();
        let ball = WeightedL1Ball::new(w.clone()).unwrap();
        let base = certify_sdi(&g, &ball, 1e-6).unwrap();
        let mut rows: Vec<Vec<f64>> = g.row_iter().map(<[f64]>::to_vec).collect();
        rng.shuffle(&mut rows);
        let axes: Vec<usize> = (0..d).rev().collect();
        let permuted: Vec<Vec<f64>> = rows.iter().map(|r| axes.iter().map(|&k| r[k]).collect()).collect();
        let pw: Vec<f64> = axes.iter().map(|&k| w[k]).collect();
        let other = certify_sdi(&Matrix::from_rows(&permuted).unwrap(), &WeightedL1Ball::new(pw).unwrap(), 1e-6).unwrap();
        prop_assert_eq!(base.satisfied, other.satisfied);
        prop_assert!((base.condition1_margin - other.condition1_margin).abs() <= 1e-9);
    }

    #[test]
    fn det_bound_under_sign_vector_constraint(d in 1usize..=5, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let h = Matrix::from_fn(d, d, |_, _| rng.normal());
        let worst = sign_vectors(d).iter().map(|u| h.tr_mat_vec(u).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let h = h.scale((d as f64).sqrt() / worst);
        let r = check_det_bound(&h).unwrap();
        prop_assert!(r.bound_holds, "det {}", r.det);
    }

    #[test]
    fn softplus_dominates_hinge(z in -50.0f64..50.0) {
        let s = softplus(z);
        prop_assert!(s >= z.max(0.0));
        prop_assert!(s <= z.max(0.0) + std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn schedule_ramps_then_holds(t in 0usize..500, tw in 1usize..100, lam in 1e-6f64..1.0) {
        let v = lambda_vol_schedule(t, tw, lam);
        prop_assert!(v >= 0.0 && v <= lam * (1.0 + 1e-15));
        prop_assert!(lambda_vol_schedule(t + 1, tw, lam) >= v);
        if t >= tw {
            prop_assert_eq!(v, lam);
        }
    }

    #[test]
    fn mlp_flat_round_trip(i in 1usize..6, h in 1usize..10, o in 1usize..6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let p = MlpParams::new(
            Matrix::from_fn(h, i, |_, _| rng.normal()),
            rng.normal_vec(h),
            Matrix::from_fn(o, h, |_, _| rng.normal()),
            rng.normal_vec(o),
            Activation::Tanh,
        ).unwrap();
        let flat = p.to_flat();
        prop_assert_eq!(flat.len(), p.param_count());
        prop_assert_eq!(p.with_flat(&flat), p);
    }
}

/// Gradient sets from the mixing-matrix sampler (inflated L2 ball projected
/// onto the weighted L1 ball, no axis points) fill the ball closely enough
/// to certify at the sampled tolerance.
#[test]
fn sampled_gradient_sets_certify() {
    let w = [1.0, 2.0];
    let ball = WeightedL1Ball::new(w.to_vec()).unwrap();
    let mut rng = Rng::new(1);
    let passed = (0..100)
        .filter(|_| {
            let g = gen_sdi_matrix_with(&mut rng, 2, 1000, &w, false).unwrap();
            certify_sdi(&g, &ball, DEFAULT_SAMPLED_TOL).unwrap().satisfied
        })
        .count();
    assert!(passed >= 90, "{passed}/100 certified");
}
