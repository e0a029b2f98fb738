use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tvcontrol::adjoint::find_interior_roots;
use tvcontrol::control::{control_distance, control_inner, project_pi_h, JumpControl};
use tvcontrol::outer::damped_update;
use tvcontrol::subproblem::{solve_subproblem_ssn, GramSystem};
use tvcontrol::{Mesh, NodalFunction};

fn jump_control() -> impl Strategy<Value = JumpControl> {
    (-2.0..2.0f64, prop::collection::vec((0.001..0.999f64, -3.0..3.0f64), 0..6)).prop_filter_map(
        "distinct positions",
        |(a, mut jumps)| {
            jumps.sort_by(|x, y| x.0.total_cmp(&y.0));
            jumps.dedup_by(|x, y| (x.0 - y.0).abs() < 1e-6);
            JumpControl::new(a, jumps).ok()
        },
    )
}

fn mesh() -> impl Strategy<Value = Mesh> {
    prop::collection::vec(0.2..1.0f64, 2..40).prop_map(|w| {
        let total: f64 = w.iter().sum();
        let mut nodes = vec![0.0];
        let mut x = 0.0;
        for v in &w[..w.len() - 1] {
            x += v / total;
            nodes.push(x);
        }
        nodes.push(1.0);
        Mesh::new(nodes).unwrap()
    })
}

/// Random SPD system `G = AAᵀ + I/10` of dimension `1 + m`.
fn gram_instance() -> impl Strategy<Value = GramSystem> {
    (1usize..6).prop_flat_map(|m| {
        let n = m + 1;
        (prop::collection::vec(-1.0..1.0f64, n * n), prop::collection::vec(-1.0..1.0f64, n)).prop_map(move |(a, b)| {
            let a = DMatrix::from_row_slice(n, n, &a);
            let g = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            GramSystem::from_parts(g, DVector::from_vec(b), 0.0).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distance_is_a_metric(p in jump_control(), q in jump_control(), r in jump_control()) {
        for e in [1, 2] {
            let pq = control_distance(&p, &q, e).unwrap();
            prop_assert!((pq - control_distance(&q, &p, e).unwrap()).abs() <= 1e-12 * (1.0 + pq));
            prop_assert_eq!(control_distance(&p, &p, e).unwrap(), 0.0);
            let via = control_distance(&p, &r, e).unwrap() + control_distance(&r, &q, e).unwrap();
            prop_assert!(pq <= via + 1e-12);
        }
    }

    #[test]
    fn l2_distance_matches_inner_products(p in jump_control(), q in jump_control()) {
        let d2 = control_distance(&p, &q, 2).unwrap().powi(2);
        let expand = control_inner(&p, &p) - 2.0 * control_inner(&p, &q) + control_inner(&q, &q);
        prop_assert!((d2 - expand).abs() <= 1e-10 * (1.0 + control_inner(&p, &p) + control_inner(&q, &q)));
    }

    #[test]
    fn distance_matches_midpoint_sum(p in jump_control(), q in jump_control()) {
        let n = 20_000;
        let riemann: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                (p.eval(x).unwrap() - q.eval(x).unwrap()).abs()
            })
            .sum::<f64>() / n as f64;
        // each jump of either control costs at most one misjudged cell
        let slack = (p.total_variation() + q.total_variation() + 1.0) / n as f64;
        prop_assert!((control_distance(&p, &q, 1).unwrap() - riemann).abs() <= slack);
    }

    #[test]
    fn projection_lemmas(q in jump_control(), m in mesh()) {
        let m = Arc::new(m);
        let pq = project_pi_h(&q, &m);
        let tv = q.total_variation();
        prop_assert!(pq.total_variation() <= tv * (1.0 + 1e-12) + 1e-12);
        let err = control_distance(&pq.to_jump_control(), &q, 1).unwrap();
        prop_assert!(err <= m.h() * tv * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn ssn_respects_scaling(g in gram_instance(), alpha in 0.0..0.5f64, s in 0.1..10.0f64) {
        let a = solve_subproblem_ssn(&g, alpha, 1e-13, 100).unwrap();
        let scaled = GramSystem::from_parts(g.gram().clone(), g.rhs() * s, 0.0).unwrap();
        let b = solve_subproblem_ssn(&scaled, alpha * s, 1e-13, 100).unwrap();
        let (wa, wb) = (a.weights(), b.weights());
        prop_assert!((wb - wa * s).amax() <= 1e-8 * s * (1.0 + a.weights().amax()));
        prop_assert_eq!(a.support(), b.support());
    }

    #[test]
    fn ssn_is_deterministic(g in gram_instance(), alpha in 0.0..0.5f64) {
        let a = solve_subproblem_ssn(&g, alpha, 1e-13, 100).unwrap();
        let b = solve_subproblem_ssn(&g, alpha, 1e-13, 100).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ssn_satisfies_subgradient_condition(g in gram_instance(), alpha in 0.0..0.5f64) {
        let sol = solve_subproblem_ssn(&g, alpha, 1e-13, 100).unwrap();
        let w = sol.weights();
        let r = g.rhs() - g.gram() * &w;
        prop_assert!(r[0].abs() <= 1e-10);
        for i in 1..w.len() {
            if w[i] == 0.0 {
                prop_assert!(r[i].abs() <= alpha + 1e-10);
            } else {
                prop_assert!((r[i] - alpha * w[i].signum()).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn damping_stays_between(curr in prop::collection::vec(0.0..1.0f64, 1..5), shift in 0.0..0.2f64, back in 0.0..0.2f64) {
        let prev: Vec<f64> = curr.iter().map(|t| t - back).collect();
        let next: Vec<f64> = curr.iter().map(|t| t + shift).collect();
        let out = damped_update(Some(&prev), &curr, &next).unwrap();
        for ((o, c), n) in out.iter().zip(&curr).zip(&next) {
            prop_assert!(o >= c && o <= n);
        }
        if shift < back {
            prop_assert_eq!(out, next);
        }
    }

    #[test]
    fn roots_are_zeros_of_the_interpolant(m in mesh(), k in 1u32..8, phase in 0.0..1.0f64) {
        let m = Arc::new(m);
        let z = NodalFunction::interpolate(m.clone(), |x| (k as f64 * std::f64::consts::PI * x + phase).sin());
        let roots = find_interior_roots(&z, 1e-12, 1e-10);
        for w in roots.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for r in &roots {
            prop_assert!(*r > 0.0 && *r < 1.0);
            prop_assert!(z.eval(*r).abs() <= 1e-12);
        }
        // every interior sign change is found
        let v = z.values();
        let changes = (1..v.len() - 2).filter(|&i| v[i] * v[i + 1] < 0.0).count();
        prop_assert!(roots.len() >= changes);
    }
}
