use tvcontrol::control::{control_distance, JumpControl};
use tvcontrol::examples::{ex1_xc, example1, example2};
use tvcontrol::outer::{reduced_objective, solve, solve_full_discrete, solve_variational};
use tvcontrol::{Error, Mesh, Scheme, SolverConfig};

#[test]
fn example1_variational_recovers_three_jumps() {
    let (spec, exact) = example1();
    let mesh = Mesh::uniform(1023).unwrap();
    let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
    let jumps: Vec<_> = sol.control.active_jumps().collect();
    assert_eq!(jumps.len(), 3);
    let xc = ex1_xc();
    for (j, (t, c)) in jumps.iter().zip([(xc, 1.0), (0.5, -2.0), (1.0 - xc, 1.5)]) {
        assert!((j.t - t).abs() < 5e-3, "{} vs {t}", j.t);
        assert!((j.c - c).abs() < 5e-2, "{} vs {c}", j.c);
    }
    assert!(control_distance(&sol.control, &exact.control, 1).unwrap() < 1e-4);
    assert!(*sol.step_history.last().unwrap() <= 1e-10);
}

#[test]
fn full_discrete_jumps_sit_on_nodes() {
    let (spec, exact) = example1();
    let n = 255;
    let mesh = Mesh::uniform(n).unwrap();
    let sol = solve_full_discrete(&spec, &mesh, &SolverConfig::default()).unwrap();
    let h = 1.0 / n as f64;
    for j in sol.control.jumps() {
        let k = j.t * n as f64;
        assert!((k - k.round()).abs() < 1e-9, "jump at {} is not a node", j.t);
    }
    for t in exact.breakpoints() {
        let near = sol.control.active_jumps().any(|j| (j.t - t).abs() <= 2.0 * h);
        assert!(near, "no discrete jump near {t}");
    }
    assert!(sol.optimality.nodal_phi_bound_violation <= 1e-6 * spec.alpha);
}

#[test]
fn objective_never_exceeds_zero_control() {
    let (spec1, _) = example1();
    let spec2 = example2();
    for spec in [&spec1, &spec2] {
        for scheme in [Scheme::Variational, Scheme::Full] {
            for n in [15, 64, 200] {
                let mesh = Mesh::uniform(n).unwrap();
                let sol = solve(spec, &mesh, &SolverConfig::default(), scheme).unwrap();
                assert!(sol.objective <= sol.objective_at_zero + 1e-12, "{scheme:?} n={n}");
            }
        }
    }
}

#[test]
fn state_resolve_matches_reported_objective() {
    let (spec, _) = example1();
    for scheme in [Scheme::Variational, Scheme::Full] {
        let mesh = Mesh::uniform(127).unwrap();
        let sol = solve(&spec, &mesh, &SolverConfig::default(), scheme).unwrap();
        let j = reduced_objective(&spec, &mesh, &sol.control, 5).unwrap();
        assert!((j - sol.objective).abs() <= 1e-12 * (1.0 + j.abs()), "{j} vs {}", sol.objective);
    }
}

#[test]
fn variational_solution_beats_perturbations() {
    let (spec, exact) = example1();
    let mesh = Mesh::uniform(63).unwrap();
    let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
    let j = sol.objective;
    assert!(j <= reduced_objective(&spec, &mesh, &exact.control, 5).unwrap());
    let q = &sol.control;
    let jumps: Vec<(f64, f64)> = q.jumps().iter().map(|j| (j.t, j.c)).collect();
    for i in 0..jumps.len() {
        for (dt, dc) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-2), (0.0, -1e-2)] {
            let mut moved = jumps.clone();
            moved[i].0 += dt;
            moved[i].1 += dc;
            let p = JumpControl::new(q.offset(), moved).unwrap();
            assert!(reduced_objective(&spec, &mesh, &p, 5).unwrap() >= j - 1e-15);
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let spec = example2();
    let mesh = Mesh::uniform(300).unwrap();
    for scheme in [Scheme::Variational, Scheme::Full] {
        let a = solve(&spec, &mesh, &SolverConfig::default(), scheme).unwrap();
        let b = solve(&spec, &mesh, &SolverConfig::default(), scheme).unwrap();
        assert_eq!(a.control, b.control);
        assert_eq!(a.state.values(), b.state.values());
        assert_eq!(a.step_history, b.step_history);
    }
}

#[test]
fn example2_is_symmetric() {
    let spec = example2();
    let mesh = Mesh::uniform(1024).unwrap();
    let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
    let jumps: Vec<_> = sol.control.active_jumps().collect();
    assert_eq!(jumps.len(), 2);
    assert!((jumps[0].t + jumps[1].t - 1.0).abs() < 1e-8);
    assert!((jumps[0].c + jumps[1].c).abs() < 1e-6);
}

#[test]
fn budget_exhaustion_carries_last_iterate() {
    let (spec, _) = example1();
    let mesh = Mesh::uniform(63).unwrap();
    let cfg = SolverConfig {
        max_outer: 1,
        ..SolverConfig::default()
    };
    match solve_variational(&spec, &mesh, &cfg) {
        Err(Error::NotConverged { iterations, last, .. }) => {
            assert_eq!(iterations, 1);
            assert!(!last.control.jumps().is_empty());
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn large_alpha_gives_constant_control() {
    let (mut spec, _) = example1();
    spec.alpha = 1.0;
    let mesh = Mesh::uniform(31).unwrap();
    let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
    assert_eq!(sol.control.active_jumps().count(), 0);
}
