//! Seeded property suites: projection lemmas, inner-solver oracle
//! equivalence, the Example 1 self-check, FEM nodal exactness and operator
//! symmetry. Each suite reports one [`CheckResult`] per property.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{control_distance, load_of_jump_control, project_pi_h, JumpControl};
use crate::error::{Error, Result};
use crate::examples::{example1, ex1_xc, LaplaceState};
use crate::fem::{apply_sh, assemble_system, Coefficient, Mesh, ProblemSpec};
use crate::subproblem::{assemble_gram, solve_subproblem_oracle, solve_subproblem_ssn};

pub const PROJECTION_CASES: usize = 500;
pub const ORACLE_CASES: usize = 100;
pub const FEM_CASES: usize = 50;
pub const SYMMETRY_CASES: usize = 50;

pub const ORACLE_OBJECTIVE_RTOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-11;
pub const ORACLE_TOL: f64 = 1e-14;
pub const ORACLE_MAX_ITER: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Projection,
    Oracle,
    Example1,
    Fem,
    Symmetry,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Projection, Suite::Oracle, Suite::Example1, Suite::Fem, Suite::Symmetry];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Projection => "projection",
            Suite::Oracle => "oracle",
            Suite::Example1 => "example1",
            Suite::Fem => "fem",
            Suite::Symmetry => "symmetry",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub check: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed violation measure (≤ 0 or within tolerance when passing).
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    suite: &'static str,
    check: &'static str,
    cases: usize,
    failures: usize,
    worst: f64,
}

impl Tally {
    fn new(suite: &'static str, check: &'static str) -> Self {
        Self {
            suite,
            check,
            cases: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
        }
    }

    /// Records `measure ≤ 0` as a pass.
    fn record(&mut self, measure: f64) {
        self.cases += 1;
        if !(measure <= 0.0) {
            self.failures += 1;
        }
        if measure.is_nan() || measure > self.worst {
            self.worst = measure;
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            suite: self.suite,
            check: self.check,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Projection => projection_lemmas(seed, PROJECTION_CASES),
        Suite::Oracle => oracle_equivalence(seed, ORACLE_CASES),
        Suite::Example1 => Ok(example1_self_check()),
        Suite::Fem => fem_exactness(seed, FEM_CASES),
        Suite::Symmetry => operator_symmetry(seed, SYMMETRY_CASES),
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Between 4 and `max_n` elements with widths at least a quarter of uniform.
pub fn random_mesh(rng: &mut impl Rng, min_n: usize, max_n: usize) -> Result<Mesh> {
    let n = rng.random_range(min_n..=max_n);
    let widths: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..1.0)).collect();
    let total: f64 = widths.iter().sum();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    nodes.push(0.0);
    for w in &widths[..n - 1] {
        acc += w / total;
        nodes.push(acc);
    }
    nodes.push(1.0);
    Mesh::new(nodes)
}

pub fn random_jump_control(rng: &mut impl Rng, max_jumps: usize) -> Result<JumpControl> {
    let m = rng.random_range(0..=max_jumps);
    let jumps = (0..m)
        .map(|_| (rng.random_range(1e-3..1.0 - 1e-3), rng.random_range(-2.0..2.0)))
        .collect();
    JumpControl::new(rng.random_range(-1.0..1.0), jumps)
}

/// `TV(Π_h q) ≤ TV(q)` and `‖q − Π_h q‖_{L¹} ≤ h·TV(q)`.
pub fn projection_lemmas(seed: u64, cases: usize) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, 1);
    let mut tv = Tally::new("projection", "TV non-expansive");
    let mut l1 = Tally::new("projection", "L1 error <= h TV");
    for _ in 0..cases {
        let mesh = Arc::new(random_mesh(&mut rng, 2, 64)?);
        let q = random_jump_control(&mut rng, 8)?;
        let tv_q = q.total_variation();
        let p = project_pi_h(&q, &mesh).to_jump_control();
        let slack = 1e-12 * (1.0 + tv_q);
        tv.record(p.total_variation() - tv_q - slack);
        l1.record(control_distance(&q, &p, 1)? - mesh.h() * tv_q - slack);
    }
    Ok(vec![tv.finish(), l1.finish()])
}

/// Random Gram instances with `m ≤ 8` separated interior points, random `u_d`
/// and `α` a random fraction of the level where all jumps vanish.
pub fn oracle_equivalence(seed: u64, cases: usize) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, 2);
    let mut obj = Tally::new("oracle", "objective agreement");
    let mut supp = Tally::new("oracle", "support agreement");
    for _ in 0..cases {
        let m = rng.random_range(1..=8usize);
        let mesh = Arc::new(random_mesh(&mut rng, 2 * m + 4, 64)?);
        // distinct non-adjacent elements off the boundary, points away from
        // the nodes; otherwise steps nearly coincide with each other or the offset
        let n = mesh.element_count();
        let mut elements: Vec<usize> = Vec::with_capacity(m);
        while elements.len() < m {
            let e = rng.random_range(1..n - 1);
            if elements.iter().all(|&f| f.abs_diff(e) > 1) {
                elements.push(e);
            }
        }
        elements.sort_unstable();
        let nodes = mesh.nodes();
        let points: Vec<f64> = elements
            .iter()
            .map(|&e| nodes[e] + rng.random_range(0.2..0.8) * (nodes[e + 1] - nodes[e]))
            .collect();
        let amps: [f64; 4] = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        let desired = Arc::new(move |x: f64| {
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
                .sum::<f64>()
        });
        let spec = ProblemSpec::laplacian(desired, 1.0);
        let sys = assemble_system(&mesh, &spec, 5)?;
        let gram = assemble_gram(&mesh, &sys, &points, &spec, 5)?;
        let (g, b) = (gram.gram(), gram.rhs());
        let a0 = b[0] / g[(0, 0)];
        let lambda_max = (1..=m).map(|i| (b[i] - g[(i, 0)] * a0).abs()).fold(0.0, f64::max);
        let alpha = lambda_max * rng.random_range(0.02..0.9);

        let ssn = solve_subproblem_ssn(&gram, alpha, 1e-12, 100)?;
        let ora = solve_subproblem_oracle(&gram, alpha, ORACLE_TOL, ORACLE_MAX_ITER)?;
        let (js, jo) = (gram.objective(&ssn.weights(), alpha), gram.objective(&ora.weights(), alpha));
        obj.record((js - jo).abs() - ORACLE_OBJECTIVE_RTOL * js.abs().max(jo.abs()));
        supp.record(if ssn.support() == ora.support() { 0.0 } else { 1.0 });
    }
    Ok(vec![obj.finish(), supp.finish()])
}

/// Closed-form Example 1 data satisfies its optimality conditions.
pub fn example1_self_check() -> Vec<CheckResult> {
    let (_, ex) = example1();
    let alpha = ex.alpha;
    let xc = ex1_xc();

    let mut touch = Tally::new("example1", "|phi| = alpha at jumps with jump sign");
    for j in ex.control.jumps() {
        touch.record((ex.phi(j.t) - alpha * j.c.signum()).abs() - 1e-12 * alpha);
    }
    touch.record((ex.phi(xc) - alpha).abs() - 1e-12 * alpha);
    touch.record((ex.phi(0.5) + alpha).abs() - 1e-12 * alpha);

    let mut bound = Tally::new("example1", "phi(1) = 0 and sup |phi| <= alpha");
    bound.record(ex.phi(1.0).abs() - 1e-12);
    let sup = (0..=10_000).map(|i| ex.phi(i as f64 / 1e4).abs()).fold(0.0, f64::max);
    bound.record(sup - alpha * (1.0 + 1e-12));

    let mut adj = Tally::new("example1", "u_d - u = z'' (finite differences)");
    let h = 1e-5;
    for i in 1..1000 {
        let x = i as f64 / 1000.0;
        let fd = (ex.adjoint_derivative(x + h) - ex.adjoint_derivative(x - h)) / (2.0 * h);
        adj.record((ex.desired(x) - ex.state(x) - fd).abs() - 1e-8);
    }
    vec![touch.finish(), bound.finish(), adj.finish()]
}

/// P1 nodal values equal the exact solution of `−u″ = q` for jump controls.
pub fn fem_exactness(seed: u64, cases: usize) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, 3);
    let mut t = Tally::new("fem", "nodal exactness a=1 d0=0");
    let spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1.0);
    for _ in 0..cases {
        let mesh = Arc::new(random_mesh(&mut rng, 2, 64)?);
        let q = random_jump_control(&mut rng, 6)?;
        let exact = LaplaceState::new(q.clone());
        let sys = assemble_system(&mesh, &spec, 5)?;
        let u = apply_sh(&sys, &load_of_jump_control(&mesh, &q), &mesh)?;
        let worst = mesh
            .nodes()
            .iter()
            .zip(u.values())
            .map(|(x, v)| (exact.eval(*x) - v).abs())
            .fold(0.0, f64::max);
        t.record(worst - 1e-13);
    }
    Ok(vec![t.finish()])
}

/// `(S_h f, g) = (f, S_h g)` for jump controls and variable coefficients.
pub fn operator_symmetry(seed: u64, cases: usize) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, 4);
    let mut t = Tally::new("symmetry", "(S_h f, g) = (f, S_h g)");
    for _ in 0..cases {
        let mesh = Arc::new(random_mesh(&mut rng, 2, 64)?);
        let (a1, a2, d1) = (rng.random_range(0.0..1.0), rng.random_range(1.0..6.0), rng.random_range(0.0..5.0));
        let mut spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1.0);
        spec.diffusion = Coefficient::Variable(Arc::new(move |x: f64| 1.0 + a1 * (a2 * x).sin().powi(2)));
        spec.reaction = Coefficient::Variable(Arc::new(move |x: f64| d1 * x * x));
        let sys = assemble_system(&mesh, &spec, 5)?;
        let f = random_jump_control(&mut rng, 5)?;
        let g = random_jump_control(&mut rng, 5)?;
        let (lf, lg) = (load_of_jump_control(&mesh, &f), load_of_jump_control(&mesh, &g));
        let sf = apply_sh(&sys, &lf, &mesh)?;
        let sg = apply_sh(&sys, &lg, &mesh)?;
        let lhs: f64 = sf.interior().iter().zip(&lg).map(|(a, b)| a * b).sum();
        let rhs: f64 = sg.interior().iter().zip(&lf).map(|(a, b)| a * b).sum();
        t.record((lhs - rhs).abs() - SYMMETRY_TOL * lhs.abs().max(rhs.abs()).max(1e-3));
    }
    Ok(vec![t.finish()])
}
