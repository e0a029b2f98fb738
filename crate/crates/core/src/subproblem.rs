//! The finite-dimensional inner problem for fixed jump positions `t`:
//!
//! `min_{a, c} ½‖S_h(a + Σ cᵢ 1_(tᵢ,1)) − u_d‖² + α Σ |cᵢ|`,
//!
//! written as `½ wᵀGw − bᵀw + const + α Σ_{i≥1} |wᵢ|` with `w = (a, c)`.
//! Solved by a semismooth Newton (active-set) iteration on the prox
//! fixed-point equation, with a proximal-gradient oracle.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{load_of_jump_control, JumpControl};
use crate::error::{Error, Result};
use crate::fem::{apply_sh, l2_inner_values, quadrature_load_split, quadrature_norm_sq, Mesh, NodalFunction, ProblemSpec, TridiagonalSystem};

/// Newton iterations before switching to proximal gradient.
pub const DEFAULT_SSN_MAX_ITER: usize = 100;
/// Iteration budget of the proximal-gradient fallback.
pub const FALLBACK_MAX_ITER: usize = 5_000_000;

/// Soft thresholding `sign(x)·max(|x| − tau, 0)`.
pub fn shrink(x: f64, tau: f64) -> f64 {
    let m = x.abs() - tau;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// Precomputed `(u_d, φ_j)` and `½‖u_d‖²` for one mesh.
#[derive(Debug, Clone)]
pub struct DesiredData {
    pub load: Vec<f64>,
    pub half_norm_sq: f64,
}

impl DesiredData {
    pub fn new(mesh: &Mesh, spec: &ProblemSpec, quad_order: usize) -> Self {
        let load = quadrature_load_split(mesh, &*spec.desired, &spec.desired_breakpoints, quad_order);
        let half_norm_sq = 0.5 * quadrature_norm_sq(mesh, &*spec.desired, &spec.desired_breakpoints, quad_order);
        Self { load, half_norm_sq }
    }
}

#[derive(Debug, Clone)]
pub struct GramSystem {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    const_term: f64,
    points: Vec<f64>,
    images: Vec<NodalFunction>,
}

impl GramSystem {
    /// Raw constructor; `gram` must be square with `rhs.len()` rows. Index 0
    /// is the offset.
    pub fn from_parts(gram: DMatrix<f64>, rhs: DVector<f64>, const_term: f64) -> Result<Self> {
        if gram.nrows() != gram.ncols() || gram.nrows() != rhs.len() || rhs.is_empty() {
            return Err(Error::invalid("gram system dimensions disagree"));
        }
        Ok(Self {
            gram,
            rhs,
            const_term,
            points: Vec::new(),
            images: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn const_term(&self) -> f64 {
        self.const_term
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `S_h(1)` followed by `S_h(1_(tᵢ,1))`.
    pub fn images(&self) -> &[NodalFunction] {
        &self.images
    }

    /// Prox step `γ = 1 / max diag G`.
    pub fn step(&self) -> f64 {
        let d = self.gram.diagonal().iter().copied().fold(0.0, f64::max);
        if d > 0.0 {
            1.0 / d
        } else {
            1.0
        }
    }

    pub fn objective(&self, w: &DVector<f64>, alpha: f64) -> f64 {
        let quad = 0.5 * w.dot(&(&self.gram * w)) - self.rhs.dot(w);
        let l1: f64 = w.iter().skip(1).map(|c| c.abs()).sum();
        quad + self.const_term + alpha * l1
    }

    /// `Σ wᵢ yᵢ` as a nodal function.
    pub fn state(&self, w: &[f64]) -> Result<NodalFunction> {
        let first = self
            .images
            .first()
            .ok_or_else(|| Error::invalid("gram system has no cached basis images"))?;
        let mut values = vec![0.0; first.values().len()];
        for (wi, y) in w.iter().zip(&self.images) {
            for (v, yv) in values.iter_mut().zip(y.values()) {
                *v += wi * yv;
            }
        }
        NodalFunction::from_values(first.mesh().clone(), values)
    }

    fn residual(&self, w: &DVector<f64>, alpha: f64, step: f64) -> f64 {
        let g = &self.gram * w - &self.rhs;
        let mut res: f64 = (step * g[0]).abs();
        for i in 1..w.len() {
            let p = shrink(w[i] - step * g[i], step * alpha);
            res = res.max((w[i] - p).abs());
        }
        res
    }
}

/// Basis images, Gram matrix and right-hand side for the points `t`.
pub fn assemble_gram(
    mesh: &Arc<Mesh>,
    sys: &TridiagonalSystem,
    points: &[f64],
    spec: &ProblemSpec,
    quad_order: usize,
) -> Result<GramSystem> {
    let desired = DesiredData::new(mesh, spec, quad_order);
    assemble_gram_with(mesh, sys, points, &desired)
}

pub fn assemble_gram_with(
    mesh: &Arc<Mesh>,
    sys: &TridiagonalSystem,
    points: &[f64],
    desired: &DesiredData,
) -> Result<GramSystem> {
    for w in points.windows(2) {
        if !(w[1] - w[0] >= crate::control::JUMP_MERGE_TOL) {
            return Err(Error::invalid(format!(
                "candidate points must be strictly increasing and distinct: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if points.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::invalid("candidate points must lie in (0, 1)"));
    }
    let mut images = Vec::with_capacity(points.len() + 1);
    images.push(apply_sh(sys, &load_of_jump_control(mesh, &JumpControl::constant(1.0)), mesh)?);
    for &t in points {
        let step = JumpControl::new(0.0, vec![(t, 1.0)])?;
        images.push(apply_sh(sys, &load_of_jump_control(mesh, &step), mesh)?);
    }
    let dim = images.len();
    let mut gram = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let g = l2_inner_values(mesh, images[i].values(), images[j].values());
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    // piecewise-linear yᵢ: (u_d, yᵢ) = Σ_j yᵢ(x_j)(u_d, φ_j)
    let rhs = DVector::from_iterator(
        dim,
        images
            .iter()
            .map(|y| y.interior().iter().zip(&desired.load).map(|(a, b)| a * b).sum::<f64>()),
    );
    Ok(GramSystem {
        gram,
        rhs,
        const_term: desired.half_norm_sq,
        points: points.to_vec(),
        images,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub offset: f64,
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub fixed_point_residual: f64,
    pub fallback_used: bool,
    /// Whether an active block had to be regularized.
    pub regularized: bool,
}

impl SubproblemSolution {
    pub fn weights(&self) -> DVector<f64> {
        let mut w = Vec::with_capacity(self.coeffs.len() + 1);
        w.push(self.offset);
        w.extend_from_slice(&self.coeffs);
        DVector::from_vec(w)
    }

    /// Nonzero coefficient indices.
    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    fn from_weights(w: &DVector<f64>, iterations: usize, converged: bool, residual: f64) -> Self {
        Self {
            offset: w[0],
            coeffs: w.iter().skip(1).copied().collect(),
            iterations,
            converged,
            fixed_point_residual: residual,
            fallback_used: false,
            regularized: false,
        }
    }
}

fn check_inputs(gram: &GramSystem, alpha: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::invalid("inner tolerance must be positive"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha must be nonnegative"));
    }
    if gram.dim() == 0 {
        return Err(Error::invalid("empty gram system"));
    }
    Ok(())
}

/// Semismooth Newton from the zero start.
pub fn solve_subproblem_ssn(gram: &GramSystem, alpha: f64, eps_in: f64, max_iter: usize) -> Result<SubproblemSolution> {
    let zero = vec![0.0; gram.dim()];
    solve_subproblem_ssn_from(gram, alpha, eps_in, max_iter, &zero)
}

/// Semismooth Newton on `w = P(w − γ(Gw − b))` started at `init`.
///
/// Each step fixes the active set `A = {0} ∪ {i : |vᵢ| > γα}` of
/// `v = w − γ(Gw − b)` and solves `G_AA w_A = b_A − α s_A`. When the budget
/// runs out or an active set with signs repeats, the exact homotopy path and
/// then proximal gradient take over and `fallback_used` is set.
pub fn solve_subproblem_ssn_from(
    gram: &GramSystem,
    alpha: f64,
    eps_in: f64,
    max_iter: usize,
    init: &[f64],
) -> Result<SubproblemSolution> {
    check_inputs(gram, alpha, eps_in)?;
    if init.len() != gram.dim() {
        return Err(Error::invalid("initial guess has the wrong dimension"));
    }
    let n = gram.dim();
    let step = gram.step();
    let mut w = DVector::from_column_slice(init);
    let mut regularized = false;
    let mut iterations = 0;
    let mut residual = gram.residual(&w, alpha, step);
    // active sets with signs already tried; a repeat means Newton is cycling
    let mut seen: HashSet<Vec<i8>> = HashSet::new();

    while residual > eps_in && iterations < max_iter {
        let v = &w - step * (&gram.gram * &w - &gram.rhs);
        let active: Vec<usize> = (0..n).filter(|&i| i == 0 || v[i].abs() > step * alpha).collect();
        let pattern: Vec<i8> = (0..n)
            .map(|i| if i == 0 { 2 } else if v[i].abs() > step * alpha { v[i].signum() as i8 } else { 0 })
            .collect();
        if !seen.insert(pattern) {
            break;
        }
        iterations += 1;
        let k = active.len();
        let mut g_aa = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                g_aa[(a, b)] = gram.gram[(i, j)];
            }
            let s = if i == 0 { 0.0 } else { v[i].signum() };
            rhs[a] = gram.rhs[i] - alpha * s;
        }
        let (sol, reg) = solve_spd(g_aa, &rhs)?;
        regularized |= reg;
        let mut next = DVector::zeros(n);
        for (a, &i) in active.iter().enumerate() {
            next[i] = sol[a];
        }
        w = next;
        residual = gram.residual(&w, alpha, step);
    }

    if residual <= eps_in {
        let mut out = SubproblemSolution::from_weights(&w, iterations, true, residual);
        out.regularized = regularized;
        return Ok(out);
    }

    // ill-conditioned Grams (adjacent candidate nodes) make Newton chatter
    // between sign patterns; the homotopy path is exact and finite
    if let Some(hw) = homotopy(gram, alpha) {
        let hr = gram.residual(&hw, alpha, step);
        if hr <= eps_in {
            let mut out = SubproblemSolution::from_weights(&hw, iterations, true, hr);
            out.fallback_used = true;
            out.regularized = regularized;
            return Ok(out);
        }
        if hr < residual {
            w = hw;
        }
    }
    let (w, extra, converged) = proximal_gradient(gram, alpha, FALLBACK_MAX_ITER, w, |w| {
        gram.residual(w, alpha, step) <= eps_in
    });
    let residual = gram.residual(&w, alpha, step);
    let mut out = SubproblemSolution::from_weights(&w, iterations + extra, converged, residual);
    out.fallback_used = true;
    out.regularized = regularized;
    if !converged {
        return Err(Error::SolverFailure(format!(
            "inner problem not solved to {eps_in:e} (residual {residual:e})"
        )));
    }
    Ok(out)
}

/// Cholesky solve, retried once with a `1e-14·max diag` shift.
fn solve_spd(mat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let scale = mat.diagonal().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if let Some(ch) = mat.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok((x, false));
        }
    }
    let k = mat.nrows();
    let shifted = mat + DMatrix::identity(k, k) * (1e-14 * scale);
    match shifted.cholesky() {
        Some(ch) => {
            let x = ch.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                Ok((x, true))
            } else {
                Err(Error::SolverFailure("regularized active block produced non-finite values".into()))
            }
        }
        None => Err(Error::SolverFailure("active block is numerically singular".into())),
    }
}

/// Exact regularization path from `α_max = ‖b̃‖_∞` down to `alpha` for the
/// problem with the offset eliminated (`G̃`, `b̃` its Schur complement).
/// Returns `None` if a pivot block cannot be factored.
fn homotopy(gram: &GramSystem, alpha: f64) -> Option<DVector<f64>> {
    let n = gram.dim();
    let m = n - 1;
    let g = &gram.gram;
    let b = &gram.rhs;
    let g00 = g[(0, 0)];
    if !(g00 > 0.0) {
        return None;
    }
    let gt = DMatrix::from_fn(m, m, |i, j| g[(i + 1, j + 1)] - g[(i + 1, 0)] * g[(0, j + 1)] / g00);
    let bt = DVector::from_fn(m, |i, _| b[i + 1] - g[(i + 1, 0)] * b[0] / g00);
    let mut c = DVector::zeros(m);

    let lead = (0..m).max_by(|&i, &j| bt[i].abs().total_cmp(&bt[j].abs()));
    let mut lambda = lead.map_or(0.0, |i| bt[i].abs());
    if let Some(i0) = lead.filter(|_| lambda > alpha) {
        let mut active = vec![i0];
        let mut signs = vec![bt[i0].signum()];
        let mut dropped = None;
        for _ in 0..(20 * m + 20) {
            let k = active.len();
            let g_aa = DMatrix::from_fn(k, k, |a, bb| gt[(active[a], active[bb])]);
            let ch = g_aa.cholesky()?;
            let p = ch.solve(&DVector::from_fn(k, |a, _| bt[active[a]]));
            let q = ch.solve(&DVector::from_vec(signs.clone()));
            // ties: anything already at ±λ and still growing joins now
            let tied = (0..m).filter(|i| !active.contains(i) && dropped != Some(*i)).find_map(|i| {
                let (mut e, mut f) = (bt[i], 0.0);
                for a in 0..k {
                    e -= gt[(i, active[a])] * p[a];
                    f += gt[(i, active[a])] * q[a];
                }
                let r = e + lambda * f;
                let sgn = r.signum();
                (r.abs() >= lambda * (1.0 - 1e-9) && 1.0 - sgn * f > 0.0).then_some((i, sgn))
            });
            if let Some((i, sgn)) = tied {
                let pos = active.partition_point(|&x| x < i);
                active.insert(pos, i);
                signs.insert(pos, sgn);
                continue;
            }
            // c_A(λ) = p − λq; next event strictly below the current λ
            let below = lambda * (1.0 - 1e-12);
            let mut next = alpha;
            let mut event = None;
            for a in 0..k {
                // only a coefficient shrinking toward zero can leave
                if signs[a] * q[a] < 0.0 {
                    let l = p[a] / q[a];
                    if l < below && l > next {
                        next = l;
                        event = Some((false, a, 0.0));
                    }
                }
            }
            for i in (0..m).filter(|i| !active.contains(i)) {
                let (mut e, mut f) = (bt[i], 0.0);
                for a in 0..k {
                    e -= gt[(i, active[a])] * p[a];
                    f += gt[(i, active[a])] * q[a];
                }
                // correlation e + λf reaches ±λ and keeps growing past it
                for (sgn, den) in [(1.0, 1.0 - f), (-1.0, 1.0 + f)] {
                    if den > 0.0 {
                        let l = sgn * e / den;
                        if l < below && l > next {
                            next = l;
                            event = Some((true, i, sgn));
                        }
                    }
                }
            }
            lambda = next;
            for a in 0..k {
                c[active[a]] = p[a] - lambda * q[a];
            }
            match event {
                None => break,
                Some((false, a, _)) => {
                    dropped = Some(active[a]);
                    c[active[a]] = 0.0;
                    active.remove(a);
                    signs.remove(a);
                    if active.is_empty() {
                        break;
                    }
                }
                Some((true, i, sgn)) => {
                    dropped = None;
                    let pos = active.partition_point(|&x| x < i);
                    active.insert(pos, i);
                    signs.insert(pos, sgn);
                }
            }
        }
        if lambda > alpha {
            return None;
        }
    }
    let mut w = DVector::zeros(n);
    w[0] = (b[0] - (1..n).map(|j| g[(0, j)] * c[j - 1]).sum::<f64>()) / g00;
    for i in 0..m {
        w[i + 1] = c[i];
    }
    Some(w)
}

/// Upper bound on `λ_max(G)` by power iteration, inflated slightly.
fn lipschitz_bound(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let y = gram * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 1.0;
        }
        let next = x.dot(&y);
        x = y / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // the Rayleigh quotient approaches from below
    let frob = gram.norm();
    (lambda * 1.01).min(frob).max(lambda)
}

fn proximal_gradient(
    gram: &GramSystem,
    alpha: f64,
    max_iter: usize,
    mut w: DVector<f64>,
    mut done: impl FnMut(&DVector<f64>) -> bool,
) -> (DVector<f64>, usize, bool) {
    let l = lipschitz_bound(&gram.gram);
    let step = 1.0 / l;
    let n = w.len();
    for it in 1..=max_iter {
        let g = &gram.gram * &w - &gram.rhs;
        let mut next = &w - step * g;
        for i in 1..n {
            next[i] = shrink(next[i], step * alpha);
        }
        w = next;
        if it % 16 == 0 && done(&w) {
            return (w, it, true);
        }
    }
    let ok = done(&w);
    (w, max_iter, ok)
}

/// Plain proximal gradient with step `1/L`; terminates on its own
/// fixed-point residual. Never errors on budget exhaustion.
pub fn solve_subproblem_oracle(gram: &GramSystem, alpha: f64, tol: f64, max_iter: usize) -> Result<SubproblemSolution> {
    check_inputs(gram, alpha, tol)?;
    let l = lipschitz_bound(&gram.gram);
    let step = 1.0 / l;
    let w0 = DVector::zeros(gram.dim());
    let (w, iterations, converged) =
        proximal_gradient(gram, alpha, max_iter, w0, |w| gram.residual(w, alpha, step) <= tol);
    let residual = gram.residual(&w, alpha, step);
    Ok(SubproblemSolution::from_weights(&w, iterations, converged, residual))
}
