//! Outer iteration over jump positions: inner solve at the current points,
//! roots of the adjoint as the next points, until the point set settles.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::{
    compute_adjoint_with_load, default_root_tolerances, find_interior_roots, optimality_report, phi_of,
    OptimalityReport, PhiFunction, Scheme,
};
use crate::control::{load_of_jump_control, JumpControl};
use crate::error::{Error, Result};
use crate::fem::{apply_sh, assemble_system, l2_inner_values, Mesh, NodalFunction, ProblemSpec, TridiagonalSystem, DEFAULT_QUAD_ORDER};
use crate::subproblem::{assemble_gram_with, solve_subproblem_ssn_from, DesiredData, GramSystem, SubproblemSolution, DEFAULT_SSN_MAX_ITER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_in: f64,
    pub eps_out: f64,
    pub max_outer: usize,
    pub quad_order: usize,
    pub damping_enabled: bool,
    pub node_snap_tol: f64,
    pub ssn_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_in: 1e-12,
            eps_out: 1e-10,
            max_outer: 200,
            quad_order: DEFAULT_QUAD_ORDER,
            damping_enabled: true,
            node_snap_tol: 1e-12,
            ssn_max_iter: DEFAULT_SSN_MAX_ITER,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_in > 0.0 && self.eps_out > 0.0 && self.node_snap_tol >= 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if self.max_outer == 0 || self.quad_order == 0 || self.ssn_max_iter == 0 {
            return Err(Error::invalid("iteration budgets and quadrature order must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub scheme: Scheme,
    pub control: JumpControl,
    pub state: NodalFunction,
    pub adjoint: NodalFunction,
    pub phi: PhiFunction,
    pub outer_iterations: usize,
    pub inner_report: SubproblemSolution,
    pub optimality: OptimalityReport,
    /// `j_h(q) = ½‖u_h − u_d‖² + α‖q′‖`.
    pub objective: f64,
    /// `j_h(0) = ½‖u_d‖²`.
    pub objective_at_zero: f64,
    /// Position changes `‖t_(k) − t_(k−1)‖₂` (infinite when counts differ).
    pub step_history: Vec<f64>,
}

impl Solution {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.state.mesh()
    }
}

/// One inner solve with its state and adjoint.
struct Iterate {
    points: Vec<f64>,
    gram: GramSystem,
    inner: SubproblemSolution,
    state: NodalFunction,
    adjoint: NodalFunction,
}

struct Context<'a> {
    mesh: Arc<Mesh>,
    sys: TridiagonalSystem,
    desired: DesiredData,
    spec: &'a ProblemSpec,
    cfg: &'a SolverConfig,
}

impl<'a> Context<'a> {
    fn new(spec: &'a ProblemSpec, mesh: &Mesh, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let mesh = Arc::new(mesh.clone());
        let sys = assemble_system(&mesh, spec, cfg.quad_order)?;
        let desired = DesiredData::new(&mesh, spec, cfg.quad_order);
        Ok(Self {
            mesh,
            sys,
            desired,
            spec,
            cfg,
        })
    }

    fn inner(&self, points: Vec<f64>, warm: Option<&Iterate>) -> Result<Iterate> {
        let gram = assemble_gram_with(&self.mesh, &self.sys, &points, &self.desired)?;
        let init = warm_start(&points, warm, 3.0 * self.mesh.h());
        let inner = solve_subproblem_ssn_from(&gram, self.spec.alpha, self.cfg.eps_in, self.cfg.ssn_max_iter, &init)?;
        let mut w = Vec::with_capacity(points.len() + 1);
        w.push(inner.offset);
        w.extend_from_slice(&inner.coeffs);
        let state = gram.state(&w)?;
        let adjoint = compute_adjoint_with_load(&self.sys, &state, &self.desired.load)?;
        Ok(Iterate {
            points,
            gram,
            inner,
            state,
            adjoint,
        })
    }

    fn roots(&self, it: &Iterate) -> Vec<f64> {
        let (tol_zero, tol_merge) = default_root_tolerances(&it.adjoint);
        find_interior_roots(&it.adjoint, tol_zero, tol_merge)
    }

    fn finish(&self, it: Iterate, scheme: Scheme, outer_iterations: usize, step_history: Vec<f64>) -> Result<Solution> {
        let control = JumpControl::new(
            it.inner.offset,
            it.points.iter().copied().zip(it.inner.coeffs.iter().copied()).collect(),
        )?;
        let optimality = optimality_report(&control, &it.adjoint, self.spec.alpha, scheme, it.gram.step());
        let objective = it.gram.objective(&it.inner.weights(), self.spec.alpha);
        Ok(Solution {
            scheme,
            phi: phi_of(&it.adjoint),
            control,
            state: it.state,
            adjoint: it.adjoint,
            outer_iterations,
            inner_report: it.inner,
            optimality,
            objective,
            objective_at_zero: self.desired.half_norm_sq,
            step_history,
        })
    }
}

/// Offset from the previous iterate; each coefficient from the nearest
/// previous point within `radius`, zero otherwise. Cold start without history.
fn warm_start(points: &[f64], warm: Option<&Iterate>, radius: f64) -> Vec<f64> {
    let mut init = vec![0.0; points.len() + 1];
    let Some(prev) = warm else {
        return init;
    };
    init[0] = prev.inner.offset;
    for (i, &t) in points.iter().enumerate() {
        let nearest = prev
            .points
            .iter()
            .enumerate()
            .map(|(j, &s)| ((s - t).abs(), j))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d, j)) = nearest {
            if d <= radius {
                init[i + 1] = prev.inner.coeffs[j];
            }
        }
    }
    init
}

fn sorted_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Halves a non-decreasing step: if `‖t_next − t_curr‖ ≥ ‖t_curr − t_prev‖`
/// returns the midpoint of `t_curr` and `t_next`, else `t_next`. Without a
/// comparable history (`t_prev` absent or of another length) `t_next` is
/// returned unchanged.
pub fn damped_update(t_prev: Option<&[f64]>, t_curr: &[f64], t_next: &[f64]) -> Result<Vec<f64>> {
    if t_curr.len() != t_next.len() {
        return Err(Error::invalid("damped_update needs equally many current and next points"));
    }
    let Some(prev) = t_prev.filter(|p| p.len() == t_curr.len()) else {
        return Ok(t_next.to_vec());
    };
    let next_step = sorted_distance(t_next, t_curr);
    let prev_step = sorted_distance(t_curr, prev);
    if next_step >= prev_step {
        Ok(t_curr.iter().zip(t_next).map(|(a, b)| 0.5 * a + 0.5 * b).collect())
    } else {
        Ok(t_next.to_vec())
    }
}

/// Variationally discretized problem: jump positions are free points.
pub fn solve_variational(spec: &ProblemSpec, mesh: &Mesh, cfg: &SolverConfig) -> Result<Solution> {
    let ctx = Context::new(spec, mesh, cfg)?;
    let mut it = ctx.inner(Vec::new(), None)?;
    let mut t_next = ctx.roots(&it);
    let mut history = Vec::new();

    for k in 1..=cfg.max_outer {
        let step = sorted_distance(&t_next, &it.points);
        history.push(step);
        if step <= cfg.eps_out {
            return ctx.finish(it, Scheme::Variational, k, history);
        }
        let next_it = ctx.inner(t_next.clone(), Some(&it))?;
        let roots = ctx.roots(&next_it);
        let candidate = if cfg.damping_enabled && roots.len() == t_next.len() {
            damped_update(Some(&it.points), &t_next, &roots)?
        } else {
            roots
        };
        it = next_it;
        t_next = candidate;
    }
    let last_step = history.last().copied().unwrap_or(f64::INFINITY);
    let last = ctx.finish(it, Scheme::Variational, cfg.max_outer, history)?;
    Err(Error::NotConverged {
        iterations: cfg.max_outer,
        last_step,
        last: Box::new(last),
    })
}

/// Candidate nodes for a root: the enclosing element's interior endpoints,
/// or the single node when the root is within `snap_tol` of it.
pub fn candidate_nodes(mesh: &Mesh, roots: &[f64], snap_tol: f64) -> BTreeSet<usize> {
    let nodes = mesh.nodes();
    let last = nodes.len() - 1;
    let mut set = BTreeSet::new();
    for &r in roots {
        let i = mesh.locate(r);
        if (r - nodes[i]).abs() <= snap_tol {
            set.insert(i);
        } else if (nodes[i + 1] - r).abs() <= snap_tol {
            set.insert(i + 1);
        } else {
            set.insert(i);
            set.insert(i + 1);
        }
    }
    set.retain(|&j| j != 0 && j != last);
    set
}

/// Piecewise-constant controls: candidate jumps are mesh nodes next to the
/// adjoint roots.
pub fn solve_full_discrete(spec: &ProblemSpec, mesh: &Mesh, cfg: &SolverConfig) -> Result<Solution> {
    let ctx = Context::new(spec, mesh, cfg)?;
    let nodes = ctx.mesh.nodes().to_vec();
    let to_points = |set: &BTreeSet<usize>| set.iter().map(|&j| nodes[j]).collect::<Vec<f64>>();

    let mut it = ctx.inner(Vec::new(), None)?;
    let mut set_curr: BTreeSet<usize> = BTreeSet::new();
    // roots that produced the current and the next candidate sets
    let mut roots_curr: Vec<f64> = Vec::new();
    let mut roots_next = ctx.roots(&it);
    let mut set_next = candidate_nodes(&ctx.mesh, &roots_next, cfg.node_snap_tol);
    let mut history = Vec::new();

    for k in 1..=cfg.max_outer {
        let next_it = ctx.inner(to_points(&set_next), Some(&it))?;
        if set_next == set_curr {
            let change = next_it
                .inner
                .weights()
                .iter()
                .zip(it.inner.weights().iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            history.push(change);
            if change <= cfg.eps_out {
                return ctx.finish(next_it, Scheme::Full, k, history);
            }
        } else {
            history.push(f64::INFINITY);
        }
        let roots = ctx.roots(&next_it);
        let damped = if cfg.damping_enabled && roots.len() == roots_next.len() {
            let prev = (roots_curr.len() == roots_next.len()).then_some(roots_curr.as_slice());
            damped_update(prev, &roots_next, &roots)?
        } else {
            roots
        };
        roots_curr = std::mem::replace(&mut roots_next, damped);
        set_curr = std::mem::replace(&mut set_next, candidate_nodes(&ctx.mesh, &roots_next, cfg.node_snap_tol));
        it = next_it;
    }
    let last_step = history.last().copied().unwrap_or(f64::INFINITY);
    let last = ctx.finish(it, Scheme::Full, cfg.max_outer, history)?;
    Err(Error::NotConverged {
        iterations: cfg.max_outer,
        last_step,
        last: Box::new(last),
    })
}

pub fn solve(spec: &ProblemSpec, mesh: &Mesh, cfg: &SolverConfig, scheme: Scheme) -> Result<Solution> {
    match scheme {
        Scheme::Variational => solve_variational(spec, mesh, cfg),
        Scheme::Full => solve_full_discrete(spec, mesh, cfg),
    }
}

/// Reduced objective `j_h(q) = ½‖S_h q − u_d‖² + α‖q′‖` for any jump control.
pub fn reduced_objective(spec: &ProblemSpec, mesh: &Mesh, q: &JumpControl, quad_order: usize) -> Result<f64> {
    let mesh = Arc::new(mesh.clone());
    let sys = assemble_system(&mesh, spec, quad_order)?;
    let desired = DesiredData::new(&mesh, spec, quad_order);
    let u = apply_sh(&sys, &load_of_jump_control(&mesh, q), &mesh)?;
    let uu = l2_inner_values(&mesh, u.values(), u.values());
    let ud: f64 = u.interior().iter().zip(&desired.load).map(|(a, b)| a * b).sum();
    Ok(0.5 * uu - ud + desired.half_norm_sq + spec.alpha * q.total_variation())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn damping_rule() {
        let out = damped_update(Some(&[0.3]), &[0.5], &[0.3]).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15);
        let out = damped_update(Some(&[0.3]), &[0.4], &[0.41]).unwrap();
        assert_eq!(out, vec![0.41]);
        let out = damped_update(None, &[0.4], &[0.41]).unwrap();
        assert_eq!(out, vec![0.41]);
        assert!(damped_update(None, &[0.4], &[0.41, 0.5]).is_err());
    }

    #[test]
    fn candidate_rule() {
        let mesh = Mesh::uniform(4).unwrap();
        let c: Vec<_> = candidate_nodes(&mesh, &[0.37], 1e-12).into_iter().collect();
        assert_eq!(c, vec![1, 2]);
        let c: Vec<_> = candidate_nodes(&mesh, &[0.5], 1e-12).into_iter().collect();
        assert_eq!(c, vec![2]);
        // shared node from adjacent roots and boundary exclusion
        let c: Vec<_> = candidate_nodes(&mesh, &[0.1, 0.3, 0.9], 1e-12).into_iter().collect();
        assert_eq!(c, vec![1, 2, 3]);
    }

    #[test]
    fn zero_target_converges_immediately() {
        let spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1e-5);
        let mesh = Mesh::uniform(16).unwrap();
        let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
        assert_eq!(sol.outer_iterations, 1);
        assert!(sol.control.jumps().is_empty());
        assert_eq!(sol.control.offset(), 0.0);
        let sol = solve_full_discrete(&spec, &mesh, &SolverConfig::default()).unwrap();
        assert!(sol.control.jumps().is_empty());
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            eps_out: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            max_outer: 0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reduced_objective_of_zero_is_half_target_norm() {
        let spec = ProblemSpec::laplacian(Arc::new(|x: f64| x), 1e-3);
        let mesh = Mesh::uniform(8).unwrap();
        let j0 = reduced_objective(&spec, &mesh, &JumpControl::constant(0.0), 5).unwrap();
        assert!((j0 - 1.0 / 6.0).abs() < 1e-14);
    }
}
