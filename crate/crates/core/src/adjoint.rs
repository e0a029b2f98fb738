//! Discrete adjoint, its antiderivative `Φ_h(x) = ∫₀ˣ z_h`, root extraction
//! and the optimality certificates built on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::JumpControl;
use crate::error::{Error, Result};
use crate::fem::{mass_apply, quadrature_load_split, Mesh, NodalFunction, ProblemSpec, TridiagonalSystem};
use crate::subproblem::shrink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Only state and adjoint are discretized; jumps are free points.
    Variational,
    /// Piecewise-constant controls; jumps sit on mesh nodes.
    Full,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Variational => "variational",
            Scheme::Full => "full",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variational" => Ok(Scheme::Variational),
            "full" => Ok(Scheme::Full),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

/// `(v, φ_j)` minus `(u_d, φ_j)`: the right-hand side of the adjoint equation.
pub(crate) fn adjoint_rhs(u_h: &NodalFunction, desired_load: &[f64]) -> Vec<f64> {
    let mut rhs = mass_apply(u_h.mesh(), u_h.values());
    for (r, d) in rhs.iter_mut().zip(desired_load) {
        *r -= d;
    }
    rhs
}

/// `z_h = S_h(u_h − u_d)`; the bilinear form is symmetric so the state
/// system is reused.
pub fn compute_adjoint(
    sys: &TridiagonalSystem,
    u_h: &NodalFunction,
    spec: &ProblemSpec,
    quad_order: usize,
) -> Result<NodalFunction> {
    let desired = quadrature_load_split(u_h.mesh(), &*spec.desired, &spec.desired_breakpoints, quad_order);
    compute_adjoint_with_load(sys, u_h, &desired)
}

/// As [`compute_adjoint`] with a precomputed `(u_d, φ_j)` vector.
pub fn compute_adjoint_with_load(
    sys: &TridiagonalSystem,
    u_h: &NodalFunction,
    desired_load: &[f64],
) -> Result<NodalFunction> {
    if desired_load.len() != sys.dim() || u_h.mesh().interior_count() != sys.dim() {
        return Err(Error::invalid("adjoint: dimension mismatch"));
    }
    let rhs = adjoint_rhs(u_h, desired_load);
    let interior = sys.solve(&rhs)?;
    NodalFunction::from_interior(u_h.mesh().clone(), &interior)
}

/// Exact antiderivative of a piecewise-linear `z_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    mesh: Arc<Mesh>,
    z: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PhiFunction {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// `Φ_h(x_j)` for every node.
    pub fn nodal(&self) -> &[f64] {
        &self.cumulative
    }

    /// `Φ_h(x)`, quadratic inside each element.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.mesh.locate(x);
        let h = self.mesh.widths()[i];
        let s = x - self.mesh.nodes()[i];
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        self.cumulative[i] + z0 * s + (z1 - z0) * s * s / (2.0 * h)
    }

    pub fn at_one(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Max of `|Φ_h|` over `samples_per_element` equispaced points per
    /// element plus the nodes.
    pub fn sampled_sup(&self, samples_per_element: usize) -> f64 {
        let nodes = self.mesh.nodes();
        let mut m = self.cumulative.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..self.mesh.element_count() {
            let h = self.mesh.widths()[i];
            for s in 1..samples_per_element {
                let x = nodes[i] + h * s as f64 / samples_per_element as f64;
                m = m.max(self.eval(x).abs());
            }
        }
        m
    }

    /// Exact `max |Φ_h|` using the vertex of each element's quadratic.
    pub fn sup(&self) -> f64 {
        let nodes = self.mesh.nodes();
        let mut m = self.cumulative.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..self.mesh.element_count() {
            let (z0, z1) = (self.z[i], self.z[i + 1]);
            if z0 * z1 < 0.0 {
                let x = nodes[i] + self.mesh.widths()[i] * z0 / (z0 - z1);
                m = m.max(self.eval(x).abs());
            }
        }
        m
    }
}

pub fn phi_of(z_h: &NodalFunction) -> PhiFunction {
    let mesh = z_h.mesh().clone();
    let z = z_h.values().to_vec();
    let mut cumulative = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for (i, &h) in mesh.widths().iter().enumerate() {
        acc += h * (z[i] + z[i + 1]) / 2.0;
        cumulative.push(acc);
    }
    PhiFunction { mesh, z, cumulative }
}

/// Default `(tol_zero, tol_merge)` for [`find_interior_roots`].
pub fn default_root_tolerances(z_h: &NodalFunction) -> (f64, f64) {
    let tol_zero = 1e-12 * z_h.max_abs();
    let tol_merge = f64::max(1e-10, z_h.mesh().h() * 1e-6);
    (tol_zero, tol_merge)
}

/// Interior roots of the piecewise-linear `z_h`: interior nodes with
/// `|z_j| ≤ tol_zero` and linear sign-change roots inside elements.
/// Returns nothing for `z_h ≡ 0`.
pub fn find_interior_roots(z_h: &NodalFunction, tol_zero: f64, tol_merge: f64) -> Vec<f64> {
    let z = z_h.values();
    if z_h.max_abs() == 0.0 {
        return Vec::new();
    }
    let mesh = z_h.mesh();
    let nodes = mesh.nodes();
    let mut roots = Vec::new();
    for i in 0..mesh.element_count() {
        if i > 0 && z[i].abs() <= tol_zero {
            roots.push(nodes[i]);
        }
        let (z0, z1) = (z[i], z[i + 1]);
        if z0 * z1 < 0.0 && z0.abs() > tol_zero && z1.abs() > tol_zero {
            roots.push(nodes[i] + mesh.widths()[i] * z0 / (z0 - z1));
        }
    }
    roots.retain(|&r| r > 0.0 && r < 1.0);
    roots.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        if out.last().is_none_or(|&prev| r - prev >= tol_merge) {
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// `|Φ_h(1)|`.
    pub phi_at_one: f64,
    /// Max over nonzero jumps of `||Φ_h(t)| − α|`.
    pub max_abs_phi_at_jumps: f64,
    /// `max_j max(|Φ_h(x_j)| − α, 0)` over all nodes (fully discrete only).
    pub nodal_phi_bound_violation: f64,
    /// Nonzero jumps with `sign(c)·Φ_h(t) < α(1 − sign_tol)`.
    pub sign_mismatches: usize,
    pub zero_height_jumps: usize,
    /// Fixed-point residual of the prox map at the returned coefficients.
    pub kkt_residual: f64,
    /// Exact `max |Φ_h|` over `[0, 1]`.
    pub phi_sup: f64,
}

/// Relative slack for the sign test in [`optimality_report`].
pub const SIGN_TOL: f64 = 1e-6;

/// Certificates of the discrete optimality system. `step` is the prox step
/// used for the fixed-point residual.
pub fn optimality_report(q: &JumpControl, z_h: &NodalFunction, alpha: f64, scheme: Scheme, step: f64) -> OptimalityReport {
    let phi = phi_of(z_h);
    let mut max_dev: f64 = 0.0;
    let mut sign_mismatches = 0;
    let mut zero_height = 0;
    // offset gradient (z, 1) = Φ(1); jump gradient (z, 1_(t,1)) = −Φ(t)
    let mut kkt = (step * phi.at_one()).abs();
    for j in q.jumps() {
        let p = phi.eval(j.t);
        kkt = kkt.max((j.c - shrink(j.c + step * p, step * alpha)).abs());
        if j.c == 0.0 {
            zero_height += 1;
            continue;
        }
        max_dev = max_dev.max((p.abs() - alpha).abs());
        if j.c.signum() * p < alpha * (1.0 - SIGN_TOL) {
            sign_mismatches += 1;
        }
    }
    let nodal_violation = match scheme {
        Scheme::Full => phi
            .nodal()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs() - alpha)),
        Scheme::Variational => 0.0,
    };
    OptimalityReport {
        phi_at_one: phi.at_one().abs(),
        max_abs_phi_at_jumps: max_dev,
        nodal_phi_bound_violation: nodal_violation.max(0.0),
        sign_mismatches,
        zero_height_jumps: zero_height,
        kkt_residual: kkt,
        phi_sup: phi.sup(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSlope {
    pub root: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    /// Width of the element (or the larger adjacent element) holding the root.
    pub local_width: f64,
    pub flat: bool,
    pub clustered: bool,
}

/// One-sided slopes of `z_h` at each root, flagging nearly flat roots
/// (`min |slope| < threshold`) and roots closer than three local widths.
pub fn structural_diagnostics(z_h: &NodalFunction, roots: &[f64], threshold: f64) -> Vec<RootSlope> {
    let mesh = z_h.mesh();
    let nodes = mesh.nodes();
    let mut out: Vec<RootSlope> = roots
        .iter()
        .map(|&r| {
            let i = mesh.locate(r);
            let at_node = i > 0 && r == nodes[i];
            let (left_el, right_el) = if at_node { (i - 1, i) } else { (i, i) };
            let left_slope = z_h.slope(left_el);
            let right_slope = z_h.slope(right_el);
            let local_width = mesh.widths()[left_el].max(mesh.widths()[right_el]);
            RootSlope {
                root: r,
                left_slope,
                right_slope,
                local_width,
                flat: left_slope.abs().min(right_slope.abs()) < threshold,
                clustered: false,
            }
        })
        .collect();
    for k in 1..out.len() {
        let width = out[k].local_width.max(out[k - 1].local_width);
        if out[k].root - out[k - 1].root < 3.0 * width {
            out[k].clustered = true;
            out[k - 1].clustered = true;
        }
    }
    out
}
