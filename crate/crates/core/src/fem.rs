//! Piecewise-linear finite elements on `[0, 1]` with homogeneous Dirichlet
//! boundary conditions.
//!
//! All linear systems live on the interior nodes `x_1, …, x_{l-1}`; the
//! boundary values of a [`NodalFunction`] are stored explicitly as zeros.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::quadrature::{split_at, GaussLegendre};

/// Default number of Gauss points per element.
pub const DEFAULT_QUAD_ORDER: usize = 5;

/// Strictly increasing node sequence `0 = x_0 < … < x_l = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    widths: Vec<f64>,
}

impl Mesh {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::invalid(format!(
                "a mesh needs at least 2 elements, got {} nodes",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::invalid("mesh must start at 0 and end at 1"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("mesh nodes must be strictly increasing"));
        }
        let widths = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { nodes, widths })
    }

    /// `n` equal elements, nodes `j / n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("uniform mesh needs n >= 2, got {n}")));
        }
        let nodes = (0..=n).map(|j| j as f64 / n as f64).collect();
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn element_count(&self) -> usize {
        self.widths.len()
    }

    pub fn interior_count(&self) -> usize {
        self.nodes.len() - 2
    }

    /// Mesh width `h = max_i h_i`.
    pub fn h(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    /// Index `i` of the element `[x_i, x_{i+1}]` containing `x`; the last
    /// element owns `x = 1`.
    pub fn locate(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&node| node <= x);
        i.saturating_sub(1).min(self.element_count() - 1)
    }

    pub(crate) fn same_as(&self, other: &Mesh) -> bool {
        std::ptr::eq(self, other) || self.nodes == other.nodes
    }
}

/// Shorthand for [`Mesh::uniform`].
pub fn build_uniform_mesh(n: usize) -> Result<Mesh> {
    Mesh::uniform(n)
}

/// A member of `V_h`: one value per node, zero at both boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl NodalFunction {
    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let values = vec![0.0; mesh.nodes.len()];
        Self { mesh, values }
    }

    /// Builds the function from its interior values.
    pub fn from_interior(mesh: Arc<Mesh>, interior: &[f64]) -> Result<Self> {
        if interior.len() != mesh.interior_count() {
            return Err(Error::invalid(format!(
                "expected {} interior values, got {}",
                mesh.interior_count(),
                interior.len()
            )));
        }
        let mut values = Vec::with_capacity(interior.len() + 2);
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Ok(Self { mesh, values })
    }

    /// Builds the function from all nodal values; boundary entries must be 0.
    pub fn from_values(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes.len() {
            return Err(Error::invalid("value count does not match node count"));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 0.0 {
            return Err(Error::invalid("nodal function must vanish at the boundary"));
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of `f` (boundary values forced to zero).
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(f64) -> f64) -> Self {
        let last = mesh.nodes.len() - 1;
        let values = mesh
            .nodes
            .iter()
            .enumerate()
            .map(|(j, &x)| if j == 0 || j == last { 0.0 } else { f(x) })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    /// Linear interpolation between nodes.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.mesh.locate(x);
        let x0 = self.mesh.nodes[i];
        let s = (x - x0) / self.mesh.widths[i];
        self.values[i] * (1.0 - s) + self.values[i + 1] * s
    }

    /// Slope on element `i`.
    pub fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / self.mesh.widths[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A PDE coefficient; constants take the closed-form assembly path.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Variable(ScalarFn),
}

impl Coefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Variable(f) => f(x),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Variable(_) => f.write_str("Variable(..)"),
        }
    }
}

/// Data of the control problem
/// `min ½‖u − u_d‖² + α‖q′‖` s.t. `(a u′, w′) + (d₀ u, w) = (q, w)`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub diffusion: Coefficient,
    /// Lower bound `ν > 0` of the diffusion coefficient.
    pub diffusion_bound: f64,
    pub reaction: Coefficient,
    pub desired: ScalarFn,
    /// Points where `u_d` loses smoothness; quadrature splits elements there.
    pub desired_breakpoints: Vec<f64>,
    pub alpha: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("diffusion", &self.diffusion)
            .field("diffusion_bound", &self.diffusion_bound)
            .field("reaction", &self.reaction)
            .field("desired_breakpoints", &self.desired_breakpoints)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// `a ≡ 1`, `d₀ ≡ 0` with the given desired state.
    pub fn laplacian(desired: ScalarFn, alpha: f64) -> Self {
        Self {
            diffusion: Coefficient::Constant(1.0),
            diffusion_bound: 1.0,
            reaction: Coefficient::Constant(0.0),
            desired,
            desired_breakpoints: Vec::new(),
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.diffusion_bound > 0.0) {
            return Err(Error::invalid("diffusion lower bound must be positive"));
        }
        Ok(())
    }

    pub fn desired_at(&self, x: f64) -> f64 {
        (self.desired)(x)
    }
}

/// Symmetric tridiagonal matrix over the interior nodes.
#[derive(Debug)]
pub struct TridiagonalSystem {
    main: Vec<f64>,
    off: Vec<f64>,
    factor: OnceLock<Factorization>,
}

/// `LDLᵀ`-style elimination data: pivots and the scaled super-diagonal.
#[derive(Debug)]
struct Factorization {
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl Clone for TridiagonalSystem {
    fn clone(&self) -> Self {
        Self {
            main: self.main.clone(),
            off: self.off.clone(),
            factor: OnceLock::new(),
        }
    }
}

impl TridiagonalSystem {
    /// `off[i]` couples unknowns `i` and `i + 1`.
    pub fn new(main: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if main.is_empty() {
            return Err(Error::invalid("empty tridiagonal system"));
        }
        if off.len() + 1 != main.len() {
            return Err(Error::invalid(format!(
                "off-diagonal length {} does not match dimension {}",
                off.len(),
                main.len()
            )));
        }
        if main.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid("main diagonal must be strictly positive and finite"));
        }
        if off.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("off-diagonal must be finite"));
        }
        Ok(Self {
            main,
            off,
            factor: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.main.len()
    }

    pub fn main(&self) -> &[f64] {
        &self.main
    }

    pub fn sub(&self) -> &[f64] {
        &self.off
    }

    pub fn sup(&self) -> &[f64] {
        &self.off
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.main[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    fn factorization(&self) -> Result<&Factorization> {
        if let Some(f) = self.factor.get() {
            return Ok(f);
        }
        let n = self.dim();
        let mut pivots = vec![0.0; n];
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let p = if i == 0 {
                self.main[0]
            } else {
                self.main[i] - self.off[i - 1] * prev_upper
            };
            if p == 0.0 || !p.is_finite() || p.abs() <= f64::EPSILON * self.main[i].abs() {
                return Err(Error::SingularSystem { row: i });
            }
            pivots[i] = p;
            if i + 1 < n {
                upper[i] = self.off[i] / p;
                prev_upper = upper[i];
            }
        }
        Ok(self.factor.get_or_init(|| Factorization { pivots, upper }))
    }

    /// Thomas elimination without pivoting; the factorization is cached.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, system has dimension {n}",
                rhs.len()
            )));
        }
        let f = self.factorization()?;
        let mut y = vec![0.0; n];
        y[0] = rhs[0] / f.pivots[0];
        for i in 1..n {
            y[i] = (rhs[i] - self.off[i - 1] * y[i - 1]) / f.pivots[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= f.upper[i] * y[i + 1];
        }
        Ok(y)
    }
}

pub fn solve_tridiagonal(sys: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    sys.solve(rhs)
}

/// Stiffness plus reaction matrix `𝔞(φ_j, φ_i)` over interior hats.
pub fn assemble_system(mesh: &Mesh, spec: &ProblemSpec, quad_order: usize) -> Result<TridiagonalSystem> {
    if quad_order == 0 {
        return Err(Error::invalid("quadrature order must be positive"));
    }
    spec.validate()?;
    let rule = GaussLegendre::new(quad_order);
    let nodes = mesh.nodes();
    let mut full_main = vec![0.0; nodes.len()];
    let mut full_off = vec![0.0; mesh.element_count()];

    for (i, &h) in mesh.widths().iter().enumerate() {
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        // local [[k_ll, k_lr], [k_lr, k_rr]]
        let (k_ll, k_lr, k_rr) = match (&spec.diffusion, &spec.reaction) {
            (Coefficient::Constant(a), Coefficient::Constant(d)) => {
                check_diffusion(*a, spec.diffusion_bound, x0)?;
                check_reaction(*d, x0)?;
                (a / h + d * h / 3.0, -a / h + d * h / 6.0, a / h + d * h / 3.0)
            }
            _ => {
                let (mut ll, mut lr, mut rr) = (0.0, 0.0, 0.0);
                for (x, w) in rule.on_interval(x0, x1) {
                    let a = spec.diffusion.eval(x);
                    let d = spec.reaction.eval(x);
                    check_diffusion(a, spec.diffusion_bound, x)?;
                    check_reaction(d, x)?;
                    let right = (x - x0) / h;
                    let left = 1.0 - right;
                    let grad = a / (h * h);
                    ll += w * (grad + d * left * left);
                    lr += w * (-grad + d * left * right);
                    rr += w * (grad + d * right * right);
                }
                (ll, lr, rr)
            }
        };
        full_main[i] += k_ll;
        full_main[i + 1] += k_rr;
        full_off[i] = k_lr;
    }

    let interior = mesh.interior_count();
    let main = full_main[1..=interior].to_vec();
    let off = full_off[1..interior].to_vec();
    TridiagonalSystem::new(main, off)
}

fn check_diffusion(a: f64, bound: f64, x: f64) -> Result<()> {
    if a < bound || !a.is_finite() {
        return Err(Error::CoefficientViolation {
            name: "a",
            x,
            value: a,
            bound,
        });
    }
    Ok(())
}

fn check_reaction(d: f64, x: f64) -> Result<()> {
    if d < 0.0 || !d.is_finite() {
        return Err(Error::CoefficientViolation {
            name: "d0",
            x,
            value: d,
            bound: 0.0,
        });
    }
    Ok(())
}

/// `∫ f φ_j` for every interior hat, composite Gauss–Legendre per element.
pub fn quadrature_load(mesh: &Mesh, f: impl Fn(f64) -> f64, quad_order: usize) -> Vec<f64> {
    quadrature_load_split(mesh, f, &[], quad_order)
}

/// As [`quadrature_load`], additionally splitting elements at `breaks`
/// (sorted) where `f` is not smooth.
pub fn quadrature_load_split(mesh: &Mesh, f: impl Fn(f64) -> f64, breaks: &[f64], quad_order: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(quad_order.max(1));
    let nodes = mesh.nodes();
    let mut full = vec![0.0; nodes.len()];
    for (i, &h) in mesh.widths().iter().enumerate() {
        let x0 = nodes[i];
        for (a, b) in split_at(x0, nodes[i + 1], breaks) {
            for (x, w) in rule.on_interval(a, b) {
                let fx = w * f(x);
                let right = (x - x0) / h;
                full[i] += fx * (1.0 - right);
                full[i + 1] += fx * right;
            }
        }
    }
    full[1..nodes.len() - 1].to_vec()
}

/// Discrete solution operator: `u_h ∈ V_h` with `𝔞(u_h, φ_j) = load_j`.
pub fn apply_sh(sys: &TridiagonalSystem, load: &[f64], mesh: &Arc<Mesh>) -> Result<NodalFunction> {
    if load.len() != mesh.interior_count() || sys.dim() != mesh.interior_count() {
        return Err(Error::invalid("load, system and mesh dimensions disagree"));
    }
    let interior = sys.solve(load)?;
    NodalFunction::from_interior(mesh.clone(), &interior)
}

/// Consistent mass matrix applied to the full nodal vector, restricted to
/// interior rows: entry `j` is `(v, φ_j)`.
pub fn mass_apply(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let n = mesh.nodes().len();
    let mut out = vec![0.0; n];
    for (i, &h) in mesh.widths().iter().enumerate() {
        let (l, r) = (values[i], values[i + 1]);
        out[i] += h * (2.0 * l + r) / 6.0;
        out[i + 1] += h * (l + 2.0 * r) / 6.0;
    }
    out[1..n - 1].to_vec()
}

/// Exact `∫ u v` for two members of `V_h` on the same mesh.
pub fn l2_inner(u: &NodalFunction, v: &NodalFunction) -> Result<f64> {
    if !u.mesh.same_as(&v.mesh) {
        return Err(Error::invalid("l2_inner: functions live on different meshes"));
    }
    Ok(l2_inner_values(&u.mesh, &u.values, &v.values))
}

pub(crate) fn l2_inner_values(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    mesh.widths()
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let (u0, u1, v0, v1) = (u[i], u[i + 1], v[i], v[i + 1]);
            h * (2.0 * u0 * v0 + u0 * v1 + u1 * v0 + 2.0 * u1 * v1) / 6.0
        })
        .sum()
}

/// `∫ f²` by composite quadrature, split at `breaks`.
pub(crate) fn quadrature_norm_sq(mesh: &Mesh, f: impl Fn(f64) -> f64, breaks: &[f64], quad_order: usize) -> f64 {
    let rule = GaussLegendre::new(quad_order.max(1));
    let nodes = mesh.nodes();
    let mut sum = 0.0;
    for i in 0..mesh.element_count() {
        for (a, b) in split_at(nodes[i], nodes[i + 1], breaks) {
            sum += rule.integrate(a, b, |x| {
                let y = f(x);
                y * y
            });
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace(n: usize) -> (Arc<Mesh>, TridiagonalSystem) {
        let mesh = Arc::new(Mesh::uniform(n).unwrap());
        let spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1.0);
        let sys = assemble_system(&mesh, &spec, DEFAULT_QUAD_ORDER).unwrap();
        (mesh, sys)
    }

    #[test]
    fn uniform_mesh_shapes() {
        let m = Mesh::uniform(2).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        let m = Mesh::uniform(4).unwrap();
        assert_eq!(m.nodes().len(), 5);
        assert_eq!(m.h(), 0.25);
        let m = Mesh::uniform(15).unwrap();
        assert!((m.h() - 1.0 / 15.0).abs() < 1e-16);
        assert!(Mesh::uniform(1).is_err());
        assert!(Mesh::uniform(0).is_err());
    }

    #[test]
    fn mesh_validation() {
        assert!(Mesh::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Mesh::new(vec![0.1, 0.5, 1.0]).is_err());
        assert!(Mesh::new(vec![0.0, 1.0]).is_err());
        let m = Mesh::new(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        assert_eq!(m.locate(0.0), 0);
        assert_eq!(m.locate(0.2), 1);
        assert_eq!(m.locate(0.69), 1);
        assert_eq!(m.locate(1.0), 2);
    }

    #[test]
    fn laplace_matrices() {
        let (_, sys) = laplace(2);
        assert_eq!(sys.main(), &[4.0]);
        let (_, sys) = laplace(3);
        assert!(sys.main().iter().all(|d| (d - 6.0).abs() < 1e-13));
        assert!((sys.sub()[0] + 3.0).abs() < 1e-13);
    }

    #[test]
    fn reaction_mass_entry() {
        let mesh = Mesh::uniform(2).unwrap();
        let mut spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1.0);
        spec.reaction = Coefficient::Constant(1.0);
        let sys = assemble_system(&mesh, &spec, 5).unwrap();
        assert!((sys.main()[0] - (4.0 + 1.0 / 3.0)).abs() < 1e-14);

        // the quadrature path agrees with the closed form
        spec.reaction = Coefficient::Variable(Arc::new(|_| 1.0));
        let sys_q = assemble_system(&mesh, &spec, 5).unwrap();
        assert!((sys_q.main()[0] - sys.main()[0]).abs() < 1e-14);
    }

    #[test]
    fn coefficient_violations() {
        let mesh = Mesh::uniform(4).unwrap();
        let mut spec = ProblemSpec::laplacian(Arc::new(|_| 0.0), 1.0);
        spec.diffusion_bound = 0.5;
        spec.diffusion = Coefficient::Variable(Arc::new(|x| if x > 0.6 { 0.1 } else { 1.0 }));
        assert!(matches!(
            assemble_system(&mesh, &spec, 3),
            Err(Error::CoefficientViolation { name: "a", .. })
        ));
        spec.diffusion = Coefficient::Constant(1.0);
        spec.reaction = Coefficient::Variable(Arc::new(|x| x - 0.5));
        assert!(matches!(
            assemble_system(&mesh, &spec, 3),
            Err(Error::CoefficientViolation { name: "d0", .. })
        ));
        assert!(assemble_system(&mesh, &spec, 0).is_err());
    }

    #[test]
    fn tridiagonal_hand_cases() {
        let sys = TridiagonalSystem::new(vec![1.0; 4], vec![0.0; 3]).unwrap();
        assert_eq!(sys.solve(&[1.0, -2.0, 3.0, 4.5]).unwrap(), vec![1.0, -2.0, 3.0, 4.5]);
        let sys = TridiagonalSystem::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let x = sys.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let sys = TridiagonalSystem::new(vec![4.0], vec![]).unwrap();
        assert_eq!(sys.solve(&[0.5]).unwrap(), vec![0.125]);
        assert!(sys.solve(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_pivot_is_reported() {
        let sys = TridiagonalSystem::new(vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(sys.solve(&[1.0, 1.0]), Err(Error::SingularSystem { row: 1 })));
        assert!(TridiagonalSystem::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn residual_is_tiny() {
        let (_, sys) = laplace(200);
        let rhs: Vec<f64> = (0..sys.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 1e-3).collect();
        let x = sys.solve(&rhs).unwrap();
        let r = sys.apply(&x);
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + 1.0;
        let res = r.iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(res <= 1e-12 * scale, "{res}");
    }

    #[test]
    fn hat_loads() {
        let mesh = Mesh::uniform(8).unwrap();
        let h = mesh.h();
        for v in quadrature_load(&mesh, |_| 1.0, 1) {
            assert!((v - h).abs() < 1e-15);
        }
        let load = quadrature_load(&mesh, |x| x, 1);
        for (j, v) in load.iter().enumerate() {
            let xj = mesh.nodes()[j + 1];
            assert!((v - h * xj).abs() < 1e-15);
        }
    }

    #[test]
    fn sine_load_matches_closed_form() {
        // ∫ sin(kx) φ_j = (2 sin(k x_j) - sin(k x_{j-1}) - sin(k x_{j+1})) / (k² h)
        let n = 16;
        let mesh = Mesh::uniform(n).unwrap();
        let h = mesh.h();
        let k = 2.0 * std::f64::consts::PI;
        let load = quadrature_load(&mesh, |x| (k * x).sin(), 5);
        for (j, v) in load.iter().enumerate() {
            let x = mesh.nodes()[j + 1];
            let exact = (2.0 * (k * x).sin() - (k * (x - h)).sin() - (k * (x + h)).sin()) / (k * k * h);
            assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        }
    }

    #[test]
    fn solution_operator_nodal_exactness() {
        let (mesh, sys) = laplace(2);
        let zero = apply_sh(&sys, &[0.0], &mesh).unwrap();
        assert_eq!(zero.values(), &[0.0, 0.0, 0.0]);
        let load = quadrature_load(&mesh, |_| 1.0, 5);
        let u = apply_sh(&sys, &load, &mesh).unwrap();
        assert!((u.values()[1] - 0.125).abs() < 1e-15);

        let (mesh, sys) = laplace(4);
        let load = quadrature_load(&mesh, |_| 1.0, 5);
        let u = apply_sh(&sys, &load, &mesh).unwrap();
        for (x, v) in mesh.nodes().iter().zip(u.values()) {
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_pairings() {
        let mesh = Arc::new(Mesh::uniform(6).unwrap());
        let h = mesh.h();
        let hat = |j: usize| {
            let mut v = vec![0.0; 7];
            v[j] = 1.0;
            NodalFunction::from_values(mesh.clone(), v).unwrap()
        };
        assert!((l2_inner(&hat(1), &hat(1)).unwrap() - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((l2_inner(&hat(1), &hat(2)).unwrap() - h / 6.0).abs() < 1e-15);
        assert_eq!(l2_inner(&hat(1), &hat(4)).unwrap(), 0.0);

        let (mesh2, sys) = laplace(2);
        let load = quadrature_load(&mesh2, |_| 1.0, 5);
        let u = apply_sh(&sys, &load, &mesh2).unwrap();
        let got = l2_inner(&u, &u).unwrap();
        assert!((got - 0.125 * 0.125 / 3.0).abs() < 1e-16);

        let other = NodalFunction::zero(Arc::new(Mesh::uniform(3).unwrap()));
        assert!(l2_inner(&u, &other).is_err());
    }

    #[test]
    fn mass_apply_matches_l2_inner() {
        let mesh = Arc::new(Mesh::new(vec![0.0, 0.1, 0.35, 0.6, 1.0]).unwrap());
        let u = NodalFunction::from_values(mesh.clone(), vec![0.0, 1.0, -2.0, 0.5, 0.0]).unwrap();
        let m = mass_apply(&mesh, u.values());
        for j in 1..4 {
            let mut hat = vec![0.0; 5];
            hat[j] = 1.0;
            let hat = NodalFunction::from_values(mesh.clone(), hat).unwrap();
            assert!((m[j - 1] - l2_inner(&u, &hat).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn nodal_function_boundary_checks() {
        let mesh = Arc::new(Mesh::uniform(2).unwrap());
        assert!(NodalFunction::from_values(mesh.clone(), vec![1.0, 0.0, 0.0]).is_err());
        assert!(NodalFunction::from_interior(mesh.clone(), &[1.0, 2.0]).is_err());
        let f = NodalFunction::from_interior(mesh, &[2.0]).unwrap();
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(1.0), 0.0);
    }
}
