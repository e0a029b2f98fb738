//! The two benchmark problems, both with `a ≡ 1`, `d₀ ≡ 0`, `α = 10⁻⁵`.
//!
//! Example 1 is manufactured: the control `q̄`, the certificate
//! `Φ̄(x) = α/(2c)·[(1 − cos 4πx) − c(1 − cos 2πx)]` with `c = 12 − 4√8`,
//! `z̄ = Φ̄′` and `u_d = ū + z̄″` are all known in closed form. Example 2 uses
//! `u_d(x) = ½π⁻²(1 − cos 2πx)` and has no closed-form solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::control::JumpControl;
use crate::fem::ProblemSpec;

pub const ALPHA: f64 = 1e-5;

/// `c = 12 − 4√8`.
pub fn ex1_c() -> f64 {
    12.0 - 4.0 * 8.0_f64.sqrt()
}

/// `x_c = arccos(c/4) / 2π ≈ 0.22256`.
pub fn ex1_xc() -> f64 {
    (ex1_c() / 4.0).acos() / (2.0 * PI)
}

/// `u = S(q)` for `−u″ = q`, `u(0) = u(1) = 0` and a jump control `q`.
///
/// With `Q(x) = ∫₀ˣ∫₀ˢ q = a x²/2 + Σ cᵢ (x − tᵢ)₊²/2` the solution is
/// `u(x) = x·Q(1) − Q(x)`, piecewise quadratic and `C¹`.
#[derive(Debug, Clone)]
pub struct LaplaceState {
    control: JumpControl,
    q_at_one: f64,
}

impl LaplaceState {
    pub fn new(control: JumpControl) -> Self {
        let mut s = Self {
            control,
            q_at_one: 0.0,
        };
        s.q_at_one = s.double_integral(1.0);
        s
    }

    fn double_integral(&self, x: f64) -> f64 {
        let mut acc = 0.5 * self.control.offset() * x * x;
        for j in self.control.jumps() {
            if x > j.t {
                acc += 0.5 * j.c * (x - j.t) * (x - j.t);
            }
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        x * self.q_at_one - self.double_integral(x)
    }

    /// `u′(x) = Q(1) − ∫₀ˣ q`.
    pub fn derivative(&self, x: f64) -> f64 {
        let mut first = self.control.offset() * x;
        for j in self.control.jumps() {
            if x > j.t {
                first += j.c * (x - j.t);
            }
        }
        self.q_at_one - first
    }
}

/// Closed-form data of Example 1.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub control: JumpControl,
    pub state: LaplaceState,
    pub alpha: f64,
    c: f64,
}

impl ExactSolution {
    fn scale(&self) -> f64 {
        self.alpha / (2.0 * self.c)
    }

    pub fn phi(&self, x: f64) -> f64 {
        let (c, k) = (self.c, 2.0 * PI * x);
        self.scale() * ((1.0 - (2.0 * k).cos()) - c * (1.0 - k.cos()))
    }

    /// `z̄ = Φ̄′`.
    pub fn adjoint(&self, x: f64) -> f64 {
        let (c, k) = (self.c, 2.0 * PI * x);
        self.scale() * (4.0 * PI * (2.0 * k).sin() - 2.0 * PI * c * k.sin())
    }

    /// `z̄′ = Φ̄″`.
    pub fn adjoint_derivative(&self, x: f64) -> f64 {
        let (c, k) = (self.c, 2.0 * PI * x);
        self.scale() * (16.0 * PI * PI * (2.0 * k).cos() - 4.0 * PI * PI * c * k.cos())
    }

    /// `z̄″ = Φ̄‴`.
    pub fn adjoint_second_derivative(&self, x: f64) -> f64 {
        let (c, k) = (self.c, 2.0 * PI * x);
        let pi3 = PI * PI * PI;
        self.scale() * (-64.0 * pi3 * (2.0 * k).sin() + 8.0 * pi3 * c * k.sin())
    }

    pub fn state(&self, x: f64) -> f64 {
        self.state.eval(x)
    }

    /// `u_d = ū + z̄″`.
    pub fn desired(&self, x: f64) -> f64 {
        self.state.eval(x) + self.adjoint_second_derivative(x)
    }

    /// Kinks of `ū` (the jump positions).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.control.positions()
    }
}

/// Example 1: `q̄ = 0.5 + 1_(x_c,1) − 2·1_(0.5,1) + 1.5·1_(1−x_c,1)`.
pub fn example1() -> (ProblemSpec, ExactSolution) {
    let xc = ex1_xc();
    let control = JumpControl::new(0.5, vec![(xc, 1.0), (0.5, -2.0), (1.0 - xc, 1.5)])
        .expect("example control is valid");
    let exact = ExactSolution {
        state: LaplaceState::new(control.clone()),
        control,
        alpha: ALPHA,
        c: ex1_c(),
    };
    let ex = exact.clone();
    let mut spec = ProblemSpec::laplacian(Arc::new(move |x| ex.desired(x)), ALPHA);
    spec.desired_breakpoints = exact.breakpoints();
    (spec, exact)
}

/// Example 2: `u_d(x) = ½π⁻²(1 − cos 2πx)`.
pub fn example2() -> ProblemSpec {
    ProblemSpec::laplacian(Arc::new(example2_desired), ALPHA)
}

pub fn example2_desired(x: f64) -> f64 {
    0.5 / (PI * PI) * (1.0 - (2.0 * PI * x).cos())
}
