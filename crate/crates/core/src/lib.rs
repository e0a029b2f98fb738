//! Optimal control of a one-dimensional elliptic equation with
//! bounded-variation controls and total-variation regularization:
//!
//! `min ½‖u − u_d‖²_{L²} + α‖q′‖_M`  s.t.  `(a u′, w′) + (d₀ u, w) = (q, w)`.
//!
//! Two discretizations are provided. In the variational one only state and
//! adjoint live in the linear finite element space and the optimal control
//! is `a + Σ cᵢ 1_(tᵢ,1)` with free jump points `tᵢ`; in the fully discrete
//! one the control is piecewise constant on the mesh. Both are solved by an
//! outer iteration on the jump points (roots of the adjoint) around a
//! semismooth Newton solve for the offset and jump heights.
//!
//! ```
//! use tvcontrol::{examples, fem::Mesh, outer::{solve_variational, SolverConfig}};
//!
//! let (spec, exact) = examples::example1();
//! let mesh = Mesh::uniform(63).unwrap();
//! let sol = solve_variational(&spec, &mesh, &SolverConfig::default()).unwrap();
//! assert_eq!(sol.control.active_jumps().count(), 3);
//! let err = tvcontrol::control::control_distance(&sol.control, &exact.control, 1).unwrap();
//! assert!(err < 1e-2);
//! ```

pub mod adjoint;
pub mod control;
pub mod error;
pub mod examples;
pub mod fem;
pub mod outer;
pub mod quadrature;
pub mod study;
pub mod subproblem;
pub mod verify;

pub use adjoint::Scheme;
pub use control::JumpControl;
pub use error::{Error, Result};
pub use fem::{Mesh, NodalFunction, ProblemSpec};
pub use outer::{Solution, SolverConfig};
