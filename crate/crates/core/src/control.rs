//! BV controls in offset-plus-jumps form `q = a + Σ cᵢ·1_(tᵢ,1)` and
//! piecewise-constant controls on a mesh.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Mesh;

/// Jumps closer than this are merged at construction.
pub const JUMP_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Position in `(0, 1)`.
    pub t: f64,
    /// Height of the step.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJumpControl")]
pub struct JumpControl {
    offset: f64,
    jumps: Vec<Jump>,
}

#[derive(Deserialize)]
struct RawJumpControl {
    offset: f64,
    jumps: Vec<Jump>,
}

impl TryFrom<RawJumpControl> for JumpControl {
    type Error = Error;

    fn try_from(raw: RawJumpControl) -> Result<Self> {
        JumpControl::new(raw.offset, raw.jumps.into_iter().map(|j| (j.t, j.c)).collect())
    }
}

impl JumpControl {
    /// Sorts the jumps by position and merges those within
    /// [`JUMP_MERGE_TOL`]. Zero heights are kept.
    pub fn new(offset: f64, mut jumps: Vec<(f64, f64)>) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::invalid("control offset must be finite"));
        }
        for &(t, c) in &jumps {
            if !(t > 0.0 && t < 1.0) || !c.is_finite() {
                return Err(Error::invalid(format!(
                    "jump ({t}, {c}) must have position in (0, 1) and finite height"
                )));
            }
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<Jump> = Vec::with_capacity(jumps.len());
        for (t, c) in jumps {
            match merged.last_mut() {
                Some(last) if t - last.t < JUMP_MERGE_TOL => last.c += c,
                _ => merged.push(Jump { t, c }),
            }
        }
        Ok(Self { offset, jumps: merged })
    }

    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            jumps: Vec::new(),
        }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn positions(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.t).collect()
    }

    /// Jumps with exactly nonzero height.
    pub fn active_jumps(&self) -> impl Iterator<Item = &Jump> {
        self.jumps.iter().filter(|j| j.c != 0.0)
    }

    /// Value at `x`; at a jump position the right limit is returned.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("evaluation point {x} outside [0, 1]")));
        }
        Ok(self.value_at(x))
    }

    pub(crate) fn value_at(&self, x: f64) -> f64 {
        self.offset + self.jumps.iter().take_while(|j| j.t <= x).map(|j| j.c).sum::<f64>()
    }

    pub fn total_variation(&self) -> f64 {
        self.jumps.iter().map(|j| j.c.abs()).sum()
    }

    /// Breakpoints `0, t_1, …, t_m, 1` and the constant value on each of the
    /// `m + 1` segments between them.
    pub fn segments(&self) -> (Vec<f64>, Vec<f64>) {
        let mut breaks = Vec::with_capacity(self.jumps.len() + 2);
        let mut values = Vec::with_capacity(self.jumps.len() + 1);
        breaks.push(0.0);
        let mut v = self.offset;
        values.push(v);
        for j in &self.jumps {
            breaks.push(j.t);
            v += j.c;
            values.push(v);
        }
        breaks.push(1.0);
        (breaks, values)
    }
}

pub fn total_variation(q: &JumpControl) -> f64 {
    q.total_variation()
}

/// One value per element of `mesh`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.element_count() {
            return Err(Error::invalid("one value per element required"));
        }
        Ok(Self { mesh, values })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// The same function in offset-plus-jumps form, jumps at interior nodes.
    pub fn to_jump_control(&self) -> JumpControl {
        let nodes = self.mesh.nodes();
        let jumps = self
            .values
            .windows(2)
            .enumerate()
            .map(|(i, w)| Jump {
                t: nodes[i + 1],
                c: w[1] - w[0],
            })
            .collect();
        JumpControl {
            offset: self.values[0],
            jumps,
        }
    }
}

/// Sweeps `[0, 1]` over the merged breakpoints of two jump controls, calling
/// `f(len, left_value, right_value)` on every segment.
fn merged_sweep(q1: &JumpControl, q2: &JumpControl, mut f: impl FnMut(f64, f64, f64)) {
    let (mut i, mut k) = (0, 0);
    let (j1, j2) = (q1.jumps(), q2.jumps());
    let (mut v1, mut v2) = (q1.offset, q2.offset);
    let mut left = 0.0;
    loop {
        let next1 = j1.get(i).map_or(1.0, |j| j.t);
        let next2 = j2.get(k).map_or(1.0, |j| j.t);
        let right = next1.min(next2);
        if right > left {
            f(right - left, v1, v2);
        }
        if right >= 1.0 {
            break;
        }
        if next1 == right {
            v1 += j1[i].c;
            i += 1;
        }
        if next2 == right {
            v2 += j2[k].c;
            k += 1;
        }
        left = right;
    }
}

/// Exact `‖q1 − q2‖_{Lᵖ}` for `p ∈ {1, 2}`.
pub fn control_distance(q1: &JumpControl, q2: &JumpControl, p: u32) -> Result<f64> {
    let mut acc = 0.0;
    match p {
        1 => merged_sweep(q1, q2, |len, a, b| acc += len * (a - b).abs()),
        2 => merged_sweep(q1, q2, |len, a, b| acc += len * (a - b) * (a - b)),
        _ => return Err(Error::invalid(format!("unsupported norm exponent {p}"))),
    }
    Ok(if p == 2 { acc.sqrt() } else { acc })
}

/// `∫ q1 q2` for two jump controls.
pub fn control_inner(q1: &JumpControl, q2: &JumpControl) -> f64 {
    let mut acc = 0.0;
    merged_sweep(q1, q2, |len, a, b| acc += len * a * b);
    acc
}

/// Exact `∫ q φ_j` over interior hats, elements split at the jumps.
pub fn load_of_jump_control(mesh: &Mesh, q: &JumpControl) -> Vec<f64> {
    let nodes = mesh.nodes();
    let mut full = vec![0.0; nodes.len()];
    let jumps = q.jumps();
    let mut next = 0;
    let mut value = q.offset;
    for (i, &h) in mesh.widths().iter().enumerate() {
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let mut a = x0;
        loop {
            let b = match jumps.get(next) {
                Some(j) if j.t < x1 => j.t,
                _ => x1,
            };
            if b > a {
                // ∫_a^b (x1 - x)/h and ∫_a^b (x - x0)/h
                let left = ((x1 - a).powi(2) - (x1 - b).powi(2)) / (2.0 * h);
                let right = ((b - x0).powi(2) - (a - x0).powi(2)) / (2.0 * h);
                full[i] += value * left;
                full[i + 1] += value * right;
            }
            if b >= x1 {
                break;
            }
            value += jumps[next].c;
            next += 1;
            a = b;
        }
    }
    full[1..nodes.len() - 1].to_vec()
}

/// Cell averages of `q`.
pub fn project_pi_h(q: &JumpControl, mesh: &Arc<Mesh>) -> PiecewiseConstant {
    let nodes = mesh.nodes();
    let jumps = q.jumps();
    let mut next = 0;
    let mut value = q.offset;
    let values = mesh
        .widths()
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let (x0, x1) = (nodes[i], nodes[i + 1]);
            let mut a = x0;
            let mut integral = 0.0;
            while let Some(j) = jumps.get(next).filter(|j| j.t < x1) {
                integral += value * (j.t - a).max(0.0);
                a = j.t.max(x0);
                value += j.c;
                next += 1;
            }
            integral += value * (x1 - a);
            integral / h
        })
        .collect();
    PiecewiseConstant {
        mesh: mesh.clone(),
        values,
    }
}
