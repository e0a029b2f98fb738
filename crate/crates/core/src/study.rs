//! Mesh-refinement studies on the uniform family `n = 2ᵏ − 1`: error norms
//! per level, experimental orders of convergence and CSV/JSON output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{OptimalityReport, Scheme};
use crate::control::{control_distance, JumpControl};
use crate::error::{Error, Result};
use crate::examples::{example1, example2, ExactSolution};
use crate::fem::{Mesh, NodalFunction};
use crate::outer::{solve, Solution, SolverConfig};
use crate::quadrature::{split_at, GaussLegendre};

pub const DEFAULT_SAMPLES_PER_ELEMENT: usize = 20;
pub const DEFAULT_REFERENCE_LEVEL: u32 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Example {
    #[serde(rename = "ex1")]
    Known,
    #[serde(rename = "ex2")]
    Unknown,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Known => "ex1",
            Example::Unknown => "ex2",
        }
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "ex1" => Ok(Example::Known),
            "2" | "ex2" => Ok(Example::Unknown),
            _ => Err(Error::invalid(format!("unknown example `{s}` (expected 1 or 2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "e_q_L1")]
    ControlL1,
    #[serde(rename = "e_q_L2")]
    ControlL2,
    #[serde(rename = "e_u_L2")]
    StateL2,
    #[serde(rename = "e_z_Linf")]
    AdjointSup,
    #[serde(rename = "e_z_grad_Linf")]
    AdjointGradSup,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::ControlL1,
        Metric::ControlL2,
        Metric::StateL2,
        Metric::AdjointSup,
        Metric::AdjointGradSup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ControlL1 => "e_q_L1",
            Metric::ControlL2 => "e_q_L2",
            Metric::StateL2 => "e_u_L2",
            Metric::AdjointSup => "e_z_Linf",
            Metric::AdjointGradSup => "e_z_grad_Linf",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

/// One value per metric, `None` when not computed.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub e_q_L1: Option<f64>,
    pub e_q_L2: Option<f64>,
    pub e_u_L2: Option<f64>,
    pub e_z_Linf: Option<f64>,
    pub e_z_grad_Linf: Option<f64>,
}

impl MetricValues {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.as_array()[m.index()]
    }

    pub fn set(&mut self, m: Metric, v: Option<f64>) {
        match m {
            Metric::ControlL1 => self.e_q_L1 = v,
            Metric::ControlL2 => self.e_q_L2 = v,
            Metric::StateL2 => self.e_u_L2 = v,
            Metric::AdjointSup => self.e_z_Linf = v,
            Metric::AdjointGradSup => self.e_z_grad_Linf = v,
        }
    }

    fn as_array(&self) -> [Option<f64>; 5] {
        [self.e_q_L1, self.e_q_L2, self.e_u_L2, self.e_z_Linf, self.e_z_grad_Linf]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub example: Example,
    pub scheme: Scheme,
    pub k_min: u32,
    pub k_max: u32,
    /// Level of the reference solve; required for the unknown-solution example.
    pub reference_level: Option<u32>,
    pub metrics: Vec<Metric>,
    pub output_dir: Option<PathBuf>,
    pub solver: SolverConfig,
    pub samples_per_element: usize,
    pub jobs: usize,
}

impl StudyConfig {
    pub fn new(example: Example, scheme: Scheme, k_min: u32, k_max: u32) -> Self {
        Self {
            example,
            scheme,
            k_min,
            k_max,
            reference_level: (example == Example::Unknown).then_some(DEFAULT_REFERENCE_LEVEL),
            metrics: Metric::ALL.to_vec(),
            output_dir: None,
            solver: SolverConfig::default(),
            samples_per_element: DEFAULT_SAMPLES_PER_ELEMENT,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(Error::invalid(format!(
                "level range {}..{} must satisfy 2 <= k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if self.k_max > 26 {
            return Err(Error::invalid("levels above 26 are not supported"));
        }
        match (self.example, self.reference_level) {
            (Example::Unknown, None) => {
                return Err(Error::invalid("a reference level is required for example 2"));
            }
            (_, Some(r)) if r <= self.k_max + 2 || r > 26 => {
                return Err(Error::invalid(format!(
                    "reference level {r} must exceed k_max + 2 = {} and be at most 26",
                    self.k_max + 2
                )));
            }
            _ => {}
        }
        if self.samples_per_element < 2 {
            return Err(Error::invalid("at least 2 samples per element are required"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub n: usize,
    #[serde(flatten)]
    pub errors: MetricValues,
    pub outer_iters: usize,
    /// Seconds; not written to files.
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip)]
    pub optimality: Option<OptimalityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub level: u32,
    pub n: usize,
    pub control: JumpControl,
    #[serde(skip)]
    pub optimality: Option<OptimalityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub example: Example,
    pub scheme: Scheme,
    pub rows: Vec<StudyRow>,
    /// `eoc[i]` compares rows `i` and `i + 1`.
    pub eoc: Vec<MetricValues>,
    pub slope_last4: MetricValues,
    pub slope_all: MetricValues,
    pub reference: Option<ReferenceInfo>,
}

impl StudyReport {
    /// Sorts rows by decreasing `h` and derives EOCs and slopes.
    pub fn from_rows(example: Example, scheme: Scheme, mut rows: Vec<StudyRow>, reference: Option<ReferenceInfo>) -> Self {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        let mut eoc = vec![MetricValues::default(); rows.len().saturating_sub(1)];
        let mut slope_last4 = MetricValues::default();
        let mut slope_all = MetricValues::default();
        for m in Metric::ALL {
            for (i, pair) in rows.windows(2).enumerate() {
                if let (Some(e0), Some(e1)) = (pair[0].errors.get(m), pair[1].errors.get(m)) {
                    eoc[i].set(m, Some(eoc_pair(e0, e1, pair[0].h, pair[1].h)));
                }
            }
            let series: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.errors.get(m).map(|e| (r.h, e))).collect();
            slope_all.set(m, least_squares_slope(&series));
            slope_last4.set(m, least_squares_slope(&series[series.len().saturating_sub(4)..]));
        }
        Self {
            example,
            scheme,
            rows,
            eoc,
            slope_last4,
            slope_all,
            reference,
        }
    }

    pub fn series(&self, m: Metric) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.errors.get(m).map(|e| (r.h, e))).collect()
    }
}

/// `log(e0/e1) / log(h0/h1)`.
pub fn eoc_pair(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// Slope of the least-squares line through `(log h, log e)`; `None` with
/// fewer than two usable points.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `‖exact − u_h‖_{L²}` by Gauss quadrature on every element, split at the
/// kinks of `exact`.
pub fn state_error_l2(u_h: &NodalFunction, exact: impl Fn(f64) -> f64, breakpoints: &[f64], quad_order: usize) -> f64 {
    let gl = GaussLegendre::new(quad_order);
    let mut breaks = breakpoints.to_vec();
    breaks.sort_by(f64::total_cmp);
    let nodes = u_h.mesh().nodes();
    let vals = u_h.values();
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let slope = (vals[i + 1] - vals[i]) / (x1 - x0);
        for (a, b) in split_at(x0, x1, &breaks) {
            acc += gl.integrate(a, b, |x| {
                let d = vals[i] + slope * (x - x0) - exact(x);
                d * d
            });
        }
    }
    acc.sqrt()
}

fn check_samples(samples_per_element: usize) -> Result<()> {
    if samples_per_element < 2 {
        return Err(Error::invalid("at least 2 samples per element are required"));
    }
    Ok(())
}

/// `max |z_h − exact_z|` over element endpoints and equispaced interior points.
pub fn adjoint_error_sup(z_h: &NodalFunction, exact_z: impl Fn(f64) -> f64, samples_per_element: usize) -> Result<f64> {
    check_samples(samples_per_element)?;
    let nodes = z_h.mesh().nodes();
    let vals = z_h.values();
    let s = samples_per_element as f64;
    let mut worst: f64 = 0.0;
    for i in 0..nodes.len() - 1 {
        let (x0, w) = (nodes[i], nodes[i + 1] - nodes[i]);
        for j in 0..=samples_per_element {
            let r = j as f64 / s;
            let x = if j == samples_per_element { nodes[i + 1] } else { x0 + r * w };
            let zh = vals[i] * (1.0 - r) + vals[i + 1] * r;
            worst = worst.max((zh - exact_z(x)).abs());
        }
    }
    Ok(worst)
}

/// `max |z_h′ − exact_dz|` with the element slope as the one-sided
/// derivative at each sample of that element.
pub fn adjoint_gradient_error_sup(z_h: &NodalFunction, exact_dz: impl Fn(f64) -> f64, samples_per_element: usize) -> Result<f64> {
    check_samples(samples_per_element)?;
    let nodes = z_h.mesh().nodes();
    let s = samples_per_element as f64;
    let mut worst: f64 = 0.0;
    for i in 0..nodes.len() - 1 {
        let (x0, w) = (nodes[i], nodes[i + 1] - nodes[i]);
        let slope = z_h.slope(i);
        for j in 0..=samples_per_element {
            let x = if j == samples_per_element { nodes[i + 1] } else { x0 + j as f64 / s * w };
            worst = worst.max((slope - exact_dz(x)).abs());
        }
    }
    Ok(worst)
}

enum Target {
    Exact(ExactSolution),
    Reference(Box<Solution>),
}

fn level_mesh(k: u32) -> Result<Mesh> {
    Mesh::uniform((1usize << k) - 1)
}

fn run_level(cfg: &StudyConfig, spec: &crate::fem::ProblemSpec, target: &Target, k: u32) -> Result<StudyRow> {
    let mesh = level_mesh(k)?;
    let start = Instant::now();
    let sol = solve(spec, &mesh, &cfg.solver, cfg.scheme)?;
    let wall_time = start.elapsed().as_secs_f64();
    let mut errors = MetricValues::default();
    let samples = cfg.samples_per_element;
    for &m in &cfg.metrics {
        let v = match (m, target) {
            (Metric::ControlL1, Target::Exact(ex)) => control_distance(&sol.control, &ex.control, 1)?,
            (Metric::ControlL1, Target::Reference(r)) => control_distance(&sol.control, &r.control, 1)?,
            (Metric::ControlL2, Target::Exact(ex)) => control_distance(&sol.control, &ex.control, 2)?,
            (Metric::ControlL2, Target::Reference(r)) => control_distance(&sol.control, &r.control, 2)?,
            (Metric::StateL2, Target::Exact(ex)) => {
                state_error_l2(&sol.state, |x| ex.state(x), &ex.breakpoints(), cfg.solver.quad_order)
            }
            (Metric::StateL2, Target::Reference(r)) => {
                state_error_l2(&sol.state, |x| r.state.eval(x), r.mesh().nodes(), cfg.solver.quad_order)
            }
            (Metric::AdjointSup, Target::Exact(ex)) => adjoint_error_sup(&sol.adjoint, |x| ex.adjoint(x), samples)?,
            (Metric::AdjointSup, Target::Reference(r)) => adjoint_error_sup(&sol.adjoint, |x| r.adjoint.eval(x), samples)?,
            (Metric::AdjointGradSup, Target::Exact(ex)) => {
                adjoint_gradient_error_sup(&sol.adjoint, |x| ex.adjoint_derivative(x), samples)?
            }
            (Metric::AdjointGradSup, Target::Reference(r)) => {
                let z = &r.adjoint;
                adjoint_gradient_error_sup(&sol.adjoint, |x| z.slope(z.mesh().locate(x)), samples)?
            }
        };
        errors.set(m, Some(v));
    }
    Ok(StudyRow {
        h: mesh.h(),
        n: mesh.element_count(),
        errors,
        outer_iters: sol.outer_iterations,
        wall_time,
        optimality: Some(sol.optimality.clone()),
    })
}

/// Solves every level (concurrently with `jobs > 1`) and assembles the
/// report. The unknown-solution example first solves its reference level
/// with the same scheme. Output does not depend on `jobs`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let (spec, target, reference) = match cfg.example {
        Example::Known => {
            let (spec, exact) = example1();
            (spec, Target::Exact(exact), None)
        }
        Example::Unknown => {
            let spec = example2();
            let level = cfg.reference_level.expect("validated");
            let wrap = |e| Error::StudyLevel {
                level,
                source: Box::new(e),
            };
            let mesh = level_mesh(level).map_err(wrap)?;
            let sol = solve(&spec, &mesh, &cfg.solver, cfg.scheme).map_err(wrap)?;
            let info = ReferenceInfo {
                level,
                n: mesh.element_count(),
                control: sol.control.clone(),
                optimality: Some(sol.optimality.clone()),
            };
            (spec, Target::Reference(Box::new(sol)), Some(info))
        }
    };

    let levels: Vec<u32> = (cfg.k_min..=cfg.k_max).collect();
    let per_level = |k: u32| {
        run_level(cfg, &spec, &target, k).map_err(|e| Error::StudyLevel {
            level: k,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<StudyRow>> = if cfg.jobs == 1 {
        levels.iter().map(|&k| per_level(k)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::SolverFailure(format!("thread pool: {e}")))?;
        pool.install(|| levels.par_iter().map(|&k| per_level(k)).collect())
    };
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(StudyReport::from_rows(cfg.example, cfg.scheme, rows, reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// `{example}_{scheme}_study.{csv|json}`.
pub fn file_name(example: Example, scheme: Scheme, format: Format) -> String {
    format!("{}_{}_study.{}", example.name(), scheme.name(), format.extension())
}

/// Seventeen significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn csv_header() -> String {
    let mut cols = vec!["h".to_string(), "n".to_string()];
    cols.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    cols.extend(Metric::ALL.iter().map(|m| m.name().replacen("e_", "eoc_", 1)));
    cols.push("outer_iters".into());
    cols.join(",")
}

pub fn to_csv(report: &StudyReport) -> String {
    let mut out = csv_header();
    out.push('\n');
    for (i, row) in report.rows.iter().enumerate() {
        let eoc = if i == 0 { MetricValues::default() } else { report.eoc[i - 1] };
        let mut fields = vec![format_real(row.h), row.n.to_string()];
        fields.extend(Metric::ALL.iter().map(|&m| opt(row.errors.get(m))));
        fields.extend(Metric::ALL.iter().map(|&m| opt(eoc.get(m))));
        fields.push(row.outer_iters.to_string());
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn to_json(report: &StudyReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::SolverFailure(format!("serializing report: {e}")))
}

pub fn emit(report: &StudyReport, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(report),
        Format::Json => to_json(report)? + "\n",
    };
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes both formats into `dir` under the standard names.
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for format in [Format::Csv, Format::Json] {
        let path = dir.join(file_name(report.example, report.scheme, format));
        emit(report, format, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
