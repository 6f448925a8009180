//! Output files: `report.json`, CSV sidecars and `summary.txt`.
//!
//! `report.json` holds no timings, so identical configs give identical
//! bytes. CSV floats carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::asymptotics::{BlowupProfile, ContinuationRecord, SolitonProfile};
use crate::config::Experiment;
use crate::error::Result;
use crate::geometry::GeometryCertificate;
use crate::solve::{PathState, SolutionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InvariantViolation,
    NonConvergence,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InvariantViolation => 1,
            Status::NonConvergence => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsSummary {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub rho: f64,
    pub dim: usize,
    pub extents: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub sweeps: usize,
    pub samples: usize,
    pub max_energy: f64,
    pub climbing: bool,
    pub final_residual: f64,
}

impl PathSummary {
    pub fn of(path: &PathState) -> Self {
        Self {
            sweeps: path.sweeps,
            samples: path.len(),
            max_energy: path.max_energy(),
            climbing: path.climbing,
            final_residual: path.residual_history.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolitonSummary {
    #[serde(flatten)]
    pub profile: SolitonProfile,
    pub decreasing: bool,
    pub tail_ratio: f64,
    /// One-dimensional closed form, when available.
    pub closed_form_u0: Option<f64>,
    pub closed_form_sup_error: Option<f64>,
}

/// Sweep-level trends along the last three steps of a mass sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTrends {
    pub gap_decreasing_last3: Option<bool>,
    pub sup_distance_decreasing_last3: Option<bool>,
    pub lambda_decades: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: Experiment,
    pub status: Status,
    pub violations: Vec<String>,
    pub error: Option<String>,
    pub threads: usize,
    pub seed: u64,
    pub params: Option<ParamsSummary>,
    pub cstar: Option<f64>,
    pub certificate: Option<GeometryCertificate>,
    pub path: Option<PathSummary>,
    #[serde(flatten)]
    pub record: Option<SolutionRecord>,
    pub blowup: Option<BlowupProfile>,
    pub continuation: Option<ContinuationRecord>,
    pub blowup_sweep: Vec<BlowupProfile>,
    pub trends: Option<SweepTrends>,
    pub soliton: Option<SolitonSummary>,
}

impl Report {
    pub fn new(experiment: Experiment, threads: usize, seed: u64) -> Self {
        Self {
            experiment,
            status: Status::Ok,
            violations: Vec::new(),
            error: None,
            threads,
            seed,
            params: None,
            cstar: None,
            certificate: None,
            path: None,
            record: None,
            blowup: None,
            continuation: None,
            blowup_sweep: Vec::new(),
            trends: None,
            soliton: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `{:.16e}`: 17 significant digits, round-trips every finite double.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with a header row; every cell is preformatted.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn floats(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
        self.row(&cells);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// One row per step: `param, level, lambda, e, b_e, morse, residual,
/// mass/multiplier/energy defects, h1_dist_prev, h1_dist_final`.
pub fn continuation_csv(rec: &ContinuationRecord) -> Csv {
    let mut csv = Csv::new(&[
        "param",
        "level",
        "lambda",
        "e",
        "b_e",
        "morse",
        "residual",
        "mass_defect",
        "multiplier_defect",
        "energy_identity_defect",
        "h1_dist_prev",
        "h1_dist_final",
    ]);
    for s in &rec.steps {
        csv.row(&[
            fmt_float(s.param),
            fmt_float(s.level),
            fmt_float(s.lambda),
            fmt_float(s.e),
            fmt_float(s.b_e),
            s.morse_index.map(|m| m.to_string()).unwrap_or_default(),
            fmt_float(s.residual),
            fmt_float(s.mass_defect),
            fmt_float(s.multiplier_defect),
            fmt_float(s.energy_identity_defect),
            opt(s.h1_dist_prev),
            opt(s.h1_dist_final),
        ]);
    }
    csv
}

pub fn blowup_csv(bp: &BlowupProfile, dim: usize) -> Csv {
    let mut csv = if dim == 1 {
        Csv::new(&["y", "u_rescaled", "u_soliton"])
    } else {
        Csv::new(&["y1", "y2", "u_rescaled", "u_soliton"])
    };
    for (y, ur, us) in &bp.samples {
        if dim == 1 {
            csv.floats(&[y[0], *ur, *us]);
        } else {
            csv.floats(&[y[0], y[1], *ur, *us]);
        }
    }
    csv
}

pub fn blowup_summary_csv(params: &[f64], profiles: &[BlowupProfile]) -> Csv {
    let mut csv = Csv::new(&[
        "param",
        "u_max",
        "max_point_bound",
        "max_point_ok",
        "e2_over_lambda",
        "predicted_limit",
        "relative_gap",
        "sup_distance",
        "decay_gamma",
        "local_maxima",
    ]);
    for (p, bp) in params.iter().zip(profiles) {
        csv.row(&[
            fmt_float(*p),
            fmt_float(bp.u_max),
            fmt_float(bp.max_point_bound),
            bp.max_point_ok.to_string(),
            fmt_float(bp.e2_over_lambda),
            opt(bp.predicted_limit),
            opt(bp.relative_gap),
            fmt_float(bp.sup_distance),
            opt(bp.decay.map(|d| d.gamma)),
            bp.local_maxima.to_string(),
        ]);
    }
    csv
}

pub fn path_csv(path: &PathState) -> Csv {
    let mut csv = Csv::new(&["sweep", "max_energy", "residual"]);
    for (k, (m, r)) in path.max_history.iter().zip(&path.residual_history).enumerate() {
        csv.row(&[k.to_string(), fmt_float(*m), fmt_float(*r)]);
    }
    csv
}

pub fn field_csv(record: &SolutionRecord) -> Csv {
    let u = record.field();
    let g = u.grid();
    let mut csv = if g.dim() == 1 {
        Csv::new(&["x", "u"])
    } else {
        Csv::new(&["x", "y", "u"])
    };
    for (k, &v) in u.values().iter().enumerate() {
        let x = g.coord(k);
        if g.dim() == 1 {
            csv.floats(&[x[0], v]);
        } else {
            csv.floats(&[x[0], x[1], v]);
        }
    }
    csv
}

pub fn soliton_csv(prof: &SolitonProfile) -> Csv {
    let mut csv = Csv::new(&["r", "u"]);
    for (r, v) in prof.radii().iter().zip(prof.values()) {
        csv.floats(&[*r, *v]);
    }
    csv
}

/// Human-readable summary; timings live here and nowhere else.
pub fn summary_text(report: &Report, timings: &[(String, f64)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {:?}", report.experiment);
    let _ = writeln!(s, "status: {:?}", report.status);
    if let Some(e) = &report.error {
        let _ = writeln!(s, "error: {e}");
    }
    for v in &report.violations {
        let _ = writeln!(s, "violated: {v}");
    }
    if let Some(p) = &report.params {
        let _ = writeln!(
            s,
            "params: a={} b={} c={:.10e} p={} rho={} dim={} n={:?}",
            p.a, p.b, p.c, p.p, p.rho, p.dim, p.n
        );
    }
    if let Some(cs) = report.cstar {
        let _ = writeln!(s, "cstar: {cs:.10e}");
    }
    if let Some(cert) = &report.certificate {
        let _ = writeln!(
            s,
            "certificate: certified={} lambda1={:.10e} cp={:.6e} alpha0={:.6e} beta={:.6e} c*beta={:.6e}",
            cert.certified, cert.lambda1, cert.cp, cert.alpha0, cert.beta, cert.level_bound
        );
        let m = &cert.margins;
        let _ = writeln!(
            s,
            "  margins: alpha0={:.4e} w1_level={:.4e} w2_gradient={:.4e} w2_level={:.4e} boundary_inf={:.4e}",
            m.alpha0, m.w1_level, m.w2_gradient, m.w2_level, m.boundary_inf
        );
    }
    if let Some(path) = &report.path {
        let _ = writeln!(
            s,
            "path: sweeps={} samples={} max={:.10e} residual={:.3e}",
            path.sweeps, path.samples, path.max_energy, path.final_residual
        );
    }
    if let Some(r) = &report.record {
        let _ = writeln!(s, "level: {:.12e}", r.level);
        let _ = writeln!(s, "lambda: {:.12e}", r.lambda);
        let _ = writeln!(s, "e: {:.12e}", r.e);
        let _ = writeln!(s, "max u: {:.6e}  min u: {:.6e}", r.max_value, r.min_value);
        let d = &r.defects;
        let _ = writeln!(
            s,
            "defects: residual={:.3e} mass={:.3e} multiplier={:.3e} energy_identity={:.3e}",
            d.residual, d.mass, d.multiplier, d.energy_identity
        );
        if let Some(m) = &r.morse {
            let _ = writeln!(s, "morse index (theta={}): {}  spectrum: {:?}", m.theta, m.index, m.eigenvalues);
        }
    }
    if let Some(bp) = &report.blowup {
        let _ = writeln!(
            s,
            "blow-up: u(P)={:.6e} bound={:.6e} ok={} sup_distance={:.4e} gap={:?}",
            bp.u_max, bp.max_point_bound, bp.max_point_ok, bp.sup_distance, bp.relative_gap
        );
    }
    if let Some(c) = &report.continuation {
        let _ = writeln!(s, "continuation {:?}: {} steps, monotone={}", c.axis, c.steps.len(), c.monotone);
        for st in &c.steps {
            let _ = writeln!(
                s,
                "  {:.6e}: level={:.10e} lambda={:.6e} e={:.6e} b*e={:.3e} morse={:?} substeps={}",
                st.param, st.level, st.lambda, st.e, st.b_e, st.morse_index, st.substeps
            );
        }
        for (v, why) in &c.failed {
            let _ = writeln!(s, "  failed at {v:.6e}: {why}");
        }
        if let Some(o) = c.order_fit {
            let _ = writeln!(s, "  fitted order in b: {o:.4}");
        }
    }
    if let Some(t) = &report.trends {
        let _ = writeln!(
            s,
            "trends: gap decreasing (last 3)={:?} sup distance decreasing (last 3)={:?} lambda decades={:?}",
            t.gap_decreasing_last3, t.sup_distance_decreasing_last3, t.lambda_decades
        );
    }
    if let Some(sol) = &report.soliton {
        let _ = writeln!(
            s,
            "soliton: dim={} b={} p={} U0={:.16e} ode_residual={:.3e} closed_form_error={:?}",
            sol.profile.dim, sol.profile.b, sol.profile.p, sol.profile.u0, sol.profile.ode_residual, sol.closed_form_sup_error
        );
    }
    let _ = writeln!(s, "threads: {}", report.threads);
    for (name, secs) in timings {
        let _ = writeln!(s, "time {name}: {secs:.3} s");
    }
    s
}
