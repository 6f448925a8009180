//! Experiment orchestration behind the `run` subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::asymptotics::{
    blowup_diagnose, continue_b, continue_c, continue_rho, soliton_closed_form_1d, solve_soliton,
    BlowupProfile, ContinuationRecord,
};
use crate::config::{Experiment, RunConfig};
use crate::energy::ProblemParams;
use crate::error::{Error, Result};
use crate::geometry::{certify_with_gn, critical_mass, estimate_gn_constant, CertifyOptions, GeometryCertificate};
use crate::par;
use crate::report::{self, ParamsSummary, PathSummary, Report, SolitonSummary, Status, SweepTrends};
use crate::solve::mountain_pass_solve;
use crate::spectral::{dirichlet_eigs, morse_index};

/// Largest Morse index a mountain-pass record may carry.
pub const MORSE_BOUND: usize = 2;

pub struct RunOutcome {
    pub report: Report,
    pub out_dir: PathBuf,
    pub timings: Vec<(String, f64)>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code()
    }
}

/// Map a solver error to the run status it implies.
pub fn status_of(err: &Error) -> Status {
    match err {
        Error::Divergence { .. }
        | Error::EigenNotConverged { .. }
        | Error::SingularJacobian { .. }
        | Error::SolitonBracket { .. }
        | Error::NegativeMass
        | Error::PathGeometry { .. }
        | Error::ZeroField => Status::NonConvergence,
        _ => Status::InvariantViolation,
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    report: Report,
    timings: Vec<(String, f64)>,
    clock: Instant,
}

impl Ctx<'_> {
    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push((name.to_string(), (now - self.clock).as_secs_f64()));
        self.clock = now;
    }

    fn violate(&mut self, what: String) {
        log::error!("invariant violated: {what}");
        self.report.violations.push(what);
    }

    fn write_csv(&self, name: &str, csv: &report::Csv) -> Result<()> {
        csv.write(&self.out.join(name))
    }
}

fn params_summary(p: &ProblemParams) -> ParamsSummary {
    ParamsSummary {
        a: p.a,
        b: p.b,
        c: p.c,
        p: p.p,
        rho: p.rho,
        dim: p.dim(),
        extents: p.grid.extents().to_vec(),
        n: p.grid.n().to_vec(),
    }
}

/// Resolve the mass, estimate `C_p` and `cstar`, and certify the geometry
/// at `params_at(c)`.
fn certify(
    ctx: &mut Ctx,
    params_at: &dyn Fn(f64) -> Result<ProblemParams>,
    c_override: Option<f64>,
) -> Result<(ProblemParams, GeometryCertificate)> {
    let cfg = ctx.cfg;
    let pb = cfg.problem.as_ref().expect("validated");
    let probe = params_at(pb.c.unwrap_or(1.0))?;
    let mode = cfg.solver.execution;
    let gn = estimate_gn_constant(&probe, cfg.seed, mode);
    let lambda1 = dirichlet_eigs(&probe.grid, 1)?[0].value;
    let cstar = critical_mass(probe.dim(), probe.a, probe.p, gn.cp, lambda1);
    ctx.report.cstar = Some(cstar);
    let c = match (c_override, pb.c, pb.c_fraction_of_cstar) {
        (Some(c), _, _) => c,
        (None, Some(c), _) => c,
        (None, None, Some(f)) => f * cstar,
        _ => unreachable!("validated"),
    };
    let params = params_at(c)?;
    ctx.report.params = Some(params_summary(&params));
    let opts = CertifyOptions {
        seed: cfg.seed,
        exploratory: cfg.solver.exploratory,
        mode,
        ..CertifyOptions::default()
    };
    let cert = certify_with_gn(&params, gn, &opts);
    ctx.lap("certify");
    let cert = cert?;
    for v in &cert.violations {
        ctx.violate(format!("certificate: {v}"));
    }
    ctx.report.certificate = Some(cert.clone());
    Ok((params, cert))
}

fn run_solve(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let (params, cert) = certify(ctx, &|c| cfg.params_with_c(c), None)?;
    let solved = mountain_pass_solve(&params, &cert, &cfg.solver);
    ctx.lap("solve");
    let (mut rec, path) = solved?;
    ctx.report.path = Some(PathSummary::of(&path));
    ctx.write_csv("path.csv", &report::path_csv(&path))?;
    for v in rec.violations() {
        ctx.violate(v);
    }
    if cfg.analysis.morse && rec.violations().is_empty() {
        let m = morse_index(&params, &rec, cfg.analysis.theta);
        ctx.lap("morse");
        let m = m?;
        if m.index > MORSE_BOUND {
            ctx.violate(format!("Morse index {} exceeds {MORSE_BOUND}", m.index));
        }
        let mut csv = report::Csv::new(&["k", "eigenvalue"]);
        for (k, mu) in m.eigenvalues.iter().enumerate() {
            csv.row(&[k.to_string(), report::fmt_float(*mu)]);
        }
        ctx.write_csv("morse.csv", &csv)?;
        rec.morse = Some(m);
    }
    if cfg.analysis.blowup && rec.lambda > 0.0 && params.b > 0.0 && rec.violations().is_empty() {
        let sol = solve_soliton(params.b, params.p, params.dim())?;
        let bp = blowup_diagnose(&params, &rec, &sol, cfg.analysis.blowup_radius)?;
        if !bp.max_point_ok {
            ctx.violate(format!(
                "max-point inequality: u(P) = {:.6e} < {:.6e}",
                bp.u_max, bp.max_point_bound
            ));
        }
        ctx.write_csv("blowup.csv", &report::blowup_csv(&bp, params.dim()))?;
        ctx.report.blowup = Some(bp);
        ctx.lap("blowup");
    }
    if cfg.analysis.write_field {
        ctx.write_csv("solution.csv", &report::field_csv(&rec))?;
    }
    ctx.report.record = Some(rec);
    Ok(())
}

fn run_certify(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let (_, cert) = certify(ctx, &|c| cfg.params_with_c(c), None)?;
    let m = &cert.margins;
    let mut csv = report::Csv::new(&["inequality", "margin"]);
    for (name, v) in [
        ("alpha0", m.alpha0),
        ("w1_level", m.w1_level),
        ("w2_gradient", m.w2_gradient),
        ("w2_level", m.w2_level),
        ("boundary_inf", m.boundary_inf),
    ] {
        csv.row(&[name.to_string(), report::fmt_float(v)]);
    }
    ctx.write_csv("certificate.csv", &csv)?;
    if !cert.certified {
        ctx.violate("geometry not certified".into());
    }
    Ok(())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn sweep_trends(profiles: &[BlowupProfile]) -> SweepTrends {
    let last3 = |f: &dyn Fn(&BlowupProfile) -> Option<f64>| -> Option<bool> {
        if profiles.len() < 3 {
            return None;
        }
        let xs: Option<Vec<f64>> = profiles[profiles.len() - 3..].iter().map(f).collect();
        xs.map(|v| strictly_decreasing(&v))
    };
    let lambdas: Vec<f64> = profiles.iter().map(|p| p.lambda).collect();
    let lambda_decades = if lambdas.len() >= 2 {
        let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((hi / lo).log10())
    } else {
        None
    };
    SweepTrends {
        gap_decreasing_last3: last3(&|p| p.relative_gap),
        sup_distance_decreasing_last3: last3(&|p| Some(p.sup_distance)),
        lambda_decades,
    }
}

fn finish_continuation(ctx: &mut Ctx, rec: &ContinuationRecord) -> Result<()> {
    ctx.write_csv("continuation.csv", &report::continuation_csv(rec))?;
    for v in &rec.violations {
        ctx.violate(v.clone());
    }
    for s in &rec.steps {
        if let Some(m) = s.morse_index {
            if m > MORSE_BOUND {
                ctx.violate(format!("Morse index {m} exceeds {MORSE_BOUND} at {}", s.param));
            }
        }
    }
    for a in &rec.anomalies {
        log::warn!("continuation anomaly: {a}");
    }
    Ok(())
}

fn run_sweep(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sweep = cfg.sweep.as_ref().expect("validated");
    let values = sweep.values.clone();
    let first = values[0];
    let copts = cfg.continuation;
    let cont = match cfg.experiment {
        Experiment::SweepRho => {
            let (params, cert) = certify(
                ctx,
                &|c| cfg.params_with_c(c).and_then(|p| p.with_rho(first)),
                None,
            )?;
            continue_rho(&params, &cert, &values, &cfg.solver, &copts)
        }
        Experiment::SweepB => {
            let (params, cert) = certify(ctx, &|c| cfg.params_with_c(c).and_then(|p| p.with_b(first)), None)?;
            continue_b(&params, &cert, &values, &cfg.solver, &copts)
        }
        Experiment::SweepC => {
            // resolve cstar first when the grid is relative to it
            let first_c = if sweep.relative_to_cstar {
                let probe = cfg.params_with_c(1.0)?;
                let gn = estimate_gn_constant(&probe, cfg.seed, cfg.solver.execution);
                let lambda1 = dirichlet_eigs(&probe.grid, 1)?[0].value;
                first * critical_mass(probe.dim(), probe.a, probe.p, gn.cp, lambda1)
            } else {
                first
            };
            let (params, cert) = certify(ctx, &|c| cfg.params_with_c(c), Some(first_c))?;
            let scale = if sweep.relative_to_cstar { cert.cstar } else { 1.0 };
            let masses: Vec<f64> = values.iter().map(|v| v * scale).collect();
            continue_c(&params, &cert, &masses, &cfg.solver, &copts)
        }
        _ => unreachable!(),
    };
    ctx.lap("continuation");
    let cont = cont?;
    finish_continuation(ctx, &cont)?;
    if cfg.experiment == Experiment::SweepC && cfg.analysis.blowup {
        let pb = cfg.problem.as_ref().expect("validated");
        let base = cfg.params_with_c(1.0)?;
        if pb.b > 0.0 {
            let sol = solve_soliton(pb.b, pb.p, base.dim())?;
            let mut profiles = Vec::new();
            let mut params_used = Vec::new();
            for (k, s) in cont.steps.iter().enumerate() {
                let rec = s.record.as_ref().expect("record");
                if !(rec.lambda > 0.0) || !s.violations.is_empty() {
                    continue;
                }
                let p = base.with_c(s.param)?;
                let bp = blowup_diagnose(&p, rec, &sol, cfg.analysis.blowup_radius)?;
                if !bp.max_point_ok {
                    ctx.violate(format!(
                        "max-point inequality at c = {}: u(P) = {:.6e} < {:.6e}",
                        s.param, bp.u_max, bp.max_point_bound
                    ));
                }
                ctx.write_csv(&format!("blowup_{k}.csv"), &report::blowup_csv(&bp, p.dim()))?;
                params_used.push(s.param);
                profiles.push(bp);
            }
            ctx.write_csv("blowup_summary.csv", &report::blowup_summary_csv(&params_used, &profiles))?;
            ctx.report.trends = Some(sweep_trends(&profiles));
            ctx.report.blowup_sweep = profiles;
            ctx.lap("blowup");
        }
    }
    if !cont.failed.is_empty() {
        ctx.report.error = Some(
            cont.failed
                .iter()
                .map(|(v, why)| format!("step {v}: {why}"))
                .collect::<Vec<_>>()
                .join("; "),
        );
        ctx.report.status = Status::NonConvergence;
    }
    ctx.report.continuation = Some(cont);
    Ok(())
}

fn run_soliton(ctx: &mut Ctx) -> Result<()> {
    let sb = ctx.cfg.soliton.as_ref().expect("validated");
    let prof = solve_soliton(sb.b, sb.p, sb.dim);
    ctx.lap("soliton");
    let prof = prof?;
    let (closed_form_u0, closed_form_sup_error) = if sb.dim == 1 {
        let err = prof
            .radii()
            .iter()
            .zip(prof.values())
            .map(|(r, v)| (v - soliton_closed_form_1d(sb.b, sb.p, *r)).abs())
            .fold(0.0, f64::max);
        (Some(soliton_closed_form_1d(sb.b, sb.p, 0.0)), Some(err))
    } else {
        (None, None)
    };
    ctx.write_csv("soliton.csv", &report::soliton_csv(&prof))?;
    let tail_ratio = prof.values().last().copied().unwrap_or(f64::NAN) / prof.u0;
    ctx.report.soliton = Some(SolitonSummary {
        decreasing: prof.is_strictly_decreasing(),
        tail_ratio,
        closed_form_u0,
        closed_form_sup_error,
        profile: prof,
    });
    Ok(())
}

/// Execute a validated configuration, writing every output into `out`.
/// Solver failures are recorded in the report rather than returned; only
/// output I/O errors are returned.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.resolved.json"), cfg.to_json() + "\n")?;
    let mut ctx = Ctx {
        cfg,
        out,
        report: Report::new(cfg.experiment, par::thread_count(), cfg.seed),
        timings: Vec::new(),
        clock: Instant::now(),
    };
    let result = match cfg.experiment {
        Experiment::Certify => run_certify(&mut ctx),
        Experiment::Solve => run_solve(&mut ctx),
        Experiment::SweepRho | Experiment::SweepB | Experiment::SweepC => run_sweep(&mut ctx),
        Experiment::Soliton => run_soliton(&mut ctx),
    };
    if let Err(err) = result {
        if let Error::Io(_) = err {
            return Err(err);
        }
        log::error!("{err}");
        ctx.report.status = status_of(&err);
        ctx.report.error = Some(err.to_string());
    }
    if ctx.report.status == Status::Ok && !ctx.report.violations.is_empty() {
        ctx.report.status = Status::InvariantViolation;
    }
    fs::write(out.join("report.json"), ctx.report.to_json())?;
    fs::write(out.join("summary.txt"), report::summary_text(&ctx.report, &ctx.timings))?;
    Ok(RunOutcome {
        report: ctx.report,
        out_dir: out.to_path_buf(),
        timings: ctx.timings,
    })
}
