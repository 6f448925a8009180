//! Mountain-pass critical points of `J_ρ` on the mass sphere.
//!
//! The outer loop is a string method: interior path samples take
//! preconditioned constrained descent steps and are retracted onto the
//! sphere, then the path is redistributed by L² arclength. Once the maximum
//! settles, the top sample climbs along the path tangent towards the saddle.
//! The top sample is then polished by Newton's method on the bordered
//! Euler–Lagrange system.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{energy, gradient, HessianAt, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::{inner_l2, norm_l2, norm_l2_sq, Field, Grid};
use crate::linalg::{gmres, KrylovOptions};
use crate::par::{self, Execution};
use crate::poisson::DirichletSolver;
use crate::spectral::MorseReport;
use crate::sphere::SphereOps;

/// Residual bound of an accepted record, relative to `max(1, ‖J'(u)‖)`.
pub const RECORD_RESIDUAL_TOL: f64 = 1e-8;
pub const RECORD_MASS_TOL: f64 = 1e-10;
pub const RECORD_IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub samples: usize,
    /// Upper bound for the sample count reached by adaptive doubling.
    pub max_samples: usize,
    pub step: f64,
    pub max_sweeps: usize,
    /// Stop once the top sample's relative constrained residual is below this.
    pub tol: f64,
    /// Allowed rise of the maximum energy per sweep, relative to `cβ`.
    pub slack: f64,
    /// Allowed rise of the redistributed maximum per sweep, relative to
    /// `cβ`. `None` disables the check.
    pub max_rise: Option<f64>,
    /// Refine when a neighbour of the top sample differs from it by more
    /// than this fraction of `cβ`.
    pub refine_fraction: f64,
    pub climb: bool,
    /// Sweeps of plain descent before the top sample starts climbing.
    pub climb_after: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            samples: 33,
            max_samples: 257,
            step: 0.8,
            max_sweeps: 5000,
            tol: 1e-3,
            slack: 1e-8,
            max_rise: None,
            refine_fraction: 0.01,
            climb: true,
            climb_after: 25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// A stalled line search below this residual counts as converged.
    pub stall_tol: f64,
    /// Keep iterates even under the domain reflections. Removes the
    /// near-null translation mode of concentrated profiles.
    pub symmetric: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iters: 50,
            stall_tol: 1e-9,
            symmetric: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovConfig {
    pub tol: f64,
    pub restart: usize,
    pub max_restarts: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        let k = KrylovOptions::default();
        Self {
            tol: k.tol,
            restart: k.restart,
            max_restarts: k.max_restarts,
        }
    }
}

impl KrylovConfig {
    pub fn options(&self) -> KrylovOptions {
        KrylovOptions {
            tol: self.tol,
            restart: self.restart,
            max_restarts: self.max_restarts,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub path: PathConfig,
    pub newton: NewtonConfig,
    pub krylov: KrylovConfig,
    pub exploratory: bool,
    pub execution: Execution,
}

#[derive(Debug, Clone)]
pub struct PathState {
    pub samples: Vec<Field>,
    pub energies: Vec<f64>,
    pub argmax: usize,
    /// `cβ` from the certificate; scales refinement and slack.
    pub level_scale: f64,
    pub climbing: bool,
    pub step: f64,
    pub sweeps: usize,
    /// Maximum sampled energy after each accepted sweep.
    pub max_history: Vec<f64>,
    /// Relative constrained residual of the top sample after each sweep.
    pub residual_history: Vec<f64>,
    /// Maximum energy after the descent step, before redistribution.
    pub descent_max: f64,
}

fn argmax_of(energies: &[f64]) -> usize {
    let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-12 * top.abs().max(1.0);
    energies
        .iter()
        .position(|&e| e >= top - tie)
        .unwrap_or(0)
}

impl PathState {
    pub fn new(params: &ProblemParams, samples: Vec<Field>, level_scale: f64) -> Result<Self> {
        let sphere = SphereOps::new(params);
        for s in &samples {
            if sphere.mass_defect(s) > 1e-10 {
                return Err(Error::OffSphere {
                    defect: sphere.mass_defect(s),
                });
            }
        }
        let energies = samples
            .iter()
            .map(|s| energy(params, s).map(|r| r.j_rho))
            .collect::<Result<Vec<_>>>()?;
        let argmax = argmax_of(&energies);
        Ok(Self {
            samples,
            energies,
            argmax,
            level_scale,
            climbing: false,
            step: 0.0,
            sweeps: 0,
            max_history: Vec::new(),
            residual_history: Vec::new(),
            descent_max: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_energy(&self) -> f64 {
        self.energies[self.argmax]
    }

    pub fn top(&self) -> &Field {
        &self.samples[self.argmax]
    }

    fn check_geometry(&self) -> Result<()> {
        let m = self.len();
        let interior = self.energies[1..m - 1]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let endpoint = self.energies[0].max(self.energies[m - 1]);
        if endpoint >= interior {
            return Err(Error::PathGeometry { endpoint, interior });
        }
        Ok(())
    }
}

/// Relative constrained residual `‖P_u J'(u)‖ / max(1, ‖J'(u)‖)`.
pub fn relative_residual(params: &ProblemParams, u: &Field) -> Result<f64> {
    let g = gradient(params, u)?;
    let pg = SphereOps::new(params).project_tangent(u, &g)?;
    Ok(norm_l2(&pg) / norm_l2(&g).max(1.0))
}

/// `A = κ(−Δ) + σ + 2b wwᵀ` with `w = −Δu`: the Hessian without the
/// local potential, inverted by the fast solver plus Sherman–Morrison.
struct Preconditioner<'a> {
    solver: &'a DirichletSolver,
    grid: &'a Grid,
    kappa: f64,
    sigma: f64,
    b2: f64,
    w: Vec<f64>,
    aw: Vec<f64>,
    waw: f64,
}

impl<'a> Preconditioner<'a> {
    fn new(params: &'a ProblemParams, solver: &'a DirichletSolver, u: &Field, sigma: f64) -> Self {
        let grid = params.grid.as_ref();
        let w: Vec<f64> = grid.laplacian_vec(u.values()).iter().map(|v| -v).collect();
        let kappa = params.kappa(grid.dot(u.values(), &w));
        let aw = solver.solve_shifted(kappa, sigma, &w);
        let waw = grid.dot(&w, &aw);
        Self {
            solver,
            grid: params.grid.as_ref(),
            kappa,
            sigma,
            b2: 2.0 * params.b,
            w,
            aw,
            waw,
        }
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut x = self.solver.solve_shifted(self.kappa, self.sigma, r);
        let s = self.b2 * self.grid.dot(&self.w, &x) / (1.0 + self.b2 * self.waw);
        for (xi, awi) in x.iter_mut().zip(&self.aw) {
            *xi -= s * awi;
        }
        x
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let lap = self.grid.laplacian_vec(v);
        let s = self.b2 * self.grid.dot(&self.w, v);
        lap.iter()
            .zip(v)
            .zip(&self.w)
            .map(|((l, x), w)| -self.kappa * l + self.sigma * x + s * w)
            .collect()
    }
}

struct Direction {
    d: Vec<f64>,
    /// `A d`, kept for A-inner products with the tangent
    ad: Vec<f64>,
}

/// Preconditioned constrained descent direction at `u`:
/// `A⁻¹g − s A⁻¹u` with `⟨u, d⟩ = 0`, `σ = max(λ, 0)`.
fn descent_direction(pre: &Preconditioner, g: &Field, u: &Field) -> Direction {
    let grid = pre.grid;
    let ag = pre.solve(g.values());
    let au = pre.solve(u.values());
    let s = grid.dot(u.values(), &ag) / grid.dot(u.values(), &au);
    let d: Vec<f64> = ag.iter().zip(&au).map(|(x, y)| x - s * y).collect();
    // A d = g − s u
    let ad: Vec<f64> = g.values().iter().zip(u.values()).map(|(x, y)| x - s * y).collect();
    Direction { d, ad }
}

fn arclength_resample(
    sphere: &SphereOps,
    samples: &[Field],
    count: usize,
) -> Result<Vec<Field>> {
    let m = samples.len();
    if count == m && m <= 2 {
        return Ok(samples.to_vec());
    }
    let mut s = vec![0.0; m];
    for i in 1..m {
        s[i] = s[i - 1] + norm_l2(&samples[i].axpy(-1.0, &samples[i - 1])?);
    }
    let total = s[m - 1];
    let mut out = Vec::with_capacity(count);
    out.push(samples[0].clone());
    let mut seg = 0;
    for k in 1..count - 1 {
        let target = total * k as f64 / (count - 1) as f64;
        while seg + 2 < m && s[seg + 1] < target {
            seg += 1;
        }
        let len = s[seg + 1] - s[seg];
        let t = if len > 0.0 { ((target - s[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(sphere.normalize(&samples[seg].combine(1.0 - t, t, &samples[seg + 1])?)?);
    }
    out.push(samples[m - 1].clone());
    Ok(out)
}

/// Redistribute by arclength. A climbing sample is pinned, and the two
/// sub-strings on either side are redistributed separately.
fn reparametrize(
    sphere: &SphereOps,
    samples: &[Field],
    pinned: Option<usize>,
    count: usize,
) -> Result<(Vec<Field>, Option<usize>)> {
    match pinned {
        Some(ci) if ci > 0 && ci + 1 < samples.len() => {
            let m = samples.len();
            // keep the pin's relative position when the count changes
            let left_n = ((ci as f64 / (m - 1) as f64) * (count - 1) as f64).round() as usize;
            let left_n = left_n.clamp(1, count - 2);
            let left = arclength_resample(sphere, &samples[..=ci], left_n + 1)?;
            let right = arclength_resample(sphere, &samples[ci..], count - left_n)?;
            let mut out = left;
            out.extend(right.into_iter().skip(1));
            Ok((out, Some(left_n)))
        }
        _ => Ok((arclength_resample(sphere, samples, count)?, None)),
    }
}

/// One sweep of the string method.
pub fn deform_path(params: &ProblemParams, path: &PathState, cfg: &SolverConfig) -> Result<PathState> {
    let m = path.len();
    if m < 3 {
        return Err(Error::InvalidParams("path needs interior samples".into()));
    }
    let sphere = SphereOps::new(params);
    let solver = DirichletSolver::new(&params.grid);
    let step = if path.step > 0.0 { path.step } else { cfg.path.step };
    let climb = if path.climbing { Some(path.argmax) } else { None };
    let moved: Vec<Result<Field>> = par::map_range(cfg.execution, m, |i| {
        let u = &path.samples[i];
        if i == 0 || i + 1 == m {
            return Ok(u.clone());
        }
        let g = gradient(params, u)?;
        let lambda = -inner_l2(&g, u)? / params.c;
        let pre = Preconditioner::new(params, &solver, u, lambda.max(0.0));
        let dir = descent_direction(&pre, &g, u);
        let mut d = dir.d;
        if climb == Some(i) {
            // reflect the component along the path tangent (A-metric)
            let t = sphere.project_tangent(u, &path.samples[i + 1].axpy(-1.0, &path.samples[i - 1])?)?;
            let at = pre.apply(t.values());
            let tat = params.grid.dot(t.values(), &at);
            if tat > 0.0 {
                let coef = params.grid.dot(&dir.ad, t.values()) / tat;
                for (dk, tk) in d.iter_mut().zip(t.values()) {
                    *dk -= 2.0 * coef * tk;
                }
            }
        }
        let trial = |t: f64| -> Result<Field> {
            let next: Vec<f64> = u.values().iter().zip(&d).map(|(x, y)| x - t * y).collect();
            sphere.normalize(&u.with_values(next))
        };
        if climb == Some(i) {
            return trial(step);
        }
        // Armijo backtracking on J_ρ along the retracted direction
        let j0 = path.energies[i];
        let slope = params.grid.dot(&dir.ad, &d);
        let mut t = step;
        for _ in 0..40 {
            let cand = trial(t)?;
            if energy(params, &cand)?.j_rho <= j0 - 1e-4 * t * slope {
                return Ok(cand);
            }
            t *= 0.5;
        }
        Ok(u.clone())
    });
    let moved = moved.into_iter().collect::<Result<Vec<_>>>()?;
    let descent_max = par::map(cfg.execution, &moved[1..m - 1], |f| energy(params, f).map(|r| r.j_rho))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let energies_of = |s: &[Field]| -> Result<Vec<f64>> {
        let v = par::map(cfg.execution, s, |f| energy(params, f).map(|r| r.j_rho));
        v.into_iter().collect()
    };
    let (mut samples, pin) = reparametrize(&sphere, &moved, climb, m)?;
    let mut energies = energies_of(&samples)?;
    // refine around the top when the neighbours differ too much
    let mut argmax = pin.unwrap_or_else(|| argmax_of(&energies));
    let jump = |e: &[f64], k: usize| -> f64 {
        let mut j: f64 = 0.0;
        if k > 0 {
            j = j.max((e[k] - e[k - 1]).abs());
        }
        if k + 1 < e.len() {
            j = j.max((e[k] - e[k + 1]).abs());
        }
        j
    };
    let mut pinned = pin;
    while path.climbing
        && jump(&energies, argmax) > cfg.path.refine_fraction * path.level_scale
        && 2 * samples.len() - 1 <= cfg.path.max_samples
    {
        let count = 2 * samples.len() - 1;
        let (s2, p2) = reparametrize(&sphere, &samples, pinned, count)?;
        samples = s2;
        pinned = p2;
        energies = energies_of(&samples)?;
        argmax = pinned.unwrap_or_else(|| argmax_of(&energies));
    }
    argmax = argmax_of(&energies);
    let mut next = PathState {
        samples,
        energies,
        argmax,
        level_scale: path.level_scale,
        climbing: path.climbing,
        step,
        sweeps: path.sweeps + 1,
        max_history: path.max_history.clone(),
        residual_history: path.residual_history.clone(),
        descent_max,
    };
    next.check_geometry()?;
    next.max_history.push(next.max_energy());
    let r = relative_residual(params, next.top())?;
    next.residual_history.push(r);
    Ok(next)
}

/// Run sweeps until the top sample's relative residual reaches `cfg.path.tol`.
pub fn relax_path(params: &ProblemParams, path: PathState, cfg: &SolverConfig) -> Result<PathState> {
    let mut path = path;
    path.check_geometry()?;
    if path.step <= 0.0 {
        path.step = cfg.path.step;
    }
    let slack = cfg.path.slack * path.level_scale.abs().max(f64::MIN_POSITIVE);
    let mut calm = 0;
    let mut last = f64::INFINITY;
    for _ in 0..cfg.path.max_sweeps {
        let candidate = match deform_path(params, &path, cfg) {
            Ok(c) => c,
            Err(Error::PathGeometry { .. }) | Err(Error::ZeroField) if path.step > 1e-6 => {
                path.step *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        // large jumps of the redistributed max signal a step that is too long
        let jumped = cfg.path.max_rise.is_some_and(|r| {
            candidate.max_energy() > path.max_energy() + r * path.level_scale.abs() && path.step > 1e-3 * cfg.path.step
        });
        let rose = candidate.descent_max > path.max_energy() + slack || jumped;
        if rose && !path.climbing {
            path.step *= 0.5;
            if path.step < 1e-8 {
                return Err(Error::Divergence {
                    iterations: path.sweeps,
                    residual: path.residual_history.last().copied().unwrap_or(f64::NAN),
                });
            }
            continue;
        }
        path = candidate;
        let r = *path.residual_history.last().expect("sweep records a residual");
        log::debug!(
            "sweep {} samples {} step {:.3e} max {:.12e} residual {:.3e} climbing {}",
            path.sweeps,
            path.len(),
            path.step,
            path.max_energy(),
            r,
            path.climbing
        );
        if r <= cfg.path.tol {
            return Ok(path);
        }
        if cfg.path.climb && !path.climbing {
            let change = (last - path.max_energy()).abs();
            calm = if change <= 1e-6 * path.level_scale.abs() { calm + 1 } else { 0 };
            if calm >= 3 || path.sweeps >= cfg.path.climb_after {
                path.climbing = true;
            }
        }
        last = path.max_energy();
        path.step = (path.step * 1.05).min(cfg.path.step);
    }
    Err(Error::Divergence {
        iterations: path.sweeps,
        residual: path.residual_history.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefects {
    /// `|∫u² − c| / c`
    pub mass: f64,
    /// `‖P_u J'(u)‖ / max(1, ‖J'(u)‖)`
    pub residual: f64,
    /// `λc = ρ∫|u|^p − ae − be²`, relative
    pub multiplier: f64,
    /// `(1/2 − 1/p)ae + (1/4 − 1/p)be² = cλ/p + J_ρ(u)`, relative
    pub energy_identity: f64,
    /// `λ` versus `−⟨J'(u), u⟩/c`, relative
    pub lambda_consistency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(skip)]
    pub u: Option<Field>,
    pub lambda: f64,
    pub e: f64,
    pub level: f64,
    /// `‖P_u J'(u)‖`
    pub residual: f64,
    pub gradient_norm: f64,
    pub lp: f64,
    pub rho: f64,
    pub b: f64,
    pub c: f64,
    pub max_value: f64,
    pub min_value: f64,
    pub positivity_ok: bool,
    pub defects: IdentityDefects,
    pub morse: Option<MorseReport>,
    pub newton_iterations: usize,
    pub newton_history: Vec<f64>,
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let s = scale.max(f64::MIN_POSITIVE);
    (a - b).abs() / s
}

impl SolutionRecord {
    /// Evaluate all derived quantities of `(u, λ)`.
    pub fn evaluate(params: &ProblemParams, u: Field, lambda: f64) -> Result<Self> {
        let rep = energy(params, &u)?;
        let g = gradient(params, &u)?;
        let sphere = SphereOps::new(params);
        let pg = g.axpy(-inner_l2(&g, &u)? / norm_l2_sq(&u), &u)?;
        let residual = norm_l2(&pg);
        let gnorm = norm_l2(&g);
        let (a, b, c, p, rho) = (params.a, params.b, params.c, params.p, params.rho);
        let e = rep.e;
        let lhs_mult = lambda * c;
        let rhs_mult = rho * rep.lp - a * e - b * e * e;
        let mult_scale = lhs_mult.abs().max(rho * rep.lp).max(a * e + b * e * e);
        let lhs_en = (0.5 - 1.0 / p) * a * e + (0.25 - 1.0 / p) * b * e * e;
        let rhs_en = c * lambda / p + rep.j_rho;
        let en_scale = lhs_en.abs().max((c * lambda / p).abs()).max(rep.j_rho.abs());
        let rayleigh = -inner_l2(&g, &u)? / c;
        let defects = IdentityDefects {
            mass: sphere.mass_defect(&u),
            residual: residual / gnorm.max(1.0),
            multiplier: rel(lhs_mult, rhs_mult, mult_scale),
            energy_identity: rel(lhs_en, rhs_en, en_scale),
            lambda_consistency: rel(lambda, rayleigh, lambda.abs().max(rayleigh.abs())),
        };
        let min_value = u.min_value();
        let max_value = u.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            lambda,
            e,
            level: rep.j_rho,
            residual,
            gradient_norm: gnorm,
            lp: rep.lp,
            rho,
            b,
            c,
            max_value,
            min_value,
            positivity_ok: min_value > 0.0,
            defects,
            morse: None,
            newton_iterations: 0,
            newton_history: Vec::new(),
            u: Some(u),
        })
    }

    pub fn field(&self) -> &Field {
        self.u.as_ref().expect("record carries its field")
    }

    /// Names of the violated invariants; empty when the record is valid.
    pub fn violations(&self) -> Vec<String> {
        let d = &self.defects;
        let mut v = Vec::new();
        if !(d.residual <= RECORD_RESIDUAL_TOL) {
            v.push(format!("constrained residual {:.3e} > {RECORD_RESIDUAL_TOL:e}", d.residual));
        }
        if !(d.mass <= RECORD_MASS_TOL) {
            v.push(format!("mass defect {:.3e} > {RECORD_MASS_TOL:e}", d.mass));
        }
        if !(d.multiplier <= RECORD_IDENTITY_TOL) {
            v.push(format!("multiplier identity defect {:.3e}", d.multiplier));
        }
        if !(d.energy_identity <= RECORD_IDENTITY_TOL) {
            v.push(format!("energy identity defect {:.3e}", d.energy_identity));
        }
        if !self.positivity_ok {
            v.push(format!("positivity: min u = {:.3e}", self.min_value));
        }
        v
    }

    pub fn check_invariants(&self, params: &ProblemParams) -> Result<()> {
        if self.u.as_ref().map(|u| **u.grid() != *params.grid).unwrap_or(true) {
            return Err(Error::GridMismatch);
        }
        match self.violations().first() {
            Some(v) => Err(Error::InvariantViolated(v.clone())),
            None => Ok(()),
        }
    }
}

/// Newton residual `‖F‖` split into its parts.
struct Residual {
    f1: Vec<f64>,
    f2: f64,
    merit: f64,
    relative: f64,
}

fn bordered_residual(params: &ProblemParams, u: &Field, lambda: f64) -> Result<Residual> {
    let g = gradient(params, u)?;
    let grid = params.grid.as_ref();
    let f1: Vec<f64> = g.values().iter().zip(u.values()).map(|(gi, ui)| gi + lambda * ui).collect();
    let f2 = 0.5 * (norm_l2_sq(u) - params.c);
    let n1 = grid.dot(&f1, &f1);
    let relative = (n1.sqrt() / norm_l2(&g).max(1.0)).max(f2.abs() / params.c);
    Ok(Residual {
        f1,
        f2,
        merit: n1 + f2 * f2,
        relative,
    })
}

/// Newton on `F(u, λ) = (J_ρ'(u) + λu, (‖u‖² − c)/2)` with the exact
/// bordered Jacobian `[[H_u + λ, u], [uᵀ, 0]]`.
pub fn refine_newton(
    params: &ProblemParams,
    u0: &Field,
    lambda0: f64,
    cfg: &SolverConfig,
) -> Result<SolutionRecord> {
    let grid: &Arc<Grid> = &params.grid;
    let g = grid.as_ref();
    let solver = DirichletSolver::new(grid);
    let kopts = cfg.krylov.options();
    let mut u = if cfg.newton.symmetric { u0.symmetrized() } else { u0.clone() };
    let mut lambda = lambda0;
    let mut res = bordered_residual(params, &u, lambda)?;
    let mut history = vec![res.relative];
    let mut iterations = 0;
    let n = g.len();
    let dot = |x: &[f64], y: &[f64]| g.dot(&x[..n], &y[..n]) + x[n] * y[n];
    while res.relative > cfg.newton.tol {
        if iterations >= cfg.newton.max_iters {
            if res.relative <= cfg.newton.stall_tol {
                break;
            }
            return Err(Error::Divergence {
                iterations,
                residual: res.relative,
            });
        }
        let hess = HessianAt::new(params, &u)?;
        let kappa = hess.kappa();
        let sigma = lambda.max(0.0);
        let uv = u.values();
        let z = solver.solve_shifted(kappa, sigma, uv);
        let uz = g.dot(uv, &z);
        let apply = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n + 1];
            hess.apply_slice(&x[..n], &mut out[..n]);
            for k in 0..n {
                out[k] += lambda * x[k] + x[n] * uv[k];
            }
            out[n] = g.dot(uv, &x[..n]);
            if cfg.newton.symmetric {
                g.symmetrize(&mut out[..n]);
            }
            out
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            let ar = solver.solve_shifted(kappa, sigma, &r[..n]);
            let beta = (g.dot(uv, &ar) - r[n]) / uz;
            let mut out: Vec<f64> = ar.iter().zip(&z).map(|(a, b)| a - beta * b).collect();
            if cfg.newton.symmetric {
                g.symmetrize(&mut out);
            }
            out.push(beta);
            out
        };
        let mut rhs: Vec<f64> = res.f1.iter().map(|v| -v).collect();
        if cfg.newton.symmetric {
            g.symmetrize(&mut rhs);
        }
        rhs.push(-res.f2);
        let sol = gmres(apply, precond, dot, &rhs, &kopts);
        if !sol.converged && sol.relative_residual > 1e-4 {
            return Err(Error::SingularJacobian {
                condition: sol.condition_estimate,
            });
        }
        let (du, dl) = (&sol.x[..n], sol.x[n]);
        let mut s = 1.0;
        let mut sign_flip = false;
        let accepted = loop {
            let trial: Vec<f64> = uv.iter().zip(du).map(|(a, b)| a + s * b).collect();
            let total: f64 = trial.iter().sum();
            let tu = u.with_values(trial);
            if total <= 0.0 || norm_l2_sq(&tu) <= 0.0 {
                sign_flip = true;
            } else {
                let tl = lambda + s * dl;
                let tr = bordered_residual(params, &tu, tl)?;
                if tr.merit <= (1.0 - 2e-4 * s) * res.merit {
                    break Some((tu, tl, tr));
                }
            }
            s *= 0.5;
            if s < 1e-10 {
                break None;
            }
        };
        match accepted {
            Some((tu, tl, tr)) => {
                u = tu;
                lambda = tl;
                res = tr;
            }
            None if res.relative <= cfg.newton.stall_tol => break,
            None if sign_flip => return Err(Error::NegativeMass),
            None => {
                return Err(Error::Divergence {
                    iterations,
                    residual: res.relative,
                })
            }
        }
        iterations += 1;
        log::trace!("newton {iterations}: residual {:.3e} lambda {:.6e}", res.relative, lambda);
        history.push(res.relative);
    }
    if iterations > 0 && u.min_value() <= 0.0 {
        if let Some((pu, pl)) = positivity_polish(params, &solver, &u, lambda)? {
            u = if cfg.newton.symmetric { pu.symmetrized() } else { pu };
            lambda = pl;
        }
    }
    let mut rec = SolutionRecord::evaluate(params, u, lambda)?;
    rec.newton_iterations = iterations;
    rec.newton_history = history;
    Ok(rec)
}

/// One monotone fixed-point step `u ← normalize((κ(−Δ) + λ + s)⁻¹(ρ|u|^{p−1} + s|u|))`.
/// At a solution the map is the identity, and for a nonnegative input the
/// output is strictly positive, which removes roundoff sign noise in the
/// exponentially small tails. Kept only if the residual does not degrade.
fn positivity_polish(
    params: &ProblemParams,
    solver: &DirichletSolver,
    u: &Field,
    lambda: f64,
) -> Result<Option<(Field, f64)>> {
    let g = params.grid.as_ref();
    let e = g.grad_sq(u.values());
    let kappa = params.kappa(e);
    let shift = (-lambda).max(0.0);
    let rhs: Vec<f64> = u
        .values()
        .iter()
        .map(|&x| params.rho * x.abs().powf(params.p - 1.0) + shift * x.abs())
        .collect();
    let next = solver.solve_shifted_monotone(kappa, lambda + shift, &rhs);
    let sphere = SphereOps::new(params);
    let pu = sphere.normalize(&u.with_values(next))?;
    let before = relative_residual(params, u)?;
    let after = relative_residual(params, &pu)?;
    if after > before.max(RECORD_RESIDUAL_TOL * 0.1) {
        return Ok(None);
    }
    let gp = gradient(params, &pu)?;
    let pl = -inner_l2(&gp, &pu)? / params.c;
    Ok(Some((pu, pl)))
}

/// Newton from a guess: normalize, take `|u|`, start from the Rayleigh
/// multiplier.
pub fn solve_from_guess(params: &ProblemParams, guess: &Field, cfg: &SolverConfig) -> Result<SolutionRecord> {
    let sphere = SphereOps::new(params);
    let u0 = sphere.normalize(&guess.abs())?;
    let lambda0 = sphere.multiplier_estimate(&u0)?;
    refine_newton(params, &u0, lambda0, cfg)
}

/// Full pipeline: initial path, string relaxation, Newton at the top sample.
pub fn mountain_pass_solve(
    params: &ProblemParams,
    cert: &crate::geometry::GeometryCertificate,
    cfg: &SolverConfig,
) -> Result<(SolutionRecord, PathState)> {
    if !cert.certified && !cfg.exploratory {
        return Err(Error::GeometryNotCertified {
            c: params.c,
            cstar: cert.cstar,
        });
    }
    let path = crate::geometry::initial_path(params, cert, cfg.path.samples)?;
    let path = relax_path(params, path, cfg)?;
    let rec = solve_from_guess(params, path.top(), cfg)?;
    Ok((rec, path))
}
