//! Mountain-pass geometry on the mass sphere: a numerical estimate of the
//! Gagliardo–Nirenberg constant `C_p`, the derived constants `c*`, `α₀`,
//! `β`, the endpoints `w₁` (a dilated first eigenfunction, low energy) and
//! `w₂` (a concentrated bump, negative energy), and the straight-line path
//! between them pushed onto the sphere.
//!
//! Every inequality of the certificate is checked on the discrete fields
//! and reported with its margin.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{energy, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, lp_integral, norm_l2_sq, Field, Grid, Point};
use crate::par::{self, Execution};
use crate::solve::PathState;
use crate::spectral::dirichlet_eigs;
use crate::sphere::SphereOps;

/// Safety factor applied to the best empirical GN ratio.
pub const GN_SAFETY: f64 = 2.0;
/// Minimum number of GN trial fields.
pub const GN_MIN_TRIALS: usize = 200;
/// Minimum number of fields sampled on `∂B_{cα₀}`.
pub const BOUNDARY_MIN_SAMPLES: usize = 100;

/// Exponents `(θ₂, θ∇)` of `∫|u|^p ≤ C_p (∫u²)^θ₂ (∫|∇u|²)^θ∇`.
pub fn gn_exponents(dim: usize, p: f64) -> (f64, f64) {
    let n = dim as f64;
    ((2.0 * n - p * (n - 2.0)) / 4.0, n * (p - 2.0) / 4.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GNEstimate {
    pub cp: f64,
    pub best_ratio: f64,
    pub theta_mass: f64,
    pub theta_grad: f64,
    pub trials: usize,
    /// max/min of the ratio over the two-decade width sweep of the
    /// whole-space-shaped profile (reported only).
    pub width_sweep_spread: f64,
}

/// A trial field family for GN sampling and sphere-boundary sampling.
#[derive(Debug, Clone)]
enum Trial {
    /// `sech^{2/(p-2)}(|x − x₀| / w)`, windowed to vanish on `∂Ω`.
    Sech { center: Point, width: f64 },
    /// `exp(−1/(1 − |x − x₀|²/r²))` on the ball of radius `r`.
    Bump { center: Point, radius: f64 },
    /// `Π_k sin^q(m_k π x_k / L_k)`
    EigenPower { q: f64, modes: [usize; 2] },
    /// Random combination of low Dirichlet modes, optionally folded to `|·|`.
    Modes { terms: Vec<([usize; 2], f64)>, fold: bool },
}

fn window(grid: &Grid, x: Point) -> f64 {
    (0..grid.dim())
        .map(|k| (PI * x[k] / grid.extents()[k]).sin())
        .product()
}

fn dist(grid: &Grid, x: Point, c: Point) -> f64 {
    (0..grid.dim())
        .map(|k| (x[k] - c[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn smooth_bump(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

impl Trial {
    fn build(&self, grid: &Arc<Grid>, p: f64) -> Field {
        let g = grid.as_ref();
        match self {
            Trial::Sech { center, width } => {
                let ex = 2.0 / (p - 2.0);
                Field::from_fn(grid, |x| {
                    let r = dist(g, x, *center) / width;
                    (1.0 / r.cosh()).powf(ex) * window(g, x)
                })
            }
            Trial::Bump { center, radius } => Field::from_fn(grid, |x| {
                let s = dist(g, x, *center) / radius;
                smooth_bump(s * s)
            }),
            Trial::EigenPower { q, modes } => Field::from_fn(grid, |x| {
                (0..g.dim())
                    .map(|k| (modes[k] as f64 * PI * x[k] / g.extents()[k]).sin().abs().powf(*q))
                    .product()
            }),
            Trial::Modes { terms, fold } => Field::from_fn(grid, |x| {
                let v: f64 = terms
                    .iter()
                    .map(|(m, a)| {
                        a * (0..g.dim())
                            .map(|k| (m[k] as f64 * PI * x[k] / g.extents()[k]).sin())
                            .product::<f64>()
                    })
                    .sum();
                if *fold {
                    v.abs()
                } else {
                    v
                }
            }),
        }
    }
}

fn random_center(grid: &Grid, rng: &mut ChaCha8Rng, margin: f64) -> Point {
    let mut c = grid.center();
    for k in 0..grid.dim() {
        let l = grid.extents()[k];
        c[k] = rng.random_range(margin * l..(1.0 - margin) * l);
    }
    c
}

fn random_modes(grid: &Grid, rng: &mut ChaCha8Rng, fold: bool) -> Trial {
    let count = rng.random_range(2..=8usize);
    let terms = (0..count)
        .map(|_| {
            let mut m = [1usize, 1usize];
            for mk in m.iter_mut().take(grid.dim()) {
                *mk = rng.random_range(1..=10usize);
            }
            let amp = rng.random_range(-1.0..1.0) / (m[0] * m[1]) as f64;
            (m, amp)
        })
        .collect();
    Trial::Modes { terms, fold }
}

/// Ratio `∫|u|^p / (‖u‖^{2θ₂} e^{θ∇})` of a nonzero field.
pub fn gn_ratio(u: &Field, p: f64) -> f64 {
    let (tm, tg) = gn_exponents(u.grid().dim(), p);
    let lp = lp_integral(u, p).unwrap_or(0.0);
    let m = norm_l2_sq(u);
    let e = grad_norm_sq(u);
    if m == 0.0 || e == 0.0 {
        return 0.0;
    }
    // in logs: the individual powers overflow for narrow profiles
    (lp.ln() - tm * m.ln() - tg * e.ln()).exp()
}

const SWEEP_WIDTHS: usize = 60;

fn gn_trials(grid: &Grid, seed: u64) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lmin = grid.extents()[..grid.dim()]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let center = grid.center();
    let mut trials = Vec::new();
    // width sweep at the center, two decades
    for i in 0..SWEEP_WIDTHS {
        let t = i as f64 / (SWEEP_WIDTHS - 1) as f64;
        let width = 0.25 * lmin * 10f64.powf(-2.0 * t);
        trials.push(Trial::Sech { center, width });
    }
    for _ in 0..40 {
        let width = 0.25 * lmin * 10f64.powf(-2.0 * rng.random_range(0.0..1.0));
        trials.push(Trial::Sech {
            center: random_center(grid, &mut rng, 0.2),
            width,
        });
    }
    for i in 0..30 {
        let t = i as f64 / 29.0;
        trials.push(Trial::Bump {
            center,
            radius: 0.45 * lmin * 10f64.powf(-1.5 * t),
        });
    }
    for q in 1..=20 {
        trials.push(Trial::EigenPower {
            q: q as f64,
            modes: [1, 1],
        });
    }
    for i in 0..60 {
        trials.push(random_modes(grid, &mut rng, i % 2 == 0));
    }
    trials
}

pub fn estimate_gn_constant(params: &ProblemParams, seed: u64, mode: Execution) -> GNEstimate {
    let grid = &params.grid;
    let trials = gn_trials(grid, seed);
    let ratios = par::map(mode, &trials, |t| gn_ratio(&t.build(grid, params.p), params.p));
    let best = ratios.iter().cloned().fold(0.0, f64::max);
    let sweep = &ratios[..SWEEP_WIDTHS];
    let smax = sweep.iter().cloned().fold(0.0, f64::max);
    let smin = sweep.iter().cloned().fold(f64::INFINITY, f64::min);
    let (tm, tg) = gn_exponents(grid.dim(), params.p);
    GNEstimate {
        cp: GN_SAFETY * best,
        best_ratio: best,
        theta_mass: tm,
        theta_grad: tg,
        trials: trials.len(),
        width_sweep_spread: smax / smin,
    }
}

/// `c* = (8λ₁)^{(N(p−2)−4)/(2(2−p))} (ap/2C_p)^{2/(p−2)}`
pub fn critical_mass(dim: usize, a: f64, p: f64, cp: f64, lambda1: f64) -> f64 {
    let n = dim as f64;
    let s = n * (p - 2.0) - 4.0;
    (8.0 * lambda1).powf(s / (2.0 * (2.0 - p))) * (a * p / (2.0 * cp)).powf(2.0 / (p - 2.0))
}

/// `α₀ = ½ (ap/2C_p)^{4/(N(p−2)−4)} c^{2(2−p)/(N(p−2)−4)}`
pub fn alpha0(dim: usize, a: f64, p: f64, cp: f64, c: f64) -> f64 {
    let n = dim as f64;
    let s = n * (p - 2.0) - 4.0;
    0.5 * (a * p / (2.0 * cp)).powf(4.0 / s) * c.powf(2.0 * (2.0 - p) / s)
}

/// `β` with `cβ = (a/4) c α₀ + (b/4) c² α₀²`.
pub fn beta(a: f64, b: f64, c: f64, alpha0: f64) -> f64 {
    0.25 * a * alpha0 + 0.25 * b * c * alpha0 * alpha0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateMargins {
    /// `α₀ − 4λ₁`
    pub alpha0: f64,
    /// `cβ/2 − J_{1/2}(w₁)`
    pub w1_level: f64,
    /// `∫|∇w₂|² − 2cα₀`
    pub w2_gradient: f64,
    /// `−J_{1/2}(w₂)`
    pub w2_level: f64,
    /// `inf_{∂B} J − cβ` over the sampled boundary fields
    pub boundary_inf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryCertificate {
    pub lambda1: f64,
    pub cp: f64,
    pub gn: GNEstimate,
    pub cstar: f64,
    pub alpha0: f64,
    pub beta: f64,
    /// `cβ`, the lower bound on the mountain-pass level.
    pub level_bound: f64,
    pub k0: f64,
    pub x1: Point,
    /// `J(w₁)`, `J(w₂)` at ρ = 1
    pub j_w1: f64,
    pub j_w2: f64,
    pub boundary_samples: usize,
    pub boundary_inf: f64,
    pub margins: CertificateMargins,
    /// False only in exploratory mode when some inequality fails.
    pub certified: bool,
    pub violations: Vec<String>,
    #[serde(skip)]
    pub phi1: Option<Field>,
    #[serde(skip)]
    pub w1: Option<Field>,
    #[serde(skip)]
    pub w2: Option<Field>,
}

impl GeometryCertificate {
    pub fn w1(&self) -> &Field {
        self.w1.as_ref().expect("certificate carries w1")
    }

    pub fn w2(&self) -> &Field {
        self.w2.as_ref().expect("certificate carries w2")
    }

    pub fn phi1(&self) -> &Field {
        self.phi1.as_ref().expect("certificate carries phi1")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub seed: u64,
    pub exploratory: bool,
    pub boundary_samples: usize,
    pub mode: Execution,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            exploratory: false,
            boundary_samples: 128,
            mode: Execution::Parallel,
        }
    }
}

/// `φ_α(x) = √c (α/λ₁)^{N/4} φ₁(√(α/λ₁) x)` sampled from the discrete
/// eigenvector and pushed onto the sphere.
pub fn dilated_eigenfunction(
    params: &ProblemParams,
    phi1: &Field,
    lambda1: f64,
    alpha: f64,
) -> Result<Field> {
    let s = (alpha / lambda1).sqrt();
    let amp = params.c.sqrt() * (alpha / lambda1).powf(params.dim() as f64 / 4.0);
    let f = Field::from_fn(&params.grid, |x| amp * phi1.sample([s * x[0], s * x[1]]));
    SphereOps::new(params).normalize(&f)
}

/// `∫_{B₁} φ²` for the unnormalized bump, by fine midpoint quadrature.
fn bump_mass(dim: usize) -> f64 {
    let m = 200_000;
    let h = 1.0 / m as f64;
    let radial: f64 = (0..m)
        .map(|i| {
            let r = (i as f64 + 0.5) * h;
            smooth_bump(r * r).powi(2) * if dim == 1 { 2.0 } else { 2.0 * PI * r }
        })
        .sum();
    radial * h
}

/// `u_k(x) = √c k^{N/2} φ(k(x − x₁))` with `∫φ² = 1` over the unit ball.
pub fn concentrated_bump(params: &ProblemParams, k: f64, x1: Point) -> Field {
    let n = params.dim();
    let norm = bump_mass(n).sqrt();
    let amp = params.c.sqrt() * k.powf(n as f64 / 2.0) / norm;
    let g = params.grid.as_ref();
    Field::from_fn(&params.grid, |x| {
        let s = k * dist(g, x, x1);
        amp * smooth_bump(s * s)
    })
}

fn violation(inequality: &str, margin: f64) -> Error {
    Error::CertificateViolation {
        inequality: inequality.to_string(),
        margin,
    }
}

/// Point of `∂B_{cα₀}` on the normalized segment from `x` to `y`, where
/// `e(x) < cα₀ < e(y)`, by bisection on the segment parameter.
fn boundary_crossing(sphere: &SphereOps, x: &Field, y: &Field, target: f64) -> Option<Field> {
    let at = |t: f64| -> Option<Field> { sphere.normalize(&x.combine(1.0 - t, t, y).ok()?).ok() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let e = grad_norm_sq(&at(mid)?);
        if e < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

pub fn certify_geometry(params: &ProblemParams, opts: &CertifyOptions) -> Result<GeometryCertificate> {
    let gn = estimate_gn_constant(params, opts.seed, opts.mode);
    certify_with_gn(params, gn, opts)
}

pub fn certify_with_gn(
    params: &ProblemParams,
    gn: GNEstimate,
    opts: &CertifyOptions,
) -> Result<GeometryCertificate> {
    let dim = params.dim();
    let (a, b, c, p) = (params.a, params.b, params.c, params.p);
    let sphere = SphereOps::new(params);
    let eig = dirichlet_eigs(&params.grid, 1)?.remove(0);
    let lambda1 = eig.value;
    let phi1 = eig.vector;
    let cp = gn.cp;
    let cstar = critical_mass(dim, a, p, cp, lambda1);
    if c > cstar && !opts.exploratory {
        return Err(Error::GeometryNotCertified { c, cstar });
    }
    let alpha0 = alpha0(dim, a, p, cp, c);
    let beta = beta(a, b, c, alpha0);
    let level_bound = c * beta;
    let mut violations = Vec::new();

    let margin_alpha = alpha0 - 4.0 * lambda1;
    if margin_alpha < 0.0 {
        violations.push(("alpha0 >= 4 lambda1", margin_alpha));
    }
    let w1_alpha = (0.25 * alpha0).max(lambda1);
    let w1 = dilated_eigenfunction(params, &phi1, lambda1, w1_alpha)?;
    let half = params.with_rho(0.5)?;
    let w1_half = energy(&half, &w1)?;
    let margin_w1 = 0.5 * level_bound - w1_half.j_rho;
    if margin_w1 <= 0.0 {
        violations.push(("J(w1) <= c beta / 2", margin_w1));
    }

    // w₂: double k until the bump is steep enough and has negative energy
    let x1 = params.grid.center();
    let reach = params.grid.boundary_distance(x1);
    let hmin = params.grid.min_spacing();
    let mut k = 1.0;
    while 1.0 / k >= reach {
        k *= 2.0;
    }
    let w2 = loop {
        if 1.0 / k < 2.0 * hmin {
            return Err(violation("w2 resolvable on the grid (support radius >= 2h)", 1.0 / k - 2.0 * hmin));
        }
        let cand = sphere.normalize(&concentrated_bump(params, k, x1))?;
        let rep = energy(&half, &cand)?;
        if rep.e > 2.0 * c * alpha0 && rep.j_rho < 0.0 {
            break cand;
        }
        k *= 2.0;
    };
    let w2_half = energy(&half, &w2)?;
    let margin_w2_grad = w2_half.e - 2.0 * c * alpha0;
    let margin_w2_level = -w2_half.j_rho;

    // sampled infimum of J over ∂B_{cα₀}
    let target = c * alpha0;
    let one = params.with_rho(1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb0_0b);
    let lmin = params.grid.extents().iter().cloned().fold(f64::INFINITY, f64::min);
    let count = opts.boundary_samples.max(BOUNDARY_MIN_SAMPLES);
    let trials: Vec<Trial> = (0..count)
        .map(|i| match i % 4 {
            0 => Trial::Sech {
                center: random_center(&params.grid, &mut rng, 0.25),
                width: lmin * 10f64.powf(rng.random_range(-2.5..-0.5)),
            },
            1 => Trial::Bump {
                center: random_center(&params.grid, &mut rng, 0.3),
                radius: lmin * 10f64.powf(rng.random_range(-2.0..-0.7)),
            },
            2 => random_modes(&params.grid, &mut rng, true),
            _ => random_modes(&params.grid, &mut rng, false),
        })
        .collect();
    let levels: Vec<Option<f64>> = par::map(opts.mode, &trials, |t| {
        let v = sphere.normalize(&t.build(&params.grid, p)).ok()?;
        let ev = grad_norm_sq(&v);
        let point = if ev > target {
            boundary_crossing(&sphere, &w1, &v, target)?
        } else {
            boundary_crossing(&sphere, &v, &w2, target)?
        };
        Some(energy(&one, &point).ok()?.j)
    });
    let sampled: Vec<f64> = levels.into_iter().flatten().collect();
    let boundary_inf = sampled.iter().cloned().fold(f64::INFINITY, f64::min);
    let margin_boundary = boundary_inf - level_bound;
    if sampled.len() < BOUNDARY_MIN_SAMPLES {
        violations.push(("enough boundary samples", sampled.len() as f64 - BOUNDARY_MIN_SAMPLES as f64));
    }
    if margin_w2_grad <= 0.0 {
        violations.push(("|grad w2|^2 > 2 c alpha0", margin_w2_grad));
    }
    if margin_w2_level <= 0.0 {
        violations.push(("J_1/2(w2) < 0", margin_w2_level));
    }
    if margin_boundary < 0.0 {
        violations.push(("inf over boundary of J >= c beta", margin_boundary));
    }
    if !opts.exploratory {
        if let Some((name, m)) = violations.first() {
            return Err(violation(name, *m));
        }
    }
    let j_w1 = energy(&one, &w1)?.j;
    let j_w2 = energy(&one, &w2)?.j;
    Ok(GeometryCertificate {
        lambda1,
        cp,
        gn,
        cstar,
        alpha0,
        beta,
        level_bound,
        k0: k,
        x1,
        j_w1,
        j_w2,
        boundary_samples: sampled.len(),
        boundary_inf,
        margins: CertificateMargins {
            alpha0: margin_alpha,
            w1_level: margin_w1,
            w2_gradient: margin_w2_grad,
            w2_level: margin_w2_level,
            boundary_inf: margin_boundary,
        },
        certified: violations.is_empty(),
        violations: violations
            .iter()
            .map(|(n, m)| format!("{n} (margin {m:.6e})"))
            .collect(),
        phi1: Some(phi1),
        w1: Some(w1),
        w2: Some(w2),
    })
}

/// `γ₀(t) = √c ((1−t)w₁ + t w₂) / ‖(1−t)w₁ + t w₂‖` at `m` equally spaced `t`.
pub fn initial_path(
    params: &ProblemParams,
    cert: &GeometryCertificate,
    m: usize,
) -> Result<PathState> {
    if m < 17 {
        return Err(Error::InvalidParams(format!("path needs at least 17 samples, got {m}")));
    }
    let sphere = SphereOps::new(params);
    let (w1, w2) = (cert.w1(), cert.w2());
    let mut samples = Vec::with_capacity(m);
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        let s = if i == 0 {
            w1.clone()
        } else if i + 1 == m {
            w2.clone()
        } else {
            sphere.normalize(&w1.combine(1.0 - t, t, w2)?)?
        };
        samples.push(s);
    }
    PathState::new(params, samples, cert.level_bound)
}
