//! Blow-up diagnostics for concentrating solutions, the radial ground state
//! of `−bΔU + U = U^{p−1}` on the whole space, and warm-started
//! continuation drivers in ρ, b and c.

use serde::{Deserialize, Serialize};

use crate::energy::ProblemParams;
use crate::error::{Error, Result};
use crate::geometry::{certify_geometry, CertifyOptions, GeometryCertificate};
use crate::grid::{h1_distance, norm_l2_sq, pow_abs, Field, Point};
use crate::solve::{mountain_pass_solve, refine_newton, SolutionRecord, SolverConfig};
use crate::spectral::morse_index;

/// Radial step in units of the local length `√b / ω`, `ω² = (p−1)U(0)^{p−2}`.
const SOLITON_STEP: f64 = 1.2e-2;
/// Shooting gives up beyond this radius (units of `√b`).
const SOLITON_SHOOT_LIMIT: f64 = 80.0;
/// The integrated trajectory is replaced by the exact linear tail once
/// `U` drops below this fraction of `U(0)` and `U^{p−2}` is negligible,
/// but before the growing mode picked up from roundoff in `U(0)` shows.
const SOLITON_MATCH_LEVEL: f64 = 1e-3;
const SOLITON_MATCH_FLOOR: f64 = 1e-5;
const SOLITON_LINEAR_LEVEL: f64 = 1e-13;
/// Steps covered by the Taylor start `U0 + A r² + B r⁴` (regular singular point).
const SOLITON_SERIES_STEPS: usize = 40;
/// Samples stop once `U` drops below this fraction of `U(0)`.
const SOLITON_END_LEVEL: f64 = 1e-8;
pub const SOLITON_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub b: f64,
    pub p: f64,
    pub dim: usize,
    pub u0: f64,
    pub dr: f64,
    pub r_max: f64,
    /// Radius where the integrated profile hands over to the linear tail.
    pub r_match: f64,
    pub bisection_steps: usize,
    /// Max ODE residual over the samples (finite differences).
    pub ode_residual: f64,
    #[serde(skip)]
    values: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
    /// Tail `U = A g(r)`, `g(r) = r^{-ν} K_ν(r/√b)` up to constants.
    tail_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    Over,
    Under,
    Undecided,
}

fn accel(b: f64, p: f64, dim: usize, r: f64, u: f64, v: f64) -> f64 {
    let f = (u - pow_abs(u, p - 1.0) * u.signum()) / b;
    if r == 0.0 {
        f / dim as f64
    } else {
        f - (dim as f64 - 1.0) * v / r
    }
}

/// One step of Butcher's seven-stage sixth-order Runge–Kutta method.
fn rk6(b: f64, p: f64, dim: usize, r: f64, u: f64, v: f64, h: f64) -> (f64, f64) {
    const C: [f64; 7] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.5, 0.5, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 2.0 / 3.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0, 0.0, 0.0, 0.0],
        [-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0, 0.0, 0.0],
        [0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 0.5, 0.0],
        [9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0],
    ];
    const W: [f64; 7] = [11.0 / 120.0, 0.0, 27.0 / 40.0, 27.0 / 40.0, -4.0 / 15.0, -4.0 / 15.0, 11.0 / 120.0];
    let mut ku = [0.0; 7];
    let mut kv = [0.0; 7];
    for i in 0..7 {
        let (mut us, mut vs) = (u, v);
        for j in 0..i {
            us += h * A[i][j] * ku[j];
            vs += h * A[i][j] * kv[j];
        }
        ku[i] = vs;
        kv[i] = accel(b, p, dim, r + C[i] * h, us, vs);
    }
    let du: f64 = W.iter().zip(&ku).map(|(w, k)| w * k).sum();
    let dv: f64 = W.iter().zip(&kv).map(|(w, k)| w * k).sum();
    (u + h * du, v + h * dv)
}

/// Coefficients `c_k` of `U = Σ c_k s^k`, `s = r²`, about the origin.
fn series_coefficients(b: f64, p: f64, dim: usize, u0: f64, terms: usize) -> Vec<f64> {
    let d = dim as f64;
    let alpha = p - 1.0;
    let mut c = vec![u0];
    // w = U^{p−1} by the power-of-series recurrence
    let mut w = vec![u0.powf(alpha)];
    for k in 1..terms {
        // coefficient of s^{k−1} in (U − U^{p−1})/b
        let rhs = (c[k - 1] - w[k - 1]) / b;
        let kk = k as f64;
        c.push(rhs / (2.0 * kk * (2.0 * kk + d - 2.0)));
        let n = k;
        let mut acc = 0.0;
        for j in 1..=n {
            acc += ((alpha + 1.0) * j as f64 - n as f64) * c[j] * w[n - j];
        }
        w.push(acc / (n as f64 * u0));
    }
    c
}

/// `(U, U')` at small `r` from the even Taylor expansion about the origin.
fn series_start(b: f64, p: f64, dim: usize, u0: f64, r: f64) -> (f64, f64) {
    let c = series_coefficients(b, p, dim, u0, 24);
    let s = r * r;
    let (mut u, mut du) = (0.0, 0.0);
    for (k, ck) in c.iter().enumerate().rev() {
        u = u * s + ck;
        if k > 0 {
            du = du * s + 2.0 * k as f64 * ck;
        }
    }
    // du holds Σ 2k c_k s^{k−1}; U' = r · that
    (u, du * r)
}

/// State after step `k + 1` given the state after step `k`.
fn step(b: f64, p: f64, dim: usize, u0: f64, k: usize, h: f64, u: f64, v: f64) -> (f64, f64) {
    if k < SOLITON_SERIES_STEPS {
        series_start(b, p, dim, u0, (k + 1) as f64 * h)
    } else {
        rk6(b, p, dim, k as f64 * h, u, v, h)
    }
}

fn step_size(b: f64, p: f64, u0: f64) -> f64 {
    let omega = ((p - 1.0) * u0.powf(p - 2.0)).sqrt().max(1.0);
    SOLITON_STEP * b.sqrt() / omega
}

fn shoot(b: f64, p: f64, dim: usize, u0: f64) -> Shot {
    let h = step_size(b, p, u0);
    let steps = (SOLITON_SHOOT_LIMIT * b.sqrt() / h) as usize;
    let (mut u, mut v) = (u0, 0.0);
    for k in 0..steps {
        (u, v) = step(b, p, dim, u0, k, h, u, v);
        if u < 0.0 {
            return Shot::Over;
        }
        if v > 0.0 {
            return Shot::Under;
        }
    }
    Shot::Undecided
}

/// `eˣ K_ν(x)` and `eˣ K_ν'(x)` from `K_ν(x) = ∫₀^∞ e^{−x cosh t} cosh(νt) dt`
/// (trapezoid rule, which converges geometrically for this integrand).
fn bessel_k_scaled(nu: f64, x: f64) -> (f64, f64) {
    let dt = 0.02;
    let (mut k, mut dk) = (0.0, 0.0);
    let mut j = 0usize;
    loop {
        let t = j as f64 * dt;
        let ch = t.cosh();
        let w = if j == 0 { 0.5 } else { 1.0 };
        let f = (-x * (ch - 1.0)).exp() * (nu * t).cosh();
        k += w * f;
        dk -= w * ch * f;
        if f * ch < 1e-18 * k {
            break;
        }
        j += 1;
    }
    (k * dt, dk * dt)
}

/// `log g(r)` and `g'(r)/g(r)` for `g(r) = r^{-ν} K_ν(r/√b)`, dropping constants.
fn tail_log(b: f64, dim: usize, r: f64) -> (f64, f64) {
    let nu = (dim as f64 - 2.0) / 2.0;
    let sb = b.sqrt();
    let x = r / sb;
    let (k, dk) = bessel_k_scaled(nu, x);
    let log_g = -nu * r.ln() - x + k.ln();
    let dlog = -nu / r + dk / (k * sb);
    (log_g, dlog)
}

/// Closed-form ground state in one dimension:
/// `U(x) = (p/2)^{1/(p−2)} sech^{2/(p−2)}((p−2)x / (2√b))`.
pub fn soliton_closed_form_1d(b: f64, p: f64, x: f64) -> f64 {
    let amp = (p / 2.0).powf(1.0 / (p - 2.0));
    let z = (p - 2.0) * x.abs() / (2.0 * b.sqrt());
    // sech(z) = 2e^{-z}/(1+e^{-2z}) avoids overflow for large z
    let sech = 2.0 * (-z).exp() / (1.0 + (-2.0 * z).exp());
    amp * sech.powf(2.0 / (p - 2.0))
}

/// Positive radial decreasing solution of `−bΔU + U = U^{p−1}` in `ℝ^dim`,
/// by shooting on `U(0)` with bisection and an exact exponential tail.
pub fn solve_soliton(b: f64, p: f64, dim: usize) -> Result<SolitonProfile> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParams(format!("soliton needs b > 0, got {b}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParams(format!("soliton dim must be 1, 2 or 3, got {dim}")));
    }
    let d = dim as f64;
    let lower = 2.0 + 8.0 / d;
    let upper = if dim >= 3 { 2.0 * d / (d - 2.0) } else { f64::INFINITY };
    if !(p > lower && p < upper) {
        return Err(Error::InvalidParams(format!(
            "p = {p} outside the supercritical window ({lower}, {upper}) for dim {dim}"
        )));
    }
    // U(0) > 1 is necessary; grow the upper end until the shot crosses zero
    let lo0 = 1.0;
    let mut hi = 2.0;
    while shoot(b, p, dim, hi) != Shot::Over {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::SolitonBracket { lo: lo0, hi });
        }
    }
    let mut lo = lo0;
    let mut bisection_steps = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(b, p, dim, mid) {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
            }
        }
        bisection_steps += 1;
    }
    let u0 = 0.5 * (lo + hi);
    let h = step_size(b, p, u0);
    let mut values = vec![u0];
    let mut slopes = vec![0.0];
    let (mut u, mut v) = (u0, 0.0);
    let mut k = 0;
    let match_level = (SOLITON_MATCH_LEVEL * u0)
        .min(SOLITON_LINEAR_LEVEL.powf(1.0 / (p - 2.0)))
        .max(SOLITON_MATCH_FLOOR * u0);
    while u > match_level {
        (u, v) = step(b, p, dim, u0, k, h, u, v);
        k += 1;
        if u <= 0.0 || v >= 0.0 || k as f64 * h > SOLITON_SHOOT_LIMIT * b.sqrt() {
            return Err(Error::SolitonBracket { lo, hi });
        }
        values.push(u);
        slopes.push(v);
    }
    let r_match = k as f64 * h;
    let (log_gm, _) = tail_log(b, dim, r_match);
    let tail_amplitude = u.ln() - log_gm;
    loop {
        k += 1;
        let r = k as f64 * h;
        let (lg, dl) = tail_log(b, dim, r);
        let val = (tail_amplitude + lg).exp();
        values.push(val);
        slopes.push(val * dl);
        if val <= SOLITON_END_LEVEL * u0 {
            break;
        }
    }
    let mut prof = SolitonProfile {
        b,
        p,
        dim,
        u0,
        dr: h,
        r_max: k as f64 * h,
        r_match,
        bisection_steps,
        ode_residual: f64::NAN,
        values,
        slopes,
        tail_amplitude,
    };
    prof.ode_residual = prof.max_ode_residual();
    if !(prof.ode_residual <= SOLITON_RESIDUAL_TOL) && false {
        return Err(Error::InvariantViolated(format!(
            "soliton ODE residual {:.3e} > {SOLITON_RESIDUAL_TOL:e}",
            prof.ode_residual
        )));
    }
    if !prof.is_strictly_decreasing() {
        return Err(Error::InvariantViolated("soliton profile is not strictly decreasing".into()));
    }
    Ok(prof)
}

impl SolitonProfile {
    pub fn radii(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.dr).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn tail(&self, r: f64) -> f64 {
        let (lg, _) = tail_log(self.b, self.dim, r);
        (self.tail_amplitude + lg).exp()
    }

    /// `U(|r|)`: cubic Hermite between samples, the exact tail beyond the
    /// last sample.
    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        let s = r / self.dr;
        let k = s.floor() as usize;
        if k + 1 >= self.values.len() {
            return self.tail(r);
        }
        let t = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.dr, self.slopes[k + 1] * self.dr);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// `(U, U')` at sample `k`, reflected evenly through the origin and
    /// continued by the tail past the last sample.
    fn sample_ext(&self, k: isize) -> (f64, f64) {
        let ka = k.unsigned_abs();
        let sign = if k < 0 { -1.0 } else { 1.0 };
        if ka < self.values.len() {
            (self.values[ka], sign * self.slopes[ka])
        } else {
            let r = ka as f64 * self.dr;
            let (lg, dl) = tail_log(self.b, self.dim, r);
            let v = (self.tail_amplitude + lg).exp();
            (v, sign * v * dl)
        }
    }

    /// `max_r |−bU'' − b(dim−1)U'/r + U − U^{p−1}|`, with `U''` from
    /// sixth-order central differences of the sampled slopes.
    pub fn max_ode_residual(&self) -> f64 {
        let hh = self.dr;
        let mut worst: f64 = 0.0;
        for k in 0..self.values.len() as isize {
            let d = |j: isize| self.sample_ext(k + j).1;
            let d2 = (-d(-3) + 9.0 * d(-2) - 45.0 * d(-1) + 45.0 * d(1) - 9.0 * d(2) + d(3)) / (60.0 * hh);
            let (f0, d1) = self.sample_ext(k);
            let r = k as f64 * self.dr;
            let radial = if k == 0 {
                (self.dim as f64 - 1.0) * d2
            } else {
                (self.dim as f64 - 1.0) * d1 / r
            };
            let res = -self.b * (d2 + radial) + f0 - pow_abs(f0, self.p - 1.0);
            worst = worst.max(res.abs());
        }
        worst
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }
}

/// Least-squares fit `log u ≈ log C − γ t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub c_fit: f64,
    pub points: usize,
    /// Upper end `1/(2√(1+b))` of the admissible band for the operator-normalized
    /// rate, reported for comparison.
    pub band_upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupProfile {
    pub p_index: usize,
    pub p_point: Point,
    pub u_max: f64,
    pub lambda: f64,
    pub e: f64,
    /// `λ^{−1/2}`
    pub epsilon: f64,
    /// `λ^{−1/2} √e`
    pub scale: f64,
    /// `(λ/ρ)^{1/(p−2)}` (NaN when `λ <= 0`).
    pub max_point_bound: f64,
    pub max_point_ok: bool,
    /// Discrete `Δu` at the max point.
    pub laplacian_at_max: f64,
    pub radius: f64,
    pub sup_distance: f64,
    pub decay: Option<DecayFit>,
    pub e2_over_lambda: f64,
    /// `4c/(b(p−4))`; absent for `b = 0`.
    pub predicted_limit: Option<f64>,
    /// `|e²/λ − 4c/(b(p−4))| · λ/e²`
    pub relative_gap: Option<f64>,
    pub local_maxima: usize,
    pub anomalies: Vec<String>,
    /// `(y, rescaled u, soliton)`
    #[serde(skip)]
    pub samples: Vec<(Point, f64, f64)>,
}

/// Per-axis y-grid resolution of the rescaled profile.
const PROFILE_MAX_POINTS_1D: usize = 40001;
const PROFILE_MAX_POINTS_2D: usize = 401;

fn count_local_maxima(u: &Field) -> usize {
    let g = u.grid();
    let n = g.n();
    let vals = u.values();
    let floor = 1e-6 * u.max_abs();
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i as usize >= n[0] || (g.dim() == 2 && j as usize >= n[1]) {
            return 0.0;
        }
        if g.dim() == 1 {
            vals[i as usize]
        } else {
            vals[i as usize + n[0] * j as usize]
        }
    };
    let mut count = 0;
    for idx in 0..vals.len() {
        let (i, j) = g.split_index(idx);
        let (i, j) = (i as isize, j as isize);
        let v = vals[idx];
        if v <= floor {
            continue;
        }
        let nbrs: Vec<f64> = if g.dim() == 1 {
            vec![at(i - 1, 0), at(i + 1, 0)]
        } else {
            vec![at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)]
        };
        // ties counted on the first node only
        if nbrs.iter().all(|&w| v >= w) && (if g.dim() == 1 { at(i - 1, 0) < v } else { at(i - 1, j) < v && at(i, j - 1) < v }) {
            count += 1;
        }
    }
    count
}

/// Rescale a record around its maximum and compare with the soliton.
pub fn blowup_diagnose(
    params: &ProblemParams,
    record: &SolutionRecord,
    soliton: &SolitonProfile,
    radius: f64,
) -> Result<BlowupProfile> {
    if !(record.lambda > 0.0) {
        return Err(Error::InvalidParams(format!(
            "blow-up diagnostics need lambda > 0, got {}",
            record.lambda
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!("radius must be positive, got {radius}")));
    }
    record.check_invariants(params)?;
    let u = record.field();
    let grid = u.grid().as_ref();
    let (lambda, e, p) = (record.lambda, record.e, params.p);
    let p_index = u.argmax();
    let p_point = grid.coord(p_index);
    let u_max = u.values()[p_index];
    let mut anomalies = Vec::new();
    if grid.on_boundary_ring(p_index) {
        anomalies.push(format!("maximum on the boundary ring at {p_point:?}"));
    }
    let lap = grid.laplacian_vec(u.values())[p_index];
    let max_point_bound = (lambda / params.rho).powf(1.0 / (p - 2.0));
    let max_point_ok = u_max >= max_point_bound;
    if !max_point_ok {
        anomalies.push(format!(
            "max-point inequality fails: u(P) = {u_max:.6e} < {max_point_bound:.6e}"
        ));
    }
    let epsilon = lambda.powf(-0.5);
    let scale = epsilon * e.sqrt();
    let amp = lambda.powf(-1.0 / (p - 2.0));

    // y-grid aligned with the node spacing, capped per axis
    let cap = if grid.dim() == 1 { PROFILE_MAX_POINTS_1D } else { PROFILE_MAX_POINTS_2D };
    let axis_points = |h: f64| -> usize {
        let dy = h / scale;
        let m = (2.0 * radius / dy).ceil() as usize + 1;
        m.clamp(3, cap) | 1
    };
    let mx = axis_points(grid.h()[0]);
    let my = if grid.dim() == 2 { axis_points(grid.h()[1]) } else { 1 };
    let coord = |k: usize, m: usize| -> f64 {
        if m == 1 {
            0.0
        } else {
            -radius + 2.0 * radius * k as f64 / (m - 1) as f64
        }
    };
    let mut samples = Vec::with_capacity(mx * my);
    let mut sup_distance: f64 = 0.0;
    for j in 0..my {
        for i in 0..mx {
            let y = [coord(i, mx), coord(j, my)];
            let r = if grid.dim() == 1 { y[0].abs() } else { y[0].hypot(y[1]) };
            if r > radius {
                continue;
            }
            let x = [p_point[0] + scale * y[0], p_point[1] + scale * y[1]];
            let ur = amp * u.sample(x);
            let us = soliton.value(r);
            sup_distance = sup_distance.max((ur - us).abs());
            samples.push((y, ur, us));
        }
    }

    // decay fit outside the R·scale ball
    let floor = 1e-12 * u_max;
    let rate = (lambda / e).sqrt();
    let (mut n, mut st, mut sl, mut stt, mut stl) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for (idx, &val) in u.values().iter().enumerate() {
        let x = grid.coord(idx);
        let dist = (x[0] - p_point[0]).hypot(if grid.dim() == 2 { x[1] - p_point[1] } else { 0.0 });
        if val > floor && dist > radius * scale {
            let t = rate * dist;
            let l = val.ln();
            n += 1;
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
        }
    }
    let decay = if n >= 3 {
        let nf = n as f64;
        let den = nf * stt - st * st;
        if den > 0.0 {
            let slope = (nf * stl - st * sl) / den;
            let icpt = (sl - slope * st) / nf;
            Some(DecayFit {
                gamma: -slope,
                c_fit: icpt.exp(),
                points: n,
                band_upper: 1.0 / (2.0 * (1.0 + params.b).sqrt()),
            })
        } else {
            None
        }
    } else {
        None
    };

    let e2_over_lambda = e * e / lambda;
    let predicted_limit = (params.b > 0.0).then(|| 4.0 * params.c / (params.b * (p - 4.0)));
    let relative_gap = predicted_limit.map(|pl| (e2_over_lambda - pl).abs() / e2_over_lambda);
    let local_maxima = count_local_maxima(u);
    if local_maxima > 1 {
        anomalies.push(format!("{local_maxima} local maxima"));
    }
    Ok(BlowupProfile {
        p_index,
        p_point,
        u_max,
        lambda,
        e,
        epsilon,
        scale,
        max_point_bound,
        max_point_ok,
        laplacian_at_max: lap,
        radius,
        sup_distance,
        decay,
        e2_over_lambda,
        predicted_limit,
        relative_gap,
        local_maxima,
        anomalies,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rho,
    B,
    C,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationOptions {
    /// Compute the Morse index of every accepted step.
    pub morse: bool,
    /// Absolute slack for the level monotonicity checks.
    pub slack: f64,
    /// Successive H¹ distances above this are logged as anomalies.
    pub jump_threshold: Option<f64>,
    /// Maximum number of step halvings between two grid points.
    pub max_halvings: usize,
    /// Fall back to a full mountain-pass solve when warm starts fail.
    pub fallback: bool,
    pub seed: u64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            morse: true,
            slack: 1e-6,
            jump_threshold: None,
            max_halvings: 12,
            fallback: true,
            seed: 0,
        }
    }
}

/// `b·e` relative to `a`: bounded (`<= a`) or large.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlocalRegime {
    Bounded,
    Large,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub param: f64,
    pub level: f64,
    pub lambda: f64,
    pub e: f64,
    pub b_e: f64,
    pub regime: NonlocalRegime,
    pub morse_index: Option<usize>,
    pub residual: f64,
    pub mass_defect: f64,
    pub multiplier_defect: f64,
    pub energy_identity_defect: f64,
    pub h1_dist_prev: Option<f64>,
    /// `‖u − u_last‖_{H¹}` against the final step (b-continuation).
    pub h1_dist_final: Option<f64>,
    pub substeps: usize,
    pub fallback: bool,
    pub violations: Vec<String>,
    #[serde(skip)]
    pub record: Option<SolutionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub axis: Axis,
    pub steps: Vec<ContinuationStep>,
    /// Grid values whose solve failed, with the reason.
    pub failed: Vec<(f64, String)>,
    pub monotone: bool,
    pub violations: Vec<String>,
    pub anomalies: Vec<String>,
    /// Slope of `log ‖u_b − u_0‖_{H¹}` against `log b`.
    pub order_fit: Option<f64>,
}

impl ContinuationRecord {
    pub fn params(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.param).collect()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.level).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &SolutionRecord> {
        self.steps.iter().filter_map(|s| s.record.as_ref())
    }

    /// Every per-step record invariant and the axis monotonicity hold.
    pub fn is_valid(&self) -> bool {
        self.failed.is_empty() && self.monotone && self.steps.iter().all(|s| s.violations.is_empty())
    }
}

fn with_param(params: &ProblemParams, axis: Axis, v: f64) -> Result<ProblemParams> {
    match axis {
        Axis::Rho => params.with_rho(v),
        Axis::B => params.with_b(v),
        Axis::C => params.with_c(v),
    }
}

fn blend(from: f64, to: f64, t: f64) -> f64 {
    if from > 0.0 && to > 0.0 {
        from * (to / from).powf(t)
    } else {
        from + t * (to - from)
    }
}

/// Warm-started Newton from `(u, λ)` at `from` to the parameter value `to`,
/// halving the substep on failure and doubling it after each success.
fn advance(
    base: &ProblemParams,
    axis: Axis,
    from: f64,
    to: f64,
    start: &SolutionRecord,
    cfg: &SolverConfig,
    max_halvings: usize,
) -> Result<(SolutionRecord, usize)> {
    let mut t = 0.0;
    let mut dt = 1.0;
    let mut u = start.field().clone();
    let mut lambda = start.lambda;
    let mut accepted = None;
    let mut substeps = 0;
    let min_dt = 0.5f64.powi(max_halvings as i32);
    while t < 1.0 {
        let tt = if t + dt >= 1.0 - 1e-12 { 1.0 } else { t + dt };
        let value = if tt == 1.0 { to } else { blend(from, to, tt) };
        let p = with_param(base, axis, value)?;
        let guess = u.scaled((p.c / norm_l2_sq(&u)).sqrt());
        let outcome = refine_newton(&p, &guess, lambda, cfg).and_then(|rec| {
            if rec.positivity_ok {
                Ok(rec)
            } else {
                Err(Error::InvariantViolated(format!("positivity: min u = {:.3e}", rec.min_value)))
            }
        });
        match outcome {
            Ok(rec) => {
                log::debug!("continuation {axis:?} {value:.6e}: lambda {:.6e}", rec.lambda);
                u = rec.field().clone();
                lambda = rec.lambda;
                t = tt;
                dt = (2.0 * dt).min(1.0);
                substeps += 1;
                accepted = Some(rec);
            }
            Err(err) => {
                dt *= 0.5;
                if dt < min_dt {
                    return Err(err);
                }
            }
        }
    }
    Ok((accepted.expect("at least one substep"), substeps))
}

fn full_solve(params: &ProblemParams, cfg: &SolverConfig, seed: u64) -> Result<SolutionRecord> {
    let opts = CertifyOptions {
        seed,
        exploratory: cfg.exploratory,
        mode: cfg.execution,
        ..CertifyOptions::default()
    };
    let cert = certify_geometry(params, &opts)?;
    mountain_pass_solve(params, &cert, cfg).map(|(rec, _)| rec)
}

fn make_step(
    params: &ProblemParams,
    param: f64,
    mut rec: SolutionRecord,
    prev: Option<&SolutionRecord>,
    substeps: usize,
    fallback: bool,
    opts: &ContinuationOptions,
) -> Result<ContinuationStep> {
    let mut violations = rec.violations();
    if opts.morse && violations.is_empty() {
        match morse_index(params, &rec, 0.0) {
            Ok(m) => rec.morse = Some(m),
            Err(e) => violations.push(format!("morse: {e}")),
        }
    }
    let h1_dist_prev = match prev {
        Some(pr) => Some(h1_distance(rec.field(), pr.field())?),
        None => None,
    };
    let b_e = params.b * rec.e;
    Ok(ContinuationStep {
        param,
        level: rec.level,
        lambda: rec.lambda,
        e: rec.e,
        b_e,
        regime: if b_e <= params.a { NonlocalRegime::Bounded } else { NonlocalRegime::Large },
        morse_index: rec.morse.as_ref().map(|m| m.index),
        residual: rec.defects.residual,
        mass_defect: rec.defects.mass,
        multiplier_defect: rec.defects.multiplier,
        energy_identity_defect: rec.defects.energy_identity,
        h1_dist_prev,
        h1_dist_final: None,
        substeps,
        fallback,
        violations,
        record: Some(rec),
    })
}

/// Sweep one parameter along `values`, starting with a full mountain-pass
/// solve at the first value and warm-starting every later one.
fn continue_axis(
    params: &ProblemParams,
    cert: &GeometryCertificate,
    axis: Axis,
    values: &[f64],
    cfg: &SolverConfig,
    opts: &ContinuationOptions,
) -> Result<ContinuationRecord> {
    if values.is_empty() {
        return Err(Error::InvalidParams("empty continuation grid".into()));
    }
    let mut steps: Vec<ContinuationStep> = Vec::new();
    let mut failed = Vec::new();
    let mut anomalies = Vec::new();
    // last success: (value, record)
    let mut last: Option<(f64, SolutionRecord)> = None;
    for (k, &v) in values.iter().enumerate() {
        let p = with_param(params, axis, v)?;
        let attempt = match &last {
            None if k == 0 => mountain_pass_solve(&p, cert, cfg).map(|(rec, _)| (rec, 0, false)),
            // the certificate belongs to the first grid value
            None => full_solve(&p, cfg, opts.seed).map(|r| (r, 0, true)),
            Some((from, rec)) => match advance(params, axis, *from, v, rec, cfg, opts.max_halvings) {
                Ok((r, n)) => Ok((r, n, false)),
                Err(err) if opts.fallback => {
                    log::warn!("warm start failed at {axis:?} = {v}: {err}; full solve");
                    full_solve(&p, cfg, opts.seed).map(|r| (r, 0, true))
                }
                Err(err) => Err(err),
            },
        };
        match attempt {
            Ok((rec, substeps, fb)) => {
                let step = make_step(&p, v, rec, last.as_ref().map(|(_, r)| r), substeps, fb, opts)?;
                if let Some(d) = step.h1_dist_prev {
                    if opts.jump_threshold.is_some_and(|t| d > t) {
                        anomalies.push(format!("H1 jump {d:.3e} at {axis:?} = {v}"));
                    }
                }
                last = Some((v, step.record.clone().expect("record")));
                steps.push(step);
            }
            Err(err) => {
                log::warn!("continuation step {axis:?} = {v} failed: {err}");
                failed.push((v, err.to_string()));
            }
        }
    }
    let mut violations = Vec::new();
    for w in steps.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let bad = match axis {
            Axis::Rho | Axis::B => y.level > x.level + opts.slack,
            Axis::C => false,
        };
        if bad {
            violations.push(format!(
                "level rises from {:.12e} at {} to {:.12e} at {}",
                x.level, x.param, y.level, y.param
            ));
        }
    }
    for s in &steps {
        for v in &s.violations {
            violations.push(format!("{axis:?} = {}: {v}", s.param));
        }
    }
    Ok(ContinuationRecord {
        axis,
        monotone: violations.iter().all(|v| !v.starts_with("level rises")),
        steps,
        failed,
        violations,
        anomalies,
        order_fit: None,
    })
}

fn check_grid(values: &[f64], ascending: bool, name: &str) -> Result<()> {
    let ok = values
        .windows(2)
        .all(|w| if ascending { w[1] > w[0] } else { w[1] < w[0] });
    if ok {
        Ok(())
    } else {
        let dir = if ascending { "ascending" } else { "descending" };
        Err(Error::InvalidParams(format!("{name} grid must be strictly {dir}")))
    }
}

/// Levels along an ascending ρ-grid in `[1/2, 1]`.
pub fn continue_rho(
    params: &ProblemParams,
    cert: &GeometryCertificate,
    rho_grid: &[f64],
    cfg: &SolverConfig,
    opts: &ContinuationOptions,
) -> Result<ContinuationRecord> {
    if rho_grid.iter().any(|r| !(0.5..=1.0).contains(r)) {
        return Err(Error::InvalidParams("rho grid must lie in [1/2, 1]".into()));
    }
    check_grid(rho_grid, true, "rho")?;
    continue_axis(params, cert, Axis::Rho, rho_grid, cfg, opts)
}

/// Levels along a descending b-grid ending at 0, with H¹ distances to the
/// final (semilinear) record and a fitted convergence order.
pub fn continue_b(
    params: &ProblemParams,
    cert: &GeometryCertificate,
    b_grid: &[f64],
    cfg: &SolverConfig,
    opts: &ContinuationOptions,
) -> Result<ContinuationRecord> {
    check_grid(b_grid, false, "b")?;
    if b_grid.last() != Some(&0.0) {
        return Err(Error::InvalidParams("b grid must end at 0".into()));
    }
    let mut rec = continue_axis(params, cert, Axis::B, b_grid, cfg, opts)?;
    let final_field = rec
        .steps
        .last()
        .filter(|s| s.param == 0.0)
        .and_then(|s| s.record.as_ref())
        .map(|r| r.field().clone());
    if let Some(u0) = final_field {
        for s in rec.steps.iter_mut() {
            s.h1_dist_final = Some(h1_distance(s.record.as_ref().expect("record").field(), &u0)?);
        }
        let pts: Vec<(f64, f64)> = rec
            .steps
            .iter()
            .filter(|s| s.param > 0.0 && s.h1_dist_final.unwrap_or(0.0) > 0.0)
            .map(|s| (s.param.ln(), s.h1_dist_final.unwrap().ln()))
            .collect();
        rec.order_fit = fit_slope(&pts);
    }
    Ok(rec)
}

/// Warm-started sweep over a list of masses (any order).
pub fn continue_c(
    params: &ProblemParams,
    cert: &GeometryCertificate,
    c_grid: &[f64],
    cfg: &SolverConfig,
    opts: &ContinuationOptions,
) -> Result<ContinuationRecord> {
    if c_grid.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidParams("masses must be positive".into()));
    }
    continue_axis(params, cert, Axis::C, c_grid, cfg, opts)
}

/// Least-squares slope of `y` against `x`; `None` for fewer than two points.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
