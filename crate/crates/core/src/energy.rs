//! The Kirchhoff energy family
//!
//! ```text
//! J_ρ(u) = a/2 ∫|∇u|² + b/4 (∫|∇u|²)² − ρ/p ∫|u|^p
//! ```
//!
//! with its L²-gradient and Hessian action. The Hessian carries the
//! nonlocal rank-one term `2b (∫∇u·∇v) (−Δu)` coming from the Kirchhoff
//! coefficient. `e = ∫|∇u|²` is recomputed from `u` on every call.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, pow_abs, Field, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub rho: f64,
    pub grid: Arc<Grid>,
}

impl ProblemParams {
    /// Validates `a > 0`, `b >= 0`, `c > 0`, `ρ ∈ [0, 1]` and the
    /// L²-supercritical window `2 + 8/N < p` (with `p < 2N/(N−2)` for `N >= 3`).
    pub fn new(a: f64, b: f64, c: f64, p: f64, rho: f64, grid: Arc<Grid>) -> Result<Self> {
        let fin = [a, b, c, p, rho].iter().all(|v| v.is_finite());
        if !fin {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if a <= 0.0 {
            return Err(Error::InvalidParams(format!("a must be positive, got {a}")));
        }
        if b < 0.0 {
            return Err(Error::InvalidParams(format!("b must be nonnegative, got {b}")));
        }
        if c <= 0.0 {
            return Err(Error::InvalidParams(format!("mass c must be positive, got {c}")));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParams(format!("rho must lie in [0, 1], got {rho}")));
        }
        let dim = grid.dim() as f64;
        let lower = 2.0 + 8.0 / dim;
        if p <= lower {
            return Err(Error::InvalidParams(format!(
                "p = {p} is not L2-supercritical (need p > {lower})"
            )));
        }
        if grid.dim() >= 3 {
            let upper = 2.0 * dim / (dim - 2.0);
            if p >= upper {
                return Err(Error::InvalidParams(format!(
                    "p = {p} is not Sobolev-subcritical (need p < {upper})"
                )));
            }
        }
        Ok(Self { a, b, c, p, rho, grid })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.a, self.b, self.c, self.p, rho, Arc::clone(&self.grid))
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        Self::new(self.a, b, self.c, self.p, self.rho, Arc::clone(&self.grid))
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::new(self.a, self.b, c, self.p, self.rho, Arc::clone(&self.grid))
    }

    fn check(&self, u: &Field) -> Result<()> {
        if **u.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Kirchhoff coefficient `a + b e`.
    pub fn kappa(&self, e: f64) -> f64 {
        self.a + self.b * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `∫|∇u|²`
    pub e: f64,
    /// `J(u)` (ρ = 1)
    pub j: f64,
    /// `J_ρ(u)`
    pub j_rho: f64,
    /// `∫|u|^p`
    pub lp: f64,
}

pub fn energy(params: &ProblemParams, u: &Field) -> Result<EnergyReport> {
    params.check(u)?;
    let e = grid::grad_norm_sq(u);
    let lp = grid::lp_integral(u, params.p)?;
    let quad = 0.5 * params.a * e + 0.25 * params.b * e * e;
    Ok(EnergyReport {
        e,
        j: quad - lp / params.p,
        j_rho: quad - params.rho * lp / params.p,
        lp,
    })
}

/// `sign(u)|u|^{q}`, safe at `u = 0` for fractional `q`.
#[inline]
pub(crate) fn signed_pow(u: f64, q: f64) -> f64 {
    pow_abs(u, q).copysign(u)
}

/// L²-representation of `J_ρ'(u)`: `−(a + b e)Δu − ρ|u|^{p−2}u`.
pub fn gradient(params: &ProblemParams, u: &Field) -> Result<Field> {
    params.check(u)?;
    let g = params.grid.as_ref();
    let lap = g.laplacian_vec(u.values());
    let e = -g.dot(u.values(), &lap);
    let kappa = params.kappa(e);
    let q = params.p - 1.0;
    let vals = u
        .values()
        .iter()
        .zip(&lap)
        .map(|(&x, &l)| -kappa * l - params.rho * signed_pow(x, q))
        .collect();
    Ok(u.with_values(vals))
}

/// Cached pieces of the Hessian at a fixed `u`, so that repeated products
/// (Krylov and Lanczos iterations) do not redo the nonlocal work.
#[derive(Debug, Clone)]
pub struct HessianAt {
    grid: Arc<Grid>,
    kappa: f64,
    b: f64,
    /// `−Δu`
    neg_lap_u: Vec<f64>,
    /// `ρ(p−1)|u|^{p−2}`
    potential: Vec<f64>,
}

impl HessianAt {
    pub fn new(params: &ProblemParams, u: &Field) -> Result<Self> {
        params.check(u)?;
        let g = params.grid.as_ref();
        let neg_lap_u: Vec<f64> = g.laplacian_vec(u.values()).iter().map(|v| -v).collect();
        let e = g.dot(u.values(), &neg_lap_u);
        let q = params.p - 2.0;
        let potential = u
            .values()
            .iter()
            .map(|&x| params.rho * (params.p - 1.0) * pow_abs(x, q))
            .collect();
        Ok(Self {
            grid: Arc::clone(&params.grid),
            kappa: params.kappa(e),
            b: params.b,
            neg_lap_u,
            potential,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// `H_u v` on raw nodal vectors.
    pub fn apply_slice(&self, v: &[f64], out: &mut [f64]) {
        let g = self.grid.as_ref();
        g.laplacian_into(v, out);
        let coupling = 2.0 * self.b * g.dot(v, &self.neg_lap_u);
        for k in 0..v.len() {
            out[k] = -self.kappa * out[k] + coupling * self.neg_lap_u[k] - self.potential[k] * v[k];
        }
    }

    pub fn apply(&self, v: &Field) -> Result<Field> {
        if **v.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; v.len()];
        self.apply_slice(v.values(), &mut out);
        Ok(v.with_values(out))
    }
}

/// `H_u v = −(a + b e)Δv − 2b (∫∇u·∇v) Δu − ρ(p−1)|u|^{p−2} v`.
pub fn hessian_apply(params: &ProblemParams, u: &Field, v: &Field) -> Result<Field> {
    u.check_same_grid(v)?;
    HessianAt::new(params, u)?.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad_norm_sq, inner_l2, laplacian_apply, norm_l2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Arc<Grid> {
        Arc::new(Grid::interval(1.0, n).unwrap())
    }

    fn smooth_random(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
        let coeffs: Vec<f64> = (1..=6).map(|k| rng.random_range(-1.0..1.0) / k as f64).collect();
        let f = Field::from_fn(g, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * PI * x[0]).sin())
                .sum()
        });
        let n = norm_l2(&f);
        f.scaled(1.0 / n)
    }

    #[test]
    fn parameter_window() {
        let g = unit(32);
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 10.0, 1.0, g.clone()).is_err());
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 10.5, 1.0, g.clone()).is_ok());
        assert!(ProblemParams::new(0.0, 1.0, 0.5, 12.0, 1.0, g.clone()).is_err());
        assert!(ProblemParams::new(1.0, -1.0, 0.5, 12.0, 1.0, g.clone()).is_err());
        assert!(ProblemParams::new(1.0, 0.0, 0.5, 12.0, 1.0, g.clone()).is_ok());
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 12.0, 1.5, g.clone()).is_err());
        let g2 = Arc::new(Grid::rectangle(1.0, 1.0, 16, 16).unwrap());
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 6.0, 1.0, g2.clone()).is_err());
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 7.0, 1.0, g2).is_ok());
    }

    #[test]
    fn zero_field() {
        let g = unit(64);
        let p = ProblemParams::new(1.0, 1.0, 1.0, 12.0, 1.0, g.clone()).unwrap();
        let z = Field::zeros(&g);
        let r = energy(&p, &z).unwrap();
        assert_eq!((r.e, r.j, r.j_rho, r.lp), (0.0, 0.0, 0.0, 0.0));
        assert!(gradient(&p, &z).unwrap().values().iter().all(|&v| v == 0.0));
        let v = Field::from_fn(&g, |x| x[0]);
        assert!(hessian_apply(&p, &v, &z)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn term_deletion_cases() {
        let g = unit(128);
        let p = ProblemParams::new(2.5, 0.0, 1.0, 12.0, 0.0, g.clone()).unwrap();
        let u = Field::from_fn(&g, |x| x[0] * (1.0 - x[0]));
        let r = energy(&p, &u).unwrap();
        assert!((r.j_rho - 1.25 * grad_norm_sq(&u)).abs() < 1e-14);
        let grad = gradient(&p, &u).unwrap();
        let lap = laplacian_apply(&u);
        for (a, b) in grad.values().iter().zip(lap.values()) {
            assert!((a + 2.5 * b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn energy_of_scaled_eigenfunction() {
        let g = unit(4095);
        let p = ProblemParams::new(1.0, 1.0, 1.0, 12.0, 1.0, g.clone()).unwrap();
        let u = Field::from_fn(&g, |x| 2f64.sqrt() * (PI * x[0]).sin());
        // ∫ 2^6 sin^12(πx) dx by a fine midpoint rule
        let m = 400_000;
        let i12: f64 = (0..m)
            .map(|k| 64.0 * (PI * (k as f64 + 0.5) / m as f64).sin().powi(12))
            .sum::<f64>()
            / m as f64;
        let expect = PI * PI / 2.0 + PI.powi(4) / 4.0 - i12 / 12.0;
        let r = energy(&p, &u).unwrap();
        assert!((r.j - expect).abs() < 1e-4 * expect.abs(), "{} vs {expect}", r.j);
        let rebuilt = 0.5 * p.a * r.e + 0.25 * p.b * r.e * r.e - p.rho / p.p * r.lp;
        assert!((r.j_rho - rebuilt).abs() < 1e-13 * rebuilt.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = unit(1023);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (a, b, rho, p) in [(1.0, 1.0, 1.0, 12.0), (0.5, 2.0, 0.5, 10.5), (1.0, 0.0, 0.7, 14.0)] {
            let params = ProblemParams::new(a, b, 1.0, p, rho, g.clone()).unwrap();
            let u = smooth_random(&g, &mut rng);
            let v = smooth_random(&g, &mut rng);
            let t = 1e-5;
            let jp = energy(&params, &u.axpy(t, &v).unwrap()).unwrap().j_rho;
            let jm = energy(&params, &u.axpy(-t, &v).unwrap()).unwrap().j_rho;
            let fd = (jp - jm) / (2.0 * t);
            let an = inner_l2(&gradient(&params, &u).unwrap(), &v).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "fd {fd} an {an}");
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_gradient_differences() {
        let g = unit(1023);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ProblemParams::new(1.0, 1.0, 1.0, 12.0, 1.0, g.clone()).unwrap();
        let u = smooth_random(&g, &mut rng);
        let v = smooth_random(&g, &mut rng);
        let w = smooth_random(&g, &mut rng);
        let hv = hessian_apply(&params, &u, &v).unwrap();
        let hw = hessian_apply(&params, &u, &w).unwrap();
        let s1 = inner_l2(&hv, &w).unwrap();
        let s2 = inner_l2(&hw, &v).unwrap();
        assert!((s1 - s2).abs() <= 1e-10 * s1.abs().max(1.0));
        let t = 1e-4;
        let gp = gradient(&params, &u.axpy(t, &v).unwrap()).unwrap();
        let gm = gradient(&params, &u.axpy(-t, &v).unwrap()).unwrap();
        let fd = gp.combine(0.5 / t, -0.5 / t, &gm).unwrap();
        let rel = norm_l2(&fd.axpy(-1.0, &hv).unwrap()) / norm_l2(&hv);
        assert!(rel <= 1e-5, "rel {rel}");
    }

    #[test]
    fn energy_monotone_in_rho_and_b() {
        let g = unit(255);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = smooth_random(&g, &mut rng).scaled(3.0);
        let base = ProblemParams::new(1.0, 1.0, 1.0, 12.0, 0.5, g.clone()).unwrap();
        let mut prev = f64::INFINITY;
        for rho in [0.5, 0.6, 0.8, 1.0] {
            let j = energy(&base.with_rho(rho).unwrap(), &u).unwrap().j_rho;
            assert!(j <= prev);
            prev = j;
        }
        let mut prev = f64::NEG_INFINITY;
        for b in [0.0, 1e-3, 0.1, 1.0] {
            let j = energy(&base.with_b(b).unwrap(), &u).unwrap().j_rho;
            assert!(j >= prev);
            prev = j;
        }
    }

    #[test]
    fn fractional_exponent_is_finite_at_zero() {
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 16, 16).unwrap());
        let params = ProblemParams::new(1.0, 1.0, 1.0, 6.5, 1.0, g.clone()).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] - 0.5) * x[1]);
        let grad = gradient(&params, &u).unwrap();
        assert!(grad.values().iter().all(|v| v.is_finite()));
    }
}
