//! Dirichlet eigenpairs and the constrained Morse index.
//!
//! Both eigenproblems run Lanczos on a bounded, shift-inverted operator:
//! `(-Δ)^{-1}` for the Laplacian, and `B^{-1}(H_u + λ)` restricted to the
//! tangent space for the Morse index, where `B = I − Δ` is the `H¹₀` Gram
//! operator. The Morse comparison norm is therefore `∫v² + ∫|∇v|²`, and
//! the generalized eigenvalues are exactly the Rayleigh quotients compared
//! against `−θ` in the approximate index.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{HessianAt, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::lanczos;
use crate::poisson::DirichletSolver;
use crate::solve::SolutionRecord;

/// Number of low eigenvalues reported in a [`MorseReport`].
pub const MORSE_WINDOW: usize = 6;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit L² norm; the first eigenvector is positive.
    pub vector: Field,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorseReport {
    pub index: usize,
    pub theta: f64,
    /// Lowest values of the projected second-order form, relative to the
    /// `H¹₀` norm, ascending.
    pub eigenvalues: Vec<f64>,
    /// Magnitudes at or below this are treated as zero (roundoff floor).
    pub zero_tolerance: f64,
    #[serde(skip)]
    pub vectors: Vec<Field>,
}

fn start_vector(grid: &Grid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len()).map(|_| rng.random_range(-1.0..1.0) + 0.5).collect()
}

/// Roundoff floor for `‖−Δv − μv‖` with a unit vector `v`: nodal rounding
/// of `v`, grown by the transforms, amplified by `‖Δ‖`.
fn residual_floor(grid: &Grid) -> f64 {
    let spectral_radius: f64 = grid.h().iter().map(|h| 4.0 / (h * h)).sum();
    let depth = (2.0 * (grid.len() as f64 + 1.0)).log2();
    4.0 * depth * f64::EPSILON * spectral_radius
}

/// The `k` lowest eigenpairs of the discrete Dirichlet `-Δ`, ascending.
pub fn dirichlet_eigs(grid: &Arc<Grid>, k: usize) -> Result<Vec<EigenPair>> {
    if k == 0 || k > 10 {
        return Err(Error::InvalidParams(format!("k must lie in 1..=10, got {k}")));
    }
    let solver = DirichletSolver::new(grid);
    let dot = |a: &[f64], b: &[f64]| grid.dot(a, b);
    let start = start_vector(grid, 0x5eed);
    let floor = residual_floor(grid);
    let mut steps = (4 * k + 30).min(grid.len());
    let mut worst;
    loop {
        let ritz = lanczos(|x| solver.solve_shifted(1.0, 0.0, x), dot, &start, steps);
        let mut pairs: Vec<EigenPair> = ritz
            .iter()
            .rev()
            .take(k)
            .map(|r| {
                let norm = dot(&r.vector, &r.vector).sqrt();
                let mut v: Vec<f64> = r.vector.iter().map(|x| x / norm).collect();
                if v.iter().sum::<f64>() < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                EigenPair {
                    value: 1.0 / r.value,
                    vector: Field::from_values(grid, v).expect("length matches grid"),
                }
            })
            .collect();
        pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
        worst = pairs
            .iter()
            .map(|p| {
                let lap = grid.laplacian_vec(p.vector.values());
                let r: Vec<f64> = lap
                    .iter()
                    .zip(p.vector.values())
                    .map(|(l, v)| -l - p.value * v)
                    .collect();
                dot(&r, &r).sqrt() / (p.value.abs() * 1e-8 + floor)
            })
            .fold(0.0, f64::max);
        if pairs.len() == k && worst <= 1.0 {
            return Ok(pairs);
        }
        if steps >= grid.len().min(1280) {
            break;
        }
        steps = (2 * steps).min(grid.len());
    }
    Err(Error::EigenNotConverged { residual: worst })
}

/// Constrained Morse index of a solution record at threshold `θ >= 0`.
pub fn morse_index(
    params: &ProblemParams,
    record: &SolutionRecord,
    theta: f64,
) -> Result<MorseReport> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParams(format!("theta must be >= 0, got {theta}")));
    }
    record.check_invariants(params)?;
    morse_index_at(params, record.field(), record.lambda, theta)
}

/// Morse computation at an arbitrary point `u` of the sphere with
/// multiplier `λ` (no record invariants required).
pub fn morse_index_at(
    params: &ProblemParams,
    u: &Field,
    lambda: f64,
    theta: f64,
) -> Result<MorseReport> {
    let grid = Arc::clone(&params.grid);
    let hess = HessianAt::new(params, u)?;
    let solver = DirichletSolver::new(&grid);
    let g = grid.as_ref();
    let uvals = u.values();
    let z = solver.solve_shifted(1.0, 1.0, uvals);
    let uz = g.dot(uvals, &z);
    let project = |x: &mut Vec<f64>| {
        let s = g.dot(uvals, x) / uz;
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi -= s * zi;
        }
    };
    let scale = hess.kappa() + lambda.abs() + 1.0;
    // Projecting the input as well keeps roundoff in the normal direction
    // from being amplified by the large multiplier term; the normal
    // direction itself is sent to the top of the spectrum.
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut w = v.to_vec();
        project(&mut w);
        let normal: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        let mut hv = vec![0.0; w.len()];
        hess.apply_slice(&w, &mut hv);
        for (h, x) in hv.iter_mut().zip(&w) {
            *h += lambda * x;
        }
        let mut out = solver.solve_shifted(1.0, 1.0, &hv);
        project(&mut out);
        project(&mut out);
        for (o, n) in out.iter_mut().zip(&normal) {
            *o += scale * n;
        }
        out
    };
    let dot_b = |x: &[f64], y: &[f64]| -> f64 {
        let ly = g.laplacian_vec(y);
        g.cell_volume() * x.iter().zip(y).zip(&ly).map(|((a, b), l)| a * (b - l)).sum::<f64>()
    };
    let mut start = start_vector(g, 0x0a11);
    project(&mut start);
    let mut steps = (10 * MORSE_WINDOW).min(g.len() - 1);
    let want = MORSE_WINDOW.min(g.len() - 1);
    loop {
        let ritz = lanczos(&apply, dot_b, &start, steps);
        let low: Vec<_> = ritz.iter().take(want).collect();
        let converged = low.iter().all(|r| r.residual_bound <= 1e-8 * scale);
        if converged || steps >= (g.len() - 1).min(640) {
            if !converged {
                let worst = low.iter().map(|r| r.residual_bound).fold(0.0, f64::max);
                return Err(Error::EigenNotConverged { residual: worst });
            }
            let zero_tolerance = 1e-9 * scale;
            let eigenvalues: Vec<f64> = low.iter().map(|r| r.value).collect();
            let index = eigenvalues
                .iter()
                .filter(|&&mu| mu < -theta.max(zero_tolerance))
                .count();
            let vectors = low
                .iter()
                .map(|r| {
                    let mut v = r.vector.clone();
                    project(&mut v);
                    Field::from_values(&grid, v).expect("grid length")
                })
                .collect();
            return Ok(MorseReport {
                index,
                theta,
                eigenvalues,
                zero_tolerance,
                vectors,
            });
        }
        steps = (2 * steps).min(g.len() - 1);
    }
}
