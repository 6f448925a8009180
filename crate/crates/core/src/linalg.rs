//! Matrix-free Krylov kernels: restarted GMRES with right preconditioning
//! and Lanczos with full reorthogonalization. Both work in a caller-supplied
//! inner product, so L²-weighted and H¹-weighted problems share the code.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_restarts: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 200,
            max_restarts: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual relative to `‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
    /// Ratio of extreme diagonal entries of the triangularized Hessenberg
    /// matrix; a cheap lower estimate of the preconditioned condition number.
    pub condition_estimate: f64,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solve `A x = b` with GMRES(m), right-preconditioned by `M`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    dot: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    opts: &KrylovOptions,
) -> GmresOutcome {
    let n = b.len();
    let norm = |v: &[f64]| dot(v, v).max(0.0).sqrt();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            condition_estimate: 1.0,
        };
    }
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut rel = 1.0;
    let mut cond: f64 = 1.0;
    for _ in 0..=opts.max_restarts {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            return GmresOutcome {
                x,
                iterations: total,
                relative_residual: rel,
                converged: true,
                condition_estimate: cond,
            };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            zs.push(z);
            for (i, vi) in basis.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                axpy(&mut w, -hik, vi);
            }
            // second pass keeps the basis orthogonal in finite precision
            for (i, vi) in basis.iter().enumerate() {
                let corr = dot(&w, vi);
                hess[i][k] += corr;
                axpy(&mut w, -corr, vi);
            }
            let hnext = norm(&w);
            hess[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let den = hess[k][k].hypot(hess[k + 1][k]);
            if den == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / den;
                sn[k] = hess[k + 1][k] / den;
            }
            hess[k][k] = den;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= opts.tol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        let diag: Vec<f64> = (0..k_used).map(|i| hess[i][i].abs()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        cond = cond.max(if dmin > 0.0 { dmax / dmin } else { f64::INFINITY });
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        for (yi, zi) in y.iter().zip(&zs) {
            axpy(&mut x, *yi, zi);
        }
    }
    let ax = apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    rel = rel.max(norm(&r) / bnorm);
    GmresOutcome {
        x,
        iterations: total,
        relative_residual: rel,
        converged: rel <= opts.tol,
        condition_estimate: cond,
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `|β_m s_m|`, the Lanczos residual bound for this pair.
    pub residual_bound: f64,
}

/// `m` steps of Lanczos for an operator self-adjoint in `dot`, with full
/// reorthogonalization. Returns all Ritz pairs sorted by value (ascending);
/// vectors are unit in `dot`.
pub fn lanczos(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    dot: impl Fn(&[f64], &[f64]) -> f64,
    start: &[f64],
    m: usize,
) -> Vec<RitzPair> {
    let norm = |v: &[f64]| dot(v, v).max(0.0).sqrt();
    let s = norm(start);
    assert!(s > 0.0, "Lanczos start vector must be nonzero");
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / s).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_beta = 0.0;
    for k in 0..m {
        let mut w = apply(&basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                axpy(&mut w, -c, v);
            }
        }
        let b = norm(&w);
        last_beta = b;
        if k + 1 == m || b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order
        .into_iter()
        .map(|i| {
            let s = eig.eigenvectors.column(i);
            let mut vec = vec![0.0; start.len()];
            for (j, v) in basis.iter().enumerate().take(k) {
                axpy(&mut vec, s[j], v);
            }
            RitzPair {
                value: eig.eigenvalues[i],
                vector: vec,
                residual_bound: (last_beta * s[k - 1]).abs(),
            }
        })
        .collect()
}

/// Eigen-decomposition of a small symmetric matrix given row-major; values
/// ascending.
pub fn symmetric_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn tridiag(n: usize) -> impl Fn(&[f64]) -> Vec<f64> {
        move |x: &[f64]| {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                    3.0 * x[i] - l - r + if i == 0 { 0.5 * x[n - 1] } else { 0.0 }
                })
                .collect()
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 120;
        let a = tridiag(n);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let out = gmres(&a, |v: &[f64]| v.to_vec(), euclid, &b, &KrylovOptions::default());
        assert!(out.converged);
        let r: Vec<f64> = a(&out.x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(euclid(&r, &r).sqrt() <= 1e-9 * euclid(&b, &b).sqrt());
    }

    #[test]
    fn gmres_with_restarts_and_preconditioner() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let d2 = diag.clone();
        let a = move |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| d2[i] * x[i] + if i + 1 < n { 0.3 * x[i + 1] } else { 0.0 })
                .collect()
        };
        let m = |x: &[f64]| -> Vec<f64> { x.iter().zip(&diag).map(|(v, d)| v / d).collect() };
        let b = vec![1.0; n];
        let opts = KrylovOptions {
            tol: 1e-12,
            restart: 5,
            max_restarts: 50,
        };
        let out = gmres(a, m, euclid, &b, &opts);
        assert!(out.converged, "rel {}", out.relative_residual);
    }

    #[test]
    fn lanczos_finds_extreme_eigenvalues() {
        let n = 200;
        let diag: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let a = |x: &[f64]| -> Vec<f64> { x.iter().zip(&diag).map(|(v, d)| v * d).collect() };
        let start: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let pairs = lanczos(a, euclid, &start, 150);
        assert!((pairs[0].value - 1.0).abs() < 1e-8);
        assert!((pairs.last().unwrap().value - n as f64).abs() < 1e-6);
    }

    #[test]
    fn small_symmetric_eigenvalues() {
        let v = symmetric_eigenvalues(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
    }
}
