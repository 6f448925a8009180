//! Uniform tensor grids on an interval or a rectangle with homogeneous
//! Dirichlet data, the five-point (three-point in 1D) Laplacian, and the
//! nodal-sum quadrature that is consistent with it.
//!
//! Only interior nodes are stored. Boundary nodes carry the value zero
//! implicitly, so every quadrature below is `h^dim * sum` over interior
//! nodes, and `grad_norm_sq(u) == inner_l2(u, -Δu)` holds exactly up to
//! roundoff (summation by parts).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum interior node count per axis.
pub const MIN_NODES: usize = 16;

/// A point in physical coordinates. The second component is ignored in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
}

impl Grid {
    pub fn new(extents: &[f64], n: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} node counts given for a {dim}-dimensional grid",
                n.len()
            )));
        }
        for (&l, &k) in extents.iter().zip(n) {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("extent must be positive, got {l}")));
            }
            if k < MIN_NODES {
                return Err(Error::InvalidGrid(format!(
                    "need at least {MIN_NODES} interior nodes per axis, got {k}"
                )));
            }
        }
        let h = extents
            .iter()
            .zip(n)
            .map(|(&l, &k)| l / (k as f64 + 1.0))
            .collect();
        Ok(Self {
            dim,
            extents: extents.to_vec(),
            n: n.to_vec(),
            h,
        })
    }

    pub fn interval(length: f64, n: usize) -> Result<Self> {
        Self::new(&[length], &[n])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h_x` (1D) or `h_x h_y` (2D).
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; 2];
        for (k, l) in self.extents.iter().enumerate() {
            c[k] = 0.5 * l;
        }
        c
    }

    /// Physical coordinates of interior node `idx` (x index fastest).
    pub fn coord(&self, idx: usize) -> Point {
        let i = idx % self.n[0];
        let x = (i as f64 + 1.0) * self.h[0];
        if self.dim == 1 {
            [x, 0.0]
        } else {
            let j = idx / self.n[0];
            [x, (j as f64 + 1.0) * self.h[1]]
        }
    }

    /// Axis indices of a flat node index.
    pub fn split_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.n[0], idx / self.n[0])
    }

    /// Average of `v` over the reflections `x_k -> L_k - x_k`.
    pub fn symmetrize(&self, v: &mut [f64]) {
        let nx = self.n[0];
        let ny = if self.dim == 1 { 1 } else { self.n[1] };
        for j in 0..ny {
            let row = &mut v[j * nx..(j + 1) * nx];
            for i in 0..nx / 2 {
                let m = 0.5 * (row[i] + row[nx - 1 - i]);
                row[i] = m;
                row[nx - 1 - i] = m;
            }
        }
        for j in 0..ny / 2 {
            for i in 0..nx {
                let (a, b) = (j * nx + i, (ny - 1 - j) * nx + i);
                let m = 0.5 * (v[a] + v[b]);
                v[a] = m;
                v[b] = m;
            }
        }
    }

    /// Distance from a point to the boundary of the domain.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        (0..self.dim)
            .map(|k| x[k].min(self.extents[k] - x[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when a node is adjacent to the boundary (its stencil touches a
    /// Dirichlet node).
    pub fn on_boundary_ring(&self, idx: usize) -> bool {
        let (i, j) = self.split_index(idx);
        let edge_x = i == 0 || i + 1 == self.n[0];
        if self.dim == 1 {
            edge_x
        } else {
            edge_x || j == 0 || j + 1 == self.n[1]
        }
    }

    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.n[0];
        let ihx2 = 1.0 / (self.h[0] * self.h[0]);
        if self.dim == 1 {
            for i in 0..nx {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < nx { u[i + 1] } else { 0.0 };
                out[i] = (l - 2.0 * u[i] + r) * ihx2;
            }
            return;
        }
        let ny = self.n[1];
        let ihy2 = 1.0 / (self.h[1] * self.h[1]);
        for j in 0..ny {
            for i in 0..nx {
                let k = i + nx * j;
                let l = if i > 0 { u[k - 1] } else { 0.0 };
                let r = if i + 1 < nx { u[k + 1] } else { 0.0 };
                let d = if j > 0 { u[k - nx] } else { 0.0 };
                let t = if j + 1 < ny { u[k + nx] } else { 0.0 };
                out[k] = (l - 2.0 * u[k] + r) * ihx2 + (d - 2.0 * u[k] + t) * ihy2;
            }
        }
    }

    pub(crate) fn laplacian_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(u, &mut out);
        out
    }

    pub(crate) fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.cell_volume() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Edge-difference form of `∫|∇u|²`.
    pub(crate) fn grad_sq(&self, u: &[f64]) -> f64 {
        let nx = self.n[0];
        let hx = self.h[0];
        let at = |k: isize, len: usize| -> f64 {
            if k < 0 || k as usize >= len {
                0.0
            } else {
                u[k as usize]
            }
        };
        if self.dim == 1 {
            let mut s = 0.0;
            for i in 0..=nx as isize {
                let d = at(i, nx) - at(i - 1, nx);
                s += d * d;
            }
            return s / hx;
        }
        let ny = self.n[1];
        let hy = self.h[1];
        let mut sx = 0.0;
        let mut sy = 0.0;
        for j in 0..ny {
            let row = &u[j * nx..(j + 1) * nx];
            let mut prev = 0.0;
            for &v in row {
                sx += (v - prev) * (v - prev);
                prev = v;
            }
            sx += prev * prev;
        }
        for i in 0..nx {
            let mut prev = 0.0;
            for j in 0..ny {
                let v = u[i + nx * j];
                sy += (v - prev) * (v - prev);
                prev = v;
            }
            sy += prev * prev;
        }
        sx * hy / hx + sy * hx / hy
    }

    /// Multilinear interpolation of nodal values at `x`, extending by zero
    /// on and outside the boundary.
    pub(crate) fn interpolate(&self, u: &[f64], x: Point) -> f64 {
        let axis = |k: usize| -> Option<(isize, f64)> {
            let s = x[k] / self.h[k];
            if !(s > 0.0 && s < self.n[k] as f64 + 1.0) {
                return None;
            }
            let fl = s.floor();
            // node index s = m + 1 maps to interior slot m
            Some((fl as isize - 1, s - fl))
        };
        let val = |i: isize, j: isize| -> f64 {
            if i < 0 || i as usize >= self.n[0] {
                return 0.0;
            }
            if self.dim == 1 {
                return u[i as usize];
            }
            if j < 0 || j as usize >= self.n[1] {
                return 0.0;
            }
            u[i as usize + self.n[0] * j as usize]
        };
        let Some((i0, tx)) = axis(0) else { return 0.0 };
        if self.dim == 1 {
            return (1.0 - tx) * val(i0, 0) + tx * val(i0 + 1, 0);
        }
        let Some((j0, ty)) = axis(1) else { return 0.0 };
        (1.0 - tx) * (1.0 - ty) * val(i0, j0)
            + tx * (1.0 - ty) * val(i0 + 1, j0)
            + (1.0 - tx) * ty * val(i0, j0 + 1)
            + tx * ty * val(i0 + 1, j0 + 1)
    }
}

/// A grid function on interior nodes.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coord(k))).collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Value at a physical point: multilinear interpolation, exactly zero on
    /// the boundary and outside the domain.
    pub fn sample(&self, x: Point) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| s * v).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        ))
    }

    /// `alpha * self + beta * other`
    pub fn combine(&self, alpha: f64, beta: f64, other: &Field) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    /// Even part under the domain reflections.
    pub fn symmetrized(&self) -> Self {
        let mut v = self.values.clone();
        self.grid.symmetrize(&mut v);
        self.with_values(v)
    }

    pub fn abs(&self) -> Self {
        self.with_values(self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Index of the largest value; smallest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }
}

/// Discrete Dirichlet Laplacian `Δu` (not `-Δu`).
pub fn laplacian_apply(u: &Field) -> Field {
    u.with_values(u.grid.laplacian_vec(&u.values))
}

pub fn inner_l2(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u.grid.dot(&u.values, &v.values))
}

pub fn norm_l2_sq(u: &Field) -> f64 {
    u.grid.dot(&u.values, &u.values)
}

pub fn norm_l2(u: &Field) -> f64 {
    norm_l2_sq(u).sqrt()
}

/// `∫|∇u|²` from edge differences; equals `inner_l2(u, -Δu)`.
pub fn grad_norm_sq(u: &Field) -> f64 {
    u.grid.grad_sq(&u.values)
}

/// `∫∇u·∇v`, evaluated as `inner_l2(u, -Δv)`.
pub fn grad_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    let lv = u.grid.laplacian_vec(&v.values);
    Ok(-u.grid.dot(&u.values, &lv))
}

/// Squared `H¹₀` norm `∫u² + ∫|∇u|²`.
pub fn h1_norm_sq(u: &Field) -> f64 {
    norm_l2_sq(u) + grad_norm_sq(u)
}

pub fn h1_distance(u: &Field, v: &Field) -> Result<f64> {
    Ok(h1_norm_sq(&u.axpy(-1.0, v)?).sqrt())
}

/// `∫|u|^q` for `q >= 1`.
pub fn lp_integral(u: &Field, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidExponent(q));
    }
    let s: f64 = if q == 2.0 {
        u.values.iter().map(|v| v * v).sum()
    } else {
        u.values.iter().map(|v| pow_abs(*v, q)).sum()
    };
    Ok(u.grid.cell_volume() * s)
}

/// `|x|^q`, using integer powers when `q` is integral.
#[inline]
pub(crate) fn pow_abs(x: f64, q: f64) -> f64 {
    let a = x.abs();
    if q.fract() == 0.0 && q.abs() < 64.0 {
        a.powi(q as i32)
    } else if a == 0.0 {
        0.0
    } else {
        a.powf(q)
    }
}
