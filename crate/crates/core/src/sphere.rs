//! Operations on the mass sphere `S_c = { u : ∫u² = c }`.

use crate::energy::{self, HessianAt, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::{inner_l2, norm_l2_sq, Field};

/// Relative mass defect accepted by the tangent-space operations.
pub const SPHERE_TOL: f64 = 1e-8;
/// Relative overlap with `u` accepted for a tangent direction.
pub const TANGENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct SphereOps<'a> {
    params: &'a ProblemParams,
}

impl<'a> SphereOps<'a> {
    pub fn new(params: &'a ProblemParams) -> Self {
        Self { params }
    }

    pub fn mass(&self) -> f64 {
        self.params.c
    }

    /// Relative mass defect `|∫u² − c| / c`.
    pub fn mass_defect(&self, u: &Field) -> f64 {
        (norm_l2_sq(u) - self.params.c).abs() / self.params.c
    }

    fn check_on_sphere(&self, u: &Field) -> Result<()> {
        let defect = self.mass_defect(u);
        if defect > SPHERE_TOL {
            return Err(Error::OffSphere { defect });
        }
        Ok(())
    }

    /// Metric projection `√c u / ‖u‖`.
    pub fn normalize(&self, u: &Field) -> Result<Field> {
        let m = norm_l2_sq(u);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::ZeroField);
        }
        let mut out = u.scaled((self.params.c / m).sqrt());
        // one correction pass removes the last ulp-level drift
        let m2 = norm_l2_sq(&out);
        let s = (self.params.c / m2).sqrt();
        if s != 1.0 {
            out = out.scaled(s);
        }
        Ok(out)
    }

    /// `v − (⟨u, v⟩ / c) u`
    pub fn project_tangent(&self, u: &Field, v: &Field) -> Result<Field> {
        self.check_on_sphere(u)?;
        let s = inner_l2(u, v)? / norm_l2_sq(u);
        v.axpy(-s, u)
    }

    /// Tangential part of the gradient; its norm is the constrained residual.
    pub fn constrained_gradient(&self, u: &Field) -> Result<Field> {
        let g = energy::gradient(self.params, u)?;
        self.project_tangent(u, &g)
    }

    /// Rayleigh estimate `λ ≈ −⟨J_ρ'(u), u⟩ / c` of the multiplier.
    pub fn multiplier_estimate(&self, u: &Field) -> Result<f64> {
        let g = energy::gradient(self.params, u)?;
        Ok(-inner_l2(&g, u)? / self.params.c)
    }

    /// `D²J(u)[v, v] = ⟨H_u v, v⟩ − (⟨J'(u), u⟩ / c) ⟨v, v⟩` for tangent `v`.
    pub fn d2_form(&self, u: &Field, v: &Field) -> Result<f64> {
        self.d2_bilinear(u, v, v)
    }

    /// Symmetric bilinear form behind [`d2_form`](Self::d2_form).
    pub fn d2_bilinear(&self, u: &Field, v: &Field, w: &Field) -> Result<f64> {
        self.check_on_sphere(u)?;
        for x in [v, w] {
            let nx = norm_l2_sq(x).sqrt();
            if nx > 0.0 {
                let overlap = inner_l2(u, x)?.abs() / (nx * norm_l2_sq(u).sqrt());
                if overlap > TANGENT_TOL {
                    return Err(Error::NotTangent { overlap });
                }
            }
        }
        let lambda = self.multiplier_estimate(u)?;
        let h = HessianAt::new(self.params, u)?;
        let hv = h.apply(v)?;
        Ok(inner_l2(&hv, w)? + lambda * inner_l2(v, w)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, laplacian_apply, norm_l2};
    use crate::energy::ProblemParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup(c: f64, rho: f64, b: f64) -> ProblemParams {
        let g = Arc::new(Grid::interval(1.0, 255).unwrap());
        ProblemParams::new(1.0, b, c, 12.0, rho, g).unwrap()
    }

    fn wave(g: &Arc<Grid>, coeffs: &[f64]) -> Field {
        Field::from_fn(g, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * PI * x[0]).sin())
                .sum()
        })
    }

    #[test]
    fn normalize_fixed_point_and_scale_invariance() {
        let p = setup(0.4, 1.0, 1.0);
        let s = SphereOps::new(&p);
        let u = wave(&p.grid, &[1.0, 0.3, -0.2]);
        let n1 = s.normalize(&u).unwrap();
        let n2 = s.normalize(&u.scaled(2.0)).unwrap();
        assert!((norm_l2_sq(&n1) - 0.4).abs() <= 1e-12 * 0.4);
        let d = n1.axpy(-1.0, &n2).unwrap().max_abs();
        assert!(d < 1e-14);
        let again = s.normalize(&n1).unwrap();
        assert!(again.axpy(-1.0, &n1).unwrap().max_abs() < 1e-15);
        assert_eq!(s.normalize(&Field::zeros(&p.grid)), Err(Error::ZeroField));
    }

    #[test]
    fn projection_cases() {
        let p = setup(0.4, 1.0, 1.0);
        let s = SphereOps::new(&p);
        let u = s.normalize(&wave(&p.grid, &[1.0, 0.5])).unwrap();
        assert!(s.project_tangent(&u, &u).unwrap().max_abs() < 1e-14);
        let orth = wave(&p.grid, &[0.0, 0.0, 0.0, 1.0]);
        let orth = s.project_tangent(&u, &orth).unwrap();
        let again = s.project_tangent(&u, &orth).unwrap();
        assert!(again.axpy(-1.0, &orth).unwrap().max_abs() < 1e-14);
        let off = u.scaled(1.1);
        assert!(matches!(s.project_tangent(&off, &orth), Err(Error::OffSphere { .. })));
    }

    #[test]
    fn eigenfunction_is_critical_for_quadratic_part() {
        let p = setup(0.4, 0.0, 0.0);
        let s = SphereOps::new(&p);
        // discrete first eigenvector of −Δ on the grid is exactly sin(πx_i)
        let u = s.normalize(&wave(&p.grid, &[1.0])).unwrap();
        let cg = s.constrained_gradient(&u).unwrap();
        let g = energy::gradient(&p, &u).unwrap();
        assert!(norm_l2(&cg) <= 1e-10 * norm_l2(&g));
        // the multiplier is minus the discrete eigenvalue times a
        let lap = laplacian_apply(&u);
        let mu = -inner_l2(&lap, &u).unwrap() / 0.4;
        assert!((s.multiplier_estimate(&u).unwrap() + mu).abs() < 1e-9 * mu);
    }

    #[test]
    fn already_tangent_gradient_is_unchanged() {
        let p = setup(0.4, 1.0, 1.0);
        let s = SphereOps::new(&p);
        let u = s.normalize(&wave(&p.grid, &[1.0, 0.2])).unwrap();
        let cg = s.constrained_gradient(&u).unwrap();
        let cg2 = s.project_tangent(&u, &cg).unwrap();
        assert!(cg2.axpy(-1.0, &cg).unwrap().max_abs() <= 1e-12 * cg.max_abs());
    }

    #[test]
    fn d2_form_is_quadratic_and_rejects_normal_directions() {
        let p = setup(0.4, 1.0, 1.0);
        let s = SphereOps::new(&p);
        let u = s.normalize(&wave(&p.grid, &[1.0, 0.2])).unwrap();
        let v = s.project_tangent(&u, &wave(&p.grid, &[0.1, 1.0, 0.3])).unwrap();
        assert_eq!(s.d2_form(&u, &Field::zeros(&p.grid)).unwrap(), 0.0);
        let d1 = s.d2_form(&u, &v).unwrap();
        let d3 = s.d2_form(&u, &v.scaled(3.0)).unwrap();
        assert!((d3 - 9.0 * d1).abs() <= 1e-12 * d3.abs());
        assert!(matches!(s.d2_form(&u, &u), Err(Error::NotTangent { .. })));
    }

    proptest! {
        #[test]
        fn projection_linear_idempotent_self_adjoint(
            a in prop::collection::vec(-1.0f64..1.0, 4),
            b in prop::collection::vec(-1.0f64..1.0, 4),
            w in prop::collection::vec(-1.0f64..1.0, 4),
            alpha in -3.0f64..3.0,
        ) {
            let p = setup(0.7, 1.0, 1.0);
            let s = SphereOps::new(&p);
            let mut base = w.clone();
            base[0] += 2.0;
            let u = s.normalize(&wave(&p.grid, &base)).unwrap();
            let v1 = wave(&p.grid, &a);
            let v2 = wave(&p.grid, &b);
            let pv1 = s.project_tangent(&u, &v1).unwrap();
            let pv2 = s.project_tangent(&u, &v2).unwrap();
            let scale = 1.0 + v1.max_abs() + v2.max_abs();
            // orthogonality
            prop_assert!(inner_l2(&u, &pv1).unwrap().abs() <= 1e-10 * norm_l2(&v1).max(1e-300) * 0.7f64.sqrt() + 1e-14);
            // linearity
            let comb = s.project_tangent(&u, &v1.axpy(alpha, &v2).unwrap()).unwrap();
            let lin = pv1.axpy(alpha, &pv2).unwrap();
            prop_assert!(comb.axpy(-1.0, &lin).unwrap().max_abs() <= 1e-12 * scale * (1.0 + alpha.abs()));
            // idempotence
            let pp = s.project_tangent(&u, &pv1).unwrap();
            prop_assert!(pp.axpy(-1.0, &pv1).unwrap().max_abs() <= 1e-12 * scale);
            // self-adjointness
            let l = inner_l2(&pv1, &v2).unwrap();
            let r = inner_l2(&v1, &pv2).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * scale * scale);
        }
    }
}
