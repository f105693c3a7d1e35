//! Differential geometry of level-set surfaces and the Piola transforms
//! between a polyhedral face and the smooth surface it approximates.
//!
//! The smooth surface is `ψ(x) = 0` with `ψ(x) = Σ xᵢ²/aᵢ² − 1`. Points near
//! the surface are described by their closest point `p`, the signed distance
//! `d` (negative inside), the outward normal `ν = ∇d` and the Weingarten map
//! `H = D²d`, all evaluated at the query point itself.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum admissible value of `ν·ν_K` before a face is considered too far
/// from the surface's tangent plane.
pub const DEFAULT_MIN_ALIGNMENT: f64 = 0.1;

const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("closest-point iteration did not converge for x = {x:?} (residual {residual:e})")]
    NoConvergence { x: [f64; 3], residual: f64 },
    #[error("degenerate geometry: ν·ν_K = {alignment} is below the threshold {threshold}")]
    DegenerateGeometry { alignment: f64, threshold: f64 },
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Ellipsoid,
    Sphere,
}

/// Axis-aligned ellipsoid (or sphere) centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetSurface {
    kind: SurfaceKind,
    semi_axes: [f64; 3],
    tube_halfwidth: f64,
}

impl LevelSetSurface {
    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        let axes = [a, b, c];
        if axes.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(GeometryError::InvalidSurface(format!(
                "semi-axes must be positive, got {axes:?}"
            )));
        }
        // half the smallest principal radius of curvature, min aᵢ² / max aⱼ
        let min = a.min(b).min(c);
        let max = a.max(b).max(c);
        Ok(Self {
            kind: SurfaceKind::Ellipsoid,
            semi_axes: axes,
            tube_halfwidth: 0.5 * min * min / max,
        })
    }

    pub fn sphere(radius: f64) -> Result<Self, GeometryError> {
        let mut s = Self::ellipsoid(radius, radius, radius)?;
        s.kind = SurfaceKind::Sphere;
        Ok(s)
    }

    /// The ellipsoid used throughout the convergence experiments.
    pub fn reference_ellipsoid() -> Self {
        Self::ellipsoid(1.1, 1.2, 1.3).expect("valid axes")
    }

    pub fn with_tube_halfwidth(mut self, delta: f64) -> Self {
        self.tube_halfwidth = delta;
        self
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn semi_axes(&self) -> [f64; 3] {
        self.semi_axes
    }

    pub fn tube_halfwidth(&self) -> f64 {
        self.tube_halfwidth
    }

    /// Diameter of the surface (twice the largest semi-axis).
    pub fn diam(&self) -> f64 {
        2.0 * self.semi_axes.iter().cloned().fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn inv_sq(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| 1.0 / (self.semi_axes[i] * self.semi_axes[i]))
    }

    pub fn psi(&self, x: &Vector3<f64>) -> f64 {
        x.component_mul(x).dot(&self.inv_sq()) - 1.0
    }

    pub fn grad_psi(&self, x: &Vector3<f64>) -> Vector3<f64> {
        2.0 * x.component_mul(&self.inv_sq())
    }

    pub fn hessian_psi(&self, _x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_diagonal(&(2.0 * self.inv_sq()))
    }

    /// Level-set unit normal `∇ψ/|∇ψ|`; agrees with `ν` on the surface.
    pub fn level_set_normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.grad_psi(x).normalize()
    }

    /// Maps `x` along the ray from the centre onto the surface.
    pub fn radial_projection(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let q = self.psi(x) + 1.0;
        x / q.sqrt()
    }

    /// Closest point projection and the differential geometry at `x`.
    ///
    /// Solves the Lagrange system `y + λ∇ψ(y) = x, ψ(y) = 0` by damped
    /// Newton, starting from the radial projection of `x`.
    pub fn closest_point(&self, x: &Vector3<f64>) -> Result<SurfacePoint, GeometryError> {
        let scale = self.diam();
        let fail = |residual: f64| GeometryError::NoConvergence {
            x: [x[0], x[1], x[2]],
            residual,
        };
        if x.norm() <= 1e-8 * scale {
            return Err(fail(f64::INFINITY));
        }

        let mut y = self.radial_projection(x);
        let g0 = self.grad_psi(&y);
        let mut lambda = (x - y).dot(&g0) / g0.norm_squared();

        let residual = |y: &Vector3<f64>, lambda: f64| -> Vector4<f64> {
            let r = y - x + lambda * self.grad_psi(y);
            Vector4::new(r[0], r[1], r[2], self.psi(y))
        };
        let mut res = residual(&y, lambda);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let res_norm = res.norm();
            let g = self.grad_psi(&y);
            let hess = self.hessian_psi(&y);
            let jb = Matrix3::identity() + lambda * hess;
            let mut jac = Matrix4::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&jb);
            jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&g);
            jac.fixed_view_mut::<1, 3>(3, 0).copy_from(&g.transpose());
            let step = jac.lu().solve(&(-res)).ok_or_else(|| fail(res_norm))?;

            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-4 {
                let y_try = y + t * step.fixed_rows::<3>(0).into_owned();
                let l_try = lambda + t * step[3];
                let r_try = residual(&y_try, l_try);
                if r_try.norm() <= (1.0 - 1e-4 * t) * res_norm || res_norm < 1e-14 * scale {
                    y = y_try;
                    lambda = l_try;
                    res = r_try;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no further decrease available: accept only if already at roundoff level
                converged = res_norm <= 1e-13 * scale;
                break;
            }
            if step.norm() <= 1e-15 * scale || res.norm() <= 1e-15 * scale {
                converged = true;
                break;
            }
        }
        if !converged && res.norm() > 1e-13 * scale {
            return Err(fail(res.norm()));
        }

        let grad = self.grad_psi(&y);
        let nu = grad.normalize();
        let d = (x - y).dot(&nu);
        let h_surface = self.weingarten_on_surface(&y);
        let h = transport_weingarten(&h_surface, d);
        Ok(SurfacePoint {
            x: *x,
            p: y,
            d,
            nu,
            h,
            pi: tangential_projector(&nu),
        })
    }

    /// Weingarten map `Π ∇ν̃ Π` at a point of the surface.
    pub fn weingarten_on_surface(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        let g = self.grad_psi(p);
        let nu = g / g.norm();
        let pi = tangential_projector(&nu);
        let h = pi * self.hessian_psi(p) * pi / g.norm();
        0.5 * (h + h.transpose())
    }
}

/// `Π = I − ν⊗ν`.
pub fn tangential_projector(nu: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - nu * nu.transpose()
}

/// Weingarten map at signed distance `d` along the normal from a surface
/// point with Weingarten map `h_surface`: `H(x) = H(p)(I + d H(p))⁻¹`.
pub fn transport_weingarten(h_surface: &Matrix3<f64>, d: f64) -> Matrix3<f64> {
    let m = Matrix3::identity() + d * h_surface;
    let inv = m.try_inverse().unwrap_or_else(Matrix3::identity);
    let h = h_surface * inv;
    0.5 * (h + h.transpose())
}

/// Projection, signed distance, normal, Weingarten map and tangential
/// projector at a query point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub x: Vector3<f64>,
    pub p: Vector3<f64>,
    pub d: f64,
    pub nu: Vector3<f64>,
    pub h: Matrix3<f64>,
    pub pi: Matrix3<f64>,
}

impl SurfacePoint {
    /// The two nonzero eigenvalues of `H`, ordered `κ₁ ≤ κ₂`.
    pub fn principal_curvatures(&self) -> (f64, f64) {
        tangent_eigenvalues(&self.h, &self.nu)
    }
}

/// Unit vector orthogonal to `normal`, built from the canonical axis least
/// aligned with it (lowest index wins ties).
pub fn least_aligned_frame(normal: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let mut axis = 0;
    for j in 1..3 {
        if normal[j].abs() < normal[axis].abs() {
            axis = j;
        }
    }
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    let t1 = (e - normal * normal.dot(&e)).normalize();
    let t2 = normal.cross(&t1);
    [t1, t2]
}

/// Eigenvalues of a symmetric `h` restricted to the plane orthogonal to `nu`,
/// computed in closed form from the 2×2 reduction.
pub fn tangent_eigenvalues(h: &Matrix3<f64>, nu: &Vector3<f64>) -> (f64, f64) {
    let [t1, t2] = least_aligned_frame(nu);
    let a = t1.dot(&(h * t1));
    let b = 0.5 * (t1.dot(&(h * t2)) + t2.dot(&(h * t1)));
    let c = t2.dot(&(h * t2));
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - radius, mean + radius)
}

/// Affine data of a triangular face `F_K(ξ) = a₀ + DF_K ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub origin: Vector3<f64>,
    pub nu: Vector3<f64>,
    pub area: f64,
    pub jacobian: Matrix3x2<f64>,
    /// `√det(DF_Kᵀ DF_K)`, twice the area.
    pub j: f64,
    /// `DF_K (DF_KᵀDF_K)⁻¹`; maps reference gradients to tangential gradients.
    pub grad_map: Matrix3x2<f64>,
}

impl FaceGeometry {
    pub fn from_vertices(a0: &Vector3<f64>, a1: &Vector3<f64>, a2: &Vector3<f64>) -> Self {
        let e1 = a1 - a0;
        let e2 = a2 - a0;
        let jacobian = Matrix3x2::from_columns(&[e1, e2]);
        let cross = e1.cross(&e2);
        let j = cross.norm();
        let gram = jacobian.transpose() * jacobian;
        let gram_inv = gram.try_inverse().unwrap_or_else(Matrix2::zeros);
        Self {
            origin: *a0,
            nu: cross / j,
            area: 0.5 * j,
            jacobian,
            j,
            grad_map: jacobian * gram_inv,
        }
    }

    pub fn map(&self, xi: f64, eta: f64) -> Vector3<f64> {
        self.origin + self.jacobian.column(0) * xi + self.jacobian.column(1) * eta
    }

    pub fn projector(&self) -> Matrix3<f64> {
        tangential_projector(&self.nu)
    }

    /// Contravariant Piola map of a reference vector, `DF_K v̂ / J`.
    pub fn reference_piola(&self, v: &nalgebra::Vector2<f64>) -> Vector3<f64> {
        self.jacobian * v / self.j
    }
}

fn check_alignment(alignment: f64, threshold: f64) -> Result<(), GeometryError> {
    if alignment <= threshold {
        Err(GeometryError::DegenerateGeometry {
            alignment,
            threshold,
        })
    } else {
        Ok(())
    }
}

/// Ratio `μ_h` of surface measures, `μ_h dσ_h = dσ∘p`, at a point of a face.
pub fn measure_ratio(face_normal: &Vector3<f64>, spd: &SurfacePoint) -> Result<f64, GeometryError> {
    let alignment = spd.nu.dot(face_normal);
    check_alignment(alignment, 0.0)?;
    let (k1, k2) = spd.principal_curvatures();
    Ok(alignment * (1.0 - spd.d * k1) * (1.0 - spd.d * k2))
}

/// Piola transform of a face-tangent vector to the tangent plane at `p(x)`:
/// `μ_h⁻¹ [Π − dH] v`.
pub fn piola_forward(
    face_normal: &Vector3<f64>,
    spd: &SurfacePoint,
    v: &Vector3<f64>,
) -> Result<Vector3<f64>, GeometryError> {
    let mu = measure_ratio(face_normal, spd)?;
    Ok((spd.pi - spd.d * spd.h) * v / mu)
}

/// The matrix of the inverse Piola transform without the measure factor,
/// `[I − ν⊗ν_K/(ν·ν_K)][I − dH]⁻¹`.
pub fn inverse_piola_matrix(
    face_normal: &Vector3<f64>,
    spd: &SurfacePoint,
    min_alignment: f64,
) -> Result<Matrix3<f64>, GeometryError> {
    let alignment = spd.nu.dot(face_normal);
    check_alignment(alignment, min_alignment)?;
    let oblique = Matrix3::identity() - spd.nu * face_normal.transpose() / alignment;
    let shift = (Matrix3::identity() - spd.d * spd.h).try_inverse().ok_or(
        GeometryError::DegenerateGeometry {
            alignment,
            threshold: min_alignment,
        },
    )?;
    Ok(oblique * shift)
}

/// Piola transform of a vector tangent to the surface at `p(x)` back to the
/// face through `x`: `μ_h [I − ν⊗ν_K/(ν·ν_K)][I − dH]⁻¹ w`.
pub fn piola_inverse(
    face_normal: &Vector3<f64>,
    spd: &SurfacePoint,
    w: &Vector3<f64>,
    min_alignment: f64,
) -> Result<Vector3<f64>, GeometryError> {
    let m = inverse_piola_matrix(face_normal, spd, min_alignment)?;
    let mu = measure_ratio(face_normal, spd)?;
    Ok(mu * m * w)
}

/// Vertex transfer map from the master face normal to an incident face
/// normal: `(ν_m·ν_K) I − ν_m⊗ν_K`.
pub fn edge_transfer(
    nu_master: &Vector3<f64>,
    nu_face: &Vector3<f64>,
    min_alignment: f64,
) -> Result<Matrix3<f64>, GeometryError> {
    let alignment = nu_master.dot(nu_face);
    check_alignment(alignment, min_alignment)?;
    Ok(alignment * Matrix3::identity() - nu_master * nu_face.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ellipsoid() -> LevelSetSurface {
        LevelSetSurface::reference_ellipsoid()
    }

    #[test]
    fn sphere_projection_on_axis() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let spd = s.closest_point(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(spd.p, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-14);
        assert_relative_eq!(spd.d, 1.0, epsilon = 1e-14);
        assert_relative_eq!(spd.nu, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn ellipsoid_axis_point() {
        let spd = ellipsoid()
            .closest_point(&Vector3::new(2.2, 0.0, 0.0))
            .unwrap();
        assert_relative_eq!(spd.p, Vector3::new(1.1, 0.0, 0.0), epsilon = 1e-13);
        assert_relative_eq!(spd.d, 1.1, epsilon = 1e-13);
    }

    #[test]
    fn interior_point_has_negative_distance() {
        let spd = ellipsoid()
            .closest_point(&Vector3::new(0.9, 0.5, 0.4))
            .unwrap();
        assert!(spd.d < 0.0);
        assert!(ellipsoid().psi(&spd.p).abs() < 1e-13);
        // x − p parallel to the normal
        let r = spd.x - spd.p;
        assert!(r.cross(&spd.nu).norm() < 1e-12);
    }

    #[test]
    fn origin_is_rejected() {
        let err = ellipsoid().closest_point(&Vector3::zeros()).unwrap_err();
        assert!(matches!(err, GeometryError::NoConvergence { .. }));
    }

    #[test]
    fn weingarten_unit_sphere() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let h = s.weingarten_on_surface(&Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(
            h,
            Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)),
            epsilon = 1e-15
        );
        let r = 2.5;
        let s = LevelSetSurface::sphere(r).unwrap();
        let p = Vector3::new(1.0, 2.0, 0.5).normalize() * r;
        let (k1, k2) = tangent_eigenvalues(&s.weingarten_on_surface(&p), &s.level_set_normal(&p));
        assert_relative_eq!(k1, 1.0 / r, epsilon = 1e-14);
        assert_relative_eq!(k2, 1.0 / r, epsilon = 1e-14);
    }

    #[test]
    fn off_surface_weingarten_matches_sphere_closed_form() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        for x in [Vector3::new(0.3, -0.2, 0.8), Vector3::new(1.1, 0.4, -0.3)] {
            let spd = s.closest_point(&x).unwrap();
            let xn = x.normalize();
            let expected = (Matrix3::identity() - xn * xn.transpose()) / x.norm();
            assert_relative_eq!(spd.h, expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn planar_piola_is_identity() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let spd = s.closest_point(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let nu_k = Vector3::new(0.0, 0.0, 1.0);
        let v = Vector3::new(0.3, -0.7, 0.0);
        assert_relative_eq!(measure_ratio(&nu_k, &spd).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(piola_forward(&nu_k, &spd, &v).unwrap(), v, epsilon = 1e-15);
        assert_relative_eq!(
            piola_inverse(&nu_k, &spd, &v, DEFAULT_MIN_ALIGNMENT).unwrap(),
            v,
            epsilon = 1e-15
        );
    }

    #[test]
    fn piola_round_trip_and_tangency() {
        let s = ellipsoid();
        let nu_k = Vector3::new(0.2, 0.1, 1.0).normalize();
        let x = Vector3::new(0.15, 0.1, 1.25);
        let spd = s.closest_point(&x).unwrap();
        let [t1, t2] = least_aligned_frame(&nu_k);
        let v = 0.7 * t1 - 1.3 * t2;
        let w = piola_forward(&nu_k, &spd, &v).unwrap();
        assert!(w.dot(&spd.nu).abs() < 1e-15);
        let back = piola_inverse(&nu_k, &spd, &w, DEFAULT_MIN_ALIGNMENT).unwrap();
        assert!(back.dot(&nu_k).abs() < 1e-15);
        assert!((back - v).norm() <= 1e-12 * v.norm());
    }

    #[test]
    fn degenerate_alignment_is_reported() {
        let s = ellipsoid();
        let spd = s.closest_point(&Vector3::new(0.0, 0.0, 1.3)).unwrap();
        let nu_k = Vector3::new(1.0, 0.0, 0.05).normalize();
        let err = piola_inverse(
            &nu_k,
            &spd,
            &Vector3::new(1.0, 0.0, 0.0),
            DEFAULT_MIN_ALIGNMENT,
        );
        assert!(matches!(err, Err(GeometryError::DegenerateGeometry { .. })));
        let err = measure_ratio(&(-spd.nu), &spd);
        assert!(matches!(err, Err(GeometryError::DegenerateGeometry { .. })));
        let err = edge_transfer(&Vector3::x(), &Vector3::y(), DEFAULT_MIN_ALIGNMENT);
        assert!(matches!(err, Err(GeometryError::DegenerateGeometry { .. })));
    }

    #[test]
    fn edge_transfer_coplanar_is_projector() {
        let nu = Vector3::new(0.0, 0.0, 1.0);
        let m = edge_transfer(&nu, &nu, DEFAULT_MIN_ALIGNMENT).unwrap();
        assert_relative_eq!(m * Vector3::new(1.0, 2.0, 5.0), Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn face_geometry_jacobian() {
        let f = FaceGeometry::from_vertices(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(2.0, 0.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
        );
        assert_relative_eq!(f.area, 1.0);
        assert_relative_eq!(f.j, 2.0 * f.area);
        assert_relative_eq!(f.nu, Vector3::z());
        for c in 0..2 {
            assert!(f.jacobian.column(c).dot(&f.nu).abs() < 1e-15);
        }
    }

    #[test]
    fn frame_tie_break() {
        let [v1, v2] = least_aligned_frame(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(v1, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(v2, Vector3::new(0.0, 1.0, 0.0));
        let [v1, v2] = least_aligned_frame(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(v1, Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(v2, Vector3::new(0.0, 0.0, 1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn surface_point_invariants(
                theta in 0.05f64..3.09,
                phi in 0.0f64..6.28,
                offset in -0.2f64..0.2,
            ) {
                let s = LevelSetSurface::reference_ellipsoid();
                let dir = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                let on = s.radial_projection(&dir);
                let x = on + offset * s.level_set_normal(&on);
                let spd = s.closest_point(&x).unwrap();
                let diam = s.diam();
                prop_assert!((spd.nu.norm() - 1.0).abs() < 1e-14);
                prop_assert!((spd.h * spd.nu).norm() < 1e-10);
                prop_assert!(s.psi(&spd.p).abs() < 1e-12 * diam);
                prop_assert!((spd.p + spd.d * spd.nu - x).norm() < 1e-12 * diam);
                prop_assert!((spd.pi * spd.pi - spd.pi).norm() < 1e-14);
                prop_assert!((spd.h - spd.h.transpose()).norm() < 1e-14);
            }

            #[test]
            fn edge_transfer_output_is_tangent(
                a in prop::array::uniform3(-1.0f64..1.0),
                b in prop::array::uniform3(-0.3f64..0.3),
                x in prop::array::uniform3(-5.0f64..5.0),
            ) {
                let nu_m = (Vector3::new(a[0], a[1], a[2]) + Vector3::new(0.0, 0.0, 3.0)).normalize();
                let nu_k = (nu_m + Vector3::new(b[0], b[1], b[2])).normalize();
                let m = edge_transfer(&nu_m, &nu_k, DEFAULT_MIN_ALIGNMENT).unwrap();
                let x = Vector3::new(x[0], x[1], x[2]);
                prop_assert!((m * x).dot(&nu_k).abs() < 1e-13 * x.norm().max(1.0));
            }
        }
    }
}
