//! Smooth manufactured solution on an ellipsoid, its surface operators, and
//! the transferred right-hand sides on the discrete surface.
//!
//! The velocity is extended off the surface as `û(x) = Π(x)(−z², x, y)` with
//! the level-set projector, and the pressure as `p(x) = xy³ + z`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{LoadData, LoadSample};
use crate::dual::{gradient, jacobian, matrix_partials, Mat3, Real, Vec3};
use crate::geometry::{
    measure_ratio, piola_inverse, FaceGeometry, GeometryError, LevelSetSurface,
    DEFAULT_MIN_ALIGNMENT,
};

/// Tolerance on `|ψ(x)|` for points treated as lying on the surface.
pub const ON_SURFACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManufacturedError {
    #[error("point is off the surface: ψ = {psi:e}")]
    OffSurface { psi: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How the velocity load is carried onto a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FhMode {
    /// Inverse Piola transform of `f∘p`.
    #[default]
    Piola,
    /// Face-tangential projection `Π_K (f∘p)`.
    Projected,
}

/// Exact velocity and pressure on the smooth surface.
pub trait ExactFields: Sync {
    fn velocity(&self, p: &Vector3<f64>) -> Vector3<f64>;
    fn pressure(&self, p: &Vector3<f64>) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFields;

impl ExactFields for ZeroFields {
    fn velocity(&self, _p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn pressure(&self, _p: &Vector3<f64>) -> f64 {
        0.0
    }
}

/// Surface operators of the exact solution at a point of the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceOps {
    pub u: Vector3<f64>,
    /// `∇_γ u = Π ∇û Π`.
    pub grad_u: Matrix3<f64>,
    pub def_u: Matrix3<f64>,
    pub div_u: f64,
    pub grad_p: Vector3<f64>,
    /// `Π div_γ Def_γ u`.
    pub div_def: Vector3<f64>,
    pub f: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    surface: LevelSetSurface,
}

fn projector<T: Real>(inv_sq: [f64; 3], x: Vec3<T>) -> Mat3<T> {
    let g = [0, 1, 2].map(|i| T::from_f64(2.0 * inv_sq[i]) * x[i]);
    let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let nu = g.map(|gi| gi / n);
    let mut pi = [[T::from_f64(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            pi[i][j] = T::from_f64(delta) - nu[i] * nu[j];
        }
    }
    pi
}

fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = [[T::from_f64(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = T::from_f64(0.0);
            for k in 0..3 {
                s = s + a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

fn velocity_ext<T: Real>(inv_sq: [f64; 3], x: Vec3<T>) -> Vec3<T> {
    let w = [-(x[2] * x[2]), x[0], x[1]];
    let pi = projector(inv_sq, x);
    [0, 1, 2].map(|i| pi[i][0] * w[0] + pi[i][1] * w[1] + pi[i][2] * w[2])
}

fn pressure_ext<T: Real>(x: Vec3<T>) -> T {
    x[0] * x[1] * x[1] * x[1] + x[2]
}

/// `D̂(x) = sym(Π ∇û Π)` of the extension.
fn deformation_ext<T: Real>(inv_sq: [f64; 3], x: Vec3<T>) -> Mat3<T> {
    let grad = jacobian(|y| velocity_ext(inv_sq, y), x);
    let pi = projector(inv_sq, x);
    let g = mat_mul(&mat_mul(&pi, &grad), &pi);
    let half = T::from_f64(0.5);
    let mut d = g;
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = half * (g[i][j] + g[j][i]);
        }
    }
    d
}

fn to_matrix(m: &Mat3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn arr(x: &Vector3<f64>) -> Vec3<f64> {
    [x.x, x.y, x.z]
}

impl ExactSolution {
    pub fn new(surface: LevelSetSurface) -> Self {
        Self { surface }
    }

    pub fn surface(&self) -> &LevelSetSurface {
        &self.surface
    }

    fn inv_sq(&self) -> [f64; 3] {
        self.surface.semi_axes().map(|a| 1.0 / (a * a))
    }

    /// The extended velocity `û(x)`, defined in a neighbourhood of the surface.
    pub fn velocity_extension(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from(velocity_ext(self.inv_sq(), arr(x)))
    }

    pub fn pressure_extension(&self, x: &Vector3<f64>) -> f64 {
        pressure_ext(arr(x))
    }

    pub fn surface_ops(&self, x: &Vector3<f64>) -> Result<SurfaceOps, ManufacturedError> {
        let psi = self.surface.psi(x);
        if psi.abs() > ON_SURFACE_TOL {
            return Err(ManufacturedError::OffSurface { psi });
        }
        let inv_sq = self.inv_sq();
        let xa = arr(x);
        let pi = to_matrix(&projector(inv_sq, xa));
        let u = Vector3::from(velocity_ext(inv_sq, xa));
        let grad_ext = to_matrix(&jacobian(|y| velocity_ext(inv_sq, y), xa));
        let grad_u = pi * grad_ext * pi;
        let def_u = 0.5 * (grad_u + grad_u.transpose());
        let div_u = grad_u.trace();
        let grad_p = pi * Vector3::from(gradient(pressure_ext, xa));

        // (div_γ D̂)_i = Σ_{j,k} ∂_k D̂_ij Π_kj
        let partials = matrix_partials(|y| deformation_ext(inv_sq, y), xa);
        let div_d = Vector3::from_fn(|i, _| {
            let mut s = 0.0;
            for j in 0..3 {
                for (k, dk) in partials.iter().enumerate() {
                    s += dk[i][j] * pi[(k, j)];
                }
            }
            s
        });
        let div_def = pi * div_d;
        let f = -div_def + grad_p + u;
        Ok(SurfaceOps {
            u,
            grad_u,
            def_u,
            div_u,
            grad_p,
            div_def,
            f,
        })
    }
}

impl ExactFields for ExactSolution {
    fn velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.velocity_extension(p)
    }

    fn pressure(&self, p: &Vector3<f64>) -> f64 {
        self.pressure_extension(p)
    }
}

/// `f_h` and `μ_h (g∘p)` at a point of a face.
pub fn transfer_to_mesh(
    exact: &ExactSolution,
    face: &FaceGeometry,
    x: &Vector3<f64>,
    mode: FhMode,
) -> Result<LoadSample, ManufacturedError> {
    let spd = exact.surface.closest_point(x)?;
    let ops = exact.surface_ops(&spd.p)?;
    let f = match mode {
        FhMode::Piola => piola_inverse(&face.nu, &spd, &ops.f, DEFAULT_MIN_ALIGNMENT)?,
        FhMode::Projected => face.projector() * ops.f,
    };
    let mu = measure_ratio(&face.nu, &spd)?;
    Ok(LoadSample {
        f,
        g: mu * ops.div_u,
    })
}

/// Load data for assembly built from the manufactured solution.
#[derive(Debug, Clone)]
pub struct ManufacturedLoad<'a> {
    pub exact: &'a ExactSolution,
    pub mode: FhMode,
}

impl LoadData for ManufacturedLoad<'_> {
    fn sample(&self, face: &FaceGeometry, x: &Vector3<f64>) -> Result<LoadSample, GeometryError> {
        transfer_to_mesh(self.exact, face, x, self.mode).map_err(|e| match e {
            ManufacturedError::Geometry(g) => g,
            ManufacturedError::OffSurface { psi } => GeometryError::NoConvergence {
                x: arr(x),
                residual: psi,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SurfaceMesh;
    use crate::quadrature::QuadratureRule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact() -> ExactSolution {
        ExactSolution::new(LevelSetSurface::reference_ellipsoid())
    }

    fn random_surface_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let s = LevelSetSurface::reference_ellipsoid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                s.radial_projection(&v)
            })
            .collect()
    }

    #[test]
    fn velocity_and_forcing_tangential() {
        let e = exact();
        for x in random_surface_points(1000, 1) {
            let nu = e.surface().level_set_normal(&x);
            let ops = e.surface_ops(&x).unwrap();
            assert!(ops.u.dot(&nu).abs() < 1e-13);
            assert!(ops.f.dot(&nu).abs() < 1e-10);
            assert!((ops.def_u.trace() - ops.div_u).abs() < 1e-12);
        }
    }

    #[test]
    fn off_surface_rejected() {
        let e = exact();
        let r = e.surface_ops(&Vector3::new(2.0, 0.0, 0.0));
        assert!(matches!(r, Err(ManufacturedError::OffSurface { .. })));
    }

    #[test]
    fn surface_means_vanish() {
        let e = exact();
        let mesh = SurfaceMesh::generate(e.surface(), 4).unwrap();
        let rule = QuadratureRule::new(6).unwrap();
        let (mut ip, mut ig, mut area) = (0.0, 0.0, 0.0);
        for geom in &mesh.geometry {
            for (pt, w) in rule.points.iter().zip(&rule.weights) {
                let x = geom.map(pt[0], pt[1]);
                let spd = e.surface().closest_point(&x).unwrap();
                let mu = measure_ratio(&geom.nu, &spd).unwrap();
                let ops = e.surface_ops(&spd.p).unwrap();
                let wq = w * geom.j * mu;
                ip += wq * e.pressure_extension(&spd.p);
                ig += wq * ops.div_u;
                area += wq;
            }
        }
        assert!(ip.abs() <= 1e-8 * area, "{ip}");
        assert!(ig.abs() <= 1e-8 * area, "{ig}");
    }

    #[test]
    fn transferred_load_is_face_tangent() {
        let e = exact();
        let mesh = SurfaceMesh::generate(e.surface(), 2).unwrap();
        let rule = QuadratureRule::new(6).unwrap();
        for geom in &mesh.geometry {
            for pt in &rule.points {
                let x = geom.map(pt[0], pt[1]);
                for mode in [FhMode::Piola, FhMode::Projected] {
                    let s = transfer_to_mesh(&e, geom, &x, mode).unwrap();
                    assert!(s.f.dot(&geom.nu).abs() < 1e-13);
                }
            }
        }
    }
}
