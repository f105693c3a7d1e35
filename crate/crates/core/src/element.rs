//! Reference MINI element and evaluation of the global shape functions on a
//! face.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::dofmap::DofMap;
use crate::mesh::SurfaceMesh;

/// Linear hats plus the cubic bubble `λ₁λ₂λ₃` on the reference triangle.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceMini;

impl ReferenceMini {
    pub fn hats(xi: f64, eta: f64) -> [f64; 3] {
        [1.0 - xi - eta, xi, eta]
    }

    pub fn hat_gradients() -> [Vector2<f64>; 3] {
        [
            Vector2::new(-1.0, -1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ]
    }

    pub fn bubble(xi: f64, eta: f64) -> f64 {
        let [l1, l2, l3] = Self::hats(xi, eta);
        l1 * l2 * l3
    }

    pub fn bubble_gradient(xi: f64, eta: f64) -> Vector2<f64> {
        let [l1, l2, l3] = Self::hats(xi, eta);
        let [g1, g2, g3] = Self::hat_gradients();
        g1 * (l2 * l3) + g2 * (l1 * l3) + g3 * (l1 * l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorShape {
    pub value: Vector3<f64>,
    /// Tangential gradient `Π_K ∇v Π_K`; row `i` is the gradient of `vᵢ`.
    pub grad: Matrix3<f64>,
    pub div: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarShape {
    pub value: f64,
    pub grad: Vector3<f64>,
}

/// All local shape functions of one face at one reference point.
///
/// Velocity ordering: `[v0·dir0, v0·dir1, v1·dir0, v1·dir1, v2·dir0, v2·dir1,
/// bubble·t0, bubble·t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceBasisEval {
    pub velocity: [VectorShape; 8],
    pub pressure: [ScalarShape; 3],
}

/// Per-face data reused at every quadrature point.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    directions: [Vector3<f64>; 8],
    hat_grads: [Vector3<f64>; 3],
    grad_map: nalgebra::Matrix3x2<f64>,
}

impl FaceBasis {
    pub fn new(mesh: &SurfaceMesh, dofmap: &DofMap, face: usize) -> Self {
        let geom = &mesh.geometry[face];
        let vd = dofmap.vertex_directions(mesh, face);
        let [t0, t1] = dofmap.face_frames[face];
        let directions = [
            vd[0][0], vd[0][1], vd[1][0], vd[1][1], vd[2][0], vd[2][1], t0, t1,
        ];
        let ref_grads = ReferenceMini::hat_gradients();
        let hat_grads = [
            geom.grad_map * ref_grads[0],
            geom.grad_map * ref_grads[1],
            geom.grad_map * ref_grads[2],
        ];
        Self {
            directions,
            hat_grads,
            grad_map: geom.grad_map,
        }
    }

    pub fn directions(&self) -> &[Vector3<f64>; 8] {
        &self.directions
    }

    pub fn eval(&self, xi: f64, eta: f64) -> FaceBasisEval {
        let hats = ReferenceMini::hats(xi, eta);
        let bubble = ReferenceMini::bubble(xi, eta);
        let bubble_grad = self.grad_map * ReferenceMini::bubble_gradient(xi, eta);

        let shape = |dir: &Vector3<f64>, phi: f64, grad_phi: &Vector3<f64>| {
            let grad = dir * grad_phi.transpose();
            VectorShape {
                value: dir * phi,
                div: grad.trace(),
                grad,
            }
        };
        let d = &self.directions;
        let velocity = [
            shape(&d[0], hats[0], &self.hat_grads[0]),
            shape(&d[1], hats[0], &self.hat_grads[0]),
            shape(&d[2], hats[1], &self.hat_grads[1]),
            shape(&d[3], hats[1], &self.hat_grads[1]),
            shape(&d[4], hats[2], &self.hat_grads[2]),
            shape(&d[5], hats[2], &self.hat_grads[2]),
            shape(&d[6], bubble, &bubble_grad),
            shape(&d[7], bubble, &bubble_grad),
        ];
        let pressure = [0, 1, 2].map(|j| ScalarShape {
            value: hats[j],
            grad: self.hat_grads[j],
        });
        FaceBasisEval { velocity, pressure }
    }

    /// Value and tangential gradient of `Σ coeffs[l] φ_l` at a reference point.
    pub fn combine(&self, coeffs: &[f64; 8], xi: f64, eta: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let e = self.eval(xi, eta);
        e.velocity
            .iter()
            .zip(coeffs)
            .fold((Vector3::zeros(), Matrix3::zeros()), |(v, g), (s, c)| {
                (v + s.value * *c, g + s.grad * *c)
            })
    }
}

pub fn eval_face_basis(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    face: usize,
    xi: f64,
    eta: f64,
) -> FaceBasisEval {
    FaceBasis::new(mesh, dofmap, face).eval(xi, eta)
}

/// Symmetric part of a gradient.
pub fn deformation(grad: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (grad + grad.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetSurface;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (SurfaceMesh, DofMap) {
        let m = SurfaceMesh::generate(&LevelSetSurface::reference_ellipsoid(), 2).unwrap();
        let d = DofMap::build(&m).unwrap();
        (m, d)
    }

    #[test]
    fn vertex_values() {
        let (m, d) = setup();
        let face = 17;
        let basis = FaceBasis::new(&m, &d, face);
        for (j, (xi, eta)) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
            let e = basis.eval(xi, eta);
            let inc = d.incident(&m, face, j);
            for i in 0..2 {
                assert!((e.velocity[2 * j + i].value - inc.transferred[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bubble_vanishes_on_boundary() {
        let (m, d) = setup();
        let basis = FaceBasis::new(&m, &d, 3);
        for (xi, eta) in [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.5),
            (0.0, 0.5),
        ] {
            let e = basis.eval(xi, eta);
            assert_eq!(e.velocity[6].value.norm(), 0.0);
            assert_eq!(e.velocity[7].value.norm(), 0.0);
        }
    }

    #[test]
    fn values_are_tangent_and_div_is_trace() {
        let (m, d) = setup();
        for face in 0..m.n_faces() {
            let basis = FaceBasis::new(&m, &d, face);
            let e = basis.eval(0.2, 0.3);
            let nu = m.geometry[face].nu;
            for s in &e.velocity {
                assert!(s.value.dot(&nu).abs() < 1e-13);
                assert_eq!(s.div, s.grad.trace());
                let def = deformation(&s.grad);
                assert_eq!(def, def.transpose());
                assert!((def.trace() - s.div).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_field_has_zero_deformation() {
        // sum of the three hat functions times a fixed tangent vector
        let (m, d) = setup();
        let face = 5;
        let geom = &m.geometry[face];
        let basis = FaceBasis::new(&m, &d, face);
        let t = d.face_frames[face][0];
        let e = basis.eval(0.1, 0.6);
        let hat_grad_sum: Vector3<f64> = e.pressure.iter().map(|p| p.grad).sum();
        let grad = t * hat_grad_sum.transpose();
        assert!(deformation(&grad).norm() < 1e-13);
        assert!(geom.nu.dot(&t).abs() < 1e-15);
    }

    /// Central differences along the face plane of the shape values.
    #[test]
    fn gradients_match_finite_differences() {
        let (m, d) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let face = 11;
        let geom = &m.geometry[face];
        let basis = FaceBasis::new(&m, &d, face);
        let step = 1e-6;
        for _ in 0..5 {
            let xi: f64 = rng.random_range(0.05..0.6);
            let eta: f64 = rng.random_range(0.05..(0.9 - xi));
            let e = basis.eval(xi, eta);
            // reference-coordinate derivatives of the value
            let dxi: Vec<Vector3<f64>> = (0..8)
                .map(|l| {
                    (basis.eval(xi + step, eta).velocity[l].value
                        - basis.eval(xi - step, eta).velocity[l].value)
                        / (2.0 * step)
                })
                .collect();
            let deta: Vec<Vector3<f64>> = (0..8)
                .map(|l| {
                    (basis.eval(xi, eta + step).velocity[l].value
                        - basis.eval(xi, eta - step).velocity[l].value)
                        / (2.0 * step)
                })
                .collect();
            for l in 0..8 {
                // ∇v · DF_K = [∂ξ v, ∂η v]
                let g = e.velocity[l].grad;
                let c0 = g * geom.jacobian.column(0);
                let c1 = g * geom.jacobian.column(1);
                assert!((c0 - dxi[l]).norm() < 1e-6);
                assert!((c1 - deta[l]).norm() < 1e-6);
                let fd_div = {
                    let fd = nalgebra::Matrix3x2::from_columns(&[dxi[l], deta[l]])
                        * geom.grad_map.transpose();
                    fd.trace()
                };
                assert!((fd_div - e.velocity[l].div).abs() < 1e-6);
                let fd_def = deformation(
                    &(nalgebra::Matrix3x2::from_columns(&[dxi[l], deta[l]])
                        * geom.grad_map.transpose()),
                );
                assert!((fd_def.norm() - deformation(&g).norm()).abs() < 1e-6);
            }
        }
    }
}
