//! Error measurement against the lifted exact solution, convergence rates,
//! the nodal interpolant, and geometric and stability diagnostics.

use faer::Mat;
use nalgebra::{DMatrix, Matrix3, Matrix3x2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{pressure_mass, SaddleSystem};
use crate::dofmap::DofMap;
use crate::element::{deformation, FaceBasis, ReferenceMini};
use crate::geometry::{
    edge_transfer, least_aligned_frame, measure_ratio, piola_forward, piola_inverse, FaceGeometry,
    GeometryError, LevelSetSurface, DEFAULT_MIN_ALIGNMENT,
};
use crate::manufactured::ExactFields;
use crate::mesh::{MeshError, SurfaceMesh};
use crate::quadrature::QuadratureRule;
use crate::solver::{SolverError, SpdSolver};

/// Finite-difference step for lifted gradients, relative to the face diameter.
pub const LIFT_FD_STEP: f64 = 1e-4;

/// Exact solution pulled back to a point of a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedSample {
    /// `ŭ`, the inverse Piola transform of `u∘p`.
    pub u: Vector3<f64>,
    /// `∇_{Γ_h} ŭ` by central differences in the face plane.
    pub grad_u: Matrix3<f64>,
    /// `p^e = p∘p`.
    pub p: f64,
}

fn inverse_piola_sample(
    exact: &dyn ExactFields,
    surface: &LevelSetSurface,
    face: &FaceGeometry,
    x: &Vector3<f64>,
) -> Result<(Vector3<f64>, f64), GeometryError> {
    let spd = surface.closest_point(x)?;
    let u = piola_inverse(
        &face.nu,
        &spd,
        &exact.velocity(&spd.p),
        DEFAULT_MIN_ALIGNMENT,
    )?;
    Ok((u, exact.pressure(&spd.p)))
}

pub fn lift_exact(
    exact: &dyn ExactFields,
    surface: &LevelSetSurface,
    face: &FaceGeometry,
    h_k: f64,
    x: &Vector3<f64>,
) -> Result<LiftedSample, GeometryError> {
    let (u, p) = inverse_piola_sample(exact, surface, face, x)?;
    let step = LIFT_FD_STEP * h_k;
    let mut grad = Matrix3::zeros();
    for t in least_aligned_frame(&face.nu) {
        let (up, _) = inverse_piola_sample(exact, surface, face, &(x + step * t))?;
        let (um, _) = inverse_piola_sample(exact, surface, face, &(x - step * t))?;
        grad += (up - um) / (2.0 * step) * t.transpose();
    }
    let pk = face.projector();
    Ok(LiftedSample {
        u,
        grad_u: pk * grad * pk,
        p,
    })
}

/// Discrete velocity and pressure on the mesh.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteFields<'a> {
    pub velocity: &'a [f64],
    pub pressure: Option<&'a [f64]>,
}

fn local_coefficients(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    face: usize,
    velocity: &[f64],
) -> [f64; 8] {
    dofmap.local_velocity_dofs(mesh, face).map(|i| velocity[i])
}

#[derive(Debug, Clone, Copy, Default)]
struct FaceSums {
    vel_l2: f64,
    vel_grad: f64,
    p_sq: f64,
    p_diff: f64,
    p_exact: f64,
    area: f64,
}

/// Squared-error integrals of one face.
fn face_error_sums(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    face: usize,
    rule: &QuadratureRule,
    fields: &DiscreteFields,
    exact: &dyn ExactFields,
) -> Result<FaceSums, GeometryError> {
    let geom = &mesh.geometry[face];
    let basis = FaceBasis::new(mesh, dofmap, face);
    let coeffs = local_coefficients(mesh, dofmap, face, fields.velocity);
    let h_k = mesh.face_diameter(face);
    let mut s = FaceSums::default();
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        let wq = w * geom.j;
        let x = geom.map(pt[0], pt[1]);
        let lifted = lift_exact(exact, mesh.surface(), geom, h_k, &x)?;
        let (uh, guh) = basis.combine(&coeffs, pt[0], pt[1]);
        s.vel_l2 += wq * (lifted.u - uh).norm_squared();
        s.vel_grad += wq * (lifted.grad_u - guh).norm_squared();
        if let Some(p) = fields.pressure {
            let hats = ReferenceMini::hats(pt[0], pt[1]);
            let ph: f64 = mesh.faces[face]
                .iter()
                .zip(hats)
                .map(|(&v, l)| p[v] * l)
                .sum();
            let diff = lifted.p - ph;
            s.p_sq += wq * diff * diff;
            s.p_diff += wq * diff;
            s.p_exact += wq * lifted.p;
        }
        s.area += wq;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub l2_vel: f64,
    /// Full broken `H¹_h` norm of the velocity error.
    pub h1_vel: f64,
    /// Gradient part only.
    pub h1_semi_vel: f64,
    pub l2_pres: f64,
}

pub fn field_errors(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    fields: &DiscreteFields,
    exact: &dyn ExactFields,
    quadrature_degree: usize,
) -> Result<FieldErrors, GeometryError> {
    let rule = QuadratureRule::new(quadrature_degree).expect("supported quadrature degree");
    let sums: Vec<FaceSums> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|k| face_error_sums(mesh, dofmap, k, &rule, fields, exact))
        .collect::<Result<_, _>>()?;
    let t = sums.iter().fold(FaceSums::default(), |a, s| FaceSums {
        vel_l2: a.vel_l2 + s.vel_l2,
        vel_grad: a.vel_grad + s.vel_grad,
        p_sq: a.p_sq + s.p_sq,
        p_diff: a.p_diff + s.p_diff,
        p_exact: a.p_exact + s.p_exact,
        area: a.area + s.area,
    });
    // ∫ ((p^e − m) − p_h)² with m the mean of p^e over Γ_h
    let m = t.p_exact / t.area;
    let p_sq = (t.p_sq - 2.0 * m * t.p_diff + m * m * t.area).max(0.0);
    Ok(FieldErrors {
        l2_vel: t.vel_l2.sqrt(),
        h1_vel: (t.vel_l2 + t.vel_grad).sqrt(),
        h1_semi_vel: t.vel_grad.sqrt(),
        l2_pres: p_sq.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub level: usize,
    pub h: f64,
    pub dof_v: usize,
    pub dof_p: usize,
    pub e_energy: f64,
    pub e_h1_vel: f64,
    pub e_l2_vel: f64,
    pub e_l2_pres: f64,
    pub seconds: f64,
}

pub fn error_norms(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    velocity: &[f64],
    pressure: &[f64],
    exact: &dyn ExactFields,
    quadrature_degree: usize,
) -> Result<ErrorReport, GeometryError> {
    let e = field_errors(
        mesh,
        dofmap,
        &DiscreteFields {
            velocity,
            pressure: Some(pressure),
        },
        exact,
        quadrature_degree,
    )?;
    Ok(ErrorReport {
        level: mesh.level,
        h: mesh.h(),
        dof_v: dofmap.index.n_velocity(),
        dof_p: dofmap.index.n_pressure(),
        e_energy: e.h1_vel + e.l2_pres,
        e_h1_vel: e.h1_vel,
        e_l2_vel: e.l2_vel,
        e_l2_pres: e.l2_pres,
        seconds: 0.0,
    })
}

/// `log₂(e_coarse / e_fine)`; `None` unless both errors are positive.
pub fn eoc(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub level: usize,
    pub rate_energy: Option<f64>,
    pub rate_l2_vel: Option<f64>,
    pub rate_l2_pres: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EocTable {
    /// One row per report; the first row has no rates.
    pub rows: Vec<EocRow>,
}

impl EocTable {
    pub fn from_reports(reports: &[ErrorReport]) -> Self {
        let rows = reports
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let prev = i.checked_sub(1).map(|j| &reports[j]);
                EocRow {
                    level: r.level,
                    rate_energy: prev.and_then(|p| eoc(p.e_energy, r.e_energy)),
                    rate_l2_vel: prev.and_then(|p| eoc(p.e_l2_vel, r.e_l2_vel)),
                    rate_l2_pres: prev.and_then(|p| eoc(p.e_l2_pres, r.e_l2_pres)),
                }
            })
            .collect();
        Self { rows }
    }

    pub fn finest(&self) -> Option<&EocRow> {
        self.rows
            .last()
            .filter(|r| r.rate_energy.is_some() || r.rate_l2_vel.is_some())
    }
}

/// Vertex coefficients from a sampler evaluated on each vertex's master face;
/// bubble coefficients are zero.
pub fn interpolate_with(
    dofmap: &DofMap,
    mut sample: impl FnMut(usize, usize) -> Result<Vector3<f64>, GeometryError>,
) -> Result<Vec<f64>, GeometryError> {
    let mut coeffs = vec![0.0; dofmap.index.n_velocity()];
    for (a, rec) in dofmap.records.iter().enumerate() {
        let v = sample(rec.master_face, a)?;
        for i in 0..2 {
            coeffs[dofmap.index.vertex_velocity(a, i)] = v.dot(&rec.frame[i]);
        }
    }
    Ok(coeffs)
}

/// Nodal interpolant of the exact velocity: vertex values `ŭ_{K_a}(a)`.
pub fn interpolate(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    exact: &dyn ExactFields,
) -> Result<Vec<f64>, GeometryError> {
    interpolate_with(dofmap, |k, a| {
        let (u, _) =
            inverse_piola_sample(exact, mesh.surface(), &mesh.geometry[k], &mesh.vertices[a])?;
        Ok(u)
    })
}

/// Value of a discrete velocity at a vertex, seen from one incident face.
pub fn vertex_value(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    velocity: &[f64],
    face: usize,
    vertex: usize,
) -> Vector3<f64> {
    let local = mesh.local_index(face, vertex).expect("vertex of face");
    let (xi, eta) = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)][local];
    let coeffs = local_coefficients(mesh, dofmap, face, velocity);
    FaceBasis::new(mesh, dofmap, face)
        .combine(&coeffs, xi, eta)
        .0
}

fn reference_point(face: &[usize; 3], bary: &[(usize, f64)]) -> (f64, f64) {
    let mut lam = [0.0; 3];
    for &(v, l) in bary {
        let i = face.iter().position(|&f| f == v).expect("vertex of face");
        lam[i] += l;
    }
    (lam[1], lam[2])
}

/// Largest `|v₁·n₁ + v₂·n₂|` over edges, sampled at the endpoints, the
/// midpoint and two interior points.
pub fn max_normal_jump(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    velocity: &[f64],
) -> Result<f64, MeshError> {
    let frames = mesh.build_edge_frames()?;
    let bases: Vec<FaceBasis> = (0..mesh.n_faces())
        .map(|k| FaceBasis::new(mesh, dofmap, k))
        .collect();
    let mut max = 0.0f64;
    for ef in &frames {
        for t in [0.0, 0.2, 0.5, 0.7, 1.0] {
            let bary = [(ef.edge[0], 1.0 - t), (ef.edge[1], t)];
            let mut jump = 0.0;
            for s in 0..2 {
                let k = ef.faces[s];
                let (xi, eta) = reference_point(&mesh.faces[k], &bary);
                let coeffs = local_coefficients(mesh, dofmap, k, velocity);
                let (v, _) = bases[k].combine(&coeffs, xi, eta);
                jump += v.dot(&ef.normals[s]);
            }
            max = max.max(jump.abs());
        }
    }
    Ok(max)
}

/// Largest `|v·ν_K| / |v|` over every velocity basis value and over the
/// discrete field itself at all quadrature points.
pub fn max_normal_component(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    velocity: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    let mut max = 0.0f64;
    for k in 0..mesh.n_faces() {
        let nu = mesh.geometry[k].nu;
        let basis = FaceBasis::new(mesh, dofmap, k);
        let coeffs = local_coefficients(mesh, dofmap, k, velocity);
        for pt in &rule.points {
            let e = basis.eval(pt[0], pt[1]);
            let (v, _) = basis.combine(&coeffs, pt[0], pt[1]);
            for w in e.velocity.iter().map(|s| s.value).chain(std::iter::once(v)) {
                let n = w.norm();
                if n > 0.0 {
                    max = max.max(w.dot(&nu).abs() / n);
                }
            }
        }
    }
    max
}

/// `max |ŭ_K − M_a^K ŭ_{K_a}| / (h² |u|)` over vertices and incident faces.
pub fn transfer_defect(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    exact: &dyn ExactFields,
) -> Result<f64, GeometryError> {
    let h = mesh.h();
    let mut max = 0.0f64;
    for (a, rec) in dofmap.records.iter().enumerate() {
        let x = mesh.vertices[a];
        let spd = mesh.surface().closest_point(&x)?;
        let u = exact.velocity(&spd.p);
        if u.norm() == 0.0 {
            continue;
        }
        let nu_master = mesh.geometry[rec.master_face].nu;
        let on_master = piola_inverse(&nu_master, &spd, &u, DEFAULT_MIN_ALIGNMENT)?;
        for inc in &rec.incident {
            let nu_k = mesh.geometry[inc.face].nu;
            let direct = piola_inverse(&nu_k, &spd, &u, DEFAULT_MIN_ALIGNMENT)?;
            let transferred = edge_transfer(&nu_master, &nu_k, DEFAULT_MIN_ALIGNMENT)? * on_master;
            max = max.max((direct - transferred).norm() / (h * h * u.norm()));
        }
    }
    Ok(max)
}

/// `max |1 − μ_h| / h²` over all quadrature points.
pub fn measure_defect(mesh: &SurfaceMesh, rule: &QuadratureRule) -> Result<f64, GeometryError> {
    let h = mesh.h();
    let mut max = 0.0f64;
    for geom in &mesh.geometry {
        for pt in &rule.points {
            let spd = mesh.surface().closest_point(&geom.map(pt[0], pt[1]))?;
            max = max.max((1.0 - measure_ratio(&geom.nu, &spd)?).abs());
        }
    }
    Ok(max / (h * h))
}

/// `∫_K μ_h` by quadrature.
pub fn lifted_face_area(
    mesh: &SurfaceMesh,
    face: usize,
    rule: &QuadratureRule,
) -> Result<f64, GeometryError> {
    let geom = &mesh.geometry[face];
    let mut s = 0.0;
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        let spd = mesh.surface().closest_point(&geom.map(pt[0], pt[1]))?;
        s += w * geom.j * measure_ratio(&geom.nu, &spd)?;
    }
    Ok(s)
}

/// Area of `p(K)` from a uniform `n × n` subdivision whose vertices are
/// projected onto the surface, Richardson-extrapolated from `n` and `2n`.
pub fn subdivided_face_area(
    mesh: &SurfaceMesh,
    face: usize,
    n: usize,
) -> Result<f64, GeometryError> {
    let flat = |n: usize| -> Result<f64, GeometryError> {
        let geom = &mesh.geometry[face];
        let mut pts = vec![Vector3::zeros(); (n + 1) * (n + 1)];
        for i in 0..=n {
            for j in 0..=(n - i) {
                let x = geom.map(i as f64 / n as f64, j as f64 / n as f64);
                pts[i * (n + 1) + j] = mesh.surface().closest_point(&x)?.p;
            }
        }
        let at = |i: usize, j: usize| pts[i * (n + 1) + j];
        let tri = |a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>| {
            0.5 * (b - a).cross(&(c - a)).norm()
        };
        let mut area = 0.0;
        for i in 0..n {
            for j in 0..(n - i) {
                area += tri(at(i, j), at(i + 1, j), at(i, j + 1));
                if i + j + 1 < n {
                    area += tri(at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                }
            }
        }
        Ok(area)
    };
    let coarse = flat(n)?;
    let fine = flat(2 * n)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Discrete inf-sup constant and the eigenvalue of the deflated constant mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfSup {
    pub beta: f64,
    /// Smallest eigenvalue, associated with constant pressures.
    pub kernel_eigenvalue: f64,
}

/// `β_h² = ` second-smallest eigenvalue of `B A⁻¹ Bᵀ p = β² M_p p`.
pub fn inf_sup(mesh: &SurfaceMesh, system: &SaddleSystem) -> Result<InfSup, SolverError> {
    let np = system.n_pressure();
    let nv = system.n_velocity();
    let a = SpdSolver::new(&system.a)?;
    let mut bt = Mat::<f64>::zeros(nv, np);
    for (k, j, v) in system.b.triplets() {
        bt[(j, k)] = v;
    }
    let x = a.solve_many(&bt);
    let mut s = DMatrix::<f64>::zeros(np, np);
    for (k, j, v) in system.b.triplets() {
        for l in 0..np {
            s[(k, l)] += v * x[(j, l)];
        }
    }
    s = 0.5 * (&s + s.transpose());
    let mp = pressure_mass(mesh).to_dense();
    let chol = nalgebra::Cholesky::new(mp).ok_or_else(|| SolverError::SolverBreakdown {
        reason: "pressure mass matrix is not positive definite".into(),
        residual: f64::NAN,
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(np, np))
        .expect("nonsingular Cholesky factor");
    let c = &linv * s * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(InfSup {
        beta: eig[1].max(0.0).sqrt(),
        kernel_eigenvalue: eig[0],
    })
}

/// `‖Def_γ(P_p v) − (Def_{Γ_h} v)∘p⁻¹‖_{L₂(γ)} / (h ‖v‖_{H¹_h})` for a random
/// discrete field with coefficients uniform in `[−1, 1]`.
pub fn deformation_transfer_ratio(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    seed: u64,
) -> Result<f64, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let velocity: Vec<f64> = (0..dofmap.index.n_velocity())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let rule = QuadratureRule::new(6).expect("degree 6 rule");
    let surface = mesh.surface();
    let per_face: Vec<(f64, f64)> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|k| {
            let geom = &mesh.geometry[k];
            let basis = FaceBasis::new(mesh, dofmap, k);
            let coeffs = local_coefficients(mesh, dofmap, k, &velocity);
            let step = LIFT_FD_STEP * mesh.face_diameter(k);
            let frame = least_aligned_frame(&geom.nu);
            let dref = geom.grad_map.transpose();
            let forward = |xi: f64, eta: f64| -> Result<Vector3<f64>, GeometryError> {
                let (v, _) = basis.combine(&coeffs, xi, eta);
                let spd = surface.closest_point(&geom.map(xi, eta))?;
                piola_forward(&geom.nu, &spd, &v)
            };
            let (mut num, mut den) = (0.0, 0.0);
            for (pt, w) in rule.points.iter().zip(&rule.weights) {
                let x = geom.map(pt[0], pt[1]);
                let spd = surface.closest_point(&x)?;
                let mu = measure_ratio(&geom.nu, &spd)?;
                let dp = spd.pi - spd.d * spd.h;
                let mut dw = Matrix3x2::zeros();
                let mut tangents = Matrix3x2::zeros();
                for (c, t) in frame.iter().enumerate() {
                    let r = dref * t * step;
                    let plus = forward(pt[0] + r.x, pt[1] + r.y)?;
                    let minus = forward(pt[0] - r.x, pt[1] - r.y)?;
                    dw.set_column(c, &((plus - minus) / (2.0 * step)));
                    tangents.set_column(c, &(dp * t));
                }
                let pinv = (tangents.transpose() * tangents)
                    .try_inverse()
                    .expect("projected tangents are independent")
                    * tangents.transpose();
                let grad_gamma = spd.pi * dw * pinv;
                let (v, gv) = basis.combine(&coeffs, pt[0], pt[1]);
                let diff = deformation(&grad_gamma) - deformation(&gv);
                num += w * geom.j * mu * diff.norm_squared();
                den += w * geom.j * (v.norm_squared() + gv.norm_squared());
            }
            Ok((num, den))
        })
        .collect::<Result<_, GeometryError>>()?;
    let (num, den) = per_face
        .iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(num.sqrt() / (mesh.h() * den.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{Dual, Real};
    use crate::geometry::LevelSetSurface;
    use crate::manufactured::{ExactSolution, ZeroFields};

    /// Tangential field on the unit sphere: `u(p) = (−p_y, p_x, 0) + (0, −p_z, p_y)·p_x`.
    struct SphereField;

    impl ExactFields for SphereField {
        fn velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
            let [x, y, z] = sphere_field([p.x, p.y, p.z]);
            Vector3::new(x, y, z)
        }
        fn pressure(&self, p: &Vector3<f64>) -> f64 {
            p.x
        }
    }

    fn sphere_field<T: Real>(p: [T; 3]) -> [T; 3] {
        [-p[1], p[0] - p[0] * p[2], p[0] * p[1]]
    }

    /// `ŭ(x) = ((ν·ν_K) u(ν) − ν (ν_K·u(ν))) / |x|` with `ν = x/|x|`.
    fn sphere_lift<T: Real>(x: [T; 3], nk: Vector3<f64>) -> [T; 3] {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let nu = x.map(|c| c / r);
        let u = sphere_field(nu);
        let nk = [nk.x, nk.y, nk.z].map(T::from_f64);
        let a = nu[0] * nk[0] + nu[1] * nk[1] + nu[2] * nk[2];
        let b = u[0] * nk[0] + u[1] * nk[1] + u[2] * nk[2];
        [0, 1, 2].map(|i| (a * u[i] - nu[i] * b) / r)
    }

    #[test]
    fn sphere_lift_gradient_matches_chain_rule() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let mesh = SurfaceMesh::generate(&s, 2).unwrap();
        let rule = QuadratureRule::new(6).unwrap();
        let mut count = 0;
        'outer: for (k, geom) in mesh.geometry.iter().enumerate() {
            for pt in &rule.points {
                let x = geom.map(pt[0], pt[1]);
                let lifted = lift_exact(&SphereField, &s, geom, mesh.face_diameter(k), &x).unwrap();
                let closed = sphere_lift([x.x, x.y, x.z], geom.nu);
                assert!((lifted.u - Vector3::from(closed)).norm() < 1e-13);
                let mut grad = Matrix3::zeros();
                for t in least_aligned_frame(&geom.nu) {
                    let seeded = [0, 1, 2].map(|i| Dual::new(x[i], t[i]));
                    let d = sphere_lift(seeded, geom.nu).map(|c| c.eps);
                    grad += Vector3::from(d) * t.transpose();
                }
                let scale = grad.norm().max(1.0);
                assert!((lifted.grad_u - grad).norm() <= 1e-6 * scale);
                count += 1;
                if count == 100 {
                    break 'outer;
                }
            }
        }
    }

    #[test]
    fn discrete_field_as_exact_gives_zero_error() {
        let s = LevelSetSurface::reference_ellipsoid();
        let mesh = SurfaceMesh::generate(&s, 1).unwrap();
        let dm = DofMap::build(&mesh).unwrap();
        let v = vec![0.0; dm.index.n_velocity()];
        let p = vec![0.0; dm.index.n_pressure()];
        let r = error_norms(&mesh, &dm, &v, &p, &ZeroFields, 6).unwrap();
        assert!(r.e_energy <= 1e-12 && r.e_l2_vel <= 1e-12);
    }

    #[test]
    fn interpolation_reproduces_discrete_fields() {
        let s = LevelSetSurface::reference_ellipsoid();
        let mesh = SurfaceMesh::generate(&s, 2).unwrap();
        let dm = DofMap::build(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v: Vec<f64> = (0..dm.index.n_velocity())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        for k in 0..mesh.n_faces() {
            for i in 0..2 {
                v[dm.index.bubble_velocity(k, i)] = 0.0;
            }
        }
        let back = interpolate_with(&dm, |k, a| Ok(vertex_value(&mesh, &dm, &v, k, a))).unwrap();
        for (x, y) in v.iter().zip(&back) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn eoc_table_first_row_empty() {
        let r = |level, e| ErrorReport {
            level,
            h: 1.0,
            dof_v: 0,
            dof_p: 0,
            e_energy: e,
            e_h1_vel: e,
            e_l2_vel: e * e,
            e_l2_pres: e,
            seconds: 0.0,
        };
        let t = EocTable::from_reports(&[r(1, 0.4), r(2, 0.2)]);
        assert_eq!(t.rows[0].rate_energy, None);
        assert!((t.rows[1].rate_energy.unwrap() - 1.0).abs() < 1e-15);
        assert!((t.rows[1].rate_l2_vel.unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(eoc(0.0, 1.0), None);
    }

    #[test]
    fn planar_star_has_zero_defect() {
        // coplanar faces around a vertex: transfer acts as the identity on the plane
        let nu = Vector3::new(0.0, 0.0, 1.0);
        let m = edge_transfer(&nu, &nu, DEFAULT_MIN_ALIGNMENT).unwrap();
        for t in [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, -0.7, 0.0)] {
            assert_eq!(m * t, t);
        }
    }

    #[test]
    fn conformity_of_interpolant() {
        let s = LevelSetSurface::reference_ellipsoid();
        let mesh = SurfaceMesh::generate(&s, 2).unwrap();
        let dm = DofMap::build(&mesh).unwrap();
        let ex = ExactSolution::new(s);
        let v = interpolate(&mesh, &dm, &ex).unwrap();
        let jump = max_normal_jump(&mesh, &dm, &v).unwrap();
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(jump <= 1e-12 * vmax, "{jump}");
    }
}
