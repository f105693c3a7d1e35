//! Global assembly of the discrete saddle-point system.

use nalgebra::{SMatrix, SVector, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::dofmap::{DofMap, GlobalDofIndex};
use crate::element::{deformation, FaceBasis};
use crate::geometry::{FaceGeometry, GeometryError};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{QuadratureError, QuadratureRule};
use crate::sparse::CsrMatrix;

pub const DEFAULT_QUADRATURE_DEGREE: usize = 6;
pub const DEFAULT_MAX_DIMENSION: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("system dimension {dim} exceeds the cap {cap}")]
    AssemblyOverflow { dim: usize, cap: usize },
}

/// Right-hand side data sampled at a point of a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSample {
    /// Velocity load `f_h(x)`, tangent to the face.
    pub f: Vector3<f64>,
    /// Divergence data `μ_h(x) g(p(x))`.
    pub g: f64,
}

pub trait LoadData: Sync {
    fn sample(&self, face: &FaceGeometry, x: &Vector3<f64>) -> Result<LoadSample, GeometryError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroLoad;

impl LoadData for ZeroLoad {
    fn sample(&self, _face: &FaceGeometry, _x: &Vector3<f64>) -> Result<LoadSample, GeometryError> {
        Ok(LoadSample {
            f: Vector3::zeros(),
            g: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub quadrature_degree: usize,
    pub max_dimension: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            quadrature_degree: DEFAULT_QUADRATURE_DEGREE,
            max_dimension: DEFAULT_MAX_DIMENSION,
        }
    }
}

/// ```text
/// [ A  Bᵀ 0 ] [u]   [F]
/// [ B  0  c ] [p] = [G]
/// [ 0  cᵀ 0 ] [λ]   [0]
/// ```
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub c: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub index: GlobalDofIndex,
}

impl SaddleSystem {
    pub fn n_velocity(&self) -> usize {
        self.index.n_velocity()
    }

    pub fn n_pressure(&self) -> usize {
        self.index.n_pressure()
    }

    pub fn dimension(&self) -> usize {
        self.index.total()
    }

    /// Full symmetric system matrix including the multiplier row.
    pub fn kkt(&self) -> CsrMatrix {
        let nv = self.n_velocity();
        let np = self.n_pressure();
        let mut t: Vec<(usize, usize, f64)> =
            Vec::with_capacity(self.a.nnz() + 2 * self.b.nnz() + 2 * np);
        t.extend(self.a.triplets());
        for (k, j, v) in self.b.triplets() {
            t.push((nv + k, j, v));
            t.push((j, nv + k, v));
        }
        for (k, &ck) in self.c.iter().enumerate() {
            t.push((nv + k, nv + np, ck));
            t.push((nv + np, nv + k, ck));
        }
        CsrMatrix::from_triplets(nv + np + 1, nv + np + 1, &t)
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.dimension());
        r.extend_from_slice(&self.f);
        r.extend_from_slice(&self.g);
        r.push(0.0);
        r
    }

    /// `K x` evaluated blockwise from the stored operators.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nv = self.n_velocity();
        let np = self.n_pressure();
        let (u, rest) = x.split_at(nv);
        let (p, lambda) = rest.split_at(np);
        let mut out = self.a.mul_vec(u);
        for (o, bt) in out.iter_mut().zip(self.b.transpose_mul_vec(p)) {
            *o += bt;
        }
        let bu = self.b.mul_vec(u);
        out.extend(bu.iter().zip(&self.c).map(|(b, c)| b + c * lambda[0]));
        out.push(crate::sparse::dot(&self.c, p));
        out
    }
}

type Local8x8 = SMatrix<f64, 8, 8>;
type Local3x8 = SMatrix<f64, 3, 8>;

struct LocalSystem {
    a: Local8x8,
    b: Local3x8,
    f: SVector<f64, 8>,
    g: [f64; 3],
    c: [f64; 3],
}

fn local_system(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    face: usize,
    rule: &QuadratureRule,
    data: &dyn LoadData,
) -> Result<LocalSystem, GeometryError> {
    let geom = &mesh.geometry[face];
    let basis = FaceBasis::new(mesh, dofmap, face);
    let mut a = Local8x8::zeros();
    let mut b = Local3x8::zeros();
    let mut f = SVector::<f64, 8>::zeros();
    let mut g = [0.0; 3];
    let mut c = [0.0; 3];
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        let wq = w * geom.j;
        let x = geom.map(pt[0], pt[1]);
        let e = basis.eval(pt[0], pt[1]);
        let load = data.sample(geom, &x)?;
        let defs = e.velocity.map(|s| deformation(&s.grad));
        for i in 0..8 {
            for j in i..8 {
                let v = defs[i].dot(&defs[j]) + e.velocity[i].value.dot(&e.velocity[j].value);
                a[(i, j)] += wq * v;
            }
            f[i] += wq * load.f.dot(&e.velocity[i].value);
        }
        for k in 0..3 {
            let q = e.pressure[k].value;
            for j in 0..8 {
                b[(k, j)] -= wq * e.velocity[j].div * q;
            }
            g[k] -= wq * load.g * q;
            c[k] += wq * q;
        }
    }
    for i in 0..8 {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    Ok(LocalSystem { a, b, f, g, c })
}

pub fn assemble(
    mesh: &SurfaceMesh,
    dofmap: &DofMap,
    data: &dyn LoadData,
    options: &AssemblyOptions,
) -> Result<SaddleSystem, AssemblyError> {
    let index = dofmap.index;
    if index.total() > options.max_dimension {
        return Err(AssemblyError::AssemblyOverflow {
            dim: index.total(),
            cap: options.max_dimension,
        });
    }
    let rule = QuadratureRule::new(options.quadrature_degree)?;
    let locals: Vec<LocalSystem> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|k| local_system(mesh, dofmap, k, &rule, data))
        .collect::<Result<_, _>>()?;

    let nv = index.n_velocity();
    let np = index.n_pressure();
    let mut ta = Vec::with_capacity(64 * locals.len());
    let mut tb = Vec::with_capacity(24 * locals.len());
    let mut f = vec![0.0; nv];
    let mut g = vec![0.0; np];
    let mut c = vec![0.0; np];
    for (k, loc) in locals.iter().enumerate() {
        let vd = dofmap.local_velocity_dofs(mesh, k);
        let pd = mesh.faces[k];
        for i in 0..8 {
            for j in 0..8 {
                ta.push((vd[i], vd[j], loc.a[(i, j)]));
            }
            f[vd[i]] += loc.f[i];
        }
        for r in 0..3 {
            for j in 0..8 {
                tb.push((pd[r], vd[j], loc.b[(r, j)]));
            }
            g[pd[r]] += loc.g[r];
            c[pd[r]] += loc.c[r];
        }
    }

    // remove the discrete mean so that 1ᵀG = 0, matching 1ᵀB = 0
    let shift = g.iter().sum::<f64>() / c.iter().sum::<f64>();
    for (gk, ck) in g.iter_mut().zip(&c) {
        *gk -= shift * ck;
    }

    Ok(SaddleSystem {
        a: CsrMatrix::from_triplets(nv, nv, &ta),
        b: CsrMatrix::from_triplets(np, nv, &tb),
        c,
        f,
        g,
        index,
    })
}

/// Consistent P1 mass matrix on the flat faces.
pub fn pressure_mass(mesh: &SurfaceMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.n_faces());
    for (face, geom) in mesh.faces.iter().zip(&mesh.geometry) {
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j {
                    geom.area / 6.0
                } else {
                    geom.area / 12.0
                };
                t.push((face[i], face[j], m));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), &t)
}

/// Velocity mass and `H¹_h` stiffness contributions split apart, for norms of
/// discrete fields.
pub fn velocity_gram(mesh: &SurfaceMesh, dofmap: &DofMap) -> (CsrMatrix, CsrMatrix) {
    let rule = QuadratureRule::new(DEFAULT_QUADRATURE_DEGREE).expect("degree 6 rule exists");
    let nv = dofmap.index.n_velocity();
    let mut tm = Vec::new();
    let mut tg = Vec::new();
    for k in 0..mesh.n_faces() {
        let geom = &mesh.geometry[k];
        let basis = FaceBasis::new(mesh, dofmap, k);
        let vd = dofmap.local_velocity_dofs(mesh, k);
        let mut m = Local8x8::zeros();
        let mut s = Local8x8::zeros();
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let wq = w * geom.j;
            let e = basis.eval(pt[0], pt[1]);
            for i in 0..8 {
                for j in 0..8 {
                    m[(i, j)] += wq * e.velocity[i].value.dot(&e.velocity[j].value);
                    s[(i, j)] += wq * e.velocity[i].grad.dot(&e.velocity[j].grad);
                }
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                tm.push((vd[i], vd[j], m[(i, j)]));
                tg.push((vd[i], vd[j], s[(i, j)]));
            }
        }
    }
    (
        CsrMatrix::from_triplets(nv, nv, &tm),
        CsrMatrix::from_triplets(nv, nv, &tg),
    )
}
