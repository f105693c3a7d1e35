//! Vertex degrees of freedom for tangential MINI velocity fields.
//!
//! Each vertex `a` owns two velocity DOFs expressed in an orthonormal frame
//! of its master face `K_a`. On every other incident face `K` the frame is
//! carried over by the vertex transfer map `M_a^K`, and the result is
//! expressed in the face's reference chart through the contravariant Piola
//! map `𝒫_{F_K}`. The chart coefficients `α` are what element evaluation
//! consumes.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::geometry::{edge_transfer, least_aligned_frame, GeometryError, DEFAULT_MIN_ALIGNMENT};
use crate::mesh::SurfaceMesh;

/// Transferred frame of a vertex on one incident face.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentDofs {
    pub face: usize,
    /// Position of the vertex in the face (0, 1 or 2).
    pub local_index: usize,
    /// `M_a^K v_{i,a,K_a}` for `i = 1, 2`.
    pub transferred: [Vector3<f64>; 2],
    /// Reference coefficients with `𝒫_{F_K} α_i = transferred[i]`.
    pub alpha: [Vector2<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexDofRecord {
    pub master_face: usize,
    pub frame: [Vector3<f64>; 2],
    pub incident: Vec<IncidentDofs>,
}

/// Layout of the unknowns of the saddle-point system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalDofIndex {
    pub n_vertices: usize,
    pub n_faces: usize,
}

impl GlobalDofIndex {
    pub fn vertex_velocity(&self, vertex: usize, component: usize) -> usize {
        2 * vertex + component
    }

    pub fn bubble_velocity(&self, face: usize, component: usize) -> usize {
        2 * self.n_vertices + 2 * face + component
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_vertices + 2 * self.n_faces
    }

    pub fn n_pressure(&self) -> usize {
        self.n_vertices
    }

    /// Velocity, pressure and the mean-value multiplier.
    pub fn total(&self) -> usize {
        self.n_velocity() + self.n_pressure() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub records: Vec<VertexDofRecord>,
    /// Orthonormal tangent frame per face; directions of the bubble DOFs.
    pub face_frames: Vec<[Vector3<f64>; 2]>,
    /// For each face and local vertex: index into that vertex's `incident`.
    face_slots: Vec<[usize; 3]>,
    pub index: GlobalDofIndex,
}

/// Master face per vertex: the lowest-numbered face of its star.
pub fn assign_masters(mesh: &SurfaceMesh) -> Vec<usize> {
    mesh.vertex_stars
        .iter()
        .map(|star| *star.iter().min().expect("vertex without incident faces"))
        .collect()
}

/// Orthonormal frame on each vertex's master face.
pub fn build_frames(mesh: &SurfaceMesh, masters: &[usize]) -> Vec<[Vector3<f64>; 2]> {
    masters
        .iter()
        .map(|&k| least_aligned_frame(&mesh.geometry[k].nu))
        .collect()
}

impl DofMap {
    pub fn build(mesh: &SurfaceMesh) -> Result<Self, GeometryError> {
        Self::build_with_threshold(mesh, DEFAULT_MIN_ALIGNMENT)
    }

    pub fn build_with_threshold(
        mesh: &SurfaceMesh,
        min_alignment: f64,
    ) -> Result<Self, GeometryError> {
        let masters = assign_masters(mesh);
        let frames = build_frames(mesh, &masters);
        let mut records = Vec::with_capacity(mesh.n_vertices());
        let mut face_slots = vec![[usize::MAX; 3]; mesh.n_faces()];

        for (a, star) in mesh.vertex_stars.iter().enumerate() {
            let master = masters[a];
            let nu_master = mesh.geometry[master].nu;
            let mut incident = Vec::with_capacity(star.len());
            for &k in star {
                let geom = &mesh.geometry[k];
                let transfer = edge_transfer(&nu_master, &geom.nu, min_alignment)?;
                let transferred = [transfer * frames[a][0], transfer * frames[a][1]];
                // Moore–Penrose pseudoinverse of 𝒫_{F_K} = DF_K / J
                let p = geom.jacobian / geom.j;
                let pinv = (p.transpose() * p)
                    .try_inverse()
                    .unwrap_or_else(Matrix2::zeros)
                    * p.transpose();
                let alpha = [pinv * transferred[0], pinv * transferred[1]];
                let local_index = mesh.local_index(k, a).expect("star face contains vertex");
                face_slots[k][local_index] = incident.len();
                incident.push(IncidentDofs {
                    face: k,
                    local_index,
                    transferred,
                    alpha,
                });
            }
            records.push(VertexDofRecord {
                master_face: master,
                frame: frames[a],
                incident,
            });
        }

        let face_frames = mesh
            .geometry
            .iter()
            .map(|g| least_aligned_frame(&g.nu))
            .collect();
        Ok(Self {
            records,
            face_frames,
            face_slots,
            index: GlobalDofIndex {
                n_vertices: mesh.n_vertices(),
                n_faces: mesh.n_faces(),
            },
        })
    }

    pub fn incident(&self, mesh: &SurfaceMesh, face: usize, local: usize) -> &IncidentDofs {
        let vertex = mesh.faces[face][local];
        &self.records[vertex].incident[self.face_slots[face][local]]
    }

    /// The six vertex-DOF direction vectors on a face, reconstructed from
    /// the reference coefficients: `[local vertex][component]`.
    pub fn vertex_directions(&self, mesh: &SurfaceMesh, face: usize) -> [[Vector3<f64>; 2]; 3] {
        let geom = &mesh.geometry[face];
        let mut out = [[Vector3::zeros(); 2]; 3];
        for (j, dirs) in out.iter_mut().enumerate() {
            let inc = self.incident(mesh, face, j);
            for i in 0..2 {
                dirs[i] = geom.reference_piola(&inc.alpha[i]);
            }
        }
        out
    }

    /// Global velocity DOF of each of the 8 local velocity shape functions.
    pub fn local_velocity_dofs(&self, mesh: &SurfaceMesh, face: usize) -> [usize; 8] {
        let f = mesh.faces[face];
        let ix = &self.index;
        [
            ix.vertex_velocity(f[0], 0),
            ix.vertex_velocity(f[0], 1),
            ix.vertex_velocity(f[1], 0),
            ix.vertex_velocity(f[1], 1),
            ix.vertex_velocity(f[2], 0),
            ix.vertex_velocity(f[2], 1),
            ix.bubble_velocity(face, 0),
            ix.bubble_velocity(face, 1),
        ]
    }

    /// Largest `|𝒫_{F_K} α − v_{i,a,K}|` over all records.
    pub fn max_consistency_residual(&self, mesh: &SurfaceMesh) -> f64 {
        let mut max = 0.0f64;
        for rec in &self.records {
            for inc in &rec.incident {
                let geom = &mesh.geometry[inc.face];
                for i in 0..2 {
                    let r = geom.reference_piola(&inc.alpha[i]) - inc.transferred[i];
                    max = max.max(r.norm());
                }
            }
        }
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetSurface;
    use crate::mesh::SurfaceMesh;

    fn mesh(level: usize) -> SurfaceMesh {
        SurfaceMesh::generate(&LevelSetSurface::reference_ellipsoid(), level).unwrap()
    }

    #[test]
    fn master_is_lowest_star_face() {
        let m = mesh(1);
        let masters = assign_masters(&m);
        for (a, &k) in masters.iter().enumerate() {
            assert!(m.faces[k].contains(&a));
            assert_eq!(k, *m.vertex_stars[a].iter().min().unwrap());
        }
        assert_eq!(masters, assign_masters(&m));
    }

    #[test]
    fn master_rule_on_explicit_star() {
        // a vertex whose star is {7, 3, 12, 5} picks face 3
        let star = [7usize, 3, 12, 5];
        assert_eq!(star.iter().min(), Some(&3));
    }

    #[test]
    fn frames_orthonormal_and_tangent() {
        let m = mesh(3);
        let masters = assign_masters(&m);
        for (a, [v1, v2]) in build_frames(&m, &masters).iter().enumerate() {
            let nu = m.geometry[masters[a]].nu;
            assert!(v1.dot(v2).abs() < 1e-14);
            assert!((v1.norm() - 1.0).abs() < 1e-14 && (v2.norm() - 1.0).abs() < 1e-14);
            assert!(v1.dot(&nu).abs() < 1e-14 && v2.dot(&nu).abs() < 1e-14);
        }
    }

    #[test]
    fn rosetta_consistency() {
        let m = mesh(3);
        let dm = DofMap::build(&m).unwrap();
        assert!(dm.max_consistency_residual(&m) <= 1e-12);
        for (a, rec) in dm.records.iter().enumerate() {
            let on_master = rec
                .incident
                .iter()
                .find(|i| i.face == rec.master_face)
                .unwrap();
            for i in 0..2 {
                assert!((on_master.transferred[i] - rec.frame[i]).norm() < 1e-15);
            }
            assert_eq!(rec.incident.len(), m.vertex_stars[a].len());
        }
        assert_eq!(dm.index.total(), 3 * m.n_vertices() + 2 * m.n_faces() + 1);
    }

    #[test]
    fn build_is_deterministic() {
        let m = mesh(2);
        assert_eq!(DofMap::build(&m).unwrap(), DofMap::build(&m).unwrap());
    }
}
