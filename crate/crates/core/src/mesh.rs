//! Icosahedral triangulations inscribed in a level-set surface.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{FaceGeometry, GeometryError, LevelSetSurface};

/// Largest refinement level accepted by [`SurfaceMesh::generate`].
pub const MAX_LEVEL: usize = 8;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("refinement level {level} exceeds the cap of {cap}")]
    MemoryGuard { level: usize, cap: usize },
    #[error("edge ({0}, {1}) has {2} incident faces, expected 2")]
    NonManifold(usize, usize, usize),
    #[error("face {face} leaves the tube: |d| = {distance} > {halfwidth}")]
    OutsideTube {
        face: usize,
        distance: f64,
        halfwidth: f64,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, sorted ascending.
    pub vertices: [usize; 2],
    /// The two incident faces, in order of first appearance.
    pub faces: [usize; 2],
}

/// Triangulated closed surface with full vertex/edge/face adjacency.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    surface: LevelSetSurface,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Faces incident to each vertex, ascending.
    pub vertex_stars: Vec<Vec<usize>>,
    pub geometry: Vec<FaceGeometry>,
    pub level: usize,
}

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::new(v[0], v[1], v[2]))
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

impl SurfaceMesh {
    /// Icosahedron mapped radially onto the surface and refined `level` times.
    pub fn generate(surface: &LevelSetSurface, level: usize) -> Result<Self, MeshError> {
        if level > MAX_LEVEL {
            return Err(MeshError::MemoryGuard {
                level,
                cap: MAX_LEVEL,
            });
        }
        let (seed, faces) = icosahedron();
        let vertices = seed.iter().map(|v| surface.radial_projection(v)).collect();
        let mut mesh = Self::from_parts(surface.clone(), vertices, faces, 0)?;
        for _ in 0..level {
            mesh = mesh.refine()?;
        }
        Ok(mesh)
    }

    /// One round of 4-way midpoint subdivision; new vertices are projected
    /// onto the surface by closest point.
    pub fn refine(&self) -> Result<Self, MeshError> {
        if self.level + 1 > MAX_LEVEL {
            return Err(MeshError::MemoryGuard {
                level: self.level + 1,
                cap: MAX_LEVEL,
            });
        }
        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::with_capacity(4 * self.faces.len());
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoints.get(&key) {
                return Ok::<usize, GeometryError>(m);
            }
            let x = 0.5 * (vertices[a] + vertices[b]);
            let p = self.surface.closest_point(&x)?.p;
            vertices.push(p);
            let idx = vertices.len() - 1;
            midpoints.insert(key, idx);
            Ok(idx)
        };
        for &[a, b, c] in &self.faces {
            let ab = midpoint(a, b, &mut vertices)?;
            let bc = midpoint(b, c, &mut vertices)?;
            let ca = midpoint(c, a, &mut vertices)?;
            faces.push([a, ab, ca]);
            faces.push([ab, b, bc]);
            faces.push([ca, bc, c]);
            faces.push([ab, bc, ca]);
        }
        Self::from_parts(self.surface.clone(), vertices, faces, self.level + 1)
    }

    /// Builds topology and face geometry from raw vertex/face arrays.
    pub fn from_parts(
        surface: LevelSetSurface,
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        level: usize,
    ) -> Result<Self, MeshError> {
        let mut vertex_stars = vec![Vec::new(); vertices.len()];
        for (k, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_stars[v].push(k);
            }
        }
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut incident: Vec<([usize; 2], Vec<usize>)> = Vec::new();
        for (k, f) in faces.iter().enumerate() {
            for j in 0..3 {
                let (a, b) = (f[j], f[(j + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    incident.push(([key.0, key.1], Vec::new()));
                    incident.len() - 1
                });
                incident[e].1.push(k);
            }
        }
        let mut edges = Vec::with_capacity(incident.len());
        for (v, fs) in incident {
            if fs.len() != 2 {
                return Err(MeshError::NonManifold(v[0], v[1], fs.len()));
            }
            edges.push(Edge {
                vertices: v,
                faces: [fs[0], fs[1]],
            });
        }
        let geometry = faces
            .iter()
            .map(|f| FaceGeometry::from_vertices(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
            .collect();
        let mesh = Self {
            surface,
            vertices,
            faces,
            edges,
            vertex_stars,
            geometry,
            level,
        };
        mesh.check_tube()?;
        Ok(mesh)
    }

    fn check_tube(&self) -> Result<(), MeshError> {
        let halfwidth = self.surface.tube_halfwidth();
        for k in 0..self.faces.len() {
            let spd = self.surface.closest_point(&self.centroid(k))?;
            if spd.d.abs() > halfwidth {
                return Err(MeshError::OutsideTube {
                    face: k,
                    distance: spd.d.abs(),
                    halfwidth,
                });
            }
        }
        Ok(())
    }

    pub fn surface(&self) -> &LevelSetSurface {
        &self.surface
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    pub fn centroid(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Position of `vertex` within `face`.
    pub fn local_index(&self, face: usize, vertex: usize) -> Option<usize> {
        self.faces[face].iter().position(|&v| v == vertex)
    }

    /// Longest edge of a face.
    pub fn face_diameter(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face];
        let v = &self.vertices;
        (v[a] - v[b])
            .norm()
            .max((v[b] - v[c]).norm())
            .max((v[c] - v[a]).norm())
    }

    fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges
            .iter()
            .map(|e| (self.vertices[e.vertices[0]] - self.vertices[e.vertices[1]]).norm())
    }

    /// Mesh size `h`: the longest edge.
    pub fn h(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edge_lengths().fold(f64::INFINITY, f64::min)
    }

    /// Smallest interior angle over all faces, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for f in &self.faces {
            for j in 0..3 {
                let p = self.vertices[f[j]];
                let u = self.vertices[f[(j + 1) % 3]] - p;
                let w = self.vertices[f[(j + 2) % 3]] - p;
                let angle = (u.dot(&w) / (u.norm() * w.norm())).clamp(-1.0, 1.0).acos();
                min = min.min(angle.to_degrees());
            }
        }
        min
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// In-plane outward unit normals of every edge with respect to each of
    /// its two faces.
    pub fn build_edge_frames(&self) -> Result<Vec<EdgeFrame>, MeshError> {
        self.edges
            .iter()
            .map(|e| {
                let mut normals = [Vector3::zeros(); 2];
                for (slot, &k) in e.faces.iter().enumerate() {
                    let f = self.faces[k];
                    let opposite = f
                        .iter()
                        .copied()
                        .find(|v| !e.vertices.contains(v))
                        .ok_or(MeshError::NonManifold(e.vertices[0], e.vertices[1], 1))?;
                    normals[slot] = in_plane_normal(
                        &self.vertices[e.vertices[0]],
                        &self.vertices[e.vertices[1]],
                        &self.vertices[opposite],
                        &self.geometry[k].nu,
                    );
                }
                Ok(EdgeFrame {
                    edge: e.vertices,
                    faces: e.faces,
                    normals,
                })
            })
            .collect()
    }

    /// ASCII OFF export.
    pub fn write_off<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "OFF")?;
        writeln!(
            out,
            "{} {} {}",
            self.n_vertices(),
            self.n_faces(),
            self.n_edges()
        )?;
        for v in &self.vertices {
            writeln!(out, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }
}

/// Outward in-plane unit normals of one edge for its two faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub edge: [usize; 2],
    pub faces: [usize; 2],
    pub normals: [Vector3<f64>; 2],
}

/// Unit vector in the face plane, perpendicular to the edge `(a, b)`,
/// pointing away from the opposite vertex `c`.
pub fn in_plane_normal(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    face_normal: &Vector3<f64>,
) -> Vector3<f64> {
    let t = (b - a).normalize();
    let mut n = t.cross(face_normal);
    let mid = 0.5 * (a + b);
    if n.dot(&(c - mid)) > 0.0 {
        n = -n;
    }
    n
}
