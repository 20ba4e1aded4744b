//! Triangle mesh container.

use crate::{Error, Result, Vec3};

/// Indexed triangle mesh with optional per-vertex normals.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
            vertex_normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_normals(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        vertex_normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
            vertex_normals,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for t in &self.triangles {
            if t[0] >= n || t[1] >= n || t[2] >= n {
                return Err(Error::ShapeMismatch(format!(
                    "triangle index out of range: {:?} with {} vertices",
                    t, n
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::ShapeMismatch(format!(
                    "degenerate triangle with repeated index: {:?}",
                    t
                )));
            }
        }
        if let Some(normals) = &self.vertex_normals {
            if normals.len() != self.vertices.len() {
                return Err(Error::ShapeMismatch(
                    "vertex normal count differs from vertex count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let a = self.vertices[t[0] as usize];
        let b = self.vertices[t[1] as usize];
        let c = self.vertices[t[2] as usize];
        (b - a).cross(&(c - a)).norm() * 0.5
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn face_normal(&self, t: &[u32; 3]) -> Vec3 {
        let a = self.vertices[t[0] as usize];
        let b = self.vertices[t[1] as usize];
        let c = self.vertices[t[2] as usize];
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    /// Euler characteristic V - E + F with undirected edge counting.
    pub fn euler_characteristic(&self) -> i64 {
        use std::collections::BTreeSet;
        let mut edges = BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Map every vertex through `f` (e.g. denormalization).
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| f(*v)).collect(),
            triangles: self.triangles.clone(),
            vertex_normals: self.vertex_normals.clone(),
        }
    }
}
