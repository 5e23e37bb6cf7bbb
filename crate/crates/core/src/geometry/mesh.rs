use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for t in &self.triangles {
            if let Some(&bad) = t.iter().find(|&&i| i as usize >= n) {
                return Err(Error::IndexOutOfRange {
                    index: bad as usize,
                    len: n,
                });
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidParameter(format!("degenerate triangle {t:?}")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Un-normalized face normal; its length is twice the triangle area.
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        );
        (b - a).cross(&(c - a))
    }

    /// Per-vertex normals from the area-weighted sum of incident face normals.
    /// Vertices with no incident area get `None`.
    pub fn vertex_normals(&self) -> Vec<Option<Vector3<f64>>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            let n = self.face_normal(t);
            for &i in &self.triangles[t] {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                (len > 0.0).then(|| n / len)
            })
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.face_normal(t).norm() / 2.0)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).is_ok());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn normals_and_area() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        let m = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!((m.surface_area() - 0.5).abs() < 1e-12);
        let n = m.vertex_normals();
        assert!((n[0].unwrap() - Vector3::z()).norm() < 1e-12);
    }
}
