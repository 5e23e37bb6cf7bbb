//! Marching cubes over observed voxel cells.
//!
//! The per-configuration triangle lists are derived once from the cube's face
//! topology: on every face the crossings bounding each run of negative
//! corners are joined, the resulting segments are chained into closed loops
//! and each loop is fanned into triangles.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh, ViewKind};
use crate::volume::tsdf::{for_each_voxel, Block, TsdfVolume, BLOCK};

/// Corner `c` sits at offset `CORNERS[c]` from the cell's lower corner.
pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner loops of the six faces, counter-clockwise seen from outside.
const FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 4, 7, 3],
    [1, 2, 6, 5],
];

fn edge_between(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&(x, y)| (x, y) == key).expect("cube edge")
}

/// The twelve cube edges as corner pairs.
pub const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 3),
    (1, 2),
    (4, 7),
    (5, 6),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Triangles (as edge-index triples) for one inside/outside configuration.
/// Bit `c` of `mask` is set when corner `c` is negative.
fn triangulate_case(mask: u8) -> Vec<[u8; 3]> {
    let neg = |c: usize| mask & (1 << c) != 0;
    // segment start -> end on the cube edges, negative side on the left
    let mut next: HashMap<usize, usize> = HashMap::new();
    for face in FACES {
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if neg(a) || !neg(b) {
                continue;
            }
            // entering a negative run at edge (a, b); walk to where it ends
            let mut m = (k + 1) % 4;
            while neg(face[(m + 1) % 4]) {
                m = (m + 1) % 4;
            }
            let exit = edge_between(face[m], face[(m + 1) % 4]);
            next.insert(edge_between(a, b), exit);
        }
    }
    let mut tris = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut used = [false; 12];
    for s in starts {
        if used[s] {
            continue;
        }
        let mut ring = vec![s];
        used[s] = true;
        let mut cur = next[&s];
        while cur != s {
            used[cur] = true;
            ring.push(cur);
            cur = next[&cur];
        }
        for k in 1..ring.len() - 1 {
            tris.push([ring[0] as u8, ring[k] as u8, ring[k + 1] as u8]);
        }
    }
    tris
}

/// Triangle lists for all 256 configurations.
pub fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|m| triangulate_case(m as u8)))
}

/// Vertex key: the lower-corner voxel of a grid edge and its axis.
type EdgeKey = ([usize; 3], u8);

fn edge_key(cell: [usize; 3], edge: usize) -> EdgeKey {
    let (a, b) = EDGES[edge];
    let (ca, cb) = (CORNERS[a], CORNERS[b]);
    let axis = (0..3).find(|&k| ca[k] != cb[k]).expect("axis edge");
    let lower = if ca[axis] < cb[axis] { ca } else { cb };
    ([cell[0] + lower[0], cell[1] + lower[1], cell[2] + lower[2]], axis as u8)
}

/// The block `key` and its seven upper neighbours, for corner lookups of
/// cells whose lower corner lies in `key`.
struct Neighbourhood<'a> {
    key: [usize; 3],
    blocks: [Option<&'a Block>; 8],
}

impl<'a> Neighbourhood<'a> {
    fn new(vol: &'a TsdfVolume, key: [usize; 3]) -> Self {
        let blocks = std::array::from_fn(|n| {
            let k = [key[0] + (n & 1), key[1] + ((n >> 1) & 1), key[2] + ((n >> 2) & 1)];
            vol.blocks.get(&k)
        });
        Self { key, blocks }
    }

    fn voxel(&self, idx: [usize; 3]) -> Option<(f64, f64)> {
        let mut n = 0;
        let mut local = [0usize; 3];
        for k in 0..3 {
            let b = idx[k] / BLOCK;
            if b > self.key[k] {
                n |= 1 << k;
            }
            local[k] = idx[k] % BLOCK;
        }
        let block = self.blocks[n]?;
        let l = (local[2] * BLOCK + local[1]) * BLOCK + local[0];
        Some((block.tsdf[l] as f64, block.weight[l] as f64))
    }
}

fn cell_values(hood: &Neighbourhood, cell: [usize; 3]) -> Option<[f64; 8]> {
    let mut f = [0.0; 8];
    for (c, off) in CORNERS.iter().enumerate() {
        let (t, w) = hood.voxel([cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]])?;
        if w <= 0.0 {
            return None;
        }
        f[c] = t;
    }
    Some(f)
}

/// Zero crossing on the grid edge `key`.
fn crossing(vol: &TsdfVolume, key: EdgeKey) -> Vector3<f64> {
    let (lo, axis) = key;
    let mut hi = lo;
    hi[axis as usize] += 1;
    let f0 = vol.get(lo).expect("in grid").0;
    let f1 = vol.get(hi).expect("in grid").0;
    let t = f0 / (f0 - f1);
    let (p0, p1) = (vol.voxel_center(lo), vol.voxel_center(hi));
    p0 + (p1 - p0) * t
}

/// Triangulates the zero level set over cells whose eight corners are all
/// observed. Triangles wind so their normals point toward positive values.
pub fn extract_mesh(vol: &TsdfVolume) -> Result<TriangleMesh> {
    let table = case_table();
    let dims = vol.dims();
    let mut keys: Vec<[usize; 3]> = vol.blocks.keys().copied().collect();
    keys.sort_unstable();
    let per_block: Vec<Vec<[EdgeKey; 3]>> = keys
        .par_iter()
        .map(|&key| {
            let mut out = Vec::new();
            let hood = Neighbourhood::new(vol, key);
            for_each_voxel(key, dims, |cell, l| {
                if (0..3).any(|k| cell[k] + 1 >= dims[k]) || hood.blocks[0].is_some_and(|b| b.weight[l] <= 0.0) {
                    return;
                }
                let Some(f) = cell_values(&hood, cell) else { return };
                let mask = (0..8).fold(0u8, |m, c| if f[c] < 0.0 { m | (1 << c) } else { m });
                for tri in &table[mask as usize] {
                    out.push(tri.map(|e| edge_key(cell, e as usize)));
                }
            });
            out
        })
        .collect();

    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for tri in per_block.into_iter().flatten() {
        let ids = tri.map(|k| {
            *index.entry(k).or_insert_with(|| {
                vertices.push(crossing(vol, k));
                (vertices.len() - 1) as u32
            })
        });
        let (a, b, c) = (vertices[ids[0] as usize], vertices[ids[1] as usize], vertices[ids[2] as usize]);
        if (b - a).cross(&(c - a)).norm_squared() > 0.0 {
            triangles.push(ids);
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    compact(vertices, triangles)
}

/// Drops vertices no triangle references.
fn compact(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<TriangleMesh> {
    let mut remap = vec![u32::MAX; vertices.len()];
    let mut kept = Vec::new();
    let triangles = triangles
        .into_iter()
        .map(|t| {
            t.map(|i| {
                if remap[i as usize] == u32::MAX {
                    remap[i as usize] = kept.len() as u32;
                    kept.push(vertices[i as usize]);
                }
                remap[i as usize]
            })
        })
        .collect();
    TriangleMesh::new(kept, triangles)
}

/// Mesh vertices as a cloud, with area-weighted vertex normals when every
/// vertex has one.
pub fn extract_cloud(mesh: &TriangleMesh) -> PointCloud {
    let cloud = PointCloud::new(mesh.vertices.clone(), "world", ViewKind::Full);
    let normals: Option<Vec<Vector3<f64>>> = mesh.vertex_normals().into_iter().collect();
    match normals {
        Some(n) if !n.is_empty() => cloud.clone().with_normals(n).unwrap_or(cloud),
        _ => cloud,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::tsdf::Allocation;

    #[test]
    fn table_basics() {
        let t = case_table();
        assert!(t[0].is_empty());
        assert!(t[255].is_empty());
        for c in 0..8 {
            assert_eq!(t[1 << c].len(), 1);
            assert_eq!(t[255 ^ (1 << c)].len(), 1);
        }
        // a face of four negatives splits the cube with a quad
        assert_eq!(t[0b0000_1111].len(), 2);
        // complements use the same edges
        for m in 0..256usize {
            let edges = |m: usize| {
                let mut e: Vec<u8> = t[m].iter().flatten().copied().collect();
                e.sort_unstable();
                e.dedup();
                e
            };
            assert_eq!(edges(m), edges(255 - m));
        }
    }

    /// Every triangle edge of a closed surface is shared by exactly two
    /// triangles that traverse it in opposite directions.
    fn assert_closed_and_oriented(mesh: &TriangleMesh) {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &n) in &directed {
            assert_eq!(n, 1, "edge ({a}, {b}) used {n} times in one direction");
            assert_eq!(directed.get(&(b, a)), Some(&1), "edge ({a}, {b}) is a boundary");
        }
    }

    fn sphere_volume(r: f64, voxel: f64) -> (TsdfVolume, Vector3<f64>) {
        let centre = Vector3::new(0.013, -0.007, 0.004);
        let half = r + 6.0 * voxel;
        let mut v = TsdfVolume::covering(
            centre - Vector3::repeat(half),
            centre + Vector3::repeat(half),
            voxel,
            6.0 * voxel,
            Allocation::Sparse,
        )
        .unwrap();
        v.fill_with(|p| (p - centre).norm() - r);
        (v, centre)
    }

    #[test]
    fn sphere_vertices_on_surface() {
        let (r, voxel) = (0.5, 0.01);
        let (v, centre) = sphere_volume(r, voxel);
        let mesh = extract_mesh(&v).unwrap();
        let mean = mesh.vertices.iter().map(|p| ((p - centre).norm() - r).abs()).sum::<f64>() / mesh.vertices.len() as f64;
        assert!(mean < voxel, "mean radial error {mean}");
        assert_closed_and_oriented(&mesh);
        // outward: toward positive distance
        for t in 0..mesh.triangles.len() {
            let n = mesh.face_normal(t);
            let a = mesh.vertices[mesh.triangles[t][0] as usize];
            assert!(n.dot(&(a - centre)) > 0.0);
        }
    }

    #[test]
    fn sphere_cloud_normals() {
        let (v, centre) = sphere_volume(0.3, 0.02);
        let mesh = extract_mesh(&v).unwrap();
        let cloud = extract_cloud(&mesh);
        assert_eq!(cloud.len(), mesh.vertices.len());
        for (p, n) in cloud.points.iter().zip(cloud.normals().unwrap()) {
            let radial = (p - centre).normalize();
            assert!(n.dot(&radial) > 5f64.to_radians().cos());
        }
    }

    #[test]
    fn inverted_sphere_faces_inward() {
        let (r, voxel) = (0.2, 0.02);
        let centre = Vector3::zeros();
        let mut v = TsdfVolume::covering(Vector3::repeat(-0.4), Vector3::repeat(0.4), voxel, 0.12, Allocation::Dense).unwrap();
        v.fill_with(|p| r - (p - centre).norm());
        let mesh = extract_mesh(&v).unwrap();
        assert_closed_and_oriented(&mesh);
        for t in 0..mesh.triangles.len() {
            let a = mesh.vertices[mesh.triangles[t][0] as usize];
            assert!(mesh.face_normal(t).dot(&a) < 0.0);
        }
    }

    #[test]
    fn single_negative_corner_makes_one_triangle() {
        let mut v = TsdfVolume::new(Vector3::zeros(), 0.1, [2, 2, 2], 0.3, Allocation::Dense).unwrap();
        for c in CORNERS {
            v.set(c, 0.5, 1.0).unwrap();
        }
        v.set([1, 1, 1], -0.5, 1.0).unwrap();
        let mesh = extract_mesh(&v).unwrap();
        assert_eq!(mesh.triangles.len(), 1);
        assert_eq!(mesh.vertices.len(), 3);
        for p in &mesh.vertices {
            // midpoint of each edge into the negative corner
            let d = p - Vector3::repeat(0.15);
            let mut c: Vec<f64> = d.iter().map(|x| x.abs()).collect();
            c.sort_by(f64::total_cmp);
            assert!(c[0] < 1e-12 && c[1] < 1e-12 && (c[2] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn all_positive_or_unobserved_is_empty() {
        let mut v = TsdfVolume::new(Vector3::zeros(), 0.1, [4, 4, 4], 0.3, Allocation::Dense).unwrap();
        assert!(matches!(extract_mesh(&v), Err(Error::EmptySurface)));
        v.fill_with(|_| 1.0);
        assert!(matches!(extract_mesh(&v), Err(Error::EmptySurface)));
        // a sign change next to an unobserved corner is not meshed
        let mut v = TsdfVolume::new(Vector3::zeros(), 0.1, [2, 2, 2], 0.3, Allocation::Sparse).unwrap();
        for c in CORNERS.iter().take(7) {
            v.set(*c, -0.5, 1.0).unwrap();
        }
        assert!(matches!(extract_mesh(&v), Err(Error::EmptySurface)));
    }

    #[test]
    fn vertices_interpolate_to_zero() {
        let (v, _) = sphere_volume(0.25, 0.02);
        let mesh = extract_mesh(&v).unwrap();
        for p in &mesh.vertices {
            // trilinear model along the edge: locate the edge and re-evaluate
            let q = (p - v.origin()) / v.voxel_size() - Vector3::repeat(0.5);
            let axis = (0..3).max_by(|&a, &b| (q[a] - q[a].round()).abs().total_cmp(&(q[b] - q[b].round()).abs())).unwrap();
            let mut lo = [0usize; 3];
            for k in 0..3 {
                lo[k] = if k == axis { q[k].floor() as usize } else { q[k].round() as usize };
            }
            let mut hi = lo;
            hi[axis] += 1;
            let t = q[axis] - lo[axis] as f64;
            assert!(t > 0.0 && t < 1.0, "vertex strictly inside its edge");
            let (f0, f1) = (v.get(lo).unwrap().0, v.get(hi).unwrap().0);
            assert!(f0.signum() != f1.signum());
            assert!((f0 + t * (f1 - f0)).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_mesh_cloud() {
        assert!(extract_cloud(&TriangleMesh::default()).is_empty());
    }
}
