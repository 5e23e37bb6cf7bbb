//! Binary little-endian PLY for clouds and meshes, and text OBJ for meshes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh, ViewKind};

fn write_f32s(w: &mut impl Write, v: &Vector3<f64>) -> Result<()> {
    for x in v.iter() {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_ply_cloud(path: &Path, c: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", c.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if c.has_normals() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in c.points.iter().enumerate() {
        write_f32s(&mut w, p)?;
        if let Some(ns) = c.normals() {
            write_f32s(&mut w, &ns[i])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ply_mesh(path: &Path, m: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", m.vertices.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", m.triangles.len())?;
    for p in &m.vertices {
        write_f32s(&mut w, p)?;
    }
    for t in &m.triangles {
        w.write_all(&[3u8])?;
        for i in t {
            w.write_all(&(*i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_obj(path: &Path, m: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in &m.vertices {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for t in &m.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

struct Header {
    vertices: usize,
    vertex_props: Vec<String>,
    faces: usize,
}

fn read_header(r: &mut impl BufRead, path: &Path) -> Result<Header> {
    let bad = |why: &str| Error::Parse(format!("{}: {why}", path.display()));
    let mut line = String::new();
    let mut header = Header {
        vertices: 0,
        vertex_props: Vec::new(),
        faces: 0,
    };
    let mut element = String::new();
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if first {
            if f != ["ply"] {
                return Err(bad("not a PLY file"));
            }
            first = false;
            continue;
        }
        match f.as_slice() {
            ["format", fmt, _] if *fmt != "binary_little_endian" => return Err(bad("only binary little-endian PLY is supported")),
            ["element", name, count] => {
                element = name.to_string();
                let n = count.parse().map_err(|_| bad("element count"))?;
                match *name {
                    "vertex" => header.vertices = n,
                    "face" => header.faces = n,
                    _ => return Err(bad("unexpected element")),
                }
            }
            ["property", "float", name] if element == "vertex" => header.vertex_props.push(name.to_string()),
            ["property", "list", "uchar", "int", _] if element == "face" => {}
            ["property", ..] => return Err(bad("unsupported property type")),
            ["end_header"] => return Ok(header),
            _ => {}
        }
    }
}

fn read_f32(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b) as f64)
}

fn read_vertices(r: &mut impl Read, h: &Header) -> Result<(Vec<Vector3<f64>>, Option<Vec<Vector3<f64>>>)> {
    let has_normals = h.vertex_props.iter().any(|p| p == "nx");
    let mut points = Vec::with_capacity(h.vertices);
    let mut normals = Vec::new();
    for _ in 0..h.vertices {
        let mut vals = std::collections::HashMap::new();
        for p in &h.vertex_props {
            vals.insert(p.as_str(), read_f32(r)?);
        }
        let get = |k: &str| vals.get(k).copied().unwrap_or(0.0);
        points.push(Vector3::new(get("x"), get("y"), get("z")));
        if has_normals {
            normals.push(Vector3::new(get("nx"), get("ny"), get("nz")));
        }
    }
    Ok((points, has_normals.then_some(normals)))
}

pub fn read_ply_cloud(path: &Path) -> Result<PointCloud> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, path)?;
    let (points, normals) = read_vertices(&mut r, &h)?;
    let c = PointCloud::new(points, "", ViewKind::Single);
    match normals {
        // stored as f32, so renormalize before the unit-length check
        Some(ns) => c.with_normals(ns.into_iter().map(|n| n.normalize()).collect()),
        None => Ok(c),
    }
}

pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, path)?;
    let (vertices, _) = read_vertices(&mut r, &h)?;
    let mut triangles = Vec::with_capacity(h.faces);
    for _ in 0..h.faces {
        let mut n = [0u8; 1];
        r.read_exact(&mut n)?;
        if n[0] != 3 {
            return Err(Error::Parse(format!("{}: only triangle faces are supported", path.display())));
        }
        let mut t = [0u32; 3];
        for x in t.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *x = i32::from_le_bytes(b) as u32;
        }
        triangles.push(t);
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_round_trip_with_and_without_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let pts = vec![Vector3::new(0.5, -1.25, 2.0), Vector3::new(3.0, 0.0, -0.75)];
        let c = PointCloud::from_points(pts.clone());
        write_ply_cloud(&path, &c).unwrap();
        assert_eq!(read_ply_cloud(&path).unwrap().points, pts);
        let c = c.with_normals(vec![Vector3::z(), Vector3::x()]).unwrap();
        write_ply_cloud(&path, &c).unwrap();
        let back = read_ply_cloud(&path).unwrap();
        assert_eq!(back.normals().unwrap(), &[Vector3::z(), Vector3::x()]);
    }

    #[test]
    fn mesh_round_trip_and_obj() {
        let dir = tempfile::tempdir().unwrap();
        let m = TriangleMesh::new(
            vec![Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()],
            vec![[0, 2, 1], [0, 1, 3]],
        )
        .unwrap();
        let path = dir.path().join("m.ply");
        write_ply_mesh(&path, &m).unwrap();
        assert_eq!(read_ply_mesh(&path).unwrap(), m);
        let obj = dir.path().join("m.obj");
        write_obj(&obj, &m).unwrap();
        let text = std::fs::read_to_string(obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert!(text.contains("f 1 3 2"));
    }

    #[test]
    fn rejects_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(read_ply_cloud(&path).is_err());
    }
}
