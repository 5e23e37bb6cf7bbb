//! Plain-text trajectory and pose-graph dumps.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::posegraph::{EdgeSource, PoseGraph};

fn pose_fields(p: &Pose) -> String {
    let t = p.translation();
    let q = p.quaternion();
    format!(
        "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
        t.x, t.y, t.z, q.i, q.j, q.k, q.w
    )
}

fn parse_pose(fields: &[&str], line: usize) -> Result<Pose> {
    if fields.len() != 7 {
        return Err(Error::Parse(format!("line {line}: expected 7 pose fields, found {}", fields.len())));
    }
    let v: Vec<f64> = fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("line {line}: {e}"))))
        .collect::<Result<_>>()?;
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[6], v[3], v[4], v[5]));
    Ok(Pose::from_quaternion(&q, Vector3::new(v[0], v[1], v[2])))
}

/// One `id tx ty tz qx qy qz qw` line per pose.
pub fn format_trajectory(poses: &[Pose]) -> String {
    let mut s = String::new();
    for (i, p) in poses.iter().enumerate() {
        let _ = writeln!(s, "{i} {}", pose_fields(p));
    }
    s
}

pub fn parse_trajectory(text: &str) -> Result<Vec<(usize, Pose)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let id = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        out.push((id, parse_pose(&fields[1..], n + 1)?));
    }
    Ok(out)
}

pub fn write_trajectory(path: &Path, poses: &[Pose]) -> Result<()> {
    std::fs::write(path, format_trajectory(poses))?;
    Ok(())
}

/// Poses ordered by id; ids must be `0..n` without gaps.
pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let mut entries = parse_trajectory(&std::fs::read_to_string(path)?)?;
    entries.sort_by_key(|e| e.0);
    for (k, (id, _)) in entries.iter().enumerate() {
        if *id != k {
            return Err(Error::Parse(format!("{}: trajectory ids are not 0..n", path.display())));
        }
    }
    Ok(entries.into_iter().map(|e| e.1).collect())
}

/// `NODE id tx ty tz qx qy qz qw` and
/// `EDGE i j tx ty tz qx qy qz qw overlap stage` lines.
pub fn format_graph(g: &PoseGraph) -> String {
    let mut s = String::new();
    for n in &g.nodes {
        let _ = writeln!(s, "NODE {} {}", n.id, pose_fields(&n.pose));
    }
    for e in &g.edges {
        let _ = writeln!(s, "EDGE {} {} {} {:.6} {}", e.i, e.j, pose_fields(&e.transform), e.overlap, e.source);
    }
    s
}

pub fn write_graph(path: &Path, g: &PoseGraph) -> Result<()> {
    std::fs::write(path, format_graph(g))?;
    Ok(())
}

/// Parsed graph dump: node poses and `(i, j, transform, overlap, source)` edges.
pub type GraphDump = (Vec<(usize, Pose)>, Vec<(usize, usize, Pose, f64, EdgeSource)>);

pub fn parse_graph(text: &str) -> Result<GraphDump> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", n + 1));
        match f.first().copied() {
            None => continue,
            Some("NODE") if f.len() == 9 => {
                let id = f[1].parse().map_err(|_| bad("node id"))?;
                nodes.push((id, parse_pose(&f[2..9], n + 1)?));
            }
            Some("EDGE") if f.len() == 12 => {
                let i = f[1].parse().map_err(|_| bad("edge endpoint"))?;
                let j = f[2].parse().map_err(|_| bad("edge endpoint"))?;
                let t = parse_pose(&f[3..10], n + 1)?;
                let overlap = f[10].parse().map_err(|_| bad("overlap"))?;
                let source = match f[11] {
                    "stage1" => EdgeSource::Stage1,
                    "stage2" => EdgeSource::Stage2,
                    _ => return Err(bad("edge stage")),
                };
                edges.push((i, j, t, overlap, source));
            }
            Some(_) => return Err(bad("unrecognized record")),
        }
    }
    Ok((nodes, edges))
}
