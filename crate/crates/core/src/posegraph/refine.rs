//! Second-stage edge refinement on single-view clouds.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose, Vec6Pose};
use crate::posegraph::graph::{DisjointSets, EdgeSource, GraphEdge, PoseGraph};
use crate::registration::{estimate_normals, icp_refine, overlap_percentage, voxel_downsample, IcpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub ol_min: f64,
    pub ol_max: f64,
    /// Per-component bound on `|v_P - v_T|` (meters, then degrees).
    pub v_th: Vec6Pose,
    /// Correspondence distance used for the overlap score (meters).
    pub overlap_distance: f64,
    /// Single-view clouds are downsampled to this voxel before ICP.
    pub voxel_size: f64,
    pub normal_radius: f64,
    pub icp: IcpParams,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            ol_min: 0.33,
            ol_max: 0.35,
            v_th: Vec6Pose::new(0.4, 0.4, 0.4, 15.0, 15.0, 15.0),
            overlap_distance: 0.05,
            voxel_size: 0.02,
            normal_radius: 0.1,
            icp: IcpParams::default(),
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.ol_min && self.ol_min <= self.ol_max && self.ol_max <= 1.0) {
            return Err(Error::InvalidParameter("need 0 <= ol_min <= ol_max <= 1".into()));
        }
        if self.v_th.to_array().iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParameter("v_th components must be positive".into()));
        }
        if !(self.overlap_distance > 0.0 && self.voxel_size > 0.0 && self.normal_radius > 0.0) {
            return Err(Error::InvalidParameter("refine distances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeAction {
    Prune,
    Replace,
    Keep,
}

/// Decision for one edge given its overlap `beta`, the relative pose
/// predicted by the current trajectory and the local registration result.
pub fn edge_action(beta: f64, predicted: &Pose, local: &Pose, params: &RefineParams) -> EdgeAction {
    if beta < params.ol_min {
        return EdgeAction::Prune;
    }
    if beta > params.ol_max {
        if let (Ok(vp), Ok(vt)) = (predicted.to_vec6(), local.to_vec6()) {
            if vp.within(&vt, &params.v_th) {
                return EdgeAction::Replace;
            }
        }
    }
    EdgeAction::Keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefineSummary {
    pub pruned: usize,
    pub replaced: usize,
    pub kept: usize,
    /// Pruned edges put back to keep the graph connected.
    pub restored: usize,
}

/// Adds pruned edges back, highest overlap first, as long as each one joins
/// two components; stops once the graph is connected.
pub fn repair_connectivity(n: usize, kept: &mut Vec<GraphEdge>, mut pruned: Vec<GraphEdge>) -> usize {
    let mut ds = DisjointSets::new(n);
    for e in kept.iter() {
        ds.union(e.i, e.j);
    }
    pruned.sort_by(|a, b| b.overlap.total_cmp(&a.overlap).then((a.i, a.j).cmp(&(b.i, b.j))));
    let mut restored = 0;
    for e in pruned {
        if ds.sets() <= 1 {
            break;
        }
        if ds.union(e.i, e.j) {
            kept.push(e);
            restored += 1;
        }
    }
    kept.sort_by_key(|e| (e.i, e.j));
    restored
}

fn prepare(c: &PointCloud, params: &RefineParams) -> (PointCloud, PointCloud) {
    let down = voxel_downsample(c, params.voxel_size);
    let with_normals = estimate_normals(&down, params.normal_radius);
    (down, with_normals)
}

/// ICP on the single-view clouds of every edge followed by the
/// prune / replace / keep rule. Node poses must hold the current trajectory.
pub fn refine_edges_detailed(g: &PoseGraph, params: &RefineParams) -> Result<(PoseGraph, RefineSummary)> {
    params.validate()?;
    g.validate()?;
    let prepared: Vec<(PointCloud, PointCloud)> = g.nodes.par_iter().map(|n| prepare(&n.single_cloud, params)).collect();
    let p = g.variables();
    let decisions: Vec<(GraphEdge, EdgeAction)> = g
        .edges
        .par_iter()
        .map(|e| {
            let (source, target) = (&g.nodes[e.j].single_cloud, &g.nodes[e.i].single_cloud);
            let local = if source.is_empty() || target.is_empty() {
                None
            } else {
                icp_refine(&prepared[e.j].0, &prepared[e.i].1, &e.transform, &params.icp).ok()
            };
            let Some(local) = local else {
                return (*e, EdgeAction::Prune);
            };
            let beta = overlap_percentage(source, target, &local.transform, params.overlap_distance).unwrap_or(0.0);
            let predicted = p[e.i].compose(&p[e.j].inverse());
            let action = edge_action(beta, &predicted, &local.transform, params);
            debug!("edge ({}, {}): beta {beta:.3}, {action:?}", e.i, e.j);
            let out = match action {
                EdgeAction::Replace => GraphEdge {
                    transform: local.transform,
                    overlap: beta,
                    source: EdgeSource::Stage2,
                    ..*e
                },
                _ => GraphEdge { overlap: beta, ..*e },
            };
            (out, action)
        })
        .collect();

    let mut summary = RefineSummary::default();
    let mut kept = Vec::new();
    let mut pruned = Vec::new();
    for (e, action) in decisions {
        match action {
            EdgeAction::Prune => {
                summary.pruned += 1;
                pruned.push(e);
            }
            EdgeAction::Replace => {
                summary.replaced += 1;
                kept.push(e);
            }
            EdgeAction::Keep => {
                summary.kept += 1;
                kept.push(e);
            }
        }
    }
    summary.restored = repair_connectivity(g.node_count(), &mut kept, pruned);
    if summary.restored > 0 {
        info!("restored {} pruned edges to keep the graph connected", summary.restored);
    }
    let out = PoseGraph {
        nodes: g.nodes.clone(),
        edges: kept,
    };
    Ok((out, summary))
}

pub fn refine_edges(g: &PoseGraph, params: &RefineParams) -> Result<PoseGraph> {
    refine_edges_detailed(g, params).map(|(g, _)| g)
}
