//! Multi-stage pose trajectory estimation over a graph of rig positions.

pub mod graph;
pub mod optimize;
pub mod refine;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::registration::{global_register_prepared, GlobalRegParams, PreparedCloud};

pub use graph::{component_count, graph_loss, graph_loss_with, EdgeSource, GraphEdge, GraphNode, PoseGraph};
pub use optimize::{chained_initialization, optimize_edges, optimize_pose_graph, synchronize_rotations};
pub use refine::{edge_action, refine_edges, refine_edges_detailed, repair_connectivity, EdgeAction, RefineParams, RefineSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    pub registration: GlobalRegParams,
    /// Only pairs with `j - i <= window` are tried; `None` tries all pairs.
    pub window: Option<usize>,
    /// Registrations scoring a lower overlap are treated as failures.
    pub min_overlap: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            registration: GlobalRegParams::default(),
            window: None,
            min_overlap: 0.1,
        }
    }
}

/// Node pairs the first stage tries to register.
pub fn candidate_pairs(n: usize, window: Option<usize>) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|(i, j)| window.is_none_or(|w| j - i <= w))
        .collect()
}

/// Registers the full-view clouds of every candidate pair (node `j` onto node
/// `i`) and keeps the successful ones as stage-1 edges.
pub fn build_global_graph(nodes: Vec<graph::GraphNode>, params: &GraphParams) -> Result<PoseGraph> {
    if nodes.len() < 2 {
        return Err(Error::InvalidParameter("a pose graph needs at least two nodes".into()));
    }
    params.registration.validate()?;
    let pairs = candidate_pairs(nodes.len(), params.window);
    let prepared: Vec<PreparedCloud> = nodes
        .par_iter()
        .map(|n| PreparedCloud::new(&n.full_cloud, &params.registration))
        .collect::<Result<_>>()?;
    let edges: Vec<GraphEdge> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let r = global_register_prepared(&prepared[j], &prepared[i], &params.registration).ok()?;
            (r.converged && r.overlap >= params.min_overlap)
                .then(|| GraphEdge::new(i, j, r.transform, r.overlap, EdgeSource::Stage1).ok())
                .flatten()
        })
        .collect();
    drop(prepared);
    info!("stage 1: {} of {} candidate pairs registered", edges.len(), pairs.len());
    let g = PoseGraph::new(nodes, edges)?;
    g.ensure_connected()?;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MptejiParams {
    pub graph: GraphParams,
    pub refine: RefineParams,
}

/// Both stages of a run. Node poses on each graph are world←node.
#[derive(Debug, Clone)]
pub struct MptejiRun {
    pub stage1: PoseGraph,
    pub stage2: PoseGraph,
    pub summary: RefineSummary,
}

impl MptejiRun {
    pub fn stage1_poses(&self) -> Vec<Pose> {
        self.stage1.poses()
    }

    pub fn stage2_poses(&self) -> Vec<Pose> {
        self.stage2.poses()
    }
}

/// Global graph, first optimization, edge refinement, second optimization.
pub fn mpteji_run(nodes: Vec<GraphNode>, params: &MptejiParams) -> Result<MptejiRun> {
    params.refine.validate()?;
    if nodes.len() == 1 {
        let g = PoseGraph::new(nodes, Vec::new())?;
        return Ok(MptejiRun {
            stage1: g.clone(),
            stage2: g,
            summary: RefineSummary::default(),
        });
    }
    let mut stage1 = build_global_graph(nodes, &params.graph)?;
    optimize_pose_graph(&mut stage1)?;
    let (mut stage2, summary) = refine_edges_detailed(&stage1, &params.refine)?;
    info!(
        "stage 2: {} replaced, {} kept, {} pruned, {} restored",
        summary.replaced, summary.kept, summary.pruned, summary.restored
    );
    optimize_pose_graph(&mut stage2)?;
    Ok(MptejiRun { stage1, stage2, summary })
}

/// World←node trajectory after both stages, with node 0 at the identity.
pub fn mpteji(nodes: Vec<GraphNode>, params: &MptejiParams) -> Result<Vec<Pose>> {
    mpteji_run(nodes, params).map(|r| r.stage2_poses())
}
