use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSource {
    Stage1,
    Stage2,
}

impl std::fmt::Display for EdgeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Stage1 => "stage1",
            Self::Stage2 => "stage2",
        })
    }
}

/// One rig position: its 360° and 72° clouds (both in the rig frame) and its
/// world←node pose.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: usize,
    pub full_cloud: PointCloud,
    pub single_cloud: PointCloud,
    pub pose: Pose,
}

impl GraphNode {
    pub fn new(id: usize, full_cloud: PointCloud, single_cloud: PointCloud) -> Self {
        Self {
            id,
            full_cloud,
            single_cloud,
            pose: Pose::identity(),
        }
    }
}

/// Relative measurement between nodes `i < j`: `transform` maps node-`j`
/// coordinates into node `i`, so it approximates `P_i P_j^-1` for graph
/// variables `P = node←world`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub transform: Pose,
    pub overlap: f64,
    pub source: EdgeSource,
}

impl GraphEdge {
    /// Stores the edge with `i < j`, inverting the measurement when the
    /// endpoints arrive swapped.
    pub fn new(i: usize, j: usize, transform: Pose, overlap: f64, source: EdgeSource) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
        }
        if !transform.is_valid() {
            return Err(Error::InvalidParameter("edge transform is not a rigid motion".into()));
        }
        let (i, j, transform) = if i < j { (i, j, transform) } else { (j, i, transform.inverse()) };
        Ok(Self { i, j, transform, overlap, source })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl PoseGraph {
    pub fn new(nodes: Vec<GraphNode>, edges: Vec<GraphEdge>) -> Result<Self> {
        let g = Self { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, n) in self.nodes.iter().enumerate() {
            if n.id != k {
                return Err(Error::InvalidParameter(format!("node at position {k} has id {}", n.id)));
            }
        }
        for e in &self.edges {
            if e.i >= e.j {
                return Err(Error::InvalidParameter(format!("edge ({}, {}) is not ordered", e.i, e.j)));
            }
            if e.j >= self.nodes.len() {
                return Err(Error::IndexOutOfRange {
                    index: e.j,
                    len: self.nodes.len(),
                });
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// World←node poses currently stored on the nodes.
    pub fn poses(&self) -> Vec<Pose> {
        self.nodes.iter().map(|n| n.pose).collect()
    }

    /// Graph variables `P_i = node←world`.
    pub fn variables(&self) -> Vec<Pose> {
        self.nodes.iter().map(|n| n.pose.inverse()).collect()
    }

    pub fn set_variables(&mut self, p: &[Pose]) {
        for (n, pi) in self.nodes.iter_mut().zip(p) {
            n.pose = pi.inverse();
        }
    }

    pub fn component_count(&self) -> usize {
        component_count(self.nodes.len(), self.edges.iter().map(|e| (e.i, e.j)))
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    pub fn ensure_connected(&self) -> Result<()> {
        match self.component_count() {
            0 | 1 => Ok(()),
            components => Err(Error::DisconnectedGraph { components }),
        }
    }
}

/// Union-find with path halving.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    sets: usize,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` when the two elements were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb] = ra;
        self.sets -= 1;
        true
    }

    pub fn sets(&self) -> usize {
        self.sets
    }
}

pub fn component_count(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut ds = DisjointSets::new(n);
    for (i, j) in edges {
        ds.union(i, j);
    }
    ds.sets()
}

/// `sum ||T_ij - P_i P_j^-1||_F^2` over 4x4 homogeneous matrices.
pub fn graph_loss_with(edges: &[GraphEdge], p: &[Pose]) -> f64 {
    edges
        .iter()
        .map(|e| {
            let pred: Matrix4<f64> = p[e.i].compose(&p[e.j].inverse()).to_matrix();
            (e.transform.to_matrix() - pred).norm_squared()
        })
        .sum()
}

/// Loss of the graph at the poses stored on its nodes.
pub fn graph_loss(g: &PoseGraph) -> f64 {
    graph_loss_with(&g.edges, &g.variables())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose::{rot_x, rot_z};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn bare_nodes(n: usize) -> Vec<GraphNode> {
        (0..n).map(|i| GraphNode::new(i, PointCloud::default(), PointCloud::default())).collect()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let w = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        Pose::from_rotation_vector(&w, t)
    }

    #[test]
    fn single_translation_edge_costs_one() {
        let g = PoseGraph::new(
            bare_nodes(2),
            vec![GraphEdge::new(0, 1, Pose::from_translation(Vector3::x()), 1.0, EdgeSource::Stage1).unwrap()],
        )
        .unwrap();
        assert_eq!(graph_loss(&g), 1.0);
    }

    #[test]
    fn exact_measurements_cost_nothing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p: Vec<Pose> = (0..6).map(|_| random_pose(&mut rng)).collect();
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push(GraphEdge::new(i, j, p[i].compose(&p[j].inverse()), 1.0, EdgeSource::Stage1).unwrap());
            }
        }
        assert!(graph_loss_with(&edges, &p) < 1e-12);
    }

    /// `6|E| - 2 sum tr(R~_ij R_j R_i^T) + sum ||t~_ij - t_i + R_i R_j^T t_j||^2`.
    fn trace_form(edges: &[GraphEdge], p: &[Pose]) -> f64 {
        edges
            .iter()
            .map(|e| {
                let (ri, rj) = (p[e.i].rotation(), p[e.j].rotation());
                let (ti, tj) = (p[e.i].translation(), p[e.j].translation());
                let rot = 6.0 - 2.0 * (e.transform.rotation() * rj * ri.transpose()).trace();
                let tr = (e.transform.translation() - ti + ri * rj.transpose() * tj).norm_squared();
                rot + tr
            })
            .sum()
    }

    #[test]
    fn loss_matches_trace_decomposition_on_random_graphs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..8);
            let p: Vec<Pose> = (0..n).map(|_| random_pose(&mut rng)).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(0.6) {
                        edges.push(GraphEdge::new(i, j, random_pose(&mut rng), 0.5, EdgeSource::Stage1).unwrap());
                    }
                }
            }
            let a = graph_loss_with(&edges, &p);
            let b = trace_form(&edges, &p);
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn swapped_endpoints_are_canonicalised() {
        let t = Pose::new(rot_x(30.0), Vector3::new(1.0, 2.0, 3.0));
        let e = GraphEdge::new(3, 1, t, 0.4, EdgeSource::Stage1).unwrap();
        assert_eq!((e.i, e.j), (1, 3));
        assert!((e.transform.to_matrix() - t.inverse().to_matrix()).abs().max() < 1e-12);
        assert!(GraphEdge::new(2, 2, t, 0.4, EdgeSource::Stage1).is_err());
    }

    #[test]
    fn connectivity() {
        let e = |i, j| GraphEdge::new(i, j, Pose::new(rot_z(1.0), Vector3::zeros()), 1.0, EdgeSource::Stage1).unwrap();
        let g = PoseGraph::new(bare_nodes(4), vec![e(0, 1), e(2, 3)]).unwrap();
        assert!(matches!(g.ensure_connected(), Err(Error::DisconnectedGraph { components: 2 })));
        let g = PoseGraph::new(bare_nodes(4), vec![e(0, 1), e(1, 2), e(2, 3)]).unwrap();
        assert!(g.is_connected());
        assert!(PoseGraph::new(bare_nodes(2), vec![e(0, 5)]).is_err());
    }
}
