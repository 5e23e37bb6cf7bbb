//! Read-only nearest-neighbour index over 3D points.

use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;

/// KD-tree over a fixed point set. Distances returned are Euclidean (not
/// squared); indices refer to the slice the index was built from.
pub struct PointIndex {
    tree: Option<ImmutableKdTree<f64, 3>>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        if points.is_empty() {
            return Self { tree: None, len: 0 };
        }
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: Some(ImmutableKdTree::new_from_slice(&raw)),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        let tree = self.tree.as_ref()?;
        let nn = tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        Some((nn.item as usize, nn.distance.sqrt()))
    }

    /// Up to `k` nearest points, closest first.
    pub fn nearest_k(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let (Some(tree), Some(k)) = (self.tree.as_ref(), NonZero::new(k)) else {
            return Vec::new();
        };
        tree.nearest_n::<SquaredEuclidean>(&[q.x, q.y, q.z], k)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance.sqrt()))
            .collect()
    }

    /// All points with distance `<= radius`, closest first.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<(usize, f64)> {
        let Some(tree) = self.tree.as_ref() else {
            return Vec::new();
        };
        tree.within::<SquaredEuclidean>(&[q.x, q.y, q.z], radius * radius)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance.sqrt()))
            .collect()
    }

    pub fn count_within(&self, q: &Vector3<f64>, radius: f64) -> usize {
        let Some(tree) = self.tree.as_ref() else {
            return 0;
        };
        tree.within_unsorted::<SquaredEuclidean>(&[q.x, q.y, q.z], radius * radius)
            .len()
    }

    pub fn has_within(&self, q: &Vector3<f64>, radius: f64) -> bool {
        let Some(tree) = self.tree.as_ref() else {
            return false;
        };
        // a radius-bounded search prunes far better than an unbounded
        // nearest-neighbour query when the answer is "no"
        !tree
            .within_unsorted::<SquaredEuclidean>(&[q.x, q.y, q.z], radius * radius)
            .is_empty()
    }
}
