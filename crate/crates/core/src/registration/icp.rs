//! Iterative closest point refinement (point-to-plane when the target has
//! normals, point-to-point otherwise).

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::registration::kabsch::fit_rigid;
use crate::registration::overlap::overlap_percentage;
use crate::registration::RegistrationResult;
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Initial correspondence gate in meters.
    pub max_correspondence_distance: f64,
    /// The gate is multiplied by this factor every `decay_interval` iterations.
    pub distance_decay: f64,
    pub decay_interval: usize,
    /// Stop once the applied update (rotation vector in radians stacked on
    /// translation in meters) is shorter than this.
    pub convergence_tolerance: f64,
    /// A run only counts as converged with at least this share of source
    /// points matched at the final gate...
    pub min_fitness: f64,
    /// ...and a final inlier RMSE at most this (meters).
    pub max_rmse: f64,
    /// Threshold used to report the overlap percentage of the result.
    pub overlap_distance: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_correspondence_distance: 0.3,
            distance_decay: 0.5,
            decay_interval: 10,
            convergence_tolerance: 1e-6,
            min_fitness: 0.3,
            max_rmse: 0.05,
            overlap_distance: 0.05,
        }
    }
}

impl IcpParams {
    pub fn gate(&self, iteration: usize) -> f64 {
        let steps = iteration / self.decay_interval.max(1);
        self.max_correspondence_distance * self.distance_decay.powi(steps as i32)
    }
}

/// One accepted update: the truncated objective before and after it, both
/// evaluated at the same correspondence gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpStep {
    pub gate: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Copy)]
struct Match {
    target: usize,
    dist: f64,
    /// Point-to-plane (or point-to-point) residual.
    residual: f64,
}

struct Problem<'a> {
    source: &'a PointCloud,
    target: &'a PointCloud,
    index: PointIndex,
}

impl Problem<'_> {
    fn matches(&self, t: &Pose) -> Vec<Match> {
        let normals = self.target.normals();
        self.source
            .points
            .par_iter()
            .map(|p| {
                let q = t.transform_point(p);
                let (j, dist) = self.index.nearest(&q).expect("target is non-empty");
                let residual = match normals {
                    Some(ns) => (q - self.target.points[j]).dot(&ns[j]).abs(),
                    None => dist,
                };
                Match { target: j, dist, residual }
            })
            .collect()
    }

    /// `sum_i min(r_i^2, gate^2)`, with unmatched points charged `gate^2`.
    fn objective(matches: &[Match], gate: f64) -> f64 {
        let cap = gate * gate;
        matches
            .iter()
            .map(|m| if m.dist <= gate { (m.residual * m.residual).min(cap) } else { cap })
            .sum()
    }

    /// Update `(rotation vector, translation)` applied on the left of `t`.
    fn solve(&self, t: &Pose, matches: &[Match], gate: f64) -> Option<Vector6<f64>> {
        let inliers: Vec<(usize, &Match)> = matches
            .iter()
            .enumerate()
            .filter(|(_, m)| m.dist <= gate)
            .collect();
        match self.target.normals() {
            Some(ns) => {
                let mut a = Matrix6::zeros();
                let mut b = Vector6::zeros();
                for (i, m) in &inliers {
                    let s = t.transform_point(&self.source.points[*i]);
                    let q = self.target.points[m.target];
                    let n = ns[m.target];
                    let r = (s - q).dot(&n);
                    let sxn = s.cross(&n);
                    let j = Vector6::new(sxn.x, sxn.y, sxn.z, n.x, n.y, n.z);
                    a += j * j.transpose();
                    b -= j * r;
                }
                if let Some(ch) = a.cholesky() {
                    return Some(ch.solve(&b));
                }
                a.svd(true, true).solve(&b, 1e-12).ok()
            }
            None => {
                let src: Vec<Vector3<f64>> = inliers
                    .iter()
                    .map(|(i, _)| t.transform_point(&self.source.points[*i]))
                    .collect();
                let dst: Vec<Vector3<f64>> = inliers.iter().map(|(_, m)| self.target.points[m.target]).collect();
                let delta = fit_rigid(&src, &dst)?;
                let w = Rotation3::from_matrix_unchecked(*delta.rotation()).scaled_axis();
                let v = delta.translation();
                Some(Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z))
            }
        }
    }
}

fn apply(step: &Vector6<f64>, t: &Pose) -> Pose {
    let w = Vector3::new(step[0], step[1], step[2]);
    let v = Vector3::new(step[3], step[4], step[5]);
    Pose::from_rotation_vector(&w, v).compose(t)
}

/// ICP from `init`, returning the result and the per-step objective trace.
pub fn icp_refine_traced(
    source: &PointCloud,
    target: &PointCloud,
    init: &Pose,
    params: &IcpParams,
) -> Result<(RegistrationResult, Vec<IcpStep>)> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let problem = Problem {
        source,
        target,
        index: PointIndex::new(&target.points),
    };
    let mut pose = *init;
    let mut matches = problem.matches(&pose);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    // the gate shrinks every `decay_interval` iterations, or as soon as the
    // solution settles at the current gate
    let interval = params.decay_interval.max(1);
    let last_level = params.max_iterations.saturating_sub(1) / interval;
    let (mut level, mut at_level) = (0, 0);
    let mut gate = params.gate(0);

    for k in 0..params.max_iterations {
        gate = params.gate(level * interval);
        if !matches.iter().any(|m| m.dist <= gate) {
            if k == 0 {
                return Err(Error::NoCorrespondences);
            }
            break;
        }
        let before = Problem::objective(&matches, gate);
        let Some(full_step) = problem.solve(&pose, &matches, gate) else {
            break;
        };
        let mut step = full_step;
        let mut accepted = None;
        for _ in 0..8 {
            let candidate = apply(&step, &pose);
            let cand_matches = problem.matches(&candidate);
            let after = Problem::objective(&cand_matches, gate);
            if after <= before + 1e-12 * before.max(1.0) {
                accepted = Some((candidate, cand_matches, after));
                break;
            }
            step *= 0.5;
        }
        let settled = match accepted {
            Some((candidate, cand_matches, after)) => {
                trace.push(IcpStep { gate, before, after });
                pose = candidate;
                matches = cand_matches;
                iterations = k + 1;
                step.norm() < params.convergence_tolerance
            }
            // no descent direction left at this gate
            None => true,
        };
        at_level += 1;
        if settled || at_level == interval {
            if level == last_level {
                converged = settled;
                if settled {
                    break;
                }
            } else {
                level += 1;
                at_level = 0;
            }
        }
    }

    let inliers: Vec<f64> = matches.iter().filter(|m| m.dist <= gate).map(|m| m.dist).collect();
    let fitness = inliers.len() as f64 / source.len() as f64;
    let rmse = if inliers.is_empty() {
        f64::INFINITY
    } else {
        (inliers.iter().map(|d| d * d).sum::<f64>() / inliers.len() as f64).sqrt()
    };
    let overlap = overlap_percentage(source, target, &pose, params.overlap_distance)?;
    let result = RegistrationResult {
        transform: pose,
        overlap,
        rmse,
        fitness,
        converged: converged && fitness >= params.min_fitness && rmse <= params.max_rmse,
        iterations,
    };
    Ok((result, trace))
}

/// Refines `init` (mapping source into target coordinates) by ICP.
pub fn icp_refine(source: &PointCloud, target: &PointCloud, init: &Pose, params: &IcpParams) -> Result<RegistrationResult> {
    icp_refine_traced(source, target, init, params).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose::{rot_x, rot_y};
    use crate::geometry::{rotation_error, translation_error};
    use crate::registration::normals::estimate_normals;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn wavy(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                Vector3::new(x, y, 2.0 + 0.3 * (2.5 * x).sin() + 0.25 * (3.0 * y).cos() + 0.1 * x * y)
            })
            .collect();
        PointCloud::from_points(pts)
    }

    #[test]
    fn exact_copy_takes_one_step_per_gate() {
        let c = estimate_normals(&wavy(1000, 1), 0.25);
        let r = icp_refine(&c, &c, &Pose::identity(), &IcpParams::default()).unwrap();
        assert!((r.transform.to_matrix() - Pose::identity().to_matrix()).abs().max() < 1e-9);
        assert!(r.converged);
        // five gate levels at the defaults
        assert!(r.iterations <= 5);
        assert!(r.rmse < 1e-9);
    }

    #[test]
    fn recovers_small_known_transform() {
        let source = wavy(1000, 2);
        let truth = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 8f64.to_radians(), Vector3::new(0.1, -0.1, 0.05));
        assert!((truth.translation().norm() - 0.15).abs() < 1e-12);
        let target = estimate_normals(&source.transformed(&truth, "target"), 0.25);
        let r = icp_refine(&source, &target, &Pose::identity(), &IcpParams::default()).unwrap();
        assert!(translation_error(truth.translation(), r.transform.translation()) < 1e-3);
        assert!(truth.inverse().compose(&r.transform).angle().to_degrees() < 0.1);
        assert!(rotation_error(truth.rotation(), r.transform.rotation()) < 1e-3);
        assert!(r.converged);
    }

    #[test]
    fn point_to_point_without_normals() {
        let source = wavy(1000, 3);
        let truth = Pose::new(rot_x(4.0), Vector3::new(0.05, 0.02, 0.0));
        let target = source.transformed(&truth, "target");
        let r = icp_refine(&source, &target, &Pose::identity(), &IcpParams::default()).unwrap();
        assert!(translation_error(truth.translation(), r.transform.translation()) < 1e-3);
    }

    #[test]
    fn far_initialization_is_flagged() {
        let source = wavy(1000, 4);
        let target = estimate_normals(&source, 0.25);
        let init = Pose::new(rot_y(90.0), Vector3::zeros());
        let r = icp_refine(&source, &target, &init, &IcpParams::default());
        match r {
            Err(Error::NoCorrespondences) => {}
            Ok(r) => assert!(!r.converged || r.rmse > IcpParams::default().max_rmse),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn no_correspondences_error() {
        let a = wavy(100, 5);
        let b = a.transformed(&Pose::from_translation(Vector3::new(100.0, 0.0, 0.0)), "far");
        assert!(matches!(
            icp_refine(&a, &b, &Pose::identity(), &IcpParams::default()),
            Err(Error::NoCorrespondences)
        ));
    }

    #[test]
    fn gate_schedule() {
        let p = IcpParams::default();
        assert_eq!(p.gate(0), 0.3);
        assert_eq!(p.gate(9), 0.3);
        assert_eq!(p.gate(10), 0.15);
        assert_eq!(p.gate(49), 0.3 * 0.0625);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn accepted_steps_never_increase_objective(
            seed in 0u64..1000,
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            deg in 0.0f64..20.0,
            tx in -0.3f64..0.3, ty in -0.3f64..0.3,
        ) {
            let source = wavy(400, seed);
            let axis = Vector3::new(ax, ay, az + 1e-3);
            let truth = Pose::from_axis_angle(&axis, deg.to_radians(), Vector3::new(tx, ty, 0.0));
            let target = estimate_normals(&source.transformed(&truth, "t"), 0.3);
            if let Ok((_, trace)) = icp_refine_traced(&source, &target, &Pose::identity(), &IcpParams::default()) {
                for s in trace {
                    prop_assert!(s.after <= s.before + 1e-12 * s.before.max(1.0));
                }
            }
        }
    }
}
