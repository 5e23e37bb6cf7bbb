//! Initialization-free registration from feature correspondences.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::registration::downsample::voxel_downsample;
use crate::registration::features::{compute_features, Descriptor, FeatureCloud, FeatureRadii, FPFH_DIM};
use crate::registration::kabsch::fit_rigid;
use crate::registration::normals::estimate_normals;
use crate::registration::overlap::overlap_with_indices;
use crate::spatial::PointIndex;
use crate::registration::RegistrationResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalRegParams {
    pub voxel_size: f64,
    pub normal_radius: f64,
    pub feature_radius: f64,
    /// Edge-length ratio below which a correspondence triple is rejected.
    pub tuple_scale: f64,
    /// Triples sampled for the pruning test, per correspondence.
    pub tuples_per_correspondence: usize,
    pub min_correspondences: usize,
    /// Hypotheses scored during consensus.
    pub max_iterations: usize,
    /// Correspondence inlier distance after alignment (meters).
    pub inlier_distance: f64,
    pub overlap_distance: f64,
    /// Keypoints whose surface variation `l0 / (l0 + l1 + l2)` over the
    /// `feature_radius` neighbourhood falls below this are not matched;
    /// 0 keeps every keypoint.
    pub min_variation: f64,
    /// Keypoint fitness, taken in both directions, that a result needs to
    /// count as converged.
    pub min_key_fitness: f64,
    pub seed: u64,
}

impl Default for GlobalRegParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.05,
            normal_radius: 0.1,
            feature_radius: 0.25,
            tuple_scale: 0.9,
            tuples_per_correspondence: 100,
            min_correspondences: 10,
            max_iterations: 20_000,
            inlier_distance: 0.075,
            overlap_distance: 0.05,
            min_variation: 0.01,
            min_key_fitness: 0.3,
            seed: 7,
        }
    }
}

impl GlobalRegParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.voxel_size,
            self.normal_radius,
            self.feature_radius,
            self.inlier_distance,
            self.overlap_distance,
        ];
        if positive.iter().any(|x| !(*x > 0.0))
            || !(self.tuple_scale > 0.0 && self.tuple_scale < 1.0)
            || !(self.min_variation >= 0.0)
            || !(0.0..=1.0).contains(&self.min_key_fitness)
        {
            return Err(Error::InvalidParameter("global registration parameters out of range".into()));
        }
        Ok(())
    }

    fn radii(&self) -> FeatureRadii {
        FeatureRadii {
            normal: self.normal_radius,
            feature: self.feature_radius,
        }
    }
}

/// Downsampled keypoints with normals and FPFH descriptors.
pub fn prepare_features(c: &PointCloud, params: &GlobalRegParams) -> Result<FeatureCloud> {
    let down = voxel_downsample(c, params.voxel_size);
    let with_normals = estimate_normals(&down, params.normal_radius);
    let mut f = compute_features(&with_normals, &params.radii())?;
    if params.min_variation > 0.0 && !f.is_empty() {
        let index = PointIndex::new(&f.points);
        let keep: Vec<bool> = f
            .points
            .par_iter()
            .map(|p| surface_variation(&f.points, &index.within(p, params.feature_radius)) >= params.min_variation)
            .collect();
        let mut k = keep.iter();
        f.points.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        f.normals.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        f.descriptors.retain(|_| *k.next().unwrap());
    }
    Ok(f)
}

fn surface_variation(points: &[Vector3<f64>], near: &[(usize, f64)]) -> f64 {
    let mean = near.iter().map(|&(j, _)| points[j]).sum::<Vector3<f64>>() / near.len() as f64;
    let mut cov = Matrix3::zeros();
    for &(j, _) in near {
        let d = points[j] - mean;
        cov += d * d.transpose();
    }
    let l = SymmetricEigen::new(cov).eigenvalues;
    let sum = l.sum();
    if sum > 0.0 {
        l.min() / sum
    } else {
        0.0
    }
}

const MATCH_BLOCK: usize = 512;

/// Bound on the single-precision error of `|y|^2 - 2 x.y`, relative to
/// `|x|^2 + |y|^2`, with a wide safety factor.
const MATCH_TOLERANCE: f32 = 1e-5;

fn squared_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact nearest row of `b` for every row of `a` (ties to the lower index).
/// Candidates come from a blocked single-precision `|y|^2 - 2 x.y` scan and
/// everything within its error band is re-checked in double precision.
fn nearest_rows(a: &[Descriptor], b: &[Descriptor]) -> Vec<usize> {
    let to_matrix = |d: &[Descriptor]| DMatrix::<f32>::from_fn(FPFH_DIM, d.len(), |k, i| d[i][k] as f32);
    let (ma, mbt) = (to_matrix(a), to_matrix(b).transpose());
    let nb: Vec<f32> = mbt.row_iter().map(|r| r.norm_squared()).collect();
    let nb_max = nb.iter().copied().fold(0.0, f32::max);
    (0..a.len())
        .step_by(MATCH_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .flat_map_iter(|start| {
            let len = MATCH_BLOCK.min(a.len() - start);
            // column i holds the dot products of a[start + i] with every b
            let g = &mbt * ma.columns(start, len);
            let ma = &ma;
            let nb = &nb;
            (0..len)
                .map(move |i| {
                    let col = g.column(i);
                    let score = |j: usize| nb[j] - 2.0 * col[j];
                    let best = (0..b.len()).map(score).fold(f32::INFINITY, f32::min);
                    let band = best + MATCH_TOLERANCE * (ma.column(start + i).norm_squared() + nb_max);
                    let ai = &a[start + i];
                    let mut winner = (f64::INFINITY, 0usize);
                    for j in (0..b.len()).filter(|&j| score(j) <= band) {
                        let d = squared_distance(ai, &b[j]);
                        if d < winner.0 {
                            winner = (d, j);
                        }
                    }
                    winner.1
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Pairs `(i, j)` where target keypoint `j` is the nearest descriptor to
/// source keypoint `i` and vice versa.
pub fn mutual_correspondences(source: &FeatureCloud, target: &FeatureCloud) -> Vec<(usize, usize)> {
    if source.is_empty() || target.is_empty() {
        return Vec::new();
    }
    let s_to_t = nearest_rows(&source.descriptors, &target.descriptors);
    let t_to_s = nearest_rows(&target.descriptors, &source.descriptors);
    s_to_t
        .iter()
        .enumerate()
        .filter(|&(i, &j)| t_to_s[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

fn lengths_agree(a: f64, b: f64, scale: f64) -> bool {
    a > 0.0 && b > 0.0 && a * scale < b && b * scale < a
}

fn triple_consistent(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    corr: &[(usize, usize)],
    idx: [usize; 3],
    scale: f64,
) -> bool {
    [(0, 1), (1, 2), (2, 0)].iter().all(|&(a, b)| {
        let (sa, ta) = corr[idx[a]];
        let (sb, tb) = corr[idx[b]];
        lengths_agree((src[sa] - src[sb]).norm(), (dst[ta] - dst[tb]).norm(), scale)
    })
}

fn sample_triple(rng: &mut ChaCha8Rng, n: usize) -> [usize; 3] {
    loop {
        let t = [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)];
        if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
            return t;
        }
    }
}

/// Keeps correspondences that belong to at least one randomly drawn triple
/// whose three pairwise lengths agree in both clouds.
pub fn tuple_prune(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    corr: &[(usize, usize)],
    params: &GlobalRegParams,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    if corr.len() < 3 {
        return Vec::new();
    }
    let mut keep = vec![false; corr.len()];
    let trials = corr.len() * params.tuples_per_correspondence;
    for _ in 0..trials {
        let idx = sample_triple(rng, corr.len());
        if triple_consistent(src, dst, corr, idx, params.tuple_scale) {
            for i in idx {
                keep[i] = true;
            }
        }
    }
    corr.iter().zip(&keep).filter(|(_, k)| **k).map(|(c, _)| *c).collect()
}

fn inliers(t: &Pose, src: &[Vector3<f64>], dst: &[Vector3<f64>], corr: &[(usize, usize)], tol: f64) -> Vec<usize> {
    corr.iter()
        .enumerate()
        .filter(|(_, (s, d))| (t.transform_point(&src[*s]) - dst[*d]).norm() <= tol)
        .map(|(i, _)| i)
        .collect()
}

fn refit(src: &[Vector3<f64>], dst: &[Vector3<f64>], corr: &[(usize, usize)], ids: &[usize]) -> Option<Pose> {
    let a: Vec<_> = ids.iter().map(|&i| src[corr[i].0]).collect();
    let b: Vec<_> = ids.iter().map(|&i| dst[corr[i].1]).collect();
    fit_rigid(&a, &b)
}

/// A cloud with its features and spatial index, reusable across pairs.
pub struct PreparedCloud<'a> {
    pub cloud: &'a PointCloud,
    pub features: FeatureCloud,
    pub index: PointIndex,
    /// Index over the feature keypoints.
    pub key_index: PointIndex,
}

impl<'a> PreparedCloud<'a> {
    pub fn new(cloud: &'a PointCloud, params: &GlobalRegParams) -> Result<Self> {
        let features = prepare_features(cloud, params)?;
        Ok(Self {
            cloud,
            key_index: PointIndex::new(&features.points),
            features,
            index: PointIndex::new(&cloud.points),
        })
    }

    /// Share of the keypoints that, moved by `t`, land within `tol` of a
    /// keypoint of `target`.
    fn key_fitness(&self, target: &PreparedCloud, t: &Pose, tol: f64) -> f64 {
        let hits = self
            .features
            .points
            .iter()
            .filter(|p| target.key_index.has_within(&t.transform_point(p), tol))
            .count();
        hits as f64 / self.features.len().max(1) as f64
    }
}

/// Estimates the source→target transform with no initial guess.
pub fn global_register(source: &PointCloud, target: &PointCloud, params: &GlobalRegParams) -> Result<RegistrationResult> {
    params.validate()?;
    let s = PreparedCloud::new(source, params)?;
    let t = PreparedCloud::new(target, params)?;
    global_register_prepared(&s, &t, params)
}

/// [`global_register`] on clouds prepared with the same parameters.
pub fn global_register_prepared(source: &PreparedCloud, target: &PreparedCloud, params: &GlobalRegParams) -> Result<RegistrationResult> {
    if source.cloud.is_empty() || target.cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (fs, ft) = (&source.features, &target.features);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let raw = mutual_correspondences(&fs, &ft);
    let corr = tuple_prune(&fs.points, &ft.points, &raw, params, &mut rng);
    if corr.len() < params.min_correspondences {
        return Err(Error::InsufficientCorrespondences {
            found: corr.len(),
            required: params.min_correspondences,
        });
    }

    let (src, dst) = (&fs.points, &ft.points);
    let hypotheses: Vec<[usize; 3]> = (0..params.max_iterations)
        .map(|_| sample_triple(&mut rng, corr.len()))
        .collect();
    // hypotheses are ranked by keypoint fitness, then correspondence inliers;
    // remaining ties go to the earliest draw so the outcome is seed-determined
    let key_fit = |t: &Pose| source.key_fitness(target, t, params.inlier_distance);
    let best = hypotheses
        .par_iter()
        .enumerate()
        .filter(|(_, idx)| triple_consistent(src, dst, &corr, **idx, params.tuple_scale))
        .filter_map(|(h, idx)| {
            let t = refit(src, dst, &corr, idx)?;
            Some((key_fit(&t), inliers(&t, src, dst, &corr, params.inlier_distance).len(), h, t))
        })
        .reduce_with(|a, b| {
            let better = b.0 > a.0 || (b.0 == a.0 && (b.1 > a.1 || (b.1 == a.1 && b.2 < a.2)));
            if better {
                b
            } else {
                a
            }
        });
    let Some((mut score, _, _, mut transform)) = best else {
        return Err(Error::InsufficientCorrespondences {
            found: 0,
            required: params.min_correspondences,
        });
    };

    let mut ids = inliers(&transform, src, dst, &corr, params.inlier_distance);
    for _ in 0..5 {
        let Some(t) = refit(src, dst, &corr, &ids) else { break };
        let next = inliers(&t, src, dst, &corr, params.inlier_distance);
        let f = key_fit(&t);
        if next.len() < ids.len() || f < score {
            break;
        }
        score = f;
        transform = t;
        let stable = next == ids;
        ids = next;
        if stable {
            break;
        }
    }

    let rmse = if ids.is_empty() {
        f64::INFINITY
    } else {
        let sq: f64 = ids
            .iter()
            .map(|&i| (transform.transform_point(&src[corr[i].0]) - dst[corr[i].1]).norm_squared())
            .sum();
        (sq / ids.len() as f64).sqrt()
    };
    let fitness = ids.len() as f64 / corr.len() as f64;
    let two_way = score.min(target.key_fitness(source, &transform.inverse(), params.inlier_distance));
    let overlap = overlap_with_indices(
        source.cloud,
        &source.index,
        target.cloud,
        &target.index,
        &transform,
        params.overlap_distance,
    )?;
    Ok(RegistrationResult {
        transform,
        overlap,
        rmse,
        fitness,
        converged: ids.len() >= 3 && two_way >= params.min_key_fitness,
        iterations: params.max_iterations,
    })
}
