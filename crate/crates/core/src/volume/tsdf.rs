//! Truncated signed distance volume with block-sparse storage.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Voxels per block edge.
pub const BLOCK: usize = 8;
const BLOCK_VOXELS: usize = BLOCK * BLOCK * BLOCK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationParams {
    /// Pixels deeper than this (meters) are ignored.
    pub max_depth: f64,
    /// Meters.
    pub truncation: f64,
    pub max_weight: f64,
}

impl Default for IntegrationParams {
    fn default() -> Self {
        Self {
            max_depth: 5.0,
            truncation: 0.06,
            max_weight: 100.0,
        }
    }
}

impl IntegrationParams {
    pub fn validate(&self, voxel_size: f64) -> Result<()> {
        if !(self.max_depth > 0.0 && self.truncation > 0.0 && self.max_weight > 0.0) {
            return Err(Error::InvalidParameter("integration parameters must be positive".into()));
        }
        if self.truncation < 2.0 * voxel_size {
            return Err(Error::InvalidParameter(format!(
                "truncation {} is below twice the voxel size {voxel_size}",
                self.truncation
            )));
        }
        Ok(())
    }
}

/// Whether every block of the grid exists up front or only blocks near
/// observed surfaces are created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    Dense,
    #[default]
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub tsdf: Vec<f32>,
    pub weight: Vec<f32>,
}

impl Block {
    fn new() -> Self {
        Self {
            tsdf: vec![1.0; BLOCK_VOXELS],
            weight: vec![0.0; BLOCK_VOXELS],
        }
    }
}

fn local_index(l: [usize; 3]) -> usize {
    (l[2] * BLOCK + l[1]) * BLOCK + l[0]
}

/// Voxel `(i, j, k)` has its center at `origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size`.
/// Stored values are signed distances divided by the truncation, in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    origin: Vector3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    truncation: f64,
    allocation: Allocation,
    pub(crate) blocks: HashMap<[usize; 3], Block>,
}

impl TsdfVolume {
    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3], truncation: f64, allocation: Allocation) -> Result<Self> {
        if !(voxel_size > 0.0) || !(truncation > 0.0) || dims.contains(&0) {
            return Err(Error::InvalidParameter("volume needs positive voxel size, truncation and dims".into()));
        }
        let mut v = Self {
            origin,
            voxel_size,
            dims,
            truncation,
            allocation,
            blocks: HashMap::new(),
        };
        if allocation == Allocation::Dense {
            let nb = v.block_dims();
            for z in 0..nb[2] {
                for y in 0..nb[1] {
                    for x in 0..nb[0] {
                        v.blocks.insert([x, y, z], Block::new());
                    }
                }
            }
        }
        Ok(v)
    }

    /// Smallest grid covering `[min, max]`.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>, voxel_size: f64, truncation: f64, allocation: Allocation) -> Result<Self> {
        let extent = max - min;
        if extent.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidParameter("empty bounding box".into()));
        }
        let dims = [0, 1, 2].map(|k| ((extent[k] / voxel_size).ceil() as usize).max(1));
        Self::new(min, voxel_size, dims, truncation, allocation)
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn allocation(&self) -> Allocation {
        self.allocation
    }

    pub(crate) fn set_allocation(&mut self, allocation: Allocation) {
        self.allocation = allocation;
    }

    pub fn allocated_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn block_dims(&self) -> [usize; 3] {
        self.dims.map(|d| d.div_ceil(BLOCK))
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(idx[0] as f64 + 0.5, idx[1] as f64 + 0.5, idx[2] as f64 + 0.5) * self.voxel_size
    }

    /// Voxel whose cell contains `p`, if inside the grid.
    pub fn voxel_at(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let q = (p - self.origin) / self.voxel_size;
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let f = q[k].floor();
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
            idx[k] = f as usize;
        }
        Some(idx)
    }

    fn split(idx: [usize; 3]) -> ([usize; 3], usize) {
        (idx.map(|i| i / BLOCK), local_index(idx.map(|i| i % BLOCK)))
    }

    fn in_bounds(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|k| idx[k] < self.dims[k])
    }

    /// `(tsdf, weight)` of a voxel; unallocated or unobserved voxels read as `(1, 0)`.
    pub fn get(&self, idx: [usize; 3]) -> Option<(f64, f64)> {
        if !self.in_bounds(idx) {
            return None;
        }
        let (b, l) = Self::split(idx);
        Some(match self.blocks.get(&b) {
            Some(block) => (block.tsdf[l] as f64, block.weight[l] as f64),
            None => (1.0, 0.0),
        })
    }

    /// Overwrites one voxel; `tsdf` is clamped to `[-1, 1]`.
    pub fn set(&mut self, idx: [usize; 3], tsdf: f64, weight: f64) -> Result<()> {
        if !self.in_bounds(idx) {
            return Err(Error::IndexOutOfRange {
                index: idx.iter().zip(&self.dims).map(|(i, d)| if i >= d { *i } else { 0 }).max().unwrap_or(0),
                len: *self.dims.iter().max().unwrap_or(&0),
            });
        }
        if !(weight >= 0.0) {
            return Err(Error::InvalidParameter("voxel weight must be non-negative".into()));
        }
        let (b, l) = Self::split(idx);
        let block = self.blocks.entry(b).or_insert_with(Block::new);
        block.tsdf[l] = tsdf.clamp(-1.0, 1.0) as f32;
        block.weight[l] = weight as f32;
        Ok(())
    }

    /// Fills every voxel from a signed-distance function (meters) with weight 1.
    pub fn fill_with(&mut self, sdf: impl Fn(&Vector3<f64>) -> f64 + Sync) {
        let nb = self.block_dims();
        let keys: Vec<[usize; 3]> = (0..nb[2])
            .flat_map(|z| (0..nb[1]).flat_map(move |y| (0..nb[0]).map(move |x| [x, y, z])))
            .collect();
        let filled: Vec<([usize; 3], Block)> = keys
            .into_par_iter()
            .map(|key| {
                let mut block = Block::new();
                for_each_voxel(key, self.dims, |idx, l| {
                    block.tsdf[l] = (sdf(&self.voxel_center(idx)) / self.truncation).clamp(-1.0, 1.0) as f32;
                    block.weight[l] = 1.0;
                });
                (key, block)
            })
            .collect();
        self.blocks = filled.into_iter().collect();
    }

    /// Iterator over observed voxels as `(index, tsdf, weight)`.
    pub fn observed(&self) -> impl Iterator<Item = ([usize; 3], f64, f64)> + '_ {
        self.blocks.iter().flat_map(move |(key, block)| {
            let mut out = Vec::new();
            for_each_voxel(*key, self.dims, |idx, l| {
                if block.weight[l] > 0.0 {
                    out.push((idx, block.tsdf[l] as f64, block.weight[l] as f64));
                }
            });
            out
        })
    }

    /// Blocks that may hold a voxel inside some pixel's truncation band. The
    /// estimate is conservative: each band sample claims every block within
    /// the pixel footprint plus one voxel.
    fn touched_blocks(&self, d: &DepthMap, pose: &Pose, params: &IntegrationParams) -> Vec<[usize; 3]> {
        let k = d.intrinsics();
        let step = self.voxel_size * BLOCK as f64 * 0.5;
        let block_len = self.voxel_size * BLOCK as f64;
        let nb = self.block_dims();
        let pixel_angle = 0.5 * std::f64::consts::SQRT_2 / k.fx.min(k.fy);
        let pixels: Vec<(usize, usize, f64)> = d.iter_valid().filter(|(_, _, z)| *z <= params.max_depth).collect();
        let mut keys: Vec<[usize; 3]> = pixels
            .par_iter()
            .flat_map_iter(|&(u, v, z)| {
                let ray = k.backproject(u as f64, v as f64, 1.0);
                let (z0, z1) = ((z - params.truncation).max(1e-6), z + params.truncation);
                let n = ((z1 - z0) * ray.norm() / step).ceil() as usize + 1;
                let mut out = Vec::new();
                for s in 0..=n {
                    let zs = z0 + (z1 - z0) * s as f64 / n as f64;
                    let p = pose.transform_point(&(ray * zs)) - self.origin;
                    let margin = 0.5 * step + zs * ray.norm() * pixel_angle + self.voxel_size;
                    let lo = p.map(|x| ((x - margin) / block_len).floor());
                    let hi = p.map(|x| ((x + margin) / block_len).floor());
                    if (0..3).any(|a| hi[a] < 0.0 || lo[a] >= nb[a] as f64) {
                        continue;
                    }
                    let range = |a: usize| (lo[a].max(0.0) as usize)..=(hi[a].min(nb[a] as f64 - 1.0) as usize);
                    for bz in range(2) {
                        for by in range(1) {
                            for bx in range(0) {
                                out.push([bx, by, bz]);
                            }
                        }
                    }
                }
                out
            })
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// Fuses one depth map taken from `pose` (camera→world).
    pub fn integrate(&mut self, d: &DepthMap, pose: &Pose, params: &IntegrationParams) -> Result<()> {
        params.validate(self.voxel_size)?;
        let keys: Vec<[usize; 3]> = match self.allocation {
            Allocation::Sparse => {
                let keys = self.touched_blocks(d, pose, params);
                for key in &keys {
                    self.blocks.entry(*key).or_insert_with(Block::new);
                }
                keys
            }
            Allocation::Dense => self.blocks.keys().copied().collect(),
        };
        let world_to_cam = pose.inverse();
        let k = *d.intrinsics();
        let (trunc, max_w) = (params.truncation, params.max_weight);
        let sparse = self.allocation == Allocation::Sparse;
        let this = &*self;
        let updates: Vec<([usize; 3], Block)> = keys
            .par_iter()
            .filter_map(|key| {
                let block = &this.blocks[key];
                let mut out = block.clone();
                let mut changed = false;
                for_each_voxel(*key, this.dims, |idx, l| {
                    let pc = world_to_cam.transform_point(&this.voxel_center(idx));
                    let Some((u, v)) = k.project_to_pixel(&pc) else { return };
                    let Some(depth) = d.get(u, v) else { return };
                    if depth > params.max_depth {
                        return;
                    }
                    let sdf = depth - pc.z;
                    // sparse grids only track the band itself, so the result
                    // does not depend on when a block was allocated
                    if sdf < -trunc || (sparse && sdf > trunc) {
                        return;
                    }
                    let s = (sdf / trunc).min(1.0);
                    let w = out.weight[l] as f64;
                    out.tsdf[l] = ((out.tsdf[l] as f64 * w + s) / (w + 1.0)) as f32;
                    out.weight[l] = (w + 1.0).min(max_w) as f32;
                    changed = true;
                });
                changed.then_some((*key, out))
            })
            .collect();
        for (key, block) in updates {
            self.blocks.insert(key, block);
        }
        Ok(())
    }
}

/// Calls `f(global_index, local_index)` for the in-grid voxels of a block.
pub(crate) fn for_each_voxel(key: [usize; 3], dims: [usize; 3], mut f: impl FnMut([usize; 3], usize)) {
    for z in 0..BLOCK {
        for y in 0..BLOCK {
            for x in 0..BLOCK {
                let idx = [key[0] * BLOCK + x, key[1] * BLOCK + y, key[2] * BLOCK + z];
                if idx[0] < dims[0] && idx[1] < dims[1] && idx[2] < dims[2] {
                    f(idx, local_index([x, y, z]));
                }
            }
        }
    }
}

/// Free-function form of [`TsdfVolume::integrate`].
pub fn integrate(vol: &mut TsdfVolume, d: &DepthMap, pose: &Pose, params: &IntegrationParams) -> Result<()> {
    vol.integrate(d, pose, params)
}
