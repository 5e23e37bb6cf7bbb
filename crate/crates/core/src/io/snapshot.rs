//! Binary snapshot of a TSDF volume.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, origin as three
//! `f64`, voxel size `f64`, dims as three `u64`, truncation `f64`,
//! allocation `u8`, block count `u64`, then per block its key as three `u64`
//! followed by the tsdf and weight arrays as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::tsdf::{Allocation, Block, TsdfVolume, BLOCK};

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"PRTSDF\0\0";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_volume(path: &Path, v: &TsdfVolume) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    for x in v.origin().iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&v.voxel_size().to_le_bytes())?;
    for d in v.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&v.truncation().to_le_bytes())?;
    w.write_all(&[matches!(v.allocation(), Allocation::Dense) as u8])?;
    let mut keys: Vec<_> = v.blocks.keys().copied().collect();
    keys.sort_unstable();
    w.write_all(&(keys.len() as u64).to_le_bytes())?;
    for key in keys {
        for k in key {
            w.write_all(&(k as u64).to_le_bytes())?;
        }
        let b = &v.blocks[&key];
        for x in b.tsdf.iter().chain(&b.weight) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_volume(path: &Path) -> Result<TsdfVolume> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |why: &str| Error::Parse(format!("{}: {why}", path.display()));
    if take::<8>(&mut r)? != SNAPSHOT_MAGIC {
        return Err(bad("not a volume snapshot"));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != SNAPSHOT_VERSION {
        return Err(bad(&format!("unsupported snapshot version {version}")));
    }
    let f = |r: &mut BufReader<File>| -> Result<f64> { Ok(f64::from_le_bytes(take(r)?)) };
    let u = |r: &mut BufReader<File>| -> Result<usize> { Ok(u64::from_le_bytes(take(r)?) as usize) };
    let origin = Vector3::new(f(&mut r)?, f(&mut r)?, f(&mut r)?);
    let voxel = f(&mut r)?;
    let dims = [u(&mut r)?, u(&mut r)?, u(&mut r)?];
    let truncation = f(&mut r)?;
    let allocation = if take::<1>(&mut r)?[0] == 1 { Allocation::Dense } else { Allocation::Sparse };
    let count = u(&mut r)?;
    let mut v = TsdfVolume::new(origin, voxel, dims, truncation, Allocation::Sparse)?;
    let n = BLOCK * BLOCK * BLOCK;
    for _ in 0..count {
        let key = [u(&mut r)?, u(&mut r)?, u(&mut r)?];
        let mut vals = vec![0f32; 2 * n];
        for x in vals.iter_mut() {
            *x = f32::from_le_bytes(take(&mut r)?);
        }
        let weight = vals.split_off(n);
        v.blocks.insert(key, Block { tsdf: vals, weight });
    }
    v.set_allocation(allocation);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut v = TsdfVolume::new(Vector3::new(-1.0, 0.5, 2.0), 0.05, [20, 9, 17], 0.2, Allocation::Sparse).unwrap();
        v.fill_with(|p| p.norm() - 1.5);
        v.set([3, 4, 5], -0.25, 7.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.bin");
        write_volume(&path, &v).unwrap();
        assert_eq!(read_volume(&path).unwrap(), v);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(read_volume(&path).is_err());
    }
}
