//! Distance-map regression machinery.
//!
//! A tooth mask is turned into a map of the distance from every voxel to the
//! closest background voxel, approximated with the 3-4-5 Chamfer metric.
//! The network regresses a clamped, normalized version of that map; its
//! prediction is binarized again and per-tooth predictions are pasted back
//! into a full label map.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::detector::Box3;
use crate::error::bail;
use crate::volume::{sample_trilinear, BinaryMask, Grid, GridGeometry, LabelMap};
use crate::Result;

/// Nonnegative per-voxel distances in face steps (or normalized targets).
pub type DistanceMap = Grid<f32>;

/// Default clamp for regression targets, in voxels.
pub const DEFAULT_D_MAX_VOX: f64 = 20.0;
/// Default binarization threshold in face steps, before normalization.
pub const DEFAULT_TAU_FACE_STEPS: f64 = 0.5;

/// Integer local step weights for face-, edge- and corner-adjacent moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChamferWeights {
    pub face: u32,
    pub edge: u32,
    pub corner: u32,
}

impl Default for ChamferWeights {
    fn default() -> Self {
        Self { face: 3, edge: 4, corner: 5 }
    }
}

impl ChamferWeights {
    pub fn for_offset(&self, d: [i32; 3]) -> u32 {
        match d.iter().filter(|&&c| c != 0).count() {
            1 => self.face,
            2 => self.edge,
            _ => self.corner,
        }
    }
}

/// The 13 neighbours that precede a voxel in x-fastest raster order.
fn forward_half() -> Vec<[i32; 3]> {
    let mut out = Vec::with_capacity(13);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                if before {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Raw two-pass Chamfer sweep. Returns integer distances in weight units;
/// background voxels are 0.
pub fn chamfer_dt_raw(mask: &BinaryMask, w: ChamferWeights) -> Result<Vec<u32>> {
    if mask.data().iter().all(|&b| b) {
        return Err(crate::Error::NoBackground);
    }
    let [nx, ny, nz] = mask.dims();
    let (nxi, nyi, nzi) = (nx as i32, ny as i32, nz as i32);
    let inf = u32::MAX / 2;
    let mut d: Vec<u32> = mask.data().iter().map(|&b| if b { inf } else { 0 }).collect();

    let fwd: Vec<([i32; 3], isize, u32)> = forward_half()
        .into_iter()
        .map(|o| (o, o[0] as isize + nx as isize * (o[1] as isize + ny as isize * o[2] as isize), w.for_offset(o)))
        .collect();
    let bwd: Vec<([i32; 3], isize, u32)> = fwd.iter().map(|&(o, off, wt)| ([-o[0], -o[1], -o[2]], -off, wt)).collect();

    let inside = |x: i32, y: i32, z: i32| x >= 0 && y >= 0 && z >= 0 && x < nxi && y < nyi && z < nzi;

    for z in 0..nzi {
        for y in 0..nyi {
            for x in 0..nxi {
                let idx = (x + nxi * (y + nyi * z)) as usize;
                let mut best = d[idx];
                if best == 0 {
                    continue;
                }
                for &(o, off, wt) in &fwd {
                    if inside(x + o[0], y + o[1], z + o[2]) {
                        best = best.min(d[(idx as isize + off) as usize] + wt);
                    }
                }
                d[idx] = best;
            }
        }
    }
    for z in (0..nzi).rev() {
        for y in (0..nyi).rev() {
            for x in (0..nxi).rev() {
                let idx = (x + nxi * (y + nyi * z)) as usize;
                let mut best = d[idx];
                if best == 0 {
                    continue;
                }
                for &(o, off, wt) in &bwd {
                    if inside(x + o[0], y + o[1], z + o[2]) {
                        best = best.min(d[(idx as isize + off) as usize] + wt);
                    }
                }
                d[idx] = best;
            }
        }
    }
    Ok(d)
}

/// 3-4-5 Chamfer distance to the nearest background voxel, divided by 3 so
/// that one face step is 1.0. Errors when the mask has no background.
pub fn chamfer_dt(mask: &BinaryMask) -> Result<DistanceMap> {
    let w = ChamferWeights::default();
    let raw = chamfer_dt_raw(mask, w)?;
    let face = w.face as f32;
    Grid::from_vec(*mask.geometry(), raw.into_iter().map(|v| v as f32 / face).collect())
}

/// Chamfer distances clamped at `d_max_vox` and divided by it, so targets
/// lie in `[0, 1]`. A mask without foreground gives all zeros.
pub fn regression_target(mask: &BinaryMask, d_max_vox: f64) -> Result<DistanceMap> {
    if !(d_max_vox > 0.0) {
        bail!(InvalidArgument, "d_max must be > 0, got {d_max_vox}");
    }
    if mask.data().iter().all(|&b| !b) {
        return Ok(DistanceMap::filled(*mask.geometry(), 0.0));
    }
    let dt = chamfer_dt(mask)?;
    let d_max = d_max_vox as f32;
    Ok(dt.map(|v| v.min(d_max) / d_max))
}

/// Mean squared error plus `alpha * weight_norm_sq`.
pub fn mse_loss(pred: &DistanceMap, target: &DistanceMap, weight_norm_sq: f64, alpha: f64) -> Result<f64> {
    if pred.dims() != target.dims() {
        bail!(ShapeMismatch, "prediction {:?} vs target {:?}", pred.dims(), target.dims());
    }
    let n = pred.data().len() as f64;
    let sse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sse / n + alpha * weight_norm_sq)
}

/// Foreground where the predicted distance exceeds `tau`.
pub fn binarize(pred: &DistanceMap, tau: f64) -> BinaryMask {
    pred.map(|v| v as f64 > tau)
}

/// Default threshold for normalized targets: half a face step.
pub fn default_tau(d_max_vox: f64) -> f64 {
    DEFAULT_TAU_FACE_STEPS / d_max_vox
}

/// Pastes per-instance predictions into a label map on `canvas`.
///
/// Each map is sampled (trilinearly, in its own geometry) at the canvas
/// voxel centres that fall inside its box; voxels above `tau` are claimed.
/// When several instances claim a voxel the one with the larger predicted
/// distance wins, earlier instances on ties. Instance `i` is written with
/// its box's tooth id, or `i + 1` when the box has none.
pub fn assemble(instances: &[(Box3, DistanceMap)], canvas: &GridGeometry, tau: f64) -> Result<LabelMap> {
    let mut labels = LabelMap::filled(*canvas, 0);
    let mut depth = vec![f32::NEG_INFINITY; canvas.len()];
    let cmin = canvas.extent_min();
    let cmax = canvas.extent_max();
    for (n, (bx, map)) in instances.iter().enumerate() {
        let label = match bx.tooth_id {
            Some(id) => id as u16,
            None => u16::try_from(n + 1).map_err(|_| crate::Error::InvalidArgument("too many instances".into()))?,
        };
        if (0..3).any(|a| bx.max[a] <= cmin[a] || bx.min[a] >= cmax[a]) {
            bail!(EmptyRegion, "instance {n} box lies outside the canvas");
        }
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let first = Float::ceil((bx.min[a] - canvas.origin[a]) / canvas.spacing[a]).max(0.0);
            let last =
                Float::floor((bx.max[a] - canvas.origin[a]) / canvas.spacing[a]).min((canvas.dims[a] - 1) as f64);
            if last < first {
                lo[a] = 1;
                hi[a] = 0;
            } else {
                lo[a] = first as usize;
                hi[a] = last as usize + 1;
            }
        }
        let mg = map.geometry();
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    let p = canvas.world(i, j, k);
                    let v = sample_trilinear(map, mg.continuous_index(p));
                    if (v as f64) <= tau {
                        continue;
                    }
                    let idx = canvas.index(i, j, k);
                    if v > depth[idx] {
                        depth[idx] = v;
                        labels.data_mut()[idx] = label;
                    }
                }
            }
        }
    }
    Ok(labels)
}
