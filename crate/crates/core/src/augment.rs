//! Training-time augmentation and tooth-crop standardization.

use num_traits::Float;
use rand::Rng;

use crate::detector::Box3;
use crate::error::bail;
use crate::geometry::{mat_mul, mat_vec, rot_x, rot_y, rot_z, sub, Affine3};
use crate::rng;
use crate::volume::{
    normalize01, resample_affine, resample_nearest, BinaryMask, Grid, GridGeometry, Interpolation, Volume,
};
use crate::Result;

/// Output shape of standardized tooth crops; `z` is the tooth axis.
pub const CROP_DIMS: [usize; 3] = [64, 64, 128];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoutSpec {
    pub probability: f64,
    pub lo_frac: f64,
    pub hi_frac: f64,
    pub fill: f32,
}

impl Default for CutoutSpec {
    fn default() -> Self {
        Self { probability: 0.8, lo_frac: 0.2, hi_frac: 0.25, fill: 0.0 }
    }
}

impl CutoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            bail!(InvalidArgument, "cutout probability must be in [0, 1], got {}", self.probability);
        }
        if !(0.0 < self.lo_frac && self.lo_frac <= self.hi_frac && self.hi_frac < 1.0) {
            bail!(InvalidArgument, "need 0 < lo_frac <= hi_frac < 1, got {} / {}", self.lo_frac, self.hi_frac);
        }
        Ok(())
    }

    /// Inclusive integer side range for an axis of length `len`.
    pub fn side_range(&self, len: usize) -> (usize, usize) {
        let lo = (Float::ceil(len as f64 * self.lo_frac) as usize).max(1);
        let hi = (Float::floor(len as f64 * self.hi_frac) as usize).max(lo);
        (lo, hi)
    }
}

/// A cutout as drawn (`sides`) and as applied after clipping to the grid
/// (`lo..hi` per axis, in voxels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutoutBox {
    pub sides: [usize; 3],
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CutoutBox {
    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        let c = [i, j, k];
        (0..3).all(|a| self.lo[a] <= c[a] && c[a] < self.hi[a])
    }

    pub fn clipped_voxels(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }
}

/// Zeroes (or `fill`s) a randomly sized box with a uniformly placed centre;
/// the box may hang over the grid border and is clipped.
pub fn cutout(v: &Volume, spec: &CutoutSpec, seed: u64) -> Result<(Volume, Option<CutoutBox>)> {
    spec.validate()?;
    let mut r = rng::seeded(seed);
    if !(r.random::<f64>() < spec.probability) {
        return Ok((v.clone(), None));
    }
    let dims = v.dims();
    let mut b = CutoutBox { sides: [0; 3], lo: [0; 3], hi: [0; 3] };
    for a in 0..3 {
        let (lo, hi) = spec.side_range(dims[a]);
        let side = r.random_range(lo..=hi);
        let centre = r.random_range(0..dims[a]) as i64;
        let start = centre - (side / 2) as i64;
        b.sides[a] = side;
        b.lo[a] = start.clamp(0, dims[a] as i64) as usize;
        b.hi[a] = (start + side as i64).clamp(0, dims[a] as i64) as usize;
    }
    let mut out = v.clone();
    for k in b.lo[2]..b.hi[2] {
        for j in b.lo[1]..b.hi[1] {
            for i in b.lo[0]..b.hi[0] {
                out.set(i, j, k, spec.fill);
            }
        }
    }
    Ok((out, Some(b)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec {
    pub probability: f64,
    pub max_rotate_deg: f64,
    pub max_scale_frac: f64,
    pub max_translate_frac: f64,
}

impl Default for AffineSpec {
    fn default() -> Self {
        Self { probability: 0.8, max_rotate_deg: 10.0, max_scale_frac: 0.1, max_translate_frac: 0.05 }
    }
}

impl AffineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            bail!(InvalidArgument, "affine probability must be in [0, 1], got {}", self.probability);
        }
        if !(self.max_rotate_deg >= 0.0 && self.max_translate_frac >= 0.0) {
            bail!(InvalidArgument, "affine magnitudes must be >= 0");
        }
        if !(0.0..1.0).contains(&self.max_scale_frac) {
            bail!(InvalidArgument, "scale fraction must be in [0, 1), got {}", self.max_scale_frac);
        }
        Ok(())
    }
}

/// Draws the world-space map applied by [`random_affine`], or `None` when
/// the augmentation is skipped. Rotation and scaling act about the grid
/// centre.
pub fn sample_affine(geometry: &GridGeometry, spec: &AffineSpec, seed: u64) -> Result<Option<Affine3>> {
    spec.validate()?;
    let mut r = rng::seeded(seed);
    if !(r.random::<f64>() < spec.probability) {
        return Ok(None);
    }
    let deg = spec.max_rotate_deg;
    let angles = [r.random_range(-deg..=deg), r.random_range(-deg..=deg), r.random_range(-deg..=deg)];
    let s = 1.0 + r.random_range(-spec.max_scale_frac..=spec.max_scale_frac);
    let lo = geometry.extent_min();
    let hi = geometry.extent_max();
    let mut t = [0.0; 3];
    let mut centre = [0.0; 3];
    for a in 0..3 {
        let m = spec.max_translate_frac * (hi[a] - lo[a]);
        t[a] = r.random_range(-m..=m);
        centre[a] = 0.5 * (lo[a] + hi[a]);
    }
    let mut linear = mat_mul(&rot_z(angles[2]), &mat_mul(&rot_y(angles[1]), &rot_x(angles[0])));
    for row in linear.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    let moved = mat_vec(&linear, centre);
    let translation = [0, 1, 2].map(|a| centre[a] + t[a] - moved[a]);
    Ok(Some(Affine3 { linear, translation }))
}

/// Applies one random affine map to a volume (trilinear) and, jointly, to
/// an optional mask (nearest).
pub fn random_affine(
    v: &Volume,
    mask: Option<&BinaryMask>,
    spec: &AffineSpec,
    seed: u64,
) -> Result<(Volume, Option<BinaryMask>)> {
    if let Some(m) = mask {
        if m.dims() != v.dims() {
            bail!(ShapeMismatch, "mask {:?} vs volume {:?}", m.dims(), v.dims());
        }
    }
    let Some(xform) = sample_affine(v.geometry(), spec, seed)? else {
        return Ok((v.clone(), mask.cloned()));
    };
    let out = resample_affine(v, &xform, v.geometry(), Interpolation::Trilinear)?;
    let out_mask = match mask {
        Some(m) => Some(resample_nearest(m, &xform, m.geometry())?),
        None => None,
    };
    Ok((out, out_mask))
}

fn crop_geometry(source: &GridGeometry, b: &Box3, dims: [usize; 3]) -> Result<GridGeometry> {
    let extent = Box3::new(source.extent_min(), source.extent_max())?;
    let Some(inter) = b.intersection(&extent) else {
        bail!(EmptyRegion, "crop box {:?}..{:?} misses the volume", b.min, b.max);
    };
    GridGeometry::from_extent(inter.min, inter.max, dims)
}

/// Crops `b` (clipped to the volume), resamples it to `dims` and rescales
/// intensities to `[0, 1]`.
pub fn standardize_crop_to(v: &Volume, b: &Box3, dims: [usize; 3]) -> Result<Volume> {
    let g = crop_geometry(v.geometry(), b, dims)?;
    Ok(normalize01(&resample_affine(v, &Affine3::identity(), &g, Interpolation::Trilinear)?))
}

pub fn standardize_crop(v: &Volume, b: &Box3) -> Result<Volume> {
    standardize_crop_to(v, b, CROP_DIMS)
}

/// The label-side twin of [`standardize_crop_to`]: same grid, nearest
/// sampling, no intensity rescaling.
pub fn standardize_crop_nearest<T: Copy + Default>(src: &Grid<T>, b: &Box3, dims: [usize; 3]) -> Result<Grid<T>> {
    let g = crop_geometry(src.geometry(), b, dims)?;
    resample_nearest(src, &Affine3::identity(), &g)
}

/// Mean world position of the foreground voxels, if any.
pub fn centroid(mask: &BinaryMask) -> Option<[f64; 3]> {
    let pts = mask.foreground_points();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let mut c = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            c[a] += p[a] / n;
        }
    }
    Some(c)
}

/// Euclidean distance between two points, in the grid's world units.
pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    crate::geometry::norm(sub(a, b))
}
