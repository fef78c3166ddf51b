//! Dense 3D grids with physical geometry, and the kernels every other module
//! builds on: maximum intensity projection, [0, 1] normalization, y-flip and
//! resampling under rigid or affine maps.
//!
//! Storage is x-fastest: voxel `(i, j, k)` lives at `i + nx * (j + ny * k)`.
//! The world position of voxel `(i, j, k)` is `origin + (i·sx, j·sy, k·sz)`,
//! i.e. `origin` is the centre of the first voxel. A voxel covers the
//! half-open cell `centre ± spacing / 2`; [`GridGeometry::extent_min`] and
//! [`GridGeometry::extent_max`] report the outer faces of those cells.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::bail;
use crate::geometry::{Affine3, RigidTransform, Vec3};
use crate::Result;

/// Voxel counts, spacing (mm/voxel) and origin (mm, centre of voxel 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub origin: Vec3,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            bail!(InvalidGeometry, "dims must be >= 1, got {dims:?}");
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            bail!(InvalidGeometry, "spacing must be positive and finite, got {spacing:?}");
        }
        if origin.iter().any(|o| !o.is_finite()) {
            bail!(InvalidGeometry, "origin must be finite, got {origin:?}");
        }
        if dims[0].checked_mul(dims[1]).and_then(|v| v.checked_mul(dims[2])).is_none() {
            bail!(InvalidGeometry, "dims {dims:?} overflow");
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Grid of `dims` cells tiling the box `[min, max]` exactly: spacing is
    /// `(max - min) / dims` and the first voxel centre sits half a cell in.
    pub fn from_extent(min: Vec3, max: Vec3, dims: [usize; 3]) -> Result<Self> {
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            if dims[a] == 0 {
                bail!(InvalidGeometry, "dims must be >= 1, got {dims:?}");
            }
            spacing[a] = (max[a] - min[a]) / dims[a] as f64;
            origin[a] = min[a] + 0.5 * spacing[a];
        }
        Self::new(dims, spacing, origin)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Fractional voxel index of a world point.
    #[inline]
    pub fn continuous_index(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    pub fn extent_min(&self) -> Vec3 {
        [
            self.origin[0] - 0.5 * self.spacing[0],
            self.origin[1] - 0.5 * self.spacing[1],
            self.origin[2] - 0.5 * self.spacing[2],
        ]
    }

    pub fn extent_max(&self) -> Vec3 {
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.origin[a] + (self.dims[a] as f64 - 0.5) * self.spacing[a];
        }
        out
    }
}

/// Dense 3D grid of `T` with geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geometry: GridGeometry,
    data: Vec<T>,
}

/// CBCT intensities and every derived scalar image.
pub type Volume = Grid<f32>;
/// Per-voxel instance identifiers; 0 is background.
pub type LabelMap = Grid<u16>;
/// Foreground/background mask of one object.
pub type BinaryMask = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn filled(geometry: GridGeometry, value: T) -> Self {
        Self { data: vec![value; geometry.len()], geometry }
    }

    pub fn from_vec(geometry: GridGeometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            bail!(ShapeMismatch, "data length {} does not match dims {:?}", data.len(), geometry.dims);
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geometry.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.geometry.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid { geometry: self.geometry, data: self.data.iter().copied().map(f).collect() }
    }

    /// Same data reinterpreted on another geometry with identical dims.
    pub fn with_geometry(mut self, geometry: GridGeometry) -> Result<Self> {
        if geometry.dims != self.geometry.dims {
            bail!(ShapeMismatch, "dims {:?} != {:?}", geometry.dims, self.geometry.dims);
        }
        self.geometry = geometry;
        Ok(self)
    }
}

impl LabelMap {
    /// Mask of voxels equal to `label`.
    pub fn mask_of(&self, label: u16) -> BinaryMask {
        self.map(|v| v == label)
    }

    /// Sorted distinct nonzero labels.
    pub fn labels(&self) -> Vec<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &v in self.data() {
            seen[v as usize] = true;
        }
        (1..=u16::MAX).filter(|&l| seen[l as usize]).collect()
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data().iter().filter(|&&b| b).count()
    }

    /// World positions of foreground voxel centres.
    pub fn foreground_points(&self) -> Vec<Vec3> {
        let g = self.geometry();
        self.data()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(idx, _)| {
                let [i, j, k] = g.coords(idx);
                g.world(i, j, k)
            })
            .collect()
    }
}

/// 2D scalar image, u-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    pub dims: [usize; 2],
    pub data: Vec<f32>,
}

impl Image2D {
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[u + self.dims[0] * v]
    }

    /// Rescale to [0, 1]; constant images become all zeros.
    pub fn normalized01(&self) -> Image2D {
        Image2D { dims: self.dims, data: normalize_slice(&self.data) }
    }
}

/// Maximum intensity projection along x. Pixel `(j, k)` of the
/// `(ny, nz)` image is `max_i v(i, j, k)`.
pub fn mip_x(v: &Volume) -> Image2D {
    let [nx, ny, nz] = v.dims();
    let mut data = Vec::with_capacity(ny * nz);
    for row in v.data().chunks_exact(nx) {
        data.push(row.iter().copied().fold(f32::NEG_INFINITY, f32::max));
    }
    debug_assert_eq!(data.len(), ny * nz);
    Image2D { dims: [ny, nz], data }
}

fn normalize_slice(data: &[f32]) -> Vec<f32> {
    let (lo, hi) = data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return vec![0.0; data.len()];
    }
    let range = hi - lo;
    data.iter().map(|&x| ((x - lo) / range).clamp(0.0, 1.0)).collect()
}

/// `(v - min) / (max - min)`; a constant volume maps to all zeros.
pub fn normalize01(v: &Volume) -> Volume {
    Grid { geometry: v.geometry, data: normalize_slice(v.data()) }
}

/// `out(i, j, k) = in(i, ny - 1 - j, k)`. Geometry is unchanged.
pub fn flip_y<T: Copy>(v: &Grid<T>) -> Grid<T> {
    let [nx, ny, nz] = v.dims();
    let mut data = Vec::with_capacity(v.data.len());
    for k in 0..nz {
        for j in 0..ny {
            let start = nx * ((ny - 1 - j) + ny * k);
            data.extend_from_slice(&v.data[start..start + nx]);
        }
    }
    Grid { geometry: v.geometry, data }
}

/// Reverses the z axis, `out(i, j, k) = in(i, j, nz - 1 - k)`.
pub fn flip_z<T: Copy>(v: &Grid<T>) -> Grid<T> {
    let [nx, ny, nz] = v.dims();
    let plane = nx * ny;
    let mut data = Vec::with_capacity(v.data.len());
    for k in 0..nz {
        let start = plane * (nz - 1 - k);
        data.extend_from_slice(&v.data[start..start + plane]);
    }
    Grid { geometry: v.geometry, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Fractional indices closer than this to an integer are snapped, so that
/// grids that coincide up to rounding are copied exactly.
const SNAP_EPS: f64 = 1e-6;

#[inline]
fn snap(x: f64) -> f64 {
    let r = Float::round(x);
    if (x - r).abs() < SNAP_EPS {
        r
    } else {
        x
    }
}

/// Per-axis interpolation support: lower index, upper index, upper weight.
/// Points within half a voxel outside the first/last centre clamp to the
/// edge voxel; anything farther is outside.
#[inline]
fn axis_support(x: f64, n: usize) -> Option<(usize, usize, f64)> {
    let last = (n - 1) as f64;
    if !(x >= -0.5 && x <= last + 0.5) {
        return None;
    }
    let xc = x.clamp(0.0, last);
    let i0 = Float::floor(xc) as usize;
    if i0 >= n - 1 {
        return Some((n - 1, n - 1, 0.0));
    }
    Some((i0, i0 + 1, xc - i0 as f64))
}

/// Trilinear sample at a fractional index; 0 outside the grid.
pub fn sample_trilinear(v: &Volume, idx: Vec3) -> f32 {
    let dims = v.dims();
    let (Some((x0, x1, fx)), Some((y0, y1, fy)), Some((z0, z1, fz))) =
        (axis_support(idx[0], dims[0]), axis_support(idx[1], dims[1]), axis_support(idx[2], dims[2]))
    else {
        return 0.0;
    };
    if fx == 0.0 && fy == 0.0 && fz == 0.0 {
        return v.get(x0, y0, z0);
    }
    let c = |i, j, k| v.get(i, j, k) as f64;
    let c00 = c(x0, y0, z0) * (1.0 - fx) + c(x1, y0, z0) * fx;
    let c10 = c(x0, y1, z0) * (1.0 - fx) + c(x1, y1, z0) * fx;
    let c01 = c(x0, y0, z1) * (1.0 - fx) + c(x1, y0, z1) * fx;
    let c11 = c(x0, y1, z1) * (1.0 - fx) + c(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    (c0 * (1.0 - fz) + c1 * fz) as f32
}

/// Nearest-voxel sample at a fractional index; `T::default()` outside.
pub fn sample_nearest<T: Copy + Default>(v: &Grid<T>, idx: Vec3) -> T {
    let dims = v.dims();
    let mut ijk = [0usize; 3];
    for a in 0..3 {
        let r = Float::floor(idx[a] + 0.5);
        if !(r >= 0.0 && r <= (dims[a] - 1) as f64) {
            return T::default();
        }
        ijk[a] = r as usize;
    }
    v.get(ijk[0], ijk[1], ijk[2])
}

/// Affine map from output voxel indices to source voxel indices, given the
/// world-space map `xform` from source to output.
#[derive(Debug, Clone, Copy)]
pub(crate) struct IndexMap {
    m: [[f64; 3]; 3],
    c: Vec3,
}

impl IndexMap {
    pub(crate) fn new(src: &GridGeometry, xform: &Affine3, out: &GridGeometry) -> Result<Self> {
        let inv = xform.inverse()?;
        let mut m = [[0.0; 3]; 3];
        let mut c = [0.0; 3];
        for r in 0..3 {
            for k in 0..3 {
                m[r][k] = inv.linear[r][k] * out.spacing[k] / src.spacing[r];
            }
            let w = inv.linear[r][0] * out.origin[0]
                + inv.linear[r][1] * out.origin[1]
                + inv.linear[r][2] * out.origin[2]
                + inv.translation[r];
            c[r] = (w - src.origin[r]) / src.spacing[r];
        }
        Ok(Self { m, c })
    }

    #[inline]
    pub(crate) fn apply(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let (x, y, z) = (i as f64, j as f64, k as f64);
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = snap(self.m[r][0] * x + self.m[r][1] * y + self.m[r][2] * z + self.c[r]);
        }
        out
    }
}

fn resample_with<T: Copy, U: Copy>(
    src: &Grid<T>,
    xform: &Affine3,
    out: &GridGeometry,
    sample: impl Fn(&Grid<T>, Vec3) -> U,
) -> Result<Grid<U>> {
    let map = IndexMap::new(src.geometry(), xform, out)?;
    let [nx, ny, nz] = out.dims;
    let mut data = Vec::with_capacity(out.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                data.push(sample(src, map.apply(i, j, k)));
            }
        }
    }
    Ok(Grid { geometry: *out, data })
}

/// Resamples `v` onto `out`. `xform` maps source world coordinates to
/// output world coordinates; each output voxel centre is pulled back
/// through its inverse and interpolated. Samples outside the source are 0.
pub fn resample(v: &Volume, xform: &RigidTransform, out: &GridGeometry, mode: Interpolation) -> Result<Volume> {
    resample_affine(v, &xform.to_affine(), out, mode)
}

pub fn resample_affine(v: &Volume, xform: &Affine3, out: &GridGeometry, mode: Interpolation) -> Result<Volume> {
    match mode {
        Interpolation::Trilinear => resample_with(v, xform, out, sample_trilinear),
        Interpolation::Nearest => resample_with(v, xform, out, sample_nearest),
    }
}

/// Nearest-neighbour resampling for label-like grids (labels, masks).
pub fn resample_nearest<T: Copy + Default>(v: &Grid<T>, xform: &Affine3, out: &GridGeometry) -> Result<Grid<T>> {
    resample_with(v, xform, out, sample_nearest)
}
