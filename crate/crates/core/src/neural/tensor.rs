use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::volume::{GridGeometry, Volume};
use crate::Result;

/// Dense `f64` tensor of shape `[N, C, X, Y, Z]`, x fastest. Parameters use
/// the same layout (e.g. conv weights are `[Cout, Cin/groups, Kx, Ky, Kz]`,
/// per-channel vectors are `[1, C, 1, 1, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 5],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 5]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: [usize; 5], v: f64) -> Self {
        Self { shape, data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 5], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            bail!(ShapeMismatch, "shape {shape:?} needs {n} values, got {}", data.len());
        }
        Ok(Self { shape, data })
    }

    /// Per-channel vector `[1, C, 1, 1, 1]`.
    pub fn channels(values: Vec<f64>) -> Self {
        Self { shape: [1, values.len(), 1, 1, 1], data: values }
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    pub fn voxels(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    /// Contiguous `X*Y*Z` slice of sample `n`, channel `c`.
    pub fn slice(&self, n: usize, c: usize) -> &[f64] {
        let v = self.voxels();
        let o = (n * self.shape[1] + c) * v;
        &self.data[o..o + v]
    }

    pub fn slice_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let v = self.voxels();
        let o = (n * self.shape[1] + c) * v;
        &mut self.data[o..o + v]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Single-sample, single-channel tensor from a volume.
    pub fn from_volume(v: &Volume) -> Self {
        let [x, y, z] = v.dims();
        Self { shape: [1, 1, x, y, z], data: v.data().iter().map(|&a| a as f64).collect() }
    }

    /// Channel `c` of sample 0 as a volume on `geometry`.
    pub fn to_volume(&self, c: usize, geometry: GridGeometry) -> Result<Volume> {
        if geometry.dims != self.spatial() {
            bail!(ShapeMismatch, "tensor spatial dims {:?} vs grid {:?}", self.spatial(), geometry.dims);
        }
        Volume::from_vec(geometry, self.slice(0, c).iter().map(|&a| a as f32).collect())
    }
}
