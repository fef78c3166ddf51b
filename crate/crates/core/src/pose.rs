//! Jaw pose loss and pose-aware volume-of-interest extraction.
//!
//! A pose is a point and a line angle on the x-axis maximum intensity
//! projection (image axes `u = y`, `v = z`). The angle is measured in world
//! millimetres from `+y` towards `+z`. Realignment rotates the volume about
//! `x` so that the line becomes the VOI's `y` axis and the line normal its
//! `z` axis, then crops a slab that reaches `depth_mm` into the jaw and
//! `margin_mm` past the line on the other side. In every VOI the roots
//! point towards `+z`.

use alloc::vec::Vec;
use num_traits::Float;

use crate::detector::Box3;
use crate::error::bail;
use crate::geometry::{mat_mul, mat_vec, rot_x, sub, transpose, Affine3, RigidTransform, Vec3};
use crate::volume::{resample_affine, resample_nearest, GridGeometry, Interpolation, LabelMap, Volume};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Jaw {
    Upper,
    Lower,
}

impl Jaw {
    pub fn as_str(self) -> &'static str {
        match self {
            Jaw::Upper => "upper",
            Jaw::Lower => "lower",
        }
    }
}

/// A point `(u, v)` in projection pixels and a line angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub point: [f64; 2],
    pub angle_deg: f64,
    pub jaw: Jaw,
}

impl PoseEstimate {
    pub fn new(point: [f64; 2], angle_deg: f64, jaw: Jaw) -> Result<Self> {
        if !(angle_deg > -90.0 && angle_deg <= 90.0) {
            bail!(InvalidArgument, "pose angle must lie in (-90, 90], got {angle_deg}");
        }
        if point.iter().any(|c| !c.is_finite()) {
            bail!(NonFinite, "pose point {point:?}");
        }
        Ok(Self { point, angle_deg, jaw })
    }

    /// Pose whose point is given in world `(y, z)` millimetres.
    pub fn from_world(yz: [f64; 2], angle_deg: f64, jaw: Jaw, geometry: &GridGeometry) -> Result<Self> {
        let u = (yz[0] - geometry.origin[1]) / geometry.spacing[1];
        let v = (yz[1] - geometry.origin[2]) / geometry.spacing[2];
        Self::new([u, v], angle_deg, jaw)
    }

    /// World `(y, z)` of the point for a volume with `geometry`.
    pub fn world_point(&self, geometry: &GridGeometry) -> [f64; 2] {
        [
            geometry.origin[1] + self.point[0] * geometry.spacing[1],
            geometry.origin[2] + self.point[1] * geometry.spacing[2],
        ]
    }

    fn check_bounds(&self, geometry: &GridGeometry) -> Result<()> {
        let [_, ny, nz] = geometry.dims;
        let [u, v] = self.point;
        if !(u >= -0.5 && u <= ny as f64 - 0.5 && v >= -0.5 && v <= nz as f64 - 0.5) {
            bail!(InvalidArgument, "pose point {:?} lies outside the {ny}x{nz} projection", self.point);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLossParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PoseLossParams {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.1 }
    }
}

/// `Σ‖p − y‖₂ + α Σ|θ − φ| + β ‖W‖²` over index-paired poses. Point terms
/// are plain Euclidean distances in pixels, angle terms in degrees.
pub fn pose_loss(
    truth: &[PoseEstimate],
    pred: &[PoseEstimate],
    params: &PoseLossParams,
    weight_norm_sq: f64,
) -> Result<f64> {
    if truth.len() != pred.len() {
        bail!(ShapeMismatch, "{} ground-truth poses vs {} predictions", truth.len(), pred.len());
    }
    if params.alpha < 0.0 || params.beta < 0.0 {
        bail!(InvalidArgument, "loss weights must be >= 0");
    }
    let mut points = 0.0;
    let mut angles = 0.0;
    for (t, p) in truth.iter().zip(pred) {
        let du = t.point[0] - p.point[0];
        let dv = t.point[1] - p.point[1];
        points += Float::sqrt(du * du + dv * dv);
        angles += (t.angle_deg - p.angle_deg).abs();
    }
    Ok(points + params.alpha * angles + params.beta * weight_norm_sq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiSpec {
    pub depth_mm: f64,
    pub margin_mm: f64,
    pub out_dims: [usize; 3],
}

impl Default for VoiSpec {
    fn default() -> Self {
        Self { depth_mm: 12.0, margin_mm: 2.0, out_dims: [224, 224, 112] }
    }
}

impl VoiSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_mm > 0.0) || !(self.margin_mm >= 0.0) {
            bail!(InvalidArgument, "need depth > 0 and margin >= 0, got {} / {}", self.depth_mm, self.margin_mm);
        }
        if self.out_dims.contains(&0) {
            bail!(InvalidArgument, "VOI dims must be >= 1, got {:?}", self.out_dims);
        }
        Ok(())
    }
}

/// Placement of a VOI relative to its source volume.
///
/// `rigid` maps source world coordinates to VOI coordinates before the
/// optional `y` mirror applied to lower-jaw VOIs; [`VoiFrame::to_voi`] is
/// the full (possibly improper) map onto `geometry`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiFrame {
    pub rigid: RigidTransform,
    pub geometry: GridGeometry,
    pub flipped_y: bool,
    pub jaw: Jaw,
}

impl VoiFrame {
    pub fn to_voi(&self) -> Affine3 {
        let r = self.rigid.to_affine();
        if !self.flipped_y {
            return r;
        }
        let c = 0.5 * (self.geometry.extent_min()[1] + self.geometry.extent_max()[1]);
        let mirror =
            Affine3 { linear: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0, 2.0 * c, 0.0] };
        mirror.compose(&r)
    }

    pub fn to_source(&self) -> Result<Affine3> {
        self.to_voi().inverse()
    }

    /// Axis-aligned hull of a source-space box mapped into the VOI.
    pub fn map_box(&self, b: &Box3) -> Box3 {
        let m = self.to_voi();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for corner in 0..8 {
            let p = [
                if corner & 1 == 0 { b.min[0] } else { b.max[0] },
                if corner & 2 == 0 { b.min[1] } else { b.max[1] },
                if corner & 4 == 0 { b.min[2] } else { b.max[2] },
            ];
            let q = m.apply(p);
            for a in 0..3 {
                lo[a] = lo[a].min(q[a]);
                hi[a] = hi[a].max(q[a]);
            }
        }
        Box3 { min: lo, max: hi, ..*b }
    }
}

/// Builds the VOI placement for `pose` on a volume with geometry `source`.
pub fn voi_frame(source: &GridGeometry, pose: &PoseEstimate, spec: &VoiSpec) -> Result<VoiFrame> {
    spec.validate()?;
    pose.check_bounds(source)?;
    let [yp, zp] = pose.world_point(source);
    let anchor: Vec3 = [0.0, yp, zp];
    let rot = match pose.jaw {
        Jaw::Upper => rot_x(pose.angle_deg),
        Jaw::Lower => mat_mul(&rot_x(pose.angle_deg), &rot_x(180.0)),
    };
    let rt = transpose(&rot);
    let t = mat_vec(&rt, anchor);
    let rigid = RigidTransform::new(rt, [-t[0], -t[1], -t[2]])?;

    let smin = source.extent_min();
    let smax = source.extent_max();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let p = [
            if corner & 1 == 0 { smin[0] } else { smax[0] },
            if corner & 2 == 0 { smin[1] } else { smax[1] },
            if corner & 4 == 0 { smin[2] } else { smax[2] },
        ];
        let q = mat_vec(&rt, sub(p, anchor));
        for a in 0..3 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    if hi[2] <= -spec.margin_mm || lo[2] >= spec.depth_mm {
        bail!(EmptyRegion, "VOI slab [{}, {}] mm misses the volume", -spec.margin_mm, spec.depth_mm);
    }
    let geometry =
        GridGeometry::from_extent([lo[0], lo[1], -spec.margin_mm], [hi[0], hi[1], spec.depth_mm], spec.out_dims)?;
    Ok(VoiFrame { rigid, geometry, flipped_y: pose.jaw == Jaw::Lower, jaw: pose.jaw })
}

/// Rotates, crops and resamples (trilinear) the jaw VOI selected by `pose`.
pub fn realign_voi(v: &Volume, pose: &PoseEstimate, spec: &VoiSpec) -> Result<(Volume, VoiFrame)> {
    let frame = voi_frame(v.geometry(), pose, spec)?;
    let out = resample_affine(v, &frame.to_voi(), &frame.geometry, Interpolation::Trilinear)?;
    Ok((out, frame))
}

/// Nearest-neighbour label resampling under `xform` (source world to
/// output world) onto `out`.
pub fn apply_to_labels(labels: &LabelMap, xform: &Affine3, out: &GridGeometry) -> Result<LabelMap> {
    resample_nearest(labels, xform, out)
}

/// Per-jaw tight boxes of every label in `labels`, in its world frame.
pub fn label_boxes(labels: &LabelMap) -> Vec<(u16, Box3)> {
    let g = labels.geometry();
    let mut out: Vec<(u16, [usize; 3], [usize; 3])> = Vec::new();
    for (idx, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = g.coords(idx);
        match out.iter_mut().find(|e| e.0 == l) {
            Some(e) => {
                for a in 0..3 {
                    e.1[a] = e.1[a].min(c[a]);
                    e.2[a] = e.2[a].max(c[a]);
                }
            }
            None => out.push((l, c, c)),
        }
    }
    out.sort_by_key(|e| e.0);
    out.into_iter()
        .map(|(l, lo, hi)| {
            let mut min = [0.0; 3];
            let mut max = [0.0; 3];
            for a in 0..3 {
                min[a] = g.origin[a] + (lo[a] as f64 - 0.5) * g.spacing[a];
                max[a] = g.origin[a] + (hi[a] as f64 + 0.5) * g.spacing[a];
            }
            (l, Box3 { min, max, tooth_id: u8::try_from(l).ok(), group: None, score: None })
        })
        .collect()
}

/// Boxes of every label after mapping its source voxel centres through
/// `xform`, without resampling. The hull of the mapped centres is padded
/// per axis by the mapped half-voxel axes added in quadrature, which gives
/// exactly [`label_boxes`] under the identity.
pub fn map_label_boxes(labels: &LabelMap, xform: &Affine3) -> Vec<(u16, Box3)> {
    let g = labels.geometry();
    let pad = [0, 1, 2]
        .map(|a| 0.5 * Float::sqrt((0..3).map(|b| Float::powi(xform.linear[a][b] * g.spacing[b], 2)).sum::<f64>()));
    let mut acc: Vec<(u16, Vec3, Vec3)> = Vec::new();
    for (idx, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = g.coords(idx);
        let q = xform.apply(g.world(c[0], c[1], c[2]));
        match acc.iter_mut().find(|e| e.0 == l) {
            Some(e) => {
                for a in 0..3 {
                    e.1[a] = e.1[a].min(q[a]);
                    e.2[a] = e.2[a].max(q[a]);
                }
            }
            None => acc.push((l, q, q)),
        }
    }
    acc.sort_by_key(|e| e.0);
    acc.into_iter()
        .map(|(l, lo, hi)| {
            let min = [0, 1, 2].map(|a| lo[a] - pad[a]);
            let max = [0, 1, 2].map(|a| hi[a] + pad[a]);
            (l, Box3 { min, max, tooth_id: u8::try_from(l).ok(), group: None, score: None })
        })
        .collect()
}
