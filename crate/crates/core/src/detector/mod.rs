//! Box algebra and detection post-processing: IoU, greedy NMS, NMS-based
//! anchor sampling for region-proposal training targets, anatomical tooth
//! grouping, margin dilation, and the box-level evaluation measures
//! (overlap ratio, object-include ratio, AP50).

mod anchors;
mod eval;
mod nms;

pub use anchors::{sample_rpn_targets, AnchorGrid, PositiveSample, RpnTargets, SamplerConfig};
pub use eval::{
    average_precision_50, mean_overlap_ratio, object_include_ratio, overlap_ratio, overlap_ratio_with_resolution,
    OVERLAP_GRID_MM,
};
pub use nms::nms;

use crate::error::bail;
use crate::geometry::Vec3;
use crate::Result;

/// Anatomical detection class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ToothGroup {
    Metal,
    /// Incisors and canines: FDI positions 1–3 in every quadrant.
    OneRooted,
    Others,
}

/// Axis-aligned box in world millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub min: Vec3,
    pub max: Vec3,
    pub tooth_id: Option<u8>,
    pub group: Option<ToothGroup>,
    pub score: Option<f64>,
}

impl Box3 {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        for a in 0..3 {
            if !(min[a] < max[a]) || !min[a].is_finite() || !max[a].is_finite() {
                bail!(InvalidArgument, "box needs finite min < max, got {min:?} / {max:?}");
            }
        }
        Ok(Self { min, max, tooth_id: None, group: None, score: None })
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_tooth(mut self, tooth_id: u8, group: ToothGroup) -> Self {
        self.tooth_id = Some(tooth_id);
        self.group = Some(group);
        self
    }

    pub fn size(&self) -> Vec3 {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn center(&self) -> Vec3 {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]), 0.5 * (self.min[2] + self.max[2])]
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s[0] * s[1] * s[2]
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] && other.max[a] <= self.max[a])
    }

    /// Volume of the intersection (0 when disjoint or touching).
    pub fn intersection_volume(&self, other: &Box3) -> f64 {
        let mut v = 1.0;
        for a in 0..3 {
            let lo = self.min[a].max(other.min[a]);
            let hi = self.max[a].min(other.max[a]);
            if hi <= lo {
                return 0.0;
            }
            v *= hi - lo;
        }
        v
    }

    /// Intersection box, `None` when it has no volume.
    pub fn intersection(&self, other: &Box3) -> Option<Box3> {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            min[a] = self.min[a].max(other.min[a]);
            max[a] = self.max[a].min(other.max[a]);
            if max[a] <= min[a] {
                return None;
            }
        }
        Some(Box3 { min, max, ..*self })
    }
}

/// Intersection over union, symmetric and in `[0, 1]`.
pub fn iou(a: &Box3, b: &Box3) -> f64 {
    let inter = a.intersection_volume(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Anatomical group of an FDI tooth code. Metal restorations override
/// anatomy.
pub fn assign_group(tooth_id: u8, is_metal: bool) -> Result<ToothGroup> {
    let quadrant = tooth_id / 10;
    let position = tooth_id % 10;
    if !(1..=4).contains(&quadrant) || !(1..=8).contains(&position) {
        bail!(InvalidArgument, "{tooth_id} is not a permanent-dentition FDI code");
    }
    Ok(if is_metal {
        ToothGroup::Metal
    } else if position <= 3 {
        ToothGroup::OneRooted
    } else {
        ToothGroup::Others
    })
}

/// Grows every face by `margin_mm`, then clamps to `bounds`.
pub fn dilate(b: &Box3, margin_mm: f64, bounds: &Box3) -> Result<Box3> {
    if !(margin_mm >= 0.0) {
        bail!(InvalidArgument, "margin must be >= 0, got {margin_mm}");
    }
    let mut out = *b;
    for a in 0..3 {
        out.min[a] = (b.min[a] - margin_mm).max(bounds.min[a]);
        out.max[a] = (b.max[a] + margin_mm).min(bounds.max[a]);
        if !(out.min[a] < out.max[a]) {
            bail!(EmptyRegion, "dilated box {b:?} does not intersect bounds {bounds:?}");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_at(x: f64) -> Box3 {
        Box3::new([x, 0.0, 0.0], [x + 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = unit_at(0.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &unit_at(3.0)), 0.0);
        assert!((iou(&a, &unit_at(0.5)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &unit_at(0.5)), iou(&unit_at(0.5), &a));
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(Box3::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
        assert!(Box3::new([0.0; 3], [f64::NAN, 1.0, 1.0]).is_err());
    }

    #[test]
    fn grouping() {
        assert_eq!(assign_group(12, false).unwrap(), ToothGroup::OneRooted);
        for id in [11, 13, 21, 23, 31, 33, 41, 43] {
            assert_eq!(assign_group(id, false).unwrap(), ToothGroup::OneRooted);
        }
        assert_eq!(assign_group(16, false).unwrap(), ToothGroup::Others);
        assert_eq!(assign_group(48, false).unwrap(), ToothGroup::Others);
        assert_eq!(assign_group(33, true).unwrap(), ToothGroup::Metal);
        for bad in [0, 10, 19, 50, 55, 9] {
            assert!(assign_group(bad, false).is_err());
        }
    }

    #[test]
    fn dilation() {
        let loose = Box3::new([-100.0; 3], [100.0; 3]).unwrap();
        let u = Box3::new([0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(dilate(&u, 0.0, &loose).unwrap(), u);
        let d = dilate(&u, 2.0, &loose).unwrap();
        assert_eq!((d.min, d.max), ([-2.0; 3], [3.0; 3]));
        let bounds = Box3::new([0.0; 3], [10.0; 3]).unwrap();
        let corner = Box3::new([0.0; 3], [1.5; 3]).unwrap();
        let c = dilate(&corner, 2.0, &bounds).unwrap();
        for a in 0..3 {
            assert_eq!(c.min[a], corner.min[a].max(bounds.min[a]));
            assert_eq!(c.max[a], (corner.max[a] + 2.0).min(bounds.max[a]));
        }
        assert!(c.contains_box(&corner));
        assert!(dilate(&u, -1.0, &loose).is_err());
    }
}
