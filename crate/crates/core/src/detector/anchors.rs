use alloc::vec::Vec;

use rand::seq::index;

use super::nms::nms_indices;
use super::{assign_group, iou, Box3, ToothGroup};
use crate::error::bail;
use crate::geometry::Vec3;
use crate::rng;
use crate::Result;

/// Regular grid of axis-aligned anchors: one anchor per base size at every
/// stride step whose centre lies inside `extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    pub base_sizes_mm: Vec<Vec3>,
    pub stride_mm: Vec3,
    pub extent: Box3,
}

impl AnchorGrid {
    /// Cubes of 6, 8 and 11 mm.
    pub fn default_sizes() -> Vec<Vec3> {
        alloc::vec![[6.0; 3], [8.0; 3], [11.0; 3]]
    }

    pub fn new(base_sizes_mm: Vec<Vec3>, stride_mm: Vec3, extent: Box3) -> Result<Self> {
        if stride_mm.iter().any(|&s| !(s > 0.0)) {
            bail!(InvalidArgument, "anchor strides must be > 0, got {stride_mm:?}");
        }
        if base_sizes_mm.iter().flatten().any(|&s| !(s > 0.0)) {
            bail!(InvalidArgument, "anchor sizes must be > 0");
        }
        Ok(Self { base_sizes_mm, stride_mm, extent })
    }

    pub fn centers(&self) -> Vec<Vec3> {
        let axis = |a: usize| -> Vec<f64> {
            let mut out = Vec::new();
            let mut c = self.extent.min[a] + 0.5 * self.stride_mm[a];
            while c < self.extent.max[a] {
                out.push(c);
                c += self.stride_mm[a];
            }
            out
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    pub fn generate(&self) -> Vec<Box3> {
        let mut out = Vec::new();
        for c in self.centers() {
            for s in &self.base_sizes_mm {
                let min = [c[0] - 0.5 * s[0], c[1] - 0.5 * s[1], c[2] - 0.5 * s[2]];
                let max = [c[0] + 0.5 * s[0], c[1] + 0.5 * s[1], c[2] + 0.5 * s[2]];
                out.push(Box3 { min, max, tooth_id: None, group: None, score: None });
            }
        }
        out
    }
}

/// Thresholds and budgets for RPN target sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub t_pos: f64,
    pub t_neg: f64,
    pub nms_iou: f64,
    pub max_pos: usize,
    pub max_neg: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { t_pos: 0.5, t_neg: 0.1, nms_iou: 0.3, max_pos: 32, max_neg: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveSample {
    pub anchor: usize,
    pub gt: usize,
    pub iou: f64,
    pub group: ToothGroup,
    /// Added because no NMS-surviving anchor represented this gt box. Forced
    /// samples are exempt from the pairwise-IoU bound.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RpnTargets {
    pub positives: Vec<PositiveSample>,
    pub negatives: Vec<usize>,
}

impl RpnTargets {
    pub fn group_labels(&self) -> Vec<ToothGroup> {
        self.positives.iter().map(|p| p.group).collect()
    }
}

fn gt_group(gt: &Box3) -> ToothGroup {
    gt.group.or_else(|| gt.tooth_id.and_then(|id| assign_group(id, false).ok())).unwrap_or(ToothGroup::Others)
}

/// NMS-based true-example mining for RPN classifier targets.
///
/// Anchors whose best IoU against the ground truth reaches `t_pos` become
/// candidates scored by that IoU; NMS at `nms_iou` thins them and the
/// survivors are truncated to `max_pos`. Any gt box left without a positive
/// gets its single best-IoU anchor forced in. Negatives are drawn uniformly
/// without replacement (seeded) from anchors whose best IoU is at most
/// `t_neg`.
pub fn sample_rpn_targets(anchors: &[Box3], gt: &[Box3], cfg: &SamplerConfig) -> Result<RpnTargets> {
    if !(0.0 <= cfg.t_neg && cfg.t_neg < cfg.t_pos && cfg.t_pos <= 1.0) {
        bail!(InvalidArgument, "need 0 <= t_neg < t_pos <= 1, got {} / {}", cfg.t_neg, cfg.t_pos);
    }
    // best gt per anchor, ties to the lower gt index
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(anchors.len());
    for a in anchors {
        let mut b = (0.0, usize::MAX);
        for (g, gbox) in gt.iter().enumerate() {
            let v = iou(a, gbox);
            if v > b.0 {
                b = (v, g);
            }
        }
        best.push(b);
    }

    let candidates: Vec<usize> = (0..anchors.len()).filter(|&i| best[i].0 >= cfg.t_pos).collect();
    let scored: Vec<Box3> = candidates.iter().map(|&i| anchors[i].with_score(best[i].0)).collect();
    let mut kept: Vec<usize> = nms_indices(&scored, cfg.nms_iou).into_iter().map(|c| candidates[c]).collect();
    kept.truncate(cfg.max_pos);

    let mut positives: Vec<PositiveSample> = kept
        .iter()
        .map(|&a| PositiveSample {
            anchor: a,
            gt: best[a].1,
            iou: best[a].0,
            group: gt_group(&gt[best[a].1]),
            forced: false,
        })
        .collect();

    for (g, gbox) in gt.iter().enumerate() {
        if positives.iter().any(|p| p.gt == g) {
            continue;
        }
        let mut pick: Option<(f64, usize)> = None;
        for (a, abox) in anchors.iter().enumerate() {
            if positives.iter().any(|p| p.anchor == a) {
                continue;
            }
            let v = iou(abox, gbox);
            if pick.map_or(true, |(pv, _)| v > pv) {
                pick = Some((v, a));
            }
        }
        if let Some((v, a)) = pick {
            positives.push(PositiveSample { anchor: a, gt: g, iou: v, group: gt_group(gbox), forced: true });
        }
    }

    let pool: Vec<usize> =
        (0..anchors.len()).filter(|&i| best[i].0 <= cfg.t_neg && !positives.iter().any(|p| p.anchor == i)).collect();
    let take = cfg.max_neg.min(pool.len());
    let mut r = rng::seeded(cfg.seed);
    let negatives = index::sample(&mut r, pool.len(), take).into_iter().map(|k| pool[k]).collect();

    Ok(RpnTargets { positives, negatives })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(c: Vec3, s: f64) -> Box3 {
        Box3::new([c[0] - s / 2.0, c[1] - s / 2.0, c[2] - s / 2.0], [c[0] + s / 2.0, c[1] + s / 2.0, c[2] + s / 2.0])
            .unwrap()
    }

    #[test]
    fn coinciding_anchor_is_sole_positive() {
        let anchors = alloc::vec![cube([0.0; 3], 2.0), cube([10.0; 3], 2.0), cube([20.0; 3], 2.0)];
        let gt = alloc::vec![cube([10.0; 3], 2.0).with_tooth(11, ToothGroup::OneRooted)];
        let t = sample_rpn_targets(&anchors, &gt, &SamplerConfig::default()).unwrap();
        assert_eq!(t.positives.len(), 1);
        assert_eq!(t.positives[0].anchor, 1);
        assert!(!t.positives[0].forced);
        assert_eq!(t.group_labels(), alloc::vec![ToothGroup::OneRooted]);
        let mut neg = t.negatives.clone();
        neg.sort();
        assert_eq!(neg, alloc::vec![0, 2]);
    }

    #[test]
    fn disjoint_anchors_force_one_per_gt() {
        let anchors = alloc::vec![cube([0.0; 3], 1.0), cube([5.0; 3], 1.0)];
        let gt = alloc::vec![cube([50.0; 3], 2.0), cube([-50.0; 3], 2.0)];
        let t = sample_rpn_targets(&anchors, &gt, &SamplerConfig::default()).unwrap();
        assert_eq!(t.positives.len(), 2);
        assert!(t.positives.iter().all(|p| p.forced));
        assert_eq!(t.positives[0].gt, 0);
        assert_eq!(t.positives[1].gt, 1);
        assert_ne!(t.positives[0].anchor, t.positives[1].anchor);
    }

    #[test]
    fn empty_gt_samples_only_negatives() {
        let anchors: Vec<Box3> = (0..10).map(|i| cube([i as f64 * 3.0, 0.0, 0.0], 1.0)).collect();
        let cfg = SamplerConfig { max_neg: 4, ..SamplerConfig::default() };
        let t = sample_rpn_targets(&anchors, &[], &cfg).unwrap();
        assert!(t.positives.is_empty());
        assert_eq!(t.negatives.len(), 4);
        let again = sample_rpn_targets(&anchors, &[], &cfg).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let cfg = SamplerConfig { t_pos: 0.1, t_neg: 0.5, ..SamplerConfig::default() };
        assert!(sample_rpn_targets(&[], &[], &cfg).is_err());
    }

    #[test]
    fn anchor_centres_inside_extent() {
        let extent = Box3::new([0.0; 3], [10.0, 7.0, 5.0]).unwrap();
        let grid = AnchorGrid::new(AnchorGrid::default_sizes(), [2.0; 3], extent).unwrap();
        let anchors = grid.generate();
        assert_eq!(anchors.len(), 5 * 3 * 2 * 3);
        for a in &anchors {
            assert!(extent.contains_point(a.center()));
        }
    }
}
