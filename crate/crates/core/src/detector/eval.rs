use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::{iou, Box3};
use crate::error::bail;
use crate::geometry::Vec3;
use crate::Result;

/// Cell size used to rasterize box unions for the overlap ratio.
pub const OVERLAP_GRID_MM: f64 = 0.1;

/// Fraction of `a` covered by the union of `neighbors`.
pub fn overlap_ratio(a: &Box3, neighbors: &[Box3]) -> f64 {
    overlap_ratio_with_resolution(a, neighbors, OVERLAP_GRID_MM)
}

/// [`overlap_ratio`] with the union rasterized on cells of roughly
/// `resolution_mm`; `a` is split into an integer number of equal cells per
/// axis and a cell counts as covered when its centre lies in some
/// neighbour (faces half-open: `min <= c < max`).
pub fn overlap_ratio_with_resolution(a: &Box3, neighbors: &[Box3], resolution_mm: f64) -> f64 {
    let size = a.size();
    let mut n = [0usize; 3];
    let mut h = [0.0; 3];
    for ax in 0..3 {
        n[ax] = (Float::round(size[ax] / resolution_mm) as usize).max(1);
        h[ax] = size[ax] / n[ax] as f64;
    }
    let mut covered = vec![false; n[0] * n[1] * n[2]];
    for nb in neighbors {
        if a.intersection_volume(nb) == 0.0 {
            continue;
        }
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for ax in 0..3 {
            let first = Float::ceil((nb.min[ax] - a.min[ax]) / h[ax] - 0.5).max(0.0);
            let end = Float::ceil((nb.max[ax] - a.min[ax]) / h[ax] - 0.5).min(n[ax] as f64);
            if end <= first {
                empty = true;
                break;
            }
            lo[ax] = first as usize;
            hi[ax] = end as usize;
        }
        if empty {
            continue;
        }
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let row = n[0] * (j + n[1] * k);
                covered[row + lo[0]..row + hi[0]].iter_mut().for_each(|c| *c = true);
            }
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64
}

/// Mean over boxes of the overlap ratio against all other boxes.
pub fn mean_overlap_ratio(boxes: &[Box3]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, b) in boxes.iter().enumerate() {
        let others: Vec<Box3> = boxes.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, o)| *o).collect();
        acc += overlap_ratio(b, &others);
    }
    acc / boxes.len() as f64
}

/// Fraction of the object's voxel centres that fall inside `detected`.
pub fn object_include_ratio(object_voxels: &[Vec3], detected: &Box3) -> Result<f64> {
    if object_voxels.is_empty() {
        bail!(EmptyRegion, "object has no foreground voxels");
    }
    let inside = object_voxels.iter().filter(|&&p| detected.contains_point(p)).count();
    Ok(inside as f64 / object_voxels.len() as f64)
}

/// Class-agnostic average precision at IoU 0.5.
///
/// Predictions are visited by descending score (ties by input order) and
/// greedily matched one-to-one to the unmatched ground-truth box of highest
/// IoU; the precision–recall curve is integrated with all-point
/// interpolation. Returns 0 when either list is empty.
pub fn average_precision_50(gt: &[Box3], pred: &[Box3]) -> f64 {
    if gt.is_empty() || pred.is_empty() {
        return 0.0;
    }
    let score = |i: usize| pred[i].score.unwrap_or(0.0);
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap_or(core::cmp::Ordering::Equal));

    let mut matched = vec![false; gt.len()];
    let mut precision = Vec::with_capacity(pred.len());
    let mut recall = Vec::with_capacity(pred.len());
    let mut tp = 0usize;
    for (rank, &p) in order.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if matched[g] {
                continue;
            }
            let v = iou(&pred[p], gbox);
            if v >= 0.5 && best.map_or(true, |(bv, _)| v > bv) {
                best = Some((v, g));
            }
        }
        if let Some((_, g)) = best {
            matched[g] = true;
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / gt.len() as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(min: Vec3, max: Vec3) -> Box3 {
        Box3::new(min, max).unwrap()
    }

    #[test]
    fn overlap_ratio_examples() {
        let a = b([0.0; 3], [2.0; 3]);
        assert_eq!(overlap_ratio(&a, &[b([5.0; 3], [6.0; 3])]), 0.0);
        assert_eq!(overlap_ratio(&a, &[a]), 1.0);
        let half = b([1.0, 0.0, 0.0], [3.0, 2.0, 2.0]);
        assert!((overlap_ratio(&a, &[half]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_ratio_counts_union_once() {
        let a = b([0.0; 3], [2.0; 3]);
        let n1 = b([1.0, 0.0, 0.0], [3.0, 2.0, 2.0]);
        let n2 = b([1.5, 0.0, 0.0], [3.0, 2.0, 2.0]);
        assert!((overlap_ratio(&a, &[n1, n2]) - 0.5).abs() < 1e-12);
        let n3 = b([-1.0, 0.0, 0.0], [0.5, 2.0, 1.0]);
        // 0.5 + 0.25 * 0.5
        assert!((overlap_ratio(&a, &[n1, n3]) - 0.625).abs() < 1e-12);
    }

    #[test]
    fn include_ratio_examples() {
        let pts: Vec<Vec3> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert_eq!(object_include_ratio(&pts, &b([-1.0; 3], [20.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(object_include_ratio(&pts, &b([50.0; 3], [60.0; 3])).unwrap(), 0.0);
        assert_eq!(object_include_ratio(&pts, &b([-0.5, -1.0, -1.0], [4.5, 1.0, 1.0])).unwrap(), 0.5);
        assert!(object_include_ratio(&[], &b([0.0; 3], [1.0; 3])).is_err());
    }

    #[test]
    fn ap_trivial_cases() {
        let gt = vec![b([0.0; 3], [1.0; 3]), b([5.0; 3], [6.0; 3])];
        let pred: Vec<Box3> = gt.iter().enumerate().map(|(i, g)| g.with_score(0.1 * i as f64)).collect();
        assert_eq!(average_precision_50(&gt, &pred), 1.0);
        assert_eq!(average_precision_50(&gt, &[]), 0.0);
    }

    #[test]
    fn ap_hand_computed_table() {
        // gt: G0, G1, G2. Predictions by score:
        //  p0 0.9 -> G0 (TP)   P=1     R=1/3
        //  p1 0.8 -> miss (FP) P=1/2   R=1/3
        //  p2 0.7 -> G1 (TP)   P=2/3   R=2/3
        //  p3 0.6 -> G0 again (FP, already matched) P=1/2 R=2/3
        // envelope: 1, 2/3, 2/3, 1/2 ; AP = 1/3 * 1 + 1/3 * 2/3 = 5/9
        let g0 = b([0.0; 3], [2.0; 3]);
        let g1 = b([10.0; 3], [12.0; 3]);
        let g2 = b([20.0; 3], [22.0; 3]);
        let preds = vec![
            g0.with_score(0.9),
            b([30.0; 3], [32.0; 3]).with_score(0.8),
            b([10.0, 10.0, 10.2], [12.0, 12.0, 12.2]).with_score(0.7),
            b([0.1, 0.0, 0.0], [2.1, 2.0, 2.0]).with_score(0.6),
        ];
        let ap = average_precision_50(&[g0, g1, g2], &preds);
        assert!((ap - 5.0 / 9.0).abs() < 1e-12, "{ap}");
    }
}
