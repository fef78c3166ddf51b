use alloc::vec::Vec;

use super::{iou, Box3};

/// Greedy non-maximum suppression.
///
/// Boxes are visited by descending score (ties by input order); a box is
/// kept when its IoU with every already-kept box is at most
/// `iou_threshold`. Output is in visiting order. Missing scores count as 0.
pub fn nms(boxes: &[Box3], iou_threshold: f64) -> Vec<Box3> {
    nms_indices(boxes, iou_threshold).into_iter().map(|i| boxes[i]).collect()
}

pub(crate) fn nms_indices(boxes: &[Box3], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    let score = |i: usize| boxes[i].score.unwrap_or(0.0);
    // stable sort keeps input order among equal scores
    order.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap_or(core::cmp::Ordering::Equal));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}
