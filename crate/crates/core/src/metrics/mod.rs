//! Segmentation evaluation: voxel overlap, aggregated Jaccard index and
//! surface distances in millimetres.

mod surface;

pub use surface::{assd, hausdorff, surface, surface_distances};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::bail;
use crate::volume::{BinaryMask, LabelMap};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_masks(gt: &BinaryMask, pred: &BinaryMask) -> Result<Self> {
        if gt.geometry() != pred.geometry() {
            bail!(ShapeMismatch, "masks live on different grids");
        }
        let mut c = Self::default();
        for (&g, &p) in gt.data().iter().zip(pred.data()) {
            match (g, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                _ => {}
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
}

/// Precision, sensitivity and their harmonic mean (the Dice coefficient).
pub fn f1(c: &ConfusionCounts) -> Result<F1Scores> {
    if c.tp + c.fp == 0 || c.tp + c.fn_ == 0 {
        bail!(EmptyRegion, "F1 is undefined without predicted and ground-truth foreground");
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let sensitivity = c.tp as f64 / (c.tp + c.fn_) as f64;
    let f1 = if c.tp == 0 { 0.0 } else { 2.0 * precision * sensitivity / (precision + sensitivity) };
    Ok(F1Scores { precision, sensitivity, f1 })
}

/// Instance sizes and pairwise intersections of two label maps.
#[derive(Debug, Clone, Default)]
struct Overlaps {
    gt: BTreeMap<u16, usize>,
    pred: BTreeMap<u16, usize>,
    inter: BTreeMap<(u16, u16), usize>,
}

fn overlaps(gt: &LabelMap, pred: &LabelMap) -> Result<Overlaps> {
    if gt.geometry() != pred.geometry() {
        bail!(ShapeMismatch, "label maps live on different grids");
    }
    let mut o = Overlaps::default();
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        if g != 0 {
            *o.gt.entry(g).or_default() += 1;
        }
        if p != 0 {
            *o.pred.entry(p).or_default() += 1;
        }
        if g != 0 && p != 0 {
            *o.inter.entry((g, p)).or_default() += 1;
        }
    }
    Ok(o)
}

/// One ground-truth instance and the prediction matched to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceMatch {
    pub gt: u16,
    pub pred: Option<u16>,
    pub intersection: usize,
    pub union: usize,
}

fn greedy_match(o: &Overlaps) -> Vec<InstanceMatch> {
    let mut used: Vec<u16> = Vec::new();
    let mut out = Vec::with_capacity(o.gt.len());
    for (&g, &gsize) in &o.gt {
        let mut best: Option<(f64, u16, usize, usize)> = None;
        for (&(gg, p), &i) in o.inter.range((g, 0)..=(g, u16::MAX)) {
            debug_assert_eq!(gg, g);
            if used.contains(&p) {
                continue;
            }
            let u = gsize + o.pred[&p] - i;
            let j = i as f64 / u as f64;
            // ascending label order, so strict '>' keeps the smaller label on ties
            if best.map_or(true, |(bj, ..)| j > bj) {
                best = Some((j, p, i, u));
            }
        }
        match best {
            Some((_, p, i, u)) => {
                used.push(p);
                out.push(InstanceMatch { gt: g, pred: Some(p), intersection: i, union: u });
            }
            None => out.push(InstanceMatch { gt: g, pred: None, intersection: 0, union: gsize }),
        }
    }
    out
}

/// Greedy one-to-one matching of ground-truth instances (ascending label)
/// to the unused prediction with the highest Jaccard index.
pub fn match_instances(gt: &LabelMap, pred: &LabelMap) -> Result<Vec<InstanceMatch>> {
    Ok(greedy_match(&overlaps(gt, pred)?))
}

/// Aggregated Jaccard index. Unmatched predictions are added to the
/// denominator; a ground-truth instance without any overlapping unused
/// prediction contributes only its own size. Two empty maps score 1.
pub fn aji(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    let o = overlaps(gt, pred)?;
    let matches = greedy_match(&o);
    let mut num = 0usize;
    let mut den = 0usize;
    for m in &matches {
        num += m.intersection;
        den += m.union;
    }
    for (&p, &size) in &o.pred {
        if !matches.iter().any(|m| m.pred == Some(p)) {
            den += size;
        }
    }
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; zeros for an empty sample.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: Float::sqrt(var) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceMetrics {
    pub gt: u16,
    pub pred: Option<u16>,
    pub f1: f64,
    pub hd_mm: Option<f64>,
    pub assd_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub per_instance: Vec<InstanceMetrics>,
    pub f1: MeanStd,
    pub hd_mm: MeanStd,
    pub assd_mm: MeanStd,
    pub aji: f64,
    /// Surface metrics on the union of all teeth.
    pub integrated_hd_mm: Option<f64>,
    pub integrated_assd_mm: Option<f64>,
}

/// Per-tooth F1, HD and ASSD under the AJI matching, plus aggregates. A
/// tooth without a matched prediction scores F1 = 0 and has no surface
/// metrics; HD and ASSD aggregates cover matched teeth only.
pub fn per_instance_report(gt: &LabelMap, pred: &LabelMap) -> Result<SegmentationReport> {
    let matches = match_instances(gt, pred)?;
    let mut per_instance = Vec::with_capacity(matches.len());
    for m in &matches {
        let Some(p) = m.pred else {
            per_instance.push(InstanceMetrics { gt: m.gt, pred: None, f1: 0.0, hd_mm: None, assd_mm: None });
            continue;
        };
        let (gm, pm) = (gt.mask_of(m.gt), pred.mask_of(p));
        let f = f1(&ConfusionCounts::from_masks(&gm, &pm)?)?.f1;
        let (ab, ba) = surface_distances(&gm, &pm)?;
        let hd = ab.iter().chain(&ba).fold(0.0, |acc: f64, &d| acc.max(d));
        let mean = (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64;
        per_instance.push(InstanceMetrics { gt: m.gt, pred: Some(p), f1: f, hd_mm: Some(hd), assd_mm: Some(mean) });
    }
    let f1s: Vec<f64> = per_instance.iter().map(|m| m.f1).collect();
    let hds: Vec<f64> = per_instance.iter().filter_map(|m| m.hd_mm).collect();
    let assds: Vec<f64> = per_instance.iter().filter_map(|m| m.assd_mm).collect();
    let (gu, pu) = (gt.map(|l| l != 0), pred.map(|l| l != 0));
    let (integrated_hd_mm, integrated_assd_mm) = if gu.count() > 0 && pu.count() > 0 {
        (Some(hausdorff(&gu, &pu)?), Some(assd(&gu, &pu)?))
    } else {
        (None, None)
    };
    Ok(SegmentationReport {
        per_instance,
        f1: MeanStd::of(&f1s),
        hd_mm: MeanStd::of(&hds),
        assd_mm: MeanStd::of(&assds),
        aji: aji(gt, pred)?,
        integrated_hd_mm,
        integrated_assd_mm,
    })
}
