//! End-to-end instance segmentation of a phantom scene with ground-truth
//! poses and boxes and oracle distance maps in place of the learned
//! stages.
//!
//! Per jaw: realign the VOI, map the tooth boxes into it, dilate them,
//! crop, build distance targets from the VOI labels, assemble the
//! instances on the VOI grid and pull the result back to the source grid
//! by nearest-neighbour sampling.

use dentvox_core::augment::standardize_crop_to;
use dentvox_core::detector::{dilate, Box3};
use dentvox_core::distance::assemble;
use dentvox_core::metrics::aji;
use dentvox_core::phantom::{distance_targets_from_labels, jaw_of, PhantomTruth};
use dentvox_core::pose::{apply_to_labels, map_label_boxes, realign_voi, Jaw, VoiFrame};
use dentvox_core::volume::{resample_nearest, LabelMap, Volume};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct JawRun {
    pub jaw: Jaw,
    pub frame: VoiFrame,
    pub voi: Volume,
    /// Dilated tooth boxes in VOI coordinates.
    pub boxes: Vec<Box3>,
    /// Dims of every standardized tooth crop.
    pub crop_dims: Vec<[usize; 3]>,
    /// Assembled instances on the VOI grid.
    pub voi_labels: LabelMap,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub jaws: Vec<JawRun>,
    /// Assembled instances on the source grid.
    pub labels: LabelMap,
}

pub fn run_jaw(truth: &PhantomTruth, jaw: Jaw, cfg: &PipelineConfig) -> Result<JawRun> {
    let pose =
        truth.pose_of(jaw).ok_or_else(|| CliError::Validation(format!("phantom has no {} jaw pose", jaw.as_str())))?;
    let (voi, frame) = realign_voi(&truth.volume, &pose, &cfg.voi.spec())?;
    let to_voi = frame.to_voi();
    let voi_truth = apply_to_labels(&truth.labels, &to_voi, &frame.geometry)?;

    let group_of = |id: u8| truth.boxes.iter().find(|b| b.tooth_id == Some(id)).and_then(|b| b.group);
    let tight: Vec<Box3> = map_label_boxes(&truth.labels, &to_voi)
        .into_iter()
        .filter(|(l, _)| jaw_of(*l as u8) == jaw)
        .map(|(l, b)| Box3 { group: group_of(l as u8), ..b })
        .collect();

    let g = frame.geometry;
    let bounds = Box3::new(g.extent_min(), g.extent_max())?;
    let margin = cfg.detection.margin_mm;
    let boxes = tight.iter().map(|b| dilate(b, margin, &bounds)).collect::<dentvox_core::Result<Vec<_>>>()?;
    let crop_dims = boxes
        .iter()
        .map(|b| Ok(standardize_crop_to(&voi, b, cfg.distance.crop_dims)?.dims()))
        .collect::<Result<Vec<_>>>()?;

    let targets =
        distance_targets_from_labels(&voi_truth, &tight, margin, cfg.distance.crop_dims, cfg.distance.d_max_vox)?;
    let voi_labels = assemble(&targets, &g, cfg.distance.tau())?;
    Ok(JawRun { jaw, frame, voi, boxes, crop_dims, voi_labels })
}

pub fn run_pipeline(truth: &PhantomTruth, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let source = *truth.labels.geometry();
    let mut labels = LabelMap::filled(source, 0);
    let mut jaws = Vec::with_capacity(2);
    for jaw in [Jaw::Upper, Jaw::Lower] {
        let run = run_jaw(truth, jaw, cfg)?;
        let back = resample_nearest(&run.voi_labels, &run.frame.to_source()?, &source)?;
        for (dst, &src) in labels.data_mut().iter_mut().zip(back.data()) {
            if *dst == 0 && src != 0 && jaw_of(src as u8) == jaw {
                *dst = src;
            }
        }
        jaws.push(run);
    }
    Ok(PipelineRun { jaws, labels })
}

/// Per-tooth Dice and AJI of a prediction against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripScore {
    pub dice: Vec<(u16, f64)>,
    pub aji: f64,
}

impl RoundTripScore {
    pub fn min_dice(&self) -> f64 {
        self.dice.iter().map(|d| d.1).fold(f64::INFINITY, f64::min)
    }
}

pub fn score(truth: &LabelMap, pred: &LabelMap) -> Result<RoundTripScore> {
    if truth.dims() != pred.dims() {
        return Err(CliError::Validation(format!("label maps {:?} vs {:?}", truth.dims(), pred.dims())));
    }
    let mut sizes = vec![0usize; 1 << 16];
    let mut both = vec![0usize; 1 << 16];
    for (&a, &b) in truth.data().iter().zip(pred.data()) {
        sizes[a as usize] += 1;
        sizes[b as usize] += 1;
        if a == b {
            both[a as usize] += 1;
        }
    }
    let dice =
        truth.labels().into_iter().map(|id| (id, 2.0 * both[id as usize] as f64 / sizes[id as usize] as f64)).collect();
    Ok(RoundTripScore { dice, aji: aji(truth, pred)? })
}
