//! One JSON document configuring every stage. Missing keys take defaults;
//! unknown keys are errors.

use std::collections::BTreeSet;
use std::path::Path;

use dentvox_core::augment::{AffineSpec, CutoutSpec};
use dentvox_core::detector::SamplerConfig;
use dentvox_core::distance::{DEFAULT_D_MAX_VOX, DEFAULT_TAU_FACE_STEPS};
use dentvox_core::neural::gradcheck::GradcheckConfig;
use dentvox_core::neural::{TsnetConfig, DEFAULT_WEIGHT_DECAY};
use dentvox_core::phantom::PhantomSpec;
use dentvox_core::pose::VoiSpec;
use serde::{Deserialize, Serialize};

use crate::dto::read_json;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub voi: VoiConfig,
    pub detection: DetectionConfig,
    pub sampler: SamplerDto,
    pub distance: DistanceConfig,
    pub cutout: CutoutDto,
    pub affine: AffineDto,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub gradcheck: GradcheckDto,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phantom: PhantomConfig::default(),
            voi: VoiConfig::default(),
            detection: DetectionConfig::default(),
            sampler: SamplerDto::default(),
            distance: DistanceConfig::default(),
            cutout: CutoutDto::default(),
            affine: AffineDto::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            gradcheck: GradcheckDto::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub teeth_per_jaw: usize,
    pub tilt_deg: f64,
    pub missing: BTreeSet<u8>,
    pub metal: BTreeSet<u8>,
    pub noise_sigma: f64,
    pub tooth_gap_mm: f64,
    pub size_jitter: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let s = PhantomSpec::default();
        Self {
            dims: s.dims,
            spacing_mm: s.spacing_mm,
            teeth_per_jaw: s.teeth_per_jaw,
            tilt_deg: s.tilt_deg,
            missing: s.missing,
            metal: s.metal,
            noise_sigma: s.noise_sigma,
            tooth_gap_mm: s.arch.tooth_gap_mm,
            size_jitter: s.size_jitter,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self, seed: u64) -> PhantomSpec {
        let base = PhantomSpec::default();
        PhantomSpec {
            dims: self.dims,
            spacing_mm: self.spacing_mm,
            teeth_per_jaw: self.teeth_per_jaw,
            tilt_deg: self.tilt_deg,
            missing: self.missing.clone(),
            metal: self.metal.clone(),
            noise_sigma: self.noise_sigma,
            size_jitter: self.size_jitter,
            arch: dentvox_core::phantom::ArchSpec { tooth_gap_mm: self.tooth_gap_mm, ..base.arch },
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiConfig {
    pub depth_mm: f64,
    pub margin_mm: f64,
    pub out_dims: [usize; 3],
}

impl Default for VoiConfig {
    fn default() -> Self {
        let s = VoiSpec::default();
        Self { depth_mm: s.depth_mm, margin_mm: s.margin_mm, out_dims: s.out_dims }
    }
}

impl VoiConfig {
    pub fn spec(&self) -> VoiSpec {
        VoiSpec { depth_mm: self.depth_mm, margin_mm: self.margin_mm, out_dims: self.out_dims }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub nms_iou: f64,
    pub margin_mm: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { nms_iou: 0.3, margin_mm: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerDto {
    pub t_pos: f64,
    pub t_neg: f64,
    pub nms_iou: f64,
    pub max_pos: usize,
    pub max_neg: usize,
}

impl Default for SamplerDto {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self { t_pos: s.t_pos, t_neg: s.t_neg, nms_iou: s.nms_iou, max_pos: s.max_pos, max_neg: s.max_neg }
    }
}

impl SamplerDto {
    pub fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            t_pos: self.t_pos,
            t_neg: self.t_neg,
            nms_iou: self.nms_iou,
            max_pos: self.max_pos,
            max_neg: self.max_neg,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub d_max_vox: f64,
    /// Binarization threshold in face steps; divided by `d_max_vox`.
    pub tau_face_steps: f64,
    pub crop_dims: [usize; 3],
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            d_max_vox: DEFAULT_D_MAX_VOX,
            tau_face_steps: DEFAULT_TAU_FACE_STEPS,
            crop_dims: dentvox_core::augment::CROP_DIMS,
        }
    }
}

impl DistanceConfig {
    pub fn tau(&self) -> f64 {
        self.tau_face_steps / self.d_max_vox
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutDto {
    pub probability: f64,
    pub lo_frac: f64,
    pub hi_frac: f64,
    pub fill: f32,
}

impl Default for CutoutDto {
    fn default() -> Self {
        let s = CutoutSpec::default();
        Self { probability: s.probability, lo_frac: s.lo_frac, hi_frac: s.hi_frac, fill: s.fill }
    }
}

impl CutoutDto {
    pub fn spec(&self) -> CutoutSpec {
        CutoutSpec { probability: self.probability, lo_frac: self.lo_frac, hi_frac: self.hi_frac, fill: self.fill }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineDto {
    pub probability: f64,
    pub max_rotate_deg: f64,
    pub max_scale_frac: f64,
    pub max_translate_frac: f64,
}

impl Default for AffineDto {
    fn default() -> Self {
        let s = AffineSpec::default();
        Self {
            probability: s.probability,
            max_rotate_deg: s.max_rotate_deg,
            max_scale_frac: s.max_scale_frac,
            max_translate_frac: s.max_translate_frac,
        }
    }
}

impl AffineDto {
    pub fn spec(&self) -> AffineSpec {
        AffineSpec {
            probability: self.probability,
            max_rotate_deg: self.max_rotate_deg,
            max_scale_frac: self.max_scale_frac,
            max_translate_frac: self.max_translate_frac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub widths: [usize; 4],
    pub groups: usize,
    pub relu_head: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let c = TsnetConfig::default();
        Self { widths: c.widths, groups: c.groups, relu_head: c.relu_head }
    }
}

impl NetworkConfig {
    pub fn tsnet(&self) -> TsnetConfig {
        TsnetConfig { widths: self.widths, groups: self.groups, relu_head: self.relu_head, ..TsnetConfig::default() }
    }
}

/// The toy distance-regression fit on one phantom tooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub tooth: u8,
    pub crop_dims: [usize; 3],
    pub widths: [usize; 4],
    pub phantom_dims: [usize; 3],
    pub phantom_spacing_mm: [f64; 3],
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.05,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            tooth: 11,
            crop_dims: [16, 16, 32],
            widths: TsnetConfig::toy().widths,
            phantom_dims: [128, 128, 96],
            phantom_spacing_mm: [0.5; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckDto {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    pub samples_per_tensor: usize,
    pub input_dims: [usize; 3],
    pub widths: [usize; 4],
}

impl Default for GradcheckDto {
    fn default() -> Self {
        let c = GradcheckConfig::default();
        Self {
            step: c.step,
            tolerance: c.tolerance,
            floor: c.floor,
            samples_per_tensor: c.samples_per_tensor,
            input_dims: [16, 16, 32],
            widths: TsnetConfig::toy().widths,
        }
    }
}

impl GradcheckDto {
    pub fn config(&self, seed: u64) -> GradcheckConfig {
        GradcheckConfig {
            step: self.step,
            tolerance: self.tolerance,
            floor: self.floor,
            samples_per_tensor: self.samples_per_tensor,
            seed,
            ..GradcheckConfig::default()
        }
    }
}
