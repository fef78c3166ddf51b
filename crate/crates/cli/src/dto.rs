//! Serializable documents: boxes, poses, VOI transforms and reports.

use std::fs;
use std::path::Path;

use dentvox_core::detector::{Box3, ToothGroup};
use dentvox_core::geometry::Affine3;
use dentvox_core::metrics::{MeanStd, SegmentationReport};
use dentvox_core::pose::{Jaw, PoseEstimate, VoiFrame};
use dentvox_core::volume::GridGeometry;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupDto {
    Metal,
    OneRooted,
    Others,
}

impl From<ToothGroup> for GroupDto {
    fn from(g: ToothGroup) -> Self {
        match g {
            ToothGroup::Metal => GroupDto::Metal,
            ToothGroup::OneRooted => GroupDto::OneRooted,
            ToothGroup::Others => GroupDto::Others,
        }
    }
}

impl From<GroupDto> for ToothGroup {
    fn from(g: GroupDto) -> Self {
        match g {
            GroupDto::Metal => ToothGroup::Metal,
            GroupDto::OneRooted => ToothGroup::OneRooted,
            GroupDto::Others => ToothGroup::Others,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDto {
    pub min_mm: [f64; 3],
    pub max_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tooth_id: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl From<&Box3> for BoxDto {
    fn from(b: &Box3) -> Self {
        Self { min_mm: b.min, max_mm: b.max, tooth_id: b.tooth_id, group: b.group.map(Into::into), score: b.score }
    }
}

impl BoxDto {
    pub fn to_box(&self) -> Result<Box3> {
        let mut b = Box3::new(self.min_mm, self.max_mm)?;
        b.tooth_id = self.tooth_id;
        b.group = self.group.map(Into::into);
        b.score = self.score;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxesFile {
    pub boxes: Vec<BoxDto>,
}

impl BoxesFile {
    pub fn new(boxes: &[Box3]) -> Self {
        Self { boxes: boxes.iter().map(Into::into).collect() }
    }

    pub fn to_boxes(&self) -> Result<Vec<Box3>> {
        self.boxes.iter().map(BoxDto::to_box).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JawDto {
    Upper,
    Lower,
}

impl From<Jaw> for JawDto {
    fn from(j: Jaw) -> Self {
        match j {
            Jaw::Upper => JawDto::Upper,
            Jaw::Lower => JawDto::Lower,
        }
    }
}

impl From<JawDto> for Jaw {
    fn from(j: JawDto) -> Self {
        match j {
            JawDto::Upper => Jaw::Upper,
            JawDto::Lower => Jaw::Lower,
        }
    }
}

/// A jaw pose: line point in MIP pixels `(u, v) = (y, z)` index and the
/// line angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDto {
    pub jaw: JawDto,
    pub point_px: [f64; 2],
    pub angle_deg: f64,
}

impl From<&PoseEstimate> for PoseDto {
    fn from(p: &PoseEstimate) -> Self {
        Self { jaw: p.jaw.into(), point_px: p.point, angle_deg: p.angle_deg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesFile {
    pub poses: Vec<PoseDto>,
}

impl PosesFile {
    pub fn new(poses: &[PoseEstimate]) -> Self {
        Self { poses: poses.iter().map(Into::into).collect() }
    }

    pub fn to_poses(&self) -> Result<Vec<PoseEstimate>> {
        self.poses.iter().map(|p| Ok(PoseEstimate::new(p.point_px, p.angle_deg, p.jaw.into())?)).collect()
    }

    pub fn pose(&self, jaw: Jaw) -> Result<PoseEstimate> {
        self.to_poses()?
            .into_iter()
            .find(|p| p.jaw == jaw)
            .ok_or_else(|| CliError::Validation(format!("no {} jaw pose given", jaw.as_str())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDto {
    pub linear: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Affine3> for AffineDto {
    fn from(a: &Affine3) -> Self {
        Self { linear: a.linear, translation: a.translation }
    }
}

impl From<AffineDto> for Affine3 {
    fn from(a: AffineDto) -> Self {
        Affine3 { linear: a.linear, translation: a.translation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDto {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
}

impl From<&GridGeometry> for GeometryDto {
    fn from(g: &GridGeometry) -> Self {
        Self { dims: g.dims, spacing_mm: g.spacing, origin_mm: g.origin }
    }
}

impl GeometryDto {
    pub fn to_geometry(&self) -> Result<GridGeometry> {
        Ok(GridGeometry::new(self.dims, self.spacing_mm, self.origin_mm)?)
    }
}

/// How one VOI was cut: `to_voi` maps source world mm to VOI world mm,
/// `to_source` is its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformDto {
    pub jaw: JawDto,
    pub flipped_y: bool,
    pub voi: GeometryDto,
    pub to_voi: AffineDto,
    pub to_source: AffineDto,
}

impl TransformDto {
    pub fn new(frame: &VoiFrame) -> Result<Self> {
        Ok(Self {
            jaw: frame.jaw.into(),
            flipped_y: frame.flipped_y,
            voi: (&frame.geometry).into(),
            to_voi: (&frame.to_voi()).into(),
            to_source: (&frame.to_source()?).into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformsFile {
    pub transforms: Vec<TransformDto>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStdDto {
    pub mean: f64,
    pub std: f64,
}

impl From<MeanStd> for MeanStdDto {
    fn from(m: MeanStd) -> Self {
        Self { mean: m.mean, std: m.std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDto {
    pub instance: u16,
    pub pred: Option<u16>,
    pub f1: f64,
    pub hd_mm: Option<f64>,
    pub assd_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDto {
    pub f1: MeanStdDto,
    pub aji: f64,
    pub hd_mm: MeanStdDto,
    pub assd_mm: MeanStdDto,
    /// Surface metrics over the union of all teeth.
    pub integrated_hd_mm: Option<f64>,
    pub integrated_assd_mm: Option<f64>,
    pub ap50: Option<f64>,
    pub oir: Option<MeanStdDto>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_instance: Vec<InstanceDto>,
    pub aggregate: AggregateDto,
}

impl From<&SegmentationReport> for MetricsReport {
    fn from(r: &SegmentationReport) -> Self {
        Self {
            per_instance: r
                .per_instance
                .iter()
                .map(|m| InstanceDto { instance: m.gt, pred: m.pred, f1: m.f1, hd_mm: m.hd_mm, assd_mm: m.assd_mm })
                .collect(),
            aggregate: AggregateDto {
                f1: r.f1.into(),
                aji: r.aji,
                hd_mm: r.hd_mm.into(),
                assd_mm: r.assd_mm.into(),
                integrated_hd_mm: r.integrated_hd_mm,
                integrated_assd_mm: r.integrated_assd_mm,
                ap50: None,
                oir: None,
            },
        }
    }
}
