use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dentvox_core::augment::{cutout, random_affine, sample_affine};
use dentvox_core::detector::{
    assign_group, average_precision_50, dilate, iou, mean_overlap_ratio, nms, object_include_ratio, Box3, ToothGroup,
};
use dentvox_core::distance::assemble;
use dentvox_core::metrics::{per_instance_report, MeanStd};
use dentvox_core::phantom::{distance_targets_from_labels, generate, PhantomTruth};
use dentvox_core::pose::{apply_to_labels, realign_voi, Jaw};
use dentvox_core::volume::{mip_x, GridGeometry, LabelMap, Volume};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint;
use crate::config::PipelineConfig;
use crate::container::{read_header, read_labels, read_volume, write_labels, write_volume};
use crate::dto::{
    read_json, write_json, BoxDto, BoxesFile, MeanStdDto, MetricsReport, PosesFile, TransformDto, TransformsFile,
};
use crate::error::{CliError, Result};
use crate::pipeline::{run_pipeline, score};
use crate::toy::{gradcheck_suite, train_toy};

#[derive(Debug, Parser)]
#[command(name = "dentvox", version, about = "Pose-aware tooth instance segmentation on CBCT-like volumes")]
pub struct Cli {
    /// JSON configuration; missing keys take defaults, unknown keys fail.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Machine-readable output (and errors) as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic jaw phantom with ground truth.
    Phantom(PhantomArgs),
    /// Maximum intensity projection along x.
    Mip(MipArgs),
    /// Cut the pose-realigned VOI of each jaw.
    Realign(RealignArgs),
    /// NMS, margin dilation and grouping of detected boxes.
    DetectPost(DetectPostArgs),
    /// Distance-regression targets for every labelled tooth.
    Distmap(DistmapArgs),
    /// Cutout and random affine augmentation.
    Augment(AugmentArgs),
    /// Paste per-tooth distance maps into one label map.
    Assemble(AssembleArgs),
    /// Segmentation metrics of a prediction against ground truth.
    Eval(EvalArgs),
    /// Finite-difference check of every network op and the toy TSNet.
    Gradcheck,
    /// Fit the toy TSNet to one phantom tooth.
    Traintoy(TraintoyArgs),
    /// Phantom through realignment, cropping and assembly, with oracle maps.
    Pipeline(PhantomArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct PhantomArgs {
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
    pub dims: Option<Vec<usize>>,
    /// Isotropic voxel size in mm.
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub tilt: Option<f64>,
    /// FDI ids to leave out.
    #[arg(long, value_delimiter = ',')]
    pub missing: Vec<u8>,
    /// FDI ids with metal crowns.
    #[arg(long, value_delimiter = ',')]
    pub metal: Vec<u8>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MipArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Rescale the projection to [0, 1].
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JawArg {
    Upper,
    Lower,
    Both,
}

impl JawArg {
    fn jaws(self) -> Vec<Jaw> {
        match self {
            JawArg::Upper => vec![Jaw::Upper],
            JawArg::Lower => vec![Jaw::Lower],
            JawArg::Both => vec![Jaw::Upper, Jaw::Lower],
        }
    }
}

#[derive(Debug, Args)]
pub struct RealignArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    /// Also realign this label map (nearest neighbour).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub jaw: JawArg,
}

#[derive(Debug, Args)]
pub struct DetectPostArgs {
    #[arg(long)]
    pub boxes: PathBuf,
    /// Volume or label header whose extent clamps dilated boxes.
    #[arg(long)]
    pub like: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Ground-truth boxes; adds an OR / AP50 report.
    #[arg(long, value_name = "GT_BOXES")]
    pub eval: Option<PathBuf>,
    /// Ground-truth labels; adds object-include ratios to the report.
    #[arg(long, requires = "eval")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistmapArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub boxes: PathBuf,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Mask transformed jointly with the volume by the affine step.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub no_cutout: bool,
    #[arg(long)]
    pub no_affine: bool,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Index written by `distmap`.
    #[arg(long)]
    pub index: PathBuf,
    /// Container whose grid receives the instances.
    #[arg(long)]
    pub like: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, requires = "pred_boxes")]
    pub gt_boxes: Option<PathBuf>,
    #[arg(long)]
    pub pred_boxes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraintoyArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

/// Result of a command: a human summary, the same content as JSON, and
/// the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub code: i32,
}

impl Outcome {
    fn ok(text: String, json: Value) -> Self {
        Self { text, json, code: 0 }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let ctx = Ctx { cfg, seed, out: cli.out.clone() };
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(&ctx, a),
        Command::Mip(a) => cmd_mip(&ctx, a),
        Command::Realign(a) => cmd_realign(&ctx, a),
        Command::DetectPost(a) => cmd_detect_post(&ctx, a),
        Command::Distmap(a) => cmd_distmap(&ctx, a),
        Command::Augment(a) => cmd_augment(&ctx, a),
        Command::Assemble(a) => cmd_assemble(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Gradcheck => cmd_gradcheck(&ctx),
        Command::Traintoy(a) => cmd_traintoy(&ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
    }
}

fn phantom_from(ctx: &Ctx, a: &PhantomArgs) -> Result<PhantomTruth> {
    let mut p = ctx.cfg.phantom.clone();
    if let Some(d) = &a.dims {
        p.dims = [d[0], d[1], d[2]];
    }
    if let Some(s) = a.spacing {
        p.spacing_mm = [s; 3];
    }
    if let Some(t) = a.tilt {
        p.tilt_deg = t;
    }
    p.missing.extend(&a.missing);
    p.metal.extend(&a.metal);
    if let Some(n) = a.noise {
        p.noise_sigma = n;
    }
    Ok(generate(&p.spec(ctx.seed))?)
}

fn cmd_phantom(ctx: &Ctx, a: &PhantomArgs) -> Result<Outcome> {
    let t = phantom_from(ctx, a)?;
    write_volume(&ctx.path("volume.json"), &t.volume)?;
    write_labels(&ctx.path("labels.json"), &t.labels)?;
    write_json(&ctx.path("boxes.json"), &BoxesFile::new(&t.boxes))?;
    write_json(&ctx.path("poses.json"), &PosesFile::new(&t.poses))?;
    let or_upper = mean_overlap_ratio(&t.boxes_of(Jaw::Upper));
    let or_lower = mean_overlap_ratio(&t.boxes_of(Jaw::Lower));
    let text = format!(
        "{} teeth ({} upper, {} lower); mean OR upper {or_upper:.4}, lower {or_lower:.4}\nwrote {}",
        t.boxes.len(),
        t.boxes_of(Jaw::Upper).len(),
        t.boxes_of(Jaw::Lower).len(),
        ctx.out.display()
    );
    let json = json!({
        "teeth": t.boxes.len(),
        "mean_or": {"upper": or_upper, "lower": or_lower},
        "files": ["volume.json", "labels.json", "boxes.json", "poses.json"],
    });
    Ok(Outcome::ok(text, json))
}

fn cmd_mip(ctx: &Ctx, a: &MipArgs) -> Result<Outcome> {
    let v = read_volume(&a.volume)?;
    let mut img = mip_x(&v);
    if a.normalize {
        img = img.normalized01();
    }
    let g = v.geometry();
    // stored as a one-voxel-thick volume so it reuses the container
    let geometry = GridGeometry::new([1, img.dims[0], img.dims[1]], g.spacing, g.origin)?;
    write_volume(&ctx.path("mip.json"), &Volume::from_vec(geometry, img.data)?)?;
    Ok(Outcome::ok(
        format!("{}x{} projection written to {}", geometry.dims[1], geometry.dims[2], ctx.path("mip.json").display()),
        json!({"dims": [geometry.dims[1], geometry.dims[2]], "file": "mip.json"}),
    ))
}

fn cmd_realign(ctx: &Ctx, a: &RealignArgs) -> Result<Outcome> {
    let v = read_volume(&a.volume)?;
    let poses: PosesFile = read_json(&a.poses)?;
    let labels = a.labels.as_deref().map(read_labels).transpose()?;
    let spec = ctx.cfg.voi.spec();
    let mut transforms = Vec::new();
    let mut files = Vec::new();
    for jaw in a.jaw.jaws() {
        let pose = poses.pose(jaw)?;
        let (voi, frame) = realign_voi(&v, &pose, &spec)?;
        let name = format!("voi_{}.json", jaw.as_str());
        write_volume(&ctx.path(&name), &voi)?;
        files.push(name);
        if let Some(l) = &labels {
            let name = format!("voi_labels_{}.json", jaw.as_str());
            write_labels(&ctx.path(&name), &apply_to_labels(l, &frame.to_voi(), &frame.geometry)?)?;
            files.push(name);
        }
        transforms.push(TransformDto::new(&frame)?);
    }
    write_json(&ctx.path("transforms.json"), &TransformsFile { transforms })?;
    files.push("transforms.json".into());
    Ok(Outcome::ok(
        format!("{} VOI(s) at {:?} written to {}", a.jaw.jaws().len(), spec.out_dims, ctx.out.display()),
        json!({"dims": spec.out_dims, "files": files}),
    ))
}

fn extent_of(path: &Path) -> Result<Box3> {
    let g = read_header(path)?.geometry()?;
    Ok(Box3::new(g.extent_min(), g.extent_max())?)
}

fn match_box<'a>(gt: &Box3, pred: &'a [Box3]) -> Option<&'a Box3> {
    if let Some(b) = pred.iter().find(|b| gt.tooth_id.is_some() && b.tooth_id == gt.tooth_id) {
        return Some(b);
    }
    pred.iter().filter(|b| iou(gt, b) > 0.0).max_by(|a, b| iou(gt, a).total_cmp(&iou(gt, b)))
}

fn oir_stats(labels: &LabelMap, gt: &[Box3], pred: &[Box3]) -> Result<(MeanStd, Vec<Value>)> {
    let mut ratios = Vec::new();
    let mut rows = Vec::new();
    for g in gt {
        let Some(id) = g.tooth_id else { continue };
        let pts = labels.mask_of(id as u16).foreground_points();
        let r = match match_box(g, pred) {
            Some(b) => object_include_ratio(&pts, b)?,
            None => 0.0,
        };
        ratios.push(r);
        rows.push(json!({"tooth": id, "oir": r}));
    }
    Ok((MeanStd::of(&ratios), rows))
}

fn cmd_detect_post(ctx: &Ctx, a: &DetectPostArgs) -> Result<Outcome> {
    let boxes = read_json::<BoxesFile>(&a.boxes)?.to_boxes()?;
    let bounds = match &a.like {
        Some(p) => extent_of(p)?,
        None => Box3::new([-1e9; 3], [1e9; 3])?,
    };
    let margin = a.margin.unwrap_or(ctx.cfg.detection.margin_mm);
    let kept = nms(&boxes, a.nms_iou.unwrap_or(ctx.cfg.detection.nms_iou));
    let mut post = Vec::with_capacity(kept.len());
    for b in &kept {
        let mut d = dilate(b, margin, &bounds)?;
        if let Some(id) = b.tooth_id {
            d.group = Some(assign_group(id, b.group == Some(ToothGroup::Metal))?);
        }
        post.push(d);
    }
    write_json(&ctx.path("boxes_post.json"), &BoxesFile::new(&post))?;
    let mut text = format!("{} boxes in, {} after NMS, dilated by {margin} mm", boxes.len(), post.len());
    let mut summary = json!({"input": boxes.len(), "kept": post.len(), "margin_mm": margin, "file": "boxes_post.json"});

    if let Some(gt_path) = &a.eval {
        let gt = read_json::<BoxesFile>(gt_path)?.to_boxes()?;
        let mut report = json!({
            "or_gt": mean_overlap_ratio(&gt),
            "or_pred": mean_overlap_ratio(&post),
            "ap50": average_precision_50(&gt, &post),
        });
        if let Some(lp) = &a.labels {
            let (m, rows) = oir_stats(&read_labels(lp)?, &gt, &post)?;
            report["oir"] = json!({"mean": m.mean, "std": m.std, "per_tooth": rows});
            text.push_str(&format!("\nOIR {:.2} ± {:.2}", m.mean, m.std));
        }
        text.push_str(&format!("\nAP50 {:.4}", report["ap50"].as_f64().unwrap_or(0.0)));
        write_json(&ctx.path("detection_report.json"), &report)?;
        summary["report"] = report;
    }
    Ok(Outcome::ok(text, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistmapEntry {
    #[serde(rename = "box")]
    pub bbox: BoxDto,
    pub file: String,
}

/// Index of per-tooth distance maps, relative to its own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistmapIndex {
    pub d_max_vox: f64,
    pub margin_mm: f64,
    pub instances: Vec<DistmapEntry>,
}

fn cmd_distmap(ctx: &Ctx, a: &DistmapArgs) -> Result<Outcome> {
    let labels = read_labels(&a.labels)?;
    let boxes = read_json::<BoxesFile>(&a.boxes)?.to_boxes()?;
    let margin = a.margin.unwrap_or(ctx.cfg.detection.margin_mm);
    let d = ctx.cfg.distance;
    let targets = distance_targets_from_labels(&labels, &boxes, margin, d.crop_dims, d.d_max_vox)?;
    let mut instances = Vec::with_capacity(targets.len());
    for (b, map) in &targets {
        let file = format!("distmaps/tooth_{:02}.json", b.tooth_id.unwrap_or(0));
        write_volume(&ctx.path(&file), map)?;
        instances.push(DistmapEntry { bbox: b.into(), file });
    }
    write_json(&ctx.path("distmaps.json"), &DistmapIndex { d_max_vox: d.d_max_vox, margin_mm: margin, instances })?;
    Ok(Outcome::ok(
        format!(
            "{} distance maps at {:?} indexed in {}",
            targets.len(),
            d.crop_dims,
            ctx.path("distmaps.json").display()
        ),
        json!({"instances": targets.len(), "dims": d.crop_dims, "index": "distmaps.json"}),
    ))
}

fn cmd_augment(ctx: &Ctx, a: &AugmentArgs) -> Result<Outcome> {
    let mut v = read_volume(&a.volume)?;
    let mut mask = a.mask.as_deref().map(read_labels).transpose()?.map(|m| m.map(|l| l != 0));
    let mut record = json!({"cutout": null, "affine": null});
    if !a.no_cutout {
        let (out, b) = cutout(&v, &ctx.cfg.cutout.spec(), ctx.seed)?;
        v = out;
        if let Some(b) = b {
            record["cutout"] = json!({"sides": b.sides, "lo": b.lo, "hi": b.hi});
        }
    }
    if !a.no_affine {
        // a distinct stream from the cutout draw
        let seed = ctx.seed ^ 0xaff1_e000;
        let spec = ctx.cfg.affine.spec();
        if let Some(x) = sample_affine(v.geometry(), &spec, seed)? {
            record["affine"] = json!({"linear": x.linear, "translation": x.translation});
        }
        let (out, m) = random_affine(&v, mask.as_ref(), &spec, seed)?;
        v = out;
        mask = m;
    }
    write_volume(&ctx.path("augmented.json"), &v)?;
    if let Some(m) = &mask {
        write_labels(&ctx.path("augmented_mask.json"), &m.map(u16::from))?;
    }
    write_json(&ctx.path("augment.json"), &record)?;
    let text = format!(
        "cutout {}, affine {}",
        if record["cutout"].is_null() { "skipped" } else { "applied" },
        if record["affine"].is_null() { "skipped" } else { "applied" }
    );
    Ok(Outcome::ok(text, record))
}

fn cmd_assemble(ctx: &Ctx, a: &AssembleArgs) -> Result<Outcome> {
    let index: DistmapIndex = read_json(&a.index)?;
    let base = a.index.parent().unwrap_or(Path::new("."));
    let mut instances = Vec::with_capacity(index.instances.len());
    for e in &index.instances {
        instances.push((e.bbox.to_box()?, read_volume(&base.join(&e.file))?));
    }
    let canvas = read_header(&a.like)?.geometry()?;
    let tau = a.tau.unwrap_or(ctx.cfg.distance.tau_face_steps / index.d_max_vox);
    let labels = assemble(&instances, &canvas, tau)?;
    write_labels(&ctx.path("assembled.json"), &labels)?;
    let n = labels.labels().len();
    Ok(Outcome::ok(
        format!("{n} instances assembled into {}", ctx.path("assembled.json").display()),
        json!({"instances": n, "tau": tau, "file": "assembled.json"}),
    ))
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> Result<Outcome> {
    let gt = read_labels(&a.gt)?;
    let pred = read_labels(&a.pred)?;
    let mut report = MetricsReport::from(&per_instance_report(&gt, &pred)?);
    if let (Some(gb), Some(pb)) = (&a.gt_boxes, &a.pred_boxes) {
        let gtb = read_json::<BoxesFile>(gb)?.to_boxes()?;
        let pdb = read_json::<BoxesFile>(pb)?.to_boxes()?;
        report.aggregate.ap50 = Some(average_precision_50(&gtb, &pdb));
        report.aggregate.oir = Some(MeanStdDto::from(oir_stats(&gt, &gtb, &pdb)?.0));
    }
    write_json(&ctx.path("metrics.json"), &report)?;
    let g = &report.aggregate;
    let text = format!(
        "F1 {:.4} ± {:.4}  AJI {:.4}  HD {:.3} mm  ASSD {:.3} mm ({} instances)",
        g.f1.mean,
        g.f1.std,
        g.aji,
        g.hd_mm.mean,
        g.assd_mm.mean,
        report.per_instance.len()
    );
    let json = serde_json::to_value(&report).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(Outcome::ok(text, json))
}

fn cmd_gradcheck(ctx: &Ctx) -> Result<Outcome> {
    let s = gradcheck_suite(&ctx.cfg, ctx.seed)?;
    let mut text = String::new();
    let mut rows = Vec::new();
    for o in &s.ops {
        text.push_str(&format!("op {:<16} checked {:>4}  max rel err {:.3e}\n", o.name, o.checked, o.max_rel_err));
        rows.push(json!({"name": o.name, "checked": o.checked, "max_rel_err": o.max_rel_err}));
    }
    let mut tensors = Vec::new();
    for t in &s.tsnet.tensors {
        tensors.push(
            json!({"name": t.name, "checked": t.checked, "kink_skips": t.kink_skips, "max_rel_err": t.max_rel_err}),
        );
    }
    text.push_str(&format!(
        "tsnet: {} tensors, {} entries checked, {} kink skips, max rel err {:.3e}\n",
        s.tsnet.tensors.len(),
        s.tsnet.checked(),
        s.tsnet.kink_skips(),
        s.tsnet.max_rel_err()
    ));
    let passed = s.passed();
    text.push_str(if passed { "PASS" } else { "FAIL" });
    text.push_str(&format!(" (tolerance {:e})", s.tolerance));
    let json = json!({
        "passed": passed,
        "tolerance": s.tolerance,
        "max_rel_err": s.max_rel_err(),
        "ops": rows,
        "tsnet": {"checked": s.tsnet.checked(), "kink_skips": s.tsnet.kink_skips(), "tensors": tensors},
    });
    Ok(Outcome { text, json, code: if passed { 0 } else { 3 } })
}

fn cmd_traintoy(ctx: &Ctx, a: &TraintoyArgs) -> Result<Outcome> {
    let mut cfg = ctx.cfg.clone();
    if let Some(s) = a.steps {
        cfg.training.steps = s;
    }
    if let Some(lr) = a.lr {
        cfg.training.lr = lr;
    }
    let (net, curve) = train_toy(&cfg, ctx.seed)?;
    let csv = curve.csv();
    let path = ctx.path("loss.csv");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(&path, &csv).map_err(|e| CliError::io(&path, e))?;
    checkpoint::save(&ctx.path("toy_tsnet.json"), &net)?;
    let first = curve.steps.first().map_or(curve.last.loss, |s| s.loss);
    let text = format!(
        "{csv}{} steps at lr {}: loss {first:.6} -> {:.6} (ratio {:.4})",
        curve.steps.len(),
        cfg.training.lr,
        curve.last.loss,
        curve.ratio()
    );
    let json = json!({
        "steps": curve.steps.len(),
        "lr": cfg.training.lr,
        "initial_loss": first,
        "final_loss": curve.last.loss,
        "ratio": curve.ratio(),
        "files": ["loss.csv", "toy_tsnet.json"],
    });
    Ok(Outcome::ok(text, json))
}

fn cmd_pipeline(ctx: &Ctx, a: &PhantomArgs) -> Result<Outcome> {
    let truth = phantom_from(ctx, a)?;
    let run = run_pipeline(&truth, &ctx.cfg)?;
    let s = score(&truth.labels, &run.labels)?;
    write_labels(&ctx.path("pred_labels.json"), &run.labels)?;
    write_labels(&ctx.path("labels.json"), &truth.labels)?;
    let jaws: Vec<Value> = run
        .jaws
        .iter()
        .map(|j| json!({"jaw": j.jaw.as_str(), "voi_dims": j.voi.dims(), "teeth": j.boxes.len(), "crop_dims": j.crop_dims.first()}))
        .collect();
    let dice: Vec<Value> = s.dice.iter().map(|(id, d)| json!({"tooth": id, "dice": d})).collect();
    let report = json!({"min_dice": s.min_dice(), "aji": s.aji, "dice": dice, "jaws": jaws});
    write_json(&ctx.path("pipeline_report.json"), &report)?;
    let text = format!(
        "{} teeth: min Dice {:.4}, AJI {:.4}; wrote pred_labels.json and pipeline_report.json",
        s.dice.len(),
        s.min_dice(),
        s.aji
    );
    Ok(Outcome::ok(text, report))
}
