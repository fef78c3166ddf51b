//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Every expected value comes from an
//! oracle written here, independent of the library code under test.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dentvox::config::PipelineConfig;
use dentvox::pipeline::{run_jaw, run_pipeline, score};
use dentvox::toy::{gradcheck_suite, train_toy};
use dentvox_core::augment::{cutout, CutoutSpec, CROP_DIMS};
use dentvox_core::detector::{
    dilate, mean_overlap_ratio, nms, object_include_ratio, sample_rpn_targets, AnchorGrid, Box3, SamplerConfig,
};
use dentvox_core::distance::{chamfer_dt, chamfer_dt_raw, ChamferWeights};
use dentvox_core::metrics::per_instance_report;
use dentvox_core::neural::{predict, Mode, Tensor, Tsnet, TsnetConfig};
use dentvox_core::phantom::{generate, jaw_of, PhantomSpec, PhantomTruth};
use dentvox_core::pose::{map_label_boxes, realign_voi, voi_frame, Jaw, VoiSpec};
use dentvox_core::volume::{BinaryMask, GridGeometry, LabelMap, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn within(t0: Instant, budget: Duration, detail: String) -> Check {
    let took = t0.elapsed();
    ensure!(took <= budget, "{detail}; took {:.1} s > {} s budget", took.as_secs_f64(), budget.as_secs());
    Ok(format!("{detail}; {:.1} s (budget {} s)", took.as_secs_f64(), budget.as_secs()))
}

fn jaws() -> [Jaw; 2] {
    [Jaw::Upper, Jaw::Lower]
}

// 1: Chamfer distance transform

fn blob_mask(seed: u64, n: usize) -> BinaryMask {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let g = GridGeometry::new([n; 3], [1.0; 3], [0.0; 3]).unwrap();
    let mut m = BinaryMask::filled(g, false);
    for _ in 0..r.random_range(1..5) {
        let c = [0; 3].map(|_| r.random_range(0.0..n as f64));
        let rad = r.random_range(1.5..8.0);
        let ball = r.random_bool(0.5);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let d = [i as f64 - c[0], j as f64 - c[1], k as f64 - c[2]];
                    let inside = if ball {
                        d.iter().map(|v| v * v).sum::<f64>() <= rad * rad
                    } else {
                        d.iter().all(|v| v.abs() <= rad)
                    };
                    if inside {
                        m.set(i, j, k, true);
                    }
                }
            }
        }
    }
    m.set(0, 0, 0, false);
    m
}

/// Multi-source Dijkstra from every background voxel, 26-neighbourhood.
fn dijkstra(m: &BinaryMask, w: ChamferWeights) -> Vec<u32> {
    let g = *m.geometry();
    let n = g.dims.map(|d| d as i32);
    let mut dist = vec![u32::MAX; g.len()];
    let mut heap = BinaryHeap::new();
    for (idx, &fg) in m.data().iter().enumerate() {
        if !fg {
            dist[idx] = 0;
            heap.push(Reverse((0u32, idx)));
        }
    }
    while let Some(Reverse((d, idx))) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        let c = g.coords(idx);
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let p = [c[0] as i32 + dx, c[1] as i32 + dy, c[2] as i32 + dz];
                    if (0..3).any(|a| p[a] < 0 || p[a] >= n[a]) {
                        continue;
                    }
                    let nb = g.index(p[0] as usize, p[1] as usize, p[2] as usize);
                    let step = match [dx, dy, dz].iter().filter(|&&v| v != 0).count() {
                        1 => w.face,
                        2 => w.edge,
                        _ => w.corner,
                    };
                    if d + step < dist[nb] {
                        dist[nb] = d + step;
                        heap.push(Reverse((d + step, nb)));
                    }
                }
            }
        }
    }
    dist
}

fn brute_edt(m: &BinaryMask) -> Vec<f64> {
    let g = *m.geometry();
    let bg: Vec<[usize; 3]> = (0..g.len()).filter(|&i| !m.data()[i]).map(|i| g.coords(i)).collect();
    (0..g.len())
        .map(|idx| {
            if !m.data()[idx] {
                return 0.0;
            }
            let p = g.coords(idx);
            bg.iter()
                .map(|q| (0..3).map(|a| (p[a] as f64 - q[a] as f64).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn criterion_1() -> Check {
    let t0 = Instant::now();
    let w = ChamferWeights::default();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let m = blob_mask(seed, 16);
        let raw = chamfer_dt_raw(&m, w).map_err(|e| e.to_string())?;
        ensure!(raw == dijkstra(&m, w), "mask {seed}: Chamfer sweep differs from Dijkstra");
        let c = chamfer_dt(&m).map_err(|e| e.to_string())?;
        for (idx, e) in brute_edt(&m).into_iter().enumerate() {
            let cv = c.data()[idx] as f64;
            if e == 0.0 {
                ensure!(cv == 0.0, "mask {seed}: background voxel {idx} has distance {cv}");
            } else {
                worst = worst.max((cv - e).abs() / e);
            }
        }
    }
    ensure!(worst <= 0.15, "worst relative error vs Euclidean {worst:.4} > 0.15");
    within(t0, Duration::from_secs(30), format!("50 masks exact vs Dijkstra, max rel err vs EDT {worst:.4} <= 0.15"))
}

// 2, 3: network

fn criterion_2() -> Check {
    let t0 = Instant::now();
    let s = gradcheck_suite(&PipelineConfig::default(), 0).map_err(|e| e.to_string())?;
    let err = s.max_rel_err();
    ensure!(s.ops.iter().all(|o| o.checked > 0), "an op was not checked");
    ensure!(s.tsnet.checked() > 0, "no TSNet entries checked");
    ensure!(err <= 1e-4, "max relative error {err:.3e} > 1e-4");
    within(
        t0,
        Duration::from_secs(120),
        format!("{} ops + {} TSNet entries, max rel err {err:.3e} <= 1e-4", s.ops.len(), s.tsnet.checked()),
    )
}

fn criterion_3() -> Check {
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();
    let (_, curve) = train_toy(&cfg, 0).map_err(|e| e.to_string())?;
    let ratio = curve.ratio();
    ensure!(ratio <= 0.10, "final/initial loss {ratio:.4} > 0.10");
    within(t0, Duration::from_secs(300), format!("{} steps, final/initial loss {ratio:.4} <= 0.10", cfg.training.steps))
}

// 4: detector post-processing

fn oracle_iou(a: &Box3, b: &Box3) -> f64 {
    let mut inter = 1.0;
    for ax in 0..3 {
        let (lo, hi) = (a.min[ax].max(b.min[ax]), a.max[ax].min(b.max[ax]));
        if hi <= lo {
            return 0.0;
        }
        inter *= hi - lo;
    }
    let vol = |b: &Box3| (0..3).map(|a| b.max[a] - b.min[a]).product::<f64>();
    inter / (vol(a) + vol(b) - inter)
}

fn oracle_nms(boxes: &[Box3], thr: f64) -> Vec<Box3> {
    let mut alive: Vec<usize> = (0..boxes.len()).collect();
    let mut out = Vec::new();
    while !alive.is_empty() {
        let mut best = 0;
        for k in 1..alive.len() {
            if boxes[alive[k]].score.unwrap() > boxes[alive[best]].score.unwrap() {
                best = k;
            }
        }
        let top = alive.remove(best);
        out.push(boxes[top]);
        alive.retain(|&i| oracle_iou(&boxes[top], &boxes[i]) <= thr);
    }
    out
}

fn check_sampler(anchors: &[Box3], gt: &[Box3], cfg: &SamplerConfig) -> Result<(usize, usize), String> {
    let t = sample_rpn_targets(anchors, gt, cfg).map_err(|e| e.to_string())?;
    let m: Vec<Vec<f64>> = anchors.iter().map(|a| gt.iter().map(|g| oracle_iou(a, g)).collect()).collect();
    let best = |a: usize| m[a].iter().cloned().fold(0.0, f64::max);
    for g in 0..gt.len() {
        ensure!(t.positives.iter().any(|p| p.gt == g), "gt {g} has no positive anchor");
    }
    let mined: Vec<_> = t.positives.iter().filter(|p| !p.forced).collect();
    ensure!(mined.len() <= cfg.max_pos, "{} positives > {}", mined.len(), cfg.max_pos);
    for p in &mined {
        ensure!(best(p.anchor) >= cfg.t_pos, "positive anchor {} below t_pos", p.anchor);
        ensure!((p.iou - best(p.anchor)).abs() < 1e-12, "positive anchor {} iou is not its best", p.anchor);
    }
    for (i, p) in mined.iter().enumerate() {
        for q in &mined[i + 1..] {
            ensure!(oracle_iou(&anchors[p.anchor], &anchors[q.anchor]) <= cfg.nms_iou + 1e-12, "positives overlap");
        }
    }
    if mined.len() < cfg.max_pos {
        for a in (0..anchors.len()).filter(|&a| best(a) >= cfg.t_pos && !mined.iter().any(|p| p.anchor == a)) {
            ensure!(
                mined.iter().any(|p| p.iou >= best(a) && oracle_iou(&anchors[p.anchor], &anchors[a]) > cfg.nms_iou),
                "candidate {a} neither kept nor suppressed"
            );
        }
    }
    for p in t.positives.iter().filter(|p| p.forced) {
        ensure!(!mined.iter().any(|q| q.gt == p.gt), "forced positive for covered gt {}", p.gt);
    }
    let mut neg = t.negatives.clone();
    neg.sort();
    neg.dedup();
    ensure!(neg.len() == t.negatives.len(), "duplicate negatives");
    let pool =
        (0..anchors.len()).filter(|&a| best(a) <= cfg.t_neg && !t.positives.iter().any(|p| p.anchor == a)).count();
    ensure!(neg.len() == cfg.max_neg.min(pool), "{} negatives, expected {}", neg.len(), cfg.max_neg.min(pool));
    ensure!(neg.iter().all(|&a| best(a) <= cfg.t_neg), "negative above t_neg");
    Ok((t.positives.len(), neg.len()))
}

fn criterion_4() -> Check {
    let t0 = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(44);
    for set in 0..1000 {
        let n = r.random_range(0..60);
        let boxes: Vec<Box3> = (0..n)
            .map(|_| {
                let min = [0; 3].map(|_| r.random_range(0.0..20.0));
                let size = [0; 3].map(|_| r.random_range(0.5..8.0));
                let score = r.random_range(0..10) as f64 / 10.0;
                Box3::new(min, [0, 1, 2].map(|a| min[a] + size[a])).unwrap().with_score(score)
            })
            .collect();
        let thr = r.random_range(0.05..0.8);
        ensure!(nms(&boxes, thr) == oracle_nms(&boxes, thr), "set {set}: NMS differs from quadratic oracle");
    }
    let truth = generate(&PhantomSpec::default()).map_err(|e| e.to_string())?;
    let g = truth.labels.geometry();
    let extent = Box3::new(g.extent_min(), g.extent_max()).unwrap();
    let anchors = AnchorGrid::new(AnchorGrid::default_sizes(), [2.0; 3], extent).map_err(|e| e.to_string())?.generate();
    let (pos, neg) = check_sampler(&anchors, &truth.boxes, &SamplerConfig::default())?;
    within(
        t0,
        Duration::from_secs(120),
        format!("1000 NMS sets match oracle; sampler on {} anchors: {pos} positives, {neg} negatives", anchors.len()),
    )
}

// 5, 6: realignment and dilation

fn realigned_boxes(t: &PhantomTruth, jaw: Jaw) -> Result<Vec<Box3>, String> {
    let frame =
        voi_frame(t.labels.geometry(), &t.pose_of(jaw).unwrap(), &VoiSpec::default()).map_err(|e| e.to_string())?;
    Ok(map_label_boxes(&t.labels, &frame.to_voi())
        .into_iter()
        .filter(|(l, _)| jaw_of(*l as u8) == jaw)
        .map(|(_, b)| b)
        .collect())
}

fn criterion_5() -> Check {
    let t0 = Instant::now();
    let mut worst = f64::INFINITY;
    for seed in 0..5 {
        let t = generate(&PhantomSpec { seed, tilt_deg: 15.0, ..PhantomSpec::default() }).map_err(|e| e.to_string())?;
        for jaw in jaws() {
            let before = mean_overlap_ratio(&t.boxes_of(jaw));
            let after = mean_overlap_ratio(&realigned_boxes(&t, jaw)?);
            let cut = 1.0 - after / before;
            ensure!(cut >= 0.20, "seed {seed} {}: OR {before:.4} -> {after:.4}, cut {cut:.3} < 0.20", jaw.as_str());
            worst = worst.min(cut);
        }
    }
    within(t0, Duration::from_secs(60), format!("5 seeds x 2 jaws at 15 deg, smallest OR cut {worst:.3} >= 0.20"))
}

fn criterion_6() -> Check {
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();
    ensure!(cfg.detection.margin_mm == 2.0, "default margin is {} mm", cfg.detection.margin_mm);
    let mut n = 0;
    for tilt in [0.0, 15.0] {
        let t = generate(&PhantomSpec { tilt_deg: tilt, ..PhantomSpec::default() }).map_err(|e| e.to_string())?;
        let g = t.labels.geometry();
        let bounds = Box3::new(g.extent_min(), g.extent_max()).unwrap();
        for b in &t.boxes {
            let id = b.tooth_id.unwrap();
            let d = dilate(b, 2.0, &bounds).map_err(|e| e.to_string())?;
            let oir = object_include_ratio(&t.labels.mask_of(id as u16).foreground_points(), &d)
                .map_err(|e| e.to_string())?;
            ensure!(oir == 1.0, "tilt {tilt}: tooth {id} source OIR {oir}");
            n += 1;
        }
        for jaw in jaws() {
            let run = run_jaw(&t, jaw, &cfg).map_err(|e| e.to_string())?;
            for b in &run.boxes {
                let id = b.tooth_id.unwrap();
                let pts = run.voi_labels.mask_of(id as u16).foreground_points();
                let oir = object_include_ratio(&pts, b).map_err(|e| e.to_string())?;
                ensure!(oir == 1.0, "tilt {tilt}: tooth {id} VOI OIR {oir}");
                n += 1;
            }
        }
    }
    within(t0, Duration::from_secs(60), format!("{n} tooth boxes dilated by 2 mm, every OIR = 1.00"))
}

// 7: metrics

const SPACING: [f64; 3] = [0.5, 0.7, 1.0];

fn random_labels(r: &mut ChaCha8Rng, g: GridGeometry, k: u16) -> LabelMap {
    let mut m = LabelMap::filled(g, 0);
    for l in 1..=k {
        for _ in 0..r.random_range(1..=2) {
            let c = [0, 1, 2].map(|a| r.random_range(0.0..g.dims[a] as f64));
            let rad = r.random_range(1.0..3.5);
            for z in 0..g.dims[2] {
                for y in 0..g.dims[1] {
                    for x in 0..g.dims[0] {
                        let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                        if d2 <= rad * rad {
                            m.set(x, y, z, l);
                        }
                    }
                }
            }
        }
        let c = [0, 1, 2].map(|a| r.random_range(0..g.dims[a]));
        m.set(c[0], c[1], c[2], l);
    }
    m
}

fn brute_surface(m: &LabelMap, l: Option<u16>) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = m.dims();
    let on = |x: i64, y: i64, z: i64| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            return false;
        }
        let v = m.get(x as usize, y as usize, z as usize);
        match l {
            Some(l) => v == l,
            None => v != 0,
        }
    };
    let mut out = Vec::new();
    for z in 0..nz as i64 {
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                if on(x, y, z)
                    && [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
                        .iter()
                        .any(|&(a, b, c)| !on(x + a, y + b, z + c))
                {
                    out.push([x as f64 * SPACING[0], y as f64 * SPACING[1], z as f64 * SPACING[2]]);
                }
            }
        }
    }
    out
}

fn brute_hd_assd(a: &[[f64; 3]], b: &[[f64; 3]]) -> (f64, f64) {
    let directed = |a: &[[f64; 3]], b: &[[f64; 3]]| -> Vec<f64> {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let (ab, ba) = (directed(a, b), directed(b, a));
    let hd = ab.iter().chain(&ba).fold(0.0f64, |m, &d| m.max(d));
    (hd, (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64)
}

fn counts(gt: &LabelMap, pred: &LabelMap, g: u16, p: u16) -> (usize, usize, usize) {
    let (mut inter, mut gs, mut ps) = (0, 0, 0);
    for (&a, &b) in gt.data().iter().zip(pred.data()) {
        inter += (a == g && b == p) as usize;
        gs += (a == g) as usize;
        ps += (b == p) as usize;
    }
    (inter, gs, ps)
}

/// Greedy AJI from the definition: ground truth in ascending label order
/// takes the unused prediction of highest Jaccard (smaller label on ties).
fn oracle_aji(gt: &LabelMap, pred: &LabelMap) -> (f64, BTreeMap<u16, Option<u16>>) {
    let labels = |m: &LabelMap| {
        let mut v: Vec<u16> = m.data().iter().copied().filter(|&l| l != 0).collect();
        v.sort();
        v.dedup();
        v
    };
    let (gts, preds) = (labels(gt), labels(pred));
    let mut used = Vec::new();
    let mut assign = BTreeMap::new();
    let (mut num, mut den) = (0usize, 0usize);
    for &g in &gts {
        let mut best: Option<(f64, u16, usize, usize)> = None;
        for &p in preds.iter().filter(|p| !used.contains(*p)) {
            let (i, gs, ps) = counts(gt, pred, g, p);
            if i == 0 {
                continue;
            }
            let j = i as f64 / (gs + ps - i) as f64;
            if best.is_none_or(|b| j > b.0) {
                best = Some((j, p, i, gs + ps - i));
            }
        }
        match best {
            Some((_, p, i, u)) => {
                used.push(p);
                num += i;
                den += u;
            }
            None => den += counts(gt, pred, g, 0).1,
        }
        assign.insert(g, best.map(|b| b.1));
    }
    for &p in preds.iter().filter(|p| !used.contains(*p)) {
        den += pred.data().iter().filter(|&&l| l == p).count();
    }
    (num as f64 / den as f64, assign)
}

/// Largest deviation of the library report from the oracles.
fn metric_deviation(gt: &LabelMap, pred: &LabelMap) -> Result<f64, String> {
    let rep = per_instance_report(gt, pred).map_err(|e| e.to_string())?;
    let (aji, assign) = oracle_aji(gt, pred);
    let mut worst = (rep.aji - aji).abs();
    for m in &rep.per_instance {
        ensure!(assign.get(&m.gt) == Some(&m.pred), "gt {} matched to {:?}", m.gt, m.pred);
        let Some(p) = m.pred else { continue };
        let (i, gs, ps) = counts(gt, pred, m.gt, p);
        worst = worst.max((m.f1 - 2.0 * i as f64 / (gs + ps) as f64).abs());
        let (hd, assd) = brute_hd_assd(&brute_surface(gt, Some(m.gt)), &brute_surface(pred, Some(p)));
        worst = worst.max((m.hd_mm.unwrap() - hd).abs()).max((m.assd_mm.unwrap() - assd).abs());
    }
    let (hd, assd) = brute_hd_assd(&brute_surface(gt, None), &brute_surface(pred, None));
    worst = worst.max((rep.integrated_hd_mm.unwrap() - hd).abs()).max((rep.integrated_assd_mm.unwrap() - assd).abs());

    let same = per_instance_report(gt, gt).map_err(|e| e.to_string())?;
    ensure!(
        same.f1.mean == 1.0 && same.hd_mm.mean == 0.0 && same.assd_mm.mean == 0.0 && same.aji == 1.0,
        "identical maps give F1 {} HD {} ASSD {} AJI {}",
        same.f1.mean,
        same.hd_mm.mean,
        same.assd_mm.mean,
        same.aji
    );
    Ok(worst)
}

fn toy_map(rows: [&str; 6]) -> LabelMap {
    let g = GridGeometry::new([6, 6, 1], SPACING, [0.0; 3]).unwrap();
    let mut m = LabelMap::filled(g, 0);
    for (j, r) in rows.iter().enumerate() {
        for (i, c) in r.bytes().enumerate() {
            m.set(i, j, 0, if c == b'.' { 0 } else { (c - b'0') as u16 });
        }
    }
    m
}

fn criterion_7() -> Check {
    let t0 = Instant::now();
    let gt = toy_map(["111.22", "111.22", "111.22", "......", "......", "......"]);
    let pred = toy_map(["11.222", "11.222", "11..22", "......", "...33.", "...33."]);
    // 1 ~ 1: 6 of 9, 2 ~ 2: 6 of 8, unmatched 3 adds 4 voxels
    let hand = 12.0 / 21.0;
    let got = per_instance_report(&gt, &pred).map_err(|e| e.to_string())?.aji;
    ensure!((got - hand).abs() <= 1e-9, "toy AJI {got} vs hand value {hand}");
    let mut worst = metric_deviation(&gt, &pred).map_err(|e| format!("toy map: {e}"))?;

    let g = GridGeometry::new([14, 12, 10], SPACING, [0.0; 3]).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(77);
    for pair in 0..20 {
        let k = r.random_range(1..=4);
        let gt = random_labels(&mut r, g, k);
        let kp = r.random_range(1..=4);
        let pred = random_labels(&mut r, g, kp);
        worst = worst.max(metric_deviation(&gt, &pred).map_err(|e| format!("pair {pair}: {e}"))?);
        ensure!(worst <= 1e-9, "pair {pair}: deviation from oracle {worst:.3e} > 1e-9");
    }
    within(
        t0,
        Duration::from_secs(60),
        format!(
            "toy map AJI 12/21 and 20 random pairs, max deviation {worst:.1e} <= 1e-9; identical maps give (1, 0, 0)"
        ),
    )
}

// 8, 9: end to end

fn criterion_8() -> Check {
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();
    let mut lines = Vec::new();
    for tilt in [0.0, 15.0] {
        let t = generate(&PhantomSpec { tilt_deg: tilt, ..PhantomSpec::default() }).map_err(|e| e.to_string())?;
        let run = run_pipeline(&t, &cfg).map_err(|e| e.to_string())?;
        let s = score(&t.labels, &run.labels).map_err(|e| e.to_string())?;
        ensure!(s.dice.len() == t.boxes.len(), "tilt {tilt}: {} of {} teeth scored", s.dice.len(), t.boxes.len());
        for &(id, d) in &s.dice {
            ensure!(d >= 0.95, "tilt {tilt}: tooth {id} Dice {d:.4} < 0.95");
        }
        ensure!(s.aji >= 0.90, "tilt {tilt}: AJI {:.4} < 0.90", s.aji);
        lines.push(format!("tilt {tilt}: min Dice {:.4}, AJI {:.4}", s.min_dice(), s.aji));
    }
    within(t0, Duration::from_secs(180), format!("{} (Dice >= 0.95, AJI >= 0.90)", lines.join("; ")))
}

fn criterion_9() -> Check {
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();
    let t = generate(&PhantomSpec { tilt_deg: 15.0, ..PhantomSpec::default() }).map_err(|e| e.to_string())?;
    let mut crops = 0;
    for jaw in jaws() {
        let (voi, _) =
            realign_voi(&t.volume, &t.pose_of(jaw).unwrap(), &VoiSpec::default()).map_err(|e| e.to_string())?;
        ensure!(voi.dims() == [224, 224, 112], "{} VOI dims {:?}", jaw.as_str(), voi.dims());
        let run = run_jaw(&t, jaw, &cfg).map_err(|e| e.to_string())?;
        for d in &run.crop_dims {
            ensure!(*d == [64, 64, 128], "crop dims {d:?}");
            crops += 1;
        }
    }
    ensure!(CROP_DIMS == [64, 64, 128], "crop constant {CROP_DIMS:?}");
    let mut net = Tsnet::new(TsnetConfig::default(), 0).map_err(|e| e.to_string())?;
    let input = Tensor::from_volume(&Volume::filled(GridGeometry::new(CROP_DIMS, [1.0; 3], [0.0; 3]).unwrap(), 0.5));
    let out = predict(&mut net, &input, Mode::Eval).map_err(|e| e.to_string())?;
    ensure!(out.shape() == [1, 1, 64, 64, 128], "TSNet output shape {:?}", out.shape());
    within(
        t0,
        Duration::from_secs(120),
        format!("VOI 224x224x112 for both jaws, {crops} crops at 64x64x128, TSNet output 64x64x128"),
    )
}

// 10: cutout

fn criterion_10() -> Check {
    let t0 = Instant::now();
    let spec = CutoutSpec::default();
    let v = Volume::filled(GridGeometry::new([64; 3], [1.0; 3], [0.0; 3]).unwrap(), 1.0);
    let (mut applied, mut seen) = (0, [false; 4]);
    for seed in 0..10_000 {
        let (out, b) = cutout(&v, &spec, seed).map_err(|e| e.to_string())?;
        let Some(b) = b else {
            ensure!(out == v, "draw {seed}: skipped cutout modified the volume");
            continue;
        };
        applied += 1;
        for s in b.sides {
            ensure!((13..=16).contains(&s), "draw {seed}: side {s} outside [13, 16]");
            seen[s - 13] = true;
        }
        let [nx, ny, nz] = out.dims();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let inside = (0..3).all(|a| b.lo[a] <= [x, y, z][a] && [x, y, z][a] < b.hi[a]);
                    let changed = out.get(x, y, z) != 1.0;
                    ensure!(changed == inside, "draw {seed}: voxel ({x}, {y}, {z}) changed={changed} inside={inside}");
                }
            }
        }
    }
    ensure!(seen.iter().all(|&s| s), "not every side in [13, 16] was drawn");
    within(
        t0,
        Duration::from_secs(120),
        format!("10000 draws, {applied} applied, sides in [13, 16], changes confined to the box"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("Chamfer DT vs Dijkstra and EDT", criterion_1),
        ("gradient check", criterion_2),
        ("toy training", criterion_3),
        ("NMS and anchor sampler", criterion_4),
        ("overlap ratio reduction", criterion_5),
        ("object include ratio", criterion_6),
        ("segmentation metrics", criterion_7),
        ("phantom pipeline round trip", criterion_8),
        ("tensor dimensions", criterion_9),
        ("cutout", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
