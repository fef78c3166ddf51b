use std::collections::BTreeMap;

use dentvox_core::metrics::{aji, assd, hausdorff, per_instance_report};
use dentvox_core::volume::{BinaryMask, GridGeometry, LabelMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACING: [f64; 3] = [0.5, 0.7, 1.0];

fn geom(dims: [usize; 3]) -> GridGeometry {
    GridGeometry::new(dims, SPACING, [0.0; 3]).unwrap()
}

/// Union of 1–3 random balls, guaranteed nonempty.
fn blob(rng: &mut ChaCha8Rng, g: GridGeometry) -> BinaryMask {
    let mut m = BinaryMask::filled(g, false);
    for _ in 0..rng.random_range(1..=3) {
        let c = [0, 1, 2].map(|a| rng.random_range(0.0..g.dims[a] as f64));
        let r = rng.random_range(1.0..4.0);
        for k in 0..g.dims[2] {
            for j in 0..g.dims[1] {
                for i in 0..g.dims[0] {
                    let d2 = (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) + (k as f64 - c[2]).powi(2);
                    if d2 <= r * r {
                        m.set(i, j, k, true);
                    }
                }
            }
        }
    }
    let c = [0, 1, 2].map(|a| rng.random_range(0..g.dims[a]));
    m.set(c[0], c[1], c[2], true);
    m
}

/// Foreground voxels with a face neighbour that is background or outside.
fn brute_surface(m: &BinaryMask) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = m.dims();
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !m.get(i, j, k) {
                    continue;
                }
                let (i, j, k) = (i as i64, j as i64, k as i64);
                let edge =
                    [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)].iter().any(|&(a, b, c)| {
                        let (x, y, z) = (i + a, j + b, k + c);
                        x < 0
                            || y < 0
                            || z < 0
                            || x >= nx as i64
                            || y >= ny as i64
                            || z >= nz as i64
                            || !m.get(x as usize, y as usize, z as usize)
                    });
                if edge {
                    out.push([i as f64 * SPACING[0], j as f64 * SPACING[1], k as f64 * SPACING[2]]);
                }
            }
        }
    }
    out
}

fn directed(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<f64> {
    a.iter()
        .map(|p| {
            b.iter()
                .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn brute_hd_assd(a: &BinaryMask, b: &BinaryMask) -> (f64, f64) {
    let (sa, sb) = (brute_surface(a), brute_surface(b));
    let (ab, ba) = (directed(&sa, &sb), directed(&sb, &sa));
    let hd = ab.iter().chain(&ba).fold(0.0f64, |m, &d| m.max(d));
    let assd = (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64;
    (hd, assd)
}

#[test]
fn surface_metrics_match_brute_force_on_random_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = geom([14, 12, 10]);
    for pair in 0..20 {
        let (a, b) = (blob(&mut rng, g), blob(&mut rng, g));
        let (hd, sd) = brute_hd_assd(&a, &b);
        let (h, s) = (hausdorff(&a, &b).unwrap(), assd(&a, &b).unwrap());
        assert!((h - hd).abs() <= 1e-9, "pair {pair}: hd {h} vs {hd}");
        assert!((s - sd).abs() <= 1e-9, "pair {pair}: assd {s} vs {sd}");
    }
}

fn row_labels(cells: &[u16]) -> LabelMap {
    let g = GridGeometry::new([cells.len(), 1, 1], [1.0; 3], [0.0; 3]).unwrap();
    LabelMap::from_vec(g, cells.to_vec()).unwrap()
}

fn instance_sizes(m: &LabelMap) -> BTreeMap<u16, usize> {
    let mut s = BTreeMap::new();
    for &l in m.data().iter().filter(|&&l| l != 0) {
        *s.entry(l).or_insert(0) += 1;
    }
    s
}

fn pair_counts(gt: &LabelMap, pred: &LabelMap, g: u16, p: u16) -> (usize, usize) {
    let mut inter = 0;
    let mut uni = 0;
    for (&a, &b) in gt.data().iter().zip(pred.data()) {
        inter += (a == g && b == p) as usize;
        uni += (a == g || b == p) as usize;
    }
    (inter, uni)
}

/// AJI of an explicit assignment gt -> Option<pred>.
fn aji_of(gt: &LabelMap, pred: &LabelMap, assign: &[(u16, Option<u16>)]) -> f64 {
    let (gs, ps) = (instance_sizes(gt), instance_sizes(pred));
    let mut num = 0;
    let mut den = 0;
    for &(g, p) in assign {
        match p {
            Some(p) => {
                let (i, u) = pair_counts(gt, pred, g, p);
                num += i;
                den += u;
            }
            None => den += gs[&g],
        }
    }
    for (p, s) in ps {
        if !assign.iter().any(|&(_, q)| q == Some(p)) {
            den += s;
        }
    }
    num as f64 / den as f64
}

/// Maximum AJI over all one-to-one partial assignments.
fn exhaustive_aji(gt: &LabelMap, pred: &LabelMap) -> f64 {
    let gts: Vec<u16> = instance_sizes(gt).into_keys().collect();
    let preds: Vec<u16> = instance_sizes(pred).into_keys().collect();
    fn rec(
        i: usize,
        gts: &[u16],
        preds: &[u16],
        cur: &mut Vec<(u16, Option<u16>)>,
        f: &mut dyn FnMut(&[(u16, Option<u16>)]),
    ) {
        if i == gts.len() {
            f(cur);
            return;
        }
        cur.push((gts[i], None));
        rec(i + 1, gts, preds, cur, f);
        cur.pop();
        for &p in preds {
            if cur.iter().any(|&(_, q)| q == Some(p)) {
                continue;
            }
            cur.push((gts[i], Some(p)));
            rec(i + 1, gts, preds, cur, f);
            cur.pop();
        }
    }
    let mut best = 0.0f64;
    rec(0, &gts, &preds, &mut Vec::new(), &mut |a| best = best.max(aji_of(gt, pred, a)));
    best
}

/// Greedy matching written directly from the definition on dense arrays.
fn naive_greedy_aji(gt: &LabelMap, pred: &LabelMap) -> f64 {
    let gts: Vec<u16> = instance_sizes(gt).into_keys().collect();
    let preds: Vec<u16> = instance_sizes(pred).into_keys().collect();
    let mut used: Vec<u16> = Vec::new();
    let mut assign = Vec::new();
    for &g in &gts {
        let mut best: Option<(f64, u16)> = None;
        for &p in &preds {
            if used.contains(&p) {
                continue;
            }
            let (i, u) = pair_counts(gt, pred, g, p);
            if i == 0 {
                continue;
            }
            let j = i as f64 / u as f64;
            if best.is_none_or(|(bj, _)| j > bj) {
                best = Some((j, p));
            }
        }
        if let Some((_, p)) = best {
            used.push(p);
        }
        assign.push((g, best.map(|b| b.1)));
    }
    aji_of(gt, pred, &assign)
}

fn toy_6x6() -> (LabelMap, LabelMap) {
    let g = GridGeometry::new([6, 6, 1], [1.0; 3], [0.0; 3]).unwrap();
    let gt_rows = ["111.22", "111.22", "111.22", "......", "......", "......"];
    let pr_rows = ["11.222", "11.222", "11..22", "......", "...33.", "...33."];
    let parse = |rows: [&str; 6]| {
        let mut m = LabelMap::filled(g, 0);
        for (j, r) in rows.iter().enumerate() {
            for (i, c) in r.bytes().enumerate() {
                m.set(i, j, 0, if c == b'.' { 0 } else { (c - b'0') as u16 });
            }
        }
        m
    };
    (parse(gt_rows), parse(pr_rows))
}

#[test]
fn aji_toy_matches_exhaustive_matching() {
    let (gt, pred) = toy_6x6();
    // gt1 ~ pred1: 6 / 9, gt2 ~ pred2: 6 / 8, pred3 (4 voxels) unmatched
    let expect = (6.0 + 6.0) / (9.0 + 8.0 + 4.0);
    let got = aji(&gt, &pred).unwrap();
    assert!((got - expect).abs() < 1e-15);
    assert!((got - exhaustive_aji(&gt, &pred)).abs() < 1e-15);
}

#[test]
fn aji_matches_naive_greedy_on_random_label_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let g = geom([12, 10, 8]);
    for _ in 0..20 {
        let mut maps = [LabelMap::filled(g, 0), LabelMap::filled(g, 0)];
        for m in &mut maps {
            for l in 1..=rng.random_range(1..=4u16) {
                let b = blob(&mut rng, g);
                for (d, &v) in m.data_mut().iter_mut().zip(b.data()) {
                    if v {
                        *d = l;
                    }
                }
            }
        }
        let got = aji(&maps[0], &maps[1]).unwrap();
        assert!((got - naive_greedy_aji(&maps[0], &maps[1])).abs() <= 1e-12);
        assert!(got <= exhaustive_aji(&maps[0], &maps[1]) + 1e-12);
    }
}

#[test]
fn identical_inputs_score_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = geom([10, 10, 10]);
    let a = blob(&mut rng, g);
    assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    assert_eq!(assd(&a, &a).unwrap(), 0.0);
    let l = a.map(|v| v as u16 * 3);
    assert_eq!(aji(&l, &l).unwrap(), 1.0);
    let r = per_instance_report(&l, &l).unwrap();
    assert_eq!((r.f1.mean, r.hd_mm.mean, r.assd_mm.mean), (1.0, 0.0, 0.0));
}

#[test]
fn missing_prediction_scores_zero_f1() {
    let gt = row_labels(&[1, 1, 0, 2, 2, 0, 3, 3]);
    let pred = row_labels(&[1, 1, 0, 2, 2, 0, 0, 0]);
    let r = per_instance_report(&gt, &pred).unwrap();
    let t3 = r.per_instance.iter().find(|m| m.gt == 3).unwrap();
    assert_eq!((t3.f1, t3.pred, t3.hd_mm), (0.0, None, None));
    assert!((r.f1.mean - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn greedy_aji_depends_on_gt_order_under_contention() {
    // prediction 1 overlaps both gt instances; whichever gt is visited
    // first claims it
    let pred = row_labels(&[0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2]);
    let gt = row_labels(&[1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
    let swapped = row_labels(&[2, 2, 2, 2, 2, 2, 1, 1, 1, 1, 1]);
    assert!((aji(&gt, &pred).unwrap() - 0.2).abs() < 1e-15);
    assert!((aji(&swapped, &pred).unwrap() - 4.0 / 14.0).abs() < 1e-15);
}

/// Small random label map: up to 3 disjoint boxes.
fn label_map_strategy() -> impl Strategy<Value = (Vec<u16>, Vec<u16>)> {
    let cells = 6 * 5 * 4;
    (prop::collection::vec(0u16..4, cells), prop::collection::vec(0u16..4, cells))
}

fn lm(v: Vec<u16>) -> LabelMap {
    LabelMap::from_vec(geom([6, 5, 4]), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn surface_metrics_symmetric_and_ordered((a, b) in label_map_strategy()) {
        let (ma, mb) = (lm(a).map(|l| l != 0), lm(b).map(|l| l != 0));
        prop_assume!(ma.count() > 0 && mb.count() > 0);
        let (h1, h2) = (hausdorff(&ma, &mb).unwrap(), hausdorff(&mb, &ma).unwrap());
        let (s1, s2) = (assd(&ma, &mb).unwrap(), assd(&mb, &ma).unwrap());
        prop_assert_eq!(h1, h2);
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(h1 >= s1 && s1 >= 0.0);
    }

    #[test]
    fn aji_bounded_by_pooled_jaccard((a, b) in label_map_strategy()) {
        let (ga, pb) = (lm(a), lm(b));
        let (fa, fb) = (ga.map(|l| l != 0), pb.map(|l| l != 0));
        let inter = fa.data().iter().zip(fb.data()).filter(|(x, y)| **x && **y).count();
        let uni = fa.data().iter().zip(fb.data()).filter(|(x, y)| **x || **y).count();
        prop_assume!(uni > 0);
        let v = aji(&ga, &pb).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(v <= inter as f64 / uni as f64 + 1e-12);
    }

    #[test]
    fn relabeling_invariance(
        boxes in prop::collection::vec(((0usize..5, 1usize..6), (0usize..4, 1usize..5), (0usize..5, 1usize..6), (0usize..4, 1usize..5)), 3),
        perm in Just([1u16, 2, 3]).prop_shuffle(),
    ) {
        // instance l lives in its own x slab, so no prediction can overlap
        // two gt instances
        let mut gt = lm(vec![0; 120]);
        let mut pred = gt.clone();
        for (l, &((gy, gh), (gz, gd), (py, ph), (pz, pd))) in boxes.iter().enumerate() {
            for i in 2 * l..2 * l + 2 {
                for j in gy..(gy + gh).min(5) { for k in gz..(gz + gd).min(4) { gt.set(i, j, k, l as u16 + 1); } }
                for j in py..(py + ph).min(5) { for k in pz..(pz + pd).min(4) { pred.set(i, j, k, l as u16 + 1); } }
            }
        }
        let relabel = |m: &LabelMap| m.map(|l| if l == 0 { 0 } else { perm[l as usize - 1] });
        let (r1, r2) = (per_instance_report(&gt, &pred).unwrap(), per_instance_report(&relabel(&gt), &relabel(&pred)).unwrap());
        prop_assert!((r1.aji - r2.aji).abs() < 1e-12);
        prop_assert!((r1.f1.mean - r2.f1.mean).abs() < 1e-12);
        prop_assert!((r1.hd_mm.mean - r2.hd_mm.mean).abs() < 1e-12);
        prop_assert!((r1.assd_mm.mean - r2.assd_mm.mean).abs() < 1e-12);
        prop_assert_eq!(r1.integrated_hd_mm, r2.integrated_hd_mm);
        for m in &r1.per_instance {
            let twin = r2.per_instance.iter().find(|n| n.gt == perm[m.gt as usize - 1]).unwrap();
            prop_assert_eq!(m.f1, twin.f1);
            prop_assert_eq!(m.hd_mm, twin.hd_mm);
        }
    }
}
