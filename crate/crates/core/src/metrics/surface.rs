//! Surface extraction and exact nearest-surface distances.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::bail;
use crate::volume::BinaryMask;
use crate::Result;

/// Foreground voxels with at least one face neighbour in the background.
/// Voxels outside the grid count as background.
pub fn surface(mask: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let mut out = BinaryMask::filled(*mask.geometry(), false);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !mask.get(i, j, k) {
                    continue;
                }
                let border = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                let open = border
                    || !mask.get(i - 1, j, k)
                    || !mask.get(i + 1, j, k)
                    || !mask.get(i, j - 1, k)
                    || !mask.get(i, j + 1, k)
                    || !mask.get(i, j, k - 1)
                    || !mask.get(i, j, k + 1);
                if open {
                    out.set(i, j, k, true);
                }
            }
        }
    }
    out
}

/// Squared distances along one line: `out[q] = min_p w (q - p)^2 + f[p]`
/// over the finite entries of `f` (lower envelope of parabolas).
fn envelope_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((fq + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = w * d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (in world units) from every voxel of the
/// `lo..hi` sub-box to the nearest `seeds` voxel inside that sub-box.
/// Returned row-major over the sub-box, x fastest.
pub(crate) fn squared_edt(seeds: &BinaryMask, lo: [usize; 3], hi: [usize; 3]) -> Vec<f64> {
    let s = seeds.geometry().spacing;
    let d = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let idx = |i: usize, j: usize, k: usize| i + d[0] * (j + d[1] * k);
    let mut g = vec![f64::INFINITY; d[0] * d[1] * d[2]];
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                if seeds.get(lo[0] + i, lo[1] + j, lo[2] + k) {
                    g[idx(i, j, k)] = 0.0;
                }
            }
        }
    }
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let n = d[axis];
        let w = s[axis] * s[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut line = vec![0.0; n];
        let mut res = vec![0.0; n];
        for b in 0..d[o2] {
            for a in 0..d[o1] {
                let at = |t: usize| {
                    let mut c = [0; 3];
                    c[axis] = t;
                    c[o1] = a;
                    c[o2] = b;
                    idx(c[0], c[1], c[2])
                };
                for t in 0..n {
                    line[t] = g[at(t)];
                }
                envelope_1d(&line, w, &mut res, &mut v, &mut z);
                for t in 0..n {
                    g[at(t)] = res[t];
                }
            }
        }
    }
    g
}

fn bbox(m: &BinaryMask) -> Option<([usize; 3], [usize; 3])> {
    let g = m.geometry();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (idx, &on) in m.data().iter().enumerate() {
        if on {
            any = true;
            let c = g.coords(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
    }
    any.then_some((lo, hi))
}

/// Distances from every surface voxel of `from` to the surface of `to`.
pub(crate) fn directed_surface_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    let (Some((alo, ahi)), Some((blo, bhi))) = (bbox(from), bbox(to)) else {
        return Vec::new();
    };
    let lo = [0, 1, 2].map(|a| alo[a].min(blo[a]));
    let hi = [0, 1, 2].map(|a| ahi[a].max(bhi[a]));
    let d2 = squared_edt(to, lo, hi);
    let d = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut out = Vec::new();
    for k in alo[2]..ahi[2] {
        for j in alo[1]..ahi[1] {
            for i in alo[0]..ahi[0] {
                if from.get(i, j, k) {
                    let li = (i - lo[0]) + d[0] * ((j - lo[1]) + d[1] * (k - lo[2]));
                    out.push(Float::sqrt(d2[li]));
                }
            }
        }
    }
    out
}

/// Both directed surface-distance lists for a pair of masks.
pub fn surface_distances(a: &BinaryMask, b: &BinaryMask) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.geometry() != b.geometry() {
        bail!(ShapeMismatch, "masks live on different grids");
    }
    if a.count() == 0 || b.count() == 0 {
        bail!(EmptyRegion, "surface distances need two nonempty masks");
    }
    let (sa, sb) = (surface(a), surface(b));
    Ok((directed_surface_distances(&sa, &sb), directed_surface_distances(&sb, &sa)))
}

/// Hausdorff distance: the larger of the two directed maxima.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (ab, ba) = surface_distances(a, b)?;
    Ok(ab.iter().chain(&ba).fold(0.0, |m, &d| m.max(d)))
}

/// Average symmetric surface distance.
pub fn assd(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (ab, ba) = surface_distances(a, b)?;
    let total: f64 = ab.iter().sum::<f64>() + ba.iter().sum::<f64>();
    Ok(total / (ab.len() + ba.len()) as f64)
}
