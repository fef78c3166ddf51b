//! Forward and backward kernels. All loops run in a fixed order so results
//! are bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::Tensor;
use crate::error::bail;
use crate::Result;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Stride 1 with "same" padding for an odd cubic kernel.
    pub fn same(kernel: usize, groups: usize) -> Self {
        Self { stride: 1, padding: kernel / 2, groups }
    }
}

/// Output positions `o` with `0 <= o*s + d - p < n_in`, clipped to `n_out`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, s: usize, d: usize, p: usize) -> (usize, usize) {
    let lo = if d >= p { 0 } else { (p - d).div_ceil(s) };
    if n_in + p <= d {
        return (0, 0);
    }
    let hi = ((n_in - 1 + p - d) / s + 1).min(n_out);
    (lo.min(hi), hi)
}

fn conv_dims(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: ConvSpec) -> Result<[usize; 5]> {
    let [n, cin, xx, yy, zz] = x.shape();
    let [cout, cing, kx, ky, kz] = w.shape();
    let g = spec.groups;
    if g == 0 || spec.stride == 0 {
        bail!(InvalidArgument, "groups and stride must be >= 1");
    }
    if cin % g != 0 || cout % g != 0 || cing * g != cin {
        bail!(ShapeMismatch, "conv: {cin} input / {cout} output channels, weight {:?}, groups {g}", w.shape());
    }
    if let Some(b) = b {
        if b.shape() != [1, cout, 1, 1, 1] {
            bail!(ShapeMismatch, "conv bias {:?} for {cout} channels", b.shape());
        }
    }
    let out = |i: usize, k: usize| -> Result<usize> {
        if i + 2 * spec.padding < k {
            bail!(ShapeMismatch, "conv kernel {k} larger than padded input {i}");
        }
        Ok((i + 2 * spec.padding - k) / spec.stride + 1)
    };
    Ok([n, cout, out(xx, kx)?, out(yy, ky)?, out(zz, kz)?])
}

/// Visits every (input slice, output slice, weight index, kernel offset)
/// combination of a grouped convolution.
fn conv_walk(
    xs: [usize; 5],
    ws: [usize; 5],
    os: [usize; 5],
    spec: ConvSpec,
    mut f: impl FnMut(usize, usize, usize, [usize; 3], [(usize, usize); 3]),
) {
    let [n, cin, ..] = xs;
    let [cout, cing, kx, ky, kz] = ws;
    let coutg = cout / spec.groups;
    let s = spec.stride;
    let p = spec.padding;
    for b in 0..n {
        for grp in 0..spec.groups {
            for col in 0..coutg {
                let co = grp * coutg + col;
                for cil in 0..cing {
                    let ci = grp * cing + cil;
                    for dz in 0..kz {
                        let rz = valid_range(os[4], xs[4], s, dz, p);
                        for dy in 0..ky {
                            let ry = valid_range(os[3], xs[3], s, dy, p);
                            for dx in 0..kx {
                                let rx = valid_range(os[2], xs[2], s, dx, p);
                                let widx = dx + kx * (dy + ky * (dz + kz * (cil + cing * co)));
                                f(b * cin + ci, b * cout + co, widx, [dx, dy, dz], [rx, ry, rz]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Grouped 3D cross-correlation with optional per-channel bias.
pub fn conv3d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: ConvSpec) -> Result<Tensor> {
    let os = conv_dims(x, w, b, spec)?;
    let xs = x.shape();
    let mut out = Tensor::zeros(os);
    let ov = os[2] * os[3] * os[4];
    let iv = xs[2] * xs[3] * xs[4];
    if let Some(b) = b {
        for bn in 0..os[0] {
            for co in 0..os[1] {
                out.slice_mut(bn, co).iter_mut().for_each(|v| *v = b.data()[co]);
            }
        }
    }
    let (s, p) = (spec.stride, spec.padding);
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    conv_walk(xs, w.shape(), os, spec, |islice, oslice, widx, d, r| {
        let wv = wd[widx];
        let ib = &xd[islice * iv..(islice + 1) * iv];
        let ob = &mut od[oslice * ov..(oslice + 1) * ov];
        for oz in r[2].0..r[2].1 {
            let iz = oz * s + d[2] - p;
            for oy in r[1].0..r[1].1 {
                let iy = oy * s + d[1] - p;
                let irow = (iz * xs[3] + iy) * xs[2];
                let orow = (oz * os[3] + oy) * os[2];
                if s == 1 {
                    let (n, i0) = (r[0].1 - r[0].0, irow + r[0].0 + d[0] - p);
                    for (o, &i) in ob[orow + r[0].0..orow + r[0].1].iter_mut().zip(&ib[i0..i0 + n]) {
                        *o += wv * i;
                    }
                    continue;
                }
                for ox in r[0].0..r[0].1 {
                    ob[orow + ox] += wv * ib[irow + ox * s + d[0] - p];
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of [`conv3d`] with respect to input, weight and bias.
pub fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    with_bias: bool,
    gy: &Tensor,
    spec: ConvSpec,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let os = conv_dims(x, w, None, spec)?;
    if gy.shape() != os {
        bail!(ShapeMismatch, "conv output gradient {:?} vs {:?}", gy.shape(), os);
    }
    let xs = x.shape();
    let ov = os[2] * os[3] * os[4];
    let iv = xs[2] * xs[3] * xs[4];
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(w.shape());
    let (s, p) = (spec.stride, spec.padding);
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    {
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        conv_walk(xs, w.shape(), os, spec, |islice, oslice, widx, d, r| {
            let wv = wd[widx];
            let ib = &xd[islice * iv..(islice + 1) * iv];
            let gb = &gyd[oslice * ov..(oslice + 1) * ov];
            let gib = &mut gxd[islice * iv..(islice + 1) * iv];
            let mut acc = 0.0;
            for oz in r[2].0..r[2].1 {
                let iz = oz * s + d[2] - p;
                for oy in r[1].0..r[1].1 {
                    let iy = oy * s + d[1] - p;
                    let irow = (iz * xs[3] + iy) * xs[2];
                    let orow = (oz * os[3] + oy) * os[2];
                    if s == 1 {
                        let n = r[0].1 - r[0].0;
                        let i0 = irow + r[0].0 + d[0] - p;
                        let grow = &gb[orow + r[0].0..orow + r[0].1];
                        let rows = gib[i0..i0 + n].iter_mut().zip(&ib[i0..i0 + n]).zip(grow);
                        for ((gi, &xi), &g) in rows {
                            *gi += wv * g;
                            acc += g * xi;
                        }
                        continue;
                    }
                    for ox in r[0].0..r[0].1 {
                        let ii = irow + ox * s + d[0] - p;
                        let g = gb[orow + ox];
                        gib[ii] += wv * g;
                        acc += g * ib[ii];
                    }
                }
            }
            gwd[widx] += acc;
        });
    }
    let gb = with_bias.then(|| {
        let mut t = Tensor::zeros([1, os[1], 1, 1, 1]);
        for bn in 0..os[0] {
            for co in 0..os[1] {
                t.data_mut()[co] += gy.slice(bn, co).iter().sum::<f64>();
            }
        }
        t
    });
    Ok((gx, gw, gb))
}

fn convt_check(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<[usize; 5]> {
    let [n, cin, xx, yy, zz] = x.shape();
    let [wcin, cout, kx, ky, kz] = w.shape();
    if wcin != cin || [kx, ky, kz] != [2, 2, 2] {
        bail!(ShapeMismatch, "transposed conv weight {:?} for {cin} input channels", w.shape());
    }
    if let Some(b) = b {
        if b.shape() != [1, cout, 1, 1, 1] {
            bail!(ShapeMismatch, "transposed conv bias {:?}", b.shape());
        }
    }
    Ok([n, cout, 2 * xx, 2 * yy, 2 * zz])
}

/// 2³ transposed convolution with stride 2; weight `[Cin, Cout, 2, 2, 2]`.
pub fn conv_transpose2(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let os = convt_check(x, w, b)?;
    let [n, cin, xx, yy, zz] = x.shape();
    let cout = os[1];
    let mut out = Tensor::zeros(os);
    for bn in 0..n {
        for co in 0..cout {
            let bias = b.map_or(0.0, |b| b.data()[co]);
            let o = out.slice_mut(bn, co);
            o.iter_mut().for_each(|v| *v = bias);
            for ci in 0..cin {
                let xi = x.slice(bn, ci);
                for c in 0..2 {
                    for bb in 0..2 {
                        for a in 0..2 {
                            let wv = w.data()[a + 2 * (bb + 2 * (c + 2 * (co + cout * ci)))];
                            for z in 0..zz {
                                for y in 0..yy {
                                    let orow = ((2 * z + c) * 2 * yy + 2 * y + bb) * 2 * xx;
                                    let irow = (z * yy + y) * xx;
                                    for xq in 0..xx {
                                        o[orow + 2 * xq + a] += wv * xi[irow + xq];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv_transpose2_backward(
    x: &Tensor,
    w: &Tensor,
    with_bias: bool,
    gy: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let os = convt_check(x, w, None)?;
    if gy.shape() != os {
        bail!(ShapeMismatch, "transposed conv gradient {:?} vs {:?}", gy.shape(), os);
    }
    let [n, cin, xx, yy, zz] = x.shape();
    let cout = os[1];
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    for bn in 0..n {
        for co in 0..cout {
            let g = gy.slice(bn, co);
            for ci in 0..cin {
                let xi = x.slice(bn, ci).to_vec();
                let mut gxi = vec![0.0; xi.len()];
                for c in 0..2 {
                    for bb in 0..2 {
                        for a in 0..2 {
                            let widx = a + 2 * (bb + 2 * (c + 2 * (co + cout * ci)));
                            let wv = w.data()[widx];
                            let mut acc = 0.0;
                            for z in 0..zz {
                                for y in 0..yy {
                                    let orow = ((2 * z + c) * 2 * yy + 2 * y + bb) * 2 * xx;
                                    let irow = (z * yy + y) * xx;
                                    for xq in 0..xx {
                                        let gv = g[orow + 2 * xq + a];
                                        gxi[irow + xq] += wv * gv;
                                        acc += gv * xi[irow + xq];
                                    }
                                }
                            }
                            gw.data_mut()[widx] += acc;
                        }
                    }
                }
                gx.slice_mut(bn, ci).iter_mut().zip(&gxi).for_each(|(a, b)| *a += b);
            }
        }
    }
    let gb = with_bias.then(|| {
        let mut t = Tensor::zeros([1, cout, 1, 1, 1]);
        for bn in 0..n {
            for co in 0..cout {
                t.data_mut()[co] += gy.slice(bn, co).iter().sum::<f64>();
            }
        }
        t
    });
    Ok((gx, gw, gb))
}

/// 2³ max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat input index of the maximum (first in scan order on
/// ties).
pub fn max_pool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, xx, yy, zz] = x.shape();
    if xx % 2 != 0 || yy % 2 != 0 || zz % 2 != 0 {
        bail!(ShapeMismatch, "max pooling needs even spatial dims, got {:?}", x.spatial());
    }
    let (ox, oy, oz) = (xx / 2, yy / 2, zz / 2);
    let mut out = Tensor::zeros([n, c, ox, oy, oz]);
    let mut arg = Vec::with_capacity(out.len());
    let iv = xx * yy * zz;
    for s in 0..n * c {
        let base = s * iv;
        let xi = &x.data()[base..base + iv];
        for z in 0..oz {
            for y in 0..oy {
                for xq in 0..ox {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = 0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = ((2 * z + dz) * yy + 2 * y + dy) * xx + 2 * xq + dx;
                                if xi[i] > best || (bi == 0 && dz + dy + dx == 0) {
                                    best = xi[i];
                                    bi = i;
                                }
                            }
                        }
                    }
                    out.data_mut()[arg.len()] = best;
                    arg.push(base + bi);
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2_backward(input_shape: [usize; 5], argmax: &[usize], gy: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(input_shape);
    for (o, &i) in argmax.iter().enumerate() {
        gx.data_mut()[i] += gy.data()[o];
    }
    gx
}

/// Batch statistics kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub count: usize,
}

fn bn_check(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    let c = x.shape()[1];
    if gamma.shape() != [1, c, 1, 1, 1] || beta.shape() != [1, c, 1, 1, 1] {
        bail!(ShapeMismatch, "batch norm parameters {:?} / {:?} for {c} channels", gamma.shape(), beta.shape());
    }
    Ok(())
}

/// Training-mode batch normalization over batch and spatial axes.
pub fn batch_norm_train(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, BnCache)> {
    bn_check(x, gamma, beta)?;
    let [n, c, ..] = x.shape();
    let m = n * x.voxels();
    if m < 2 {
        bail!(InvalidArgument, "batch norm needs at least two values per channel in training mode");
    }
    let mut cache = BnCache { mean: vec![0.0; c], var: vec![0.0; c], count: m };
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        let mut sum = 0.0;
        for b in 0..n {
            sum += x.slice(b, ch).iter().sum::<f64>();
        }
        let mean = sum / m as f64;
        let mut sq = 0.0;
        for b in 0..n {
            sq += x.slice(b, ch).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let var = sq / m as f64;
        let inv = 1.0 / Float::sqrt(var + BN_EPS);
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        for b in 0..n {
            let src = x.slice(b, ch).to_vec();
            out.slice_mut(b, ch).iter_mut().zip(&src).for_each(|(o, v)| *o = g * (v - mean) * inv + bt);
        }
        cache.mean[ch] = mean;
        cache.var[ch] = var;
    }
    Ok((out, cache))
}

pub fn batch_norm_train_backward(x: &Tensor, gamma: &Tensor, cache: &BnCache, gy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let [n, c, ..] = x.shape();
    let m = cache.count as f64;
    let mut gx = Tensor::zeros(x.shape());
    let mut gg = Tensor::zeros([1, c, 1, 1, 1]);
    let mut gb = Tensor::zeros([1, c, 1, 1, 1]);
    for ch in 0..c {
        let mean = cache.mean[ch];
        let inv = 1.0 / Float::sqrt(cache.var[ch] + BN_EPS);
        let mut sg = 0.0;
        let mut sgx = 0.0;
        for b in 0..n {
            for (v, g) in x.slice(b, ch).iter().zip(gy.slice(b, ch)) {
                sg += g;
                sgx += g * (v - mean) * inv;
            }
        }
        gg.data_mut()[ch] = sgx;
        gb.data_mut()[ch] = sg;
        let k = gamma.data()[ch] * inv / m;
        for b in 0..n {
            let xs = x.slice(b, ch).to_vec();
            let gs = gy.slice(b, ch).to_vec();
            for (o, (v, g)) in gx.slice_mut(b, ch).iter_mut().zip(xs.iter().zip(&gs)) {
                let xhat = (v - mean) * inv;
                *o = k * (m * g - sg - xhat * sgx);
            }
        }
    }
    (gx, gg, gb)
}

/// Inference-mode batch normalization with running statistics.
pub fn batch_norm_eval(x: &Tensor, gamma: &Tensor, beta: &Tensor, mean: &[f64], var: &[f64]) -> Result<Tensor> {
    bn_check(x, gamma, beta)?;
    let [n, c, ..] = x.shape();
    if mean.len() != c || var.len() != c {
        bail!(ShapeMismatch, "running statistics for {} channels, input has {c}", mean.len());
    }
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        let inv = 1.0 / Float::sqrt(var[ch] + BN_EPS);
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        for b in 0..n {
            let src = x.slice(b, ch).to_vec();
            out.slice_mut(b, ch).iter_mut().zip(&src).for_each(|(o, v)| *o = g * (v - mean[ch]) * inv + bt);
        }
    }
    Ok(out)
}

/// Running-statistics update after a training-mode pass (unbiased
/// variance).
pub fn update_running(running_mean: &mut [f64], running_var: &mut [f64], cache: &BnCache) {
    let m = cache.count as f64;
    for ch in 0..running_mean.len() {
        running_mean[ch] = (1.0 - BN_MOMENTUM) * running_mean[ch] + BN_MOMENTUM * cache.mean[ch];
        running_var[ch] = (1.0 - BN_MOMENTUM) * running_var[ch] + BN_MOMENTUM * cache.var[ch] * m / (m - 1.0);
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = gy.clone();
    gx.data_mut().iter_mut().zip(x.data()).for_each(|(g, &v)| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        bail!(ShapeMismatch, "add: {:?} vs {:?}", a.shape(), b.shape());
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Channel concatenation `[a, b]`.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa[0] != sb[0] || sa[2..] != sb[2..] {
        bail!(ShapeMismatch, "concat: {sa:?} vs {sb:?}");
    }
    let mut out = Tensor::zeros([sa[0], sa[1] + sb[1], sa[2], sa[3], sa[4]]);
    for n in 0..sa[0] {
        for c in 0..sa[1] {
            out.slice_mut(n, c).copy_from_slice(a.slice(n, c));
        }
        for c in 0..sb[1] {
            out.slice_mut(n, sa[1] + c).copy_from_slice(b.slice(n, c));
        }
    }
    Ok(out)
}

pub fn concat_backward(ca: usize, gy: &Tensor) -> (Tensor, Tensor) {
    let s = gy.shape();
    let mut ga = Tensor::zeros([s[0], ca, s[2], s[3], s[4]]);
    let mut gb = Tensor::zeros([s[0], s[1] - ca, s[2], s[3], s[4]]);
    for n in 0..s[0] {
        for c in 0..s[1] {
            if c < ca {
                ga.slice_mut(n, c).copy_from_slice(gy.slice(n, c));
            } else {
                gb.slice_mut(n, c - ca).copy_from_slice(gy.slice(n, c));
            }
        }
    }
    (ga, gb)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        bail!(ShapeMismatch, "mse: {:?} vs {:?}", pred.shape(), target.shape());
    }
    let n = pred.len() as f64;
    let mut g = Tensor::zeros(pred.shape());
    let mut sse = 0.0;
    for ((o, p), t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sse += d * d;
        *o = 2.0 * d / n;
    }
    Ok((sse / n, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn rand_tensor(shape: [usize; 5], seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct loop reference for grouped convolution.
    fn conv_ref(x: &Tensor, w: &Tensor, b: Option<&Tensor>, s: ConvSpec) -> Tensor {
        let [n, cin, xx, yy, zz] = x.shape();
        let [cout, cing, kx, ky, kz] = w.shape();
        let os = conv_dims(x, w, b, s).unwrap();
        let mut out = Tensor::zeros(os);
        let coutg = cout / s.groups;
        for bn in 0..n {
            for co in 0..cout {
                let grp = co / coutg;
                for oz in 0..os[4] {
                    for oy in 0..os[3] {
                        for ox in 0..os[2] {
                            let mut acc = b.map_or(0.0, |b| b.data()[co]);
                            for cil in 0..cing {
                                let ci = grp * cing + cil;
                                for dz in 0..kz {
                                    for dy in 0..ky {
                                        for dx in 0..kx {
                                            let ix = (ox * s.stride + dx) as isize - s.padding as isize;
                                            let iy = (oy * s.stride + dy) as isize - s.padding as isize;
                                            let iz = (oz * s.stride + dz) as isize - s.padding as isize;
                                            if ix < 0
                                                || iy < 0
                                                || iz < 0
                                                || ix >= xx as isize
                                                || iy >= yy as isize
                                                || iz >= zz as isize
                                            {
                                                continue;
                                            }
                                            let xv = x.data()[ix as usize
                                                + xx * (iy as usize + yy * (iz as usize + zz * (ci + cin * bn)))];
                                            let wv = w.data()[dx + kx * (dy + ky * (dz + kz * (cil + cing * co)))];
                                            acc += xv * wv;
                                        }
                                    }
                                }
                            }
                            out.data_mut()[ox + os[2] * (oy + os[3] * (oz + os[4] * (co + cout * bn)))] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let x = rand_tensor([1, 3, 4, 5, 6], 1);
        let mut w = Tensor::zeros([3, 3, 1, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(conv3d(&x, &w, None, ConvSpec::same(1, 1)).unwrap(), x);
    }

    #[test]
    fn depthwise_ones_on_constant() {
        let x = Tensor::filled([1, 2, 5, 5, 5], 0.5);
        let w = Tensor::filled([2, 1, 3, 3, 3], 1.0);
        let y = conv3d(&x, &w, None, ConvSpec::same(3, 2)).unwrap();
        assert_eq!(y.slice(0, 1)[2 + 5 * (2 + 5 * 2)], 27.0 * 0.5);
        assert_eq!(y.slice(0, 0)[0], 8.0 * 0.5);
    }

    #[test]
    fn conv_matches_reference() {
        for (k, (spec, cin, cout)) in [
            (ConvSpec { stride: 1, padding: 1, groups: 2 }, 4, 6),
            (ConvSpec { stride: 2, padding: 1, groups: 1 }, 3, 2),
            (ConvSpec { stride: 1, padding: 0, groups: 3 }, 3, 3),
        ]
        .into_iter()
        .enumerate()
        {
            let x = rand_tensor([2, cin, 5, 4, 6], 10 + k as u64);
            let w = rand_tensor([cout, cin / spec.groups, 3, 3, 3], 20 + k as u64);
            let b = rand_tensor([1, cout, 1, 1, 1], 30 + k as u64);
            let fast = conv3d(&x, &w, Some(&b), spec).unwrap();
            let slow = conv_ref(&x, &w, Some(&b), spec);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grouped_equals_block_diagonal() {
        let x = rand_tensor([1, 4, 4, 4, 4], 3);
        let wg = rand_tensor([4, 2, 3, 3, 3], 4);
        let mut full = Tensor::zeros([4, 4, 3, 3, 3]);
        for co in 0..4 {
            let grp = co / 2;
            for cil in 0..2 {
                for t in 0..27 {
                    full.data_mut()[t + 27 * ((grp * 2 + cil) + 4 * co)] = wg.data()[t + 27 * (cil + 2 * co)];
                }
            }
        }
        let a = conv3d(&x, &wg, None, ConvSpec::same(3, 2)).unwrap();
        let b = conv3d(&x, &full, None, ConvSpec::same(3, 1)).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_matches_zero_stuffed_correlation() {
        let x = rand_tensor([1, 3, 3, 2, 4], 5);
        let w = rand_tensor([3, 2, 2, 2, 2], 6);
        let y = conv_transpose2(&x, &w, None).unwrap();
        let [_, cin, xx, yy, zz] = x.shape();
        // zero-stuffed input s[2i] = x[i], then out[o] = sum_a s[o - a] w[a]
        for co in 0..2 {
            for oz in 0..2 * zz {
                for oy in 0..2 * yy {
                    for ox in 0..2 * xx {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for c in 0..2 {
                                for b in 0..2 {
                                    for a in 0..2 {
                                        let (sx, sy, sz) = (
                                            ox as isize - a as isize,
                                            oy as isize - b as isize,
                                            oz as isize - c as isize,
                                        );
                                        if sx < 0 || sy < 0 || sz < 0 || sx % 2 != 0 || sy % 2 != 0 || sz % 2 != 0 {
                                            continue;
                                        }
                                        let (ix, iy, iz) = (sx as usize / 2, sy as usize / 2, sz as usize / 2);
                                        acc += x.slice(0, ci)[ix + xx * (iy + yy * iz)]
                                            * w.data()[a + 2 * (b + 2 * (c + 2 * (co + 2 * ci)))];
                                    }
                                }
                            }
                        }
                        let got = y.slice(0, co)[ox + 2 * xx * (oy + 2 * yy * oz)];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn pool_shapes_and_constant() {
        let x = Tensor::filled([1, 2, 8, 8, 16], 3.0);
        let (y, arg) = max_pool2(&x).unwrap();
        assert_eq!(y.shape(), [1, 2, 4, 4, 8]);
        assert!(y.data().iter().all(|&v| v == 3.0));
        // ties resolve to the first element of each window
        assert_eq!(arg[0], 0);
        assert!(max_pool2(&Tensor::zeros([1, 1, 3, 2, 2])).is_err());
    }

    #[test]
    fn pool_dominates_window_mean() {
        let x = rand_tensor([1, 2, 4, 6, 4], 8);
        let (y, _) = max_pool2(&x).unwrap();
        for c in 0..2 {
            for z in 0..2 {
                for yq in 0..3 {
                    for xq in 0..2 {
                        let mut s = 0.0;
                        for d in 0..8 {
                            let (dx, dy, dz) = (d & 1, (d >> 1) & 1, d >> 2);
                            s += x.slice(0, c)[(2 * xq + dx) + 4 * ((2 * yq + dy) + 6 * (2 * z + dz))];
                        }
                        assert!(y.slice(0, c)[xq + 2 * (yq + 3 * z)] >= s / 8.0);
                    }
                }
            }
        }
    }

    #[test]
    fn batch_norm_examples() {
        let ones = Tensor::channels(vec![1.0, 1.0]);
        let zeros = Tensor::channels(vec![0.0, 0.0]);
        // already standardized input
        let mut x = Tensor::zeros([1, 2, 2, 2, 1]);
        x.data_mut().copy_from_slice(&[1.0, -1.0, 1.0, -1.0, 2.0, -2.0, 2.0, -2.0]);
        let (y, _) = batch_norm_train(&x, &ones, &zeros).unwrap();
        for (a, b) in y.data()[..4].iter().zip(&x.data()[..4]) {
            assert!((a - b).abs() < 1e-5);
        }
        let shift = Tensor::channels(vec![0.3, -0.2]);
        let (y, _) = batch_norm_train(&Tensor::zeros([1, 2, 2, 2, 2]), &ones, &shift).unwrap();
        assert!(y.slice(0, 0).iter().all(|&v| v == 0.3));
        assert!(y.slice(0, 1).iter().all(|&v| v == -0.2));
        assert!(batch_norm_train(&Tensor::zeros([1, 2, 1, 1, 1]), &ones, &zeros).is_err());
    }

    #[test]
    fn batch_norm_moments() {
        let x = rand_tensor([2, 3, 4, 4, 4], 9);
        let gamma = Tensor::channels(vec![0.5, 2.0, 1.5]);
        let beta = Tensor::channels(vec![0.1, -1.0, 3.0]);
        let (y, cache) = batch_norm_train(&x, &gamma, &beta).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|n| y.slice(n, c).to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            assert!((m - beta.data()[c]).abs() < 1e-6);
            let expect = gamma.data()[c].powi(2) * cache.var[c] / (cache.var[c] + BN_EPS);
            assert!((v - expect).abs() < 1e-6);
            assert!((v - gamma.data()[c].powi(2)).abs() < 1e-3);
        }
        let mut rm = vec![0.0; 3];
        let mut rv = vec![1.0; 3];
        update_running(&mut rm, &mut rv, &cache);
        assert!((rm[0] - 0.1 * cache.mean[0]).abs() < 1e-15);
        let unbiased = cache.var[1] * 128.0 / 127.0;
        assert!((rv[1] - (0.9 + 0.1 * unbiased)).abs() < 1e-15);
        let e = batch_norm_eval(&x, &gamma, &beta, &cache.mean, &cache.var).unwrap();
        for (a, b) in e.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_nonnegative_and_concat_roundtrip() {
        let x = rand_tensor([1, 3, 3, 3, 3], 11);
        assert!(relu(&x).data().iter().all(|&v| v >= 0.0));
        let a = rand_tensor([2, 2, 2, 3, 2], 12);
        let b = rand_tensor([2, 1, 2, 3, 2], 13);
        let c = concat(&a, &b).unwrap();
        let (ga, gb) = concat_backward(2, &c);
        assert_eq!((ga, gb), (a, b));
    }

    #[test]
    fn mse_value_and_gradient() {
        let p = Tensor::from_vec([1, 1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let t = Tensor::from_vec([1, 1, 2, 1, 1], vec![0.0, 1.0]).unwrap();
        let (l, g) = mse(&p, &t).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.data(), &[1.0, 2.0]);
    }
}
