//! Forward kernels on `[C, T, F]` activations.

use crate::{Error, Result};

/// Row-major `[C, T, F]` activation of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Planes {
    pub c: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<f32>,
}

impl Planes {
    pub fn new(c: usize, t: usize, f: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != c * t * f {
            return Err(Error::ShapeMismatch(format!("{} values for [{c}, {t}, {f}]", data.len())));
        }
        Ok(Planes { c, t, f, data })
    }

    pub fn zeros(c: usize, t: usize, f: usize) -> Self {
        Planes { c, t, f, data: vec![0.0; c * t * f] }
    }

    pub fn positions(&self) -> usize {
        self.t * self.f
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, f: usize) -> f32 {
        self.data[(c * self.t + t) * self.f + f]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let p = self.positions();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn max_abs_diff(&self, other: &Planes) -> f32 {
        assert_eq!((self.c, self.t, self.f), (other.c, other.t, other.f));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn swish(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// `swish(swish(x))`, exact. Evaluated in f64 so large inputs stay
/// strictly below the identity.
#[inline]
pub fn double_swish(x: f64) -> f64 {
    let s = |v: f64| v / (1.0 + (-v).exp());
    s(s(x))
}

#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!("{what}: {got} values, expected {want}")));
    }
    Ok(())
}

const ROW_BLOCK: usize = 4;

/// `acc[r, :] = bias[r] + Σ_k w[r, k] · col[k, :]` for up to [`ROW_BLOCK`] rows,
/// reading each column once for all rows.
fn accumulate_rows(acc: &mut [f32], col: &[f32], w: &[f32], bias: &[f32], n: usize) {
    let rows = bias.len();
    let k_len = w.len() / rows;
    for (r, b) in bias.iter().enumerate() {
        acc[r * n..(r + 1) * n].fill(*b);
    }
    if rows == ROW_BLOCK {
        let (a0, rest) = acc.split_at_mut(n);
        let (a1, rest) = rest.split_at_mut(n);
        let (a2, a3) = rest.split_at_mut(n);
        for k in 0..k_len {
            let (w0, w1, w2, w3) = (w[k], w[k_len + k], w[2 * k_len + k], w[3 * k_len + k]);
            let c = &col[k * n..(k + 1) * n];
            for i in 0..n {
                let v = c[i];
                a0[i] += w0 * v;
                a1[i] += w1 * v;
                a2[i] += w2 * v;
                a3[i] += w3 * v;
            }
        }
    } else {
        for r in 0..rows {
            let a = &mut acc[r * n..(r + 1) * n];
            for (k, &wv) in w[r * k_len..(r + 1) * k_len].iter().enumerate() {
                for (av, &cv) in a.iter_mut().zip(&col[k * n..(k + 1) * n]) {
                    *av += wv * cv;
                }
            }
        }
    }
}

/// Grouped 2-D cross-correlation. `weight` is `[cout, cin/groups, kt, kf]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grouped(
    x: &Planes,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    groups: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Planes> {
    let (kt, kf) = kernel;
    let (st, sf) = stride;
    let (pt, pf) = pad;
    if groups == 0 || !x.c.is_multiple_of(groups) || !cout.is_multiple_of(groups) {
        return Err(Error::ShapeMismatch(format!("{} → {cout} channels in {groups} groups", x.c)));
    }
    let cin_g = x.c / groups;
    let cout_g = cout / groups;
    check_len("conv weight", weight.len(), cout * cin_g * kt * kf)?;
    check_len("conv bias", bias.len(), cout)?;
    let t_out = super::conv_out_len(x.t, kt, st, pt);
    let f_out = super::conv_out_len(x.f, kf, sf, pf);
    let (Some(t_out), Some(f_out)) = (t_out, f_out) else {
        return Err(Error::ShapeMismatch(format!("input {}×{} smaller than kernel {kt}×{kf}", x.t, x.f)));
    };
    let plane_out = t_out * f_out;
    let mut out = vec![0.0f32; cout * plane_out];
    // One output row at a time: gather the taps into contiguous columns
    // (zeros where the window hangs over the border), then accumulate
    // `w[co, k] · col[k, :]` so the inner loop runs over unit-stride memory.
    let k_len = cin_g * kt * kf;
    let mut col = vec![0.0f32; k_len * f_out];
    let mut acc = vec![0.0f32; ROW_BLOCK * f_out];
    for g in 0..groups {
        for to in 0..t_out {
            for cig in 0..cin_g {
                let xin = x.plane(g * cin_g + cig);
                for i in 0..kt {
                    let ti = (to * st + i).checked_sub(pt).filter(|&ti| ti < x.t);
                    for j in 0..kf {
                        let dst = &mut col[((cig * kt + i) * kf + j) * f_out..][..f_out];
                        let Some(ti) = ti else {
                            dst.fill(0.0);
                            continue;
                        };
                        let xrow = &xin[ti * x.f..(ti + 1) * x.f];
                        for (fo, d) in dst.iter_mut().enumerate() {
                            *d = (fo * sf + j).checked_sub(pf).and_then(|fi| xrow.get(fi)).copied().unwrap_or(0.0);
                        }
                    }
                }
            }
            let mut co = g * cout_g;
            let co_end = (g + 1) * cout_g;
            while co < co_end {
                let n = (co_end - co).min(ROW_BLOCK);
                accumulate_rows(&mut acc[..n * f_out], &col, &weight[co * k_len..(co + n) * k_len], &bias[co..co + n], f_out);
                for r in 0..n {
                    out[(co + r) * plane_out + to * f_out..][..f_out].copy_from_slice(&acc[r * f_out..(r + 1) * f_out]);
                }
                co += n;
            }
        }
    }
    Ok(Planes { c: cout, t: t_out, f: f_out, data: out })
}

pub fn conv2d(
    x: &Planes,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Planes> {
    conv2d_grouped(x, weight, bias, cout, 1, kernel, stride, pad)
}

/// Kernel form of [`double_swish`] in f32.
pub fn apply_double_swish(x: &mut Planes) {
    x.data.iter_mut().for_each(|v| *v = swish(swish(*v)));
}

/// 3×3 conv, stride 2×2, padding 1×1, then DoubleSwish.
pub fn subsample(x: &Planes, weight: &[f32], bias: &[f32], cout: usize) -> Result<Planes> {
    let mut y = conv2d(x, weight, bias, cout, super::SUBSAMPLE_KERNEL, super::SUBSAMPLE_STRIDE, super::SUBSAMPLE_PAD)?;
    apply_double_swish(&mut y);
    Ok(y)
}

/// Per-position channel mixing: `out[co, p] = b[co] + Σ w[co, ci] · x[ci, p]`.
pub fn pointwise(x: &Planes, weight: &[f32], bias: &[f32], cout: usize) -> Result<Planes> {
    check_len("pointwise weight", weight.len(), cout * x.c)?;
    check_len("pointwise bias", bias.len(), cout)?;
    let p = x.positions();
    let mut out = vec![0.0f32; cout * p];
    for co in 0..cout {
        let o = &mut out[co * p..(co + 1) * p];
        o.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..x.c {
            let w = weight[co * x.c + ci];
            for (ov, &xv) in o.iter_mut().zip(x.plane(ci)) {
                *ov += w * xv;
            }
        }
    }
    Ok(Planes { c: cout, t: x.t, f: x.f, data: out })
}

pub const LAYER_NORM_EPS: f32 = 1e-6;

/// LayerNorm across channels at every `(t, f)`.
pub fn layer_norm_channels(x: &mut Planes, gamma: &[f32], beta: &[f32]) -> Result<()> {
    check_len("norm weight", gamma.len(), x.c)?;
    check_len("norm bias", beta.len(), x.c)?;
    let p = x.positions();
    let mut mean = vec![0.0f32; p];
    let mut var = vec![0.0f32; p];
    for c in 0..x.c {
        for (m, &v) in mean.iter_mut().zip(x.plane(c)) {
            *m += v;
        }
    }
    let n = x.c as f32;
    mean.iter_mut().for_each(|m| *m /= n);
    for c in 0..x.c {
        for ((s, &v), &m) in var.iter_mut().zip(x.plane(c)).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in var.iter_mut() {
        *s = 1.0 / (*s / n + LAYER_NORM_EPS).sqrt();
    }
    for c in 0..x.c {
        let (g, b) = (gamma[c], beta[c]);
        let plane = &mut x.data[c * p..(c + 1) * p];
        for ((v, &m), &inv) in plane.iter_mut().zip(&mean).zip(&var) {
            *v = (*v - m) * inv * g + b;
        }
    }
    Ok(())
}

pub struct ConvNextParams<'a> {
    pub dw_weight: &'a [f32],
    pub dw_bias: &'a [f32],
    pub norm_weight: &'a [f32],
    pub norm_bias: &'a [f32],
    pub pw1_weight: &'a [f32],
    pub pw1_bias: &'a [f32],
    pub pw2_weight: &'a [f32],
    pub pw2_bias: &'a [f32],
}

/// Depthwise 7×7 → LayerNorm → 1×1 (C→4C) → GELU → 1×1 (4C→C), plus residual.
pub fn convnext_block(x: &Planes, p: &ConvNextParams<'_>) -> Result<Planes> {
    let k = super::CONVNEXT_KERNEL;
    let c = x.c;
    let mut y = conv2d_grouped(x, p.dw_weight, p.dw_bias, c, c, (k, k), (1, 1), (k / 2, k / 2))?;
    layer_norm_channels(&mut y, p.norm_weight, p.norm_bias)?;
    let mut h = pointwise(&y, p.pw1_weight, p.pw1_bias, super::CONVNEXT_EXPANSION * c)?;
    h.data.iter_mut().for_each(|v| *v = gelu(*v));
    let mut out = pointwise(&h, p.pw2_weight, p.pw2_bias, c)?;
    for (o, &r) in out.data.iter_mut().zip(&x.data) {
        *o += r;
    }
    Ok(out)
}

pub struct GruParams<'a> {
    /// `[3H, in]`, gate order reset, update, candidate.
    pub weight_ih: &'a [f32],
    /// `[3H, H]`.
    pub weight_hh: &'a [f32],
    pub bias_ih: &'a [f32],
    pub bias_hh: &'a [f32],
}

/// One unidirectional GRU layer along time, every frequency an independent
/// sequence. Zero initial state.
pub fn gru_layer(x: &Planes, p: &GruParams<'_>, hidden: usize) -> Result<Planes> {
    let (h_n, in_n, t_n, f_n) = (hidden, x.c, x.t, x.f);
    check_len("gru weight_ih", p.weight_ih.len(), 3 * h_n * in_n)?;
    check_len("gru weight_hh", p.weight_hh.len(), 3 * h_n * h_n)?;
    check_len("gru bias_ih", p.bias_ih.len(), 3 * h_n)?;
    check_len("gru bias_hh", p.bias_hh.len(), 3 * h_n)?;
    let mut out = vec![0.0f32; h_n * t_n * f_n];
    let mut h = vec![0.0f32; h_n * f_n];
    let mut gi = vec![0.0f32; 3 * h_n * f_n];
    let mut gh = vec![0.0f32; 3 * h_n * f_n];
    for t in 0..t_n {
        for g in 0..3 * h_n {
            let gi_row = &mut gi[g * f_n..(g + 1) * f_n];
            gi_row.iter_mut().for_each(|v| *v = p.bias_ih[g]);
            for ci in 0..in_n {
                let w = p.weight_ih[g * in_n + ci];
                let xrow = &x.data[(ci * t_n + t) * f_n..(ci * t_n + t + 1) * f_n];
                for (a, &xv) in gi_row.iter_mut().zip(xrow) {
                    *a += w * xv;
                }
            }
            let gh_row = &mut gh[g * f_n..(g + 1) * f_n];
            gh_row.iter_mut().for_each(|v| *v = p.bias_hh[g]);
            for k in 0..h_n {
                let w = p.weight_hh[g * h_n + k];
                for (a, &hv) in gh_row.iter_mut().zip(&h[k * f_n..(k + 1) * f_n]) {
                    *a += w * hv;
                }
            }
        }
        for k in 0..h_n {
            for f in 0..f_n {
                let r = sigmoid(gi[k * f_n + f] + gh[k * f_n + f]);
                let z = sigmoid(gi[(h_n + k) * f_n + f] + gh[(h_n + k) * f_n + f]);
                let n = (gi[(2 * h_n + k) * f_n + f] + r * gh[(2 * h_n + k) * f_n + f]).tanh();
                let hv = &mut h[k * f_n + f];
                *hv = (1.0 - z) * n + z * *hv;
                out[(k * t_n + t) * f_n + f] = *hv;
            }
        }
    }
    Ok(Planes { c: h_n, t: t_n, f: f_n, data: out })
}

/// Linear channel map followed by stacked GRU layers.
pub fn gru_stack(
    x: &Planes,
    linear_weight: &[f32],
    linear_bias: &[f32],
    layers: &[GruParams<'_>],
    hidden: usize,
) -> Result<Planes> {
    let mut y = pointwise(x, linear_weight, linear_bias, hidden)?;
    for p in layers {
        y = gru_layer(&y, p, hidden)?;
    }
    Ok(y)
}

fn check_streams(streams: &[Planes]) -> Result<(usize, usize, usize)> {
    let first = streams.first().ok_or_else(|| Error::BadShape("no streams".into()))?;
    let shape = (first.c, first.t, first.f);
    if streams.iter().any(|s| (s.c, s.t, s.f) != shape) {
        return Err(Error::ShapeMismatch("streams differ in shape".into()));
    }
    Ok(shape)
}

/// Element-wise mean of equally shaped slices, accumulated in f64.
fn mean_of<'a>(parts: impl Iterator<Item = &'a [f32]>, len: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; len];
    let mut n = 0usize;
    for part in parts {
        for (a, &v) in acc.iter_mut().zip(part) {
            *a += f64::from(v);
        }
        n += 1;
    }
    acc.iter().map(|&a| (a / n as f64) as f32).collect()
}

/// Mean over microphone streams.
pub fn average(streams: &[Planes]) -> Result<Planes> {
    let (c, t, f) = check_streams(streams)?;
    let data = mean_of(streams.iter().map(|s| s.data.as_slice()), c * t * f);
    Ok(Planes { c, t, f, data })
}

/// First half of the channels kept per stream, second half replaced by its
/// mean over streams.
pub fn dac(streams: &[Planes]) -> Result<Vec<Planes>> {
    let (c, t, f) = check_streams(streams)?;
    if c % 2 != 0 {
        return Err(Error::OddChannels(c));
    }
    let half = c / 2 * t * f;
    let shared = mean_of(streams.iter().map(|s| &s.data[half..]), half);
    Ok(streams
        .iter()
        .map(|s| {
            let mut data = Vec::with_capacity(2 * half);
            data.extend_from_slice(&s.data[..half]);
            data.extend_from_slice(&shared);
            Planes { c, t, f, data }
        })
        .collect())
}

pub struct TacParams<'a> {
    /// `[C/2, C]` transform kept per stream.
    pub a_weight: &'a [f32],
    pub a_bias: &'a [f32],
    /// `[C/2, C]` transform averaged over streams.
    pub b_weight: &'a [f32],
    pub b_bias: &'a [f32],
}

/// `O_m = [ReLU(A·I_m); mean_m ReLU(B·I_m)]`.
pub fn tac(streams: &[Planes], p: &TacParams<'_>) -> Result<Vec<Planes>> {
    let (c, t, f) = check_streams(streams)?;
    if c % 2 != 0 {
        return Err(Error::OddChannels(c));
    }
    let relu = |mut x: Planes| {
        x.data.iter_mut().for_each(|v| *v = v.max(0.0));
        x
    };
    let own = streams
        .iter()
        .map(|s| pointwise(s, p.a_weight, p.a_bias, c / 2).map(relu))
        .collect::<Result<Vec<_>>>()?;
    let shared_parts = streams
        .iter()
        .map(|s| pointwise(s, p.b_weight, p.b_bias, c / 2).map(relu))
        .collect::<Result<Vec<_>>>()?;
    let half = c / 2 * t * f;
    let shared = mean_of(shared_parts.iter().map(|s| s.data.as_slice()), half);
    Ok(own
        .into_iter()
        .map(|a| {
            let mut data = a.data;
            data.extend_from_slice(&shared);
            Planes { c, t, f, data }
        })
        .collect())
}

/// Dot product over eight interleaved partial sums so the loop vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += xa[i] * xb[i];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Flatten `(C, F)` per frame, then `out[t, d] = b[d] + Σ_k w[d, k] · v_t[k]`.
pub fn project(x: &Planes, weight: &[f32], bias: &[f32], out_dim: usize) -> Result<Vec<f32>> {
    let k_n = x.c * x.f;
    check_len("projection weight", weight.len(), out_dim * k_n)?;
    check_len("projection bias", bias.len(), out_dim)?;
    let mut v = vec![0.0f32; k_n];
    let mut out = Vec::with_capacity(x.t * out_dim);
    for t in 0..x.t {
        for c in 0..x.c {
            v[c * x.f..(c + 1) * x.f].copy_from_slice(&x.data[(c * x.t + t) * x.f..(c * x.t + t + 1) * x.f]);
        }
        for d in 0..out_dim {
            let w = &weight[d * k_n..(d + 1) * k_n];
            let dot = dot(w, &v);
            out.push(bias[d] + dot);
        }
    }
    Ok(out)
}
