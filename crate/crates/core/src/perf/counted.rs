//! Naive forward pass that counts every arithmetic operation it performs.
//!
//! Independent of the fast kernels and of the analytic table: it is a plain
//! loop nest in f64 where each scalar op goes through [`Ops`].

use crate::fusion::{FusedInput, Layout};
use crate::model::layers::Planes;
use crate::model::{EmbeddingSpec, LayerKind, Param, WeightStore, CONVNEXT_EXPANSION, CONVNEXT_KERNEL};
use crate::{Error, Result};

#[derive(Default)]
struct Ops {
    n: u64,
}

impl Ops {
    fn add(&mut self, a: f64, b: f64) -> f64 {
        self.n += 1;
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.n += 1;
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.n += 1;
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        self.n += 1;
        a / b
    }
    fn neg(&mut self, a: f64) -> f64 {
        self.n += 1;
        -a
    }
    fn exp(&mut self, a: f64) -> f64 {
        self.n += 1;
        a.exp()
    }
    fn sqrt(&mut self, a: f64) -> f64 {
        self.n += 1;
        a.sqrt()
    }
    fn tanh(&mut self, a: f64) -> f64 {
        self.n += 1;
        a.tanh()
    }
    fn erf(&mut self, a: f64) -> f64 {
        self.n += 1;
        libm::erf(a)
    }
    fn relu(&mut self, a: f64) -> f64 {
        self.n += 1;
        a.max(0.0)
    }
    fn sigmoid(&mut self, x: f64) -> f64 {
        let e = self.neg(x);
        let e = self.exp(e);
        let d = self.add(1.0, e);
        self.div(1.0, d)
    }
    fn swish(&mut self, x: f64) -> f64 {
        let e = self.neg(x);
        let e = self.exp(e);
        let d = self.add(1.0, e);
        self.div(x, d)
    }
    fn gelu(&mut self, x: f64) -> f64 {
        let u = self.mul(x, std::f64::consts::FRAC_1_SQRT_2);
        let e = self.erf(u);
        let e = self.add(1.0, e);
        let h = self.mul(0.5, x);
        self.mul(h, e)
    }
    fn mean(&mut self, xs: &[f64]) -> f64 {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        self.div(acc, xs.len() as f64)
    }
}

/// `[C, T, F]` activation in f64.
#[derive(Clone)]
struct Act {
    c: usize,
    t: usize,
    f: usize,
    v: Vec<f64>,
}

impl Act {
    fn get(&self, c: usize, t: usize, f: usize) -> f64 {
        self.v[(c * self.t + t) * self.f + f]
    }
}

pub struct CountedRun {
    pub per_layer: Vec<u64>,
    pub total: u64,
    /// `[T'', D]` output, row-major.
    pub output: Vec<f64>,
}

fn w(params: &[Param], i: usize) -> Vec<f64> {
    params[i].values.iter().map(|&v| f64::from(v)).collect()
}

#[allow(clippy::too_many_arguments)]
fn conv(
    ops: &mut Ops,
    x: &Act,
    wt: &[f64],
    b: &[f64],
    cout: usize,
    groups: usize,
    k: (usize, usize),
    s: (usize, usize),
    pad: (usize, usize),
) -> Act {
    let cin_g = x.c / groups;
    let cout_g = cout / groups;
    let ot = (x.t + 2 * pad.0 - k.0) / s.0 + 1;
    let of = (x.f + 2 * pad.1 - k.1) / s.1 + 1;
    let mut v = Vec::with_capacity(cout * ot * of);
    for co in 0..cout {
        let g = co / cout_g;
        for to in 0..ot {
            for fo in 0..of {
                let mut acc = b[co];
                for ci in 0..cin_g {
                    for kt in 0..k.0 {
                        for kf in 0..k.1 {
                            let ti = (to * s.0 + kt) as isize - pad.0 as isize;
                            let fi = (fo * s.1 + kf) as isize - pad.1 as isize;
                            let inside = ti >= 0 && fi >= 0 && (ti as usize) < x.t && (fi as usize) < x.f;
                            let xv = if inside { x.get(g * cin_g + ci, ti as usize, fi as usize) } else { 0.0 };
                            let prod = ops.mul(wt[((co * cin_g + ci) * k.0 + kt) * k.1 + kf], xv);
                            acc = ops.add(acc, prod);
                        }
                    }
                }
                v.push(acc);
            }
        }
    }
    Act { c: cout, t: ot, f: of, v }
}

fn pointwise(ops: &mut Ops, x: &Act, wt: &[f64], b: &[f64], cout: usize) -> Act {
    let mut v = vec![0.0; cout * x.t * x.f];
    for t in 0..x.t {
        for f in 0..x.f {
            for co in 0..cout {
                let mut acc = b[co];
                for ci in 0..x.c {
                    let prod = ops.mul(wt[co * x.c + ci], x.get(ci, t, f));
                    acc = ops.add(acc, prod);
                }
                v[(co * x.t + t) * x.f + f] = acc;
            }
        }
    }
    Act { c: cout, t: x.t, f: x.f, v }
}

fn convnext(ops: &mut Ops, x: &Act, p: &[Param]) -> Act {
    let c = x.c;
    let k = CONVNEXT_KERNEL;
    let mut y = conv(ops, x, &w(p, 0), &w(p, 1), c, c, (k, k), (1, 1), (k / 2, k / 2));
    let (gamma, beta) = (w(p, 2), w(p, 3));
    for t in 0..y.t {
        for f in 0..y.f {
            let col: Vec<f64> = (0..c).map(|ci| y.get(ci, t, f)).collect();
            let mean = ops.mean(&col);
            let mut var = 0.0;
            for &v in &col {
                let d = ops.sub(v, mean);
                let sq = ops.mul(d, d);
                var = ops.add(var, sq);
            }
            let var = ops.div(var, c as f64);
            let var = ops.add(var, crate::model::layers::LAYER_NORM_EPS as f64);
            let sd = ops.sqrt(var);
            let inv = ops.div(1.0, sd);
            for (ci, &v) in col.iter().enumerate() {
                let d = ops.sub(v, mean);
                let n = ops.mul(d, inv);
                let n = ops.mul(n, gamma[ci]);
                y.v[(ci * y.t + t) * y.f + f] = ops.add(n, beta[ci]);
            }
        }
    }
    let mut h = pointwise(ops, &y, &w(p, 4), &w(p, 5), CONVNEXT_EXPANSION * c);
    for v in h.v.iter_mut() {
        *v = ops.gelu(*v);
    }
    let mut out = pointwise(ops, &h, &w(p, 6), &w(p, 7), c);
    for (o, &r) in out.v.iter_mut().zip(&x.v) {
        *o = ops.add(*o, r);
    }
    out
}

fn gru(ops: &mut Ops, x: &Act, p: &[Param], hn: usize) -> Act {
    let (wih, whh, bih, bhh) = (w(p, 0), w(p, 1), w(p, 2), w(p, 3));
    let mut out = vec![0.0; hn * x.t * x.f];
    for f in 0..x.f {
        let mut h = vec![0.0; hn];
        for t in 0..x.t {
            let gate = |ops: &mut Ops, wt: &[f64], b: &[f64], input: &[f64], j: usize| {
                let mut acc = b[j];
                for (i, &v) in input.iter().enumerate() {
                    let prod = ops.mul(wt[j * input.len() + i], v);
                    acc = ops.add(acc, prod);
                }
                acc
            };
            let xin: Vec<f64> = (0..x.c).map(|c| x.get(c, t, f)).collect();
            let gi: Vec<f64> = (0..3 * hn).map(|j| gate(ops, &wih, &bih, &xin, j)).collect();
            let gh: Vec<f64> = (0..3 * hn).map(|j| gate(ops, &whh, &bhh, &h, j)).collect();
            let mut next = vec![0.0; hn];
            for k in 0..hn {
                let r = ops.add(gi[k], gh[k]);
                let r = ops.sigmoid(r);
                let z = ops.add(gi[hn + k], gh[hn + k]);
                let z = ops.sigmoid(z);
                let n = ops.mul(r, gh[2 * hn + k]);
                let n = ops.add(gi[2 * hn + k], n);
                let n = ops.tanh(n);
                let keep = ops.sub(1.0, z);
                let a = ops.mul(keep, n);
                let b = ops.mul(z, h[k]);
                next[k] = ops.add(a, b);
            }
            h = next;
            for k in 0..hn {
                out[(k * x.t + t) * x.f + f] = h[k];
            }
        }
    }
    Act { c: hn, t: x.t, f: x.f, v: out }
}

fn stream_mean(ops: &mut Ops, streams: &[Act], from: usize, to: usize) -> Vec<f64> {
    (from..to)
        .map(|i| {
            let xs: Vec<f64> = streams.iter().map(|s| s.v[i]).collect();
            ops.mean(&xs)
        })
        .collect()
}

fn local(ops: &mut Ops, kind: &LayerKind, p: &[Param], x: &Act) -> Act {
    match *kind {
        LayerKind::Conv { cout, kernel, stride, pad, .. } => {
            let mut y = conv(ops, x, &w(p, 0), &w(p, 1), cout, 1, kernel, stride, pad);
            for v in y.v.iter_mut() {
                let once = ops.swish(*v);
                *v = ops.swish(once);
            }
            y
        }
        LayerKind::ConvNext { .. } => convnext(ops, x, p),
        LayerKind::Linear { cout, .. } => pointwise(ops, x, &w(p, 0), &w(p, 1), cout),
        LayerKind::Gru { hidden, .. } => gru(ops, x, p, hidden),
        _ => unreachable!("cross-stream layer"),
    }
}

fn tac(ops: &mut Ops, streams: &[Act], p: &[Param], channels: usize) -> Vec<Act> {
    let half = channels / 2;
    let relu = |ops: &mut Ops, mut a: Act| {
        a.v.iter_mut().for_each(|v| *v = ops.relu(*v));
        a
    };
    let mut own = Vec::new();
    let mut shared = Vec::new();
    for s in streams {
        let a = pointwise(ops, s, &w(p, 0), &w(p, 1), half);
        own.push(relu(ops, a));
        let b = pointwise(ops, s, &w(p, 2), &w(p, 3), half);
        shared.push(relu(ops, b));
    }
    let n = half * streams[0].t * streams[0].f;
    let mean = stream_mean(ops, &shared, 0, n);
    own.into_iter()
        .map(|mut a| {
            a.v.extend_from_slice(&mean);
            a.c = channels;
            a
        })
        .collect()
}

fn to_act(x: &Planes) -> Act {
    Act { c: x.c, t: x.t, f: x.f, v: x.data.iter().map(|&v| f64::from(v)).collect() }
}

/// Naive f64 evaluation of one stream-local layer; returns output and op count.
pub(crate) fn naive_local(kind: &LayerKind, params: &[Param], x: &Planes) -> (Vec<f64>, u64) {
    let mut ops = Ops::default();
    let y = local(&mut ops, kind, params, &to_act(x));
    (y.v, ops.n)
}

/// Naive f64 TAC over streams; outputs concatenated stream by stream.
pub(crate) fn naive_tac(streams: &[Planes], params: &[Param], channels: usize) -> Vec<f64> {
    let acts: Vec<Act> = streams.iter().map(to_act).collect();
    tac(&mut Ops::default(), &acts, params, channels).into_iter().flat_map(|a| a.v).collect()
}

/// Run `spec` on `input` with every scalar operation counted.
pub fn counted_forward(spec: &EmbeddingSpec, weights: &WeightStore, input: &FusedInput) -> Result<CountedRun> {
    weights.check_against(spec)?;
    let t = input.frames();
    let f = input.feature_dim();
    let data: Vec<f64> = input.tensor().data().iter().map(|&v| f64::from(v)).collect();
    let mut streams: Vec<Act> = match input.layout() {
        Layout::Expanded { mics } => (0..mics)
            .map(|m| Act { c: 2, t, f, v: data[m * 2 * t * f..(m + 1) * 2 * t * f].to_vec() })
            .collect(),
        Layout::Fixed { mics } => vec![Act { c: mics + 1, t, f, v: data }],
        Layout::Squeezed => vec![Act { c: 2, t, f, v: data }],
    };
    let mut ops = Ops::default();
    let mut per_layer = Vec::new();
    for (i, layer) in spec.layers()?.iter().enumerate() {
        let p = weights.layer(i);
        let before = ops.n;
        match layer.kind {
            LayerKind::Tac { channels } => streams = tac(&mut ops, &streams, p, channels),
            LayerKind::Dac { .. } => {
                let half = streams[0].v.len() / 2;
                let mean = stream_mean(&mut ops, &streams, half, 2 * half);
                for s in streams.iter_mut() {
                    s.v[half..].copy_from_slice(&mean);
                }
            }
            LayerKind::Avg { .. } => {
                let n = streams[0].v.len();
                let mean = stream_mean(&mut ops, &streams, 0, n);
                streams = vec![Act { v: mean, ..streams[0].clone() }];
            }
            LayerKind::Project { channels, freq, out } => {
                let x = &streams[0];
                let (wt, b) = (w(p, 0), w(p, 1));
                let k = channels * freq;
                let mut y = Vec::with_capacity(x.t * out);
                for tt in 0..x.t {
                    for d in 0..out {
                        let mut acc = b[d];
                        for c in 0..channels {
                            for ff in 0..freq {
                                let prod = ops.mul(wt[d * k + c * freq + ff], x.get(c, tt, ff));
                                acc = ops.add(acc, prod);
                            }
                        }
                        y.push(acc);
                    }
                }
                per_layer.push(ops.n - before);
                return Ok(CountedRun { total: ops.n, per_layer, output: y });
            }
            ref kind => streams = streams.iter().map(|s| local(&mut ops, kind, p, s)).collect(),
        }
        per_layer.push(ops.n - before);
    }
    Err(Error::SpecMismatch("layer plan has no projection".into()))
}
