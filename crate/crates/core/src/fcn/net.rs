//! Layer kernels plus patch-level forward and backward passes.

use super::{FcnModel, Gradients, Layer, Params64, Patch, ARCHITECTURE, PATCH_SIZE};
use crate::error::{Error, Result};

/// Number of spatial-prior channels concatenated before `full2`.
pub const PRIOR_CHANNELS: usize = 2;

/// Row-major `h x w x c` activation map.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Map {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.w + x) * self.c;
        &self.data[i..i + self.c]
    }
}

/// Valid 2-D convolution with HWIO weights.
pub(crate) fn conv_valid(input: &Map, layer: &Layer<f64>, k: usize, cout: usize) -> Map {
    match cout {
        1 => conv_valid_n::<1>(input, layer, k),
        6 => conv_valid_n::<6>(input, layer, k),
        12 => conv_valid_n::<12>(input, layer, k),
        48 => conv_valid_n::<48>(input, layer, k),
        192 => conv_valid_n::<192>(input, layer, k),
        _ => unreachable!("no layer with {cout} output channels"),
    }
}

fn conv_valid_n<const C: usize>(input: &Map, layer: &Layer<f64>, k: usize) -> Map {
    let cin = input.c;
    debug_assert_eq!(layer.weights.len(), k * k * cin * C);
    let oh = input.h + 1 - k;
    let ow = input.w + 1 - k;
    let mut out = Map::zeros(oh, ow, C);
    let bias: &[f64; C] = layer.bias.as_slice().try_into().expect("bias length");
    let rows: Vec<&[f64; C]> = layer
        .weights
        .chunks_exact(C)
        .map(|r| r.try_into().expect("chunk length"))
        .collect();
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = *bias;
            for ky in 0..k {
                let start = ((oy + ky) * input.w + ox) * cin;
                let window = &input.data[start..start + k * cin];
                let wrows = &rows[ky * k * cin..(ky + 1) * k * cin];
                for (&x, wrow) in window.iter().zip(wrows) {
                    for (a, &w) in acc.iter_mut().zip(wrow.iter()) {
                        *a += x * w;
                    }
                }
            }
            let o = (oy * ow + ox) * C;
            out.data[o..o + C].copy_from_slice(&acc);
        }
    }
    out
}

/// 2x2 stride-2 max pooling (floor on odd sizes). Returns the pooled map and, per output
/// element, the flat index of the winning input element. Ties go to the first in scan order.
pub(crate) fn maxpool2(input: &Map) -> (Map, Vec<usize>) {
    let (oh, ow, c) = (input.h / 2, input.w / 2, input.c);
    let mut out = Map::zeros(oh, ow, c);
    let mut arg = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = ((2 * oy + dy) * input.w + 2 * ox + dx) * c + ch;
                        if input.data[i] > best {
                            best = input.data[i];
                            best_i = i;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out.data[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

pub(crate) fn relu(map: &mut Map) {
    for v in &mut map.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Appends constant-per-cell channels produced by `prior(y, x)`.
pub(crate) fn concat_prior(map: &Map, prior: impl Fn(usize, usize) -> [f64; PRIOR_CHANNELS]) -> Map {
    let c = map.c + PRIOR_CHANNELS;
    let mut out = Map::zeros(map.h, map.w, c);
    for y in 0..map.h {
        for x in 0..map.w {
            let o = (y * map.w + x) * c;
            out.data[o..o + map.c].copy_from_slice(map.at(y, x));
            out.data[o + map.c..o + c].copy_from_slice(&prior(y, x));
        }
    }
    out
}

/// Runs every layer over `input`; `prior(y, x)` gives the position channels for output cell
/// `(y, x)`. Returns the tanh output map.
pub(crate) fn forward_map(
    params: &Params64,
    input: &Map,
    prior: impl Fn(usize, usize) -> [f64; PRIOR_CHANNELS],
) -> Map {
    let a = &ARCHITECTURE;
    let c1 = conv_valid(input, &params[0], a[0].kernel, a[0].cout);
    let (mut p1, _) = maxpool2(&c1);
    relu(&mut p1);
    let mut c2 = conv_valid(&p1, &params[1], a[1].kernel, a[1].cout);
    relu(&mut c2);
    let mut f1 = conv_valid(&c2, &params[2], 1, a[2].cout);
    relu(&mut f1);
    let f1p = concat_prior(&f1, prior);
    let mut f2 = conv_valid(&f1p, &params[3], 1, a[3].cout);
    relu(&mut f2);
    let mut f3 = conv_valid(&f2, &params[4], 1, a[4].cout);
    for v in &mut f3.data {
        *v = v.tanh();
    }
    f3
}

/// Intermediate activations of one patch, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct PatchCache {
    pub(crate) input: Map,
    pub(crate) pool_arg: Vec<usize>,
    /// Pooled conv1 output after relu, 5x5x12.
    pub(crate) pool: Map,
    /// conv2 output after relu, 6 values.
    pub(crate) conv2: Vec<f64>,
    /// full1 output after relu plus the two prior values, 50 values.
    pub(crate) full2_in: Vec<f64>,
    /// full2 output after relu, 192 values.
    pub(crate) full2: Vec<f64>,
    pub score: f64,
}

pub(crate) fn patch_map(pixels: &[f64]) -> Result<Map> {
    let n = PATCH_SIZE * PATCH_SIZE * 3;
    if pixels.len() != n {
        return Err(Error::arg(format!(
            "patch must hold {n} values (16x16x3), got {}",
            pixels.len()
        )));
    }
    Ok(Map {
        h: PATCH_SIZE,
        w: PATCH_SIZE,
        c: 3,
        data: pixels.to_vec(),
    })
}

fn dense(input: &[f64], layer: &Layer<f64>, cout: usize) -> Vec<f64> {
    let mut out = layer.bias.clone();
    for (i, &x) in input.iter().enumerate() {
        let wrow = &layer.weights[i * cout..(i + 1) * cout];
        for (o, &w) in out.iter_mut().zip(wrow) {
            *o += x * w;
        }
    }
    out
}

pub(crate) fn forward_patch64(params: &Params64, pixels: &[f64], pos: [f64; 2]) -> Result<PatchCache> {
    let a = &ARCHITECTURE;
    let input = patch_map(pixels)?;
    let c1 = conv_valid(&input, &params[0], a[0].kernel, a[0].cout);
    let (mut pool, pool_arg) = maxpool2(&c1);
    relu(&mut pool);
    let mut conv2 = conv_valid(&pool, &params[1], a[1].kernel, a[1].cout).data;
    conv2.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut full2_in = dense(&conv2, &params[2], a[2].cout);
    full2_in.iter_mut().for_each(|v| *v = v.max(0.0));
    full2_in.extend_from_slice(&pos);
    let mut full2 = dense(&full2_in, &params[3], a[3].cout);
    full2.iter_mut().for_each(|v| *v = v.max(0.0));
    let score = dense(&full2, &params[4], 1)[0].tanh();
    Ok(PatchCache {
        input,
        pool_arg,
        pool,
        conv2,
        full2_in,
        full2,
        score,
    })
}

/// Score of a single patch in `[-1, 1]`, plus the activations needed for backprop.
pub fn forward_patch(model: &FcnModel, patch: &Patch) -> Result<(f64, PatchCache)> {
    let cache = forward_patch64(&model.to_f64(), &patch.pixels, patch.pos)?;
    Ok((cache.score, cache))
}

/// Backward through a dense (1x1) layer: accumulates weight/bias gradients and returns the
/// input gradient when `want_input` is set.
fn dense_backward(
    input: &[f64],
    dout: &[f64],
    layer: &Layer<f64>,
    grad: &mut Layer<f64>,
    want_input: bool,
) -> Vec<f64> {
    let cout = dout.len();
    for (b, &g) in grad.bias.iter_mut().zip(dout) {
        *b += g;
    }
    let mut din = if want_input { vec![0.0; input.len()] } else { Vec::new() };
    for (i, &x) in input.iter().enumerate() {
        let gw = &mut grad.weights[i * cout..(i + 1) * cout];
        for (g, &d) in gw.iter_mut().zip(dout) {
            *g += x * d;
        }
        if want_input {
            let wrow = &layer.weights[i * cout..(i + 1) * cout];
            din[i] = wrow.iter().zip(dout).map(|(w, d)| w * d).sum();
        }
    }
    din
}

/// Gradient of `L = (score - target)^2` with respect to every parameter, accumulated into
/// `grads`.
pub(crate) fn backward_patch64(params: &Params64, cache: &PatchCache, target: f64, grads: &mut Gradients) {
    let a = &ARCHITECTURE;
    let score = cache.score;
    let dz3 = 2.0 * (score - target) * (1.0 - score * score);

    // full3
    let mut d2 = dense_backward(&cache.full2, &[dz3], &params[4], &mut grads[4], true);
    for (g, &act) in d2.iter_mut().zip(&cache.full2) {
        if act <= 0.0 {
            *g = 0.0;
        }
    }

    // full2; prior channels carry no gradient further down
    let mut d1 = dense_backward(&cache.full2_in, &d2, &params[3], &mut grads[3], true);
    d1.truncate(a[2].cout);
    for (g, &act) in d1.iter_mut().zip(&cache.full2_in) {
        if act <= 0.0 {
            *g = 0.0;
        }
    }

    // full1
    let mut dc2 = dense_backward(&cache.conv2, &d1, &params[2], &mut grads[2], true);
    for (g, &act) in dc2.iter_mut().zip(&cache.conv2) {
        if act <= 0.0 {
            *g = 0.0;
        }
    }

    // conv2 over the whole 5x5x12 pooled map; its input is exactly the flattened pool
    let mut dpool = dense_backward(&cache.pool.data, &dc2, &params[1], &mut grads[1], true);
    for (g, &act) in dpool.iter_mut().zip(&cache.pool.data) {
        if act <= 0.0 {
            *g = 0.0;
        }
    }

    // maxpool routes each gradient to one conv1 output; accumulate conv1 gradients directly
    let (k, cin, cout) = (a[0].kernel, a[0].cin, a[0].cout);
    let conv1_w = PATCH_SIZE + 1 - k;
    let input = &cache.input;
    let g1 = &mut grads[0];
    for (o, &g) in dpool.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let flat = cache.pool_arg[o];
        let oc = flat % cout;
        let pix = flat / cout;
        let (oy, ox) = (pix / conv1_w, pix % conv1_w);
        g1.bias[oc] += g;
        for ky in 0..k {
            for kx in 0..k {
                let px = input.at(oy + ky, ox + kx);
                let wbase = (ky * k + kx) * cin * cout;
                for (ic, &x) in px.iter().enumerate() {
                    g1.weights[wbase + ic * cout + oc] += x * g;
                }
            }
        }
    }
}

/// Parameter gradients of the squared error for one patch.
pub fn backward_patch(model: &FcnModel, cache: &PatchCache, target: f64) -> Gradients {
    let mut grads = super::zero_gradients();
    backward_patch64(&model.to_f64(), cache, target, &mut grads);
    grads
}
