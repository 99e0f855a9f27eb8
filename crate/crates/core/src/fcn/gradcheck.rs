//! Central finite-difference check of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{backward_patch64, forward_patch64, PatchCache};
use super::{zero_gradients, FcnModel, Gradients, Params64, Patch, NUM_LAYERS};
use crate::error::Result;

/// Parameters probed per layer.
pub const PROBES_PER_LAYER: usize = 20;

/// Step used by default. Small enough that a probe rarely straddles a relu or max-pool
/// switch, large enough to stay far above f64 round-off.
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_layer: [f64; NUM_LAYERS],
    pub probes: usize,
}

fn score(params: &Params64, patch: &Patch) -> Result<f64> {
    Ok(forward_patch64(params, &patch.pixels, patch.pos)?.score)
}

/// Compares backprop against central differences on [`PROBES_PER_LAYER`] random parameters
/// of every layer. Relative error is `|g_bp - g_fd| / max(1e-8, |g_bp| + |g_fd|)`.
///
/// The differences are taken on the network score and chained with `dL/ds = 2 (s - t)`, so a
/// zero-loss sample yields exactly zero on both sides.
pub fn grad_check(model: &FcnModel, patch: &Patch, target: f64, eps: f64, seed: u64) -> Result<GradCheckReport> {
    grad_check_with(model, patch, target, eps, seed, |params, cache, target| {
        let mut g = zero_gradients();
        backward_patch64(params, cache, target, &mut g);
        g
    })
}

/// [`grad_check`] against a caller-supplied backward pass.
pub fn grad_check_with(
    model: &FcnModel,
    patch: &Patch,
    target: f64,
    eps: f64,
    seed: u64,
    backward: impl Fn(&Params64, &PatchCache, f64) -> Gradients,
) -> Result<GradCheckReport> {
    let mut params = model.to_f64();
    let cache = forward_patch64(&params, &patch.pixels, patch.pos)?;
    let analytic = backward(&params, &cache, target);
    let dloss = 2.0 * (cache.score - target);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_layer = [0.0f64; NUM_LAYERS];
    let mut probes = 0;
    for li in 0..NUM_LAYERS {
        let n = params[li].len();
        for idx in sample(&mut rng, n, PROBES_PER_LAYER.min(n)) {
            let orig = *params[li].get(idx);
            *params[li].get_mut(idx) = orig + eps;
            let up = score(&params, patch)?;
            *params[li].get_mut(idx) = orig - eps;
            let down = score(&params, patch)?;
            *params[li].get_mut(idx) = orig;
            let fd = dloss * (up - down) / (2.0 * eps);
            let bp = *analytic[li].get(idx);
            let rel = (bp - fd).abs() / (bp.abs() + fd.abs()).max(1e-8);
            per_layer[li] = per_layer[li].max(rel);
            probes += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: per_layer.iter().cloned().fold(0.0, f64::max),
        per_layer,
        probes,
    })
}
