//! Patch sampling and momentum SGD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::{backward_patch64, forward_patch64};
use super::{zero_gradients, FcnModel, Gradients, Params64, NUM_LAYERS, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::imgio::{ColorImage, Label, LabelMask};

/// Loss trace granularity, in iterations.
pub const LOSS_TRACE_EVERY: usize = 100;

/// A 16x16 training sample with its normalized position and `+1` (free) / `-1` target.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// 16x16x3 values in `[-1, 1]`, row-major, interleaved RGB.
    pub pixels: Vec<f64>,
    /// `(u, v)` of the patch center, each mapped to `[-1, 1]` over the image extent.
    pub pos: [f64; 2],
    pub target: f64,
}

#[inline]
pub(crate) fn normalize_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// Inclusive range of pixel coordinates along an axis of length `len` that can label a
/// patch. The patch for pixel `p` spans `p - 7 ..= p + 8`.
pub fn patch_center_range(len: usize) -> Option<std::ops::RangeInclusive<usize>> {
    (len >= PATCH_SIZE).then(|| PATCH_SIZE / 2 - 1..=len - PATCH_SIZE / 2 - 1)
}

/// Cuts the patch labeled by pixel `(u, v)`.
pub fn extract_patch(image: &ColorImage, u: usize, v: usize, target: f64) -> Result<Patch> {
    let (ur, vr) = match (patch_center_range(image.width), patch_center_range(image.height)) {
        (Some(ur), Some(vr)) => (ur, vr),
        _ => return Err(Error::arg("image smaller than 16x16")),
    };
    if !ur.contains(&u) || !vr.contains(&v) {
        return Err(Error::arg(format!("patch at ({u}, {v}) leaves the image")));
    }
    let (x0, y0) = (u + 1 - PATCH_SIZE / 2, v + 1 - PATCH_SIZE / 2);
    let mut pixels = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE * 3);
    for y in y0..y0 + PATCH_SIZE {
        let row = &image.data[(y * image.width + x0) * 3..(y * image.width + x0 + PATCH_SIZE) * 3];
        pixels.extend(row.iter().map(|&b| normalize_byte(b)));
    }
    Ok(Patch {
        pixels,
        pos: patch_position(x0, y0, image.width, image.height),
        target,
    })
}

/// Normalized center of the patch whose top-left corner is `(x0, y0)`.
pub(crate) fn patch_position(x0: usize, y0: usize, width: usize, height: usize) -> [f64; 2] {
    let half = (PATCH_SIZE as f64 - 1.0) / 2.0;
    [
        2.0 * (x0 as f64 + half) / width as f64 - 1.0,
        2.0 * (y0 as f64 + half) / height as f64 - 1.0,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingPolicy {
    /// Half free, half obstacle; fails when either class has no eligible pixel.
    #[default]
    Balanced,
    /// Like `Balanced`, but falls back to the available class when one is missing.
    AllowSingleClass,
}

/// Eligible centers of one labeled frame, precomputed for repeated sampling.
#[derive(Debug, Clone)]
pub(crate) struct FrameSampler<'a> {
    image: &'a ColorImage,
    free: Vec<(usize, usize)>,
    obstacle: Vec<(usize, usize)>,
}

impl<'a> FrameSampler<'a> {
    pub fn new(image: &'a ColorImage, mask: &LabelMask) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::arg(format!(
                "image {:?} and mask {:?} differ in size",
                image.dims(),
                mask.dims()
            )));
        }
        let mut free = Vec::new();
        let mut obstacle = Vec::new();
        if let (Some(ur), Some(vr)) = (patch_center_range(image.width), patch_center_range(image.height)) {
            for v in vr {
                for u in ur.clone() {
                    match mask.get(u, v) {
                        Label::Free => free.push((u, v)),
                        Label::Obstacle => obstacle.push((u, v)),
                        Label::Ignore => {}
                    }
                }
            }
        }
        Ok(Self {
            image,
            free,
            obstacle,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty() && self.obstacle.is_empty()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R, policy: SamplingPolicy) -> Result<Vec<Patch>> {
        let (n_free, n_obst) = match (self.free.is_empty(), self.obstacle.is_empty()) {
            (false, false) => (n.div_ceil(2), n / 2),
            (true, true) => {
                return Err(Error::BalanceImpossible("no eligible labeled pixel".into()))
            }
            _ if policy == SamplingPolicy::Balanced => {
                return Err(Error::BalanceImpossible(format!(
                    "{} free and {} obstacle centers",
                    self.free.len(),
                    self.obstacle.len()
                )))
            }
            (false, true) => (n, 0),
            (true, false) => (0, n),
        };
        let mut out = Vec::with_capacity(n);
        for (pool, count, target) in [(&self.free, n_free, 1.0), (&self.obstacle, n_obst, -1.0)] {
            for _ in 0..count {
                let (u, v) = pool[rng.gen_range(0..pool.len())];
                out.push(extract_patch(self.image, u, v, target)?);
            }
        }
        Ok(out)
    }
}

/// Draws `n` patches: `ceil(n/2)` free and `floor(n/2)` obstacle, centers uniform within class.
pub fn sample_patches<R: Rng>(
    image: &ColorImage,
    mask: &LabelMask,
    n: usize,
    rng: &mut R,
    policy: SamplingPolicy,
) -> Result<Vec<Patch>> {
    FrameSampler::new(image, mask)?.sample(n, rng, policy)
}

#[derive(Debug, Clone)]
pub enum PatchPool {
    /// A labeled frame; each batch is sampled fresh from it.
    Frame { image: ColorImage, mask: LabelMask },
    /// A fixed patch set; batches are drawn from it with replacement.
    Fixed(Vec<Patch>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Leading parameter layers held fixed, `0..=5`.
    pub freeze_first: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 48,
            iterations: 10_000,
            seed: 0,
            freeze_first: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be >= 1"));
        }
        if self.freeze_first > NUM_LAYERS {
            return Err(Error::arg(format!("freeze_first must be <= {NUM_LAYERS}")));
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub Gradients);

impl Default for Velocity {
    fn default() -> Self {
        Velocity(zero_gradients())
    }
}

/// Classical momentum: `v <- m v - lr g; w <- w + v`, skipping layers below `freeze_first`.
pub fn sgd_step(model: &mut FcnModel, grads: &Gradients, config: &TrainConfig, velocity: &mut Velocity) {
    for (li, ((layer, g), vel)) in model
        .layers
        .iter_mut()
        .zip(grads)
        .zip(velocity.0.iter_mut())
        .enumerate()
    {
        if li < config.freeze_first {
            continue;
        }
        let blobs = [
            (&mut layer.weights, &g.weights, &mut vel.weights),
            (&mut layer.bias, &g.bias, &mut vel.bias),
        ];
        for (w, g, v) in blobs {
            for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = config.momentum * *v - config.learning_rate * g;
                *w = (*w as f64 + *v) as f32;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub iteration: usize,
    /// Mean batch loss over the iterations since the previous point.
    pub mean_loss: f64,
}

enum Source<'a> {
    Frame(FrameSampler<'a>),
    Fixed(&'a [Patch]),
}

impl Source<'_> {
    fn batch(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Patch>> {
        match self {
            Source::Frame(s) => s.sample(n, rng, SamplingPolicy::AllowSingleClass),
            Source::Fixed(p) => Ok((0..n).map(|_| p[rng.gen_range(0..p.len())].clone()).collect()),
        }
    }
}

/// Mean loss and mean gradient over a batch. Per-patch work may run in parallel; the sum is
/// taken in patch order so the result does not depend on the thread count.
pub(crate) fn batch_gradient(params: &Params64, batch: &[Patch]) -> Result<(f64, Gradients)> {
    let per_patch: Vec<(f64, Gradients)> = batch
        .par_iter()
        .map(|p| {
            let cache = forward_patch64(params, &p.pixels, p.pos)?;
            let mut g = zero_gradients();
            backward_patch64(params, &cache, p.target, &mut g);
            let err = cache.score - p.target;
            Ok((err * err, g))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = zero_gradients();
    let mut loss = 0.0;
    for (l, g) in &per_patch {
        loss += l;
        for (t, g) in total.iter_mut().zip(g) {
            for (a, b) in t.weights.iter_mut().zip(&g.weights) {
                *a += b;
            }
            for (a, b) in t.bias.iter_mut().zip(&g.bias) {
                *a += b;
            }
        }
    }
    for t in &mut total {
        t.weights.iter_mut().chain(t.bias.iter_mut()).for_each(|x| *x *= scale);
    }
    Ok((loss * scale, total))
}

/// Trains for `config.iterations` steps, cycling over `pools` one batch per iteration.
pub fn train(model: FcnModel, pools: &[PatchPool], config: &TrainConfig) -> Result<(FcnModel, Vec<LossPoint>)> {
    train_with_checkpoints(model, pools, config, &[], |_, _| Ok(()))
}

/// [`train`], calling `on_checkpoint(k, model)` after `k` iterations for every `k` in
/// `checkpoints` (`k = 0` means before the first step).
pub fn train_with_checkpoints(
    mut model: FcnModel,
    pools: &[PatchPool],
    config: &TrainConfig,
    checkpoints: &[usize],
    mut on_checkpoint: impl FnMut(usize, &FcnModel) -> Result<()>,
) -> Result<(FcnModel, Vec<LossPoint>)> {
    config.validate()?;
    model.validate()?;
    let mut sources = Vec::new();
    for pool in pools {
        match pool {
            PatchPool::Frame { image, mask } => {
                let s = FrameSampler::new(image, mask)?;
                if !s.is_empty() {
                    sources.push(Source::Frame(s));
                }
            }
            PatchPool::Fixed(p) if !p.is_empty() => sources.push(Source::Fixed(p)),
            PatchPool::Fixed(_) => {}
        }
    }
    if sources.is_empty() {
        return Err(Error::arg("no pool can provide a labeled patch"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = Velocity::default();
    let mut trace = Vec::new();
    let mut window = (0.0, 0usize);
    if checkpoints.contains(&0) {
        on_checkpoint(0, &model)?;
    }
    for it in 0..config.iterations {
        let batch = sources[it % sources.len()].batch(config.batch_size, &mut rng)?;
        let (loss, grads) = batch_gradient(&model.to_f64(), &batch)?;
        sgd_step(&mut model, &grads, config, &mut velocity);
        window.0 += loss;
        window.1 += 1;
        let done = it + 1;
        if done % LOSS_TRACE_EVERY == 0 || done == config.iterations {
            trace.push(LossPoint {
                iteration: done,
                mean_loss: window.0 / window.1 as f64,
            });
            window = (0.0, 0);
        }
        if checkpoints.contains(&done) {
            on_checkpoint(done, &model)?;
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::init_model;

    fn textured(w: usize, h: usize) -> ColorImage {
        let mut img = ColorImage::filled(w, h, [0, 0, 0]);
        for v in 0..h {
            for u in 0..w {
                img.set_pixel(u, v, [(u * 7 % 256) as u8, (v * 11 % 256) as u8, ((u + v) * 3 % 256) as u8]);
            }
        }
        img
    }

    fn half_mask(w: usize, h: usize) -> LabelMask {
        let mut m = LabelMask::filled(w, h, Label::Obstacle);
        for v in h / 2..h {
            for u in 0..w {
                m.set(u, v, Label::Free);
            }
        }
        m
    }

    #[test]
    fn balanced_sampling() {
        let img = textured(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patches = sample_patches(&img, &half_mask(32, 32), 10, &mut rng, SamplingPolicy::Balanced).unwrap();
        assert_eq!(patches.len(), 10);
        assert_eq!(patches.iter().filter(|p| p.target > 0.0).count(), 5);
        let odd = sample_patches(&img, &half_mask(32, 32), 7, &mut rng, SamplingPolicy::Balanced).unwrap();
        assert_eq!(odd.iter().filter(|p| p.target > 0.0).count(), 4);
    }

    #[test]
    fn single_class_mask_cannot_balance() {
        let img = textured(32, 32);
        let mask = LabelMask::filled(32, 32, Label::Free);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_patches(&img, &mask, 10, &mut rng, SamplingPolicy::Balanced),
            Err(Error::BalanceImpossible(_))
        ));
        let relaxed = sample_patches(&img, &mask, 10, &mut rng, SamplingPolicy::AllowSingleClass).unwrap();
        assert!(relaxed.iter().all(|p| p.target == 1.0));
    }

    #[test]
    fn ignore_centers_never_sampled() {
        let img = textured(32, 32);
        let mut mask = LabelMask::filled(32, 32, Label::Ignore);
        mask.set(10, 10, Label::Free);
        mask.set(20, 20, Label::Obstacle);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let patches = sample_patches(&img, &mask, 20, &mut rng, SamplingPolicy::Balanced).unwrap();
        let free = extract_patch(&img, 10, 10, 1.0).unwrap();
        let obst = extract_patch(&img, 20, 20, -1.0).unwrap();
        for p in patches {
            assert!(p == free || p == obst);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let img = textured(32, 32);
        let m = half_mask(32, 32);
        let a = sample_patches(&img, &m, 12, &mut ChaCha8Rng::seed_from_u64(9), SamplingPolicy::Balanced).unwrap();
        let b = sample_patches(&img, &m, 12, &mut ChaCha8Rng::seed_from_u64(9), SamplingPolicy::Balanced).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn patch_geometry() {
        let img = textured(16, 16);
        let p = extract_patch(&img, 7, 7, 1.0).unwrap();
        assert_eq!(p.pos, [-1.0 / 16.0, -1.0 / 16.0]);
        assert_eq!(p.pixels[0], normalize_byte(img.pixel(0, 0)[0]));
        assert!(extract_patch(&img, 8, 7, 1.0).is_err());
        assert_eq!(patch_center_range(16), Some(7..=7));
        assert_eq!(patch_center_range(15), None);
    }

    #[test]
    fn sgd_zeroes_weights_with_unit_lr() {
        let mut m = init_model(1);
        let g = m.to_f64();
        let cfg = TrainConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        sgd_step(&mut m, &g, &cfg, &mut Velocity::default());
        assert!(m.layers.iter().all(|l| l.weights.iter().all(|&w| w == 0.0)));
    }

    #[test]
    fn momentum_recurrence() {
        let m0 = FcnModel::zeros();
        let mut g = zero_gradients();
        g.iter_mut().for_each(|l| l.weights.iter_mut().for_each(|w| *w = 0.25));
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let mut vel = Velocity::default();
        let mut m1 = m0.clone();
        sgd_step(&mut m1, &g, &cfg, &mut vel);
        let mut m2 = m1.clone();
        sgd_step(&mut m2, &g, &cfg, &mut vel);
        let d1 = (m1.layers[0].weights[0] - m0.layers[0].weights[0]) as f64;
        let d2 = (m2.layers[0].weights[0] - m1.layers[0].weights[0]) as f64;
        assert!((d2 / d1 - 1.9).abs() < 1e-5, "ratio {}", d2 / d1);
    }

    #[test]
    fn freeze_first_four_updates_only_full3() {
        let m0 = init_model(2);
        let mut m = m0.clone();
        let g = m.to_f64();
        let cfg = TrainConfig {
            freeze_first: 4,
            ..TrainConfig::default()
        };
        sgd_step(&mut m, &g, &cfg, &mut Velocity::default());
        assert_eq!(m.layers[..4], m0.layers[..4]);
        assert_ne!(m.layers[4], m0.layers[4]);

        let mut frozen = m0.clone();
        let cfg5 = TrainConfig {
            freeze_first: 5,
            ..TrainConfig::default()
        };
        sgd_step(&mut frozen, &g, &cfg5, &mut Velocity::default());
        assert_eq!(frozen, m0);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let img = textured(32, 32);
        let pools = vec![PatchPool::Frame {
            image: img,
            mask: half_mask(32, 32),
        }];
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let (m, trace) = train(init_model(3), &pools, &cfg).unwrap();
        assert_eq!(m, init_model(3));
        assert!(trace.is_empty());
    }

    #[test]
    fn empty_pools_rejected() {
        let cfg = TrainConfig::default();
        assert!(matches!(train(init_model(0), &[], &cfg), Err(Error::Argument(_))));
        assert!(matches!(
            train(init_model(0), &[PatchPool::Fixed(vec![])], &cfg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let pools = vec![PatchPool::Frame {
            image: textured(32, 32),
            mask: half_mask(32, 32),
        }];
        let cfg = TrainConfig {
            iterations: 30,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(init_model(3), &pools, &cfg).unwrap();
        let b = train(init_model(3), &pools, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.0, init_model(3));
    }

    #[test]
    fn checkpoints_fire_in_order() {
        let pools = vec![PatchPool::Frame {
            image: textured(32, 32),
            mask: half_mask(32, 32),
        }];
        let cfg = TrainConfig {
            iterations: 20,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        let (final_model, _) = train_with_checkpoints(init_model(0), &pools, &cfg, &[0, 5, 20], |k, m| {
            seen.push((k, m.clone()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 5, 20]);
        assert_eq!(seen[0].1, init_model(0));
        assert_eq!(seen[2].1, final_model);
    }
}
