//! The free-space network.
//!
//! ```text
//! conv1  7x7, 3 -> 12, valid
//! maxpool 2x2 stride 2, relu
//! conv2  5x5, 12 -> 6, valid, relu
//! full1  1x1, 6 -> 48, relu
//! full2  1x1, 48 + 2 -> 192, relu      (+2 = normalized (u, v) position channels)
//! full3  1x1, 192 -> 1, tanh
//! ```
//!
//! A 16x16 input collapses to a single output unit, so training runs on 16x16 patches
//! while inference runs the same kernels over a whole image, yielding one output per
//! 2-pixel step of the patch grid.
//!
//! Parameters are stored as `f32` (HWIO weight layout: `[ky][kx][cin][cout]`) and widened
//! to `f64` for every computation.

mod gradcheck;
mod infer;
mod net;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::imgio::ConfidenceMap;
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, DEFAULT_EPS as GRAD_CHECK_EPS, PROBES_PER_LAYER};
pub use infer::{infer_full, infer_grid, ConfidenceGrid};
pub use net::{backward_patch, forward_patch, PatchCache, PRIOR_CHANNELS};
pub use train::{
    extract_patch, patch_center_range, sample_patches, sgd_step, train, train_with_checkpoints,
    LossPoint, Patch, PatchPool, SamplingPolicy, TrainConfig, Velocity, LOSS_TRACE_EVERY,
};

/// Side of the square receptive field of one output unit.
pub const PATCH_SIZE: usize = 16;
pub const NUM_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
}

impl LayerSpec {
    pub const fn weight_len(&self) -> usize {
        self.kernel * self.kernel * self.cin * self.cout
    }

    pub const fn param_count(&self) -> usize {
        self.weight_len() + self.cout
    }
}

pub const ARCHITECTURE: [LayerSpec; NUM_LAYERS] = [
    LayerSpec { name: "conv1", kernel: 7, cin: 3, cout: 12 },
    LayerSpec { name: "conv2", kernel: 5, cin: 12, cout: 6 },
    LayerSpec { name: "full1", kernel: 1, cin: 6, cout: 48 },
    LayerSpec { name: "full2", kernel: 1, cin: 48 + PRIOR_CHANNELS, cout: 192 },
    LayerSpec { name: "full3", kernel: 1, cin: 192, cout: 1 },
];

pub fn total_param_count() -> usize {
    ARCHITECTURE.iter().map(LayerSpec::param_count).sum()
}

/// Weights and bias of one parameter layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Copy + Default> Layer<T> {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weights: vec![T::default(); spec.weight_len()],
            bias: vec![T::default(); spec.cout],
        }
    }
}

impl<T> Layer<T> {
    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view: weights first, then bias.
    pub fn get(&self, i: usize) -> &T {
        if i < self.weights.len() {
            &self.weights[i]
        } else {
            &self.bias[i - self.weights.len()]
        }
    }

    pub fn get_mut(&mut self, i: usize) -> &mut T {
        let n = self.weights.len();
        if i < n {
            &mut self.weights[i]
        } else {
            &mut self.bias[i - n]
        }
    }
}

/// Working-precision parameters, one entry per layer.
pub type Params64 = Vec<Layer<f64>>;

/// Per-parameter gradients, same shapes as the model.
pub type Gradients = Params64;

pub fn zero_gradients() -> Gradients {
    ARCHITECTURE.iter().map(Layer::zeros).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    pub layers: Vec<Layer<f32>>,
    /// Seed used by [`init_model`]; `None` for models loaded from disk.
    pub seed: Option<u64>,
}

impl FcnModel {
    pub fn zeros() -> Self {
        Self {
            layers: ARCHITECTURE.iter().map(Layer::zeros).collect(),
            seed: None,
        }
    }

    pub fn to_f64(&self) -> Params64 {
        self.layers
            .iter()
            .map(|l| Layer {
                weights: l.weights.iter().map(|&w| w as f64).collect(),
                bias: l.bias.iter().map(|&b| b as f64).collect(),
            })
            .collect()
    }

    /// Checks layer count and blob shapes against [`ARCHITECTURE`].
    pub fn validate(&self) -> crate::Result<()> {
        if self.layers.len() != NUM_LAYERS {
            return Err(crate::Error::arg(format!(
                "model has {} layers, expected {NUM_LAYERS}",
                self.layers.len()
            )));
        }
        for (spec, layer) in ARCHITECTURE.iter().zip(&self.layers) {
            if layer.weights.len() != spec.weight_len() || layer.bias.len() != spec.cout {
                return Err(crate::Error::arg(format!(
                    "layer {} has {}+{} parameters, expected {}+{}",
                    spec.name,
                    layer.weights.len(),
                    layer.bias.len(),
                    spec.weight_len(),
                    spec.cout
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(seed: u64) -> FcnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = ARCHITECTURE
        .iter()
        .map(|spec| {
            let fan_in = (spec.kernel * spec.kernel * spec.cin) as f64;
            let fan_out = (spec.kernel * spec.kernel * spec.cout) as f64;
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            Layer {
                weights: (0..spec.weight_len())
                    .map(|_| rng.gen_range(-a..a) as f32)
                    .collect(),
                bias: vec![0.0; spec.cout],
            }
        })
        .collect();
    FcnModel {
        layers,
        seed: Some(seed),
    }
}
