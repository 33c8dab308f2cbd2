use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;
use crate::tokenizer::PatchSpec;

/// Learned positional embeddings, one `d`-vector per token-grid cell plus
/// one for the CLS token.
#[derive(Debug, Clone, PartialEq)]
pub struct PosEmbedGrid {
    /// Shape `[f, t, d]`.
    pub grid: Tensor,
    /// Shape `[d]`.
    pub cls_slot: Tensor,
}

impl PosEmbedGrid {
    pub fn zeros(dims: (usize, usize), d: usize) -> Self {
        Self {
            grid: Tensor::zeros(&[dims.0, dims.1, d]),
            cls_slot: Tensor::zeros(&[d]),
        }
    }

    /// Grid whose slot `k` (raster order), channel `c` is `value(k, c)`.
    pub fn from_fn(dims: (usize, usize), d: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..dims.0 * dims.1)
            .flat_map(|k| (0..d).map(move |c| (k, c)))
            .map(|(k, c)| value(k, c))
            .collect();
        Self {
            grid: Tensor::from_vec(&[dims.0, dims.1, d], data).expect("sized by construction"),
            cls_slot: Tensor::zeros(&[d]),
        }
    }

    pub fn new(grid: Tensor, cls_slot: Tensor) -> Result<Self> {
        if grid.shape().len() != 3 || cls_slot.shape() != [grid.shape()[2]] {
            return Err(shape_err(format!(
                "positional grid {:?} with cls slot {:?}",
                grid.shape(),
                cls_slot.shape()
            )));
        }
        Ok(Self { grid, cls_slot })
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid.shape()[0], self.grid.shape()[1])
    }

    pub fn dim(&self) -> usize {
        self.grid.shape()[2]
    }

    pub fn grid(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn slot(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.grid.data()[k * d..(k + 1) * d]
    }

    pub fn cls_slot(&self) -> &[f64] {
        self.cls_slot.data()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub norm1_gamma: Tensor,
    pub norm1_beta: Tensor,
    pub q_weight: Tensor,
    pub q_bias: Tensor,
    pub k_weight: Tensor,
    pub k_bias: Tensor,
    pub v_weight: Tensor,
    pub v_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
    pub norm2_gamma: Tensor,
    pub norm2_beta: Tensor,
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
}

impl LayerParams {
    fn tensors(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("norm1.gamma", &self.norm1_gamma),
            ("norm1.beta", &self.norm1_beta),
            ("attn.q_weight", &self.q_weight),
            ("attn.q_bias", &self.q_bias),
            ("attn.k_weight", &self.k_weight),
            ("attn.k_bias", &self.k_bias),
            ("attn.v_weight", &self.v_weight),
            ("attn.v_bias", &self.v_bias),
            ("attn.out_weight", &self.out_weight),
            ("attn.out_bias", &self.out_bias),
            ("norm2.gamma", &self.norm2_gamma),
            ("norm2.beta", &self.norm2_beta),
            ("mlp.fc1_weight", &self.fc1_weight),
            ("mlp.fc1_bias", &self.fc1_bias),
            ("mlp.fc2_weight", &self.fc2_weight),
            ("mlp.fc2_bias", &self.fc2_bias),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 16] {
        [
            ("norm1.gamma", &mut self.norm1_gamma),
            ("norm1.beta", &mut self.norm1_beta),
            ("attn.q_weight", &mut self.q_weight),
            ("attn.q_bias", &mut self.q_bias),
            ("attn.k_weight", &mut self.k_weight),
            ("attn.k_bias", &mut self.k_bias),
            ("attn.v_weight", &mut self.v_weight),
            ("attn.v_bias", &mut self.v_bias),
            ("attn.out_weight", &mut self.out_weight),
            ("attn.out_bias", &mut self.out_bias),
            ("norm2.gamma", &mut self.norm2_gamma),
            ("norm2.beta", &mut self.norm2_beta),
            ("mlp.fc1_weight", &mut self.fc1_weight),
            ("mlp.fc1_bias", &mut self.fc1_bias),
            ("mlp.fc2_weight", &mut self.fc2_weight),
            ("mlp.fc2_bias", &mut self.fc2_bias),
        ]
    }
}

/// Every trainable tensor of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// Shape `[p_f, p_t, d]`.
    pub patch_kernel: Tensor,
    pub patch_bias: Tensor,
    pub pos_embed: PosEmbedGrid,
    pub cls_token: Tensor,
    pub layers: Vec<LayerParams>,
    pub norm_gamma: Tensor,
    pub norm_beta: Tensor,
    /// Shape `[d, K]`.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl Parameters {
    /// Seeded initialization: weights ~ N(0, 0.02²), biases zero, norm
    /// scales one.
    pub fn init(cfg: &ModelConfig, grid_dims: (usize, usize), patch: PatchSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(cfg, grid_dims, patch, &mut rng, 0.02)
    }

    pub fn init_with<R: Rng>(
        cfg: &ModelConfig,
        grid_dims: (usize, usize),
        patch: PatchSpec,
        rng: &mut R,
        std: f64,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut randn = |shape: &[usize]| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| normal.sample(rng)).collect();
            Tensor::from_vec(shape, data).expect("sized by construction")
        };
        let d = cfg.embed_dim;
        let hidden = cfg.hidden_dim();
        let k = cfg.num_classes;
        let patch_kernel = randn(&[patch.height_bins, patch.width_frames, d]);
        let pos_embed = PosEmbedGrid {
            grid: randn(&[grid_dims.0, grid_dims.1, d]),
            cls_slot: randn(&[d]),
        };
        let cls_token = randn(&[d]);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerParams {
                norm1_gamma: Tensor::filled(&[d], 1.0),
                norm1_beta: Tensor::zeros(&[d]),
                q_weight: randn(&[d, d]),
                q_bias: Tensor::zeros(&[d]),
                k_weight: randn(&[d, d]),
                k_bias: Tensor::zeros(&[d]),
                v_weight: randn(&[d, d]),
                v_bias: Tensor::zeros(&[d]),
                out_weight: randn(&[d, d]),
                out_bias: Tensor::zeros(&[d]),
                norm2_gamma: Tensor::filled(&[d], 1.0),
                norm2_beta: Tensor::zeros(&[d]),
                fc1_weight: randn(&[d, hidden]),
                fc1_bias: Tensor::zeros(&[hidden]),
                fc2_weight: randn(&[hidden, d]),
                fc2_bias: Tensor::zeros(&[d]),
            })
            .collect();
        Self {
            patch_kernel,
            patch_bias: Tensor::zeros(&[d]),
            pos_embed,
            cls_token,
            layers,
            norm_gamma: Tensor::filled(&[d], 1.0),
            norm_beta: Tensor::zeros(&[d]),
            head_weight: randn(&[d, k]),
            head_bias: Tensor::zeros(&[k]),
        }
    }

    pub fn patch_spec(&self) -> PatchSpec {
        let s = self.patch_kernel.shape();
        PatchSpec {
            height_bins: s[0],
            width_frames: s[1],
        }
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.pos_embed.grid_dims()
    }

    pub fn embed_dim(&self) -> usize {
        self.patch_bias.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head_bias.len()
    }

    /// Named tensors in a fixed order; checkpoints and the optimizer rely on it.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("patch_embed.kernel".into(), &self.patch_kernel),
            ("patch_embed.bias".into(), &self.patch_bias),
            ("pos_embed.grid".into(), &self.pos_embed.grid),
            ("pos_embed.cls".into(), &self.pos_embed.cls_slot),
            ("cls_token".into(), &self.cls_token),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(
                layer
                    .tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.extend([
            ("norm.gamma".into(), &self.norm_gamma),
            ("norm.beta".into(), &self.norm_beta),
            ("head.weight".into(), &self.head_weight),
            ("head.bias".into(), &self.head_bias),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("patch_embed.kernel".into(), &mut self.patch_kernel),
            ("patch_embed.bias".into(), &mut self.patch_bias),
            ("pos_embed.grid".into(), &mut self.pos_embed.grid),
            ("pos_embed.cls".into(), &mut self.pos_embed.cls_slot),
            ("cls_token".into(), &mut self.cls_token),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(
                layer
                    .tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.extend([
            ("norm.gamma".into(), &mut self.norm_gamma),
            ("norm.beta".into(), &mut self.norm_beta),
            ("head.weight".into(), &mut self.head_weight),
            ("head.bias".into(), &mut self.head_bias),
        ]);
        out
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that every tensor has the shape `cfg` and the current
    /// geometry imply.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = Parameters::init_with(
            cfg,
            self.grid_dims(),
            self.patch_spec(),
            &mut ChaCha8Rng::seed_from_u64(0),
            0.0,
        );
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(shape_err(format!(
                "{} tensors, configuration implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.shape() != b.shape() {
                return Err(shape_err(format!(
                    "{name} has shape {:?}, configuration implies {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}
