//! A small pre-norm transformer encoder over patch tokens with a CLS readout.
//!
//! Each block computes `h = x + Attn(LN₁(x))` and `y = h + MLP(LN₂(h))`,
//! with a tanh-approximated GELU in the MLP. The CLS token passes through a
//! final layer norm and a linear head. Backpropagation is written out by
//! hand for every block so gradients are exact and deterministic.

mod optim;
mod params;

use rand::{Rng, RngCore};

pub use optim::{adam_update, AdamConfig, AdamState};
pub use params::{LayerParams, Parameters, PosEmbedGrid};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{col_sum_acc, linear, matmul_a_bt, matmul_at_b_acc};
use crate::tokenizer::{embed, PatchGrid, PatchSpec, TokenSequence};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    SingleLabel,
    MultiLabel,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SingleLabel => "single_label",
            TaskKind::MultiLabel => "multi_label",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "single_label" => Some(TaskKind::SingleLabel),
            "multi_label" => Some(TaskKind::MultiLabel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub task: TaskKind,
    /// Square patch of the full-resolution phase.
    pub patch: PatchSpec,
    /// Dropout on both residual branches during training; 0 disables it.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4,
            num_classes: 4,
            task: TaskKind::SingleLabel,
            patch: PatchSpec::default(),
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.embed_dim == 0 || self.num_heads == 0 || self.mlp_ratio == 0 {
            return bad("embed_dim, num_heads and mlp_ratio must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.num_heads
            ));
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn with_patch(&self, patch: PatchSpec) -> Self {
        Self {
            patch,
            ..self.clone()
        }
    }
}

/// Supervision for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    /// Multi-hot vector of length K with entries 0 or 1.
    Labels(Vec<f64>),
}

impl Target {
    pub fn multi_hot(labels: &[usize], num_classes: usize) -> Self {
        let mut v = vec![0.0; num_classes];
        for &l in labels {
            v[l] = 1.0;
        }
        Target::Labels(v)
    }

    fn check(&self, task: TaskKind, k: usize) -> Result<()> {
        match (task, self) {
            (TaskKind::SingleLabel, Target::Class(c)) if *c < k => Ok(()),
            (TaskKind::MultiLabel, Target::Labels(v))
                if v.len() == k && v.iter().all(|&y| y == 0.0 || y == 1.0) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!(
                "target {self:?} is not a valid {} target for {k} classes",
                task.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub patches: PatchGrid,
    pub target: Target,
}

fn check_geometry(params: &Parameters, cfg: &ModelConfig, grid: (usize, usize), d: usize) -> Result<()> {
    if params.grid_dims() != grid {
        return Err(shape_err(format!(
            "input token grid {grid:?} does not match positional grid {:?}",
            params.grid_dims()
        )));
    }
    if d != cfg.embed_dim || params.embed_dim() != cfg.embed_dim {
        return Err(shape_err(format!(
            "token width {d} vs configured embed_dim {}",
            cfg.embed_dim
        )));
    }
    if params.layers.len() != cfg.num_layers || params.num_classes() != cfg.num_classes {
        return Err(shape_err("parameters do not match the model configuration"));
    }
    Ok(())
}

/// Embeds a patch grid with the model's own tokenizer weights.
pub fn tokenize(params: &Parameters, patches: &PatchGrid) -> Result<TokenSequence> {
    if patches.patch_spec() != params.patch_spec() {
        return Err(shape_err(format!(
            "input patches are {}, kernel expects {}",
            patches.patch_spec(),
            params.patch_spec()
        )));
    }
    embed(
        patches,
        &params.patch_kernel,
        params.patch_bias.data(),
        &params.pos_embed,
        params.cls_token.data(),
    )
}

/// Logits for one embedded token sequence.
pub fn forward(params: &Parameters, cfg: &ModelConfig, seq: &TokenSequence) -> Result<Vec<f64>> {
    check_geometry(params, cfg, seq.grid_dims(), seq.dim())?;
    let (logits, _) = run(params, cfg, seq.as_matrix().to_vec(), seq.len(), None, false);
    Ok(logits)
}

pub fn forward_patches(params: &Parameters, cfg: &ModelConfig, patches: &PatchGrid) -> Result<Vec<f64>> {
    forward(params, cfg, &tokenize(params, patches)?)
}

/// Logits for every sample; samples never interact.
pub fn forward_batch(params: &Parameters, cfg: &ModelConfig, batch: &[PatchGrid]) -> Result<Vec<Vec<f64>>> {
    batch.iter().map(|p| forward_patches(params, cfg, p)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy for single-label targets; mean per-class binary
/// cross-entropy on sigmoid outputs for multi-label targets.
pub fn loss(logits: &[f64], target: &Target, task: TaskKind) -> Result<f64> {
    target.check(task, logits.len())?;
    Ok(loss_and_grad(logits, target).0)
}

fn loss_and_grad(logits: &[f64], target: &Target) -> (f64, Vec<f64>) {
    match target {
        Target::Class(c) => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            let mut grad = softmax(logits);
            grad[*c] -= 1.0;
            (lse - logits[*c], grad)
        }
        Target::Labels(y) => {
            let k = logits.len() as f64;
            let mut total = 0.0;
            let grad = logits
                .iter()
                .zip(y)
                .map(|(&z, &y)| {
                    total += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
                    (sigmoid(z) - y) / k
                })
                .collect();
            (total / k, grad)
        }
    }
}

/// Mean loss over the batch and its exact gradient for every parameter.
pub fn gradients(params: &Parameters, cfg: &ModelConfig, batch: &[Example]) -> Result<(f64, Parameters)> {
    accumulate(params, cfg, &batch.iter().collect::<Vec<_>>(), None)
}

/// As [`gradients`], with dropout masks drawn from `rng` when
/// `cfg.dropout > 0`.
pub fn gradients_with_dropout(
    params: &Parameters,
    cfg: &ModelConfig,
    batch: &[Example],
    rng: &mut dyn RngCore,
) -> Result<(f64, Parameters)> {
    accumulate(params, cfg, &batch.iter().collect::<Vec<_>>(), Some(rng))
}

pub(crate) fn accumulate(
    params: &Parameters,
    cfg: &ModelConfig,
    batch: &[&Example],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(f64, Parameters)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for ex in batch {
        ex.target.check(cfg.task, cfg.num_classes)?;
        let seq = tokenize(params, &ex.patches)?;
        check_geometry(params, cfg, seq.grid_dims(), seq.dim())?;
        let n = seq.len();
        let (logits, cache) = run(params, cfg, seq.as_matrix().to_vec(), n, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore), true);
        let (l, dlogits) = loss_and_grad(&logits, &ex.target);
        total += l;
        backward(params, cfg, &ex.patches, &cache.expect("cache requested"), &dlogits, &mut grads);
    }
    let scale = 1.0 / batch.len() as f64;
    for (_, t) in grads.tensors_mut() {
        t.data_mut().iter_mut().for_each(|g| *g *= scale);
    }
    Ok((total * scale, grads))
}

struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    norm1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    mask1: Option<Vec<f64>>,
    norm2: NormCache,
    b: Vec<f64>,
    z: Vec<f64>,
    g: Vec<f64>,
    mask2: Option<Vec<f64>>,
}

struct Cache {
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    cls_out: Vec<f64>,
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], n: usize, d: usize) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + NORM_EPS).sqrt();
        rstd[i] = r;
        for c in 0..d {
            let h = (row[c] - mean) * r;
            xhat[i * d + c] = h;
            y[i * d + c] = gamma[c] * h + beta[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    gamma: &[f64],
    d: usize,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = cache.rstd.len();
    let mut dx = vec![0.0; n * d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        if dyr.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for c in 0..d {
            dgamma[c] += dyr[c] * xh[c];
            dbeta[c] += dyr[c];
            let dxh = dyr[c] * gamma[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        for c in 0..d {
            let dxh = dyr[c] * gamma[c];
            dx[i * d + c] = cache.rstd[i] * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + GELU_A * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + GELU_A * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * z * z)
}

fn dropout_mask(len: usize, p: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Forward pass from embedded tokens `x` (`n × d`). With `keep_cache` the
/// activations needed by [`backward`] are retained.
fn run(
    params: &Parameters,
    cfg: &ModelConfig,
    mut x: Vec<f64>,
    n: usize,
    mut rng: Option<&mut dyn RngCore>,
    keep_cache: bool,
) -> (Vec<f64>, Option<Cache>) {
    let d = cfg.embed_dim;
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let hidden = cfg.hidden_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut caches = Vec::new();

    for lp in &params.layers {
        let (a, norm1) = layer_norm(&x, lp.norm1_gamma.data(), lp.norm1_beta.data(), n, d);
        let q = linear(&a, lp.q_weight.data(), lp.q_bias.data(), n, d, d);
        let k = linear(&a, lp.k_weight.data(), lp.k_bias.data(), n, d, d);
        let v = linear(&a, lp.v_weight.data(), lp.v_bias.data(), n, d, d);

        let mut probs = vec![0.0; heads * n * n];
        let mut attn = vec![0.0; n * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..n {
                let qi = &q[i * d + off..i * d + off + dh];
                let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k[j * d + off..j * d + off + dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in row.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                row.iter_mut().for_each(|s| *s /= sum);
                let out = &mut attn[i * d + off..i * d + off + dh];
                for (j, &p) in row.iter().enumerate() {
                    for (o, vv) in out.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                        *o += p * vv;
                    }
                }
            }
        }
        let mut branch = linear(&attn, lp.out_weight.data(), lp.out_bias.data(), n, d, d);
        let mask1 = match (rng.as_deref_mut(), cfg.dropout > 0.0) {
            (Some(r), true) => {
                let m = dropout_mask(n * d, cfg.dropout, r);
                branch.iter_mut().zip(&m).for_each(|(b, m)| *b *= m);
                Some(m)
            }
            _ => None,
        };
        let hres: Vec<f64> = x.iter().zip(&branch).map(|(x, b)| x + b).collect();

        let (b, norm2) = layer_norm(&hres, lp.norm2_gamma.data(), lp.norm2_beta.data(), n, d);
        let z = linear(&b, lp.fc1_weight.data(), lp.fc1_bias.data(), n, d, hidden);
        let g: Vec<f64> = z.iter().map(|&z| gelu(z)).collect();
        let mut mlp = linear(&g, lp.fc2_weight.data(), lp.fc2_bias.data(), n, hidden, d);
        let mask2 = match (rng.as_deref_mut(), cfg.dropout > 0.0) {
            (Some(r), true) => {
                let m = dropout_mask(n * d, cfg.dropout, r);
                mlp.iter_mut().zip(&m).for_each(|(b, m)| *b *= m);
                Some(m)
            }
            _ => None,
        };
        x = hres.iter().zip(&mlp).map(|(h, m)| h + m).collect();

        if keep_cache {
            caches.push(LayerCache {
                norm1,
                a,
                q,
                k,
                v,
                probs,
                attn,
                mask1,
                norm2,
                b,
                z,
                g,
                mask2,
            });
        }
    }

    let (cls_out, final_norm) =
        layer_norm(&x[..d], params.norm_gamma.data(), params.norm_beta.data(), 1, d);
    let logits = linear(
        &cls_out,
        params.head_weight.data(),
        params.head_bias.data(),
        1,
        d,
        cfg.num_classes,
    );
    let cache = keep_cache.then_some(Cache {
        layers: caches,
        final_norm,
        cls_out,
    });
    (logits, cache)
}

fn backward(
    params: &Parameters,
    cfg: &ModelConfig,
    patches: &PatchGrid,
    cache: &Cache,
    dlogits: &[f64],
    grads: &mut Parameters,
) {
    let d = cfg.embed_dim;
    let k_cls = cfg.num_classes;
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let hidden = cfg.hidden_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let n = patches.num_patches() + 1;

    // Head and final norm: only the CLS row carries gradient.
    matmul_at_b_acc(&cache.cls_out, dlogits, grads.head_weight.data_mut(), 1, d, k_cls);
    col_sum_acc(dlogits, grads.head_bias.data_mut(), k_cls);
    let dcls = matmul_a_bt(dlogits, params.head_weight.data(), 1, k_cls, d);
    let dcls = layer_norm_backward(
        &dcls,
        &cache.final_norm,
        params.norm_gamma.data(),
        d,
        grads.norm_gamma.data_mut(),
        grads.norm_beta.data_mut(),
    );
    let mut dx = vec![0.0; n * d];
    dx[..d].copy_from_slice(&dcls);

    for (li, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gl = &mut grads.layers[li];

        // MLP branch.
        let mut dm = dx.clone();
        if let Some(mask) = &lc.mask2 {
            dm.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        matmul_at_b_acc(&lc.g, &dm, gl.fc2_weight.data_mut(), n, hidden, d);
        col_sum_acc(&dm, gl.fc2_bias.data_mut(), d);
        let mut dz = matmul_a_bt(&dm, lp.fc2_weight.data(), n, d, hidden);
        dz.iter_mut().zip(&lc.z).for_each(|(g, &z)| *g *= gelu_grad(z));
        matmul_at_b_acc(&lc.b, &dz, gl.fc1_weight.data_mut(), n, d, hidden);
        col_sum_acc(&dz, gl.fc1_bias.data_mut(), hidden);
        let db = matmul_a_bt(&dz, lp.fc1_weight.data(), n, hidden, d);
        let dnorm2 = layer_norm_backward(
            &db,
            &lc.norm2,
            lp.norm2_gamma.data(),
            d,
            gl.norm2_gamma.data_mut(),
            gl.norm2_beta.data_mut(),
        );
        let dh_res: Vec<f64> = dx.iter().zip(&dnorm2).map(|(a, b)| a + b).collect();

        // Attention branch.
        let mut dbranch = dh_res.clone();
        if let Some(mask) = &lc.mask1 {
            dbranch.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        matmul_at_b_acc(&lc.attn, &dbranch, gl.out_weight.data_mut(), n, d, d);
        col_sum_acc(&dbranch, gl.out_bias.data_mut(), d);
        let dattn = matmul_a_bt(&dbranch, lp.out_weight.data(), n, d, d);

        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut dp = vec![0.0; n];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..n {
                let doi = &dattn[i * d + off..i * d + off + dh];
                if doi.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let p = &lc.probs[(h * n + i) * n..(h * n + i + 1) * n];
                let mut dot = 0.0;
                for j in 0..n {
                    let vj = &lc.v[j * d + off..j * d + off + dh];
                    dp[j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    dot += p[j] * dp[j];
                    for (g, o) in dv[j * d + off..j * d + off + dh].iter_mut().zip(doi) {
                        *g += p[j] * o;
                    }
                }
                let qi: Vec<f64> = lc.q[i * d + off..i * d + off + dh].to_vec();
                for j in 0..n {
                    let ds = p[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        dq[i * d + off + c] += ds * lc.k[j * d + off + c];
                        dk[j * d + off + c] += ds * qi[c];
                    }
                }
            }
        }
        matmul_at_b_acc(&lc.a, &dq, gl.q_weight.data_mut(), n, d, d);
        col_sum_acc(&dq, gl.q_bias.data_mut(), d);
        matmul_at_b_acc(&lc.a, &dk, gl.k_weight.data_mut(), n, d, d);
        col_sum_acc(&dk, gl.k_bias.data_mut(), d);
        matmul_at_b_acc(&lc.a, &dv, gl.v_weight.data_mut(), n, d, d);
        col_sum_acc(&dv, gl.v_bias.data_mut(), d);
        let mut da = matmul_a_bt(&dq, lp.q_weight.data(), n, d, d);
        for (w, g) in [(&lp.k_weight, &dk), (&lp.v_weight, &dv)] {
            let part = matmul_a_bt(g, w.data(), n, d, d);
            da.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        let dnorm1 = layer_norm_backward(
            &da,
            &lc.norm1,
            lp.norm1_gamma.data(),
            d,
            gl.norm1_gamma.data_mut(),
            gl.norm1_beta.data_mut(),
        );
        dx = dh_res.iter().zip(&dnorm1).map(|(a, b)| a + b).collect();
    }

    // Embedding: row 0 is cls + cls_pos, row k is patch·W + b + pos[k-1].
    let cls_row = &dx[..d];
    for (g, v) in grads.cls_token.data_mut().iter_mut().zip(cls_row) {
        *g += v;
    }
    for (g, v) in grads.pos_embed.cls_slot.data_mut().iter_mut().zip(cls_row) {
        *g += v;
    }
    let body = &dx[d..];
    for (g, v) in grads.pos_embed.grid.data_mut().iter_mut().zip(body) {
        *g += v;
    }
    col_sum_acc(body, grads.patch_bias.data_mut(), d);
    let area = patches.patch_spec().area();
    matmul_at_b_acc(
        patches.as_matrix(),
        body,
        grads.patch_kernel.data_mut(),
        n - 1,
        area,
        d,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            num_layers: 1,
            num_heads: 2,
            mlp_ratio: 2,
            num_classes: 3,
            task: TaskKind::SingleLabel,
            patch: PatchSpec::square(2),
            dropout: 0.0,
        }
    }

    fn patches(seed: u64, grid: (usize, usize), patch: PatchSpec) -> PatchGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.0 * grid.1 * patch.area();
        PatchGrid::from_raw(grid.0, grid.1, patch, (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
            .unwrap()
    }

    #[test]
    fn zero_network_returns_head_bias() {
        let cfg = tiny_cfg();
        let mut p = Parameters::init(&cfg, (2, 2), cfg.patch, 1).zeros_like();
        p.head_bias = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let logits = forward_patches(&p, &cfg, &patches(3, (2, 2), cfg.patch)).unwrap();
        assert_eq!(logits, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn loss_examples() {
        let l = loss(&[0.0; 4], &Target::Class(2), TaskKind::SingleLabel).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = loss(&[0.0, 1000.0, 0.0], &Target::Class(1), TaskKind::SingleLabel).unwrap();
        assert!(l < 1e-3);
        let l = loss(&[0.0, 0.0], &Target::Labels(vec![1.0, 1.0]), TaskKind::MultiLabel).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_bad_targets() {
        assert!(loss(&[0.0; 3], &Target::Class(3), TaskKind::SingleLabel).is_err());
        assert!(loss(&[0.0; 3], &Target::Labels(vec![1.0; 3]), TaskKind::SingleLabel).is_err());
        assert!(loss(&[0.0; 3], &Target::Labels(vec![1.0, 0.5, 0.0]), TaskKind::MultiLabel).is_err());
        assert!(loss(&[0.0; 3], &Target::Labels(vec![1.0; 2]), TaskKind::MultiLabel).is_err());
    }

    #[test]
    fn head_bias_gradient_on_zero_input() {
        let cfg = tiny_cfg();
        let mut p = Parameters::init(&cfg, (2, 2), cfg.patch, 9);
        p.head_bias = Tensor::from_vec(&[3], vec![0.3, -0.2, 0.1]).unwrap();
        p.head_weight = Tensor::zeros(&[8, 3]);
        let zero = PatchGrid::from_raw(2, 2, cfg.patch, vec![0.0; 16]).unwrap();
        let (_, g) = gradients(&p, &cfg, &[Example { patches: zero, target: Target::Class(1) }]).unwrap();
        let mut expected = softmax(&[0.3, -0.2, 0.1]);
        expected[1] -= 1.0;
        for (a, b) in g.head_bias.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_of_logits_sums_to_one() {
        let cfg = tiny_cfg();
        let p = Parameters::init(&cfg, (2, 3), cfg.patch, 4);
        let logits = forward_patches(&p, &cfg, &patches(5, (2, 3), cfg.patch)).unwrap();
        assert!((softmax(&logits).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_geometry_mismatch() {
        let cfg = tiny_cfg();
        let p = Parameters::init(&cfg, (2, 2), cfg.patch, 4);
        assert!(forward_patches(&p, &cfg, &patches(1, (2, 3), cfg.patch)).is_err());
        assert!(forward_patches(&p, &cfg, &patches(1, (2, 2), PatchSpec::new(2, 4).unwrap())).is_err());
    }

    #[test]
    fn dropout_changes_training_gradients_only() {
        let cfg = ModelConfig {
            dropout: 0.5,
            ..tiny_cfg()
        };
        let p = Parameters::init(&cfg, (2, 2), cfg.patch, 4);
        let batch = [Example {
            patches: patches(2, (2, 2), cfg.patch),
            target: Target::Class(0),
        }];
        let (plain, _) = gradients(&p, &cfg, &batch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (dropped, _) = gradients_with_dropout(&p, &cfg, &batch, &mut rng).unwrap();
        assert_ne!(plain, dropped);
        let again = forward_patches(&p, &cfg, &batch[0].patches).unwrap();
        assert_eq!(again, forward_patches(&p, &cfg, &batch[0].patches).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            num_heads: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            num_classes: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
