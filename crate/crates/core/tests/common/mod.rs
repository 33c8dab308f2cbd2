#![allow(dead_code)]

use c2f::model::{gradients, loss, forward_patches, Example, ModelConfig, Parameters, Target, TaskKind};
use c2f::tokenizer::{PatchGrid, PatchSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_patches(rng: &mut ChaCha8Rng, grid: (usize, usize), patch: PatchSpec) -> PatchGrid {
    let n = grid.0 * grid.1 * patch.area();
    PatchGrid::from_raw(grid.0, grid.1, patch, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
}

/// Parameters with every tensor (norm scales and biases included) drawn
/// around its usual value, so no gradient is trivially zero.
pub fn randomized(cfg: &ModelConfig, grid: (usize, usize), patch: PatchSpec, seed: u64, std: f64) -> Parameters {
    let mut r = rng(seed);
    let mut p = Parameters::init_with(cfg, grid, patch, &mut r, std);
    let noise = Normal::new(0.0, std).unwrap();
    for (name, t) in p.tensors_mut() {
        if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("gamma") {
            t.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut r));
        }
    }
    p
}

pub fn random_target(rng: &mut ChaCha8Rng, task: TaskKind, k: usize) -> Target {
    match task {
        TaskKind::SingleLabel => Target::Class(rng.random_range(0..k)),
        TaskKind::MultiLabel => Target::Labels((0..k).map(|_| f64::from(rng.random_range(0..2u8))).collect()),
    }
}

pub fn batch_loss(p: &Parameters, cfg: &ModelConfig, batch: &[Example]) -> f64 {
    batch
        .iter()
        .map(|e| loss(&forward_patches(p, cfg, &e.patches).unwrap(), &e.target, cfg.task).unwrap())
        .sum::<f64>()
        / batch.len() as f64
}

/// Per parameter group: largest relative deviation between the analytic
/// gradient and central finite differences. The denominator is floored at
/// `abs_floor` so coordinates whose true gradient is ~0 are compared in
/// absolute terms.
pub fn gradient_check(
    p: &Parameters,
    cfg: &ModelConfig,
    batch: &[Example],
    h: f64,
    abs_floor: f64,
) -> Vec<(String, f64)> {
    let (_, analytic) = gradients(p, cfg, batch).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let mut probe = p.clone();
    let mut out = Vec::new();
    for (g, (name, grad)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..grad.len() {
            let original = probe.tensors()[g].1.data()[i];
            probe.tensors_mut()[g].1.data_mut()[i] = original + h;
            let up = batch_loss(&probe, cfg, batch);
            probe.tensors_mut()[g].1.data_mut()[i] = original - h;
            let down = batch_loss(&probe, cfg, batch);
            probe.tensors_mut()[g].1.data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(numeric.abs()).max(abs_floor);
            worst = worst.max((grad[i] - numeric).abs() / denom);
        }
        out.push((name.clone(), worst));
    }
    out
}

/// The configuration the gradient check runs on.
pub fn grad_check_config(task: TaskKind) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        num_layers: 1,
        num_heads: 2,
        mlp_ratio: 2,
        num_classes: 3,
        task,
        patch: PatchSpec::square(16),
        dropout: 0.0,
    }
}

/// Worst group error for one task kind and patch geometry.
pub fn grad_check_case(task: TaskKind, patch: PatchSpec, seed: u64) -> Vec<(String, f64)> {
    let cfg = grad_check_config(task);
    let grid = (2, 32 / patch.width_frames);
    let p = randomized(&cfg, grid, patch, seed, 0.3);
    let mut r = rng(seed + 1);
    let batch: Vec<Example> = (0..2)
        .map(|_| Example {
            patches: random_patches(&mut r, grid, patch),
            target: random_target(&mut r, task, cfg.num_classes),
        })
        .collect();
    // h = 1e-4 balances truncation (~h²) against round-off (~ε/h).
    gradient_check(&p, &cfg, &batch, 1e-4, 1e-6)
}

/// Align-corners linear resampling of a length `w_old` row to `w_new`,
/// written as an explicit matrix, applied to every row of a
/// `height × w_old` patch.
pub fn patch_resize_matrix(height: usize, w_old: usize, w_new: usize) -> nalgebra::DMatrix<f64> {
    let mut b = nalgebra::DMatrix::zeros(height * w_new, height * w_old);
    for j in 0..w_new {
        let pos = if w_new == 1 { 0.0 } else { j as f64 * (w_old - 1) as f64 / (w_new - 1) as f64 };
        let left = (pos.floor() as usize).min(w_old - 1);
        let right = (left + 1).min(w_old - 1);
        let t = pos - left as f64;
        for i in 0..height {
            b[(i * w_new + j, i * w_old + left)] += 1.0 - t;
            b[(i * w_new + j, i * w_old + right)] += t;
        }
    }
    b
}

/// Column `c` of a `[h, w, d]` kernel as a flattened patch.
pub fn kernel_column(kernel: &c2f::tensor::Tensor, c: usize) -> nalgebra::DVector<f64> {
    let d = kernel.shape()[2];
    nalgebra::DVector::from_iterator(kernel.len() / d, kernel.data().iter().skip(c).step_by(d).copied())
}

pub fn random_kernel(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> c2f::tensor::Tensor {
    let normal = Normal::new(0.0, 1.0).unwrap();
    c2f::tensor::Tensor::from_vec(&[h, w, d], (0..h * w * d).map(|_| normal.sample(rng)).collect()).unwrap()
}

/// Largest deviation of the pseudo-inverse resize from its contract over
/// `d` random kernels and `d` random patches. Upsampling checks
/// `⟨x, w⟩ = ⟨Bx, ŵ⟩`; downsampling checks the normal-equation solution of
/// `min ‖Bᵀŵ − w‖`.
pub fn pi_resize_deviation(h: usize, w_old: usize, w_new: usize, d: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let kernel = random_kernel(&mut r, h, w_old, d);
    let resized = c2f::adapt::pi_resize(&kernel, w_new).unwrap();
    let b = patch_resize_matrix(h, w_old, w_new);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    if w_new >= w_old {
        for c in 0..d {
            let w = kernel_column(&kernel, c);
            let w_hat = kernel_column(&resized, c);
            let x = nalgebra::DVector::from_fn(h * w_old, |_, _| normal.sample(&mut r));
            let lhs = x.dot(&w);
            let rhs = (&b * &x).dot(&w_hat);
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    } else {
        let gram = &b * b.transpose();
        let lu = gram.lu();
        for c in 0..d {
            let w = kernel_column(&kernel, c);
            let oracle = lu.solve(&(&b * &w)).unwrap();
            let w_hat = kernel_column(&resized, c);
            worst = worst.max((oracle - w_hat).amax());
        }
    }
    worst
}

/// Straightforward windowed pooling over the time axis of a row-major grid.
pub fn brute_force_pool(values: &[f64], rows: usize, cols: usize, c: usize, max: bool) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..rows {
        let mut j = 0;
        while j < cols {
            let mut acc = if max { f64::NEG_INFINITY } else { 0.0 };
            for k in j..j + c {
                let v = values[r * cols + k];
                if max {
                    if v > acc {
                        acc = v;
                    }
                } else {
                    acc += v;
                }
            }
            out.push(if max { acc } else { acc / c as f64 });
            j += c;
        }
    }
    out
}
