//! Weight migration between phases of different token geometry.
//!
//! All resampling uses the align-corners convention: output sample `j` of
//! `n_new` sits at input position `j·(n_old−1)/(n_new−1)`, so the first and
//! last samples map onto each other exactly.

use crate::checkpoint::Checkpoint;
use crate::compress::{CompressionFactor, CompressionMethod};
use crate::error::{shape_err, Error, Result};
use crate::model::PosEmbedGrid;
use crate::tensor::Tensor;
use crate::tokenizer::PatchSpec;

/// Ridge added to the Gram matrix before factorization.
pub const PI_RIDGE: f64 = 1e-12;
/// Relative pivot size below which the Gram matrix counts as singular.
pub const PI_PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResizeMethod {
    Bilinear,
    PiResize,
}

impl ResizeMethod {
    pub fn name(self) -> &'static str {
        match self {
            ResizeMethod::Bilinear => "bilinear",
            ResizeMethod::PiResize => "pi",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "bilinear" | "bl" => Some(ResizeMethod::Bilinear),
            "pi" | "pi_resize" => Some(ResizeMethod::PiResize),
            _ => None,
        }
    }

    /// The kernel resize a compression method implies.
    pub fn for_method(method: CompressionMethod) -> Self {
        match method {
            CompressionMethod::PatchPI => ResizeMethod::PiResize,
            _ => ResizeMethod::Bilinear,
        }
    }
}

/// Token geometry of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseGeometry {
    pub method: CompressionMethod,
    pub factor: CompressionFactor,
    pub grid: (usize, usize),
    pub patch: PatchSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseTransition {
    pub from: PhaseGeometry,
    pub to: PhaseGeometry,
    pub resize: ResizeMethod,
}

/// Row-major `n_new × n_old` matrix of 1-D linear interpolation weights.
pub fn interp_matrix(n_old: usize, n_new: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_new * n_old];
    for j in 0..n_new {
        let (i0, i1, frac) = sample_point(j, n_old, n_new);
        m[j * n_old + i0] += 1.0 - frac;
        m[j * n_old + i1] += frac;
    }
    m
}

fn sample_point(j: usize, n_old: usize, n_new: usize) -> (usize, usize, f64) {
    if n_new == 1 || n_old == 1 {
        return (0, 0, 0.0);
    }
    let pos = (j * (n_old - 1)) as f64 / (n_new - 1) as f64;
    let i0 = (pos.floor() as usize).min(n_old - 1);
    let i1 = (i0 + 1).min(n_old - 1);
    (i0, i1, pos - i0 as f64)
}

/// Resamples a `[rows, cols, channels]` array along both grid axes.
pub fn resize_grid_bilinear(
    values: &[f64],
    old: (usize, usize),
    new: (usize, usize),
    channels: usize,
) -> Result<Vec<f64>> {
    if values.len() != old.0 * old.1 * channels {
        return Err(shape_err(format!(
            "{} values do not form a {}x{}x{channels} grid",
            values.len(),
            old.0,
            old.1
        )));
    }
    if new.0 == 0 || new.1 == 0 {
        return Err(Error::InvalidArgument("target grid must be non-empty".into()));
    }
    if old == new {
        return Ok(values.to_vec());
    }
    // Time axis first, then frequency axis.
    let mut along_time = vec![0.0; old.0 * new.1 * channels];
    for r in 0..old.0 {
        for j in 0..new.1 {
            let (i0, i1, frac) = sample_point(j, old.1, new.1);
            for c in 0..channels {
                let a = values[(r * old.1 + i0) * channels + c];
                let b = values[(r * old.1 + i1) * channels + c];
                along_time[(r * new.1 + j) * channels + c] = (1.0 - frac) * a + frac * b;
            }
        }
    }
    if old.0 == new.0 {
        return Ok(along_time);
    }
    let mut out = vec![0.0; new.0 * new.1 * channels];
    for r in 0..new.0 {
        let (i0, i1, frac) = sample_point(r, old.0, new.0);
        for j in 0..new.1 {
            for c in 0..channels {
                let a = along_time[(i0 * new.1 + j) * channels + c];
                let b = along_time[(i1 * new.1 + j) * channels + c];
                out[(r * new.1 + j) * channels + c] = (1.0 - frac) * a + frac * b;
            }
        }
    }
    Ok(out)
}

/// Interpolates the positional grid along time to `new_dims.1` slots. The
/// CLS slot is copied unchanged.
pub fn interp_posemb(grid: &PosEmbedGrid, new_dims: (usize, usize)) -> Result<PosEmbedGrid> {
    let old = grid.grid_dims();
    if new_dims.0 != old.0 {
        return Err(shape_err(format!(
            "positional grid has {} frequency rows, target has {}",
            old.0, new_dims.0
        )));
    }
    if new_dims.1 == 0 {
        return Err(Error::InvalidArgument("target time dimension must be at least 1".into()));
    }
    if new_dims == old {
        return Ok(grid.clone());
    }
    let d = grid.dim();
    let values = resize_grid_bilinear(grid.grid(), old, new_dims, d)?;
    PosEmbedGrid::new(
        Tensor::from_vec(&[new_dims.0, new_dims.1, d], values)?,
        grid.cls_slot.clone(),
    )
}

fn kernel_dims(kernel: &Tensor) -> Result<(usize, usize, usize)> {
    match *kernel.shape() {
        [h, w, d] => Ok((h, w, d)),
        _ => Err(shape_err(format!("patch kernel must be rank 3, got {:?}", kernel.shape()))),
    }
}

/// Resizes every channel's `p_f × w_old` slice to `p_f × w_new` by linear
/// interpolation along the width.
pub fn resize_kernel_bilinear(kernel: &Tensor, w_new: usize) -> Result<Tensor> {
    let (h, w_old, d) = kernel_dims(kernel)?;
    if w_new == 0 {
        return Err(Error::InvalidArgument("target width must be at least 1".into()));
    }
    let values = resize_grid_bilinear(kernel.data(), (h, w_old), (h, w_new), d)?;
    Tensor::from_vec(&[h, w_new, d], values)
}

/// The `(p_f·w_new) × (p_f·w_old)` matrix that resizes a flattened
/// `p_f × w_old` patch to `p_f × w_new`.
pub fn bilinear_resize_matrix(height: usize, w_old: usize, w_new: usize) -> Vec<f64> {
    let r = interp_matrix(w_old, w_new);
    let (rows, cols) = (height * w_new, height * w_old);
    let mut b = vec![0.0; rows * cols];
    for i in 0..height {
        for j in 0..w_new {
            for k in 0..w_old {
                b[(i * w_new + j) * cols + i * w_old + k] = r[j * w_old + k];
            }
        }
    }
    b
}

/// Pseudo-inverse resize: per channel, the minimum-norm least-squares
/// solution `ŵ` of `Bᵀŵ = w`, where `B` is the bilinear patch resize map.
/// When upsampling this preserves `⟨x, w⟩ = ⟨Bx, ŵ⟩` for every patch `x`.
pub fn pi_resize(kernel: &Tensor, w_new: usize) -> Result<Tensor> {
    let (h, w_old, d) = kernel_dims(kernel)?;
    if w_new == 0 {
        return Err(Error::InvalidArgument("target width must be at least 1".into()));
    }
    if w_new == w_old {
        return Ok(kernel.clone());
    }
    let p_old = h * w_old;
    let p_new = h * w_new;
    let b = bilinear_resize_matrix(h, w_old, w_new);
    let w = kernel.data(); // p_old × d

    let out = if p_new >= p_old {
        // B has full column rank: ŵ = B (BᵀB + λI)⁻¹ w.
        let gram = gram_of_columns(&b, p_new, p_old);
        let chol = Cholesky::factor(gram, p_old)?;
        let y = chol.solve_columns(w, d);
        matmul(&b, &y, p_new, p_old, d)
    } else {
        // B has full row rank: ŵ = (BBᵀ + λI)⁻¹ B w.
        let gram = gram_of_rows(&b, p_new, p_old);
        let chol = Cholesky::factor(gram, p_new)?;
        let bw = matmul(&b, w, p_new, p_old, d);
        chol.solve_columns(&bw, d)
    };
    Tensor::from_vec(&[h, w_new, d], out)
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    crate::tensor::matmul_acc(a, b, &mut out, m, k, n);
    out
}

/// `AᵀA` for `a` of shape `rows × cols`.
fn gram_of_columns(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    crate::tensor::matmul_at_b_acc(a, a, &mut g, rows, cols, cols);
    g
}

/// `AAᵀ` for `a` of shape `rows × cols`.
fn gram_of_rows(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    crate::tensor::matmul_a_bt(a, a, rows, cols, rows)
}

struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    /// Factors `gram + PI_RIDGE·I`, failing if a pivot collapses.
    fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..n {
            a[i * n + i] += PI_RIDGE;
        }
        let tolerance = PI_PIVOT_TOLERANCE * scale;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > tolerance) {
                return Err(Error::Singular {
                    pivot: diag,
                    tolerance,
                });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { l, n })
    }

    /// Solves `(LLᵀ) X = B` for `B` of shape `n × cols`.
    fn solve_columns(&self, b: &[f64], cols: usize) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut x = b.to_vec();
        for c in 0..cols {
            for i in 0..n {
                let mut s = x[i * cols + c];
                for k in 0..i {
                    s -= l[i * n + k] * x[k * cols + c];
                }
                x[i * cols + c] = s / l[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = x[i * cols + c];
                for k in i + 1..n {
                    s -= l[k * n + i] * x[k * cols + c];
                }
                x[i * cols + c] = s / l[i * n + i];
            }
        }
        x
    }
}

/// Carries a checkpoint into the geometry of the next phase.
///
/// The positional grid is interpolated whenever the token grid changes and
/// the patch kernel is resized (bilinear or pseudo-inverse) whenever the
/// patch width changes. Every other tensor is copied verbatim, and the
/// optimizer state is dropped so the next phase starts fresh.
pub fn migrate(ckpt: &Checkpoint, trans: &PhaseTransition) -> Result<Checkpoint> {
    let (from, to) = (&trans.from, &trans.to);
    if ckpt.provenance.method != from.method || ckpt.provenance.factor != from.factor {
        return Err(Error::Provenance(format!(
            "checkpoint was produced by {} C={}, transition starts from {} C={}",
            ckpt.provenance.method, ckpt.provenance.factor, from.method, from.factor
        )));
    }
    if ckpt.params.grid_dims() != from.grid || ckpt.params.patch_spec() != from.patch {
        return Err(Error::Provenance(format!(
            "checkpoint geometry {:?} with {} patches, transition starts from {:?} with {}",
            ckpt.params.grid_dims(),
            ckpt.params.patch_spec(),
            from.grid,
            from.patch
        )));
    }
    if to.factor > from.factor {
        return Err(Error::Transition(format!(
            "compression may only decrease across phases, got C={} -> C={}",
            from.factor, to.factor
        )));
    }
    if to.factor == from.factor && (to.grid != from.grid || to.patch != from.patch) {
        return Err(Error::Transition(
            "equal compression factors must keep the token geometry".into(),
        ));
    }
    if to.patch.height_bins != from.patch.height_bins || to.grid.0 != from.grid.0 {
        return Err(Error::Transition(
            "the frequency axis never changes across phases".into(),
        ));
    }

    let mut params = ckpt.params.clone();
    if to.patch.width_frames != from.patch.width_frames {
        params.patch_kernel = match trans.resize {
            ResizeMethod::Bilinear => resize_kernel_bilinear(&params.patch_kernel, to.patch.width_frames)?,
            ResizeMethod::PiResize => pi_resize(&params.patch_kernel, to.patch.width_frames)?,
        };
    }
    if to.grid != from.grid {
        params.pos_embed = interp_posemb(&params.pos_embed, to.grid)?;
    }
    Ok(Checkpoint {
        config: ckpt.config.clone(),
        params,
        optimizer: None,
        provenance: crate::checkpoint::Provenance {
            phase_index: ckpt.provenance.phase_index + 1,
            method: to.method,
            factor: to.factor,
        },
        seed: ckpt.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_exact() {
        let grid = PosEmbedGrid::from_fn((1, 4), 1, |k, _| k as f64);
        let out = interp_posemb(&grid, (1, 7)).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        for (a, b) in out.grid().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_and_constant() {
        let grid = PosEmbedGrid::from_fn((2, 5), 3, |k, c| (k * 3 + c) as f64 * 0.37);
        assert_eq!(interp_posemb(&grid, (2, 5)).unwrap(), grid);
        let constant = PosEmbedGrid::from_fn((2, 4), 2, |_, _| 1.25);
        for t in [1, 3, 9, 16] {
            let out = interp_posemb(&constant, (2, t)).unwrap();
            assert!(out.grid().iter().all(|&v| (v - 1.25).abs() < 1e-15));
        }
        assert!(interp_posemb(&grid, (3, 5)).is_err());
        assert!(interp_posemb(&grid, (2, 0)).is_err());
    }

    #[test]
    fn cls_slot_is_copied() {
        let mut grid = PosEmbedGrid::from_fn((1, 2), 2, |k, c| (k + c) as f64);
        grid.cls_slot = Tensor::from_vec(&[2], vec![4.0, -4.0]).unwrap();
        assert_eq!(interp_posemb(&grid, (1, 8)).unwrap().cls_slot, grid.cls_slot);
    }

    #[test]
    fn kernel_bilinear_midpoint() {
        let k = Tensor::from_vec(&[1, 2, 1], vec![2.0, 6.0]).unwrap();
        let out = resize_kernel_bilinear(&k, 3).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 6.0]);
        assert_eq!(resize_kernel_bilinear(&k, 2).unwrap(), k);
        let c = Tensor::filled(&[3, 4, 2], -0.5);
        assert!(resize_kernel_bilinear(&c, 7).unwrap().data().iter().all(|&v| v == -0.5));
    }

    #[test]
    fn pi_identity() {
        let k = Tensor::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pi_resize(&k, 2).unwrap(), k);
    }

    #[test]
    fn resize_matrix_is_block_diagonal() {
        let b = bilinear_resize_matrix(2, 2, 3);
        #[rustfmt::skip]
        let expected = [
            1.0, 0.0, 0.0, 0.0,
            0.5, 0.5, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.5, 0.5,
            0.0, 0.0, 0.0, 1.0,
        ];
        assert_eq!(b, expected);
    }

    #[test]
    fn singular_gram_is_reported() {
        assert!(matches!(
            Cholesky::factor(vec![1.0, 1.0, 1.0, 1.0], 2),
            Err(Error::Singular { .. })
        ));
    }
}
