//! Non-overlapping patchification and the linear patch embedding.
//!
//! Patches are enumerated frequency-major: patch `(a, b)` has raster index
//! `a * t + b`, where `a` walks the frequency axis and `b` the time axis.
//! Inside a patch, values are flattened row-major (mel band, then frame),
//! so the embedding kernel of shape `[p_f, p_t, d]` is read as a
//! `(p_f·p_t) × d` matrix.

use std::fmt;
use std::str::FromStr;

use crate::dsp::MelSpectrogram;
use crate::error::{shape_err, Error, Result};
use crate::model::PosEmbedGrid;
use crate::tensor::{matmul_acc, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchSpec {
    pub height_bins: usize,
    pub width_frames: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self::square(16)
    }
}

impl PatchSpec {
    pub fn new(height_bins: usize, width_frames: usize) -> Result<Self> {
        if height_bins == 0 || width_frames == 0 {
            return Err(Error::InvalidArgument("patch dimensions must be positive".into()));
        }
        Ok(Self {
            height_bins,
            width_frames,
        })
    }

    pub fn square(p: usize) -> Self {
        Self {
            height_bins: p,
            width_frames: p,
        }
    }

    /// The `p × C·p` patch used by patch-compressed phases.
    pub fn widened(self, factor: usize) -> Self {
        Self {
            height_bins: self.height_bins,
            width_frames: self.width_frames * factor,
        }
    }

    /// Values per patch.
    pub fn area(self) -> usize {
        self.height_bins * self.width_frames
    }
}

impl fmt::Display for PatchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height_bins, self.width_frames)
    }
}

impl FromStr for PatchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("patch {s:?} is not of the form HxW"));
        let (h, w) = s.split_once('x').ok_or_else(bad)?;
        let h = h.trim().parse().map_err(|_| bad())?;
        let w = w.trim().parse().map_err(|_| bad())?;
        PatchSpec::new(h, w)
    }
}

/// Token grid `(f, t)` for an `F × T` spectrogram.
pub fn token_grid_dims(n_mels: usize, time_frames: usize, patch: PatchSpec) -> Result<(usize, usize)> {
    if !n_mels.is_multiple_of(patch.height_bins) {
        return Err(Error::NotDivisible {
            what: "mel bands",
            len: n_mels,
            by: patch.height_bins,
        });
    }
    if !time_frames.is_multiple_of(patch.width_frames) {
        return Err(Error::NotDivisible {
            what: "time frames",
            len: time_frames,
            by: patch.width_frames,
        });
    }
    Ok((n_mels / patch.height_bins, time_frames / patch.width_frames))
}

/// The patches of one spectrogram in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    freq: usize,
    time: usize,
    patch: PatchSpec,
    data: Vec<f64>,
}

impl PatchGrid {
    pub fn from_raw(freq: usize, time: usize, patch: PatchSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != freq * time * patch.area() {
            return Err(shape_err(format!(
                "{} values do not make {freq}x{time} patches of {patch}",
                data.len()
            )));
        }
        Ok(Self {
            freq,
            time,
            patch,
            data,
        })
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.freq, self.time)
    }

    pub fn patch_spec(&self) -> PatchSpec {
        self.patch
    }

    pub fn num_patches(&self) -> usize {
        self.freq * self.time
    }

    pub fn patch(&self, k: usize) -> &[f64] {
        let a = self.patch.area();
        &self.data[k * a..(k + 1) * a]
    }

    /// All patches as a `num_patches × area` matrix.
    pub fn as_matrix(&self) -> &[f64] {
        &self.data
    }

    /// Rebuilds the `F × T` row-major grid the patches came from.
    pub fn reassemble(&self) -> Vec<f64> {
        let (ph, pw) = (self.patch.height_bins, self.patch.width_frames);
        let t_total = self.time * pw;
        let mut out = vec![0.0; self.freq * ph * t_total];
        for a in 0..self.freq {
            for b in 0..self.time {
                let p = self.patch(a * self.time + b);
                for i in 0..ph {
                    let dst = (a * ph + i) * t_total + b * pw;
                    out[dst..dst + pw].copy_from_slice(&p[i * pw..(i + 1) * pw]);
                }
            }
        }
        out
    }
}

pub fn patchify(x: &MelSpectrogram, patch: PatchSpec) -> Result<PatchGrid> {
    let (f, t) = token_grid_dims(x.n_mels(), x.time_frames(), patch)?;
    let (ph, pw) = (patch.height_bins, patch.width_frames);
    let mut data = Vec::with_capacity(x.n_mels() * x.time_frames());
    for a in 0..f {
        for b in 0..t {
            for i in 0..ph {
                data.extend_from_slice(&x.row(a * ph + i)[b * pw..(b + 1) * pw]);
            }
        }
    }
    PatchGrid::from_raw(f, t, patch, data)
}

/// Embedded tokens, CLS first.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    tokens: Vec<f64>,
    dim: usize,
    grid_dims: (usize, usize),
}

impl TokenSequence {
    pub fn from_raw(tokens: Vec<f64>, dim: usize, grid_dims: (usize, usize)) -> Result<Self> {
        let n = grid_dims.0 * grid_dims.1 + 1;
        if tokens.len() != n * dim {
            return Err(shape_err(format!(
                "{} values do not make {n} tokens of width {dim}",
                tokens.len()
            )));
        }
        Ok(Self {
            tokens,
            dim,
            grid_dims,
        })
    }

    /// Number of tokens including CLS.
    pub fn len(&self) -> usize {
        self.grid_dims.0 * self.grid_dims.1 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.grid_dims
    }

    pub fn token(&self, k: usize) -> &[f64] {
        &self.tokens[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_matrix(&self) -> &[f64] {
        &self.tokens
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.iter().all(|v| v.is_finite())
    }
}

/// `token_k = flatten(patch_k) · kernel + bias + posemb_k`, with
/// `cls + cls_posemb` prepended.
pub fn embed(
    patches: &PatchGrid,
    kernel: &Tensor,
    bias: &[f64],
    posemb: &PosEmbedGrid,
    cls: &[f64],
) -> Result<TokenSequence> {
    let spec = patches.patch_spec();
    let d = bias.len();
    if kernel.shape() != [spec.height_bins, spec.width_frames, d] {
        return Err(shape_err(format!(
            "kernel {:?} does not embed {spec} patches into width {d}",
            kernel.shape()
        )));
    }
    if cls.len() != d || posemb.dim() != d {
        return Err(shape_err("cls token or positional embedding width differs from kernel"));
    }
    if posemb.grid_dims() != patches.grid_dims() {
        return Err(shape_err(format!(
            "positional grid {:?} does not match token grid {:?}",
            posemb.grid_dims(),
            patches.grid_dims()
        )));
    }
    let n = patches.num_patches();
    let mut tokens = Vec::with_capacity((n + 1) * d);
    tokens.extend(cls.iter().zip(posemb.cls_slot()).map(|(c, p)| c + p));
    let mut body: Vec<f64> = posemb
        .grid()
        .chunks_exact(d)
        .flat_map(|p| p.iter().zip(bias).map(|(p, b)| p + b))
        .collect();
    matmul_acc(patches.as_matrix(), kernel.data(), &mut body, n, spec.area(), d);
    tokens.extend(body);
    TokenSequence::from_raw(tokens, d, patches.grid_dims())
}
