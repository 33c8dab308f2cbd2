//! Time-axis compression of spectrograms.
//!
//! Pooling works on log-mel values with a `1 × C` kernel and stride. Patch
//! methods leave the spectrogram at full resolution; they compress at
//! tokenization time by widening the patch.

use std::fmt;
use std::str::FromStr;

use crate::dsp::{fshift_mel, log_mel, FramingParams, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompressionMethod {
    None,
    Fshift,
    AvgPool,
    MaxPool,
    PatchBL,
    PatchPI,
}

impl CompressionMethod {
    pub const ALL: [CompressionMethod; 6] = [
        CompressionMethod::None,
        CompressionMethod::Fshift,
        CompressionMethod::AvgPool,
        CompressionMethod::MaxPool,
        CompressionMethod::PatchBL,
        CompressionMethod::PatchPI,
    ];

    /// True for the methods that compress by widening the patch.
    pub fn is_patch(self) -> bool {
        matches!(self, CompressionMethod::PatchBL | CompressionMethod::PatchPI)
    }

    /// True for the methods that shorten the spectrogram itself.
    pub fn shortens_spectrogram(self) -> bool {
        matches!(
            self,
            CompressionMethod::Fshift | CompressionMethod::AvgPool | CompressionMethod::MaxPool
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            CompressionMethod::None => "none",
            CompressionMethod::Fshift => "fshift",
            CompressionMethod::AvgPool => "pool_avg",
            CompressionMethod::MaxPool => "pool_max",
            CompressionMethod::PatchBL => "patch_bl",
            CompressionMethod::PatchPI => "patch_pi",
        }
    }
}

impl fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompressionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompressionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown compression method {s:?} (expected one of none, fshift, pool_avg, pool_max, patch_bl, patch_pi)"
                ))
            })
    }
}

/// Integer ratio by which a phase reduces the time-axis token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompressionFactor(usize);

impl CompressionFactor {
    pub const NONE: CompressionFactor = CompressionFactor(1);

    pub fn new(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidArgument("compression factor must be at least 1".into()));
        }
        Ok(Self(c))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for CompressionFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy)]
enum Pool {
    Avg,
    Max,
}

fn pool_time(x: &MelSpectrogram, factor: usize, kind: Pool) -> Result<MelSpectrogram> {
    if factor == 0 {
        return Err(Error::InvalidArgument("compression factor must be positive".into()));
    }
    let t = x.time_frames();
    if !t.is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            what: "time frames",
            len: t,
            by: factor,
        });
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let out_t = t / factor;
    let mut out = Vec::with_capacity(x.n_mels() * out_t);
    for m in 0..x.n_mels() {
        for window in x.row(m).chunks_exact(factor) {
            out.push(match kind {
                Pool::Avg => window.iter().sum::<f64>() / factor as f64,
                Pool::Max => window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(x.with_bins(out, out_t, x.compression_factor() * factor))
}

/// Mean over non-overlapping windows of `factor` frames.
pub fn avg_pool_time(x: &MelSpectrogram, factor: usize) -> Result<MelSpectrogram> {
    pool_time(x, factor, Pool::Avg)
}

/// Maximum over non-overlapping windows of `factor` frames.
pub fn max_pool_time(x: &MelSpectrogram, factor: usize) -> Result<MelSpectrogram> {
    pool_time(x, factor, Pool::Max)
}

/// Produces the spectrogram a phase trains on.
pub fn apply_compression(
    w: &Waveform,
    method: CompressionMethod,
    factor: CompressionFactor,
    f: &FramingParams,
) -> Result<MelSpectrogram> {
    let c = factor.get();
    match method {
        CompressionMethod::None => {
            if c != 1 {
                return Err(Error::InvalidArgument(format!(
                    "method none requires C=1, got C={c}"
                )));
            }
            log_mel(w, f)
        }
        CompressionMethod::Fshift => fshift_mel(w, f, c),
        CompressionMethod::AvgPool => avg_pool_time(&log_mel(w, f)?, c),
        CompressionMethod::MaxPool => max_pool_time(&log_mel(w, f)?, c),
        CompressionMethod::PatchBL | CompressionMethod::PatchPI => {
            if !f.target_time_frames.is_multiple_of(c) {
                return Err(Error::NotDivisible {
                    what: "target_time_frames",
                    len: f.target_time_frames,
                    by: c,
                });
            }
            log_mel(w, f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(rows: &[&[f64]]) -> MelSpectrogram {
        let t = rows[0].len();
        let bins = rows.iter().flat_map(|r| r.iter().copied()).collect();
        MelSpectrogram::from_rows(bins, rows.len(), t, FramingParams::default(), 1).unwrap()
    }

    #[test]
    fn avg_examples() {
        let x = rows(&[&[1.0, 3.0, 5.0, 7.0]]);
        assert_eq!(avg_pool_time(&x, 2).unwrap().row(0), &[2.0, 6.0]);
        assert_eq!(avg_pool_time(&x, 4).unwrap().row(0), &[4.0]);
        assert_eq!(avg_pool_time(&x, 1).unwrap(), x);
        assert_eq!(avg_pool_time(&x, 2).unwrap().compression_factor(), 2);
    }

    #[test]
    fn max_examples() {
        let x = rows(&[&[1.0, 3.0, 5.0, 7.0]]);
        assert_eq!(max_pool_time(&x, 2).unwrap().row(0), &[3.0, 7.0]);
        let c = rows(&[&[2.5; 8]]);
        for factor in [1, 2, 4, 8] {
            assert!(max_pool_time(&c, factor).unwrap().row(0).iter().all(|&v| v == 2.5));
        }
        assert_eq!(max_pool_time(&rows(&[&[-2.0, -5.0]]), 2).unwrap().row(0), &[-2.0]);
    }

    #[test]
    fn rejects_indivisible() {
        let x = rows(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(avg_pool_time(&x, 2), Err(Error::NotDivisible { .. })));
        assert!(matches!(max_pool_time(&x, 2), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn dispatch_shapes() {
        let w = Waveform::new(
            (0..16000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(),
            16000,
        )
        .unwrap();
        let f = FramingParams {
            target_time_frames: 128,
            n_mels: 32,
            ..Default::default()
        };
        let c2 = CompressionFactor::new(2).unwrap();
        let base = log_mel(&w, &f).unwrap();
        assert_eq!(
            apply_compression(&w, CompressionMethod::None, CompressionFactor::NONE, &f).unwrap(),
            base
        );
        let avg = apply_compression(&w, CompressionMethod::AvgPool, c2, &f).unwrap();
        assert_eq!((avg.n_mels(), avg.time_frames()), (32, 64));
        let patch = apply_compression(
            &w,
            CompressionMethod::PatchBL,
            CompressionFactor::new(4).unwrap(),
            &f,
        )
        .unwrap();
        assert_eq!(patch, base);
        assert!(apply_compression(&w, CompressionMethod::None, c2, &f).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in CompressionMethod::ALL {
            assert_eq!(m.name().parse::<CompressionMethod>().unwrap(), m);
        }
        assert!("pool".parse::<CompressionMethod>().is_err());
        assert!(CompressionFactor::new(0).is_err());
    }
}
