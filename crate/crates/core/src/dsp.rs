//! Log-mel spectrogram front end.
//!
//! Frames lie fully inside the signal (no centering or reflection padding),
//! each frame is Hann-windowed and zero-padded to `fft_size`, the power
//! spectrum is pooled through an HTK-scale triangular filterbank spanning
//! 0 Hz to Nyquist, and the result is floored at [`LOG_FLOOR`] before the
//! natural log. The time axis is then padded with silent columns or
//! truncated so every spectrogram has exactly `target_time_frames` columns
//! (divided by the compression factor for frame-shift compression).

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Energy floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramingParams {
    pub frame_size_ms: f64,
    pub frame_shift_ms: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    pub target_time_frames: usize,
}

impl Default for FramingParams {
    fn default() -> Self {
        Self {
            frame_size_ms: 25.0,
            frame_shift_ms: 10.0,
            n_mels: 128,
            fft_size: 512,
            target_time_frames: 1024,
        }
    }
}

impl FramingParams {
    /// Frame length in samples, rounded to the nearest sample.
    pub fn frame_samples(&self, sample_rate_hz: u32) -> usize {
        ms_to_samples(self.frame_size_ms, sample_rate_hz)
    }

    pub fn shift_samples(&self, sample_rate_hz: u32) -> usize {
        ms_to_samples(self.frame_shift_ms, sample_rate_hz)
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.frame_size_ms > 0.0 && self.frame_shift_ms > 0.0) {
            return bad("frame size and shift must be positive".into());
        }
        if self.frame_size_ms < self.frame_shift_ms {
            return bad(format!(
                "frame size {} ms is smaller than frame shift {} ms",
                self.frame_size_ms, self.frame_shift_ms
            ));
        }
        if self.n_mels == 0 || self.target_time_frames == 0 || self.fft_size == 0 {
            return bad("n_mels, fft_size and target_time_frames must be positive".into());
        }
        let frame = self.frame_samples(sample_rate_hz);
        if frame == 0 || self.shift_samples(sample_rate_hz) == 0 {
            return bad("frame or shift rounds to zero samples".into());
        }
        if self.fft_size < frame {
            return bad(format!(
                "fft size {} is smaller than the frame of {frame} samples",
                self.fft_size
            ));
        }
        if self.n_mels > self.fft_size / 2 {
            return bad(format!(
                "{} mel bands exceed fft_size/2 = {}",
                self.n_mels,
                self.fft_size / 2
            ));
        }
        Ok(())
    }
}

fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
}

/// An `n_mels × time_frames` grid of log energies, stored frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    bins: Vec<f64>,
    n_mels: usize,
    time_frames: usize,
    framing: FramingParams,
    compression_factor: usize,
}

impl MelSpectrogram {
    /// Builds a spectrogram from a row-major grid.
    pub fn from_rows(
        bins: Vec<f64>,
        n_mels: usize,
        time_frames: usize,
        framing: FramingParams,
        compression_factor: usize,
    ) -> Result<Self> {
        if bins.len() != n_mels * time_frames {
            return Err(Error::Shape(format!(
                "{} values cannot form a {n_mels}x{time_frames} grid",
                bins.len()
            )));
        }
        if compression_factor == 0 {
            return Err(Error::InvalidArgument("compression factor must be positive".into()));
        }
        if bins.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spectrogram entries must be finite".into()));
        }
        Ok(Self {
            bins,
            n_mels,
            time_frames,
            framing,
            compression_factor,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn time_frames(&self) -> usize {
        self.time_frames
    }

    pub fn framing(&self) -> &FramingParams {
        &self.framing
    }

    pub fn compression_factor(&self) -> usize {
        self.compression_factor
    }

    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.bins[mel * self.time_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.bins[mel * self.time_frames..(mel + 1) * self.time_frames]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.bins
    }

    /// Mean over time of every mel band.
    pub fn band_means(&self) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().sum::<f64>() / self.time_frames as f64)
            .collect()
    }

    /// Applies `(x - mean) / std` to every entry.
    pub fn normalized(&self, mean: f64, std: f64) -> Self {
        let mut out = self.clone();
        out.bins.iter_mut().for_each(|v| *v = (*v - mean) / std);
        out
    }

    pub(crate) fn with_bins(&self, bins: Vec<f64>, time_frames: usize, factor: usize) -> Self {
        debug_assert_eq!(bins.len(), self.n_mels * time_frames);
        Self {
            bins,
            n_mels: self.n_mels,
            time_frames,
            framing: self.framing.clone(),
            compression_factor: factor,
        }
    }
}

/// Number of whole frames that fit in `num_samples`.
pub fn frame_count(num_samples: usize, frame_samples: usize, shift_samples: usize) -> usize {
    assert!(frame_samples > 0 && shift_samples > 0, "frame and shift must be positive");
    if num_samples < frame_samples {
        0
    } else {
        1 + (num_samples - frame_samples) / shift_samples
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK mel filterbank over the one-sided power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate_hz: u32) -> Self {
        let n_bins = fft_size / 2 + 1;
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        let top = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate_hz) / fft_size as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..n_bins {
                let hz = k as f64 * bin_hz;
                let w = if hz > lo && hz <= center {
                    (hz - lo) / (center - lo)
                } else if hz > center && hz < hi {
                    (hi - hz) / (hi - center)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        Self {
            n_mels,
            n_bins,
            weights,
            edges_hz,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Peak frequency of every triangle.
    pub fn center_frequencies(&self) -> &[f64] {
        &self.edges_hz[1..self.n_mels + 1]
    }

    pub fn weights(&self, mel: usize) -> &[f64] {
        &self.weights[mel * self.n_bins..(mel + 1) * self.n_bins]
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self
                .weights(m)
                .iter()
                .zip(power)
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Log-mel spectrogram with the configured frame shift.
pub fn log_mel(w: &Waveform, f: &FramingParams) -> Result<MelSpectrogram> {
    mel_with_shift(w, f, 1)
}

/// Log-mel spectrogram whose frame shift is multiplied by `factor`, yielding
/// `target_time_frames / factor` columns. The frame size is unchanged.
pub fn fshift_mel(w: &Waveform, f: &FramingParams, factor: usize) -> Result<MelSpectrogram> {
    if factor == 0 {
        return Err(Error::InvalidArgument("compression factor must be positive".into()));
    }
    if !f.target_time_frames.is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            what: "target_time_frames",
            len: f.target_time_frames,
            by: factor,
        });
    }
    mel_with_shift(w, f, factor)
}

fn mel_with_shift(w: &Waveform, f: &FramingParams, factor: usize) -> Result<MelSpectrogram> {
    let rate = w.sample_rate_hz();
    f.validate(rate)?;
    let frame = f.frame_samples(rate);
    let shift = ms_to_samples(f.frame_shift_ms * factor as f64, rate);
    if w.len() < frame {
        return Err(Error::TooShort {
            samples: w.len(),
            frame,
        });
    }
    let target = f.target_time_frames / factor;
    let real_frames = frame_count(w.len(), frame, shift).min(target);

    let bank = MelFilterbank::new(f.n_mels, f.fft_size, rate);
    let window = hann_window(frame);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(f.fft_size);
    let n_bins = f.fft_size / 2 + 1;

    let floor = LOG_FLOOR.ln();
    let mut bins = vec![floor; f.n_mels * target];
    let mut buf = vec![Complex::new(0.0, 0.0); f.fft_size];
    let mut power = vec![0.0; n_bins];
    let mut mel = vec![0.0; f.n_mels];
    let samples = w.samples();
    for t in 0..real_frames {
        let start = t * shift;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < frame {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, &mut mel);
        for (m, e) in mel.iter().enumerate() {
            bins[m * target + t] = e.max(LOG_FLOOR).ln();
        }
    }
    MelSpectrogram::from_rows(bins, f.n_mels, target, f.clone(), factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, rate: u32) -> Waveform {
        let n = (seconds * f64::from(rate)) as usize;
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    #[test]
    fn frame_count_examples() {
        assert_eq!(frame_count(400, 400, 160), 1);
        assert_eq!(frame_count(16000, 400, 160), 98);
        assert_eq!(frame_count(16000, 400, 320), 49);
        assert_eq!(frame_count(399, 400, 160), 0);
    }

    #[test]
    fn silence_hits_the_floor() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let f = FramingParams {
            target_time_frames: 100,
            ..Default::default()
        };
        let m = log_mel(&w, &f).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn ten_seconds_default_geometry() {
        let w = sine(440.0, 10.0, 16000);
        let m = log_mel(&w, &FramingParams::default()).unwrap();
        assert_eq!((m.n_mels(), m.time_frames()), (128, 1024));
        let floor = LOG_FLOOR.ln();
        // 998 real frames, 26 silent pad columns.
        assert!((0..998).all(|t| (0..128).any(|b| m.get(b, t) > floor)));
        assert!((998..1024).all(|t| (0..128).all(|b| m.get(b, t) == floor)));
    }

    #[test]
    fn sine_peaks_in_nearest_filter() {
        let w = sine(1000.0, 1.0, 16000);
        let f = FramingParams {
            target_time_frames: 98,
            ..Default::default()
        };
        let m = log_mel(&w, &f).unwrap();
        let bank = MelFilterbank::new(128, 512, 16000);
        let expected = bank
            .center_frequencies()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        for t in 0..98 {
            let argmax = (0..128)
                .max_by(|&a, &b| m.get(a, t).total_cmp(&m.get(b, t)))
                .unwrap();
            assert_eq!(argmax, expected, "frame {t}");
        }
    }

    #[test]
    fn fshift_identity_and_shapes() {
        let w = sine(300.0, 10.0, 16000);
        let f = FramingParams::default();
        assert_eq!(fshift_mel(&w, &f, 1).unwrap(), log_mel(&w, &f).unwrap());
        let m4 = fshift_mel(&w, &f, 4).unwrap();
        assert_eq!((m4.n_mels(), m4.time_frames(), m4.compression_factor()), (128, 256, 4));

        let one = sine(300.0, 1.0, 16000);
        let f100 = FramingParams {
            target_time_frames: 100,
            ..Default::default()
        };
        let m2 = fshift_mel(&one, &f100, 2).unwrap();
        assert_eq!(m2.time_frames(), 50);
        let floor = LOG_FLOOR.ln();
        assert!(m2.row(10)[..49].iter().all(|&v| v > floor));
        assert!((0..128).all(|b| m2.get(b, 49) == floor));
    }

    #[test]
    fn fshift_rejects_indivisible_target() {
        let w = sine(300.0, 1.0, 16000);
        let f = FramingParams {
            target_time_frames: 100,
            ..Default::default()
        };
        assert!(matches!(
            fshift_mel(&w, &f, 3),
            Err(Error::NotDivisible { by: 3, .. })
        ));
    }

    #[test]
    fn rejects_short_waveform() {
        let w = Waveform::new(vec![0.1; 399], 16000).unwrap();
        assert!(matches!(
            log_mel(&w, &FramingParams::default()),
            Err(Error::TooShort { samples: 399, frame: 400 })
        ));
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
    }

    #[test]
    fn framing_validation() {
        let f = FramingParams {
            frame_size_ms: 5.0,
            ..Default::default()
        };
        assert!(f.validate(16000).is_err());
        let f = FramingParams {
            n_mels: 300,
            ..Default::default()
        };
        assert!(f.validate(16000).is_err());
        let f = FramingParams {
            fft_size: 256,
            ..Default::default()
        };
        assert!(f.validate(16000).is_err());
        assert!(FramingParams::default().validate(16000).is_ok());
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
