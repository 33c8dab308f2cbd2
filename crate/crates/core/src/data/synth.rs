//! Synthetic labelled audio.
//!
//! Every clip is drawn from its own ChaCha8 stream (`seed`, stream
//! `index + 1`), so clips can be generated in any order and the corpus is a
//! pure function of the spec and the seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{parse_bool, ConfigError, IniDocument, SectionReader};
use crate::data::wav::{dequantize, quantize};
use crate::dsp::{FramingParams, Waveform};
use crate::error::{ConfigErrors, Error, Result};

/// Relative frequency jitter applied per clip.
const FREQ_JITTER: f64 = 0.03;
/// Range of the per-clip modulation depth of AM noise.
const AM_DEPTH: (f64, f64) = (0.4, 1.0);
/// RMS of a clip at 0 dB gain.
const REFERENCE_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    Tone { freq_hz: f64 },
    /// Linear sweep over the whole clip.
    Chirp { start_hz: f64, end_hz: f64 },
    /// White noise under a raised-sine envelope of the given rate and a
    /// random depth.
    AmNoise { rate_hz: f64 },
    /// First five harmonics with 1/h amplitudes.
    Harmonic { f0_hz: f64 },
}

impl Generator {
    fn render(self, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let jitter = |rng: &mut ChaCha8Rng| 1.0 + FREQ_JITTER * (2.0 * rng.random::<f64>() - 1.0);
        let phase = |rng: &mut ChaCha8Rng| 2.0 * PI * rng.random::<f64>();
        match self {
            Generator::Tone { freq_hz } => {
                let f = freq_hz * jitter(rng);
                let p = phase(rng);
                (0..n).map(|i| (2.0 * PI * f * i as f64 / rate + p).sin()).collect()
            }
            Generator::Chirp { start_hz, end_hz } => {
                let j = jitter(rng);
                let (f0, f1) = (start_hz * j, end_hz * j);
                let dur = n as f64 / rate;
                let p = phase(rng);
                (0..n)
                    .map(|i| {
                        let t = i as f64 / rate;
                        (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur)) + p).sin()
                    })
                    .collect()
            }
            Generator::AmNoise { rate_hz } => {
                let r = rate_hz * jitter(rng);
                let p = phase(rng);
                let depth = AM_DEPTH.0 + (AM_DEPTH.1 - AM_DEPTH.0) * rng.random::<f64>();
                (0..n)
                    .map(|i| {
                        let env = 1.0 - depth * 0.5 * (1.0 - (2.0 * PI * r * i as f64 / rate + p).sin());
                        let z: f64 = StandardNormal.sample(rng);
                        env * z
                    })
                    .collect()
            }
            Generator::Harmonic { f0_hz } => {
                let f = f0_hz * jitter(rng);
                let phases: Vec<f64> = (0..5).map(|_| phase(rng)).collect();
                (0..n)
                    .map(|i| {
                        let t = i as f64 / rate;
                        phases
                            .iter()
                            .enumerate()
                            .map(|(h, p)| {
                                let h = (h + 1) as f64;
                                (2.0 * PI * h * f * t + p).sin() / h
                            })
                            .sum()
                    })
                    .collect()
            }
        }
    }

    fn highest_freq(self) -> f64 {
        match self {
            Generator::Tone { freq_hz } => freq_hz,
            Generator::Chirp { start_hz, end_hz } => start_hz.max(end_hz),
            Generator::AmNoise { .. } => 0.0,
            Generator::Harmonic { f0_hz } => 5.0 * f0_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSpec {
    pub generator: Generator,
    /// Level relative to the reference RMS.
    pub gain_db: f64,
    /// Half-width of the uniform per-clip level jitter.
    pub gain_jitter_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    pub samples_per_class: usize,
    pub duration_s: f64,
    /// Signal-to-noise ratio of the additive white noise.
    pub snr_db: f64,
    /// Each clip mixes its own class with one other distinct class.
    pub multi_label: bool,
    pub sample_rate_hz: u32,
    pub framing: FramingParams,
}

/// Framing used by the desk-scale corpora: 32 mel bands, 128 frames.
pub fn desk_framing() -> FramingParams {
    FramingParams {
        n_mels: 32,
        target_time_frames: 128,
        ..FramingParams::default()
    }
}

impl Default for SyntheticSpec {
    /// Four classes: a tone, a harmonic stack and two noise bursts that
    /// differ mainly in how fast their envelope moves.
    fn default() -> Self {
        let class = |generator, gain_db| ClassSpec {
            generator,
            gain_db,
            gain_jitter_db: 1.25,
        };
        Self {
            classes: vec![
                class(Generator::Tone { freq_hz: 1000.0 }, 0.0),
                class(Generator::Harmonic { f0_hz: 220.0 }, 0.0),
                class(Generator::AmNoise { rate_hz: 40.0 }, 0.0),
                class(Generator::AmNoise { rate_hz: 10.0 }, 3.4),
            ],
            samples_per_class: 50,
            duration_s: 1.28,
            snr_db: 20.0,
            multi_label: false,
            sample_rate_hz: 16000,
            framing: desk_framing(),
        }
    }
}

impl SyntheticSpec {
    pub fn num_samples(&self) -> usize {
        (self.duration_s * f64::from(self.sample_rate_hz)).round() as usize
    }

    pub fn num_clips(&self) -> usize {
        self.classes.len() * self.samples_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes.len() < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be at least 2 so both splits are non-empty".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || !self.snr_db.is_finite() {
            return bad("duration_s must be positive and snr_db finite".into());
        }
        self.framing.validate(self.sample_rate_hz)?;
        if self.num_samples() < self.framing.frame_samples(self.sample_rate_hz) {
            return Err(Error::TooShort {
                samples: self.num_samples(),
                frame: self.framing.frame_samples(self.sample_rate_hz),
            });
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        for (k, c) in self.classes.iter().enumerate() {
            if c.generator.highest_freq() * (1.0 + FREQ_JITTER) >= nyquist {
                return bad(format!("class {k} reaches above the Nyquist frequency"));
            }
            if !c.gain_db.is_finite() || !(c.gain_jitter_db >= 0.0) {
                return bad(format!("class {k} has an invalid gain"));
            }
        }
        Ok(())
    }

    /// Labels of clip `index`, ascending.
    pub fn labels(&self, index: usize) -> Vec<usize> {
        let primary = index / self.samples_per_class;
        if !self.multi_label {
            return vec![primary];
        }
        let mut rng = clip_rng(0x5eed_1abe1, index);
        let other = (primary + 1 + rng.random_range(0..self.classes.len() - 1)) % self.classes.len();
        let mut l = vec![primary, other];
        l.sort_unstable();
        l
    }

    /// Renders clip `index` on the 16-bit grid.
    pub fn clip(&self, seed: u64, index: usize) -> Result<(Waveform, Vec<usize>)> {
        let labels = self.labels(index);
        let n = self.num_samples();
        let rate = f64::from(self.sample_rate_hz);
        let mut rng = clip_rng(seed, index);
        let mut mix = vec![0.0; n];
        for &l in &labels {
            let c = self.classes[l];
            let raw = c.generator.render(n, rate, &mut rng);
            let rms = (raw.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt().max(1e-12);
            let gain_db = c.gain_db + c.gain_jitter_db * (2.0 * rng.random::<f64>() - 1.0);
            let scale = REFERENCE_RMS * 10f64.powf(gain_db / 20.0) / rms;
            mix.iter_mut().zip(&raw).for_each(|(m, r)| *m += scale * r);
        }
        let signal_rms = (mix.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        let noise_rms = signal_rms * 10f64.powf(-self.snr_db / 20.0);
        let samples = mix
            .into_iter()
            .map(|s| {
                let z: f64 = StandardNormal.sample(&mut rng);
                dequantize(quantize(s + noise_rms * z))
            })
            .collect();
        Ok((Waveform::new(samples, self.sample_rate_hz)?, labels))
    }

    /// Indices of eval clips: a seeded 20% of every class.
    pub fn eval_indices(&self, seed: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let spc = self.samples_per_class;
        let n_eval = ((spc as f64 * 0.2).round() as usize).clamp(1, spc - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for k in 0..self.classes.len() {
            let mut idx: Vec<usize> = (k * spc..(k + 1) * spc).collect();
            idx.shuffle(&mut rng);
            out.extend_from_slice(&idx[..n_eval]);
        }
        out.sort_unstable();
        out
    }

    /// Parses a corpus description.
    ///
    /// ```text
    /// [corpus]
    /// samples_per_class = 50
    /// duration_s = 1.28
    /// snr_db = 20
    /// multi_label = false
    /// sample_rate_hz = 16000
    ///
    /// [framing]
    /// n_mels = 32
    /// target_time_frames = 128
    ///
    /// [class]
    /// generator = tone
    /// freq_hz = 1000
    /// gain_db = 0
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let doc = IniDocument::parse(text)?;
        let mut errors = Vec::new();
        for s in &doc.sections {
            if !["corpus", "framing", "class"].contains(&s.name.as_str()) {
                errors.push(ConfigError {
                    line: Some(s.line),
                    message: format!("unknown section [{}]", s.name),
                });
            }
        }
        let d = SyntheticSpec::default();
        let mut c = SectionReader::new(doc.sections_named("corpus").next(), "[corpus]");
        let samples_per_class = c.get("samples_per_class", d.samples_per_class, &mut errors);
        let duration_s = c.get("duration_s", d.duration_s, &mut errors);
        let snr_db = c.get("snr_db", d.snr_db, &mut errors);
        let multi_label = c.parse_with("multi_label", parse_bool, &mut errors).unwrap_or(false);
        let sample_rate_hz = c.get("sample_rate_hz", d.sample_rate_hz, &mut errors);
        c.finish(&mut errors);

        let mut f = SectionReader::new(doc.sections_named("framing").next(), "[framing]");
        let df = desk_framing();
        let framing = FramingParams {
            frame_size_ms: f.get("frame_size_ms", df.frame_size_ms, &mut errors),
            frame_shift_ms: f.get("frame_shift_ms", df.frame_shift_ms, &mut errors),
            n_mels: f.get("n_mels", df.n_mels, &mut errors),
            fft_size: f.get("fft_size", df.fft_size, &mut errors),
            target_time_frames: f.get("target_time_frames", df.target_time_frames, &mut errors),
        };
        f.finish(&mut errors);

        let mut classes = Vec::new();
        for (i, sec) in doc.sections_named("class").enumerate() {
            let mut r = SectionReader::new(Some(sec), format!("class {}", i + 1));
            let kind: Option<String> = r.get_opt("generator", &mut errors);
            let need = |r: &mut SectionReader<'_>, key: &'static str, errors: &mut Vec<ConfigError>| {
                let v: Option<f64> = r.get_opt(key, errors);
                if v.is_none() {
                    errors.push(r.error(None, format!("missing {key}")));
                }
                v.unwrap_or(0.0)
            };
            let generator = match kind.as_deref() {
                Some("tone") => Generator::Tone {
                    freq_hz: need(&mut r, "freq_hz", &mut errors),
                },
                Some("chirp") => Generator::Chirp {
                    start_hz: need(&mut r, "start_hz", &mut errors),
                    end_hz: need(&mut r, "end_hz", &mut errors),
                },
                Some("am_noise") => Generator::AmNoise {
                    rate_hz: need(&mut r, "rate_hz", &mut errors),
                },
                Some("harmonic") => Generator::Harmonic {
                    f0_hz: need(&mut r, "f0_hz", &mut errors),
                },
                other => {
                    errors.push(r.error(None, format!("unknown generator {other:?}")));
                    Generator::Tone { freq_hz: 0.0 }
                }
            };
            let gain_db = r.get("gain_db", 0.0, &mut errors);
            let gain_jitter_db = r.get("gain_jitter_db", 1.25, &mut errors);
            r.finish(&mut errors);
            classes.push(ClassSpec {
                generator,
                gain_db,
                gain_jitter_db,
            });
        }
        if !errors.is_empty() {
            return Err(ConfigErrors(errors).into());
        }
        let spec = SyntheticSpec {
            classes,
            samples_per_class,
            duration_s,
            snr_db,
            multi_label,
            sample_rate_hz,
            framing,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Inverse of [`SyntheticSpec::parse`].
    pub fn to_ini(&self) -> String {
        let f = &self.framing;
        let mut s = format!(
            "[corpus]\nsamples_per_class = {}\nduration_s = {}\nsnr_db = {}\nmulti_label = {}\nsample_rate_hz = {}\n\n\
             [framing]\nframe_size_ms = {}\nframe_shift_ms = {}\nn_mels = {}\nfft_size = {}\ntarget_time_frames = {}\n",
            self.samples_per_class,
            self.duration_s,
            self.snr_db,
            self.multi_label,
            self.sample_rate_hz,
            f.frame_size_ms,
            f.frame_shift_ms,
            f.n_mels,
            f.fft_size,
            f.target_time_frames
        );
        for c in &self.classes {
            let g = match c.generator {
                Generator::Tone { freq_hz } => format!("generator = tone\nfreq_hz = {freq_hz}"),
                Generator::Chirp { start_hz, end_hz } => {
                    format!("generator = chirp\nstart_hz = {start_hz}\nend_hz = {end_hz}")
                }
                Generator::AmNoise { rate_hz } => format!("generator = am_noise\nrate_hz = {rate_hz}"),
                Generator::Harmonic { f0_hz } => format!("generator = harmonic\nf0_hz = {f0_hz}"),
            };
            s.push_str(&format!(
                "\n[class]\n{g}\ngain_db = {}\ngain_jitter_db = {}\n",
                c.gain_db, c.gain_jitter_db
            ));
        }
        s
    }
}

fn clip_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}
