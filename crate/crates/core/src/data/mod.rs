//! Corpora: synthetic generation, manifests and phase features.

mod manifest;
mod synth;
pub mod wav;

use std::fs;
use std::path::Path;

pub use manifest::{Manifest, ManifestRecord, Split};
pub use synth::{desk_framing, ClassSpec, Generator, SyntheticSpec};
pub use wav::{read_wav, write_wav};

use crate::compress::{apply_compression, CompressionFactor, CompressionMethod};
use crate::dsp::{log_mel, FramingParams, MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::model::{Example, Target, TaskKind};
use crate::tokenizer::{patchify, PatchSpec};

/// Global mean and standard deviation of log-mel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Statistics over every entry of every spectrogram.
    pub fn of(mels: &[MelSpectrogram]) -> Result<Self> {
        let n: usize = mels.iter().map(|m| m.as_slice().len()).sum();
        if n == 0 {
            return Err(Error::Empty("spectrograms"));
        }
        let mean = mels.iter().flat_map(|m| m.as_slice()).sum::<f64>() / n as f64;
        let var = mels
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::InvalidArgument("spectrograms have zero variance".into()));
        }
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub waveform: Waveform,
    pub labels: Vec<usize>,
}

/// Clips of both splits held in memory, with the train-split statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Clip>,
    pub eval: Vec<Clip>,
    pub num_classes: usize,
    pub multi_label: bool,
    pub framing: FramingParams,
    pub stats: NormStats,
}

impl Corpus {
    /// Builds the corpus `generate_corpus` would write, without touching disk.
    pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let eval_idx = spec.eval_indices(seed);
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for i in 0..spec.num_clips() {
            let (waveform, labels) = spec.clip(seed, i)?;
            let clip = Clip { waveform, labels };
            if eval_idx.binary_search(&i).is_ok() {
                eval.push(clip);
            } else {
                train.push(clip);
            }
        }
        let stats = train_stats(&train, &spec.framing)?;
        Ok(Self {
            train,
            eval,
            num_classes: spec.classes.len(),
            multi_label: spec.multi_label,
            framing: spec.framing.clone(),
            stats,
        })
    }

    /// Reads a manifest and every clip it lists, resolving paths against the
    /// manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let manifest = Manifest::parse(&fs::read_to_string(path)?)?;
        let root = path.parent().unwrap_or_else(|| Path::new("."));
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for r in &manifest.records {
            let waveform = read_wav(root.join(&r.path))?;
            if waveform.sample_rate_hz() != manifest.sample_rate_hz {
                return Err(Error::Manifest(format!(
                    "{} is sampled at {} Hz, manifest says {}",
                    r.path,
                    waveform.sample_rate_hz(),
                    manifest.sample_rate_hz
                )));
            }
            let clip = Clip {
                waveform,
                labels: r.labels.clone(),
            };
            match r.split {
                Split::Train => train.push(clip),
                Split::Eval => eval.push(clip),
            }
        }
        Ok(Self {
            train,
            eval,
            num_classes: manifest.num_classes,
            multi_label: manifest.multi_label,
            framing: manifest.framing,
            stats: manifest.stats,
        })
    }

    pub fn split(&self, split: Split) -> &[Clip] {
        match split {
            Split::Train => &self.train,
            Split::Eval => &self.eval,
        }
    }

    pub fn task(&self) -> TaskKind {
        if self.multi_label {
            TaskKind::MultiLabel
        } else {
            TaskKind::SingleLabel
        }
    }

    /// Normalized spectrograms of a split under one phase's compression.
    pub fn features(
        &self,
        split: Split,
        method: CompressionMethod,
        factor: CompressionFactor,
    ) -> Result<Vec<MelSpectrogram>> {
        self.split(split)
            .iter()
            .map(|c| {
                apply_compression(&c.waveform, method, factor, &self.framing)
                    .map(|m| m.normalized(self.stats.mean, self.stats.std))
            })
            .collect()
    }

    /// Patched, labelled examples ready for the model. `patch` is the patch
    /// of the phase (already widened for patch methods).
    pub fn examples(
        &self,
        split: Split,
        method: CompressionMethod,
        factor: CompressionFactor,
        patch: PatchSpec,
    ) -> Result<Vec<Example>> {
        let clips = self.split(split);
        if clips.is_empty() {
            return Err(Error::Empty("dataset split"));
        }
        let feats = self.features(split, method, factor)?;
        clips
            .iter()
            .zip(feats)
            .map(|(c, m)| {
                Ok(Example {
                    patches: patchify(&m, patch)?,
                    target: self.target(&c.labels)?,
                })
            })
            .collect()
    }

    fn target(&self, labels: &[usize]) -> Result<Target> {
        if let Some(&l) = labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidArgument(format!("label {l} out of range")));
        }
        match (self.multi_label, labels) {
            (false, [l]) => Ok(Target::Class(*l)),
            (true, _) if !labels.is_empty() => Ok(Target::multi_hot(labels, self.num_classes)),
            _ => Err(Error::InvalidArgument(format!("unexpected label set {labels:?}"))),
        }
    }
}

fn train_stats(train: &[Clip], framing: &FramingParams) -> Result<NormStats> {
    let mels = train
        .iter()
        .map(|c| log_mel(&c.waveform, framing))
        .collect::<Result<Vec<_>>>()?;
    NormStats::of(&mels)
}

/// Writes `clips/NNNNN.wav` and `manifest.tsv` under `out_dir`.
pub fn generate_corpus(spec: &SyntheticSpec, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out = out_dir.as_ref();
    let corpus = Corpus::synthesize(spec, seed)?;
    fs::create_dir_all(out.join("clips"))?;
    let eval_idx = spec.eval_indices(seed);
    let (mut train, mut eval) = (corpus.train.iter(), corpus.eval.iter());
    let mut records = Vec::with_capacity(spec.num_clips());
    for i in 0..spec.num_clips() {
        let split = if eval_idx.binary_search(&i).is_ok() {
            Split::Eval
        } else {
            Split::Train
        };
        let clip = match split {
            Split::Train => train.next(),
            Split::Eval => eval.next(),
        }
        .expect("split sizes agree");
        let path = format!("clips/{i:05}.wav");
        write_wav(out.join(&path), &clip.waveform)?;
        records.push(ManifestRecord {
            path,
            labels: clip.labels.clone(),
            split,
        });
    }
    let manifest = Manifest {
        seed,
        num_classes: corpus.num_classes,
        multi_label: corpus.multi_label,
        sample_rate_hz: spec.sample_rate_hz,
        framing: corpus.framing.clone(),
        stats: corpus.stats,
        records,
    };
    manifest.validate()?;
    fs::write(out.join("manifest.tsv"), manifest.to_text())?;
    Ok(manifest)
}
