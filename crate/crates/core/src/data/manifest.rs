//! Tab-separated corpus manifests.
//!
//! ```text
//! #c2f-manifest<TAB>version=1<TAB>seed=7<TAB>num_classes=4<TAB>...<TAB>mel_std=4.2
//! clips/00000.wav<TAB>0<TAB>train
//! clips/00001.wav<TAB>0,2<TAB>eval
//! ```
//!
//! The header carries the generator seed, the framing the statistics were
//! computed with, and the train-split log-mel mean and standard deviation.
//! Records hold a path relative to the manifest, comma-separated label
//! indices and the split.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use super::NormStats;
use crate::dsp::FramingParams;
use crate::error::{Error, Result};

const TAG: &str = "#c2f-manifest";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::Manifest(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub path: String,
    pub labels: Vec<usize>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub num_classes: usize,
    pub multi_label: bool,
    pub sample_rate_hz: u32,
    pub framing: FramingParams,
    pub stats: NormStats,
    pub records: Vec<ManifestRecord>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Manifest(msg.into())
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.path.is_empty() || r.path.contains(['\t', '\n']) {
                return Err(bad(format!("invalid path {:?}", r.path)));
            }
            if !seen.insert(r.path.as_str()) {
                return Err(bad(format!("duplicate path {}", r.path)));
            }
            if r.labels.is_empty() {
                return Err(bad(format!("{} has no labels", r.path)));
            }
            if let Some(l) = r.labels.iter().find(|&&l| l >= self.num_classes) {
                return Err(bad(format!("{}: label {l} is not below {}", r.path, self.num_classes)));
            }
        }
        for split in [Split::Train, Split::Eval] {
            if !self.records.iter().any(|r| r.split == split) {
                return Err(bad(format!("the {split} split is empty")));
            }
        }
        if !(self.stats.std > 0.0 && self.stats.mean.is_finite()) {
            return Err(bad("normalization statistics are invalid"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let f = &self.framing;
        let mut out = format!(
            "{TAG}\tversion={VERSION}\tseed={}\tnum_classes={}\tmulti_label={}\tsample_rate_hz={}\t\
             frame_size_ms={}\tframe_shift_ms={}\tn_mels={}\tfft_size={}\ttarget_time_frames={}\t\
             mel_mean={}\tmel_std={}\n",
            self.seed,
            self.num_classes,
            self.multi_label,
            self.sample_rate_hz,
            f.frame_size_ms,
            f.frame_shift_ms,
            f.n_mels,
            f.fft_size,
            f.target_time_frames,
            self.stats.mean,
            self.stats.std,
        );
        for r in &self.records {
            let labels: Vec<String> = r.labels.iter().map(usize::to_string).collect();
            out.push_str(&format!("{}\t{}\t{}\n", r.path, labels.join(","), r.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty manifest"))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(TAG) {
            return Err(bad("missing #c2f-manifest header"));
        }
        let kv: Vec<(&str, &str)> = fields
            .map(|f| f.split_once('=').ok_or_else(|| bad(format!("header field {f:?} is not key=value"))))
            .collect::<Result<_>>()?;
        fn get<T: FromStr>(kv: &[(&str, &str)], key: &str) -> Result<T> {
            let v = kv
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| bad(format!("header lacks {key}")))?;
            v.parse().map_err(|_| bad(format!("header {key}={v} is invalid")))
        }
        let version: u32 = get(&kv, "version")?;
        if version != VERSION {
            return Err(bad(format!("unsupported manifest version {version}")));
        }
        let m = Manifest {
            seed: get(&kv, "seed")?,
            num_classes: get(&kv, "num_classes")?,
            multi_label: get(&kv, "multi_label")?,
            sample_rate_hz: get(&kv, "sample_rate_hz")?,
            framing: FramingParams {
                frame_size_ms: get(&kv, "frame_size_ms")?,
                frame_shift_ms: get(&kv, "frame_shift_ms")?,
                n_mels: get(&kv, "n_mels")?,
                fft_size: get(&kv, "fft_size")?,
                target_time_frames: get(&kv, "target_time_frames")?,
            },
            stats: NormStats {
                mean: get(&kv, "mel_mean")?,
                std: get(&kv, "mel_std")?,
            },
            records: lines
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| parse_record(l).map_err(|e| bad(format!("line {}: {e}", i + 2))))
                .collect::<Result<_>>()?,
        };
        m.validate()?;
        Ok(m)
    }
}

fn parse_record(line: &str) -> std::result::Result<ManifestRecord, String> {
    let parts: Vec<&str> = line.split('\t').collect();
    let [path, labels, split] = parts[..] else {
        return Err(format!("expected 3 tab-separated fields, found {}", parts.len()));
    };
    let labels = labels
        .split(',')
        .map(|l| l.parse::<usize>().map_err(|_| format!("invalid label {l:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let split = split.parse::<Split>().map_err(|e| e.to_string())?;
    Ok(ManifestRecord {
        path: path.to_string(),
        labels,
        split,
    })
}
