//! Section/`key = value` configuration files.
//!
//! ```text
//! # comment            ; also a comment
//! [section]
//! key = value
//! ```
//!
//! Sections may repeat (`[phase]`, `[class]`); their order is significant.
//! Keys are case-sensitive, unknown keys are errors, and every error carries
//! the line it came from. The run-configuration schema is documented in the
//! guide chapter on file formats.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adapt::ResizeMethod;
use crate::compress::{CompressionFactor, CompressionMethod};
use crate::dsp::FramingParams;
use crate::error::{ConfigErrors, Result};
use crate::model::{ModelConfig, TaskKind};
use crate::train::{EpochBudget, LrDecay, PhaseConfig, Schedule, StopCriterion};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IniDocument {
    pub sections: Vec<Section>,
}

impl IniDocument {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigErrors> {
        let mut doc = IniDocument::default();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => doc.sections.push(Section {
                        name: name.trim().to_string(),
                        line,
                        entries: Vec::new(),
                    }),
                    _ => errors.push(ConfigError {
                        line: Some(line),
                        message: format!("malformed section header {l:?}"),
                    }),
                }
                continue;
            }
            let Some((key, value)) = l.split_once('=') else {
                errors.push(ConfigError {
                    line: Some(line),
                    message: format!("expected `key = value`, found {l:?}"),
                });
                continue;
            };
            let Some(section) = doc.sections.last_mut() else {
                errors.push(ConfigError {
                    line: Some(line),
                    message: "key outside of any section".into(),
                });
                continue;
            };
            let key = key.trim().to_string();
            if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
                errors.push(ConfigError {
                    line: Some(line),
                    message: format!("duplicate key {key:?} (first set on line {})", prev.line),
                });
                continue;
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        if errors.is_empty() {
            Ok(doc)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }
}

/// Typed access to one section that remembers which keys were read, so
/// leftovers can be reported as unknown.
pub struct SectionReader<'a> {
    section: Option<&'a Section>,
    context: String,
    used: HashSet<&'a str>,
}

impl<'a> SectionReader<'a> {
    pub fn new(section: Option<&'a Section>, context: impl Into<String>) -> Self {
        Self {
            section,
            context: context.into(),
            used: HashSet::new(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        self.section.map(|s| s.line)
    }

    pub fn raw(&mut self, key: &'a str) -> Option<&'a Entry> {
        let e = self.section?.entries.iter().find(|e| e.key == key)?;
        self.used.insert(key);
        Some(e)
    }

    pub fn error(&self, line: Option<usize>, msg: impl fmt::Display) -> ConfigError {
        ConfigError {
            line: line.or(self.line()),
            message: format!("{}: {msg}", self.context),
        }
    }

    /// Parses `key` with `FromStr`, falling back to `default` when absent.
    pub fn get<T: FromStr>(&mut self, key: &'a str, default: T, errors: &mut Vec<ConfigError>) -> T {
        self.parse_with(key, |v| v.parse::<T>().ok(), errors).unwrap_or(default)
    }

    pub fn get_opt<T: FromStr>(&mut self, key: &'a str, errors: &mut Vec<ConfigError>) -> Option<T> {
        self.parse_with(key, |v| v.parse::<T>().ok(), errors)
    }

    pub fn parse_with<T>(
        &mut self,
        key: &'a str,
        parse: impl Fn(&str) -> Option<T>,
        errors: &mut Vec<ConfigError>,
    ) -> Option<T> {
        let e = self.raw(key)?;
        match parse(&e.value) {
            Some(v) => Some(v),
            None => {
                errors.push(self.error(Some(e.line), format!("invalid value {:?} for {key}", e.value)));
                None
            }
        }
    }

    /// Reports every key that was never read.
    pub fn finish(self, errors: &mut Vec<ConfigError>) {
        if let Some(s) = self.section {
            for e in &s.entries {
                if !self.used.contains(e.key.as_str()) {
                    errors.push(ConfigError {
                        line: Some(e.line),
                        message: format!("{}: unknown key {:?}", self.context, e.key),
                    });
                }
            }
        }
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Where a run's corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A manifest written by `gen-data`.
    Manifest(PathBuf),
    /// A corpus spec file, synthesized in memory with the given seed.
    Synthetic { spec: PathBuf, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataSource,
    pub sample_rate_hz: u32,
    pub framing: FramingParams,
    pub schedule: Schedule,
    /// Learning rate of the single-phase baseline run by `compare`.
    pub baseline_lr: f64,
}

const SECTIONS: [&str; 5] = ["model", "data", "schedule", "phase", "stop"];

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc = IniDocument::parse(text)?;
    let mut errors = Vec::new();

    for s in &doc.sections {
        if !SECTIONS.contains(&s.name.as_str()) {
            errors.push(ConfigError {
                line: Some(s.line),
                message: format!("unknown section [{}]", s.name),
            });
            continue;
        }
        if s.name != "phase" && doc.sections_named(&s.name).count() > 1 && doc.sections_named(&s.name).next().map(|f| f.line) != Some(s.line) {
            errors.push(ConfigError {
                line: Some(s.line),
                message: format!("section [{}] may appear only once", s.name),
            });
        }
    }

    let defaults = ModelConfig::default();
    let mut m = SectionReader::new(doc.sections_named("model").next(), "[model]");
    let task = m
        .parse_with("task", TaskKind::from_name, &mut errors)
        .unwrap_or(defaults.task);
    let model = ModelConfig {
        embed_dim: m.get("embed_dim", defaults.embed_dim, &mut errors),
        num_layers: m.get("num_layers", defaults.num_layers, &mut errors),
        num_heads: m.get("num_heads", defaults.num_heads, &mut errors),
        mlp_ratio: m.get("mlp_ratio", defaults.mlp_ratio, &mut errors),
        num_classes: m.get("num_classes", defaults.num_classes, &mut errors),
        task,
        patch: m.get("patch", defaults.patch, &mut errors),
        dropout: m.get("dropout", defaults.dropout, &mut errors),
    };
    if let Err(e) = model.validate() {
        errors.push(m.error(None, e));
    }
    m.finish(&mut errors);

    let mut d = SectionReader::new(doc.sections_named("data").next(), "[data]");
    let fd = FramingParams::default();
    let framing = FramingParams {
        frame_size_ms: d.get("frame_size_ms", fd.frame_size_ms, &mut errors),
        frame_shift_ms: d.get("frame_shift_ms", fd.frame_shift_ms, &mut errors),
        n_mels: d.get("n_mels", fd.n_mels, &mut errors),
        fft_size: d.get("fft_size", fd.fft_size, &mut errors),
        target_time_frames: d.get("target_time_frames", fd.target_time_frames, &mut errors),
    };
    let sample_rate_hz = d.get("sample_rate_hz", 16000u32, &mut errors);
    if let Err(e) = framing.validate(sample_rate_hz) {
        errors.push(d.error(None, e));
    }
    let manifest: Option<String> = d.get_opt("manifest", &mut errors);
    let synthetic: Option<String> = d.get_opt("synthetic", &mut errors);
    let synthetic_seed = d.get("synthetic_seed", 0u64, &mut errors);
    let data = match (manifest, synthetic) {
        (Some(p), None) => DataSource::Manifest(p.into()),
        (None, Some(p)) => DataSource::Synthetic {
            spec: p.into(),
            seed: synthetic_seed,
        },
        (Some(_), Some(_)) => {
            errors.push(d.error(None, "set only one of manifest and synthetic"));
            DataSource::Manifest(PathBuf::new())
        }
        (None, None) => {
            errors.push(d.error(None, "one of manifest or synthetic is required"));
            DataSource::Manifest(PathBuf::new())
        }
    };
    d.finish(&mut errors);

    let mut s = SectionReader::new(doc.sections_named("schedule").next(), "[schedule]");
    let seed = s.get("seed", 0u64, &mut errors);
    let baseline_epochs = s.get("baseline_epochs", 20u64, &mut errors);
    let batch_size = s.get("batch_size", 16usize, &mut errors);
    let baseline_lr_opt: Option<f64> = s.get_opt("baseline_lr", &mut errors);
    if batch_size == 0 {
        errors.push(s.error(None, "batch_size must be positive"));
    }
    if baseline_epochs == 0 {
        errors.push(s.error(None, "baseline_epochs must be positive"));
    }
    s.finish(&mut errors);

    let phase_sections: Vec<&Section> = doc.sections_named("phase").collect();
    if phase_sections.is_empty() {
        errors.push(ConfigError {
            line: None,
            message: "at least one [phase] section is required".into(),
        });
    }
    let default_split = EpochBudget::default_split(phase_sections.len());
    let mut phases = Vec::new();
    for (i, sec) in phase_sections.iter().enumerate() {
        let mut p = SectionReader::new(Some(sec), format!("phase {}", i + 1));
        let method = p
            .parse_with("method", |v| v.parse::<CompressionMethod>().ok(), &mut errors)
            .unwrap_or(CompressionMethod::None);
        let factor = p
            .parse_with("C", |v| v.parse::<usize>().ok().and_then(|c| CompressionFactor::new(c).ok()), &mut errors)
            .unwrap_or(CompressionFactor::NONE);
        let epochs = p
            .parse_with("epochs", |v| v.parse::<EpochBudget>().ok(), &mut errors)
            .unwrap_or(default_split[i]);
        let lr: f64 = p.get("lr", 1e-3, &mut errors);
        if !(lr > 0.0 && lr.is_finite()) {
            errors.push(p.error(None, format!("lr must be positive, got {lr}")));
        }
        let implied = ResizeMethod::for_method(method);
        let resize = p.parse_with("resize", ResizeMethod::from_name, &mut errors).unwrap_or(implied);
        if method.is_patch() && resize != implied {
            errors.push(p.error(None, format!("{method} implies resize={}", implied.name())));
        }
        let every: Option<u64> = p.get_opt("lr_decay_every", &mut errors);
        let gamma: Option<f64> = p.get_opt("lr_decay_gamma", &mut errors);
        let lr_decay = match (every, gamma) {
            (None, None) => None,
            (Some(every), Some(gamma)) if every > 0 && gamma > 0.0 => Some(LrDecay { every, gamma }),
            _ => {
                errors.push(p.error(None, "lr_decay_every (>0) and lr_decay_gamma (>0) must be set together"));
                None
            }
        };
        let phase = PhaseConfig {
            method,
            factor,
            epochs,
            lr,
            resize,
            lr_decay,
        };
        if let Err(e) = phase.geometry(&framing, model.patch) {
            errors.push(p.error(None, e));
        }
        p.finish(&mut errors);
        phases.push(phase);
    }
    for (i, w) in phases.windows(2).enumerate() {
        if w[1].factor > w[0].factor {
            errors.push(ConfigError {
                line: Some(phase_sections[i + 1].line),
                message: format!(
                    "phase {}: compression factors must be non-increasing across phases (C={} after C={})",
                    i + 2,
                    w[1].factor,
                    w[0].factor
                ),
            });
        }
    }
    if let Some(last) = phases.last() {
        if last.factor != CompressionFactor::NONE {
            errors.push(ConfigError {
                line: phase_sections.last().map(|s| s.line),
                message: format!("phase {}: the final phase must run at C=1", phases.len()),
            });
        }
    }

    let mut st = SectionReader::new(doc.sections_named("stop").next(), "[stop]");
    let kind: String = st.get("kind", "fixed".to_string(), &mut errors);
    let stop = match kind.as_str() {
        "fixed" => StopCriterion::FixedEpochs,
        "surpass_baseline" => StopCriterion::SurpassBaseline {
            target: st.get_opt("target", &mut errors),
        },
        "convergence" => {
            let patience = st.get("patience", 3u64, &mut errors);
            if patience == 0 {
                errors.push(st.error(None, "patience must be at least 1"));
            }
            StopCriterion::Convergence { patience }
        }
        other => {
            errors.push(st.error(None, format!("unknown stop kind {other:?}")));
            StopCriterion::FixedEpochs
        }
    };
    st.finish(&mut errors);

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line.unwrap_or(0));
        return Err(ConfigErrors(errors).into());
    }
    let baseline_lr = baseline_lr_opt.unwrap_or_else(|| phases.last().map_or(1e-3, |p| p.lr));
    Ok(RunConfig {
        model,
        data,
        sample_rate_hz,
        framing,
        schedule: Schedule {
            phases,
            baseline_epochs,
            stop,
            seed,
            batch_size,
        },
        baseline_lr,
    })
}
