//! The `c2f` command line: corpus generation, schedule runs, baseline
//! comparisons and FLOPs reports.
//!
//! Paths inside a run configuration are resolved against the directory of
//! the configuration file. `C2F_SEED` overrides `[schedule] seed`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};

use c2f::config::{parse_config, DataSource, RunConfig};
use c2f::data::{generate_corpus, Corpus, Manifest, Split, SyntheticSpec};
use c2f::dsp::FramingParams;
use c2f::flops::{schedule_flops, train_step_flops};
use c2f::model::TaskKind;
use c2f::report::{flops_rows, join_runs, write_compare, write_flops, write_run_log};
use c2f::train::{run_schedule, train_baseline, BaselineSettings, PhaseEvent, RunLog, StopCriterion};

pub const SEED_VAR: &str = "C2F_SEED";

#[derive(Debug, Parser)]
#[command(name = "c2f", version, about = "Coarse-to-fine training of audio spectrogram transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a corpus: WAV clips plus manifest.tsv.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a schedule; writes run_log.csv and one checkpoint per phase.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full-resolution baseline and the schedule with the same seed.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the FLOPs report of a schedule as CSV, without training.
    Flops {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenData { spec, seed, out: dir } => gen_data(&spec, seed, &dir, out),
        Command::Train { config, out: dir } => train(&config, &dir, out),
        Command::Compare { config, out: dir } => compare(&config, &dir, out),
        Command::Flops { config } => flops(&config, out),
    }
}

fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SyntheticSpec::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn gen_data(spec: &Path, seed: u64, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let spec = read_spec(spec)?;
    let m = generate_corpus(&spec, seed, dir)?;
    let eval = m.records.iter().filter(|r| r.split == Split::Eval).count();
    writeln!(
        out,
        "wrote {} clips ({} train, {eval} eval) to {}",
        m.records.len(),
        m.records.len() - eval,
        dir.join("manifest.tsv").display()
    )?;
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    let root = path.parent().unwrap_or(Path::new("."));
    cfg.data = match cfg.data {
        DataSource::Manifest(p) => DataSource::Manifest(root.join(p)),
        DataSource::Synthetic { spec, seed } => DataSource::Synthetic {
            spec: root.join(spec),
            seed,
        },
    };
    if let Ok(v) = std::env::var(SEED_VAR) {
        cfg.schedule.seed = v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_VAR}={v:?} is not an unsigned integer"))?;
    }
    Ok(cfg)
}

/// What the configuration must agree with, read without decoding audio.
struct CorpusShape {
    framing: FramingParams,
    sample_rate_hz: u32,
    num_classes: usize,
    multi_label: bool,
    num_train: usize,
}

fn corpus_shape(cfg: &RunConfig) -> Result<CorpusShape> {
    match &cfg.data {
        DataSource::Manifest(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let m = Manifest::parse(&text).with_context(|| format!("in {}", p.display()))?;
            Ok(CorpusShape {
                num_train: m.records.iter().filter(|r| r.split == Split::Train).count(),
                framing: m.framing,
                sample_rate_hz: m.sample_rate_hz,
                num_classes: m.num_classes,
                multi_label: m.multi_label,
            })
        }
        DataSource::Synthetic { spec, seed } => {
            let s = read_spec(spec)?;
            Ok(CorpusShape {
                num_train: s.num_clips() - s.eval_indices(*seed).len(),
                framing: s.framing.clone(),
                sample_rate_hz: s.sample_rate_hz,
                num_classes: s.classes.len(),
                multi_label: s.multi_label,
            })
        }
    }
}

fn check_shape(cfg: &RunConfig, shape: &CorpusShape) -> Result<()> {
    ensure!(
        cfg.framing == shape.framing,
        "[data] framing {:?} differs from the corpus framing {:?}",
        cfg.framing,
        shape.framing
    );
    ensure!(
        cfg.sample_rate_hz == shape.sample_rate_hz,
        "[data] sample_rate_hz = {} but the corpus is sampled at {} Hz",
        cfg.sample_rate_hz,
        shape.sample_rate_hz
    );
    ensure!(
        cfg.model.num_classes == shape.num_classes,
        "[model] num_classes = {} but the corpus has {} classes",
        cfg.model.num_classes,
        shape.num_classes
    );
    let task = if shape.multi_label {
        TaskKind::MultiLabel
    } else {
        TaskKind::SingleLabel
    };
    ensure!(
        cfg.model.task == task,
        "[model] task = {} but the corpus is {}",
        cfg.model.task.name(),
        task.name()
    );
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    check_shape(cfg, &corpus_shape(cfg)?)?;
    Ok(match &cfg.data {
        DataSource::Manifest(p) => Corpus::load(p)?,
        DataSource::Synthetic { spec, seed } => Corpus::synthesize(&read_spec(spec)?, *seed)?,
    })
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_log(path: &Path, log: &RunLog) -> Result<()> {
    write_run_log(create(path)?, log).with_context(|| format!("writing {}", path.display()))
}

fn train(config: &Path, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(config)?;
    let corpus = load_corpus(&cfg)?;
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", ckpt_dir.display()))?;
    let (_, log) = run_schedule(&cfg.schedule, &cfg.model, &corpus, &mut |e| {
        if let PhaseEvent::End {
            index,
            checkpoint,
            records,
        } = e
        {
            checkpoint.save(ckpt_dir.join(format!("phase_{}.ckpt", index + 1)))?;
            if let Some(r) = records.last() {
                let _ = writeln!(
                    out,
                    "phase {}: {} C={} for {} epochs, eval {:.4}",
                    index + 1,
                    r.method,
                    r.factor,
                    records.len(),
                    r.eval_metric
                );
            }
        }
        Ok(())
    })?;
    write_log(&dir.join("run_log.csv"), &log)?;
    writeln!(out, "cumulative FLOPs {}", log.cumulative_flops())?;
    Ok(())
}

fn compare(config: &Path, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(config)?;
    let corpus = load_corpus(&cfg)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let s = &cfg.schedule;
    let settings = BaselineSettings {
        epochs: s.baseline_epochs,
        lr: cfg.baseline_lr,
        batch_size: s.batch_size,
        seed: s.seed,
    };
    let (_, baseline) = train_baseline(&cfg.model, &corpus, &settings)?;
    let target = baseline.final_metric().context("baseline produced no epochs")?;
    if let StopCriterion::SurpassBaseline { target: t @ None } = &mut cfg.schedule.stop {
        *t = Some(target);
    }
    let (_, curriculum) = run_schedule(&cfg.schedule, &cfg.model, &corpus, &mut |_| Ok(()))?;
    write_log(&dir.join("baseline_log.csv"), &baseline)?;
    write_log(&dir.join("curriculum_log.csv"), &curriculum)?;
    let rows = join_runs(&baseline, &curriculum);
    let path = dir.join("compare.csv");
    write_compare(create(&path)?, &rows).with_context(|| format!("writing {}", path.display()))?;
    let (b, c) = (baseline.cumulative_flops(), curriculum.cumulative_flops());
    writeln!(
        out,
        "baseline {target:.4} in {b} FLOPs; curriculum {:.4} in {c} FLOPs ({:.1}% saved)",
        curriculum.final_metric().unwrap_or(f64::NAN),
        c2f::flops::savings_percent(c, b)
    )?;
    Ok(())
}

fn flops(config: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(config)?;
    let shape = corpus_shape(&cfg)?;
    check_shape(&cfg, &shape)?;
    if shape.num_train == 0 {
        bail!("the corpus has no training clips");
    }
    let s = &cfg.schedule;
    let costs = s.phase_costs(&cfg.framing, cfg.model.patch)?;
    let base = s.baseline_cost(&cfg.framing, cfg.model.patch)?;
    let report = schedule_flops(&costs, base, &cfg.model, shape.num_train as u64)?;
    let rows = flops_rows(
        &report,
        base.n_tokens,
        base.epochs,
        train_step_flops(base.n_tokens, &cfg.model),
    );
    write_flops(out, &rows)?;
    Ok(())
}
