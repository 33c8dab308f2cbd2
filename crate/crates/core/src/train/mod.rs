//! Multi-phase coarse-to-fine training.
//!
//! A [`Schedule`] is an ordered list of phases, each training at its own
//! compression method and factor. At every boundary the checkpoint is
//! migrated to the next geometry and the optimizer starts from scratch
//! with the incoming phase's learning rate. The stop criterion only applies
//! to the final phase; earlier phases always run their full budget.
//!
//! Minibatch order in epoch `e` (0-based within its phase) of phase `i` is a
//! shuffle seeded with `seed + i·10⁶ + e`.

mod metrics;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use metrics::{argmax, average_precision, evaluate, mean_average_precision, predict, top1_accuracy};

use crate::adapt::{migrate, PhaseGeometry, PhaseTransition, ResizeMethod};
use crate::checkpoint::{Checkpoint, Provenance};
use crate::compress::{CompressionFactor, CompressionMethod};
use crate::data::{Corpus, Split};
use crate::dsp::FramingParams;
use crate::error::{Error, Result};
use crate::flops::{train_step_flops, PhaseCost};
use crate::model::{accumulate, AdamConfig, AdamState, Example, ModelConfig, Parameters};
use crate::tokenizer::{token_grid_dims, PatchSpec};

const PHASE_SEED_STRIDE: u64 = 1_000_000;

/// Length of a phase, absolute or relative to the baseline budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpochBudget {
    Count(u64),
    /// Fraction of `baseline_epochs`, rounded to the nearest epoch.
    Fraction(f64),
}

impl EpochBudget {
    pub fn resolve(self, baseline_epochs: u64) -> u64 {
        match self {
            EpochBudget::Count(n) => n,
            EpochBudget::Fraction(f) => (f * baseline_epochs as f64).round() as u64,
        }
    }

    /// 100% for one phase, 25/75 for two, 30/30/40 for three, an even split
    /// otherwise.
    pub fn default_split(phases: usize) -> Vec<EpochBudget> {
        let f = |v: &[f64]| v.iter().map(|&x| EpochBudget::Fraction(x)).collect();
        match phases {
            0 => Vec::new(),
            1 => f(&[1.0]),
            2 => f(&[0.25, 0.75]),
            3 => f(&[0.3, 0.3, 0.4]),
            n => vec![EpochBudget::Fraction(1.0 / n as f64); n],
        }
    }
}

impl FromStr for EpochBudget {
    type Err = Error;

    /// `12` or `25%`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid epoch budget {s:?}"));
        match s.strip_suffix('%') {
            Some(p) => {
                let p: f64 = p.trim().parse().map_err(|_| bad())?;
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(bad());
                }
                Ok(EpochBudget::Fraction(p / 100.0))
            }
            None => s.parse().map(EpochBudget::Count).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for EpochBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpochBudget::Count(n) => write!(f, "{n}"),
            EpochBudget::Fraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

/// Multiply the learning rate by `gamma` every `every` epochs of a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrDecay {
    pub every: u64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub method: CompressionMethod,
    pub factor: CompressionFactor,
    pub epochs: EpochBudget,
    pub lr: f64,
    /// Kernel resize used when leaving this phase (patch methods only).
    pub resize: ResizeMethod,
    pub lr_decay: Option<LrDecay>,
}

impl PhaseConfig {
    /// A phase with the resize its method implies and no decay.
    pub fn new(method: CompressionMethod, factor: usize, epochs: EpochBudget, lr: f64) -> Result<Self> {
        Ok(Self {
            method,
            factor: CompressionFactor::new(factor)?,
            epochs,
            lr,
            resize: ResizeMethod::for_method(method),
            lr_decay: None,
        })
    }

    /// Learning rate in epoch `epoch` (0-based) of the phase.
    pub fn lr_at(&self, epoch: u64) -> f64 {
        match self.lr_decay {
            Some(d) => self.lr * d.gamma.powi((epoch / d.every) as i32),
            None => self.lr,
        }
    }

    /// Patch shape the phase tokenizes with.
    pub fn patch(&self, base: PatchSpec) -> PatchSpec {
        if self.method.is_patch() {
            base.widened(self.factor.get())
        } else {
            base
        }
    }

    /// Token geometry of the phase, rejecting illegal method/factor pairs.
    pub fn geometry(&self, framing: &FramingParams, base: PatchSpec) -> Result<PhaseGeometry> {
        let c = self.factor.get();
        if self.method == CompressionMethod::None && c != 1 {
            return Err(Error::InvalidArgument(format!("method none requires C=1, got C={c}")));
        }
        let t = framing.target_time_frames;
        if !t.is_multiple_of(c) {
            return Err(Error::NotDivisible {
                what: "target_time_frames",
                len: t,
                by: c,
            });
        }
        let time = if self.method.shortens_spectrogram() { t / c } else { t };
        let patch = self.patch(base);
        let grid = token_grid_dims(framing.n_mels, time, patch)?;
        Ok(PhaseGeometry {
            method: self.method,
            factor: self.factor,
            grid,
            patch,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCriterion {
    /// Stop at the first final-phase epoch whose metric reaches `target`.
    /// Without a target, `compare` fills in the baseline's final metric.
    SurpassBaseline { target: Option<f64> },
    /// Stop once the metric has not improved for `patience` epochs.
    Convergence { patience: u64 },
    FixedEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub phases: Vec<PhaseConfig>,
    pub baseline_epochs: u64,
    pub stop: StopCriterion,
    pub seed: u64,
    pub batch_size: usize,
}

impl Schedule {
    /// Checks the schedule against a data geometry and returns every phase's
    /// token geometry.
    pub fn validate(&self, framing: &FramingParams, base: PatchSpec) -> Result<Vec<PhaseGeometry>> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.phases.is_empty() {
            return Err(Error::Empty("schedule"));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (i, w) in self.phases.windows(2).enumerate() {
            if w[1].factor > w[0].factor {
                return bad(format!(
                    "phase {}: compression factors must be non-increasing across phases",
                    i + 2
                ));
            }
        }
        if self.phases.last().map(|p| p.factor) != Some(CompressionFactor::NONE) {
            return bad("the final phase must run at C=1".into());
        }
        if let StopCriterion::Convergence { patience: 0 } = self.stop {
            return bad("convergence patience must be at least 1".into());
        }
        self.phases
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if !(p.lr > 0.0 && p.lr.is_finite()) {
                    return Err(Error::InvalidArgument(format!("phase {}: lr must be positive", i + 1)));
                }
                p.geometry(framing, base)
                    .map_err(|e| Error::InvalidArgument(format!("phase {}: {e}", i + 1)))
            })
            .collect()
    }

    pub fn phase_epochs(&self, index: usize) -> u64 {
        self.phases[index].epochs.resolve(self.baseline_epochs)
    }

    /// Declared cost of every phase, for `flops::schedule_flops`.
    pub fn phase_costs(&self, framing: &FramingParams, base: PatchSpec) -> Result<Vec<PhaseCost>> {
        let geoms = self.validate(framing, base)?;
        Ok(geoms
            .iter()
            .enumerate()
            .map(|(i, g)| PhaseCost {
                n_tokens: (g.grid.0 * g.grid.1 + 1) as u64,
                patch: g.patch,
                epochs: self.phase_epochs(i),
            })
            .collect())
    }

    /// The full-resolution single-phase run this schedule is measured against.
    pub fn baseline_cost(&self, framing: &FramingParams, base: PatchSpec) -> Result<PhaseCost> {
        let (f, t) = token_grid_dims(framing.n_mels, framing.target_time_frames, base)?;
        Ok(PhaseCost {
            n_tokens: (f * t + 1) as u64,
            patch: base,
            epochs: self.baseline_epochs,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub phase_index: usize,
    /// 1-based, counted across the whole run.
    pub epoch: u64,
    pub method: CompressionMethod,
    pub factor: CompressionFactor,
    /// Tokens per sample including CLS.
    pub n_tokens: u64,
    pub lr: f64,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    /// Top-1 accuracy or mAP on the eval split.
    pub eval_metric: f64,
    pub cumulative_flops: u128,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
}

impl RunLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.last().map(|r| r.eval_metric)
    }

    pub fn cumulative_flops(&self) -> u128 {
        self.last().map_or(0, |r| r.cumulative_flops)
    }

    /// First record whose metric is at least `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.eval_metric >= target)
    }

    /// Epochs actually run per phase, in phase order.
    pub fn epochs_per_phase(&self, phases: usize) -> Vec<u64> {
        let mut v = vec![0; phases];
        for r in &self.records {
            v[r.phase_index] += 1;
        }
        v
    }
}

/// Everything a phase needs besides its configuration.
#[derive(Debug, Clone)]
pub struct PhaseContext {
    pub phase_index: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: u64,
    /// Only set for the final phase.
    pub stop: Option<StopCriterion>,
    /// Epochs already run in earlier phases.
    pub epochs_before: u64,
    pub flops_before: u128,
}

fn epoch_rng(seed: u64, phase_index: usize, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add((phase_index as u64).wrapping_mul(PHASE_SEED_STRIDE))
            .wrapping_add(epoch),
    )
}

/// One pass over `train` in a seeded order; returns the mean minibatch loss.
fn train_epoch(
    params: &mut Parameters,
    opt: &mut AdamState,
    cfg: &ModelConfig,
    train: &[Example],
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let adam = AdamConfig::default();
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
        let dropout = (cfg.dropout > 0.0).then_some(&mut *rng as &mut dyn rand::RngCore);
        let (loss, grads) = accumulate(params, cfg, &batch, dropout)?;
        opt.step(params, &grads, lr, &adam)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / train.len() as f64)
}

fn n_tokens(params: &Parameters) -> u64 {
    let (f, t) = params.grid_dims();
    (f * t + 1) as u64
}

/// Trains one phase on `data` compressed per `phase`.
pub fn run_phase(
    mut state: Checkpoint,
    phase: &PhaseConfig,
    data: &Corpus,
    ctx: &PhaseContext,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    if ctx.epochs == 0 {
        return Ok((state, Vec::new()));
    }
    let geom = phase.geometry(&data.framing, state.config.patch)?;
    if state.params.grid_dims() != geom.grid || state.params.patch_spec() != geom.patch {
        return Err(Error::Shape(format!(
            "checkpoint geometry {:?}/{} does not match phase geometry {:?}/{}",
            state.params.grid_dims(),
            state.params.patch_spec(),
            geom.grid,
            geom.patch
        )));
    }
    let train = data.examples(Split::Train, phase.method, phase.factor, geom.patch)?;
    let eval = data.examples(Split::Eval, phase.method, phase.factor, geom.patch)?;
    let cfg = state.config.clone();
    let n = n_tokens(&state.params);
    let epoch_flops = u128::from(train_step_flops(n, &cfg.with_patch(geom.patch))) * train.len() as u128;

    let mut opt = state.optimizer.take().unwrap_or_else(|| AdamState::fresh(&state.params));
    let mut records = Vec::new();
    let mut flops = ctx.flops_before;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    for e in 0..ctx.epochs {
        let mut rng = epoch_rng(ctx.seed, ctx.phase_index, e);
        let lr = phase.lr_at(e);
        let train_loss = train_epoch(&mut state.params, &mut opt, &cfg, &train, ctx.batch_size, lr, &mut rng)?;
        let eval_metric = evaluate(&state.params, &cfg, &eval)?;
        flops += epoch_flops;
        records.push(EpochRecord {
            phase_index: ctx.phase_index,
            epoch: ctx.epochs_before + e + 1,
            method: phase.method,
            factor: phase.factor,
            n_tokens: n,
            lr,
            train_loss,
            eval_metric,
            cumulative_flops: flops,
        });
        let stop = match ctx.stop {
            Some(StopCriterion::SurpassBaseline { target: Some(t) }) => eval_metric >= t,
            Some(StopCriterion::Convergence { patience }) => {
                if eval_metric > best {
                    best = eval_metric;
                    stale = 0;
                } else {
                    stale += 1;
                }
                stale >= patience
            }
            _ => false,
        };
        if stop {
            break;
        }
    }
    state.optimizer = Some(opt);
    Ok((state, records))
}

/// Phase boundaries reported to a [`run_schedule`] observer.
#[derive(Debug)]
pub enum PhaseEvent<'a> {
    /// After migration, before the first epoch of the phase.
    Start {
        index: usize,
        geometry: PhaseGeometry,
        checkpoint: &'a Checkpoint,
    },
    /// After the last epoch of the phase.
    End {
        index: usize,
        checkpoint: &'a Checkpoint,
        records: &'a [EpochRecord],
    },
}

/// Runs every phase in order, migrating between them.
pub fn run_schedule(
    s: &Schedule,
    cfg: &ModelConfig,
    data: &Corpus,
    observer: &mut dyn FnMut(PhaseEvent<'_>) -> Result<()>,
) -> Result<(Checkpoint, RunLog)> {
    cfg.validate()?;
    let geoms = s.validate(&data.framing, cfg.patch)?;
    if let StopCriterion::SurpassBaseline { target: None } = s.stop {
        return Err(Error::InvalidArgument(
            "surpass_baseline needs a target metric (compare supplies the baseline's)".into(),
        ));
    }
    let first = geoms[0];
    let mut ckpt = Checkpoint {
        config: cfg.clone(),
        params: Parameters::init(cfg, first.grid, first.patch, s.seed),
        optimizer: None,
        provenance: Provenance {
            phase_index: 0,
            method: first.method,
            factor: first.factor,
        },
        seed: s.seed,
    };
    let mut log = RunLog::default();
    for (i, phase) in s.phases.iter().enumerate() {
        if i > 0 {
            let prev = &s.phases[i - 1];
            let resize = if prev.method.is_patch() { prev.resize } else { phase.resize };
            ckpt = migrate(
                &ckpt,
                &PhaseTransition {
                    from: geoms[i - 1],
                    to: geoms[i],
                    resize,
                },
            )?;
        }
        observer(PhaseEvent::Start {
            index: i,
            geometry: geoms[i],
            checkpoint: &ckpt,
        })?;
        let last = i + 1 == s.phases.len();
        let ctx = PhaseContext {
            phase_index: i,
            seed: s.seed,
            batch_size: s.batch_size,
            epochs: s.phase_epochs(i),
            stop: last.then_some(s.stop),
            epochs_before: log.records.len() as u64,
            flops_before: log.cumulative_flops(),
        };
        let (next, records) = run_phase(ckpt, phase, data, &ctx)?;
        ckpt = next;
        observer(PhaseEvent::End {
            index: i,
            checkpoint: &ckpt,
            records: &records,
        })?;
        log.records.extend(records);
    }
    Ok((ckpt, log))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSettings {
    pub epochs: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Full-resolution training for a fixed number of epochs, without phases.
pub fn train_baseline(cfg: &ModelConfig, data: &Corpus, s: &BaselineSettings) -> Result<(Checkpoint, RunLog)> {
    cfg.validate()?;
    if s.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let (method, factor) = (CompressionMethod::None, CompressionFactor::NONE);
    let grid = token_grid_dims(data.framing.n_mels, data.framing.target_time_frames, cfg.patch)?;
    let mut params = Parameters::init(cfg, grid, cfg.patch, s.seed);
    let train = data.examples(Split::Train, method, factor, cfg.patch)?;
    let eval = data.examples(Split::Eval, method, factor, cfg.patch)?;
    let n = n_tokens(&params);
    let per_epoch = u128::from(train_step_flops(n, cfg)) * train.len() as u128;
    let mut opt = AdamState::fresh(&params);
    let mut log = RunLog::default();
    for e in 0..s.epochs {
        let mut rng = epoch_rng(s.seed, 0, e);
        let train_loss = train_epoch(&mut params, &mut opt, cfg, &train, s.batch_size, s.lr, &mut rng)?;
        log.records.push(EpochRecord {
            phase_index: 0,
            epoch: e + 1,
            method,
            factor,
            n_tokens: n,
            lr: s.lr,
            train_loss,
            eval_metric: evaluate(&params, cfg, &eval)?,
            cumulative_flops: per_epoch * u128::from(e + 1),
        });
    }
    let ckpt = Checkpoint {
        config: cfg.clone(),
        params,
        optimizer: Some(opt),
        provenance: Provenance {
            phase_index: 0,
            method,
            factor,
        },
        seed: s.seed,
    };
    Ok((ckpt, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{desk_framing, SyntheticSpec};

    fn tiny_corpus() -> Corpus {
        let spec = SyntheticSpec {
            samples_per_class: 4,
            duration_s: 0.5,
            framing: FramingParams {
                target_time_frames: 32,
                n_mels: 16,
                ..desk_framing()
            },
            ..SyntheticSpec::default()
        };
        Corpus::synthesize(&spec, 1).unwrap()
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 16,
            num_layers: 1,
            num_heads: 2,
            mlp_ratio: 2,
            num_classes: 4,
            patch: PatchSpec::square(8),
            ..ModelConfig::default()
        }
    }

    fn schedule(phases: Vec<PhaseConfig>, epochs: u64) -> Schedule {
        Schedule {
            phases,
            baseline_epochs: epochs,
            stop: StopCriterion::FixedEpochs,
            seed: 3,
            batch_size: 4,
        }
    }

    #[test]
    fn budgets() {
        assert_eq!("25%".parse::<EpochBudget>().unwrap().resolve(20), 5);
        assert_eq!("7".parse::<EpochBudget>().unwrap().resolve(20), 7);
        assert!("x%".parse::<EpochBudget>().is_err());
        let split = EpochBudget::default_split(3);
        assert_eq!(split.iter().map(|b| b.resolve(10)).collect::<Vec<_>>(), vec![3, 3, 4]);
    }

    #[test]
    fn lr_decay_steps() {
        let mut p = PhaseConfig::new(CompressionMethod::None, 1, EpochBudget::Count(1), 0.1).unwrap();
        p.lr_decay = Some(LrDecay { every: 2, gamma: 0.5 });
        assert_eq!([0, 1, 2, 5].map(|e| p.lr_at(e)), [0.1, 0.1, 0.05, 0.025]);
    }

    #[test]
    fn default_geometry_token_counts() {
        let f = FramingParams::default();
        let base = PatchSpec::default();
        for (method, c, tokens) in [
            (CompressionMethod::AvgPool, 2, 256),
            (CompressionMethod::Fshift, 4, 128),
            (CompressionMethod::PatchBL, 4, 128),
            (CompressionMethod::None, 1, 512),
        ] {
            let g = PhaseConfig::new(method, c, EpochBudget::Count(1), 1e-3)
                .unwrap()
                .geometry(&f, base)
                .unwrap();
            assert_eq!(g.grid.0 * g.grid.1, tokens);
        }
    }

    #[test]
    fn zero_epoch_phase_is_a_no_op() {
        let data = tiny_corpus();
        let cfg = tiny_cfg();
        let s = schedule(
            vec![PhaseConfig::new(CompressionMethod::None, 1, EpochBudget::Count(0), 1e-3).unwrap()],
            1,
        );
        let (ckpt, log) = run_schedule(&s, &cfg, &data, &mut |_| Ok(())).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(ckpt.params, Parameters::init(&cfg, (2, 4), cfg.patch, 3));
    }

    #[test]
    fn pool_schedule_logs_token_counts_and_resets_optimizer() {
        let data = tiny_corpus();
        let cfg = tiny_cfg();
        let s = schedule(
            vec![
                PhaseConfig::new(CompressionMethod::AvgPool, 2, EpochBudget::Count(2), 1e-3).unwrap(),
                PhaseConfig::new(CompressionMethod::None, 1, EpochBudget::Count(2), 1e-3).unwrap(),
            ],
            4,
        );
        let mut starts = Vec::new();
        let (_, log) = run_schedule(&s, &cfg, &data, &mut |ev| {
            if let PhaseEvent::Start { checkpoint, geometry, .. } = ev {
                assert!(checkpoint.optimizer.is_none());
                assert_eq!(checkpoint.params.grid_dims(), geometry.grid);
                starts.push(geometry.grid);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(starts, vec![(2, 2), (2, 4)]);
        let tokens: Vec<u64> = log.records.iter().map(|r| r.n_tokens).collect();
        assert_eq!(tokens, vec![5, 5, 9, 9]);
        assert_eq!(log.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(log.records.windows(2).all(|w| w[0].cumulative_flops <= w[1].cumulative_flops));
    }

    #[test]
    fn surpass_stops_at_first_hit() {
        let data = tiny_corpus();
        let cfg = tiny_cfg();
        let mut s = schedule(
            vec![PhaseConfig::new(CompressionMethod::None, 1, EpochBudget::Count(5), 1e-3).unwrap()],
            5,
        );
        s.stop = StopCriterion::SurpassBaseline { target: Some(0.0) };
        let (_, log) = run_schedule(&s, &cfg, &data, &mut |_| Ok(())).unwrap();
        assert_eq!(log.records.len(), 1);
        s.stop = StopCriterion::Convergence { patience: 1 };
        let (_, log) = run_schedule(&s, &cfg, &data, &mut |_| Ok(())).unwrap();
        let stopped = log.records.len();
        assert!((2..=5).contains(&stopped));
        if stopped < 5 {
            let last = &log.records[stopped - 1];
            let prev_best = log.records[..stopped - 1].iter().map(|r| r.eval_metric).fold(f64::MIN, f64::max);
            assert!(last.eval_metric <= prev_best);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let data = tiny_corpus();
        let cfg = tiny_cfg();
        let s = schedule(
            vec![
                PhaseConfig::new(CompressionMethod::PatchPI, 2, EpochBudget::Count(1), 1e-3).unwrap(),
                PhaseConfig::new(CompressionMethod::PatchPI, 1, EpochBudget::Count(1), 1e-3).unwrap(),
            ],
            2,
        );
        let a = run_schedule(&s, &cfg, &data, &mut |_| Ok(())).unwrap();
        let b = run_schedule(&s, &cfg, &data, &mut |_| Ok(())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_schedules() {
        let f = desk_framing();
        let p = |m, c| PhaseConfig::new(m, c, EpochBudget::Count(1), 1e-3).unwrap();
        let up = schedule(vec![p(CompressionMethod::Fshift, 2), p(CompressionMethod::Fshift, 4), p(CompressionMethod::None, 1)], 3);
        assert!(up.validate(&f, PatchSpec::default()).is_err());
        let coarse_end = schedule(vec![p(CompressionMethod::Fshift, 2)], 3);
        assert!(coarse_end.validate(&f, PatchSpec::default()).is_err());
        let odd = schedule(vec![p(CompressionMethod::MaxPool, 3), p(CompressionMethod::None, 1)], 3);
        assert!(odd.validate(&f, PatchSpec::default()).is_err());
    }
}
