//! Analytic FLOPs of the encoder and cumulative schedule accounting.
//!
//! One forward pass over `n` tokens (CLS included) costs
//!
//! ```text
//! layers · (12·n·d² + 2·n²·d) + 2·n·p_f·p_t·d
//! ```
//!
//! and one training step is counted as three forward passes (forward plus
//! a backward pass at twice the cost). The mel front end is not counted.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tokenizer::PatchSpec;

pub const TRAIN_STEP_MULTIPLIER: u64 = 3;

/// Forward-pass FLOPs for `n_tokens` tokens with the patch in `cfg.patch`.
pub fn step_flops(n_tokens: u64, cfg: &ModelConfig) -> u64 {
    let n = n_tokens;
    let d = cfg.embed_dim as u64;
    let layers = cfg.num_layers as u64;
    let area = cfg.patch.area() as u64;
    layers * (12 * n * d * d + 2 * n * n * d) + 2 * n * area * d
}

/// FLOPs of one training step (forward and backward) on one sample.
pub fn train_step_flops(n_tokens: u64, cfg: &ModelConfig) -> u64 {
    TRAIN_STEP_MULTIPLIER * step_flops(n_tokens, cfg)
}

/// Token count (CLS included) and patch of one phase, with its epoch count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseCost {
    pub n_tokens: u64,
    pub patch: PatchSpec,
    pub epochs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFlops {
    pub n_tokens: u64,
    pub epochs: u64,
    pub steps: u64,
    /// Training FLOPs per step.
    pub per_step: u64,
    /// Running total through the end of this phase.
    pub cumulative: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    pub phases: Vec<PhaseFlops>,
    pub cumulative: u128,
    pub baseline_cumulative: u128,
    pub savings_percent: f64,
}

/// `100·(1 − cumulative/baseline)`.
pub fn savings_percent(cumulative: u128, baseline: u128) -> f64 {
    100.0 * (1.0 - cumulative as f64 / baseline as f64)
}

/// Cumulative training FLOPs of a schedule against a single-phase baseline.
pub fn schedule_flops(
    phases: &[PhaseCost],
    baseline: PhaseCost,
    cfg: &ModelConfig,
    steps_per_epoch: u64,
) -> Result<FlopsReport> {
    if phases.is_empty() {
        return Err(Error::Empty("schedule"));
    }
    let mut cumulative: u128 = 0;
    let mut rows = Vec::with_capacity(phases.len());
    for p in phases {
        let per_step = train_step_flops(p.n_tokens, &cfg.with_patch(p.patch));
        let steps = p.epochs * steps_per_epoch;
        cumulative += u128::from(per_step) * u128::from(steps);
        rows.push(PhaseFlops {
            n_tokens: p.n_tokens,
            epochs: p.epochs,
            steps,
            per_step,
            cumulative,
        });
    }
    let baseline_cumulative = u128::from(train_step_flops(baseline.n_tokens, &cfg.with_patch(baseline.patch)))
        * u128::from(baseline.epochs * steps_per_epoch);
    if baseline_cumulative == 0 {
        return Err(Error::InvalidArgument("baseline performs no training steps".into()));
    }
    Ok(FlopsReport {
        phases: rows,
        cumulative,
        baseline_cumulative,
        savings_percent: savings_percent(cumulative, baseline_cumulative),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: d,
            num_layers: layers,
            ..Default::default()
        }
    }

    #[test]
    fn closed_form_by_hand() {
        // 2·(12·129·4096 + 2·16641·64) + 2·129·256·64
        // = 2·(6_340_608 + 2_130_048) + 4_227_072
        assert_eq!(step_flops(129, &cfg(64, 2)), 21_168_384);
        // n = 1: 12·d² + 2·d per layer, plus 2·p·d.
        assert_eq!(step_flops(1, &cfg(64, 2)), 2 * (12 * 4096 + 128) + 2 * 256 * 64);
    }

    #[test]
    fn attention_term_quarters_when_n_halves() {
        let c = ModelConfig {
            num_layers: 1,
            ..cfg(64, 1)
        };
        let attn = |n: u64| 2 * n * n * c.embed_dim as u64;
        assert_eq!(attn(256) * 4, attn(512));
        let linear_part = |n: u64| step_flops(n, &c) - attn(n);
        assert_eq!(linear_part(512), 2 * linear_part(256));
    }

    #[test]
    fn degenerate_schedule_saves_nothing() {
        let full = PhaseCost {
            n_tokens: 513,
            patch: PatchSpec::square(16),
            epochs: 20,
        };
        let r = schedule_flops(&[full], full, &cfg(64, 2), 7).unwrap();
        assert_eq!(r.savings_percent, 0.0);
        assert_eq!(r.cumulative, r.baseline_cumulative);
    }

    #[test]
    fn empty_schedule_is_rejected() {
        let full = PhaseCost {
            n_tokens: 513,
            patch: PatchSpec::square(16),
            epochs: 20,
        };
        assert!(schedule_flops(&[], full, &cfg(64, 2), 1).is_err());
    }
}
