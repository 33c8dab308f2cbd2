use c2f::flops::{savings_percent, schedule_flops, step_flops, train_step_flops, PhaseCost};
use c2f::model::ModelConfig;
use c2f::tokenizer::PatchSpec;
use proptest::prelude::*;

fn cfg(d: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: d,
        num_layers: layers,
        num_heads: 1,
        ..Default::default()
    }
}

fn cost(n_tokens: u64, epochs: u64) -> PhaseCost {
    PhaseCost {
        n_tokens,
        patch: PatchSpec::square(16),
        epochs,
    }
}

proptest! {
    #[test]
    fn cost_grows_faster_than_tokens(n in 1u64..5_000, d in 1usize..256, layers in 1usize..13) {
        let c = cfg(d, layers);
        prop_assert!(step_flops(n + 1, &c) > step_flops(n, &c));
        prop_assert!(step_flops(2 * n, &c) > 2 * step_flops(n, &c));
        prop_assert_eq!(train_step_flops(n, &c), 3 * step_flops(n, &c));
    }

    #[test]
    fn savings_ignore_steps_per_epoch(
        phases in prop::collection::vec((1u64..600, 1u64..40), 1..4),
        steps in 1u64..500,
        scale in 2u64..50,
    ) {
        let c = cfg(64, 2);
        let costs: Vec<PhaseCost> = phases.iter().map(|&(n, e)| cost(n, e)).collect();
        let base = cost(513, 20);
        let a = schedule_flops(&costs, base, &c, steps).unwrap();
        let b = schedule_flops(&costs, base, &c, steps * scale).unwrap();
        prop_assert!((a.savings_percent - b.savings_percent).abs() < 1e-9);
        prop_assert_eq!(b.cumulative, a.cumulative * u128::from(scale));
    }

    #[test]
    fn phase_order_does_not_change_the_total(
        phases in prop::collection::vec((1u64..600, 1u64..40), 2..5),
        steps in 1u64..100,
    ) {
        let c = cfg(32, 3);
        let costs: Vec<PhaseCost> = phases.iter().map(|&(n, e)| cost(n, e)).collect();
        let mut reversed = costs.clone();
        reversed.reverse();
        let base = cost(257, 10);
        let a = schedule_flops(&costs, base, &c, steps).unwrap();
        let b = schedule_flops(&reversed, base, &c, steps).unwrap();
        prop_assert_eq!(a.cumulative, b.cumulative);
        prop_assert_eq!(a.phases.last().unwrap().cumulative, a.cumulative);
    }
}

#[test]
fn five_then_fifteen_epochs_against_twenty() {
    let c = cfg(64, 2);
    let f = |n: u64| step_flops(n, &c) as f64;
    let r = schedule_flops(&[cost(129, 5), cost(513, 15)], cost(513, 20), &c, 100).unwrap();
    let expected = 100.0 * (1.0 - (5.0 * f(129) + 15.0 * f(513)) / (20.0 * f(513)));
    assert!((r.savings_percent - expected).abs() < 1e-9);
    assert_eq!(r.phases[0].steps, 500);
    assert_eq!(r.phases[1].cumulative, r.cumulative);
}

#[test]
fn savings_formula() {
    assert_eq!(savings_percent(75, 100), 25.0);
    assert_eq!(savings_percent(100, 100), 0.0);
    assert!(savings_percent(150, 100) < 0.0);
}

#[test]
fn vit_base_scale_counts_fit() {
    // ViT-base on 1024 frames: 513 tokens, d = 768, 12 layers.
    let c = ModelConfig {
        embed_dim: 768,
        num_layers: 12,
        num_heads: 12,
        ..Default::default()
    };
    let per_step = train_step_flops(513, &c);
    let r = schedule_flops(&[cost(513, 30)], cost(513, 30), &c, 2_000_000 / 12).unwrap();
    assert_eq!(r.cumulative, u128::from(per_step) * 30 * u128::from(2_000_000u64 / 12));
}
