use c2f::compress::{apply_compression, avg_pool_time, max_pool_time, CompressionFactor, CompressionMethod};
use c2f::dsp::{fshift_mel, frame_count, log_mel, FramingParams, MelSpectrogram, Waveform, LOG_FLOOR};
use c2f::model::{ModelConfig, Parameters};
use c2f::tokenizer::{embed, patchify, token_grid_dims, PatchSpec};
use proptest::prelude::*;

fn small_framing(target: usize) -> FramingParams {
    FramingParams {
        n_mels: 16,
        fft_size: 512,
        target_time_frames: target,
        ..Default::default()
    }
}

fn grid(n_mels: usize, t: usize, values: Vec<f64>) -> MelSpectrogram {
    MelSpectrogram::from_rows(values, n_mels, t, FramingParams::default(), 1).unwrap()
}

fn spectrogram() -> impl Strategy<Value = MelSpectrogram> {
    (1usize..6, 1usize..5).prop_flat_map(|(f, blocks)| {
        let t = blocks * 4;
        prop::collection::vec(-30.0f64..10.0, f * t).prop_map(move |v| grid(f, t, v))
    })
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    (0..len)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

proptest! {
    #[test]
    fn frame_count_is_monotone(n in 0usize..20_000, extra in 0usize..2_000, frame in 1usize..800, shift in 1usize..400) {
        prop_assert!(frame_count(n, frame, shift) <= frame_count(n + extra, frame, shift));
        prop_assert!(frame_count(n, frame, shift + 1) <= frame_count(n, frame, shift));
    }

    #[test]
    fn max_dominates_avg(x in spectrogram(), c in prop::sample::select(vec![1usize, 2, 4])) {
        let a = avg_pool_time(&x, c).unwrap();
        let m = max_pool_time(&x, c).unwrap();
        prop_assert_eq!(a.time_frames(), x.time_frames() / c);
        for (u, v) in m.as_slice().iter().zip(a.as_slice()) {
            prop_assert!(u >= v);
        }
    }

    #[test]
    fn avg_pool_keeps_row_means(x in spectrogram(), c in prop::sample::select(vec![2usize, 4])) {
        let a = avg_pool_time(&x, c).unwrap();
        for (before, after) in x.band_means().iter().zip(a.band_means()) {
            prop_assert!((before - after).abs() <= 1e-12 * before.abs().max(1.0));
        }
    }

    #[test]
    fn pooling_composes(x in spectrogram()) {
        let twice = avg_pool_time(&avg_pool_time(&x, 2).unwrap(), 2).unwrap();
        let once = avg_pool_time(&x, 4).unwrap();
        for (u, v) in twice.as_slice().iter().zip(once.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
        let mtwice = max_pool_time(&max_pool_time(&x, 2).unwrap(), 2).unwrap();
        let monce = max_pool_time(&x, 4).unwrap();
        prop_assert_eq!(mtwice.as_slice(), monce.as_slice());
        prop_assert_eq!(twice.compression_factor(), 4);
    }

    #[test]
    fn embedding_is_affine_in_patches(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let cfg = ModelConfig { embed_dim: 8, ..Default::default() };
        let patch = PatchSpec::square(4);
        let p = Parameters::init_with(&cfg, (2, 2), patch, &mut rand_chacha_rng(seed), 0.5);
        let n = 8 * 8;
        let x = grid(8, 8, noise(n, seed));
        let y = grid(8, 8, noise(n, seed + 1));
        let mix = grid(8, 8, x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a + alpha * b).collect());
        let zero = grid(8, 8, vec![0.0; n]);
        let tok = |s: &MelSpectrogram| {
            embed(&patchify(s, patch).unwrap(), &p.patch_kernel, p.patch_bias.data(), &p.pos_embed, p.cls_token.data())
                .unwrap()
                .as_matrix()
                .to_vec()
        };
        // With the zero input's tokens as offset, E(x + αy) − E(0) = (E(x) − E(0)) + α(E(y) − E(0)).
        let (tx, ty, tm, t0) = (tok(&x), tok(&y), tok(&mix), tok(&zero));
        for i in 0..tm.len() {
            let expected = tx[i] + alpha * (ty[i] - t0[i]);
            prop_assert!((tm[i] - expected).abs() < 1e-10);
        }
    }
}

fn rand_chacha_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn fshift_columns_follow_the_factor() {
    let f = small_framing(64);
    let w = Waveform::new(noise(16_000, 3), 16_000).unwrap();
    for c in [1, 2, 4] {
        let x = fshift_mel(&w, &f, c).unwrap();
        assert_eq!(x.time_frames(), 64 / c);
        assert_eq!(x.compression_factor(), c);
        assert_eq!(x.n_mels(), 16);
    }
}

#[test]
fn samples_past_the_last_frame_do_not_matter() {
    let f = small_framing(32);
    // 32 frames of 400 samples at a 160 shift end at sample 5_360.
    let base = noise(6_000, 8);
    let mut longer = base.clone();
    longer.extend(noise(3_000, 9));
    let a = log_mel(&Waveform::new(base, 16_000).unwrap(), &f).unwrap();
    let b = log_mel(&Waveform::new(longer, 16_000).unwrap(), &f).unwrap();
    assert_eq!(a, b);
}

#[test]
fn entries_never_fall_below_the_floor() {
    let f = small_framing(128);
    let floor = LOG_FLOOR.ln();
    let mut samples = vec![0.0; 4_000];
    samples.extend(noise(4_000, 1).iter().map(|v| v * 1e-6));
    let w = Waveform::new(samples, 16_000).unwrap();
    let x = log_mel(&w, &f).unwrap();
    assert!(x.as_slice().iter().all(|v| *v >= floor));
    // Silence and padding sit exactly at the floor.
    assert_eq!(x.get(0, 0), floor);
    assert_eq!(x.get(3, 127), floor);
}

#[test]
fn token_counts_under_each_family() {
    let p = PatchSpec::square(16);
    for c in [1, 2, 4] {
        let shortened = token_grid_dims(128, 1024 / c, p).unwrap();
        let widened = token_grid_dims(128, 1024, p.widened(c)).unwrap();
        assert_eq!(shortened.0 * shortened.1, 512 / c);
        assert_eq!(shortened, widened);
    }
}

#[test]
fn every_method_produces_its_declared_geometry() {
    let f = small_framing(64);
    let w = Waveform::new(noise(12_000, 5), 16_000).unwrap();
    let full = log_mel(&w, &f).unwrap();
    for method in CompressionMethod::ALL {
        for c in [1, 2, 4] {
            if method == CompressionMethod::None && c != 1 {
                assert!(apply_compression(&w, method, CompressionFactor::new(c).unwrap(), &f).is_err());
                continue;
            }
            let x = apply_compression(&w, method, CompressionFactor::new(c).unwrap(), &f).unwrap();
            let expect_t = if method.shortens_spectrogram() { 64 / c } else { 64 };
            assert_eq!(x.time_frames(), expect_t, "{method} C={c}");
            if method.is_patch() || method == CompressionMethod::None {
                assert_eq!(x, full);
            }
        }
    }
}
