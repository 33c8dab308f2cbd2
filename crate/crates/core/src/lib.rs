//! Coarse-to-fine training of audio spectrogram transformers at desk scale.
//!
//! Early phases train on temporally compressed spectrograms (fewer tokens,
//! cheaper steps); later phases migrate the weights to finer resolutions
//! and finish at full resolution. The crate covers the whole pipeline:
//!
//! - [`dsp`]: log-mel spectrograms with a scalable frame shift,
//! - [`compress`]: time pooling and the compression-method dispatcher,
//! - [`tokenizer`]: patches and token embedding,
//! - [`model`]: a small transformer encoder with hand-written gradients,
//! - [`adapt`]: weight migration between phase geometries,
//! - [`flops`]: the analytic cost model,
//! - [`train`]: phase schedules, stop criteria and metrics,
//! - [`data`]: synthetic corpora, WAV files and manifests,
//! - [`config`] and [`report`]: run configuration files and CSV output.
//!
//! ```
//! use c2f::compress::{apply_compression, CompressionFactor, CompressionMethod};
//! use c2f::dsp::{FramingParams, Waveform};
//!
//! let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
//! let f = FramingParams { target_time_frames: 100, ..FramingParams::default() };
//! let c2 = CompressionFactor::new(2).unwrap();
//! let x = apply_compression(&w, CompressionMethod::AvgPool, c2, &f).unwrap();
//! assert_eq!((x.n_mels(), x.time_frames()), (128, 50));
//! ```

pub mod adapt;
pub mod checkpoint;
pub mod compress;
pub mod config;
pub mod data;
pub mod dsp;
pub mod error;
pub mod flops;
pub mod model;
pub mod report;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
