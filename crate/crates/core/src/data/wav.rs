//! 16-bit PCM mono RIFF/WAVE files.
//!
//! The writer emits the canonical 44-byte header:
//!
//! ```text
//! 0  "RIFF"   4  u32 file_len-8   8  "WAVE"
//! 12 "fmt "   16 u32 16           20 u16 1 (PCM)   22 u16 channels
//! 24 u32 sample_rate              28 u32 byte_rate 32 u16 block_align
//! 34 u16 bits_per_sample          36 "data"        40 u32 data_len
//! ```
//!
//! The reader walks the chunk list, so extra chunks (`LIST`, `fact`, ...) are
//! skipped. Anything other than 16-bit PCM mono is rejected.

use std::fs;
use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Full-scale value used for quantization.
const FULL_SCALE: f64 = 32767.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate_hz: u32,
    pub byte_rate: u32,
    pub block_align: u16,
    pub bits_per_sample: u16,
    pub data_len: u32,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedWav(msg.into())
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Rounds a sample in [-1, 1] to the 16-bit grid.
pub fn quantize(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16
}

pub fn dequantize(value: i16) -> f64 {
    f64::from(value) / FULL_SCALE
}

pub fn parse_wav(bytes: &[u8]) -> Result<(WavInfo, Waveform)> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }
    let mut fmt: Option<WavInfo> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed(format!("chunk {:?} overruns the file", String::from_utf8_lossy(id))))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some(WavInfo {
                    format_tag: u16_at(body, 0),
                    channels: u16_at(body, 2),
                    sample_rate_hz: u32_at(body, 4),
                    byte_rate: u32_at(body, 8),
                    block_align: u16_at(body, 12),
                    bits_per_sample: u16_at(body, 14),
                    data_len: 0,
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (len & 1);
    }
    let mut info = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if info.format_tag != 1 {
        return Err(Error::UnsupportedWav(format!("format tag {} is not PCM", info.format_tag)));
    }
    if info.channels != 1 {
        return Err(Error::UnsupportedWav(format!("{} channels, expected mono", info.channels)));
    }
    if info.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav(format!("{}-bit samples, expected 16", info.bits_per_sample)));
    }
    if info.sample_rate_hz == 0 {
        return Err(malformed("sample rate is zero"));
    }
    if info.block_align != 2 || info.byte_rate != info.sample_rate_hz * 2 {
        return Err(malformed("block align or byte rate inconsistent with 16-bit mono"));
    }
    if data.is_empty() {
        return Err(malformed("data chunk is empty"));
    }
    if data.len() % 2 != 0 {
        return Err(malformed("data chunk holds a partial sample"));
    }
    info.data_len = data.len() as u32;
    let samples = data
        .chunks_exact(2)
        .map(|c| dequantize(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    Ok((info, Waveform::new(samples, info.sample_rate_hz)?))
}

pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    if let Some(i) = w.samples().iter().position(|s| s.abs() > 1.0) {
        return Err(Error::InvalidArgument(format!("sample {i} lies outside [-1, 1]")));
    }
    let data_len = u32::try_from(w.len() * 2).map_err(|_| Error::InvalidArgument("waveform too long for RIFF".into()))?;
    let rate = w.sample_rate_hz();
    let mut out = Vec::with_capacity(44 + w.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    Ok(parse_wav(&fs::read(path)?)?.1)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    fs::write(path, encode_wav(w)?)?;
    Ok(())
}
