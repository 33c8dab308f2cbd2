//! Checkpoints and their on-disk container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "C2FCKPT\n"
//! version      u32       currently 1
//! header_len   u32
//! header       UTF-8     `key=value` lines: model config, provenance, seed
//! n_tensors    u32
//! n_tensors ×  u16 name_len, name, u8 ndim, ndim × u32 dims, f64 values
//! has_optim    u8        0 or 1
//! if 1:        u64 step, then first moments and second moments as raw f64
//!              arrays in tensor order (shapes as above)
//! ```

use std::fs;
use std::path::Path;

use crate::compress::{CompressionFactor, CompressionMethod};
use crate::error::{Error, Result};
use crate::model::{AdamState, ModelConfig, Parameters, TaskKind};
use crate::tensor::Tensor;
use crate::tokenizer::PatchSpec;

const MAGIC: &[u8; 8] = b"C2FCKPT\n";
pub const FORMAT_VERSION: u32 = 1;

/// Which phase produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub phase_index: usize,
    pub method: CompressionMethod,
    pub factor: CompressionFactor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Parameters,
    pub optimizer: Option<AdamState>,
    pub provenance: Provenance,
    pub seed: u64,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let header = format!(
            "embed_dim={}\nnum_layers={}\nnum_heads={}\nmlp_ratio={}\nnum_classes={}\ntask={}\npatch={}\ndropout={}\nphase_index={}\nmethod={}\nfactor={}\nseed={}\n",
            cfg.embed_dim,
            cfg.num_layers,
            cfg.num_heads,
            cfg.mlp_ratio,
            cfg.num_classes,
            cfg.task.name(),
            cfg.patch,
            cfg.dropout,
            self.provenance.phase_index,
            self.provenance.method,
            self.provenance.factor,
            self.seed,
        );
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &dim in t.shape() {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            push_f64s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                for moments in [&state.first_moment, &state.second_moment] {
                    for (_, t) in moments.tensors() {
                        push_f64s(&mut out, t.data());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(ckpt_err("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ckpt_err(format!("unsupported format version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| ckpt_err("header is not UTF-8"))?;
        let (config, provenance, seed) = parse_header(header)?;

        let count = r.u32()? as usize;
        let mut loaded = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| ckpt_err("tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r.f64s(n)?;
            loaded.push((name, Tensor::from_vec(&shape, data)?));
        }

        let find = |name: &str| {
            loaded
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| ckpt_err(format!("missing tensor {name}")))
        };
        let kernel = find("patch_embed.kernel")?.shape().to_vec();
        let grid = find("pos_embed.grid")?.shape().to_vec();
        if kernel.len() != 3 || grid.len() != 3 {
            return Err(ckpt_err("patch kernel and positional grid must be rank 3"));
        }
        let patch = PatchSpec::new(kernel[0], kernel[1])?;
        let mut params = template(&config, (grid[0], grid[1]), patch);
        {
            let slots = params.tensors_mut();
            if slots.len() != loaded.len() {
                return Err(ckpt_err(format!(
                    "{} tensors stored, configuration implies {}",
                    loaded.len(),
                    slots.len()
                )));
            }
            for ((name, slot), (stored_name, stored)) in slots.into_iter().zip(&loaded) {
                if &name != stored_name || slot.shape() != stored.shape() {
                    return Err(ckpt_err(format!(
                        "expected {name} {:?}, found {stored_name} {:?}",
                        slot.shape(),
                        stored.shape()
                    )));
                }
                *slot = stored.clone();
            }
        }

        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut state = AdamState::fresh(&params);
                for moments in [&mut state.first_moment, &mut state.second_moment] {
                    for (_, t) in moments.tensors_mut() {
                        let data = r.f64s(t.len())?;
                        t.data_mut().copy_from_slice(&data);
                    }
                }
                state.step = step;
                Some(state)
            }
            other => return Err(ckpt_err(format!("invalid optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(ckpt_err(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config,
            params,
            optimizer,
            provenance,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn template(cfg: &ModelConfig, grid: (usize, usize), patch: PatchSpec) -> Parameters {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Parameters::init_with(cfg, grid, patch, &mut rng, 1.0).zeros_like()
}

fn parse_header(header: &str) -> Result<(ModelConfig, Provenance, u64)> {
    let get = |key: &str| {
        header
            .lines()
            .filter_map(|l| l.split_once('='))
            .find_map(|(k, v)| (k == key).then_some(v))
            .ok_or_else(|| ckpt_err(format!("header lacks {key}")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| ckpt_err(format!("header {key}={v} is not a number")))
    }
    let config = ModelConfig {
        embed_dim: num("embed_dim", get("embed_dim")?)?,
        num_layers: num("num_layers", get("num_layers")?)?,
        num_heads: num("num_heads", get("num_heads")?)?,
        mlp_ratio: num("mlp_ratio", get("mlp_ratio")?)?,
        num_classes: num("num_classes", get("num_classes")?)?,
        task: TaskKind::from_name(get("task")?).ok_or_else(|| ckpt_err("unknown task kind"))?,
        patch: get("patch")?.parse()?,
        dropout: num("dropout", get("dropout")?)?,
    };
    config.validate()?;
    let provenance = Provenance {
        phase_index: num("phase_index", get("phase_index")?)?,
        method: get("method")?.parse()?,
        factor: CompressionFactor::new(num("factor", get("factor")?)?)?,
    };
    Ok((config, provenance, num("seed", get("seed")?)?))
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ckpt_err("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| ckpt_err("tensor too large"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_optimizer: bool) -> Checkpoint {
        let config = ModelConfig {
            embed_dim: 8,
            num_layers: 1,
            num_heads: 2,
            mlp_ratio: 2,
            num_classes: 3,
            task: TaskKind::MultiLabel,
            patch: PatchSpec::square(4),
            dropout: 0.125,
        };
        let params = Parameters::init(&config, (2, 3), PatchSpec::new(4, 8).unwrap(), 5);
        let optimizer = with_optimizer.then(|| {
            let mut s = AdamState::fresh(&params);
            s.step = 17;
            s.first_moment.head_bias.data_mut()[1] = 0.25;
            s.second_moment.cls_token.data_mut()[0] = 1e-9;
            s
        });
        Checkpoint {
            config,
            params,
            optimizer,
            provenance: Provenance {
                phase_index: 1,
                method: CompressionMethod::PatchPI,
                factor: CompressionFactor::new(2).unwrap(),
            },
            seed: 99,
        }
    }

    #[test]
    fn bytes_round_trip() {
        for opt in [false, true] {
            let c = sample(opt);
            assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase.ckpt");
        let c = sample(true);
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(false).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes;
        bad_version[8] = 9;
        assert!(Checkpoint::from_bytes(&bad_version).is_err());
    }
}
