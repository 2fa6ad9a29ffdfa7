//! Binary checkpoint format.
//!
//! All integers and reals are little-endian.
//!
//! ```text
//! "RLGF"            magic
//! u32               format version (1)
//! u64               run seed
//! u8                role: 0 generator, 1 discriminator
//! u32 x 5           vocab, embed, hidden, max response, max prompt
//! u8 [+ u32]        has terminator [+ terminator id]
//! u8                architecture: 0 recurrent, 1 attention
//! f64               temperature
//! u32               tensor count
//! per tensor:
//!   u32 + bytes     name length + UTF-8 name
//!   u32 + u64 x r   rank + dims
//!   f64 x n         values, n = product of dims
//! ```

use std::path::Path;

use rlgaf_core::diffcore::{ParamStore, Tensor};
use rlgaf_core::discriminator::DiscModel;
use rlgaf_core::seqmodel::{Architecture, GenModel, ModelConfig};

use crate::error::{Result, RunError};

pub const MAGIC: &[u8; 4] = b"RLGF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub role: Role,
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn of_generator(gen: &GenModel, seed: u64) -> Self {
        Self { seed, role: Role::Generator, config: gen.config().clone(), params: gen.params().clone() }
    }

    pub fn of_discriminator(disc: &DiscModel, seed: u64) -> Self {
        Self { seed, role: Role::Discriminator, config: disc.config().clone(), params: disc.params().clone() }
    }

    pub fn into_generator(self) -> Result<GenModel> {
        if self.role != Role::Generator {
            return Err(RunError::Format("checkpoint holds a discriminator, not a generator".into()));
        }
        Ok(GenModel::from_parts(self.config, self.params)?)
    }

    pub fn into_discriminator(self) -> Result<DiscModel> {
        if self.role != Role::Discriminator {
            return Err(RunError::Format("checkpoint holds a generator, not a discriminator".into()));
        }
        Ok(DiscModel::from_parts(self.config, self.params)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let c = &self.config;
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(match self.role {
            Role::Generator => 0,
            Role::Discriminator => 1,
        });
        for dim in [c.vocab_size, c.embed_dim, c.hidden_dim, c.max_response_len, c.max_prompt_len] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        match c.terminator {
            Some(t) => {
                out.push(1);
                out.extend_from_slice(&t.to_le_bytes());
            }
            None => out.push(0),
        }
        out.push(match c.architecture {
            Architecture::Recurrent => 0,
            Architecture::Attention => 1,
        });
        out.extend_from_slice(&c.temperature.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.entries() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(RunError::Format("bad magic, not a checkpoint".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(RunError::Format(format!("unsupported checkpoint version {version} (expected {VERSION})")));
        }
        let seed = r.u64("seed")?;
        let role = match r.u8("role")? {
            0 => Role::Generator,
            1 => Role::Discriminator,
            b => return Err(RunError::Format(format!("unknown model role {b}"))),
        };
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32("model dims")? as usize;
        }
        let terminator = match r.u8("terminator flag")? {
            0 => None,
            1 => Some(r.u32("terminator")?),
            b => return Err(RunError::Format(format!("bad terminator flag {b}"))),
        };
        let architecture = match r.u8("architecture")? {
            0 => Architecture::Recurrent,
            1 => Architecture::Attention,
            b => return Err(RunError::Format(format!("unknown architecture {b}"))),
        };
        let temperature = r.f64("temperature")?;
        let config = ModelConfig {
            vocab_size: dims[0],
            embed_dim: dims[1],
            hidden_dim: dims[2],
            max_response_len: dims[3],
            max_prompt_len: dims[4],
            terminator,
            architecture,
            temperature,
        };
        let count = r.u32("tensor count")?;
        let mut params = ParamStore::new();
        for i in 0..count {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| RunError::Format(format!("tensor {i}: name is not UTF-8")))?
                .to_string();
            let rank = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            let mut n: usize = 1;
            for _ in 0..rank {
                let d = usize::try_from(r.u64("tensor dims")?)
                    .map_err(|_| RunError::Format(format!("tensor {name:?}: dimension overflows")))?;
                n = n.checked_mul(d).ok_or_else(|| RunError::Format(format!("tensor {name:?}: size overflows")))?;
                shape.push(d);
            }
            if n > r.remaining() / 8 {
                return Err(RunError::Format(format!("truncated checkpoint: tensor {name:?} needs {n} values")));
            }
            let values = (0..n).map(|_| r.f64("tensor values")).collect::<Result<Vec<_>>>()?;
            params
                .insert(&name, Tensor { shape, values })
                .map_err(|e| RunError::Format(format!("tensor {name:?}: {e}")))?;
        }
        if r.remaining() != 0 {
            return Err(RunError::Format(format!("{} trailing bytes after tensor table", r.remaining())));
        }
        Ok(Self { seed, role, config, params })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(RunError::Format(format!("truncated checkpoint while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| RunError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        RunError::Format(m) => RunError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
