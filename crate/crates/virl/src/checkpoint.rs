//! Parameter checkpoints.
//!
//! A text header followed by raw little-endian f32 values:
//!
//! ```text
//! VIRLCKPT 1
//! config_hash <hex>
//! arch_hash <hex>
//! round <n>
//! params <count>
//! <name> shape=<d0>x<d1>... count=<n>
//! ...
//! end
//! ```
//!
//! Values follow in header order. Saving a loaded checkpoint reproduces the
//! file byte for byte.

use std::path::Path;

use sha2::{Digest, Sha256};
use virl_core::{Array, ParameterStore};

use crate::{Error, Result};

const MAGIC: &str = "VIRLCKPT 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub arch_hash: String,
    pub round: usize,
    pub store: ParameterStore,
}

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// SHA-256 over the parameter names and shapes, in registration order.
pub fn arch_hash(store: &ParameterStore) -> String {
    let mut h = Sha256::new();
    for (_, name, v) in store.iter() {
        h.update(format!("{name} {}\n", shape_text(v.shape())).as_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn new(config_hash: String, round: usize, store: ParameterStore) -> Self {
        Self {
            config_hash,
            arch_hash: arch_hash(&store),
            round,
            store,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!(
            "{MAGIC}\nconfig_hash {}\narch_hash {}\nround {}\nparams {}\n",
            self.config_hash,
            self.arch_hash,
            self.round,
            self.store.len()
        );
        for (_, name, v) in self.store.iter() {
            head.push_str(&format!(
                "{name} shape={} count={}\n",
                shape_text(v.shape()),
                v.len()
            ));
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for (_, _, v) in self.store.iter() {
            for x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            pos += nl + 1;
            std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8".into()))
        };
        if next_line()? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected {key:?}, got {line:?}")))
        };
        let config_hash = field(next_line()?, "config_hash")?;
        let arch = field(next_line()?, "arch_hash")?;
        let round = field(next_line()?, "round")?
            .parse()
            .map_err(|_| bad("bad round".into()))?;
        let count: usize = field(next_line()?, "params")?
            .parse()
            .map_err(|_| bad("bad params count".into()))?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next_line()?;
            let mut parts = line.split(' ');
            let (Some(name), Some(shape), Some(n), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad parameter line {line:?}")));
            };
            let shape: Vec<usize> = shape
                .strip_prefix("shape=")
                .ok_or_else(|| bad(format!("bad shape in {line:?}")))?
                .split('x')
                .map(|d| {
                    d.parse()
                        .map_err(|_| bad(format!("bad extent in {line:?}")))
                })
                .collect::<Result<_>>()?;
            let n: usize = n
                .strip_prefix("count=")
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad(format!("bad count in {line:?}")))?;
            if shape.iter().product::<usize>() != n {
                return Err(bad(format!("count disagrees with shape in {line:?}")));
            }
            entries.push((name.to_string(), shape, n));
        }
        if next_line()? != "end" {
            return Err(bad("missing end of header".into()));
        }
        let total: usize = entries.iter().map(|e| e.2).sum();
        let data = &bytes[pos..];
        if data.len() != 4 * total {
            return Err(bad(format!(
                "expected {} data bytes, found {}",
                4 * total,
                data.len()
            )));
        }
        let mut store = ParameterStore::new();
        let mut off = 0;
        for (name, shape, n) in entries {
            let vals: Vec<f32> = data[off..off + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            off += 4 * n;
            store.insert(&name, Array::new(shape, vals)?)?;
        }
        let ck = Self {
            config_hash,
            arch_hash: arch,
            round,
            store,
        };
        if arch_hash(&ck.store) != ck.arch_hash {
            return Err(bad(
                "arch_hash does not match the stored parameter list".into()
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless both hashes match the expected ones.
    pub fn verify(&self, config_hash: &str, arch: &str) -> Result<()> {
        if self.arch_hash != arch {
            return Err(Error::HashMismatch {
                what: "architecture",
                expected: arch.to_string(),
                found: self.arch_hash.clone(),
            });
        }
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch {
                what: "config",
                expected: config_hash.to_string(),
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }
}
