//! Named parameter tensors and their on-disk container.
//!
//! File layout: the magic line `ODVPARAMS 1\n`, a little-endian `u64` byte
//! length, a JSON manifest (`seed` plus `name`/`shape` per tensor in storage
//! order), then every tensor's values as little-endian `f64`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAGIC: &[u8] = b"ODVPARAMS 1\n";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    Uniform(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

/// FNV-1a, used to derive a per-parameter stream from the store seed so a
/// tensor's initial values depend only on its name, shape and the seed.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Adds a freshly initialized tensor.
    pub fn init(&mut self, name: &str, shape: &[usize], init: Init) {
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
        let data = match init {
            Init::Xavier { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            }
            Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        self.insert(name, Tensor { shape: shape.to_vec(), data });
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest = Manifest {
            seed: self.seed,
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| ManifestEntry { name: n.clone(), shape: t.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for t in &self.tensors {
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::format(format!("{}: {m}", path.display()));
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("not a parameter file"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header"));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(bad("truncated manifest"));
        }
        let manifest: Manifest = serde_json::from_slice(&rest[..len]).map_err(|e| bad(&e.to_string()))?;
        let mut data = rest[len..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut store = ParamStore::new(manifest.seed);
        let expected: usize = manifest.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if rest.len() - len != expected * 8 {
            return Err(bad("payload size does not match the manifest"));
        }
        for e in manifest.tensors {
            let n = e.shape.iter().product();
            let values: Vec<f64> = data.by_ref().take(n).collect();
            store.insert(&e.name, Tensor { shape: e.shape, data: values });
        }
        if !store.all_finite() {
            return Err(bad("non-finite parameter values"));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_depends_on_name_and_seed_only() {
        let mut a = ParamStore::new(3);
        a.init("x.w", &[2, 3], Init::Xavier { fan_in: 2, fan_out: 3 });
        a.init("y.w", &[4], Init::Uniform(0.1));
        let mut b = ParamStore::new(3);
        b.init("y.w", &[4], Init::Uniform(0.1));
        assert_eq!(a.get("y.w"), b.get("y.w"));
        let mut c = ParamStore::new(4);
        c.init("y.w", &[4], Init::Uniform(0.1));
        assert_ne!(a.get("y.w"), c.get("y.w"));
        assert_eq!(a.count(), 10);
    }

    #[test]
    fn file_round_trip() {
        let mut a = ParamStore::new(9);
        a.init("w", &[3, 2], Init::Xavier { fan_in: 3, fan_out: 2 });
        a.init("g", &[2], Init::Ones);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.bin");
        a.save(&p).unwrap();
        let b = ParamStore::load(&p).unwrap();
        assert_eq!(a, b);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(ParamStore::load(&p), Err(Error::Format(_))));
    }
}
