//! Self-describing parameter files.
//!
//! Layout: the magic `FLVRGEN1`, a little-endian `u32` header length, a UTF-8
//! header of `key=value` and `array` lines, then every array's values as
//! little-endian `f64` in manifest order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::adam::AdamState;
use super::params::ParamStore;
use super::tensor::Tensor;
use super::{ModelParams, NetConfig, NetError};
use crate::chem::{AtomVocabulary, BondOrder, Element};

pub const MAGIC: &[u8; 8] = b"FLVRGEN1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub adam: Option<AdamState>,
    /// Free-form run metadata (epoch, rng state, ...). Keys and values must
    /// not contain newlines; keys must not contain `=`.
    pub meta: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        for (k, v) in self.model.config.to_pairs() {
            header.push_str(&format!("config.{k}={v}\n"));
        }
        let vocab = &self.model.vocab;
        let join = |items: Vec<String>| items.join(",");
        header.push_str(&format!(
            "vocab.elements={}\n",
            join(vocab.elements.iter().map(|e| e.symbol().to_string()).collect())
        ));
        header.push_str(&format!(
            "vocab.charges={}\n",
            join(vocab.charges.iter().map(|c| c.to_string()).collect())
        ));
        header.push_str(&format!(
            "vocab.bonds={}\n",
            join(vocab.bond_orders.iter().map(|b| b.as_u8().to_string()).collect())
        ));
        header.push_str(&format!("vocab.max_nodes={}\n", vocab.max_nodes));
        for (k, v) in &self.meta {
            assert!(!k.contains(['=', '\n']) && !v.contains('\n'), "unsafe meta entry {k}");
            header.push_str(&format!("meta.{k}={v}\n"));
        }

        let mut arrays: Vec<(String, &Tensor)> = self
            .model
            .store
            .iter()
            .map(|(_, n, t)| (n.to_string(), t))
            .collect();
        if let Some(adam) = &self.adam {
            header.push_str(&format!("adam.step={}\n", adam.step));
            for (i, (_, n, _)) in self.model.store.iter().enumerate() {
                arrays.push((format!("adam.m.{n}"), &adam.m[i]));
                arrays.push((format!("adam.v.{n}"), &adam.v[i]));
            }
        }
        let mut offset = 0;
        for (name, t) in &arrays {
            header.push_str(&format!("array {name} {} {} {offset}\n", t.rows(), t.cols()));
            offset += t.len();
        }

        let mut out = Vec::with_capacity(12 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for (_, t) in &arrays {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing FLVRGEN1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        let data = &bytes[12 + hlen..];
        if data.len() % 8 != 0 {
            return Err(bad("data section is not a whole number of f64 values"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut config = NetConfig::default();
        let mut meta = BTreeMap::new();
        let mut elements = None;
        let mut charges = None;
        let mut bonds = None;
        let mut max_nodes = None;
        let mut adam_step = None;
        let mut arrays: Vec<(String, Tensor)> = Vec::new();
        for line in header.lines() {
            if let Some(rest) = line.strip_prefix("array ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, rows, cols, offset] = parts[..] else {
                    return Err(bad(format!("malformed array line `{line}`")));
                };
                let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number in `{line}`")));
                let (rows, cols, offset) = (num(rows)?, num(cols)?, num(offset)?);
                let slice = values
                    .get(offset..offset + rows * cols)
                    .ok_or_else(|| bad(format!("array {name} exceeds data section")))?;
                arrays.push((name.to_string(), Tensor::from_rows(rows, cols, slice.to_vec())));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
            if let Some(k) = key.strip_prefix("config.") {
                if !config.set(k, value)? {
                    return Err(bad(format!("unknown config key {k}")));
                }
            } else if let Some(k) = key.strip_prefix("meta.") {
                meta.insert(k.to_string(), value.to_string());
            } else {
                let list = |v: &str| -> Vec<String> {
                    v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
                };
                match key {
                    "vocab.elements" => {
                        let parsed: Result<Vec<Element>, _> = list(value).iter().map(|s| s.parse()).collect();
                        elements = Some(parsed.map_err(|_| bad("unknown element in vocabulary"))?);
                    }
                    "vocab.charges" => {
                        let parsed: Result<Vec<i8>, _> = list(value).iter().map(|s| s.parse()).collect();
                        charges = Some(parsed.map_err(|_| bad("bad charge in vocabulary"))?);
                    }
                    "vocab.bonds" => {
                        let parsed: Option<Vec<BondOrder>> = list(value)
                            .iter()
                            .map(|s| s.parse::<u8>().ok().and_then(BondOrder::from_u8))
                            .collect();
                        bonds = Some(parsed.ok_or_else(|| bad("bad bond order in vocabulary"))?);
                    }
                    "vocab.max_nodes" => {
                        max_nodes = Some(value.parse::<usize>().map_err(|_| bad("bad max_nodes"))?);
                    }
                    "adam.step" => {
                        adam_step = Some(value.parse::<u64>().map_err(|_| bad("bad adam.step"))?);
                    }
                    _ => return Err(bad(format!("unknown header key {key}"))),
                }
            }
        }
        let vocab = AtomVocabulary {
            elements: elements.ok_or_else(|| bad("missing vocab.elements"))?,
            charges: charges.ok_or_else(|| bad("missing vocab.charges"))?,
            bond_orders: bonds.ok_or_else(|| bad("missing vocab.bonds"))?,
            max_nodes: max_nodes.ok_or_else(|| bad("missing vocab.max_nodes"))?,
        };

        let mut store = ParamStore::new();
        let mut moments: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, t) in arrays {
            if name.starts_with("adam.") {
                moments.insert(name, t);
            } else {
                store.insert(&name, t);
            }
        }
        let adam = match adam_step {
            None if moments.is_empty() => None,
            None => return Err(bad("moment arrays without adam.step")),
            Some(step) => {
                let mut m = Vec::with_capacity(store.len());
                let mut v = Vec::with_capacity(store.len());
                for (_, n, t) in store.iter() {
                    for (prefix, out) in [("adam.m.", &mut m), ("adam.v.", &mut v)] {
                        let key = format!("{prefix}{n}");
                        let arr = moments.remove(&key).ok_or_else(|| bad(format!("missing {key}")))?;
                        if arr.shape != t.shape {
                            return Err(NetError::ShapeMismatch(key));
                        }
                        out.push(arr);
                    }
                }
                if !moments.is_empty() {
                    return Err(bad("moment arrays for unknown parameters"));
                }
                Some(AdamState { m, v, step })
            }
        };
        let model = ModelParams::from_store(config, vocab, store)?;
        Ok(Self { model, adam, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
