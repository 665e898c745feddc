//! Model checkpoint file.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic        7 bytes  "CDMLSTM"
//! version      u32      1
//! header_len   u32
//! header       UTF-8 `key = value` lines, then a `[schema]` line followed
//!              by the schema text
//! width        u32      normalizer width (= schema width)
//! mean         width × f64
//! std          width × f64
//! applied      width × u8 (0 or 1)
//! n_params     u64      must equal the header's param_count
//! params       n_params × f32, tensors in order: per layer
//!              w_ih (4H×D row-major), w_hh (4H×H), b_ih (4H), b_hh (4H);
//!              then head_w (out×H), head_b (out). Gate blocks are
//!              stacked i, f, g, o.
//! ```
//!
//! Weights are stored in single precision; loading widens them back to f64.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{read_string, read_u32, read_u64, FeatureSchema};
use crate::error::{Error, Result};
use crate::inference::Model;
use crate::net::{DropoutSites, NetConfig, StackedLstmParams, GATE_ORDER};
use crate::preprocess::NormStats;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"CDMLSTM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub epoch: usize,
    /// Split used during training, so evaluation can recover the test set.
    pub split_seed: u64,
    pub test_fraction: f64,
}

pub fn sites_to_text(sites: DropoutSites) -> String {
    let mut names = Vec::new();
    if sites.input {
        names.push("input");
    }
    if sites.hidden {
        names.push("hidden");
    }
    if sites.head {
        names.push("head");
    }
    if names.is_empty() {
        "none".into()
    } else {
        names.join(",")
    }
}

pub fn sites_from_text(text: &str) -> Result<DropoutSites> {
    let mut sites = DropoutSites {
        input: false,
        hidden: false,
        head: false,
    };
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "input" => sites.input = true,
            "hidden" => sites.hidden = true,
            "head" => sites.head = true,
            "none" => {}
            other => return Err(Error::Config(format!("unknown dropout site {other:?}"))),
        }
    }
    Ok(sites)
}

impl Checkpoint {
    fn header(&self) -> String {
        let cfg = &self.model.params.config;
        let mut s = String::from("# cdm-lstm checkpoint\n");
        let _ = writeln!(s, "input_dim = {}", cfg.input_dim);
        let _ = writeln!(s, "hidden = {}", cfg.hidden);
        let _ = writeln!(s, "layers = {}", cfg.num_layers);
        let _ = writeln!(s, "output_dim = {}", cfg.output_dim);
        let _ = writeln!(s, "dropout_rate = {}", cfg.dropout_rate);
        let _ = writeln!(s, "dropout_sites = {}", sites_to_text(cfg.sites));
        let _ = writeln!(s, "gate_order = {GATE_ORDER}");
        let _ = writeln!(s, "param_count = {}", cfg.param_count());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "epoch = {}", self.epoch);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "test_fraction = {}", self.test_fraction);
        s.push_str("[schema]\n");
        s.push_str(&self.model.schema.to_text());
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = self.header();
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;

        let stats = &self.model.stats;
        w.write_all(&(stats.width() as u32).to_le_bytes())?;
        for v in stats.mean.iter().chain(&stats.std) {
            w.write_all(&v.to_le_bytes())?;
        }
        let applied: Vec<u8> = stats.applied.iter().map(|&a| a as u8).collect();
        w.write_all(&applied)?;

        let weights = &self.model.params.weights;
        w.write_all(&(weights.len() as u64).to_le_bytes())?;
        let mut buf = Vec::new();
        for (_, t) in weights.tensors() {
            buf.clear();
            for &x in t {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short to be a checkpoint".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version} is not supported by this build (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = read_u32(&mut r)? as usize;
        let header = read_string(&mut r, header_len)?;
        let (meta, schema_text) = header
            .split_once("[schema]\n")
            .ok_or_else(|| Error::Checkpoint("header has no [schema] section".into()))?;
        let schema = FeatureSchema::from_text(schema_text)?;

        let mut kv = std::collections::HashMap::new();
        for line in meta.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("malformed header line {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| {
            kv.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Checkpoint(format!("header is missing {key}")))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Checkpoint(format!("bad value for {key}: {v:?}")))
        }
        if get("gate_order")? != GATE_ORDER {
            return Err(Error::Checkpoint(format!(
                "gate order {:?} is not supported (expected {GATE_ORDER})",
                get("gate_order")?
            )));
        }
        let config = NetConfig {
            input_dim: num("input_dim", get("input_dim")?)?,
            hidden: num("hidden", get("hidden")?)?,
            num_layers: num("layers", get("layers")?)?,
            output_dim: num("output_dim", get("output_dim")?)?,
            dropout_rate: num("dropout_rate", get("dropout_rate")?)?,
            sites: sites_from_text(get("dropout_sites")?)?,
        };
        let declared: usize = num("param_count", get("param_count")?)?;
        if declared != config.param_count() {
            return Err(Error::Checkpoint(format!(
                "header declares {declared} parameters but the architecture has {}",
                config.param_count()
            )));
        }

        let width = read_u32(&mut r)? as usize;
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut b = vec![0u8; n * 8];
            r.read_exact(&mut b)?;
            Ok(b.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let mean = read_f64s(width)?;
        let std = read_f64s(width)?;
        let mut applied = vec![0u8; width];
        r.read_exact(&mut applied)?;
        let stats = NormStats {
            mean,
            std,
            applied: applied.iter().map(|&a| a != 0).collect(),
        };

        let n_params = read_u64(&mut r)? as usize;
        if n_params != declared {
            return Err(Error::Checkpoint(format!(
                "parameter block holds {n_params} values, header declares {declared}"
            )));
        }
        let mut params = StackedLstmParams::zeros(config)?;
        for (_, t) in params.weights.tensors_mut() {
            let mut b = vec![0u8; t.len() * 4];
            r.read_exact(&mut b)?;
            for (x, c) in t.iter_mut().zip(b.chunks_exact(4)) {
                *x = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
            }
        }
        Ok(Self {
            model: Model::new(schema, stats, params)?,
            seed: num("seed", get("seed")?)?,
            epoch: num("epoch", get("epoch")?)?,
            split_seed: num("split_seed", get("split_seed")?)?,
            test_fraction: num("test_fraction", get("test_fraction")?)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| {
            Error::Checkpoint(format!("cannot open checkpoint {}: {e}", path.display()))
        })?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
