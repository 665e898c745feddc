//! Text form of a rollout, read back by `export-plot`.
//!
//! ```text
//! # cdm-lstm rollout
//! # n_samples = 50
//! # prefix_len = 3
//! # max_steps = 30
//! # seed = 0
//! # time_feature = time_to_tca
//! # quantiles = 0.05,0.5,0.95
//! # mean = <width comma-separated values>
//! # std = <...>
//! # applied = <0/1 per feature>
//! # terminations = <one per sample>
//! sample,step,<feature names>
//! -1,-2,...        observed prefix, steps 1-prefix_len..=0
//! 0,1,...          sample 0, generated step 1
//! ```
//!
//! Feature values are normalized and written in shortest round-trip form,
//! so reading the file back reproduces the rollout bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::inference::{
    quantile_label, step_distributions, summarize, RolloutResult, Termination, Trajectory,
};
use crate::preprocess::NormStats;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutFile {
    pub schema: FeatureSchema,
    pub stats: NormStats,
    pub quantiles: Vec<f64>,
    pub max_steps: usize,
    pub seed: u64,
    pub prefix: Vec<Vec<f64>>,
    pub trajectories: Vec<Trajectory>,
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RolloutFile {
    pub fn new(
        schema: &FeatureSchema,
        stats: &NormStats,
        result: &RolloutResult,
        max_steps: usize,
        seed: u64,
    ) -> Self {
        let quantiles = result
            .steps
            .first()
            .map(|s| s.distribution.quantile_levels.clone())
            .unwrap_or_else(|| crate::inference::DEFAULT_QUANTILES.to_vec());
        Self {
            schema: schema.clone(),
            stats: stats.clone(),
            quantiles,
            max_steps,
            seed,
            prefix: result.prefix.clone(),
            trajectories: result.trajectories.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# cdm-lstm rollout\n");
        let _ = writeln!(s, "# n_samples = {}", self.trajectories.len());
        let _ = writeln!(s, "# prefix_len = {}", self.prefix.len());
        let _ = writeln!(s, "# max_steps = {}", self.max_steps);
        let _ = writeln!(s, "# seed = {}", self.seed);
        let _ = writeln!(s, "# time_feature = {}", self.schema.time_feature());
        let _ = writeln!(s, "# quantiles = {}", join(&self.quantiles));
        let _ = writeln!(s, "# mean = {}", join(&self.stats.mean));
        let _ = writeln!(s, "# std = {}", join(&self.stats.std));
        let _ = writeln!(s, "# applied = {}", join(self.stats.applied.iter().map(|&a| a as u8)));
        let _ = writeln!(
            s,
            "# terminations = {}",
            join(self.trajectories.iter().map(|t| t.termination.as_str()))
        );
        let _ = writeln!(s, "sample,step,{}", join(self.schema.names()));
        let k = self.prefix.len() as i64;
        for (i, row) in self.prefix.iter().enumerate() {
            let _ = writeln!(s, "-1,{},{}", i as i64 + 1 - k, join(row));
        }
        for (i, t) in self.trajectories.iter().enumerate() {
            for (step, row) in t.cdms.iter().enumerate() {
                let _ = writeln!(s, "{i},{},{}", step + 1, join(row));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Row {
            line: line as u64,
            message: msg,
        };
        let mut meta = HashMap::new();
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let (header_line, header) = loop {
            match lines.next() {
                Some((_, l)) if l.starts_with('#') => {
                    if let Some((k, v)) = l[1..].split_once('=') {
                        meta.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
                Some((n, l)) => break (n, l),
                None => return Err(Error::Format("rollout file has no column header".into())),
            }
        };
        let get = |key: &str| {
            meta.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("rollout file is missing `# {key} =`")))
        };
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad value {x:?} in {key}")))
                })
                .collect()
        }
        fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Format(format!("bad value {v:?} for {key}")))
        }

        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.len() < 3 || columns[0] != "sample" || columns[1] != "step" {
            return Err(bad(header_line, "expected header `sample,step,<features>`".into()));
        }
        let schema = FeatureSchema::continuous(&columns[2..], get("time_feature")?)?;
        let width = schema.width();
        let stats = NormStats {
            mean: list("mean", get("mean")?)?,
            std: list("std", get("std")?)?,
            applied: list::<u8>("applied", get("applied")?)?
                .into_iter()
                .map(|a| a != 0)
                .collect(),
        };
        if stats.mean.len() != width || stats.std.len() != width || stats.applied.len() != width {
            return Err(Error::Format(format!(
                "normalizer lists must have {width} values"
            )));
        }
        let terminations: Vec<Termination> = get("terminations")?
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| Termination::parse(t.trim()))
            .collect::<Result<_>>()?;
        let n_samples: usize = one("n_samples", get("n_samples")?)?;
        if terminations.len() != n_samples {
            return Err(Error::Format(format!(
                "{} terminations for {n_samples} samples",
                terminations.len()
            )));
        }

        let mut prefix = Vec::new();
        let mut cdms: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_samples];
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width + 2 {
                return Err(bad(n, format!("expected {} columns, found {}", width + 2, cells.len())));
            }
            let sample: i64 = cells[0].trim().parse().map_err(|_| bad(n, "bad sample index".into()))?;
            let step: i64 = cells[1].trim().parse().map_err(|_| bad(n, "bad step".into()))?;
            let row = cells[2..]
                .iter()
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(n, "bad feature value".into()))?;
            if sample < 0 {
                prefix.push(row);
                continue;
            }
            let traj = cdms
                .get_mut(sample as usize)
                .ok_or_else(|| bad(n, format!("sample {sample} out of range")))?;
            if step != traj.len() as i64 + 1 {
                return Err(bad(n, format!("sample {sample}: step {step} out of order")));
            }
            traj.push(row);
        }

        Ok(Self {
            schema,
            stats,
            quantiles: list("quantiles", get("quantiles")?)?,
            max_steps: one("max_steps", get("max_steps")?)?,
            seed: one("seed", get("seed")?)?,
            prefix,
            trajectories: cdms
                .into_iter()
                .zip(terminations)
                .map(|(cdms, termination)| Trajectory { cdms, termination })
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Per-feature band tables in physical units, keyed by feature name.
    /// Columns: `step,n_alive,mean,std,<quantile labels>`.
    pub fn band_tables(&self) -> Result<Vec<(String, String)>> {
        let steps = step_distributions(&self.trajectories, &self.stats, &self.quantiles)?;
        let mut header = String::from("step,n_alive,mean,std");
        for &q in &self.quantiles {
            let _ = write!(header, ",{}", quantile_label(q));
        }
        header.push('\n');
        let mut tables: Vec<(String, String)> = self
            .schema
            .names()
            .map(|n| (n.to_string(), header.clone()))
            .collect();
        for step in &steps {
            for (row, (_, table)) in summarize(&step.distribution, &self.schema).iter().zip(&mut tables) {
                let _ = write!(table, "{},{},{},{}", step.step, step.n_alive, row.mean, row.std);
                for q in &row.quantiles {
                    let _ = write!(table, ",{q}");
                }
                table.push('\n');
            }
        }
        Ok(tables)
    }
}
