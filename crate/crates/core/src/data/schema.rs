use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Categorical => "categorical",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "categorical" => Ok(FeatureKind::Categorical),
            other => Err(Error::Schema(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Columns the model reads, in model order, plus the cleaning rules.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    dropped_columns: Vec<String>,
    /// Records whose value in the named column is strictly greater than the
    /// limit are discarded.
    sigma_limits: Vec<(String, f64)>,
    event_id_column: String,
    time_feature: String,
    index: HashMap<String, usize>,
}

/// Kelvins columns discarded before modeling.
pub const KELVINS_DROPPED: [&str; 8] = [
    "c_rcs_estimate",
    "t_rcs_estimate",
    "F10",
    "F3M",
    "SSN",
    "AP",
    "mission_id",
    "c_object_type",
];

pub const KELVINS_SIGMA_LIMITS: [(&str, f64); 6] = [
    ("t_sigma_r", 20.0),
    ("c_sigma_r", 1000.0),
    ("t_sigma_t", 2000.0),
    ("c_sigma_t", 100_000.0),
    ("t_sigma_n", 10.0),
    ("c_sigma_n", 450.0),
];

pub const KELVINS_WIDTH: usize = 52;

const RELATIVE: [&str; 10] = [
    "time_to_tca",
    "risk",
    "miss_distance",
    "relative_speed",
    "relative_position_r",
    "relative_position_t",
    "relative_position_n",
    "relative_velocity_r",
    "relative_velocity_t",
    "relative_velocity_n",
];

/// Per-object covariance columns: six standard deviations and fifteen
/// correlations of the RTN position/velocity covariance.
const COVARIANCE: [&str; 21] = [
    "sigma_r",
    "sigma_t",
    "sigma_n",
    "sigma_rdot",
    "sigma_tdot",
    "sigma_ndot",
    "ct_r",
    "cn_r",
    "cn_t",
    "crdot_r",
    "crdot_t",
    "crdot_n",
    "ctdot_r",
    "ctdot_t",
    "ctdot_n",
    "ctdot_rdot",
    "cndot_r",
    "cndot_t",
    "cndot_n",
    "cndot_rdot",
    "cndot_tdot",
];

impl FeatureSchema {
    pub fn new(
        features: Vec<Feature>,
        dropped_columns: Vec<String>,
        sigma_limits: Vec<(String, f64)>,
        event_id_column: impl Into<String>,
        time_feature: impl Into<String>,
    ) -> Result<Self> {
        let event_id_column = event_id_column.into();
        let time_feature = time_feature.into();
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature {:?}", f.name)));
            }
            if dropped_columns.contains(&f.name) {
                return Err(Error::Schema(format!(
                    "feature {:?} is also listed as dropped",
                    f.name
                )));
            }
        }
        if !index.contains_key(&time_feature) {
            return Err(Error::Schema(format!(
                "time feature {time_feature:?} is not a schema feature"
            )));
        }
        if index.contains_key(&event_id_column) {
            return Err(Error::Schema(format!(
                "event id column {event_id_column:?} cannot be a feature"
            )));
        }
        for (name, limit) in &sigma_limits {
            if !limit.is_finite() {
                return Err(Error::Schema(format!("sigma limit for {name:?} is not finite")));
            }
        }
        Ok(Self {
            features,
            dropped_columns,
            sigma_limits,
            event_id_column,
            time_feature,
            index,
        })
    }

    /// All continuous features, no drops, no sigma limits.
    pub fn continuous(names: &[&str], time_feature: &str) -> Result<Self> {
        let features = names
            .iter()
            .map(|n| Feature {
                name: (*n).to_string(),
                kind: FeatureKind::Continuous,
            })
            .collect();
        Self::new(features, Vec::new(), Vec::new(), "event_id", time_feature)
    }

    /// The 52-feature Kelvins schema: relative state, risk, time to TCA and
    /// the full target and chaser covariances.
    pub fn kelvins() -> Self {
        let mut names: Vec<String> = RELATIVE.iter().map(|s| s.to_string()).collect();
        for prefix in ["t_", "c_"] {
            names.extend(COVARIANCE.iter().map(|s| format!("{prefix}{s}")));
        }
        let features = names
            .into_iter()
            .map(|name| Feature {
                name,
                kind: FeatureKind::Continuous,
            })
            .collect();
        let schema = Self::new(
            features,
            KELVINS_DROPPED.iter().map(|s| s.to_string()).collect(),
            KELVINS_SIGMA_LIMITS
                .iter()
                .map(|(n, l)| (n.to_string(), *l))
                .collect(),
            "event_id",
            "time_to_tca",
        )
        .expect("built-in schema is valid");
        debug_assert_eq!(schema.width(), KELVINS_WIDTH);
        schema
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn dropped_columns(&self) -> &[String] {
        &self.dropped_columns
    }

    pub fn sigma_limits(&self) -> &[(String, f64)] {
        &self.sigma_limits
    }

    pub fn event_id_column(&self) -> &str {
        &self.event_id_column
    }

    pub fn time_feature(&self) -> &str {
        &self.time_feature
    }

    pub fn time_index(&self) -> usize {
        self.index[&self.time_feature]
    }

    /// `true` for features that get standardized.
    pub fn continuous_mask(&self) -> Vec<bool> {
        self.features
            .iter()
            .map(|f| f.kind == FeatureKind::Continuous)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# cdm-lstm feature schema v1\n");
        let _ = writeln!(s, "event_id_column = {}", self.event_id_column);
        let _ = writeln!(s, "time_feature = {}", self.time_feature);
        for f in &self.features {
            let _ = writeln!(s, "feature = {} {}", f.name, f.kind.as_str());
        }
        for d in &self.dropped_columns {
            let _ = writeln!(s, "drop = {d}");
        }
        for (name, limit) in &self.sigma_limits {
            let _ = writeln!(s, "sigma_limit = {name} {limit}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut dropped = Vec::new();
        let mut limits = Vec::new();
        let mut event_id = None;
        let mut time = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Schema(format!("line {}: {msg}: {raw:?}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let value = value.trim();
            match key.trim() {
                "event_id_column" => event_id = Some(value.to_string()),
                "time_feature" => time = Some(value.to_string()),
                "feature" => {
                    let mut parts = value.split_whitespace();
                    let name = parts.next().ok_or_else(|| err("missing feature name"))?;
                    let kind = parts.next().map_or(Ok(FeatureKind::Continuous), FeatureKind::parse)?;
                    features.push(Feature {
                        name: name.to_string(),
                        kind,
                    });
                }
                "drop" => dropped.push(value.to_string()),
                "sigma_limit" => {
                    let (name, limit) = value
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| err("expected `sigma_limit = <column> <limit>`"))?;
                    let limit: f64 = limit.trim().parse().map_err(|_| err("bad limit"))?;
                    limits.push((name.to_string(), limit));
                }
                _ => return Err(err("unknown key")),
            }
        }
        Self::new(
            features,
            dropped,
            limits,
            event_id.unwrap_or_else(|| "event_id".into()),
            time.ok_or_else(|| Error::Schema("missing time_feature".into()))?,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
