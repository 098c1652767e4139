//! Hyperparameter domains and the manifest that declares them per family.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Family;
use crate::error::{Error, Result};
use crate::rng::{uniform_index, Rng};

/// The manifest shipped with the crate.
pub const DEFAULT_MANIFEST: &str = include_str!("hyperparameters.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v:?}"),
            ParamValue::Choice(s) => write!(f, "{s}"),
        }
    }
}

impl ParamValue {
    /// Inverse of `Display`: integers, then reals, then free text.
    pub fn parse(text: &str) -> ParamValue {
        if let Ok(v) = text.parse::<i64>() {
            ParamValue::Int(v)
        } else if let Ok(v) = text.parse::<f64>() {
            ParamValue::Real(v)
        } else {
            ParamValue::Choice(text.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Domain {
    Int {
        int: [i64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<i64>,
    },
    Real {
        real: [f64; 2],
    },
    LogUniform {
        log_uniform: [f64; 2],
    },
    Choice {
        choice: Vec<String>,
    },
}

impl Domain {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: &str| Err(Error::Manifest(format!("parameter `{name}`: {msg}")));
        match self {
            Domain::Int { int: [lo, hi], step } => {
                if lo > hi {
                    return bad("integer range has lo > hi");
                }
                if step.is_some_and(|s| s < 1) {
                    return bad("step must be at least 1");
                }
            }
            Domain::Real { real: [lo, hi] } => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return bad("real interval must be finite with lo <= hi");
                }
            }
            Domain::LogUniform {
                log_uniform: [lo, hi],
            } => {
                if !(*lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return bad("log-uniform interval must satisfy 0 < lo <= hi");
                }
            }
            Domain::Choice { choice } => {
                if choice.is_empty() {
                    return bad("empty choice set");
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> ParamValue {
        match self {
            Domain::Int { int: [lo, hi], step } => {
                let step = step.unwrap_or(1);
                let slots = (hi - lo) / step;
                ParamValue::Int(lo + step * rng.gen_range(0..=slots as u64) as i64)
            }
            Domain::Real { real: [lo, hi] } => ParamValue::Real(lo + (hi - lo) * rng.gen::<f64>()),
            Domain::LogUniform {
                log_uniform: [lo, hi],
            } => {
                let (l, h) = (lo.ln(), hi.ln());
                ParamValue::Real((l + (h - l) * rng.gen::<f64>()).exp())
            }
            Domain::Choice { choice } => {
                ParamValue::Choice(choice[uniform_index(rng, choice.len())].clone())
            }
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (Domain::Int { int: [lo, hi], step }, ParamValue::Int(v)) => {
                v >= lo && v <= hi && (v - lo) % step.unwrap_or(1) == 0
            }
            (Domain::Real { real: [lo, hi] }, ParamValue::Real(v))
            | (
                Domain::LogUniform {
                    log_uniform: [lo, hi],
                },
                ParamValue::Real(v),
            ) => v >= lo && v <= hi,
            (Domain::Choice { choice }, ParamValue::Choice(s)) => choice.contains(s),
            _ => false,
        }
    }
}

/// Declared domains of one family, in name order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParamSpace {
    pub family: Family,
    pub params: BTreeMap<String, Domain>,
}

impl HyperParamSpace {
    pub fn sample(&self, rng: &mut Rng) -> BTreeMap<String, ParamValue> {
        self.params
            .iter()
            .map(|(name, domain)| (name.clone(), domain.sample(rng)))
            .collect()
    }

    pub fn contains(&self, params: &BTreeMap<String, ParamValue>) -> bool {
        params.len() == self.params.len()
            && self
                .params
                .iter()
                .all(|(name, d)| params.get(name).is_some_and(|v| d.contains(v)))
    }
}

/// Per-family hyperparameter domains, loaded from TOML.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParamManifest {
    pub version: u32,
    spaces: BTreeMap<Family, HyperParamSpace>,
}

#[derive(Deserialize)]
struct RawManifest {
    version: u32,
    #[serde(flatten)]
    families: BTreeMap<String, BTreeMap<String, Domain>>,
}

impl HyperParamManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        let mut spaces = BTreeMap::new();
        for (key, params) in raw.families {
            let family: Family = key.parse()?;
            for (name, domain) in &params {
                domain.validate(name)?;
            }
            spaces.insert(family, HyperParamSpace { family, params });
        }
        Ok(Self {
            version: raw.version,
            spaces,
        })
    }

    pub fn space(&self, family: Family) -> Result<&HyperParamSpace> {
        self.spaces.get(&family).ok_or_else(|| {
            Error::Manifest(format!("no hyperparameter space declared for {family}"))
        })
    }

    pub fn families(&self) -> impl Iterator<Item = Family> + '_ {
        self.spaces.keys().copied()
    }
}

impl Default for HyperParamManifest {
    fn default() -> Self {
        Self::parse(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }
}
