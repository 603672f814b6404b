//! `nsmdp-v1` JSON documents.
//!
//! A document is either a full table dump or a builtin reference such as
//! `{"builtin": "bridge", "epsilon": 0.5}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{build_bridge, BridgeSpec};
use crate::error::{Error, Result};
use crate::metric::MetricSpec;
use crate::model::{ActionSpace, Nsmdp, NsmdpTables, StateSpace};

pub const FORMAT_TAG: &str = "nsmdp-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsmdpDocument {
    pub format: String,
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<(i32, i32)>>,
    #[serde(default)]
    pub terminal: Vec<bool>,
    pub actions: Vec<String>,
    pub gamma: f64,
    pub lipschitz_p: f64,
    pub lipschitz_r: f64,
    pub metric: MetricSpec,
    /// `[t][s][a][s']`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[t][s][a][s']`.
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
}

fn config_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    }
}

impl NsmdpDocument {
    pub fn from_nsmdp(m: &Nsmdp) -> Self {
        let (horizon, ns, na) = (m.horizon(), m.n_states(), m.n_actions());
        let table = |f: &dyn Fn(usize, usize, usize) -> Vec<f64>| -> Vec<Vec<Vec<Vec<f64>>>> {
            (0..horizon)
                .map(|t| (0..ns).map(|s| (0..na).map(|a| f(t, s, a)).collect()).collect())
                .collect()
        };
        Self {
            format: FORMAT_TAG.into(),
            states: m.states().names().to_vec(),
            coordinates: m.states().coordinates().map(<[_]>::to_vec),
            terminal: m.states().terminal_flags().to_vec(),
            actions: m.actions().names().to_vec(),
            gamma: m.gamma(),
            lipschitz_p: m.lipschitz_p(),
            lipschitz_r: m.lipschitz_r(),
            metric: MetricSpec::of(m.metric()),
            transitions: table(&|t, s, a| m.transition_row(t, s, a).to_vec()),
            rewards: table(&|t, s, a| (0..ns).map(|s2| m.reward(t, s, a, s2)).collect()),
        }
    }

    pub fn into_nsmdp(self) -> Result<Nsmdp> {
        if self.format != FORMAT_TAG {
            return Err(Error::Config {
                path: "format".into(),
                message: format!("expected {FORMAT_TAG:?}, got {:?}", self.format),
            });
        }
        let ns = self.states.len();
        let terminal = if self.terminal.is_empty() {
            vec![false; ns]
        } else {
            self.terminal
        };
        let metric = self.metric.build(ns, self.coordinates.as_deref())?;
        Nsmdp::new(NsmdpTables {
            states: StateSpace::new(self.states, self.coordinates, terminal)?,
            actions: ActionSpace::new(self.actions)?,
            metric,
            gamma: self.gamma,
            lipschitz_p: self.lipschitz_p,
            lipschitz_r: self.lipschitz_r,
            transitions: self.transitions,
            rewards: self.rewards,
        })
    }
}

/// Reads `{"builtin": "bridge", ...spec fields}`.
pub(crate) fn builtin_bridge(mut value: serde_json::Value) -> Result<BridgeSpec> {
    let tag = value
        .as_object_mut()
        .and_then(|o| o.remove("builtin"))
        .unwrap_or_default();
    if tag != "bridge" {
        return Err(Error::Config {
            path: "builtin".into(),
            message: format!("unknown builtin domain {tag}"),
        });
    }
    serde_path_to_error::deserialize(value).map_err(config_error)
}

/// Parses either document form.
pub fn parse_domain(json: &str) -> Result<Nsmdp> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    if value.get("builtin").is_some() {
        build_bridge(&builtin_bridge(value)?)
    } else {
        let doc: NsmdpDocument = serde_path_to_error::deserialize(value).map_err(config_error)?;
        doc.into_nsmdp()
    }
}

pub fn load_domain(path: impl AsRef<Path>) -> Result<Nsmdp> {
    parse_domain(&std::fs::read_to_string(path)?)
}

pub fn export_domain(m: &Nsmdp) -> Result<String> {
    Ok(serde_json::to_string_pretty(&NsmdpDocument::from_nsmdp(m))?)
}
