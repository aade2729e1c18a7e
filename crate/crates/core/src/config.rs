//! Experiment configuration and its JSON form.
//!
//! A configuration file is a JSON object; every key is optional except
//! `p_obj`, which must come from the file, a preset or the command line.
//! Absent keys take the defaults below. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "p_obj": 0.66,
//!   "truth": "fixed-true",               // or {"sampled": {"base_rate": 0.3}}
//!   "prior_belief": 0.5,                 // or "base-rate"
//!   "trust_prior": {"beta": {"alpha": 2.0, "beta": 1.0}},   // or {"fixed": 0.66}
//!   "fixed_trust": 0.66,
//!   "assertion_threshold": 0.8,
//!   "comm_prob": 0.25,
//!   "inquiry_prob": 0.1,
//!   "n_agents": 50,
//!   "topology": {"k": 2, "p_rewire": 0.2},
//!   "steps": 50,
//!   "runs": 100,
//!   "master_seed": 0,
//!   "grid_resolution": 1000,
//!   "conditions": ["NetworkUpdater", "NetworkFixed", "ShadowUpdater", "ShadowFixed"],
//!   "evidence_sharing": "all-conditions" // or "per-pair"
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{make_beta_grid, TrustModel};
use crate::prob::Probability;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Agent kind, crossing communication with trust updating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    NetworkUpdater,
    NetworkFixed,
    ShadowUpdater,
    ShadowFixed,
    /// Isolated agent with fixed trust equal to the objective reliability.
    Optimal,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NetworkUpdater,
        Condition::NetworkFixed,
        Condition::ShadowUpdater,
        Condition::ShadowFixed,
        Condition::Optimal,
    ];

    pub const DYNAMICS: [Condition; 4] = [
        Condition::NetworkUpdater,
        Condition::NetworkFixed,
        Condition::ShadowUpdater,
        Condition::ShadowFixed,
    ];

    pub fn communicates(self) -> bool {
        matches!(self, Condition::NetworkUpdater | Condition::NetworkFixed)
    }

    pub fn updates_trust(self) -> bool {
        matches!(self, Condition::NetworkUpdater | Condition::ShadowUpdater)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::NetworkUpdater => "NetworkUpdater",
            Condition::NetworkFixed => "NetworkFixed",
            Condition::ShadowUpdater => "ShadowUpdater",
            Condition::ShadowFixed => "ShadowFixed",
            Condition::Optimal => "Optimal",
        }
    }

    /// Evidence group under per-pair sharing: each network condition shares
    /// its world data with its shadow.
    pub(crate) fn pair_group(self) -> u64 {
        match self {
            Condition::NetworkUpdater | Condition::ShadowUpdater => 0,
            Condition::NetworkFixed | Condition::ShadowFixed => 1,
            Condition::Optimal => 2,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthMode {
    FixedTrue,
    Sampled { base_rate: Probability },
}

/// Initial belief in `H`: a constant, or the base rate of the sampled truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorBelief {
    Value(Probability),
    BaseRate,
}

impl Serialize for PriorBelief {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PriorBelief::Value(p) => p.serialize(serializer),
            PriorBelief::BaseRate => serializer.serialize_str("base-rate"),
        }
    }
}

impl<'de> Deserialize<'de> for PriorBelief {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PriorVisitor;

        impl Visitor<'_> for PriorVisitor {
            type Value = PriorBelief;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a probability or \"base-rate\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<PriorBelief, E> {
                Probability::new(v).map(PriorBelief::Value).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PriorBelief, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PriorBelief, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<PriorBelief, E> {
                if v == "base-rate" {
                    Ok(PriorBelief::BaseRate)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(PriorVisitor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrustPrior {
    Fixed(Probability),
    Beta { alpha: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub k: usize,
    pub p_rewire: Probability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceSharing {
    PerPair,
    AllConditions,
}

/// One fully resolved, reproducible experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub schema: u32,
    pub p_obj: Probability,
    pub truth: TruthMode,
    pub prior_belief: PriorBelief,
    /// Prior over each source's reliability held by trust updaters.
    pub trust_prior: TrustPrior,
    /// Reliability assumed by fixed-trust agents for every source.
    pub fixed_trust: Probability,
    pub assertion_threshold: Probability,
    pub comm_prob: Probability,
    pub inquiry_prob: Probability,
    pub n_agents: usize,
    pub topology: TopologyConfig,
    pub steps: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub grid_resolution: usize,
    pub conditions: Vec<Condition>,
    pub evidence_sharing: EvidenceSharing,
}

impl SimConfig {
    /// The standard parameterization at objective reliability `p_obj`.
    pub fn with_p_obj(p_obj: f64) -> Result<Self, ConfigError> {
        ConfigLayer {
            p_obj: Some(p_obj),
            ..ConfigLayer::default()
        }
        .resolve()
    }

    /// Initial belief for a run whose truth was drawn from `base_rate`.
    pub fn initial_belief(&self) -> Probability {
        match (self.prior_belief, self.truth) {
            (PriorBelief::Value(p), _) => p,
            (PriorBelief::BaseRate, TruthMode::Sampled { base_rate }) => base_rate,
            // rejected by validation
            (PriorBelief::BaseRate, TruthMode::FixedTrue) => Probability::ONE,
        }
    }

    /// Trust model an agent of `condition` starts with for any source.
    pub fn trust_model_for(&self, condition: Condition) -> TrustModel {
        match condition {
            Condition::Optimal => TrustModel::Fixed(self.p_obj),
            c if c.updates_trust() => match self.trust_prior {
                TrustPrior::Fixed(p) => TrustModel::Fixed(p),
                TrustPrior::Beta { alpha, beta } => {
                    TrustModel::Grid(make_beta_grid(alpha, beta, self.grid_resolution).expect("validated beta prior"))
                }
            },
            _ => TrustModel::Fixed(self.fixed_trust),
        }
    }

    pub fn has_network(&self) -> bool {
        self.conditions.iter().any(|c| c.communicates())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {}", self.schema)));
        }
        if self.assertion_threshold.value() <= 0.5 {
            return Err(invalid(
                "assertion_threshold",
                "must exceed 0.5 so the assertion bands do not overlap",
            ));
        }
        if let TrustPrior::Beta { alpha, beta } = self.trust_prior {
            if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
                return Err(invalid("trust_prior", "beta shape parameters must be positive"));
            }
        }
        if matches!(self.prior_belief, PriorBelief::BaseRate) && matches!(self.truth, TruthMode::FixedTrue) {
            return Err(invalid("prior_belief", "\"base-rate\" requires a sampled truth mode"));
        }
        if self.n_agents == 0 {
            return Err(invalid("n_agents", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if self.grid_resolution < 2 {
            return Err(invalid("grid_resolution", "must be at least 2"));
        }
        if self.conditions.is_empty() {
            return Err(invalid("conditions", "at least one condition is required"));
        }
        if self.conditions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("conditions", "must be distinct and in canonical order"));
        }
        if self.has_network() {
            let TopologyConfig { k, .. } = self.topology;
            if self.n_agents < 3 {
                return Err(invalid("n_agents", "network conditions need at least 3 agents"));
            }
            if k % 2 != 0 || k >= self.n_agents {
                return Err(invalid("topology", format!("k = {k} must be even and below n_agents")));
            }
        }
        Ok(())
    }
}

/// A partial configuration: one layer of overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_obj: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_belief: Option<PriorBelief>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_prior: Option<TrustPrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_trust: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inquiry_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<Condition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_sharing: Option<EvidenceSharing>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_rewire: Option<f64>,
}

fn prob(key: &'static str, v: f64) -> Result<Probability, ConfigError> {
    Probability::new(v).map_err(|_| invalid(key, format!("{v} is outside [0, 1]")))
}

impl ConfigLayer {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// `other` wins wherever it sets a key.
    pub fn merge(mut self, other: &ConfigLayer) -> ConfigLayer {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field.clone(); })*
            };
        }
        take!(
            schema,
            p_obj,
            truth,
            prior_belief,
            trust_prior,
            fixed_trust,
            assertion_threshold,
            comm_prob,
            inquiry_prob,
            n_agents,
            steps,
            runs,
            master_seed,
            grid_resolution,
            conditions,
            evidence_sharing
        );
        if let Some(t) = other.topology {
            let base = self.topology.unwrap_or_default();
            self.topology = Some(TopologyLayer {
                k: t.k.or(base.k),
                p_rewire: t.p_rewire.or(base.p_rewire),
            });
        }
        self
    }

    /// Applies defaults and validates.
    pub fn resolve(&self) -> Result<SimConfig, ConfigError> {
        let p_obj = prob("p_obj", self.p_obj.ok_or(ConfigError::Missing("p_obj"))?)?;
        let topology = self.topology.unwrap_or_default();
        let mut conditions = self.conditions.clone().unwrap_or_else(|| Condition::DYNAMICS.to_vec());
        conditions.sort();
        let before = conditions.len();
        conditions.dedup();
        if conditions.len() != before {
            return Err(invalid("conditions", "listed more than once"));
        }
        let config = SimConfig {
            schema: self.schema.unwrap_or(SCHEMA_VERSION),
            p_obj,
            truth: self.truth.unwrap_or(TruthMode::FixedTrue),
            prior_belief: self.prior_belief.unwrap_or(PriorBelief::Value(Probability::HALF)),
            trust_prior: self.trust_prior.unwrap_or(TrustPrior::Beta { alpha: 2.0, beta: 1.0 }),
            fixed_trust: prob("fixed_trust", self.fixed_trust.unwrap_or(0.66))?,
            assertion_threshold: prob("assertion_threshold", self.assertion_threshold.unwrap_or(0.8))?,
            comm_prob: prob("comm_prob", self.comm_prob.unwrap_or(0.25))?,
            inquiry_prob: prob("inquiry_prob", self.inquiry_prob.unwrap_or(0.1))?,
            n_agents: self.n_agents.unwrap_or(50),
            topology: TopologyConfig {
                k: topology.k.unwrap_or(2),
                p_rewire: prob("topology", topology.p_rewire.unwrap_or(0.2))?,
            },
            steps: self.steps.unwrap_or(50),
            runs: self.runs.unwrap_or(100),
            master_seed: self.master_seed.unwrap_or(0),
            grid_resolution: self.grid_resolution.unwrap_or(1000),
            conditions,
            evidence_sharing: self.evidence_sharing.unwrap_or(EvidenceSharing::AllConditions),
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<&SimConfig> for ConfigLayer {
    fn from(c: &SimConfig) -> Self {
        ConfigLayer {
            schema: Some(c.schema),
            p_obj: Some(c.p_obj.value()),
            truth: Some(c.truth),
            prior_belief: Some(c.prior_belief),
            trust_prior: Some(c.trust_prior),
            fixed_trust: Some(c.fixed_trust.value()),
            assertion_threshold: Some(c.assertion_threshold.value()),
            comm_prob: Some(c.comm_prob.value()),
            inquiry_prob: Some(c.inquiry_prob.value()),
            n_agents: Some(c.n_agents),
            topology: Some(TopologyLayer {
                k: Some(c.topology.k),
                p_rewire: Some(c.topology.p_rewire.value()),
            }),
            steps: Some(c.steps),
            runs: Some(c.runs),
            master_seed: Some(c.master_seed),
            grid_resolution: Some(c.grid_resolution),
            conditions: Some(c.conditions.clone()),
            evidence_sharing: Some(c.evidence_sharing),
        }
    }
}

/// Reads a JSON config file, layering `overrides` on top of it.
pub fn parse_config(path: &Path, overrides: &ConfigLayer) -> Result<SimConfig, ConfigError> {
    ConfigLayer::from_path(path)?.merge(overrides).resolve()
}

/// Parses inline JSON text as a complete configuration.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    ConfigLayer::from_json(text)?.resolve()
}
