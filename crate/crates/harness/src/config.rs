//! Versioned JSON scenario configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qkdvss::adversary::{MixedAdversary, Structure};
use qkdvss::distproc::{CascadeParams, PipelineParams};
use qkdvss::gf2::BitString;
use qkdvss::protocols::{CorruptionSpec, GeneralAdversary, ProtocolKind, Scenario};
use qkdvss::qkdsim::ModuleBehavior;
use qkdvss::simnet::{PartyId, StrategyKind};
use qkdvss::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub protocol: ProtocolKind,
    #[serde(default)]
    pub seed: u64,
    /// Module pairs.
    #[serde(default = "one")]
    pub n: usize,
    /// Post-processing units at Alice and Bob.
    #[serde(default = "four")]
    pub s: usize,
    #[serde(default = "four")]
    pub r: usize,
    /// Tolerated corrupted pairs and units per lab.
    #[serde(default)]
    pub t: usize,
    #[serde(default = "one")]
    pub t_a: usize,
    #[serde(default = "one")]
    pub t_b: usize,
    #[serde(default = "default_pulses")]
    pub pulses: usize,
    #[serde(default = "default_qber")]
    pub qber: f64,
    #[serde(default = "one_f")]
    pub p_detect: f64,
    #[serde(default = "default_design_qber")]
    pub design_qber: f64,
    #[serde(default = "default_passes")]
    pub cascade_passes: usize,
    #[serde(default = "default_threshold")]
    pub abort_threshold: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_eps")]
    pub eps_cor: f64,
    #[serde(default = "default_eps")]
    pub eps_sec: f64,
    #[serde(default = "default_policy")]
    pub key_length_policy: String,
    #[serde(default)]
    pub corruption: Vec<CorruptionEntry>,
    /// Per module pair, in order; missing entries are honest.
    #[serde(default)]
    pub modules: Vec<ModuleBehavior>,
    /// Memory planted in memory-attack modules, as a 0/1 string.
    #[serde(default)]
    pub memory: Option<String>,
    #[serde(default)]
    pub structures: Option<StructureConfig>,
    /// Skip the check that corruption fits the structures. For negative tests.
    #[serde(default)]
    pub allow_illegal_corruption: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionEntry {
    pub party: PartyId,
    /// `passive`, or any built-in strategy name.
    pub strategy: StrategyName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Passive,
    #[serde(untagged)]
    Active(StrategyKind),
}

/// Maximal sets, parties numbered from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedConfig {
    pub sigma: Vec<Vec<usize>>,
    /// Defaults to `sigma`.
    #[serde(default)]
    pub omega: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default)]
    pub pairs: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub lab_a: Option<MixedConfig>,
    #[serde(default)]
    pub lab_b: Option<MixedConfig>,
    #[serde(default)]
    pub prune_aborted: bool,
}

fn one() -> usize {
    1
}
fn four() -> usize {
    4
}
fn one_f() -> f64 {
    1.0
}
fn default_pulses() -> usize {
    2000
}
fn default_qber() -> f64 {
    0.02
}
fn default_design_qber() -> f64 {
    CascadeParams::default().design_qber
}
fn default_passes() -> usize {
    CascadeParams::default().passes
}
fn default_threshold() -> f64 {
    PipelineParams::default().abort_threshold
}
fn default_eps() -> f64 {
    1e-10
}
fn default_epsilon() -> f64 {
    1e-9
}
fn default_policy() -> String {
    "entropy".into()
}

impl ScenarioConfig {
    /// A minimal config for `protocol` with every other field at its default.
    pub fn minimal(protocol: ProtocolKind) -> Self {
        serde_json::from_value(serde_json::json!({ "version": CONFIG_VERSION, "protocol": protocol }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema-level checks; the protocol driver validates the rest.
    pub fn check(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidParameter(format!("config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        if self.key_length_policy != "entropy" {
            return Err(Error::InvalidParameter(format!("unknown key length policy {:?}", self.key_length_policy)));
        }
        for (name, e) in [("epsilon", self.epsilon), ("eps_cor", self.eps_cor), ("eps_sec", self.eps_sec)] {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {e} outside (0, 1)")));
            }
        }
        if self.eps_cor + self.eps_sec > self.epsilon {
            return Err(Error::InvalidParameter(format!(
                "eps_cor + eps_sec = {} exceeds epsilon = {}",
                self.eps_cor + self.eps_sec,
                self.epsilon
            )));
        }
        let labs = self.structures.as_ref();
        for (lab, units, t, general) in [
            ("A", self.s, self.t_a, labs.and_then(|l| l.lab_a.as_ref())),
            ("B", self.r, self.t_b, labs.and_then(|l| l.lab_b.as_ref())),
        ] {
            let shared = !matches!(self.protocol, ProtocolKind::Protocol1 | ProtocolKind::Naive);
            if general.is_none() && shared && 3 * t >= units {
                return Err(Error::Infeasible(format!("lab {lab} tolerates {t} of {units} units, needs 3t < {units}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            abort_threshold: self.abort_threshold,
            cascade: CascadeParams { design_qber: self.design_qber, passes: self.cascade_passes },
            eps_cor: self.eps_cor,
            eps_pa: self.eps_sec,
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let memory = self
            .memory
            .as_deref()
            .map(|m| m.parse::<BitString>().map_err(|_| Error::InvalidParameter(format!("memory {m:?} is not a bit string"))))
            .transpose()?;
        let general = self.structures.as_ref().map(|g| self.general(g)).transpose()?;
        Ok(Scenario {
            pairs: self.n,
            units_a: self.s,
            units_b: self.r,
            t: self.t,
            t_a: self.t_a,
            t_b: self.t_b,
            pulses: self.pulses,
            qber: self.qber,
            p_detect: self.p_detect,
            params: self.params(),
            seed: self.seed,
            corruption: self
                .corruption
                .iter()
                .map(|c| {
                    let spec = match &c.strategy {
                        StrategyName::Passive => CorruptionSpec::Passive,
                        StrategyName::Active(k) => CorruptionSpec::Active(k.clone()),
                    };
                    (c.party, spec)
                })
                .collect(),
            modules: self.modules.clone(),
            memory,
            general,
            enforce_corruption: !self.allow_illegal_corruption,
        })
    }

    fn general(&self, g: &StructureConfig) -> Result<GeneralAdversary> {
        let mixed = |units: usize, m: &MixedConfig| -> Result<MixedAdversary> {
            let sigma = Structure::from_lists(units, &m.sigma)?;
            let omega = Structure::from_lists(units, m.omega.as_ref().unwrap_or(&m.sigma))?;
            MixedAdversary::new(sigma, omega)
        };
        Ok(GeneralAdversary {
            pairs: g.pairs.as_ref().map(|p| Structure::from_lists(self.n, p)).transpose()?,
            lab_a: g.lab_a.as_ref().map(|m| mixed(self.s, m)).transpose()?,
            lab_b: g.lab_b.as_ref().map(|m| mixed(self.r, m)).transpose()?,
            prune_aborted: g.prune_aborted,
        })
    }
}
