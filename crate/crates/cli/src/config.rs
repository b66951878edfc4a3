//! Scenario files: TOML, one key per parameter, units spelled out in the key
//! name (`_db`, `_dbm`, `_m`, `_w`). Everything is converted to linear units
//! once, here.
//!
//! Quantities that are usually given in decibels also accept a linear key
//! (`noise_w` next to `noise_dbm`); giving both is an error. Serialization
//! writes the linear keys so a load/save/load cycle is exact.

use std::path::Path;

use ris_aoi_core::baselines::{AfRelayConfig, BaselineKind};
use ris_aoi_core::sca::ScaConfig;
use ris_aoi_core::sim::ScenarioConfig;
use ris_aoi_core::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("`{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Self::Invalid { key: key.into(), reason: reason.into() }
    }

    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// A number or one number per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    One(f64),
    Each(Vec<f64>),
}

impl PerUser {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            Self::One(x) => vec![*x; n],
            Self::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iu: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_eu: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_loss_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_loss_lin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_distance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_bi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_ri: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_bj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_rj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_br: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_bi_m: Option<PerUser>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_bj_m: Option<PerUser>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_br_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eu_offset_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_ri_m: Option<PerUser>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_rj_m: Option<PerUser>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_th_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_th_lin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_dbm: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_prob: Option<PerUser>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<BaselineKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay_antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay_share: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sca: Option<ScaConfig>,
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

fn pick(log_key: &str, log: Option<f64>, lin_key: &str, lin: Option<f64>, conv: fn(f64) -> f64) -> Result<Option<f64>, ConfigError> {
    match (log, lin) {
        (Some(_), Some(_)) => Err(ConfigError::invalid(lin_key, format!("given together with `{log_key}`"))),
        (Some(x), None) => {
            if !x.is_finite() {
                return Err(ConfigError::invalid(log_key, "must be finite"));
            }
            Ok(Some(conv(x)))
        }
        (None, v) => Ok(v),
    }
}

/// File key that sets a given scenario field, for error messages.
fn file_key(field: &str) -> &str {
    match field {
        "reference_loss" => "reference_loss_db",
        "reference_distance" => "reference_distance_m",
        "noise_power" => "noise_dbm",
        "gamma_th" => "gamma_th_db",
        "q" => "q_dbm",
        "p0" => "p0_w",
        "d_bi" => "d_bi_m",
        "d_bj" => "d_bj_m",
        "relay_antennas" => "relay_antennas",
        other => other,
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Resolves against the defaults and validates.
    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let d = ScenarioConfig::default();
        let n_iu = self.n_iu.unwrap_or(d.n_iu);
        let n_eu = self.n_eu.unwrap_or(d.n_eu);
        let per_iu = |key: &str, v: &Option<PerUser>, default: f64| -> Result<Vec<f64>, ConfigError> {
            let out = v.as_ref().map_or(vec![default; n_iu], |p| p.expand(n_iu));
            if out.len() != n_iu {
                return Err(ConfigError::invalid(key, format!("needs {n_iu} entries, got {}", out.len())));
            }
            Ok(out)
        };
        let per_eu = |key: &str, v: &Option<PerUser>, default: f64| -> Result<Vec<f64>, ConfigError> {
            let out = v.as_ref().map_or(vec![default; n_eu], |p| p.expand(n_eu));
            if out.len() != n_eu {
                return Err(ConfigError::invalid(key, format!("needs {n_eu} entries, got {}", out.len())));
            }
            Ok(out)
        };
        let d_ri = match &self.d_ri_m {
            Some(_) => Some(per_iu("d_ri_m", &self.d_ri_m, 0.0)?),
            None => None,
        };
        let d_rj = match &self.d_rj_m {
            Some(_) => Some(per_eu("d_rj_m", &self.d_rj_m, 0.0)?),
            None => None,
        };
        let mut relay = AfRelayConfig::default();
        if let Some(a) = self.relay_antennas {
            relay.antennas = a;
        }
        if let Some(s) = self.relay_share {
            relay.relay_share = s;
        }
        let cfg = ScenarioConfig {
            n_t: self.n_t.unwrap_or(d.n_t),
            n_s: self.n_s.unwrap_or(d.n_s),
            n_iu,
            n_eu,
            m: self.m.unwrap_or(d.m),
            reference_loss: pick("reference_loss_db", self.reference_loss_db, "reference_loss_lin", self.reference_loss_lin, db_to_lin)?
                .unwrap_or(d.reference_loss),
            reference_distance: self.reference_distance_m.unwrap_or(d.reference_distance),
            n_bi: self.exponent_bi.unwrap_or(d.n_bi),
            n_ri: self.exponent_ri.unwrap_or(d.n_ri),
            n_bj: self.exponent_bj.unwrap_or(d.n_bj),
            n_rj: self.exponent_rj.unwrap_or(d.n_rj),
            n_br: self.exponent_br.unwrap_or(d.n_br),
            d_bi: per_iu("d_bi_m", &self.d_bi_m, d.d_bi[0])?,
            d_bj: per_eu("d_bj_m", &self.d_bj_m, d.d_bj[0])?,
            d_br: self.d_br_m.unwrap_or(d.d_br),
            eu_offset: self.eu_offset_m.unwrap_or(d.eu_offset),
            d_ri,
            d_rj,
            noise_power: pick("noise_dbm", self.noise_dbm, "noise_w", self.noise_w, dbm_to_w)?.unwrap_or(d.noise_power),
            gamma_th: pick("gamma_th_db", self.gamma_th_db, "gamma_th_lin", self.gamma_th_lin, db_to_lin)?
                .unwrap_or(d.gamma_th),
            q: pick("q_dbm", self.q_dbm, "q_w", self.q_w, dbm_to_w)?.unwrap_or(d.q),
            p0: pick("p0_dbm", self.p0_dbm, "p0_w", self.p0_w, dbm_to_w)?.unwrap_or(d.p0),
            arrival_prob: per_iu("arrival_prob", &self.arrival_prob, d.arrival_prob[0])?,
            slots: self.slots.unwrap_or(d.slots),
            repetitions: self.repetitions.unwrap_or(d.repetitions),
            policy: self.policy.unwrap_or(d.policy),
            sca: self.sca.unwrap_or(d.sca),
            relay,
            seed: self.seed.unwrap_or(d.seed),
        };
        cfg.validate().map_err(|e| match e {
            CoreError::InvalidConfig { key, reason } => ConfigError::invalid(file_key(&key), reason),
            other => ConfigError::invalid("geometry", other.to_string()),
        })?;
        Ok(cfg)
    }

    /// Every field of `cfg`, in linear-unit keys.
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            n_t: Some(cfg.n_t),
            n_s: Some(cfg.n_s),
            n_iu: Some(cfg.n_iu),
            n_eu: Some(cfg.n_eu),
            m: Some(cfg.m),
            reference_loss_lin: Some(cfg.reference_loss),
            reference_distance_m: Some(cfg.reference_distance),
            exponent_bi: Some(cfg.n_bi),
            exponent_ri: Some(cfg.n_ri),
            exponent_bj: Some(cfg.n_bj),
            exponent_rj: Some(cfg.n_rj),
            exponent_br: Some(cfg.n_br),
            d_bi_m: Some(PerUser::Each(cfg.d_bi.clone())),
            d_bj_m: Some(PerUser::Each(cfg.d_bj.clone())),
            d_br_m: Some(cfg.d_br),
            eu_offset_m: Some(cfg.eu_offset),
            d_ri_m: cfg.d_ri.clone().map(PerUser::Each),
            d_rj_m: cfg.d_rj.clone().map(PerUser::Each),
            noise_w: Some(cfg.noise_power),
            gamma_th_lin: Some(cfg.gamma_th),
            q_w: Some(cfg.q),
            p0_w: Some(cfg.p0),
            arrival_prob: Some(PerUser::Each(cfg.arrival_prob.clone())),
            slots: Some(cfg.slots),
            repetitions: Some(cfg.repetitions),
            policy: Some(cfg.policy),
            seed: Some(cfg.seed),
            relay_antennas: Some(cfg.relay.antennas),
            relay_share: Some(cfg.relay.relay_share),
            sca: Some(cfg.sca),
            ..Self::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all TOML-representable")
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    FileConfig::parse(&text)?.resolve()
}

pub fn save_config(cfg: &ScenarioConfig) -> String {
    FileConfig::from_scenario(cfg).to_toml()
}
