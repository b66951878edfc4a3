//! Parameter sweeps: one base scenario, one swept parameter, several
//! policies, one CSV row per (policy, value).

use std::io::Write;
use std::path::{Path, PathBuf};

use ris_aoi_core::baselines::BaselineKind;
use ris_aoi_core::sim::{compare, ComparisonRow, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::config::{db_to_lin, dbm_to_w, w_to_dbm, ConfigError, FileConfig};

pub const CSV_HEADER: [&str; 9] = [
    "policy",
    "swept_param",
    "value",
    "mean_sum_aoi",
    "time_avg_sum_aoi",
    "delivery_rate",
    "mean_harvest_dbm",
    "infeasible_slots",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptParam {
    #[serde(rename = "gamma_th_db")]
    GammaThDb,
    #[serde(rename = "p0_w")]
    P0W,
    #[serde(rename = "n_s")]
    NS,
    #[serde(rename = "q_dbm")]
    QDbm,
    #[serde(rename = "d_br_m")]
    DBrM,
}

impl SweptParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GammaThDb => "gamma_th_db",
            Self::P0W => "p0_w",
            Self::NS => "n_s",
            Self::QDbm => "q_dbm",
            Self::DBrM => "d_br_m",
        }
    }

    /// `base` with this parameter set to `value` (in the key's unit).
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = base.clone();
        match self {
            Self::GammaThDb => cfg.gamma_th = db_to_lin(value),
            Self::P0W => cfg.p0 = value,
            Self::QDbm => cfg.q = dbm_to_w(value),
            Self::DBrM => cfg.d_br = value,
            Self::NS => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(ConfigError::Invalid { key: "values".into(), reason: format!("n_s must be a positive integer, got {value}") });
                }
                cfg.n_s = value as usize;
            }
        }
        cfg.validate()
            .map_err(|e| ConfigError::Invalid { key: self.as_str().into(), reason: format!("at value {value}: {e}") })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub policies: Vec<BaselineKind>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub base: FileConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
    pub policies: Vec<BaselineKind>,
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: SweepFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if file.values.is_empty() {
            return Err(ConfigError::Invalid { key: "values".into(), reason: "must not be empty".into() });
        }
        if file.policies.is_empty() {
            return Err(ConfigError::Invalid { key: "policies".into(), reason: "must not be empty".into() });
        }
        let base = file.base.resolve()?;
        let spec = Self { param: file.param, values: file.values, base, policies: file.policies, output: file.output };
        spec.configs()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn configs(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        self.values.iter().map(|&v| self.param.apply(&self.base, v)).collect()
    }
}

/// One CSV line, numbers already rounded to what the file holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: BaselineKind,
    pub swept_param: String,
    pub value: f64,
    pub mean_sum_aoi: f64,
    pub time_avg_sum_aoi: f64,
    pub delivery_rate: f64,
    pub mean_harvest_dbm: f64,
    pub infeasible_slots: u64,
    pub seed: u64,
}

/// Fixed-point text with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let digits = x.abs().log10().floor() as i32 + 1;
    let decimals = (6 - digits).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can add a digit (9.999995 -> 10.00000)
    let s_digits = s.trim_start_matches('-').split('.').next().map_or(0, |p| p.trim_start_matches('0').len()) as i32;
    if s_digits > digits.max(0) && decimals > 0 {
        return format!("{x:.*}", decimals - 1);
    }
    s
}

fn rounded(x: f64) -> f64 {
    sig6(x).parse().expect("sig6 writes a parseable number")
}

impl SweepRow {
    fn new(param: SweptParam, value: f64, cfg: &ScenarioConfig, row: &ComparisonRow) -> Self {
        let m = &row.metrics;
        let harvest = if m.mean_harvest.is_empty() {
            0.0
        } else {
            m.mean_harvest.iter().sum::<f64>() / m.mean_harvest.len() as f64
        };
        Self {
            policy: row.policy,
            swept_param: param.as_str().into(),
            value: rounded(value),
            mean_sum_aoi: rounded(m.mean_sum_aoi),
            time_avg_sum_aoi: rounded(m.time_avg_sum_aoi),
            delivery_rate: rounded(m.delivery_rate),
            mean_harvest_dbm: rounded(w_to_dbm(harvest)),
            infeasible_slots: m.infeasible_slots,
            seed: cfg.seed,
        }
    }

    fn fields(&self) -> [String; 9] {
        [
            self.policy.to_string(),
            self.swept_param.clone(),
            sig6(self.value),
            sig6(self.mean_sum_aoi),
            sig6(self.time_avg_sum_aoi),
            sig6(self.delivery_rate),
            sig6(self.mean_harvest_dbm),
            self.infeasible_slots.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Runs the sweep. Rows are policy-major, then in value order.
pub fn run_sweep(spec: &SweepSpec) -> anyhow::Result<Vec<SweepRow>> {
    let configs = spec.configs()?;
    let rows = compare(&configs, &spec.policies)?;
    let mut out = Vec::with_capacity(rows.len());
    for &policy in &spec.policies {
        for r in rows.iter().filter(|r| r.policy == policy) {
            out.push(SweepRow::new(spec.param, spec.values[r.point], &configs[r.point], r));
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(12.345678), "12.3457");
        assert_eq!(sig6(0.00123456789), "0.00123457");
        assert_eq!(sig6(3.0), "3.00000");
        assert_eq!(sig6(-15.0), "-15.0000");
        assert_eq!(sig6(1234567.0), "1234567");
        assert_eq!(sig6(9.9999996), "10.0000");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn spec_requires_values_and_known_params() {
        let err = SweepSpec::parse("param = \"gamma_th_db\"\nvalues = []\npolicies = [\"mrt\"]").unwrap_err();
        assert!(err.to_string().contains("values"));
        assert!(SweepSpec::parse("param = \"bandwidth\"\nvalues = [1]\npolicies = [\"mrt\"]").is_err());
        let err = SweepSpec::parse("param = \"n_s\"\nvalues = [2.5]\npolicies = [\"mrt\"]").unwrap_err();
        assert!(err.to_string().contains("n_s"), "{err}");
        let spec = SweepSpec::parse("param = \"p0_w\"\nvalues = [1, 2]\npolicies = [\"mrt\"]\n[base]\nn_s = 8").unwrap();
        assert_eq!(spec.configs().unwrap()[1].p0, 2.0);
        assert_eq!(spec.base.n_s, 8);
    }

    #[test]
    fn csv_round_trips() {
        let spec = SweepSpec::parse(
            "param = \"gamma_th_db\"\nvalues = [20, 30, 40]\npolicies = [\"mrt\", \"no-eu\"]\n[base]\nn_s = 4\nslots = 10\nrepetitions = 2",
        )
        .unwrap();
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[3].policy, BaselineKind::NoEu);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}
