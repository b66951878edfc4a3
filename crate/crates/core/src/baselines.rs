//! Comparator policies: MRT beamforming, random phases, the system without
//! energy users and an amplify-and-forward relay in place of the surface.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::CompositeFactors;
use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexMat, ComplexVec};
use crate::sca::{Beamformers, SlotDecision, SlotInstance, SlotTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Proposed,
    Mrt,
    RandomPhase,
    NoEu,
    AfRelay,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] =
        [Self::Proposed, Self::Mrt, Self::RandomPhase, Self::NoEu, Self::AfRelay];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Mrt => "mrt",
            Self::RandomPhase => "random-phase",
            Self::NoEu => "no-eu",
            Self::AfRelay => "af-relay",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy '{s}'")))
    }
}

/// `w_i = √p_i · h_i/‖h_i‖`, `v_j = √q_j · g_j/‖g_j‖` on the composite
/// channels at `rho`. A zero channel gets a zero beamformer.
pub fn mrt_beamformers(
    factors: &CompositeFactors,
    rho: &ComplexVec,
    iu_powers: &[f64],
    eu_powers: &[f64],
) -> Result<Beamformers> {
    if iu_powers.len() != factors.u.len() || eu_powers.len() != factors.v.len() {
        return Err(Error::DimensionMismatch {
            op: "mrt_beamformers",
            left: (factors.u.len(), factors.v.len()),
            right: (iu_powers.len(), eu_powers.len()),
        });
    }
    if let Some(p) = iu_powers.iter().chain(eu_powers).find(|p| !(**p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative power share {p}")));
    }
    let n_s = factors.n_s();
    if rho.len() != n_s {
        return Err(Error::DimensionMismatch { op: "mrt_beamformers", left: (n_s, 1), right: (rho.len(), 1) });
    }
    let direction = |h: ComplexVec, p: f64| {
        let n = h.norm();
        if n > 0.0 {
            h.scale(p.sqrt() / n)
        } else {
            ComplexVec::zeros(h.len())
        }
    };
    Ok(Beamformers {
        w: (0..iu_powers.len()).map(|i| direction(factors.iu_channel(i, rho), iu_powers[i])).collect(),
        v: (0..eu_powers.len()).map(|j| direction(factors.eu_channel(j, rho), eu_powers[j])).collect(),
    })
}

/// Power each EU needs under MRT to harvest exactly `q`: `q/‖g_j‖²`.
pub(crate) fn eu_needs(gains: &[f64], q: f64) -> Vec<f64> {
    gains
        .iter()
        .map(|&g| {
            if q <= 0.0 {
                0.0
            } else if g > 0.0 {
                // a hair above the boundary so rounding cannot land below q
                q / g * (1.0 + 1e-9)
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Buffered streams, heaviest first (ties by index), at most `m`.
fn top_weights(weights: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Equal split of `budget` over `n_iu` streams and the EUs, with each EU
/// share raised to its need. `None` when the needs alone exceed the budget.
pub(crate) fn split_with_needs(budget: f64, n_iu: usize, needs: &[f64]) -> Option<(f64, Vec<f64>)> {
    let users = n_iu + needs.len();
    if users == 0 {
        return Some((0.0, Vec::new()));
    }
    let share = budget / users as f64;
    let eu: Vec<f64> = needs.iter().map(|&n| share.max(n)).collect();
    let used: f64 = eu.iter().sum();
    if used > budget {
        return None;
    }
    let iu = if n_iu > 0 { (budget - used) / n_iu as f64 } else { 0.0 };
    Some((iu, eu))
}

/// MRT baseline: the heaviest buffered streams get an equal share, EUs get
/// at least what they need, and streams that still miss the SNR threshold
/// are dropped one at a time (weakest first) so their power goes to the
/// rest.
pub fn mrt_policy(inst: &SlotInstance, rho: &ComplexVec) -> Result<SlotDecision> {
    inst.validate()?;
    let gains: Vec<f64> = (0..inst.n_eu()).map(|j| inst.factors.eu_channel(j, rho).norm_sqr()).collect();
    let needs = eu_needs(&gains, inst.q);
    let mut chosen = top_weights(&inst.weights, inst.m);
    loop {
        let Some((iu_share, eu)) = split_with_needs(inst.p0, chosen.len(), &needs) else {
            return Ok(SlotDecision::idle(inst, rho.clone(), false, SlotTrace::default()));
        };
        let iu: Vec<f64> = (0..inst.n_iu()).map(|i| if chosen.contains(&i) { iu_share } else { 0.0 }).collect();
        let bf = mrt_beamformers(&inst.factors, rho, &iu, &eu)?;
        let snr = bf.snr(inst, rho);
        let weakest = chosen
            .iter()
            .copied()
            .filter(|&i| snr[i] < inst.gamma_th)
            .min_by(|&a, &b| snr[a].total_cmp(&snr[b]).then(b.cmp(&a)));
        match weakest {
            Some(i) => chosen.retain(|&c| c != i),
            None => {
                let mut scheduled = vec![false; inst.n_iu()];
                chosen.iter().for_each(|&i| scheduled[i] = true);
                let alpha = scheduled.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
                return Ok(SlotDecision {
                    alpha_relaxed: alpha,
                    scheduled,
                    rho: rho.clone(),
                    beamformers: bf,
                    feasible: true,
                    trace: SlotTrace::default(),
                });
            }
        }
    }
}

/// End-to-end SNR of a two-hop amplify-and-forward link.
pub fn af_cascade_snr(gamma1: f64, gamma2: f64) -> f64 {
    if gamma2.is_infinite() {
        return gamma1;
    }
    if gamma1.is_infinite() {
        return gamma2;
    }
    gamma1 * gamma2 / (gamma1 + gamma2 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfRelayConfig {
    /// Relay antennas; the relay sits where the surface would be.
    pub antennas: usize,
    /// Fraction of `P0` spent by the relay; the AP keeps the rest.
    pub relay_share: f64,
}

impl Default for AfRelayConfig {
    fn default() -> Self {
        Self { antennas: 4, relay_share: 0.5 }
    }
}

impl AfRelayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relay_share > 0.0 && self.relay_share < 1.0) {
            return Err(Error::InvalidConfig { key: "relay_share".into(), reason: "must lie in (0, 1)".into() });
        }
        if self.antennas == 0 {
            return Err(Error::InvalidConfig { key: "relay_antennas".into(), reason: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// Relay-side channels: AP to relay (`N_r × N_t`) and relay to each IU.
#[derive(Debug, Clone, PartialEq)]
pub struct AfLinks {
    pub g: ComplexMat,
    pub h_r: Vec<ComplexVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfOutcome {
    pub scheduled: Vec<bool>,
    pub snr: Vec<f64>,
    pub harvested: Vec<f64>,
    pub ap_power: f64,
    pub relay_power: f64,
    pub feasible: bool,
}

fn to_nalgebra(m: &ComplexMat) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

/// Largest singular value squared of the AP-relay link: the first-hop gain
/// when the AP beams along the dominant right singular vector and the relay
/// combines along the matching left one.
pub fn af_first_hop_gain(g: &ComplexMat) -> f64 {
    let s = to_nalgebra(g).singular_values();
    s.iter().copied().fold(0.0, f64::max).powi(2)
}

/// One slot with an AF relay: streams are served on orthogonal resources,
/// each split equally over the AP and relay budgets; EUs harvest from the
/// AP's direct MRT beams only.
pub fn af_relay_slot(inst: &SlotInstance, links: &AfLinks, cfg: &AfRelayConfig) -> Result<AfOutcome> {
    inst.validate()?;
    cfg.validate()?;
    if links.h_r.len() != inst.n_iu() {
        return Err(Error::DimensionMismatch { op: "af_relay_slot", left: (inst.n_iu(), 1), right: (links.h_r.len(), 1) });
    }
    let ap_budget = (1.0 - cfg.relay_share) * inst.p0;
    let relay_budget = cfg.relay_share * inst.p0;
    let gains: Vec<f64> = inst.factors.g_b.iter().map(|g| g.norm_sqr()).collect();
    let needs = eu_needs(&gains, inst.q);
    let hop1 = af_first_hop_gain(&links.g) / inst.noise_power;
    let mut chosen = top_weights(&inst.weights, inst.m);
    let n = inst.n_iu();
    loop {
        let Some((iu_share, eu)) = split_with_needs(ap_budget, chosen.len(), &needs) else {
            return Ok(AfOutcome {
                scheduled: vec![false; n],
                snr: vec![0.0; n],
                harvested: vec![0.0; inst.n_eu()],
                ap_power: 0.0,
                relay_power: 0.0,
                feasible: false,
            });
        };
        let relay_each = if chosen.is_empty() { 0.0 } else { relay_budget / chosen.len() as f64 };
        let mut snr = vec![0.0; n];
        for &i in &chosen {
            let g2 = relay_each * links.h_r[i].norm_sqr() / inst.noise_power;
            snr[i] = af_cascade_snr(iu_share * hop1, g2);
        }
        let weakest = chosen
            .iter()
            .copied()
            .filter(|&i| snr[i] < inst.gamma_th)
            .min_by(|&a, &b| snr[a].total_cmp(&snr[b]).then(b.cmp(&a)));
        if let Some(i) = weakest {
            chosen.retain(|&c| c != i);
            continue;
        }
        let mut scheduled = vec![false; n];
        chosen.iter().for_each(|&i| scheduled[i] = true);
        let harvested = eu.iter().zip(&gains).map(|(p, g)| p * g).collect();
        let ap_power = eu.iter().sum::<f64>() + iu_share * chosen.len() as f64;
        return Ok(AfOutcome {
            scheduled,
            snr,
            harvested,
            ap_power,
            relay_power: relay_each * chosen.len() as f64,
            feasible: true,
        });
    }
}
