//! Per-slot scheduling, passive and active beamforming by successive convex
//! approximation, alternating between the phase subproblem and the
//! beamforming subproblem.

mod build;
mod solve;

pub use build::{build_p5, build_p6, verify_surrogate, P5Layout, P6Layout, SurrogateKind, SurrogateReport};
pub use solve::{
    algorithm1_phase_schedule, algorithm2_beamforming, alternating_optimize, optimize_beamforming, restore_feasibility,
    PhaseOutput,
};

use serde::{Deserialize, Serialize};

use crate::channel::CompositeFactors;
use crate::conic::{SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexVec, RngStream};

/// Everything the optimizer needs to know about one slot.
#[derive(Debug, Clone)]
pub struct SlotInstance {
    pub factors: CompositeFactors,
    pub n_t: usize,
    /// `(A_i − z_i) k_i`; zero for streams with an empty buffer.
    pub weights: Vec<f64>,
    pub noise_power: f64,
    /// Linear SNR threshold.
    pub gamma_th: f64,
    /// Energy-harvesting threshold in watts.
    pub q: f64,
    pub p0: f64,
    pub m: usize,
}

impl SlotInstance {
    pub fn n_iu(&self) -> usize {
        self.weights.len()
    }

    pub fn n_eu(&self) -> usize {
        self.factors.v.len()
    }

    pub fn n_s(&self) -> usize {
        self.factors.n_s()
    }

    /// Received power a scheduled stream needs: `γ_th σ²`.
    pub fn snr_floor(&self) -> f64 {
        self.gamma_th * self.noise_power
    }

    pub fn buffered(&self) -> Vec<usize> {
        (0..self.n_iu()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Sum of the `M` largest weights, an upper bound on the slot objective.
    pub fn objective_bound(&self) -> f64 {
        let mut w = self.weights.clone();
        w.sort_by(|a, b| b.total_cmp(a));
        w.iter().take(self.m).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.u.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                op: "SlotInstance",
                left: (self.factors.u.len(), 1),
                right: (self.weights.len(), 1),
            });
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative or NaN stream weight {w}")));
        }
        if !(self.noise_power > 0.0 && self.p0 > 0.0 && self.gamma_th >= 0.0 && self.q >= 0.0) {
            return Err(Error::InvalidArgument("noise, power and thresholds must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Information beamformers `w_i` (one per IU) and energy beamformers `v_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformers {
    pub w: Vec<ComplexVec>,
    pub v: Vec<ComplexVec>,
}

impl Beamformers {
    pub fn zeros(n_iu: usize, n_eu: usize, n_t: usize) -> Self {
        Self { w: vec![ComplexVec::zeros(n_t); n_iu], v: vec![ComplexVec::zeros(n_t); n_eu] }
    }

    pub fn power(&self) -> f64 {
        self.w.iter().chain(&self.v).map(|b| b.norm_sqr()).sum()
    }

    /// Realized SNR of every IU under phases `rho`.
    pub fn snr(&self, inst: &SlotInstance, rho: &ComplexVec) -> Vec<f64> {
        (0..inst.n_iu())
            .map(|i| {
                let h = inst.factors.iu_channel(i, rho);
                h.dot_conj_unchecked(&self.w[i]).norm_sqr() / inst.noise_power
            })
            .collect()
    }

    /// Harvested power of every EU under phases `rho`.
    pub fn harvested(&self, inst: &SlotInstance, rho: &ComplexVec) -> Vec<f64> {
        (0..inst.n_eu())
            .map(|j| {
                let g = inst.factors.eu_channel(j, rho);
                g.dot_conj_unchecked(&self.v[j]).norm_sqr()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    /// Initial penalty is `penalty_scale · (Σ weights + 1)`.
    pub penalty_scale: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub eps_ao: f64,
    pub s1: usize,
    pub s2: usize,
    pub s_a: usize,
    /// Target for `max_n |1 − |ρ_n||` before the penalty stops growing.
    pub unit_modulus_tol: f64,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            penalty_scale: 1e-3,
            penalty_growth: 10.0,
            penalty_rounds: 6,
            eps1: 1e-4,
            eps2: 1e-4,
            eps_ao: 1e-4,
            s1: 30,
            s2: 30,
            s_a: 10,
            unit_modulus_tol: 1e-3,
            solver_tol: 1e-8,
            solver_max_iters: 100,
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::InvalidConfig { key: key.into(), reason: reason.into() });
        for (k, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps_ao", self.eps_ao),
            ("penalty_scale", self.penalty_scale),
            ("unit_modulus_tol", self.unit_modulus_tol),
            ("solver_tol", self.solver_tol),
        ] {
            if !(v > 0.0) {
                return bad(k, "must be positive");
            }
        }
        if !(self.penalty_growth > 1.0) {
            return bad("penalty_growth", "must exceed 1");
        }
        for (k, v) in [
            ("s1", self.s1),
            ("s2", self.s2),
            ("s_a", self.s_a),
            ("penalty_rounds", self.penalty_rounds),
            ("solver_max_iters", self.solver_max_iters),
        ] {
            if v == 0 {
                return bad(k, "must be at least 1");
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol_feas: self.solver_tol,
            tol_gap: self.solver_tol,
            max_iters: self.solver_max_iters,
            ..SolverSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    /// Phase/schedule subproblem at penalty level `penalty`, outer round `round`.
    Phase { round: usize, penalty: f64 },
    Beamforming,
    /// Margin maximization that restores exact feasibility.
    Restore,
}

/// One convex solve inside the slot optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub stage: Stage,
    pub ao_round: usize,
    /// Identifies the inner SCA loop this solve belongs to.
    pub loop_id: usize,
    pub iteration: usize,
    /// True (penalized) objective at the new iterate.
    pub objective: f64,
    pub solver_iterations: usize,
    pub optimal: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub solves: Vec<SolveRecord>,
    /// Objective value at the start of every inner loop, keyed by `loop_id`.
    pub loop_starts: Vec<f64>,
    /// Relaxed objective `Σ weight·α` after every AO round.
    pub ao_objective: Vec<f64>,
    pub ao_rounds: usize,
    pub penalty_rounds: usize,
    /// Largest unit-modulus violation after each phase-block call.
    pub unit_modulus_violation: Vec<f64>,
    pub restorations: usize,
    /// Streams removed from the rounded schedule because no feasible
    /// beamformer could be found for them.
    pub dropped: Vec<usize>,
}

impl SlotTrace {
    pub(crate) fn record(&mut self, rec: SolveRecord) {
        self.solves.push(rec);
    }

    pub(crate) fn open_loop(&mut self, start: f64) -> usize {
        self.loop_starts.push(start);
        self.loop_starts.len() - 1
    }

    pub fn solver_iterations(&self) -> usize {
        self.solves.iter().map(|s| s.solver_iterations).sum()
    }

    /// Longest inner loop of the given stage kind.
    pub fn max_inner_iterations(&self, phase: bool) -> usize {
        let mut counts = std::collections::BTreeMap::new();
        for s in &self.solves {
            let is_phase = matches!(s.stage, Stage::Phase { .. });
            if is_phase == phase && s.stage != Stage::Restore {
                *counts.entry(s.loop_id).or_insert(0usize) += 1;
            }
        }
        counts.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub alpha_relaxed: Vec<f64>,
    pub scheduled: Vec<bool>,
    /// Unit-modulus phase vector (`ρᴴ` holds the reflection coefficients).
    pub rho: ComplexVec,
    pub beamformers: Beamformers,
    pub feasible: bool,
    pub trace: SlotTrace,
}

impl SlotDecision {
    /// The "transmit nothing" decision used when even an empty schedule
    /// cannot meet the harvesting constraints.
    pub fn idle(inst: &SlotInstance, rho: ComplexVec, feasible: bool, trace: SlotTrace) -> Self {
        Self {
            alpha_relaxed: vec![0.0; inst.n_iu()],
            scheduled: vec![false; inst.n_iu()],
            rho,
            beamformers: Beamformers::zeros(inst.n_iu(), inst.n_eu(), inst.n_t),
            feasible,
            trace,
        }
    }
}

/// Picks up to `m` buffered streams (`weight > 0`) in order of descending
/// relaxed `α`, then descending weight, then ascending index. `α` is compared
/// on a grid of `ALPHA_ZERO`, so values equal up to solver noise fall through
/// to the weight. Streams whose relaxed `α` is numerically zero are never
/// picked.
pub fn round_schedule(alpha: &[f64], weights: &[f64], m: usize) -> Vec<bool> {
    let order = priority_order(alpha, weights);
    let mut out = vec![false; alpha.len()];
    for &i in order.iter().take(m) {
        out[i] = true;
    }
    out
}

/// Candidate streams for rounding, highest priority first.
pub(crate) fn priority_order(alpha: &[f64], weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..alpha.len())
        .filter(|&i| weights[i] > 0.0 && alpha[i] > ALPHA_ZERO)
        .collect();
    let level = |i: usize| (alpha[i] / ALPHA_ZERO).round() as i64;
    idx.sort_by(|&a, &b| {
        level(b)
            .cmp(&level(a))
            .then(weights[b].total_cmp(&weights[a]))
            .then(a.cmp(&b))
    });
    idx
}

/// Relaxed schedule values at or below this are read as "not scheduled".
pub const ALPHA_ZERO: f64 = 1e-6;

/// I.i.d. uniform phases, `|ρ_n| = 1`.
pub fn random_phases(n_s: usize, rng: &mut RngStream) -> ComplexVec {
    ComplexVec::from_fn(n_s, |_| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.uniform()))
}

/// Scales every entry onto the unit circle; zeros map to `1`.
pub fn project_unit_modulus(rho: &ComplexVec) -> ComplexVec {
    ComplexVec::from_fn(rho.len(), |n| {
        let r = rho[n].norm();
        if r > 0.0 {
            rho[n] / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

pub fn unit_modulus_violation(rho: &ComplexVec) -> f64 {
    rho.iter().map(|r| (1.0 - r.norm()).abs()).fold(0.0, f64::max)
}

pub(crate) fn status_ok(s: SolveStatus) -> bool {
    s == SolveStatus::Optimal
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::channel::{draw_channels, ChannelRealization, NetworkSizes, PathLossParams, PlanarLayout};

    pub fn reference_params(sizes: &NetworkSizes, d_br: f64) -> PathLossParams {
        let layout = PlanarLayout {
            d_br,
            d_bi: vec![31.0; sizes.n_iu],
            d_bj: vec![3.0; sizes.n_eu],
            eu_offset: 1.0,
        };
        PathLossParams {
            reference_loss: 1e-3,
            reference_distance: 1.0,
            n_bi: 2.2,
            n_ri: 2.2,
            n_bj: 2.2,
            n_rj: 2.2,
            n_br: 3.5,
            d_bi: layout.d_bi.clone(),
            d_ri: layout.ris_to_iu(),
            d_bj: layout.d_bj.clone(),
            d_rj: layout.ris_to_eu().unwrap(),
            d_br,
        }
    }

    pub fn realization(sizes: NetworkSizes, seed: u64) -> ChannelRealization {
        draw_channels(&reference_params(&sizes, 3.0), &sizes, &RngStream::new(seed, 0)).unwrap()
    }

    /// A random slot at the reference geometry.
    pub fn random_instance(seed: u64, n_s: usize, n_eu: usize, gamma_db: f64, q_dbm: f64) -> SlotInstance {
        let sizes = NetworkSizes { n_t: 4, n_s, n_iu: 3, n_eu };
        let real = realization(sizes, seed);
        let mut rng = RngStream::new(seed, 1);
        let weights = (0..3).map(|_| if rng.bernoulli(0.8) { 1.0 + (10.0 * rng.uniform()).floor() } else { 0.0 }).collect();
        SlotInstance {
            factors: CompositeFactors::new(&real).unwrap(),
            n_t: 4,
            weights,
            noise_power: 1e-10,
            gamma_th: 10f64.powf(gamma_db / 10.0),
            q: 1e-3 * 10f64.powf(q_dbm / 10.0),
            p0: 3.0,
            m: 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_follows_relaxed_values() {
        assert_eq!(round_schedule(&[0.9, 0.8, 0.1], &[1.0, 1.0, 1.0], 2), vec![true, true, false]);
    }

    #[test]
    fn rounding_breaks_ties_by_weight() {
        assert_eq!(round_schedule(&[0.5, 0.5, 0.5], &[7.0, 3.0, 5.0], 2), vec![true, false, true]);
        // then by index
        assert_eq!(round_schedule(&[0.5, 0.5, 0.5], &[4.0, 4.0, 4.0], 2), vec![true, true, false]);
        // solver noise in α does not outrank the weight
        assert_eq!(round_schedule(&[1.0 - 1e-9, 1.0, 1.0], &[5.0, 2.0, 3.0], 2), vec![true, false, true]);
        assert_eq!(round_schedule(&[0.9, 1.0, 1.0], &[5.0, 2.0, 3.0], 2), vec![false, true, true]);
    }

    #[test]
    fn rounding_skips_empty_buffers_and_zero_alpha() {
        assert_eq!(round_schedule(&[1.0, 1.0, 1.0], &[0.0, 2.0, 3.0], 3), vec![false, true, true]);
        assert_eq!(round_schedule(&[0.0, 0.7, 0.0], &[2.0, 2.0, 3.0], 2), vec![false, true, false]);
    }

    /// Every support of size at most `m` drawn from the buffered streams.
    fn feasible_supports(weights: &[f64], m: usize) -> Vec<Vec<bool>> {
        let n = weights.len();
        (0u32..1 << n)
            .map(|mask| (0..n).map(|i| mask >> i & 1 == 1).collect::<Vec<bool>>())
            .filter(|s| s.iter().filter(|b| **b).count() <= m)
            .filter(|s| s.iter().zip(weights).all(|(b, w)| !*b || *w > 0.0))
            .collect()
    }

    proptest! {
        #[test]
        fn rounding_lands_on_a_feasible_vertex(
            alpha in proptest::collection::vec(0.0f64..1.0, 1..7),
            wseed in proptest::collection::vec(0u8..4, 7),
            m in 0usize..7,
        ) {
            let n = alpha.len();
            let weights: Vec<f64> = wseed[..n].iter().map(|w| *w as f64).collect();
            let out = round_schedule(&alpha, &weights, m);
            prop_assert!(feasible_supports(&weights, m).contains(&out));
            // maximal: either m picked or every eligible stream picked
            let eligible = (0..n).filter(|&i| weights[i] > 0.0 && alpha[i] > ALPHA_ZERO).count();
            prop_assert_eq!(out.iter().filter(|b| **b).count(), eligible.min(m));
        }
    }

    #[test]
    fn random_phases_are_unit_modulus_and_centered() {
        let mut rng = RngStream::new(5, 0);
        let rho = random_phases(16, &mut rng);
        assert!(rho.iter().all(|r| (r.norm() - 1.0).abs() <= 1e-15));
        let mut sum = Complex64::new(0.0, 0.0);
        let draws = 100_000;
        for _ in 0..draws / 4 {
            for r in random_phases(4, &mut rng).iter() {
                sum += r;
            }
        }
        sum /= draws as f64;
        assert!(sum.re.abs() < 0.02 && sum.im.abs() < 0.02, "{sum}");
        let a = random_phases(8, &mut RngStream::new(9, 9));
        let b = random_phases(8, &mut RngStream::new(9, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(ScaConfig::default().validate().is_ok());
        let bad = ScaConfig { penalty_growth: 1.0, ..ScaConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { key, .. }) if key == "penalty_growth"));
        let bad = ScaConfig { eps2: 0.0, ..ScaConfig::default() };
        assert!(bad.validate().is_err());
    }
}
