//! Slot-by-slot simulation: arrivals, channel draws, the policy decision,
//! delivery and harvesting, and the AoI update, repeated over Monte-Carlo
//! repetitions.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aoi::{AoiState, SlotOutcome};
use crate::baselines::{af_relay_slot, mrt_policy, AfLinks, AfRelayConfig, BaselineKind};
use crate::channel::{draw_channels, ChannelRealization, CompositeFactors, NetworkSizes, PathLossParams, PlanarLayout};
use crate::error::{Error, Result};
use crate::numerics::{ComplexVec, RngStream};
use crate::sca::{
    alternating_optimize, optimize_beamforming, random_phases, Beamformers, ScaConfig, SlotDecision, SlotInstance,
};

// Stream labels; every repetition and slot derives its own child stream.
const STREAM_ARRIVALS: u64 = 11;
const STREAM_CHANNELS: u64 = 12;
const STREAM_PHASES: u64 = 13;

/// One experiment. Everything is in linear units (watts, metres, linear
/// SNR); unit conversion happens at the configuration boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub n_s: usize,
    pub n_iu: usize,
    pub n_eu: usize,
    pub m: usize,
    /// Path loss at the reference distance, linear (`A0`).
    pub reference_loss: f64,
    pub reference_distance: f64,
    pub n_bi: f64,
    pub n_ri: f64,
    pub n_bj: f64,
    pub n_rj: f64,
    pub n_br: f64,
    pub d_bi: Vec<f64>,
    pub d_bj: Vec<f64>,
    pub d_br: f64,
    pub eu_offset: f64,
    /// Explicit RIS-user distances; derived from the planar layout when absent.
    pub d_ri: Option<Vec<f64>>,
    pub d_rj: Option<Vec<f64>>,
    pub noise_power: f64,
    pub gamma_th: f64,
    pub q: f64,
    pub p0: f64,
    pub arrival_prob: Vec<f64>,
    pub slots: usize,
    pub repetitions: usize,
    pub policy: BaselineKind,
    pub sca: ScaConfig,
    pub relay: AfRelayConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_t: 4,
            n_s: 16,
            n_iu: 3,
            n_eu: 3,
            m: 2,
            reference_loss: 1e-3,
            reference_distance: 1.0,
            n_bi: 2.2,
            n_ri: 2.2,
            n_bj: 2.2,
            n_rj: 2.2,
            n_br: 3.5,
            d_bi: vec![31.0; 3],
            d_bj: vec![3.0; 3],
            d_br: 3.0,
            eu_offset: 1.0,
            d_ri: None,
            d_rj: None,
            noise_power: 1e-10,
            gamma_th: 1e4,
            q: 1e-4,
            p0: 3.0,
            arrival_prob: vec![0.6; 3],
            slots: 200,
            repetitions: 5,
            policy: BaselineKind::Proposed,
            sca: ScaConfig::default(),
            relay: AfRelayConfig::default(),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn sizes(&self) -> NetworkSizes {
        NetworkSizes { n_t: self.n_t, n_s: self.n_s, n_iu: self.n_iu, n_eu: self.n_eu }
    }

    pub fn path_loss(&self) -> Result<PathLossParams> {
        let layout = PlanarLayout {
            d_br: self.d_br,
            d_bi: self.d_bi.clone(),
            d_bj: self.d_bj.clone(),
            eu_offset: self.eu_offset,
        };
        let d_ri = match &self.d_ri {
            Some(d) => d.clone(),
            None => layout.ris_to_iu(),
        };
        let d_rj = match &self.d_rj {
            Some(d) => d.clone(),
            None => layout.ris_to_eu()?,
        };
        Ok(PathLossParams {
            reference_loss: self.reference_loss,
            reference_distance: self.reference_distance,
            n_bi: self.n_bi,
            n_ri: self.n_ri,
            n_bj: self.n_bj,
            n_rj: self.n_rj,
            n_br: self.n_br,
            d_bi: self.d_bi.clone(),
            d_ri,
            d_bj: self.d_bj.clone(),
            d_rj,
            d_br: self.d_br,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::InvalidConfig { key: key.into(), reason });
        for (k, v) in [("n_t", self.n_t), ("n_s", self.n_s), ("n_iu", self.n_iu), ("slots", self.slots), ("repetitions", self.repetitions)] {
            if v == 0 {
                return bad(k, "must be at least 1".into());
            }
        }
        if self.m > self.n_iu {
            return bad("m", format!("must not exceed the number of IUs ({})", self.n_iu));
        }
        for (k, v) in [("noise_power", self.noise_power), ("p0", self.p0), ("reference_loss", self.reference_loss), ("reference_distance", self.reference_distance)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(k, format!("must be positive, got {v}"));
            }
        }
        for (k, v) in [("gamma_th", self.gamma_th), ("q", self.q)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(k, format!("must be nonnegative, got {v}"));
            }
        }
        if self.arrival_prob.len() != self.n_iu {
            return bad("arrival_prob", format!("needs {} entries, got {}", self.n_iu, self.arrival_prob.len()));
        }
        if let Some(p) = self.arrival_prob.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return bad("arrival_prob", format!("{p} is not a probability"));
        }
        if self.d_bi.len() != self.n_iu {
            return bad("d_bi", format!("needs {} entries, got {}", self.n_iu, self.d_bi.len()));
        }
        if self.d_bj.len() != self.n_eu {
            return bad("d_bj", format!("needs {} entries, got {}", self.n_eu, self.d_bj.len()));
        }
        self.path_loss()
            .and_then(|p| p.validate(&self.sizes()))
            .or_else(|e| bad("geometry", e.to_string()))?;
        self.sca.validate()?;
        self.relay.validate()?;
        Ok(())
    }

    /// The channel realization every policy sees in slot `t` of repetition `rep`.
    pub fn slot_channels(&self, rep: usize, t: usize) -> Result<ChannelRealization> {
        draw_channels(&self.path_loss()?, &self.sizes(), &channel_stream(self.seed, rep, t))
    }

    /// Initial phases handed to the phase-aware policies in slot `t`.
    pub fn slot_phases(&self, rep: usize, t: usize) -> ComplexVec {
        random_phases(self.n_s, &mut RngStream::derived(self.seed, &[STREAM_PHASES, rep as u64, t as u64]))
    }

    /// The optimizer's view of slot `t` of repetition `rep` for given weights.
    pub fn slot_instance(&self, rep: usize, t: usize, weights: Vec<f64>) -> Result<SlotInstance> {
        self.instance(&self.slot_channels(rep, t)?, weights)
    }

    fn instance(&self, real: &ChannelRealization, weights: Vec<f64>) -> Result<SlotInstance> {
        Ok(SlotInstance {
            factors: CompositeFactors::new(real)?,
            n_t: self.n_t,
            weights,
            noise_power: self.noise_power,
            gamma_th: self.gamma_th,
            q: self.q,
            p0: self.p0,
            m: self.m,
        })
    }

    /// Relay links at the RIS position: the first `N_r` rows of the same
    /// draw (the draw is prefix-stable in the element count).
    fn relay_links(&self, rep: usize, t: usize) -> Result<AfLinks> {
        let sizes = NetworkSizes { n_s: self.relay.antennas, ..self.sizes() };
        let real = draw_channels(&self.path_loss()?, &sizes, &channel_stream(self.seed, rep, t))?;
        Ok(AfLinks { g: real.g, h_r: real.h_r })
    }
}

fn channel_stream(seed: u64, rep: usize, t: usize) -> RngStream {
    RngStream::derived(seed, &[STREAM_CHANNELS, rep as u64, t as u64])
}

/// Everything logged about one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub arrivals: Vec<bool>,
    pub weights: Vec<f64>,
    pub scheduled: Vec<bool>,
    pub delivered: Vec<bool>,
    pub snr: Vec<f64>,
    pub harvested: Vec<f64>,
    /// Ages after the update, `A_i(t+1)`.
    pub ages: Vec<u64>,
    pub feasible: bool,
    pub ao_rounds: usize,
    pub penalty_rounds: usize,
    pub max_inner_phase: usize,
    pub max_inner_beam: usize,
    /// Interior-point iterations of every convex solve, in order.
    pub solver_iterations: Vec<usize>,
    pub seconds: f64,
    /// Phases and beamformers actually used (absent for the relay).
    pub rho: Option<ComplexVec>,
    pub beamformers: Option<Beamformers>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    /// `Σ_t Σ_i A_i(t)` over the horizon.
    pub sum_aoi: f64,
    pub time_avg_sum_aoi: f64,
    pub arrivals: u64,
    pub deliveries: u64,
    pub infeasible_slots: u64,
    /// Mean harvested power per EU, watts.
    pub mean_harvest: Vec<f64>,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: u64,
    pub solver_iterations: u64,
    pub max_solver_iterations: usize,
    pub max_ao_rounds: usize,
    pub max_inner_phase: usize,
    pub max_inner_beam: usize,
    pub max_penalty_rounds: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: BaselineKind,
    /// Mean over repetitions of the horizon-summed sum AoI.
    pub mean_sum_aoi: f64,
    /// Mean over repetitions of `(1/T) Σ_t Σ_i A_i(t)`.
    pub time_avg_sum_aoi: f64,
    /// Deliveries over arrivals, pooled across repetitions.
    pub delivery_rate: f64,
    pub infeasible_slots: u64,
    /// Mean harvested power per EU, watts, averaged over repetitions.
    pub mean_harvest: Vec<f64>,
    pub solver: SolverStats,
    pub reps: Vec<RepMetrics>,
}

impl RunMetrics {
    pub fn per_rep_time_avg(&self) -> Vec<f64> {
        self.reps.iter().map(|r| r.time_avg_sum_aoi).collect()
    }

    /// `A_i(t+1)` for every slot: `[rep][stream][slot]`.
    pub fn age_traces(&self) -> Vec<Vec<Vec<u64>>> {
        self.reps
            .iter()
            .map(|r| {
                let n = r.slots.first().map_or(0, |s| s.ages.len());
                (0..n).map(|i| r.slots.iter().map(|s| s.ages[i]).collect()).collect()
            })
            .collect()
    }
}

struct Decision {
    scheduled: Vec<bool>,
    snr: Vec<f64>,
    harvested: Vec<f64>,
    feasible: bool,
    rho: Option<ComplexVec>,
    beamformers: Option<Beamformers>,
    trace: Option<crate::sca::SlotTrace>,
}

fn from_slot_decision(inst: &SlotInstance, d: SlotDecision, n_eu: usize) -> Decision {
    let snr = d.beamformers.snr(inst, &d.rho);
    let mut harvested = d.beamformers.harvested(inst, &d.rho);
    // the no-EU variant still reports a column per physical EU
    harvested.resize(n_eu, 0.0);
    Decision {
        scheduled: d.scheduled,
        snr,
        harvested,
        feasible: d.feasible,
        rho: Some(d.rho),
        beamformers: Some(d.beamformers),
        trace: Some(d.trace),
    }
}

fn decide(cfg: &ScenarioConfig, rep: usize, t: usize, weights: Vec<f64>) -> Result<Decision> {
    let real = cfg.slot_channels(rep, t)?;
    let rho0 = cfg.slot_phases(rep, t);
    match cfg.policy {
        BaselineKind::Proposed => {
            let inst = cfg.instance(&real, weights)?;
            Ok(from_slot_decision(&inst, alternating_optimize(&inst, &rho0, &cfg.sca)?, cfg.n_eu))
        }
        BaselineKind::NoEu => {
            let inst = cfg.instance(&real.without_energy_users(), weights)?;
            Ok(from_slot_decision(&inst, alternating_optimize(&inst, &rho0, &cfg.sca)?, cfg.n_eu))
        }
        BaselineKind::RandomPhase => {
            let inst = cfg.instance(&real, weights)?;
            Ok(from_slot_decision(&inst, optimize_beamforming(&inst, &rho0, &cfg.sca)?, cfg.n_eu))
        }
        BaselineKind::Mrt => {
            let inst = cfg.instance(&real, weights)?;
            Ok(from_slot_decision(&inst, mrt_policy(&inst, &rho0)?, cfg.n_eu))
        }
        BaselineKind::AfRelay => {
            let inst = cfg.instance(&real, weights)?;
            let out = af_relay_slot(&inst, &cfg.relay_links(rep, t)?, &cfg.relay)?;
            Ok(Decision {
                scheduled: out.scheduled,
                snr: out.snr,
                harvested: out.harvested,
                feasible: out.feasible,
                rho: None,
                beamformers: None,
                trace: None,
            })
        }
    }
}

fn run_rep(cfg: &ScenarioConfig, rep: usize) -> Result<RepMetrics> {
    let mut state = AoiState::new(&cfg.arrival_prob)?;
    let mut arrivals_rng = RngStream::derived(cfg.seed, &[STREAM_ARRIVALS, rep as u64]);
    let mut slots = Vec::with_capacity(cfg.slots);
    let mut harvest_sum = vec![0.0; cfg.n_eu];
    let (mut sum_aoi, mut arrivals, mut deliveries, mut infeasible) = (0u64, 0u64, 0u64, 0u64);
    for t in 0..cfg.slots {
        let arrived = state.sample_arrivals(&mut arrivals_rng);
        arrivals += arrived.iter().filter(|a| **a).count() as u64;
        let weights = state.weights();
        let start = Instant::now();
        let d = decide(cfg, rep, t, weights.clone())?;
        let seconds = start.elapsed().as_secs_f64();
        let (ao_rounds, penalty_rounds, inner_phase, inner_beam, solver_iterations) = match &d.trace {
            Some(tr) => (
                tr.ao_rounds,
                tr.penalty_rounds,
                tr.max_inner_iterations(true),
                tr.max_inner_iterations(false),
                tr.solves.iter().map(|s| s.solver_iterations).collect(),
            ),
            None => (0, 0, 0, 0, Vec::new()),
        };
        check_caps(&cfg.sca, ao_rounds, penalty_rounds, inner_phase, inner_beam, &solver_iterations);
        if !d.feasible {
            infeasible += 1;
        }
        let outcome = SlotOutcome::evaluate(&state, d.scheduled, d.snr, cfg.gamma_th, d.harvested)?;
        state = state.step(&outcome)?;
        let ages: Vec<u64> = state.streams.iter().map(|s| s.age).collect();
        sum_aoi += ages.iter().sum::<u64>();
        deliveries += outcome.delivered.iter().filter(|d| **d).count() as u64;
        for (acc, e) in harvest_sum.iter_mut().zip(&outcome.harvested) {
            *acc += e;
        }
        slots.push(SlotRecord {
            slot: t,
            arrivals: arrived,
            weights,
            scheduled: outcome.scheduled,
            delivered: outcome.delivered,
            snr: outcome.snr,
            harvested: outcome.harvested,
            ages,
            feasible: d.feasible,
            ao_rounds,
            penalty_rounds,
            max_inner_phase: inner_phase,
            max_inner_beam: inner_beam,
            solver_iterations,
            seconds,
            rho: d.rho,
            beamformers: d.beamformers,
        });
    }
    let t = cfg.slots as f64;
    Ok(RepMetrics {
        sum_aoi: sum_aoi as f64,
        time_avg_sum_aoi: sum_aoi as f64 / t,
        arrivals,
        deliveries,
        infeasible_slots: infeasible,
        mean_harvest: harvest_sum.iter().map(|h| h / t).collect(),
        slots,
    })
}

/// Iteration caps are part of the contract; exceeding one is a bug.
fn check_caps(sca: &ScaConfig, ao: usize, penalty: usize, phase: usize, beam: usize, solver: &[usize]) {
    assert!(ao <= sca.s_a, "AO rounds {ao} exceed S_A = {}", sca.s_a);
    assert!(penalty <= sca.penalty_rounds * sca.s_a, "penalty rounds {penalty} exceed their cap");
    assert!(phase <= sca.s1, "phase loop ran {phase} iterations, S1 = {}", sca.s1);
    assert!(beam <= sca.s2, "beamforming loop ran {beam} iterations, S2 = {}", sca.s2);
    if let Some(&it) = solver.iter().max() {
        assert!(it <= sca.solver_max_iters, "solver ran {it} iterations, cap {}", sca.solver_max_iters);
    }
}

/// Runs every repetition (in parallel) and aggregates in repetition order.
pub fn run(cfg: &ScenarioConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let reps: Vec<RepMetrics> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_rep(cfg, r))
        .collect::<Result<_>>()?;
    let n = reps.len() as f64;
    let mut solver = SolverStats::default();
    for s in reps.iter().flat_map(|r| &r.slots) {
        solver.solves += s.solver_iterations.len() as u64;
        solver.solver_iterations += s.solver_iterations.iter().sum::<usize>() as u64;
        solver.max_solver_iterations = solver.max_solver_iterations.max(s.solver_iterations.iter().copied().max().unwrap_or(0));
        solver.max_ao_rounds = solver.max_ao_rounds.max(s.ao_rounds);
        solver.max_inner_phase = solver.max_inner_phase.max(s.max_inner_phase);
        solver.max_inner_beam = solver.max_inner_beam.max(s.max_inner_beam);
        solver.max_penalty_rounds = solver.max_penalty_rounds.max(s.penalty_rounds);
        solver.solve_seconds += s.seconds;
    }
    let arrivals: u64 = reps.iter().map(|r| r.arrivals).sum();
    let deliveries: u64 = reps.iter().map(|r| r.deliveries).sum();
    Ok(RunMetrics {
        policy: cfg.policy,
        mean_sum_aoi: reps.iter().map(|r| r.sum_aoi).sum::<f64>() / n,
        time_avg_sum_aoi: reps.iter().map(|r| r.time_avg_sum_aoi).sum::<f64>() / n,
        delivery_rate: if arrivals > 0 { deliveries as f64 / arrivals as f64 } else { 0.0 },
        infeasible_slots: reps.iter().map(|r| r.infeasible_slots).sum(),
        mean_harvest: (0..cfg.n_eu).map(|j| reps.iter().map(|r| r.mean_harvest[j]).sum::<f64>() / n).collect(),
        solver,
        reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Index into the configuration list.
    pub point: usize,
    pub policy: BaselineKind,
    pub metrics: RunMetrics,
}

/// Runs every configuration under every policy. All runs of one
/// configuration share its seed, so repetitions are paired across policies.
/// Rows come out point-major, in the order of `policies`.
pub fn compare(configs: &[ScenarioConfig], policies: &[BaselineKind]) -> Result<Vec<ComparisonRow>> {
    let jobs: Vec<(usize, BaselineKind)> =
        (0..configs.len()).flat_map(|p| policies.iter().map(move |&k| (p, k))).collect();
    jobs.par_iter()
        .map(|&(point, policy)| {
            let cfg = ScenarioConfig { policy, ..configs[point].clone() };
            Ok(ComparisonRow { point, policy, metrics: run(&cfg)? })
        })
        .collect()
}
