use super::build::{build_beam_problem, build_p5, build_p6, BeamMode};
use super::{
    priority_order, project_unit_modulus, status_ok, unit_modulus_violation, Beamformers, ScaConfig, SlotDecision,
    SlotInstance, SlotTrace, SolveRecord, Stage,
};
use crate::baselines::{eu_needs, mrt_beamformers, split_with_needs};
use crate::conic::solve;
use crate::error::Result;
use crate::numerics::ComplexVec;

/// Upper cap on the normalized margin sought by the restoration problem.
const RESTORE_MARGIN_CAP: f64 = 0.01;

fn weighted(inst: &SlotInstance, alpha: &[f64]) -> f64 {
    inst.weights.iter().zip(alpha).map(|(w, a)| w * a).sum()
}

fn penalized(inst: &SlotInstance, alpha: &[f64], rho: &ComplexVec, c: f64) -> f64 {
    weighted(inst, alpha) + c * rho.iter().map(|r| r.norm_sqr() - 1.0).sum::<f64>()
}

/// Pulls entries that drifted outside the unit disc (by solver tolerance)
/// back onto it.
fn clamp_modulus(rho: &ComplexVec) -> ComplexVec {
    ComplexVec::from_fn(rho.len(), |n| {
        let r = rho[n].norm();
        if r > 1.0 {
            rho[n] / r
        } else {
            rho[n]
        }
    })
}

fn clamp_power(mut bf: Beamformers, p0: f64) -> Beamformers {
    let p = bf.power();
    if p > p0 {
        let s = (p0 / p).sqrt();
        for b in bf.w.iter_mut().chain(bf.v.iter_mut()) {
            *b = b.scale(s);
        }
    }
    bf
}

fn close(new: f64, prev: f64, eps: f64) -> bool {
    (new - prev).abs() <= eps * prev.abs().max(new.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutput {
    pub rho: ComplexVec,
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub penalty: f64,
}

/// Penalty-SCA over `(α, ρ)` for fixed beamformers.
pub fn algorithm1_phase_schedule(
    inst: &SlotInstance,
    bf: &Beamformers,
    rho_start: &ComplexVec,
    alpha_start: &[f64],
    cfg: &ScaConfig,
    trace: &mut SlotTrace,
    ao_round: usize,
) -> Result<PhaseOutput> {
    let start_obj = weighted(inst, alpha_start);
    let mut rho = clamp_modulus(rho_start);
    let mut alpha = alpha_start.to_vec();
    let mut c = cfg.penalty_scale * (inst.weights.iter().sum::<f64>() + 1.0);
    let settings = cfg.solver();
    let bound = inst.objective_bound();
    if start_obj >= bound * (1.0 - 1e-12) && unit_modulus_violation(&rho) <= cfg.unit_modulus_tol {
        // nothing left to gain in either the schedule or the penalty
        return Ok(PhaseOutput { rho, alpha, objective: start_obj, penalty: c });
    }
    for round in 0..cfg.penalty_rounds {
        trace.penalty_rounds += 1;
        let mut prev = penalized(inst, &alpha, &rho, c);
        let loop_id = trace.open_loop(prev);
        for it in 0..cfg.s1 {
            let (p, layout) = build_p5(inst, bf, &rho, c)?;
            let sol = solve(&p, &settings)?;
            let stage = Stage::Phase { round, penalty: c };
            if !status_ok(sol.status) {
                log::debug!("phase subproblem returned {:?}", sol.status);
                trace.record(SolveRecord {
                    stage,
                    ao_round,
                    loop_id,
                    iteration: it,
                    objective: prev,
                    solver_iterations: sol.iterations,
                    optimal: false,
                });
                break;
            }
            rho = clamp_modulus(&layout.rho(&sol.x));
            alpha = layout.alpha(&sol.x, inst.n_iu());
            let obj = penalized(inst, &alpha, &rho, c);
            trace.record(SolveRecord {
                stage,
                ao_round,
                loop_id,
                iteration: it,
                objective: obj,
                solver_iterations: sol.iterations,
                optimal: true,
            });
            let done = close(obj, prev, cfg.eps1);
            prev = obj;
            if done {
                break;
            }
        }
        if unit_modulus_violation(&rho) <= cfg.unit_modulus_tol {
            break;
        }
        c *= cfg.penalty_growth;
    }
    let objective = weighted(inst, &alpha);
    if objective < start_obj {
        // never hand a worse schedule to the next block
        return Ok(PhaseOutput {
            rho: clamp_modulus(rho_start),
            alpha: alpha_start.to_vec(),
            objective: start_obj,
            penalty: c,
        });
    }
    Ok(PhaseOutput { rho, alpha, objective, penalty: c })
}

/// SCA over `(α, w, v)` for fixed phases.
pub fn algorithm2_beamforming(
    inst: &SlotInstance,
    rho: &ComplexVec,
    bf_start: &Beamformers,
    alpha_start: &[f64],
    cfg: &ScaConfig,
    trace: &mut SlotTrace,
    ao_round: usize,
) -> Result<(Beamformers, Vec<f64>, f64)> {
    let mut bf = bf_start.clone();
    let mut alpha = alpha_start.to_vec();
    let mut prev = weighted(inst, &alpha);
    if prev >= inst.objective_bound() * (1.0 - 1e-12) {
        return Ok((bf, alpha, prev));
    }
    let settings = cfg.solver();
    let loop_id = trace.open_loop(prev);
    for it in 0..cfg.s2 {
        let (p, layout) = build_p6(inst, rho, &bf)?;
        let sol = solve(&p, &settings)?;
        if !status_ok(sol.status) {
            log::debug!("beamforming subproblem returned {:?}", sol.status);
            trace.record(SolveRecord {
                stage: Stage::Beamforming,
                ao_round,
                loop_id,
                iteration: it,
                objective: prev,
                solver_iterations: sol.iterations,
                optimal: false,
            });
            break;
        }
        bf = clamp_power(layout.beamformers(&sol.x), inst.p0);
        alpha = layout.alpha(&sol.x, inst.n_iu());
        let obj = weighted(inst, &alpha);
        trace.record(SolveRecord {
            stage: Stage::Beamforming,
            ao_round,
            loop_id,
            iteration: it,
            objective: obj,
            solver_iterations: sol.iterations,
            optimal: true,
        });
        let done = close(obj, prev, cfg.eps2);
        prev = obj;
        if done {
            break;
        }
    }
    Ok((bf, alpha, prev))
}

/// Smallest normalized margin (`SNR/γ_th − 1`, `E/Q − 1`) over the
/// scheduled streams and all EUs; `+∞` when nothing is constrained.
pub(crate) fn true_margin(inst: &SlotInstance, rho: &ComplexVec, bf: &Beamformers, scheduled: &[bool]) -> f64 {
    let mut m = f64::INFINITY;
    if inst.gamma_th > 0.0 {
        let snr = bf.snr(inst, rho);
        for i in 0..inst.n_iu() {
            if scheduled[i] {
                m = m.min(snr[i] / inst.gamma_th - 1.0);
            }
        }
    }
    if inst.q > 0.0 {
        for e in bf.harvested(inst, rho) {
            m = m.min(e / inst.q - 1.0);
        }
    }
    m
}

fn constraints_hold(inst: &SlotInstance, rho: &ComplexVec, bf: &Beamformers, scheduled: &[bool]) -> bool {
    true_margin(inst, rho, bf, scheduled) >= 0.0 && bf.power() <= inst.p0 * (1.0 + 1e-9)
}

/// Maximizes the smallest normalized margin of the rate rows of `scheduled`
/// and all harvesting rows over the beamformers, for fixed phases. Returns
/// beamformers meeting every constraint exactly, or `None`.
pub fn restore_feasibility(
    inst: &SlotInstance,
    rho: &ComplexVec,
    bf_start: &Beamformers,
    scheduled: &[bool],
    cfg: &ScaConfig,
    trace: &mut SlotTrace,
    ao_round: usize,
) -> Result<Option<Beamformers>> {
    let mut bf = clamp_power(bf_start.clone(), inst.p0);
    for (i, w) in bf.w.iter_mut().enumerate() {
        if !scheduled[i] {
            *w = ComplexVec::zeros(inst.n_t);
        }
    }
    if constraints_hold(inst, rho, &bf, scheduled) {
        return Ok(Some(bf));
    }
    trace.restorations += 1;
    let settings = cfg.solver();
    let mut prev = true_margin(inst, rho, &bf, scheduled).min(RESTORE_MARGIN_CAP);
    let loop_id = trace.open_loop(prev);
    for it in 0..cfg.s2 {
        let mode = BeamMode::Margin { scheduled, cap: RESTORE_MARGIN_CAP };
        let (p, layout) = build_beam_problem(inst, rho, &bf, mode)?;
        let sol = solve(&p, &settings)?;
        let ok = status_ok(sol.status);
        let t = layout.margin_var.map_or(prev, |v| sol.x[v]);
        trace.record(SolveRecord {
            stage: Stage::Restore,
            ao_round,
            loop_id,
            iteration: it,
            objective: if ok { t } else { prev },
            solver_iterations: sol.iterations,
            optimal: ok,
        });
        if !ok {
            return Ok(None);
        }
        bf = clamp_power(layout.beamformers(&sol.x), inst.p0);
        if constraints_hold(inst, rho, &bf, scheduled) {
            return Ok(Some(bf));
        }
        if it > 0 && close(t, prev, cfg.eps2) {
            break;
        }
        prev = t;
    }
    Ok(None)
}

/// MRT directions on the composite channels at `rho`. `0.99·P0` is split
/// equally over the buffered streams and all EUs, with each EU share raised
/// to what it needs on its own beam when the budget allows.
pub(crate) fn initial_beamformers(inst: &SlotInstance, rho: &ComplexVec) -> Result<Beamformers> {
    let buffered = inst.buffered();
    let budget = 0.99 * inst.p0;
    let gains: Vec<f64> = (0..inst.n_eu()).map(|j| inst.factors.eu_channel(j, rho).norm_sqr()).collect();
    let (share, eu) = split_with_needs(budget, buffered.len(), &eu_needs(&gains, inst.q)).unwrap_or_else(|| {
        let users = buffered.len() + inst.n_eu();
        let s = if users > 0 { budget / users as f64 } else { 0.0 };
        (s, vec![s; inst.n_eu()])
    });
    let iu: Vec<f64> = (0..inst.n_iu()).map(|i| if buffered.contains(&i) { share } else { 0.0 }).collect();
    mrt_beamformers(&inst.factors, rho, &iu, &eu)
}

/// Gives the budget left over by `bf` to MRT beams for the buffered streams
/// that carry no power. Extra beams only add harvested energy, and a zero
/// beam would pin its rate surrogate at zero for good.
fn refill_info_beams(inst: &SlotInstance, rho: &ComplexVec, bf: Beamformers) -> Result<Beamformers> {
    let idle: Vec<usize> = inst.buffered().into_iter().filter(|&i| bf.w[i].norm_sqr() == 0.0).collect();
    let left = 0.99 * inst.p0 - bf.power();
    if idle.is_empty() || left <= 0.0 {
        return Ok(bf);
    }
    let mut iu = vec![0.0; inst.n_iu()];
    for &i in &idle {
        iu[i] = left / idle.len() as f64;
    }
    let extra = mrt_beamformers(&inst.factors, rho, &iu, &vec![0.0; inst.n_eu()])?;
    let mut out = bf;
    for &i in &idle {
        out.w[i] = extra.w[i].clone();
    }
    Ok(out)
}

/// Full per-slot optimizer: alternate the phase and beamforming blocks,
/// round the schedule and restore exact feasibility.
pub fn alternating_optimize(inst: &SlotInstance, rho_init: &ComplexVec, cfg: &ScaConfig) -> Result<SlotDecision> {
    optimize(inst, rho_init, cfg, true)
}

/// Beamforming and schedule only, phases held at `rho` (projected onto the
/// unit circle).
pub fn optimize_beamforming(inst: &SlotInstance, rho: &ComplexVec, cfg: &ScaConfig) -> Result<SlotDecision> {
    optimize(inst, rho, cfg, false)
}

fn optimize(inst: &SlotInstance, rho_init: &ComplexVec, cfg: &ScaConfig, phases: bool) -> Result<SlotDecision> {
    inst.validate()?;
    cfg.validate()?;
    let mut trace = SlotTrace::default();
    let n_iu = inst.n_iu();
    let mut rho = project_unit_modulus(rho_init);
    let bound = inst.objective_bound();
    if bound <= 0.0 && inst.n_eu() == 0 {
        return Ok(SlotDecision::idle(inst, rho, true, trace));
    }
    let mut bf = initial_beamformers(inst, &rho)?;
    if true_margin(inst, &rho, &bf, &vec![false; n_iu]) < 0.0 {
        // harvesting already fails at the start: settle it with w = 0
        match restore_feasibility(inst, &rho, &bf, &vec![false; n_iu], cfg, &mut trace, 0)? {
            Some(b) => bf = refill_info_beams(inst, &rho, b)?,
            None => return Ok(SlotDecision::idle(inst, rho, false, trace)),
        }
    }

    let mut alpha = vec![0.0; n_iu];
    let mut obj = 0.0;
    if bound > 0.0 {
        for round in 0..cfg.s_a {
            trace.ao_rounds += 1;
            if phases {
                let phase = algorithm1_phase_schedule(inst, &bf, &rho, &alpha, cfg, &mut trace, round)?;
                trace.unit_modulus_violation.push(unit_modulus_violation(&phase.rho));
                rho = phase.rho;
                alpha = phase.alpha;
            }
            let (b, a, o) = algorithm2_beamforming(inst, &rho, &bf, &alpha, cfg, &mut trace, round)?;
            bf = b;
            alpha = a;
            trace.ao_objective.push(o);
            let converged = !phases || o >= bound * (1.0 - 1e-9) || (round > 0 && close(o, obj, cfg.eps_ao));
            obj = o;
            if converged {
                break;
            }
        }
    }
    let rho = project_unit_modulus(&rho);

    let mut chosen: Vec<usize> = priority_order(&alpha, &inst.weights).into_iter().take(inst.m).collect();
    loop {
        let mut scheduled = vec![false; n_iu];
        chosen.iter().for_each(|&i| scheduled[i] = true);
        let round = trace.ao_rounds;
        if let Some(b) = restore_feasibility(inst, &rho, &bf, &scheduled, cfg, &mut trace, round)? {
            return Ok(SlotDecision {
                alpha_relaxed: alpha,
                scheduled,
                rho,
                beamformers: b,
                feasible: true,
                trace,
            });
        }
        match chosen.pop() {
            Some(i) => trace.dropped.push(i),
            None => return Ok(SlotDecision::idle(inst, rho, false, trace)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CompositeFactors;
    use crate::numerics::{Complex64, ComplexMat, RngStream};
    use crate::sca::random_phases;
    use crate::sca::testing::random_instance;
    use approx::assert_relative_eq;

    fn cvec(rng: &mut RngStream, n: usize) -> ComplexVec {
        ComplexVec::from_fn(n, |_| rng.cn())
    }

    fn bare_instance(factors: CompositeFactors, weights: Vec<f64>, gamma_th: f64, q: f64) -> SlotInstance {
        let n_t = factors.h_b[0].len();
        SlotInstance { factors, n_t, weights, noise_power: 1.0, gamma_th, q, p0: 1.0, m: 1 }
    }

    fn assert_inner_loops_monotone(trace: &SlotTrace) {
        let mut last = trace.loop_starts.clone();
        for s in &trace.solves {
            let prev = last[s.loop_id];
            assert!(s.objective >= prev - 1e-6 * prev.abs().max(1e-300), "{:?} after {prev}", s);
            last[s.loop_id] = s.objective;
        }
    }

    #[test]
    fn single_element_aligns_reflected_and_direct_paths() {
        let mut rng = RngStream::new(41, 0);
        for _ in 0..5 {
            let g = ComplexMat::from_fn(1, 3, |_, _| rng.cn());
            let h_r = rng.cn();
            let u = ComplexMat::from_fn(1, 3, |_, c| h_r.conj() * g[(0, c)]);
            let h_b = cvec(&mut rng, 3);
            let w = cvec(&mut rng, 3).scale(0.5);
            let factors = CompositeFactors { u: vec![u.clone()], h_b: vec![h_b.clone()], v: vec![], g_b: vec![] };
            // threshold out of reach, so α tracks the received power
            let inst = bare_instance(factors, vec![5.0], 1e3, 0.0);
            let bf = Beamformers { w: vec![w.clone()], v: vec![] };
            let rho0 = random_phases(1, &mut rng);
            let mut trace = SlotTrace::default();
            // run the inner loop to its fixed point
            let cfg = ScaConfig { eps1: 1e-13, s1: 2000, ..ScaConfig::default() };
            let out = algorithm1_phase_schedule(&inst, &bf, &rho0, &[0.0], &cfg, &mut trace, 0).unwrap();
            let a = u.mul_vec(&w).unwrap()[0];
            let c = h_b.hermitian_product(&w).unwrap();
            let steps = 100_000;
            let best = (0..steps)
                .map(|k| 2.0 * std::f64::consts::PI * k as f64 / steps as f64)
                .max_by(|x, y| {
                    let f = |t: f64| (Complex64::from_polar(1.0, -t) * a + c).norm_sqr();
                    f(*x).total_cmp(&f(*y))
                })
                .unwrap();
            let diff = (out.rho[0].arg() - best).rem_euclid(2.0 * std::f64::consts::PI);
            let diff = diff.min(2.0 * std::f64::consts::PI - diff);
            assert!(diff <= 1e-3, "phase off by {diff}");
            assert!((out.rho[0].norm() - 1.0).abs() <= 1e-3);
            assert_inner_loops_monotone(&trace);
        }
    }

    #[test]
    fn degenerate_surface_keeps_weights_and_unit_modulus() {
        let mut rng = RngStream::new(2, 0);
        let factors = CompositeFactors { u: vec![ComplexMat::zeros(4, 3)], h_b: vec![cvec(&mut rng, 3)], v: vec![], g_b: vec![] };
        let inst = bare_instance(factors, vec![2.0], 1e3, 0.0);
        let bf = Beamformers { w: vec![cvec(&mut rng, 3).scale(0.3)], v: vec![] };
        let rho0 = random_phases(4, &mut rng);
        let mut trace = SlotTrace::default();
        let out = algorithm1_phase_schedule(&inst, &bf, &rho0, &[0.0], &ScaConfig::default(), &mut trace, 0).unwrap();
        assert!(unit_modulus_violation(&out.rho) <= 1e-3);
        assert_eq!(inst.weights, vec![2.0]);
        let snr = bf.snr(&inst, &out.rho)[0];
        assert_relative_eq!(out.alpha[0], snr / 1e3, max_relative = 1e-5);
    }

    #[test]
    fn penalty_reaches_unit_modulus_on_small_instances() {
        for seed in 0..3 {
            let inst = random_instance(seed, 8, 3, 40.0, -10.0);
            let rho0 = random_phases(8, &mut RngStream::new(seed, 3));
            let bf = initial_beamformers(&inst, &rho0).unwrap();
            let mut trace = SlotTrace::default();
            let n = inst.n_iu();
            let out = algorithm1_phase_schedule(&inst, &bf, &rho0, &vec![0.0; n], &ScaConfig::default(), &mut trace, 0)
                .unwrap();
            assert!(unit_modulus_violation(&out.rho) <= 1e-3, "seed {seed}");
            assert_inner_loops_monotone(&trace);
        }
    }

    #[test]
    fn single_user_without_surface_reaches_mrt_optimum() {
        let mut rng = RngStream::new(9, 0);
        let h = cvec(&mut rng, 4);
        let factors = CompositeFactors { u: vec![ComplexMat::zeros(1, 4)], h_b: vec![h.clone()], v: vec![], g_b: vec![] };
        let optimum = h.norm_sqr();
        let inst = bare_instance(factors, vec![1.0], 4.0 * optimum, 0.0);
        let rho = ComplexVec::from_fn(1, |_| Complex64::new(1.0, 0.0));
        // deliberately poor start: a random direction at low power
        let start = Beamformers { w: vec![cvec(&mut rng, 4).normalized().scale(0.1)], v: vec![] };
        let mut trace = SlotTrace::default();
        let (bf, alpha, _) =
            algorithm2_beamforming(&inst, &rho, &start, &[0.0], &ScaConfig::default(), &mut trace, 0).unwrap();
        let snr = bf.snr(&inst, &rho)[0];
        assert!((snr - optimum).abs() <= 1e-4 * optimum, "{snr} vs {optimum}");
        assert_relative_eq!(alpha[0], 0.25, max_relative = 1e-4);
        assert_inner_loops_monotone(&trace);
    }

    #[test]
    fn unconstrained_slot_fills_the_channels() {
        let mut inst = random_instance(6, 8, 2, 0.0, -100.0);
        inst.gamma_th = 0.0;
        inst.q = 0.0;
        inst.weights = vec![4.0, 1.0, 6.0];
        let rho0 = random_phases(8, &mut RngStream::new(6, 1));
        let d = alternating_optimize(&inst, &rho0, &ScaConfig::default()).unwrap();
        assert!(d.feasible);
        assert_relative_eq!(weighted(&inst, &d.alpha_relaxed), 10.0, max_relative = 1e-6);
        assert_eq!(d.scheduled, vec![true, false, true]);
    }

    #[test]
    fn harvesting_row_is_active_at_the_full_power_boundary() {
        let mut rng = RngStream::new(13, 0);
        let g = cvec(&mut rng, 4);
        let factors = CompositeFactors {
            u: vec![ComplexMat::zeros(1, 4)],
            h_b: vec![cvec(&mut rng, 4)],
            v: vec![ComplexMat::zeros(1, 4)],
            g_b: vec![g.clone()],
        };
        // largest q the budget supports, found by bisection on the MRT harvest
        let full = |q: f64| q <= 1.0 * g.norm_sqr();
        let (mut lo, mut hi) = (0.0, 10.0 * g.norm_sqr());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if full(mid) {
                lo = mid
            } else {
                hi = mid
            }
        }
        let q = lo * (1.0 - 1e-7);
        let inst = bare_instance(factors, vec![1.0], 1.0, q);
        let rho = ComplexVec::from_fn(1, |_| Complex64::new(1.0, 0.0));
        let d = alternating_optimize(&inst, &rho, &ScaConfig::default()).unwrap();
        assert!(d.feasible);
        let e = d.beamformers.harvested(&inst, &d.rho)[0];
        assert!(e >= q * (1.0 - 1e-6) && e <= q * (1.0 + 1e-5), "{e} vs {q}");
    }

    #[test]
    fn idle_slot_has_zero_objective() {
        let mut inst = random_instance(1, 8, 3, 30.0, -15.0);
        inst.weights = vec![0.0; 3];
        let rho0 = random_phases(8, &mut RngStream::new(1, 1));
        let d = alternating_optimize(&inst, &rho0, &ScaConfig::default()).unwrap();
        assert!(d.feasible);
        assert!(d.scheduled.iter().all(|s| !s));
        assert_eq!(weighted(&inst, &d.alpha_relaxed), 0.0);
        for e in d.beamformers.harvested(&inst, &d.rho) {
            assert!(e >= inst.q * (1.0 - 1e-6));
        }
    }

    #[test]
    fn loose_constraints_schedule_every_buffered_stream() {
        let mut inst = random_instance(3, 8, 1, 0.0, -60.0);
        inst.gamma_th = 10.0;
        inst.weights = vec![2.0, 0.0, 5.0];
        inst.m = 3;
        let rho0 = random_phases(8, &mut RngStream::new(3, 1));
        let d = alternating_optimize(&inst, &rho0, &ScaConfig::default()).unwrap();
        assert_eq!(d.scheduled, vec![true, false, true]);
    }

    #[test]
    fn seeded_slots_are_monotone_and_feasible() {
        for seed in 0..6 {
            let inst = random_instance(100 + seed, 8, 3, 40.0, -15.0);
            let rho0 = random_phases(8, &mut RngStream::new(seed, 9));
            let d = alternating_optimize(&inst, &rho0, &ScaConfig::default()).unwrap();
            assert_inner_loops_monotone(&d.trace);
            for pair in d.trace.ao_objective.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-6 * pair[0].abs(), "{:?}", d.trace.ao_objective);
            }
            assert!(unit_modulus_violation(&d.rho) <= 1e-12);
            assert!(d.beamformers.power() <= inst.p0 * (1.0 + 1e-6));
            assert!(d.scheduled.iter().filter(|s| **s).count() <= inst.m);
            if d.feasible {
                let snr = d.beamformers.snr(&inst, &d.rho);
                for i in 0..inst.n_iu() {
                    if d.scheduled[i] {
                        assert!(snr[i] >= inst.gamma_th * (1.0 - 1e-6));
                    }
                }
                for e in d.beamformers.harvested(&inst, &d.rho) {
                    assert!(e >= inst.q * (1.0 - 1e-6));
                }
            }
        }
    }

    #[test]
    fn harvest_heavy_slots_still_schedule() {
        // at -8 dBm an equal power split starves some EU in most of these
        let mut checked = 0;
        for seed in 0..12 {
            let inst = random_instance(seed, 16, 3, 40.0, -8.0);
            let rho0 = random_phases(16, &mut RngStream::new(seed, 4));
            let d = alternating_optimize(&inst, &rho0, &ScaConfig::default()).unwrap();
            if d.feasible && !inst.buffered().is_empty() {
                checked += 1;
                assert!(d.scheduled.iter().any(|&s| s), "seed {seed}: {:?}", d.alpha_relaxed);
            }
        }
        assert!(checked >= 6, "{checked}");
    }

    #[test]
    fn beamforming_only_keeps_the_phases() {
        let inst = random_instance(7, 8, 3, 40.0, -15.0);
        let rho0 = random_phases(8, &mut RngStream::new(7, 9));
        let d = optimize_beamforming(&inst, &rho0, &ScaConfig::default()).unwrap();
        assert_eq!(d.rho, rho0);
        assert!(d.trace.solves.iter().all(|s| !matches!(s.stage, Stage::Phase { .. })));
    }
}
