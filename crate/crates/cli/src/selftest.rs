//! Quick oracle checks runnable from an installed binary.

use ris_aoi_core::baselines::{af_cascade_snr, mrt_beamformers};
use ris_aoi_core::conic::{solve, ConicProblem, SolverSettings};
use ris_aoi_core::numerics::RngStream;
use ris_aoi_core::sca::{verify_surrogate, SurrogateKind};
use ris_aoi_core::sim::{run, ScenarioConfig};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn ball_projection() -> Check {
    let mut rng = RngStream::new(7, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
        let r = 0.5 + rng.uniform();
        let mut p = ConicProblem::new();
        let v: Vec<usize> = (0..4).map(|k| p.add_free_var(format!("x{k}"))).collect();
        for k in 0..4 {
            p.set_objective(v[k], c[k]);
        }
        p.add_soc("ball", v.iter().map(|&j| vec![(j, 1.0)]).collect(), vec![0.0; 4], vec![], r);
        let exact = r * c.iter().map(|x| x * x).sum::<f64>().sqrt();
        match solve(&p, &SolverSettings::default()) {
            Ok(s) if s.is_optimal() => worst = worst.max((s.objective - exact).abs() / exact),
            _ => worst = f64::INFINITY,
        }
    }
    Check { name: "conic ball projection", passed: worst <= 1e-5, detail: format!("worst relative error {worst:.2e}") }
}

fn no_traffic_average() -> Check {
    let cfg = ScenarioConfig { arrival_prob: vec![0.0; 3], slots: 20, repetitions: 1, n_s: 4, ..ScenarioConfig::default() };
    let got = run(&cfg).map(|m| m.time_avg_sum_aoi);
    let want = 3.0 * 23.0 / 2.0;
    Check {
        name: "aoi closed form without traffic",
        passed: got.as_ref().is_ok_and(|g| *g == want),
        detail: format!("{got:?} vs {want}"),
    }
}

fn surrogates() -> Check {
    let cfg = ScenarioConfig { n_s: 6, ..ScenarioConfig::default() };
    let mut failures = Vec::new();
    for seed in 0..3 {
        let inst = match cfg.slot_instance(0, seed, vec![3.0, 1.0, 2.0]) {
            Ok(i) => i,
            Err(e) => return Check { name: "surrogate validity", passed: false, detail: e.to_string() },
        };
        let mut rng = RngStream::new(seed as u64, 1);
        let rho = cfg.slot_phases(0, seed);
        let bf = mrt_beamformers(&inst.factors, &rho, &[0.5; 3], &[0.5; 3]).expect("dimensions agree");
        for kind in [SurrogateKind::SnrPhase(0), SurrogateKind::EhPhase(1), SurrogateKind::Penalty, SurrogateKind::SnrBeam(2), SurrogateKind::EhBeam(0)] {
            match verify_surrogate(kind, &inst, &rho, &bf, 0.1, 100, &mut rng) {
                Ok(r) if r.passed() => {}
                Ok(r) => failures.push(format!("{kind:?}: {r:?}")),
                Err(e) => failures.push(format!("{kind:?}: {e}")),
            }
        }
    }
    Check { name: "surrogate validity", passed: failures.is_empty(), detail: failures.join("; ") }
}

fn cascade() -> Check {
    let g = af_cascade_snr(10.0, 10.0);
    Check { name: "AF cascade", passed: (g - 100.0 / 21.0).abs() < 1e-12, detail: format!("{g}") }
}

pub fn run_all() -> Vec<Check> {
    vec![ball_projection(), no_traffic_average(), surrogates(), cascade()]
}
