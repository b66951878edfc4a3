//! JSON-lines run log: a header with the version, resolved configuration,
//! seed and iteration caps, one line per slot, and a summary line.

use std::io::Write;

use ris_aoi_core::sim::{RunMetrics, ScenarioConfig};
use serde_json::json;

use crate::config::{w_to_dbm, FileConfig};
use crate::VERSION;

pub fn write_run_log<W: Write>(cfg: &ScenarioConfig, metrics: &RunMetrics, mut out: W) -> std::io::Result<()> {
    let header = json!({
        "kind": "run",
        "version": VERSION,
        "seed": cfg.seed,
        "config": FileConfig::from_scenario(cfg),
        "caps": {
            "s_a": cfg.sca.s_a,
            "s1": cfg.sca.s1,
            "s2": cfg.sca.s2,
            "penalty_rounds": cfg.sca.penalty_rounds,
            "solver_max_iters": cfg.sca.solver_max_iters,
        },
    });
    writeln!(out, "{header}")?;
    for (rep, r) in metrics.reps.iter().enumerate() {
        for s in &r.slots {
            let line = json!({
                "kind": "slot",
                "rep": rep,
                "slot": s.slot,
                "seconds": s.seconds,
                "feasible": s.feasible,
                "arrivals": s.arrivals,
                "scheduled": s.scheduled,
                "delivered": s.delivered,
                "ages": s.ages,
                "harvested_w": s.harvested,
                "ao_rounds": s.ao_rounds,
                "penalty_rounds": s.penalty_rounds,
                "max_inner_phase": s.max_inner_phase,
                "max_inner_beam": s.max_inner_beam,
                "solver_iterations": s.solver_iterations,
            });
            writeln!(out, "{line}")?;
        }
    }
    let harvest: Vec<f64> = metrics.mean_harvest.iter().map(|&h| w_to_dbm(h)).collect();
    let summary = json!({
        "kind": "summary",
        "policy": metrics.policy,
        "mean_sum_aoi": metrics.mean_sum_aoi,
        "time_avg_sum_aoi": metrics.time_avg_sum_aoi,
        "delivery_rate": metrics.delivery_rate,
        "infeasible_slots": metrics.infeasible_slots,
        "mean_harvest_dbm": harvest,
        "solver": metrics.solver,
    });
    writeln!(out, "{summary}")?;
    Ok(())
}
