//! Convex surrogate subproblems.
//!
//! Every quadratic `|e(x)|²` on the left of a rate or harvesting constraint is
//! replaced by its first-order expansion around the current iterate, which is
//! a global lower bound because `|e|²` is convex. Rows are normalized by
//! their threshold (`γ_th σ²` or `Q`) so that coefficients stay near unit
//! scale.

use serde::{Deserialize, Serialize};

use super::{Beamformers, SlotInstance};
use crate::conic::{ConicProblem, SparseRow};
use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexVec, RngStream};

/// A linearized constraint row of the form
/// `(1/scale)·G̃(x) − α ≥ kappa` (α only for rate rows with a relaxed schedule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub row: usize,
    pub user: usize,
    pub scale: f64,
    pub alpha_var: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P5Layout {
    /// `(stream, variable)` for every buffered stream.
    pub alpha_vars: Vec<(usize, usize)>,
    pub rho_re: usize,
    pub rho_im: usize,
    pub n_s: usize,
    pub snr_rows: Vec<RowMeta>,
    pub eh_rows: Vec<RowMeta>,
    pub penalty: f64,
}

impl P5Layout {
    pub fn rho(&self, x: &[f64]) -> ComplexVec {
        ComplexVec::from_parts(&x[self.rho_re..self.rho_re + self.n_s], &x[self.rho_im..self.rho_im + self.n_s])
    }

    pub fn alpha(&self, x: &[f64], n_iu: usize) -> Vec<f64> {
        alpha_from(&self.alpha_vars, x, n_iu)
    }

    /// Writes `rho` into a variable vector.
    pub fn set_rho(&self, x: &mut [f64], rho: &ComplexVec) {
        for n in 0..self.n_s {
            x[self.rho_re + n] = rho[n].re;
            x[self.rho_im + n] = rho[n].im;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct P6Layout {
    pub alpha_vars: Vec<(usize, usize)>,
    /// First variable of `[Re w_i, Im w_i]` for streams that carry a beamformer.
    pub w_vars: Vec<Option<usize>>,
    pub v_vars: Vec<usize>,
    /// Margin variable of the restoration problem.
    pub margin_var: Option<usize>,
    pub n_t: usize,
    pub snr_rows: Vec<RowMeta>,
    pub eh_rows: Vec<RowMeta>,
}

impl P6Layout {
    pub fn beamformers(&self, x: &[f64]) -> Beamformers {
        let n_t = self.n_t;
        let take = |base: usize| ComplexVec::from_parts(&x[base..base + n_t], &x[base + n_t..base + 2 * n_t]);
        Beamformers {
            w: self
                .w_vars
                .iter()
                .map(|b| b.map_or_else(|| ComplexVec::zeros(n_t), take))
                .collect(),
            v: self.v_vars.iter().map(|&b| take(b)).collect(),
        }
    }

    pub fn alpha(&self, x: &[f64], n_iu: usize) -> Vec<f64> {
        alpha_from(&self.alpha_vars, x, n_iu)
    }

    pub fn set_beamformers(&self, x: &mut [f64], bf: &Beamformers) {
        let n_t = self.n_t;
        let mut put = |base: usize, b: &ComplexVec| {
            for k in 0..n_t {
                x[base + k] = b[k].re;
                x[base + n_t + k] = b[k].im;
            }
        };
        for (i, base) in self.w_vars.iter().enumerate() {
            if let Some(base) = base {
                put(*base, &bf.w[i]);
            }
        }
        for (j, &base) in self.v_vars.iter().enumerate() {
            put(base, &bf.v[j]);
        }
    }
}

fn alpha_from(vars: &[(usize, usize)], x: &[f64], n_iu: usize) -> Vec<f64> {
    let mut a = vec![0.0; n_iu];
    for &(i, v) in vars {
        a[i] = x[v].clamp(0.0, 1.0);
    }
    a
}

/// Linearization of `|ρᴴ a + c|²` around `ρ⁰` as
/// `Σ re_n Re ρ_n + im_n Im ρ_n + constant`.
pub(crate) fn phase_linearization(a: &ComplexVec, c: Complex64, rho0: &ComplexVec) -> (Vec<f64>, Vec<f64>, f64) {
    let e0 = rho0.dot_conj_unchecked(a) + c;
    let beta: Vec<Complex64> = a.iter().map(|an| e0.conj() * an).collect();
    let re: Vec<f64> = beta.iter().map(|b| 2.0 * b.re).collect();
    let im: Vec<f64> = beta.iter().map(|b| 2.0 * b.im).collect();
    let lin0: f64 = (0..rho0.len()).map(|n| re[n] * rho0[n].re + im[n] * rho0[n].im).sum();
    (re, im, e0.norm_sqr() - lin0)
}

/// Linearization of `|hᴴ w|²` around `w⁰`.
pub(crate) fn beam_linearization(h: &ComplexVec, w0: &ComplexVec) -> (Vec<f64>, Vec<f64>, f64) {
    let e0 = h.dot_conj_unchecked(w0);
    let beta: Vec<Complex64> = h.iter().map(|hk| e0.conj() * hk.conj()).collect();
    let re = beta.iter().map(|b| 2.0 * b.re).collect();
    let im = beta.iter().map(|b| -2.0 * b.im).collect();
    (re, im, -e0.norm_sqr())
}

fn linear_terms(re_base: usize, im_base: usize, re: &[f64], im: &[f64], scale: f64) -> SparseRow {
    let mut row: SparseRow = Vec::with_capacity(2 * re.len() + 1);
    for (k, v) in re.iter().enumerate() {
        row.push((re_base + k, v / scale));
    }
    for (k, v) in im.iter().enumerate() {
        row.push((im_base + k, v / scale));
    }
    row
}

fn check_inputs(inst: &SlotInstance, bf: &Beamformers, rho: &ComplexVec) -> Result<()> {
    inst.validate()?;
    if bf.w.len() != inst.n_iu() || bf.v.len() != inst.n_eu() {
        return Err(Error::DimensionMismatch {
            op: "beamformer count",
            left: (bf.w.len(), bf.v.len()),
            right: (inst.n_iu(), inst.n_eu()),
        });
    }
    if let Some(b) = bf.w.iter().chain(&bf.v).find(|b| b.len() != inst.n_t) {
        return Err(Error::DimensionMismatch { op: "beamformer length", left: (b.len(), 1), right: (inst.n_t, 1) });
    }
    if rho.len() != inst.n_s() && !(inst.n_iu() == 0 && inst.n_eu() == 0) {
        return Err(Error::DimensionMismatch { op: "phase vector", left: (rho.len(), 1), right: (inst.n_s(), 1) });
    }
    Ok(())
}

fn add_schedule(p: &mut ConicProblem, inst: &SlotInstance) -> Vec<(usize, usize)> {
    let vars: Vec<(usize, usize)> = inst
        .buffered()
        .into_iter()
        .map(|i| {
            let v = p.add_var(format!("alpha_{i}"), 0.0, 1.0);
            p.set_objective(v, inst.weights[i]);
            (i, v)
        })
        .collect();
    if vars.len() > inst.m {
        p.add_row("channels", vars.iter().map(|&(_, v)| (v, 1.0)).collect(), f64::NEG_INFINITY, inst.m as f64);
    }
    vars
}

/// Phase/schedule subproblem around `rho0` with penalty `penalty`, for fixed
/// beamformers.
pub fn build_p5(
    inst: &SlotInstance,
    bf: &Beamformers,
    rho0: &ComplexVec,
    penalty: f64,
) -> Result<(ConicProblem, P5Layout)> {
    check_inputs(inst, bf, rho0)?;
    if rho0.iter().any(|r| r.norm() > 1.0 + 1e-9) {
        return Err(Error::InvalidArgument("expansion point outside the unit polydisc".into()));
    }
    let n_s = inst.n_s();
    let mut p = ConicProblem::new();
    let alpha_vars = add_schedule(&mut p, inst);
    let rho_re = p.num_vars();
    for n in 0..n_s {
        p.add_free_var(format!("re_rho_{n}"));
    }
    let rho_im = p.num_vars();
    for n in 0..n_s {
        p.add_free_var(format!("im_rho_{n}"));
    }
    for n in 0..n_s {
        p.add_soc(
            format!("modulus_{n}"),
            vec![vec![(rho_re + n, 1.0)], vec![(rho_im + n, 1.0)]],
            vec![0.0, 0.0],
            vec![],
            1.0,
        );
    }
    // linearized penalty C Σ(|ρ_n|² − 1)
    let mut offset = 0.0;
    for n in 0..n_s {
        p.set_objective(rho_re + n, 2.0 * penalty * rho0[n].re);
        p.set_objective(rho_im + n, 2.0 * penalty * rho0[n].im);
        offset -= penalty * (rho0[n].norm_sqr() + 1.0);
    }
    p.objective_offset = offset;

    let mut snr_rows = Vec::new();
    let s = inst.snr_floor();
    if s > 0.0 {
        for &(i, av) in &alpha_vars {
            let a = inst.factors.u[i].mul_vec(&bf.w[i])?;
            let c = inst.factors.h_b[i].dot_conj_unchecked(&bf.w[i]);
            let (re, im, k) = phase_linearization(&a, c, rho0);
            let mut row = linear_terms(rho_re, rho_im, &re, &im, s);
            row.push((av, -1.0));
            snr_rows.push(RowMeta { row: p.rows.len(), user: i, scale: s, alpha_var: Some(av) });
            p.add_row(format!("snr_{i}"), row, -k / s, f64::INFINITY);
        }
    }
    let mut eh_rows = Vec::new();
    if inst.q > 0.0 {
        for j in 0..inst.n_eu() {
            let a = inst.factors.v[j].mul_vec(&bf.v[j])?;
            let c = inst.factors.g_b[j].dot_conj_unchecked(&bf.v[j]);
            let (re, im, k) = phase_linearization(&a, c, rho0);
            let row = linear_terms(rho_re, rho_im, &re, &im, inst.q);
            eh_rows.push(RowMeta { row: p.rows.len(), user: j, scale: inst.q, alpha_var: None });
            p.add_row(format!("eh_{j}"), row, 1.0 - k / inst.q, f64::INFINITY);
        }
    }
    let layout = P5Layout { alpha_vars, rho_re, rho_im, n_s, snr_rows, eh_rows, penalty };
    Ok((p, layout))
}

/// What the beamforming subproblem optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BeamMode<'a> {
    /// Relaxed schedule, objective `Σ weight·α`.
    Schedule,
    /// Fixed schedule; maximize the smallest normalized constraint margin,
    /// capped at `cap`.
    Margin { scheduled: &'a [bool], cap: f64 },
}

/// Beamforming/schedule subproblem around `bf0` for fixed phases `rho`.
pub fn build_p6(inst: &SlotInstance, rho: &ComplexVec, bf0: &Beamformers) -> Result<(ConicProblem, P6Layout)> {
    build_beam_problem(inst, rho, bf0, BeamMode::Schedule)
}

pub(crate) fn build_beam_problem(
    inst: &SlotInstance,
    rho: &ComplexVec,
    bf0: &Beamformers,
    mode: BeamMode<'_>,
) -> Result<(ConicProblem, P6Layout)> {
    check_inputs(inst, bf0, rho)?;
    if bf0.power() > inst.p0 * (1.0 + 1e-6) {
        return Err(Error::InvalidArgument("expansion point exceeds the power budget".into()));
    }
    let n_t = inst.n_t;
    let mut p = ConicProblem::new();
    let (alpha_vars, margin_var, carries): (Vec<(usize, usize)>, Option<usize>, Vec<bool>) = match mode {
        BeamMode::Schedule => {
            let vars = add_schedule(&mut p, inst);
            let mut carries = vec![false; inst.n_iu()];
            vars.iter().for_each(|&(i, _)| carries[i] = true);
            (vars, None, carries)
        }
        BeamMode::Margin { scheduled, cap } => {
            let t = p.add_var("margin", f64::NEG_INFINITY, cap);
            p.set_objective(t, 1.0);
            (Vec::new(), Some(t), scheduled.to_vec())
        }
    };
    let mut w_vars = vec![None; inst.n_iu()];
    let mut bf_vars: Vec<usize> = Vec::new();
    for i in 0..inst.n_iu() {
        if carries[i] {
            let base = p.num_vars();
            for k in 0..n_t {
                p.add_free_var(format!("re_w_{i}_{k}"));
            }
            for k in 0..n_t {
                p.add_free_var(format!("im_w_{i}_{k}"));
            }
            w_vars[i] = Some(base);
            bf_vars.extend(base..base + 2 * n_t);
        }
    }
    let mut v_vars = Vec::new();
    for j in 0..inst.n_eu() {
        let base = p.num_vars();
        for k in 0..n_t {
            p.add_free_var(format!("re_v_{j}_{k}"));
        }
        for k in 0..n_t {
            p.add_free_var(format!("im_v_{j}_{k}"));
        }
        v_vars.push(base);
        bf_vars.extend(base..base + 2 * n_t);
    }
    if !bf_vars.is_empty() {
        p.add_soc(
            "power",
            bf_vars.iter().map(|&v| vec![(v, 1.0)]).collect(),
            vec![0.0; bf_vars.len()],
            vec![],
            inst.p0.sqrt(),
        );
    }

    let mut snr_rows = Vec::new();
    let s = inst.snr_floor();
    if s > 0.0 {
        for i in 0..inst.n_iu() {
            let Some(base) = w_vars[i] else { continue };
            let h = inst.factors.iu_channel(i, rho);
            let (re, im, k) = beam_linearization(&h, &bf0.w[i]);
            let mut row = linear_terms(base, base + n_t, &re, &im, s);
            let (lower, alpha_var) = match (margin_var, alpha_vars.iter().find(|(u, _)| *u == i)) {
                (Some(t), _) => {
                    row.push((t, -1.0));
                    (1.0 - k / s, None)
                }
                (None, Some(&(_, av))) => {
                    row.push((av, -1.0));
                    (-k / s, Some(av))
                }
                (None, None) => unreachable!("beamformer without schedule variable"),
            };
            snr_rows.push(RowMeta { row: p.rows.len(), user: i, scale: s, alpha_var });
            p.add_row(format!("snr_{i}"), row, lower, f64::INFINITY);
        }
    }
    let mut eh_rows = Vec::new();
    if inst.q > 0.0 {
        for (j, &base) in v_vars.iter().enumerate() {
            let g = inst.factors.eu_channel(j, rho);
            let (re, im, k) = beam_linearization(&g, &bf0.v[j]);
            let mut row = linear_terms(base, base + n_t, &re, &im, inst.q);
            if let Some(t) = margin_var {
                row.push((t, -1.0));
            }
            eh_rows.push(RowMeta { row: p.rows.len(), user: j, scale: inst.q, alpha_var: None });
            p.add_row(format!("eh_{j}"), row, 1.0 - k / inst.q, f64::INFINITY);
        }
    }
    let layout = P6Layout { alpha_vars, w_vars, v_vars, margin_var, n_t, snr_rows, eh_rows };
    Ok((p, layout))
}

/// Which surrogate to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurrogateKind {
    /// Rate constraint of stream `i`, linearized in the phases.
    SnrPhase(usize),
    /// Harvesting constraint of EU `j`, linearized in the phases.
    EhPhase(usize),
    /// Unit-modulus penalty in the phase objective.
    Penalty,
    /// Rate constraint of stream `i`, linearized in `w_i`.
    SnrBeam(usize),
    /// Harvesting constraint of EU `j`, linearized in `v_j`.
    EhBeam(usize),
}

/// Outcome of comparing a constraint function `F` with its surrogate `F̃`,
/// both written as `threshold − quadratic ≤ 0` (the penalty as
/// `−C Σ(|ρ_n|² − 1)`), so that a valid surrogate satisfies `F ≤ F̃`.
/// Differences are measured in units of the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub kind: SurrogateKind,
    /// `F` and `F̃` at the expansion point, raw units.
    pub f_value: f64,
    pub f_tilde_value: f64,
    pub value_gap: f64,
    pub gradient_gap: f64,
    pub samples: usize,
    pub bound_violations: usize,
    pub max_bound_excess: f64,
}

impl SurrogateReport {
    pub const VALUE_TOL: f64 = 1e-10;
    pub const GRADIENT_TOL: f64 = 1e-5;
    pub const BOUND_TOL: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.value_gap <= Self::VALUE_TOL
            && self.gradient_gap <= Self::GRADIENT_TOL
            && self.bound_violations == 0
    }
}

/// Checks value match, gradient match (central differences, step `1e-5`) and
/// the bound `F ≤ F̃` at `samples` random feasible points. `F̃` is read off the
/// rows of the built subproblem, so this also validates the builders.
pub fn verify_surrogate(
    kind: SurrogateKind,
    inst: &SlotInstance,
    rho0: &ComplexVec,
    bf0: &Beamformers,
    penalty: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<SurrogateReport> {
    let n_t = inst.n_t;
    // The checked coordinates, a point embedding, the true convex quantity
    // G and its linearization G̃ (both in threshold units).
    let (scale, coords, base_x, g_true, g_lin): (
        f64,
        Vec<usize>,
        Vec<f64>,
        Box<dyn Fn(&[f64]) -> f64 + '_>,
        Box<dyn Fn(&[f64]) -> f64>,
    ) = match kind {
        SurrogateKind::SnrPhase(_) | SurrogateKind::EhPhase(_) | SurrogateKind::Penalty => {
            let (p, layout) = build_p5(inst, bf0, rho0, penalty)?;
            let mut x = vec![0.0; p.num_vars()];
            layout.set_rho(&mut x, rho0);
            let coords: Vec<usize> = (layout.rho_re..layout.rho_re + layout.n_s)
                .chain(layout.rho_im..layout.rho_im + layout.n_s)
                .collect();
            let lay = layout.clone();
            match kind {
                SurrogateKind::Penalty => {
                    let scale = penalty.max(f64::MIN_POSITIVE);
                    let obj = p.objective.clone();
                    let offset = p.objective_offset;
                    let alpha: Vec<usize> = layout.alpha_vars.iter().map(|a| a.1).collect();
                    let g_lin = Box::new(move |x: &[f64]| {
                        let v: f64 = obj
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| !alpha.contains(j))
                            .map(|(j, c)| c * x[j])
                            .sum();
                        (v + offset) / scale
                    });
                    let g_true = Box::new(move |x: &[f64]| {
                        let rho = lay.rho(x);
                        penalty * rho.iter().map(|r| r.norm_sqr() - 1.0).sum::<f64>() / scale
                    });
                    (scale, coords, x, g_true, g_lin)
                }
                SurrogateKind::SnrPhase(i) => {
                    let meta = layout
                        .snr_rows
                        .iter()
                        .find(|r| r.user == i)
                        .ok_or_else(|| Error::InvalidArgument(format!("no rate row for stream {i}")))?
                        .clone();
                    let row = p.rows[meta.row].clone();
                    let w = bf0.w[i].clone();
                    let g_true = Box::new(move |x: &[f64]| {
                        let h = inst.factors.iu_channel(i, &lay.rho(x));
                        h.dot_conj_unchecked(&w).norm_sqr() / meta.scale
                    });
                    (meta.scale, coords, x, g_true, row_surrogate(row, meta.alpha_var, 0.0))
                }
                SurrogateKind::EhPhase(j) => {
                    let meta = layout
                        .eh_rows
                        .iter()
                        .find(|r| r.user == j)
                        .ok_or_else(|| Error::InvalidArgument(format!("no harvesting row for EU {j}")))?
                        .clone();
                    let row = p.rows[meta.row].clone();
                    let v = bf0.v[j].clone();
                    let g_true = Box::new(move |x: &[f64]| {
                        let g = inst.factors.eu_channel(j, &lay.rho(x));
                        g.dot_conj_unchecked(&v).norm_sqr() / meta.scale
                    });
                    (meta.scale, coords, x, g_true, row_surrogate(row, None, 1.0))
                }
                _ => unreachable!(),
            }
        }
        SurrogateKind::SnrBeam(i) | SurrogateKind::EhBeam(i) => {
            let (p, layout) = build_p6(inst, rho0, bf0)?;
            let mut x = vec![0.0; p.num_vars()];
            layout.set_beamformers(&mut x, bf0);
            let is_snr = matches!(kind, SurrogateKind::SnrBeam(_));
            let meta = if is_snr { &layout.snr_rows } else { &layout.eh_rows }
                .iter()
                .find(|r| r.user == i)
                .ok_or_else(|| Error::InvalidArgument(format!("no row for user {i}")))?
                .clone();
            let base = if is_snr { layout.w_vars[i].expect("row implies variables") } else { layout.v_vars[i] };
            let coords: Vec<usize> = (base..base + 2 * n_t).collect();
            let row = p.rows[meta.row].clone();
            let h = if is_snr { inst.factors.iu_channel(i, rho0) } else { inst.factors.eu_channel(i, rho0) };
            let g_true = Box::new(move |x: &[f64]| {
                let b = ComplexVec::from_parts(&x[base..base + n_t], &x[base + n_t..base + 2 * n_t]);
                h.dot_conj_unchecked(&b).norm_sqr() / meta.scale
            });
            let kappa = if is_snr { 0.0 } else { 1.0 };
            (meta.scale, coords, x, g_true, row_surrogate(row, meta.alpha_var, kappa))
        }
    };
    let threshold = match kind {
        SurrogateKind::Penalty => 0.0,
        _ => 1.0,
    };
    // F = threshold − G, F̃ = threshold − G̃ (threshold units)
    let f = |x: &[f64]| threshold - g_true(x);
    let f_tilde = |x: &[f64]| threshold - g_lin(x);

    let value_gap = (f(&base_x) - f_tilde(&base_x)).abs();
    let h = 1e-5;
    let mut grad_err = 0.0f64;
    let mut grad_mag = 0.0f64;
    for &c in &coords {
        let mut xp = base_x.clone();
        let mut xm = base_x.clone();
        xp[c] += h;
        xm[c] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        let lin = (f_tilde(&xp) - f_tilde(&xm)) / (2.0 * h);
        grad_err = grad_err.max((fd - lin).abs());
        grad_mag = grad_mag.max(fd.abs()).max(lin.abs());
    }
    let gradient_gap = grad_err / grad_mag.max(1.0);

    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut x = base_x.clone();
        match kind {
            SurrogateKind::SnrPhase(_) | SurrogateKind::EhPhase(_) | SurrogateKind::Penalty => {
                let n_s = coords.len() / 2;
                for n in 0..n_s {
                    let r = rng.uniform().sqrt();
                    let th = 2.0 * std::f64::consts::PI * rng.uniform();
                    x[coords[n]] = r * th.cos();
                    x[coords[n_s + n]] = r * th.sin();
                }
            }
            _ => {
                let dir: Vec<f64> = coords.iter().map(|_| rng.standard_normal()).collect();
                let nrm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                let radius = inst.p0.sqrt() * rng.uniform();
                for (c, d) in coords.iter().zip(&dir) {
                    x[*c] = radius * d / nrm;
                }
            }
        }
        let excess = f(&x) - f_tilde(&x);
        max_excess = max_excess.max(excess);
        if excess > SurrogateReport::BOUND_TOL * f(&x).abs().max(1.0) {
            violations += 1;
        }
    }
    Ok(SurrogateReport {
        kind,
        f_value: f(&base_x) * scale,
        f_tilde_value: f_tilde(&base_x) * scale,
        value_gap,
        gradient_gap,
        samples,
        bound_violations: violations,
        max_bound_excess: max_excess,
    })
}

/// `G̃/scale` recovered from a normalized row `(1/scale)G̃ − α ≥ κ − k/scale`
/// with the `α` column dropped.
fn row_surrogate(row: crate::conic::LinearRow, alpha_var: Option<usize>, kappa: f64) -> Box<dyn Fn(&[f64]) -> f64> {
    Box::new(move |x: &[f64]| {
        let v: f64 = row
            .coeffs
            .iter()
            .filter(|(j, _)| Some(*j) != alpha_var)
            .map(|&(j, c)| c * x[j])
            .sum();
        v - row.lower + kappa
    })
}

#[cfg(test)]
mod tests {
    use super::super::testing::random_instance;
    use super::*;
    use crate::baselines::mrt_beamformers;
    use crate::sca::random_phases;

    fn setup(seed: u64) -> (SlotInstance, ComplexVec, Beamformers) {
        let inst = random_instance(seed, 3, 2, 40.0, -15.0);
        let mut rng = RngStream::new(seed, 7);
        let rho = random_phases(inst.n_s(), &mut rng);
        let bf = mrt_beamformers(&inst.factors, &rho, &[0.5, 0.5, 0.5], &[0.5, 0.5]).unwrap();
        (inst, rho, bf)
    }

    #[test]
    fn phase_surrogate_is_exact_at_expansion_point() {
        let (mut inst, rho, bf) = setup(1);
        inst.weights = vec![1.0; 3];
        let (p, layout) = build_p5(&inst, &bf, &rho, 0.0).unwrap();
        let mut x = vec![0.0; p.num_vars()];
        layout.set_rho(&mut x, &rho);
        for meta in &layout.snr_rows {
            let row = &p.rows[meta.row];
            let lhs: f64 = row.coeffs.iter().filter(|(j, _)| Some(*j) != meta.alpha_var).map(|&(j, c)| c * x[j]).sum();
            // row reads lin/s − α ≥ −k/s, so lin + k = s·(lhs − lower)
            let surrogate = meta.scale * (lhs - row.lower);
            let h = inst.factors.iu_channel(meta.user, &rho);
            let truth = h.dot_conj_unchecked(&bf.w[meta.user]).norm_sqr();
            assert!((surrogate - truth).abs() <= 1e-12 * truth.max(1e-300), "{surrogate} vs {truth}");
        }
    }

    #[test]
    fn penalty_gradient_coefficients() {
        let (inst, _, bf) = setup(2);
        let rho = ComplexVec::from_fn(inst.n_s(), |n| Complex64::from_polar(0.3 + 0.2 * n as f64, 0.7 * n as f64));
        let c = 2.5;
        let (p, layout) = build_p5(&inst, &bf, &rho, c).unwrap();
        for n in 0..inst.n_s() {
            // 2C·conj(ρ⁰_n) acting on ρ_n: real part on Re ρ_n, imaginary part on Im ρ_n
            assert!((p.objective[layout.rho_re + n] - 2.0 * c * rho[n].re).abs() < 1e-15);
            assert!((p.objective[layout.rho_im + n] - 2.0 * c * rho[n].im).abs() < 1e-15);
        }
        // surrogate objective at ρ⁰ equals the penalized objective there
        let mut x = vec![0.0; p.num_vars()];
        layout.set_rho(&mut x, &rho);
        let truth: f64 = c * rho.iter().map(|r| r.norm_sqr() - 1.0).sum::<f64>();
        assert!((p.value(&x) - truth).abs() < 1e-12);
    }

    #[test]
    fn sampled_phase_surrogate_is_a_lower_bound() {
        let (inst, rho, bf) = setup(3);
        let mut rng = RngStream::new(3, 3);
        let (p, layout) = build_p5(&inst, &bf, &rho, 0.1).unwrap();
        for _ in 0..50 {
            let trial = ComplexVec::from_fn(inst.n_s(), |_| {
                Complex64::from_polar(rng.uniform().sqrt(), 2.0 * std::f64::consts::PI * rng.uniform())
            });
            let mut x = vec![0.0; p.num_vars()];
            layout.set_rho(&mut x, &trial);
            for meta in &layout.snr_rows {
                let row = &p.rows[meta.row];
                let lhs: f64 = row.coeffs.iter().filter(|(j, _)| Some(*j) != meta.alpha_var).map(|&(j, c)| c * x[j]).sum();
                let surrogate = meta.scale * (lhs - row.lower);
                let h = inst.factors.iu_channel(meta.user, &trial);
                let truth = h.dot_conj_unchecked(&bf.w[meta.user]).norm_sqr();
                assert!(surrogate <= truth * (1.0 + 1e-12) + 1e-24);
            }
        }
    }

    #[test]
    fn beam_surrogate_identity_and_bound() {
        let (inst, rho, bf) = setup(4);
        let (p, layout) = build_p6(&inst, &rho, &bf).unwrap();
        let mut rng = RngStream::new(4, 4);
        for trial in 0..51 {
            let cand = if trial == 0 {
                bf.clone()
            } else {
                let mut b = bf.clone();
                for w in b.w.iter_mut().chain(b.v.iter_mut()) {
                    *w = ComplexVec::from_fn(inst.n_t, |_| rng.cn());
                }
                b
            };
            let mut x = vec![0.0; p.num_vars()];
            layout.set_beamformers(&mut x, &cand);
            for meta in &layout.snr_rows {
                let row = &p.rows[meta.row];
                let lhs: f64 = row.coeffs.iter().filter(|(j, _)| Some(*j) != meta.alpha_var).map(|&(j, c)| c * x[j]).sum();
                let surrogate = meta.scale * (lhs - row.lower);
                let h = inst.factors.iu_channel(meta.user, &rho);
                let truth = h.dot_conj_unchecked(&cand.w[meta.user]).norm_sqr();
                if trial == 0 {
                    assert!((surrogate - truth).abs() <= 1e-12 * truth);
                } else {
                    assert!(surrogate <= truth * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn one_hot_channel_touches_one_coordinate() {
        let (mut inst, rho, mut bf) = setup(5);
        inst.weights = vec![1.0, 0.0, 0.0];
        // kill the reflected path and make the direct channel one-hot on antenna 2
        for m in inst.factors.u.iter_mut() {
            *m = crate::numerics::ComplexMat::zeros(m.rows(), m.cols());
        }
        inst.factors.h_b[0] = ComplexVec::from_fn(4, |k| if k == 2 { Complex64::new(1e-3, 0.0) } else { Complex64::new(0.0, 0.0) });
        bf.w[0] = ComplexVec::from_fn(4, |_| Complex64::new(0.3, 0.1));
        let (p, layout) = build_p6(&inst, &rho, &bf).unwrap();
        let meta = &layout.snr_rows[0];
        let base = layout.w_vars[0].unwrap();
        for &(j, c) in &p.rows[meta.row].coeffs {
            if Some(j) == meta.alpha_var {
                continue;
            }
            let touches = j == base + 2 || j == base + 4 + 2;
            assert_eq!(c != 0.0, touches, "column {j} coefficient {c}");
        }
    }

    #[test]
    fn surrogate_reports_pass_on_random_instances() {
        for seed in 0..5 {
            let (mut inst, rho, bf) = setup(seed);
            inst.weights = vec![2.0, 5.0, 1.0];
            let mut rng = RngStream::new(seed, 11);
            let kinds = [
                SurrogateKind::SnrPhase(0),
                SurrogateKind::SnrPhase(2),
                SurrogateKind::EhPhase(1),
                SurrogateKind::Penalty,
                SurrogateKind::SnrBeam(1),
                SurrogateKind::EhBeam(0),
            ];
            for kind in kinds {
                let rep = verify_surrogate(kind, &inst, &rho, &bf, 0.05, 100, &mut rng).unwrap();
                assert!(rep.passed(), "{rep:?}");
            }
        }
    }

    #[test]
    fn zero_energy_beamformer_gives_flat_surrogate() {
        let (inst, rho, mut bf) = setup(6);
        bf.v[0] = ComplexVec::zeros(inst.n_t);
        let mut rng = RngStream::new(6, 6);
        let rep = verify_surrogate(SurrogateKind::EhBeam(0), &inst, &rho, &bf, 0.0, 10, &mut rng).unwrap();
        assert!((rep.f_tilde_value - inst.q).abs() <= 1e-15 * inst.q.max(1.0));
        let (p, layout) = build_p6(&inst, &rho, &bf).unwrap();
        let meta = &layout.eh_rows[0];
        assert!(p.rows[meta.row].coeffs.iter().all(|(_, c)| *c == 0.0));
    }

    #[test]
    fn builders_reject_bad_inputs() {
        let (mut inst, rho, bf) = setup(7);
        let mut short = bf.clone();
        short.w.pop();
        assert!(build_p6(&inst, &rho, &short).is_err());
        assert!(build_p5(&inst, &bf, &ComplexVec::zeros(2), 0.0).is_err());
        inst.weights[0] = -1.0;
        assert!(build_p5(&inst, &bf, &rho, 0.0).is_err());
    }
}
