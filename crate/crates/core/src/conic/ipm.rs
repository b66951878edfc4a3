//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//!
//! Internal standard form: minimize `qᵀx` s.t. `Ax = b`, `Gx + s = h`,
//! `s ∈ R₊^l × Q × … × Q`.

use nalgebra::{DMatrix, DVector};

use super::check::check_solution;
use super::cone::{dot, norm, ConeLayout, NtScaling};
use super::problem::{eval_sparse, ConicProblem, SparseRow};
use super::{ConicSolution, SolveStatus, SolverSettings};
use crate::error::Result;

struct SocMeta {
    support: Vec<usize>,
    /// rows of the cone block in support-local column indices
    local_rows: Vec<Vec<(usize, f64)>>,
    /// dense `G_kᵀ G_k` on the support, row-major
    gtg: Vec<f64>,
}

struct Canon {
    n: usize,
    q: Vec<f64>,
    a: Vec<SparseRow>,
    b: Vec<f64>,
    g: Vec<SparseRow>,
    h: Vec<f64>,
    layout: ConeLayout,
    socs: Vec<SocMeta>,
}

fn scaled(row: SparseRow, rhs: f64) -> (SparseRow, f64) {
    let nrm = row.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
    if nrm > 0.0 {
        (row.into_iter().map(|(j, a)| (j, a / nrm)).collect(), rhs / nrm)
    } else {
        (row, rhs)
    }
}

impl Canon {
    fn build(p: &ConicProblem) -> Self {
        let n = p.num_vars();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let (mut g, mut h) = (Vec::new(), Vec::new());
        let mut push_lp = |row: SparseRow, lo: f64, hi: f64, a: &mut Vec<SparseRow>, b: &mut Vec<f64>| {
            if lo == hi && lo.is_finite() {
                let (r, v) = scaled(row, lo);
                a.push(r);
                b.push(v);
                return;
            }
            if hi.is_finite() {
                let (r, v) = scaled(row.clone(), hi);
                g.push(r);
                h.push(v);
            }
            if lo.is_finite() {
                let neg = row.iter().map(|&(j, c)| (j, -c)).collect();
                let (r, v) = scaled(neg, -lo);
                g.push(r);
                h.push(v);
            }
        };
        for j in 0..n {
            push_lp(vec![(j, 1.0)], p.lower[j], p.upper[j], &mut a, &mut b);
        }
        for r in &p.rows {
            push_lp(r.coeffs.clone(), r.lower, r.upper, &mut a, &mut b);
        }
        let lp = g.len();
        let mut socs_layout = Vec::new();
        let mut socs = Vec::new();
        for c in &p.cones {
            let off = g.len();
            let mut rows: Vec<SparseRow> = Vec::with_capacity(c.a.len() + 1);
            let mut rhs = Vec::with_capacity(c.a.len() + 1);
            rows.push(c.c.iter().map(|&(j, v)| (j, -v)).collect());
            rhs.push(c.d);
            for (r, bv) in c.a.iter().zip(&c.b) {
                rows.push(r.iter().map(|&(j, v)| (j, -v)).collect());
                rhs.push(*bv);
            }
            let scale = rows
                .iter()
                .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let mut support: Vec<usize> = rows.iter().flatten().map(|(j, _)| *j).collect();
            support.sort_unstable();
            support.dedup();
            let local = |j: usize| support.binary_search(&j).unwrap();
            let local_rows: Vec<Vec<(usize, f64)>> = rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (local(j), v / scale)).collect())
                .collect();
            let k = support.len();
            let mut gtg = vec![0.0; k * k];
            for r in &local_rows {
                for &(i, vi) in r {
                    for &(j, vj) in r {
                        gtg[i * k + j] += vi * vj;
                    }
                }
            }
            socs_layout.push((off, rows.len()));
            for (r, v) in rows.into_iter().zip(rhs) {
                g.push(r.into_iter().map(|(j, x)| (j, x / scale)).collect());
                h.push(v / scale);
            }
            socs.push(SocMeta { support, local_rows, gtg });
        }
        let qmax = p.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let qs = if qmax > 0.0 { qmax } else { 1.0 };
        let q = p.objective.iter().map(|c| -c / qs).collect();
        Self { n, q, a, b, g, h, layout: ConeLayout { lp, socs: socs_layout }, socs }
    }

    fn p(&self) -> usize {
        self.a.len()
    }

    fn m(&self) -> usize {
        self.g.len()
    }

    fn mul(rows: &[SparseRow], x: &[f64]) -> Vec<f64> {
        rows.iter().map(|r| eval_sparse(r, x)).collect()
    }

    fn mul_t(rows: &[SparseRow], y: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &yi) in rows.iter().zip(y) {
            if yi != 0.0 {
                for &(j, a) in r {
                    out[j] += a * yi;
                }
            }
        }
        out
    }

    /// `Gᵀ W⁻² G` (or `GᵀG` when `scaling` is `None`).
    fn hessian(&self, scaling: Option<&NtScaling>) -> DMatrix<f64> {
        let n = self.n;
        let mut hm = DMatrix::<f64>::zeros(n, n);
        for i in 0..self.layout.lp {
            let wt = scaling.map_or(1.0, |s| 1.0 / (s.lp[i] * s.lp[i]));
            let r = &self.g[i];
            for &(a, va) in r {
                for &(b, vb) in r {
                    hm[(a, b)] += wt * va * vb;
                }
            }
        }
        for (c, meta) in self.socs.iter().enumerate() {
            let k = meta.support.len();
            match scaling {
                None => {
                    for i in 0..k {
                        for j in 0..k {
                            hm[(meta.support[i], meta.support[j])] += meta.gtg[i * k + j];
                        }
                    }
                }
                Some(sc) => {
                    let s = &sc.socs[c];
                    // W⁻² = (I + 4(uᵀu) u uᵀ - 2 u wᵀ - 2 w uᵀ) / η²
                    let mut au = vec![0.0; k];
                    let mut aw = vec![0.0; k];
                    for (r, row) in meta.local_rows.iter().enumerate() {
                        for &(j, v) in row {
                            au[j] += v * s.u[r];
                            aw[j] += v * s.wbar[r];
                        }
                    }
                    let uu = 4.0 * dot(&s.u, &s.u);
                    let inv = 1.0 / (s.eta * s.eta);
                    for i in 0..k {
                        for j in 0..k {
                            let v = meta.gtg[i * k + j] + uu * au[i] * au[j]
                                - 2.0 * au[i] * aw[j]
                                - 2.0 * aw[i] * au[j];
                            hm[(meta.support[i], meta.support[j])] += inv * v;
                        }
                    }
                }
            }
        }
        hm
    }
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Kkt<'a> {
    canon: &'a Canon,
    hm: DMatrix<f64>,
    factor: Factor,
}

impl<'a> Kkt<'a> {
    fn new(canon: &'a Canon, hm: DMatrix<f64>) -> Option<Self> {
        let n = canon.n;
        let p = canon.p();
        let maxdiag = (0..n).map(|i| hm[(i, i)].abs()).fold(1.0, f64::max);
        let mut delta = 1e-13 * maxdiag;
        for _ in 0..6 {
            let factor = if p == 0 {
                let mut reg = hm.clone();
                for i in 0..n {
                    reg[(i, i)] += delta;
                }
                reg.cholesky().map(Factor::Chol)
            } else {
                let mut k = DMatrix::<f64>::zeros(n + p, n + p);
                k.view_mut((0, 0), (n, n)).copy_from(&hm);
                for i in 0..n {
                    k[(i, i)] += delta;
                }
                for (r, row) in canon.a.iter().enumerate() {
                    for &(j, v) in row {
                        k[(n + r, j)] += v;
                        k[(j, n + r)] += v;
                    }
                    k[(n + r, n + r)] -= delta;
                }
                let lu = k.lu();
                if lu.is_invertible() {
                    Some(Factor::Lu(lu))
                } else {
                    None
                }
            };
            if let Some(factor) = factor {
                return Some(Self { canon, hm, factor });
            }
            delta = (delta * 100.0).max(1e-12);
        }
        None
    }

    fn raw_solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.canon.n;
        match &self.factor {
            Factor::Chol(ch) => {
                let x = ch.solve(&DVector::from_column_slice(r1));
                (x.as_slice().to_vec(), Vec::new())
            }
            Factor::Lu(lu) => {
                let mut rhs = DVector::<f64>::zeros(n + r2.len());
                rhs.as_mut_slice()[..n].copy_from_slice(r1);
                rhs.as_mut_slice()[n..].copy_from_slice(r2);
                let x = lu.solve(&rhs).unwrap_or(rhs);
                (x.as_slice()[..n].to_vec(), x.as_slice()[n..].to_vec())
            }
        }
    }

    /// Solves `[H Aᵀ; A 0] [x; y] = [r1; r2]` with iterative refinement.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.canon;
        let (mut x, mut y) = self.raw_solve(r1, r2);
        for _ in 0..3 {
            let hx = &self.hm * DVector::from_column_slice(&x);
            let aty = Canon::mul_t(&c.a, &y, c.n);
            let e1: Vec<f64> = (0..c.n).map(|i| r1[i] - hx[i] - aty[i]).collect();
            let ax = Canon::mul(&c.a, &x);
            let e2: Vec<f64> = r2.iter().zip(&ax).map(|(r, v)| r - v).collect();
            let err = norm(&e1).max(norm(&e2));
            if err <= 1e-14 * (1.0 + norm(r1).max(norm(r2))) {
                break;
            }
            let (dx, dy) = self.raw_solve(&e1, &e2);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
        }
        (x, y)
    }

    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 -W²] [dx; dy; dz] = [a1; a2; a3]`,
    /// refining against the unreduced system.
    fn solve_full(
        &self,
        scaling: Option<&NtScaling>,
        a1: &[f64],
        a2: &[f64],
        a3: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c = self.canon;
        let (mut dx, mut dy, mut dz) = self.solve_reduced(scaling, a1, a2, a3);
        let scale = 1.0 + norm(a1).max(norm(a2)).max(norm(a3));
        for _ in 0..3 {
            let aty = Canon::mul_t(&c.a, &dy, c.n);
            let gtz = Canon::mul_t(&c.g, &dz, c.n);
            let e1: Vec<f64> = (0..c.n).map(|i| a1[i] - aty[i] - gtz[i]).collect();
            let ax = Canon::mul(&c.a, &dx);
            let e2: Vec<f64> = a2.iter().zip(&ax).map(|(r, v)| r - v).collect();
            let gx = Canon::mul(&c.g, &dx);
            let w2z = match scaling {
                Some(s) => {
                    let wz = s.apply_w(&c.layout, &dz);
                    s.apply_w(&c.layout, &wz)
                }
                None => dz.clone(),
            };
            let e3: Vec<f64> = (0..a3.len()).map(|i| a3[i] - gx[i] + w2z[i]).collect();
            if norm(&e1).max(norm(&e2)).max(norm(&e3)) <= 1e-15 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_reduced(scaling, &e1, &e2, &e3);
            axpy(&mut dx, 1.0, &cx);
            axpy(&mut dy, 1.0, &cy);
            axpy(&mut dz, 1.0, &cz);
        }
        (dx, dy, dz)
    }

    fn solve_reduced(
        &self,
        scaling: Option<&NtScaling>,
        a1: &[f64],
        a2: &[f64],
        a3: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c = self.canon;
        let l = &c.layout;
        let w3 = match scaling {
            Some(s) => s.apply_winv2(l, a3),
            None => a3.to_vec(),
        };
        let gt = Canon::mul_t(&c.g, &w3, c.n);
        let r1: Vec<f64> = a1.iter().zip(&gt).map(|(a, b)| a + b).collect();
        let (dx, dy) = self.solve(&r1, a2);
        let gdx = Canon::mul(&c.g, &dx);
        let diff: Vec<f64> = gdx.iter().zip(a3).map(|(a, b)| a - b).collect();
        let dz = match scaling {
            Some(s) => s.apply_winv2(l, &diff),
            None => diff,
        };
        (dx, dy, dz)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

pub(crate) fn solve_ipm(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    problem.validate()?;
    let canon = Canon::build(problem);
    let n = canon.n;
    let m = canon.m();
    let layout = &canon.layout;

    let finish = |status: SolveStatus, x: Vec<f64>, dres: f64, gap: f64, iterations: usize| {
        let report = check_solution(problem, &x);
        let objective = problem.value(&x);
        ConicSolution {
            status,
            objective,
            primal_residual: report.max_violation,
            dual_residual: dres,
            gap,
            iterations,
            x,
        }
    };

    if m == 0 && canon.p() == 0 {
        return Ok(if canon.q.iter().all(|&v| v == 0.0) {
            finish(SolveStatus::Optimal, vec![0.0; n], 0.0, 0.0, 0)
        } else {
            finish(SolveStatus::Unbounded, vec![0.0; n], f64::NAN, f64::NAN, 0)
        });
    }

    let Some(kkt0) = Kkt::new(&canon, canon.hessian(None)) else {
        return Ok(finish(SolveStatus::IterationLimit, vec![0.0; n], f64::NAN, f64::NAN, 0));
    };
    let zero_n = vec![0.0; n];
    let zero_m = vec![0.0; m];
    let (x0, _, zt) = kkt0.solve_full(None, &zero_n, &canon.b, &canon.h);
    let mut x = x0;
    let mut s: Vec<f64> = zt.iter().map(|v| -v).collect();
    let neg_q: Vec<f64> = canon.q.iter().map(|v| -v).collect();
    let (_, y0, z0) = kkt0.solve_full(None, &neg_q, &vec![0.0; canon.p()], &zero_m);
    let mut y = y0;
    let mut z = z0;
    layout.shift_into_interior(&mut s);
    layout.shift_into_interior(&mut z);
    drop(kkt0);
    let (mut tau, mut kappa) = (1.0f64, 1.0f64);

    let feas_tol = settings.tol_feas * 1e-2;
    let gap_tol = settings.tol_gap * 1e-2;
    let infeas_tol = settings.tol_infeas;
    let degree = layout.degree() as f64 + 1.0;
    let nb = 1.0 + norm(&canon.b);
    let nh = 1.0 + norm(&canon.h);
    let nq = 1.0 + norm(&canon.q);

    let mut last_dres = f64::NAN;
    let mut last_gap = f64::NAN;
    let mut stalls = 0;
    let mut tighten = 1.0;
    // best iterate meeting the caller's (looser) tolerances: (merit, x, dres, gap, iter)
    let mut best: Option<(f64, Vec<f64>, f64, f64, usize)> = None;
    for iter in 0..=settings.max_iters {
        let ax = Canon::mul(&canon.a, &x);
        let gx = Canon::mul(&canon.g, &x);
        let aty = Canon::mul_t(&canon.a, &y, n);
        let gtz = Canon::mul_t(&canon.g, &z, n);
        let rx: Vec<f64> = (0..n).map(|i| aty[i] + gtz[i] + canon.q[i] * tau).collect();
        let ry: Vec<f64> = (0..canon.p()).map(|i| ax[i] - canon.b[i] * tau).collect();
        let rz: Vec<f64> = (0..m).map(|i| gx[i] + s[i] - canon.h[i] * tau).collect();
        let qx = dot(&canon.q, &x);
        let by_hz = dot(&canon.b, &y) + dot(&canon.h, &z);
        let rt = kappa + qx + by_hz;
        let sz = dot(&s, &z);
        let mu = (sz + tau * kappa) / degree;

        let pres = (norm(&ry) / nb).max(norm(&rz) / nh) / tau;
        let dres = norm(&rx) / nq / tau;
        let gap = sz / (tau * tau);
        let pcost = qx / tau;
        let dcost = -by_hz / tau;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        last_dres = dres;
        last_gap = gap;
        log::trace!(
            "ipm {iter:3} pcost {pcost:+.6e} dcost {dcost:+.6e} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} tau {tau:.2e} kappa {kappa:.2e}"
        );

        let merit = pres.max(dres).max(gap.min(relgap) * settings.tol_feas / settings.tol_gap);
        if pres <= settings.tol_feas
            && dres <= settings.tol_feas
            && gap.min(relgap) <= settings.tol_gap
            && best.as_ref().map_or(true, |b| merit < b.0)
        {
            let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
            if check_solution(problem, &xs).max_violation <= settings.tol_feas {
                best = Some((merit, xs, dres, gap, iter));
            }
        }
        if best.as_ref().is_some_and(|b| merit > 1e3 * b.0) {
            // iterates are deteriorating numerically
            break;
        }

        let ft = feas_tol * tighten;
        let gt = gap_tol * tighten;
        if pres <= ft && dres <= ft && (gap <= gt || relgap <= gt) {
            let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
            let viol = check_solution(problem, &xs).max_violation;
            if viol <= settings.tol_feas || tighten < 1e-4 {
                let status = if viol <= settings.tol_feas {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::IterationLimit
                };
                return Ok(finish(status, xs, dres, gap, iter));
            }
            tighten *= 1e-2;
        }
        if by_hz < 0.0 && tau < kappa {
            let dual_ray: Vec<f64> = aty.iter().zip(&gtz).map(|(a, b)| a + b).collect();
            let cert = norm(&dual_ray) / -by_hz;
            if cert <= infeas_tol {
                return Ok(finish(SolveStatus::Infeasible, x.iter().map(|v| v / tau).collect(), cert, gap, iter));
            }
        }
        if qx < 0.0 && tau < kappa {
            let gxs: Vec<f64> = gx.iter().zip(&s).map(|(a, b)| a + b).collect();
            let cert = norm(&ax).max(norm(&gxs)) / -qx;
            if cert <= infeas_tol {
                return Ok(finish(SolveStatus::Unbounded, x.iter().map(|v| v / tau).collect(), cert, gap, iter));
            }
        }
        if iter == settings.max_iters || stalls >= 5 {
            break;
        }

        let Some(scaling) = NtScaling::new(layout, &s, &z) else {
            break;
        };
        let Some(kkt) = Kkt::new(&canon, canon.hessian(Some(&scaling))) else {
            break;
        };
        let lam = &scaling.lambda;
        let (u1x, u1y, u1z) = kkt.solve_full(Some(&scaling), &neg_q, &canon.b, &canon.h);
        let f1 = dot(&canon.q, &u1x) + dot(&canon.b, &u1y) + dot(&canon.h, &u1z);

        // direction for a given complementarity target
        let direction = |eta: f64, ds_target: &[f64], dk_target: f64| {
            let lds = layout.circ_inverse(lam, ds_target);
            let wl = scaling.apply_w(layout, &lds);
            let a1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let a2: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let a3: Vec<f64> = rz.iter().zip(&wl).map(|(r, w)| -eta * r - w).collect();
            let (u2x, u2y, u2z) = kkt.solve_full(Some(&scaling), &a1, &a2, &a3);
            let f2 = dot(&canon.q, &u2x) + dot(&canon.b, &u2y) + dot(&canon.h, &u2z);
            let dtau = (-eta * rt - dk_target / tau - f2) / (f1 - kappa / tau);
            let mut dx = u2x;
            axpy(&mut dx, dtau, &u1x);
            let mut dy = u2y;
            axpy(&mut dy, dtau, &u1y);
            let mut dz = u2z;
            axpy(&mut dz, dtau, &u1z);
            // ds = W(λ⋄d_s − W dz)
            let wdz = scaling.apply_w(layout, &dz);
            let inner: Vec<f64> = lds.iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let ds = scaling.apply_w(layout, &inner);
            let dkappa = (dk_target - kappa * dtau) / tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };
        let step_len = |dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64| {
            let mut t = layout.max_step(&s, ds, 1e6).min(layout.max_step(&z, dz, 1e6));
            if dtau < 0.0 {
                t = t.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                t = t.min(-kappa / dkappa);
            }
            t
        };

        let ll = layout.circ(lam, lam);
        let aff_ds: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, _, dz_a, ds_a, dtau_a, dk_a) = direction(1.0, &aff_ds, -tau * kappa);
        let alpha_aff = step_len(&dz_a, &ds_a, dtau_a, dk_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        let winv_ds = scaling.apply_winv(layout, &ds_a);
        let w_dz = scaling.apply_w(layout, &dz_a);
        let corr = layout.circ(&winv_ds, &w_dz);
        let e = layout.identity();
        let comb_ds: Vec<f64> = (0..m).map(|i| -ll[i] - corr[i] + sigma * mu * e[i]).collect();
        let comb_dk = -tau * kappa - dtau_a * dk_a + sigma * mu;
        let (dx, dy, dz, ds, dtau, dk) = direction(1.0 - sigma, &comb_ds, comb_dk);
        let alpha = (0.99 * step_len(&dz, &ds, dtau, dk)).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        axpy(&mut x, alpha, &dx);
        axpy(&mut y, alpha, &dy);
        axpy(&mut z, alpha, &dz);
        axpy(&mut s, alpha, &ds);
        tau += alpha * dtau;
        kappa += alpha * dk;
        if !(tau > 0.0 && kappa > 0.0) || x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    if let Some((_, xs, dres, gap, iter)) = best {
        return Ok(finish(SolveStatus::Optimal, xs, dres, gap, iter));
    }
    let xs: Vec<f64> = if tau > 0.0 && x.iter().all(|v| v.is_finite()) {
        x.iter().map(|v| v / tau).collect()
    } else {
        vec![0.0; n]
    };
    Ok(finish(SolveStatus::IterationLimit, xs, last_dres, last_gap, settings.max_iters))
}
