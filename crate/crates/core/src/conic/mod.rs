//! Small dense second-order-cone solver used by the per-slot subproblems.

mod check;
mod cone;
mod ipm;
mod problem;

pub use check::{check_solution, ConstraintKind, ResidualReport, Violation};
pub use problem::{ConicProblem, LinearRow, SocBlock, SparseRow};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// Threshold on the normalized infeasibility/unboundedness certificate.
    pub tol_infeas: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol_feas: 1e-6, tol_gap: 1e-6, tol_infeas: 1e-5, max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective value (maximization sense, offset included) at `x`.
    pub objective: f64,
    /// Largest constraint violation of `x`, recomputed from the problem data.
    pub primal_residual: f64,
    /// Relative dual residual, or the certificate ratio for infeasible and
    /// unbounded outcomes.
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves `problem`. Returns `Err` only for malformed input; numerical
/// trouble is reported through [`SolveStatus`].
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    ipm::solve_ipm(problem, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    fn unit_ball() -> ConicProblem {
        let mut p = ConicProblem::new();
        let x = p.add_free_var("x");
        p.set_objective(x, 1.0);
        p.add_soc("ball", vec![vec![(x, 1.0)]], vec![0.0], vec![], 1.0);
        p
    }

    #[test]
    fn unit_ball_extreme_point() {
        let p = unit_ball();
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        let report = check_solution(&p, &sol.x);
        assert!(report.max_violation <= 1e-6);
    }

    #[test]
    fn lp_vertex() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", 0.0, 1.0);
        p.set_objective(x, 1.0);
        p.set_objective(y, 1.0);
        p.add_row("sum", vec![(x, 1.0), (y, 1.0)], f64::NEG_INFINITY, 1.5);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.5).abs() < 1e-6);
    }

    #[test]
    fn equality_rows_and_offset() {
        // max x + y + 2 s.t. x - y = 0.2, |(x, y)| <= 1  ->  x = 0.8, y = 0.6
        let mut p = ConicProblem::new();
        let x = p.add_free_var("x");
        let y = p.add_free_var("y");
        p.set_objective(x, 1.0);
        p.set_objective(y, 1.0);
        p.objective_offset = 2.0;
        p.add_row("diff", vec![(x, 1.0), (y, -1.0)], 0.2, 0.2);
        p.add_soc("ball", vec![vec![(x, 1.0)], vec![(y, 1.0)]], vec![0.0, 0.0], vec![], 1.0);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.8).abs() < 1e-6 && (sol.x[1] - 0.6).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.objective - 3.4).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        p.set_objective(x, 1.0);
        p.add_row("cap", vec![(x, 1.0)], f64::NEG_INFINITY, -1.0);
        assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        let y = p.add_free_var("y");
        p.set_objective(x, 1.0);
        p.add_soc("cone", vec![vec![(y, 1.0)]], vec![0.0], vec![(x, 1.0)], 0.0);
        assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Unbounded);

        // ball and half-space that do not meet
        let mut p = ConicProblem::new();
        let x = p.add_free_var("x");
        let y = p.add_free_var("y");
        p.set_objective(y, 1.0);
        p.add_soc("ball", vec![vec![(x, 1.0)], vec![(y, 1.0)]], vec![0.0, 0.0], vec![], 1.0);
        p.add_row("far", vec![(x, 1.0), (y, 1.0)], 2.0, f64::INFINITY);
        assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn malformed_problem_is_an_error() {
        let mut p = unit_ball();
        p.rows.push(LinearRow { name: "bad".into(), coeffs: vec![(7, 1.0)], lower: 0.0, upper: 1.0 });
        assert!(solve(&p, &settings()).is_err());
    }

    #[test]
    fn ball_projection_matches_closed_form() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..50 {
            let c: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
            let r = 0.1 + 5.0 * rng.uniform();
            let mut p = ConicProblem::new();
            let v: Vec<usize> = (0..3).map(|k| p.add_free_var(format!("x{k}"))).collect();
            for k in 0..3 {
                p.set_objective(v[k], c[k]);
            }
            p.add_soc("ball", v.iter().map(|&j| vec![(j, 1.0)]).collect(), vec![0.0; 3], vec![], r);
            let sol = solve(&p, &settings()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            for k in 0..3 {
                assert!((sol.x[k] - r * c[k] / cn).abs() < 1e-5, "{:?} r={r}", sol.x);
            }
        }
    }

    /// Maximum of `cᵀx` over `{x : Mx ≤ h}` by enumerating every vertex.
    fn vertex_enumeration(c: &[f64], m: &[Vec<f64>], h: &[f64]) -> Option<f64> {
        let n = c.len();
        let k = m.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |r, col| m[idx[r]][col]);
            let rhs = DVector::from_fn(n, |r, _| h[idx[r]]);
            if a.determinant().abs() > 1e-9 {
                if let Some(x) = a.lu().solve(&rhs) {
                    let feasible = m
                        .iter()
                        .zip(h)
                        .all(|(row, hi)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= hi + 1e-9);
                    if feasible {
                        let val: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                        best = Some(best.map_or(val, |b| b.max(val)));
                    }
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = RngStream::new(23, 0);
        for case in 0..40 {
            let n = 2 + case % 5;
            let rows = 1 + (case / 5) % 4;
            let c: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let lo: Vec<f64> = (0..n).map(|_| -1.0 - rng.uniform()).collect();
            let hi: Vec<f64> = (0..n).map(|_| 1.0 + rng.uniform()).collect();
            let mut p = ConicProblem::new();
            let mut mrows = Vec::new();
            let mut hvec = Vec::new();
            for j in 0..n {
                p.add_var(format!("x{j}"), lo[j], hi[j]);
                p.set_objective(j, c[j]);
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                mrows.push(e.clone());
                hvec.push(hi[j]);
                e[j] = -1.0;
                mrows.push(e);
                hvec.push(-lo[j]);
            }
            for r in 0..rows {
                let a: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
                let b = 0.3 * rng.uniform();
                p.add_row(format!("r{r}"), a.iter().cloned().enumerate().collect(), f64::NEG_INFINITY, b);
                mrows.push(a);
                hvec.push(b);
            }
            let oracle = vertex_enumeration(&c, &mrows, &hvec).unwrap();
            let sol = solve(&p, &settings()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
            assert!((sol.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "case {case}: {} vs {oracle}", sol.objective);
        }
    }

    #[test]
    fn perturbed_solution_flags_the_violated_rows() {
        let p = unit_ball();
        let sol = solve(&p, &settings()).unwrap();
        let mut x = sol.x.clone();
        x[0] += 0.1;
        let report = check_solution(&p, &x);
        let bad = report.violated(1e-6);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].name, "ball");
        assert_eq!(bad[0].kind, ConstraintKind::Cone);
        assert!((bad[0].amount - 0.1).abs() < 1e-5);

        let mut p = ConicProblem::new();
        let a = p.add_var("a", 0.0, 1.0);
        let b = p.add_var("b", 0.0, 1.0);
        p.add_row("sum", vec![(a, 1.0), (b, 1.0)], f64::NEG_INFINITY, 1.5);
        let report = check_solution(&p, &[1.0, 0.6]);
        let names: Vec<&str> = report.violated(1e-9).iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["sum"]);
        let report = check_solution(&p, &[1.1, 0.3]);
        let names: Vec<&str> = report.violated(1e-9).iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["a"]);
    }

    #[test]
    fn dump_has_one_line_per_constraint() {
        let mut p = unit_ball();
        p.add_row("cap", vec![(0, 2.0)], f64::NEG_INFINITY, 3.0);
        let text = p.to_string();
        assert_eq!(text.lines().count(), 1 + 1 + 1 + 1);
        assert!(text.contains("soc ball"));
        assert!(text.contains("row cap"));
    }

    /// Random SOC-constrained problem with a bounded feasible set.
    fn random_problem(seed: u64, n: usize) -> ConicProblem {
        let mut rng = RngStream::new(seed, 99);
        let mut p = ConicProblem::new();
        for j in 0..n {
            p.add_var(format!("x{j}"), -3.0, 3.0);
            p.set_objective(j, rng.standard_normal());
        }
        for k in 0..2 {
            let a: Vec<SparseRow> = (0..n)
                .map(|_| (0..n).map(|j| (j, rng.standard_normal())).collect())
                .collect();
            let b: Vec<f64> = (0..n).map(|_| 0.3 * rng.standard_normal()).collect();
            let c: SparseRow = (0..n).map(|j| (j, 0.2 * rng.standard_normal())).collect();
            p.add_soc(format!("c{k}"), a, b, c, 2.0 + rng.uniform());
        }
        p.add_row("lin", (0..n).map(|j| (j, rng.standard_normal())).collect(), -1.0, 1.0);
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scaling_objective_keeps_argmax(seed in 0u64..10_000, n in 2usize..6, scale in 0.01f64..100.0) {
            let p = random_problem(seed, n);
            let mut q = p.clone();
            q.objective.iter_mut().for_each(|c| *c *= scale);
            let a = solve(&p, &settings()).unwrap();
            let b = solve(&q, &settings()).unwrap();
            prop_assert_eq!(a.status, SolveStatus::Optimal);
            prop_assert_eq!(b.status, SolveStatus::Optimal);
            for (u, v) in a.x.iter().zip(&b.x) {
                prop_assert!((u - v).abs() <= 1e-4, "{} vs {}", u, v);
            }
        }

        #[test]
        fn tightening_never_improves(seed in 0u64..10_000, n in 2usize..6, var in 0usize..6, frac in 0.0f64..1.0) {
            let p = random_problem(seed, n);
            let loose = solve(&p, &settings()).unwrap();
            prop_assert_eq!(loose.status, SolveStatus::Optimal);
            let mut q = p.clone();
            let j = var % n;
            q.upper[j] = q.lower[j] + frac * (q.upper[j] - q.lower[j]);
            q.rows[0].upper -= frac;
            let tight = solve(&q, &settings()).unwrap();
            if tight.status == SolveStatus::Optimal {
                prop_assert!(tight.objective <= loose.objective + 1e-6,
                    "{} > {}", tight.objective, loose.objective);
            } else {
                prop_assert_eq!(tight.status, SolveStatus::Infeasible);
            }
        }

        #[test]
        fn identical_input_gives_identical_bits(seed in 0u64..10_000, n in 2usize..6) {
            let p = random_problem(seed, n);
            let a = solve(&p, &settings()).unwrap();
            let b = solve(&p.clone(), &settings()).unwrap();
            prop_assert_eq!(a.status, b.status);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.x), bits(&b.x));
            prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }

        #[test]
        fn optimal_points_are_feasible(seed in 0u64..10_000, n in 2usize..6) {
            let p = random_problem(seed, n);
            let sol = solve(&p, &settings()).unwrap();
            prop_assert_eq!(sol.status, SolveStatus::Optimal);
            prop_assert!(check_solution(&p, &sol.x).max_violation <= 1e-6);
        }
    }
}
