use super::problem::{eval_sparse, ConicProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Bound,
    Row,
    Cone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub name: String,
    /// Amount by which the constraint is violated; `0` when satisfied.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub entries: Vec<Violation>,
    pub max_violation: f64,
}

impl ResidualReport {
    pub fn violated(&self, tol: f64) -> Vec<&Violation> {
        self.entries.iter().filter(|v| v.amount > tol).collect()
    }
}

fn interval_violation(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Re-evaluates every constraint of `problem` at `x` from the raw problem data.
pub fn check_solution(problem: &ConicProblem, x: &[f64]) -> ResidualReport {
    assert_eq!(x.len(), problem.num_vars(), "solution dimension");
    let mut entries = Vec::new();
    for (j, name) in problem.var_names.iter().enumerate() {
        entries.push(Violation {
            kind: ConstraintKind::Bound,
            name: name.clone(),
            amount: interval_violation(x[j], problem.lower[j], problem.upper[j]),
        });
    }
    for r in &problem.rows {
        let v = eval_sparse(&r.coeffs, x);
        entries.push(Violation {
            kind: ConstraintKind::Row,
            name: r.name.clone(),
            amount: interval_violation(v, r.lower, r.upper),
        });
    }
    for c in &problem.cones {
        let (lhs, rhs) = c.sides(x);
        entries.push(Violation {
            kind: ConstraintKind::Cone,
            name: c.name.clone(),
            amount: (lhs - rhs).max(0.0),
        });
    }
    let max_violation = entries
        .iter()
        .map(|v| if v.amount.is_nan() { f64::INFINITY } else { v.amount })
        .fold(0.0, f64::max);
    ResidualReport { entries, max_violation }
}
