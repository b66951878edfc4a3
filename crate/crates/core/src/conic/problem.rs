use std::fmt;

use crate::error::{Error, Result};

/// Sparse linear form `Σ coef·x[idx]`.
pub type SparseRow = Vec<(usize, f64)>;

pub(crate) fn eval_sparse(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * x[j]).sum()
}

/// `lower ≤ aᵀx ≤ upper`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub coeffs: SparseRow,
    pub lower: f64,
    pub upper: f64,
}

/// `‖A x + b‖ ≤ cᵀx + d`, with `A` stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub name: String,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub c: SparseRow,
    pub d: f64,
}

impl SocBlock {
    /// `(‖Ax + b‖, cᵀx + d)` at `x`.
    pub fn sides(&self, x: &[f64]) -> (f64, f64) {
        let lhs = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(r, b)| {
                let v = eval_sparse(r, x) + b;
                v * v
            })
            .sum::<f64>()
            .sqrt();
        (lhs, eval_sparse(&self.c, x) + self.d)
    }
}

/// Maximize `objectiveᵀx + objective_offset` subject to box bounds,
/// linear rows and second-order-cone blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProblem {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<SocBlock>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Adds a variable with bounds and zero objective weight; returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.var_names.push(name.into());
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.len() - 1
    }

    pub fn add_free_var(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: SparseRow, lower: f64, upper: f64) {
        self.rows.push(LinearRow { name: name.into(), coeffs, lower, upper });
    }

    pub fn add_soc(
        &mut self,
        name: impl Into<String>,
        a: Vec<SparseRow>,
        b: Vec<f64>,
        c: SparseRow,
        d: f64,
    ) {
        self.cones.push(SocBlock { name: name.into(), a, b, c, d });
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_offset
    }

    /// Checks index ranges, vector lengths and bound ordering.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (what, len) in [
            ("objective", self.objective.len()),
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch { op: what, left: (len, 1), right: (n, 1) });
            }
        }
        let check_row = |row: &[(usize, f64)]| -> Result<()> {
            for &(j, a) in row {
                if j >= n {
                    return Err(Error::IndexOutOfRange { what: "variable", index: j, len: n });
                }
                if !a.is_finite() {
                    return Err(Error::InvalidArgument("non-finite coefficient".into()));
                }
            }
            Ok(())
        };
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "bad bounds [{lo}, {hi}] on {}",
                    self.var_names[j]
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) || !self.objective_offset.is_finite() {
            return Err(Error::InvalidArgument("non-finite objective".into()));
        }
        for r in &self.rows {
            check_row(&r.coeffs)?;
            if r.lower.is_nan() || r.upper.is_nan() || r.lower > r.upper {
                return Err(Error::InvalidArgument(format!("bad bounds on row {}", r.name)));
            }
        }
        for c in &self.cones {
            if c.a.len() != c.b.len() {
                return Err(Error::DimensionMismatch {
                    op: "soc block",
                    left: (c.a.len(), n),
                    right: (c.b.len(), 1),
                });
            }
            for r in &c.a {
                check_row(r)?;
            }
            check_row(&c.c)?;
            if !c.d.is_finite() || c.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite data in {}", c.name)));
            }
        }
        Ok(())
    }
}

fn fmt_form(f: &mut fmt::Formatter<'_>, row: &[(usize, f64)], names: &[String]) -> fmt::Result {
    if row.is_empty() {
        return write!(f, "0");
    }
    for (k, &(j, a)) in row.iter().enumerate() {
        if k > 0 {
            write!(f, " {} ", if a < 0.0 { '-' } else { '+' })?;
            write!(f, "{:.9e} {}", a.abs(), names[j])?;
        } else {
            write!(f, "{:.9e} {}", a, names[j])?;
        }
    }
    Ok(())
}

/// One constraint per line; meant for eyeballing, not for parsing back.
impl fmt::Display for ConicProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "maximize ")?;
        let obj: SparseRow = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        fmt_form(f, &obj, &self.var_names)?;
        writeln!(f, " + {:.9e}", self.objective_offset)?;
        for (j, name) in self.var_names.iter().enumerate() {
            writeln!(f, "bound {name}: [{:e}, {:e}]", self.lower[j], self.upper[j])?;
        }
        for r in &self.rows {
            write!(f, "row {}: {:e} <= ", r.name, r.lower)?;
            fmt_form(f, &r.coeffs, &self.var_names)?;
            writeln!(f, " <= {:e}", r.upper)?;
        }
        for c in &self.cones {
            write!(f, "soc {}: || [", c.name)?;
            for (k, (r, b)) in c.a.iter().zip(&c.b).enumerate() {
                if k > 0 {
                    write!(f, "; ")?;
                }
                fmt_form(f, r, &self.var_names)?;
                write!(f, " + {b:e}")?;
            }
            write!(f, "] || <= ")?;
            fmt_form(f, &c.c, &self.var_names)?;
            writeln!(f, " + {:e}", c.d)?;
        }
        Ok(())
    }
}
