//! Mixed-integer linear program container and its LP-format text dump.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// A linear constraint: sum of coefficient * variable {<=, >=, =} rhs.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Provenance label ("pair movable/fixed case1 v0" etc.), used for
    /// infeasibility reporting and the text dump.
    pub label: String,
}

/// Affine expression over model variables.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> LinExpr {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(idx: usize) -> LinExpr {
        LinExpr { terms: vec![(idx, 1.0)], constant: 0.0 }
    }

    pub fn plus_var(mut self, idx: usize, coeff: f64) -> LinExpr {
        self.terms.push((idx, coeff));
        self
    }

    pub fn plus_const(mut self, c: f64) -> LinExpr {
        self.constant += c;
        self
    }

    /// self - other.
    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        let mut terms = self.terms.clone();
        for &(v, c) in &other.terms {
            terms.push((v, -c));
        }
        LinExpr { terms, constant: self.constant - other.constant }
    }

    /// Value range over the variable bounds.
    pub fn range(&self, lower: &[f64], upper: &[f64]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for &(v, c) in &self.terms {
            if c >= 0.0 {
                lo += c * lower[v];
                hi += c * upper[v];
            } else {
                lo += c * upper[v];
                hi += c * lower[v];
            }
        }
        (lo, hi)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// The MILP: continuous shift variables and their absolute-value auxiliaries,
/// binary indicator variables, linear constraints, and a minimization
/// objective.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub var_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub is_binary: Vec<bool>,
    /// Objective coefficients (minimize).
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub big_m: f64,
}

impl MilpModel {
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.var_names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.is_binary.push(false);
        self.objective.push(0.0);
        self.var_names.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let idx = self.add_var(name, 0.0, 1.0);
        self.is_binary[idx] = true;
        idx
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Adds `expr sense rhs` moving the expression constant to the rhs.
    pub fn add_constraint(&mut self, expr: LinExpr, sense: Sense, rhs: f64, label: impl Into<String>) {
        let mut terms = expr.terms;
        // Merge duplicate variables for cleanliness.
        terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.constraints.push(Constraint {
            terms: merged,
            sense,
            rhs: rhs - expr.constant,
            label: label.into(),
        });
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            for &(v, _) in &c.terms {
                if v >= self.n_vars() {
                    return Err(Error::Milp(format!(
                        "constraint {} references undeclared variable {v}",
                        c.label
                    )));
                }
            }
        }
        for v in 0..self.n_vars() {
            if self.lower[v] > self.upper[v] {
                return Err(Error::Milp(format!("variable {} has empty bounds", self.var_names[v])));
            }
        }
        Ok(())
    }

    /// Writes the model in LP-style text for cross-checking against external
    /// solvers.
    pub fn write_lp(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "\\ merge milp (big_m = {})", self.big_m)?;
        writeln!(out, "Minimize")?;
        let mut obj = String::from(" obj:");
        let mut any = false;
        for (v, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                obj.push_str(&format!(" {} {} {}", if c < 0.0 { "-" } else { "+" }, c.abs(), self.var_names[v]));
                any = true;
            }
        }
        if !any {
            obj.push_str(" 0 x_dummy");
        }
        writeln!(out, "{obj}")?;
        writeln!(out, "Subject To")?;
        for (i, c) in self.constraints.iter().enumerate() {
            let mut line = format!(" c{i}:");
            for &(v, coeff) in &c.terms {
                line.push_str(&format!(
                    " {} {} {}",
                    if coeff < 0.0 { "-" } else { "+" },
                    coeff.abs(),
                    self.var_names[v]
                ));
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            line.push_str(&format!(" {op} {}", c.rhs));
            writeln!(out, "{line} \\ {}", c.label)?;
        }
        writeln!(out, "Bounds")?;
        for v in 0..self.n_vars() {
            writeln!(out, " {} <= {} <= {}", self.lower[v], self.var_names[v], self.upper[v])?;
        }
        let binaries: Vec<&String> = (0..self.n_vars())
            .filter(|&v| self.is_binary[v])
            .map(|v| &self.var_names[v])
            .collect();
        if !binaries.is_empty() {
            writeln!(out, "Binaries")?;
            let mut line = String::from(" ");
            for b in binaries {
                line.push_str(b);
                line.push(' ');
            }
            writeln!(out, "{line}")?;
        }
        writeln!(out, "End")?;
        out.flush()?;
        Ok(())
    }

    /// True when `x` satisfies every constraint and bound within `tol`.
    pub fn is_feasible_point(&self, x: &[f64], tol: f64) -> bool {
        for v in 0..self.n_vars() {
            if x[v] < self.lower[v] - tol || x[v] > self.upper[v] + tol {
                return false;
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, coeff)| coeff * x[v]).sum();
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + tol,
                Sense::Ge => lhs >= c.rhs - tol,
                Sense::Eq => (lhs - c.rhs).abs() <= tol,
            };
            if !ok {
                return false;
            }
        }
        true
    }
}
