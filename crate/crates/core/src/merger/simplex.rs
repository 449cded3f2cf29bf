//! Bounded-variable primal simplex with a two-phase start.
//!
//! Solves: minimize c.x subject to linear constraints and box bounds.
//! Each constraint gets one slack variable to reach equality form; phase 1
//! drives a full set of artificial basics to zero, phase 2 optimizes the
//! real objective. Dense tableau, Dantzig pricing with a Bland fallback
//! after long degenerate runs, deterministic tie-breaking throughout.

use super::milp::{Constraint, Sense};

const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Values of the structural variables (bounds included).
    pub x: Vec<f64>,
}

struct Tableau {
    m: usize,
    total: usize,
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    degenerate_steps: usize,
    bland: bool,
}

/// Minimizes `objective` over the structural variables subject to bounds and
/// constraints. All structural bounds must have at least one finite side.
pub fn solve_lp(
    lower: &[f64],
    upper: &[f64],
    objective: &[f64],
    constraints: &[Constraint],
) -> LpResult {
    let n = lower.len();
    let m = constraints.len();
    for v in 0..n {
        if lower[v] > upper[v] {
            return LpResult { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] };
        }
    }

    // Augment with one slack per row.
    let total = n + m + m; // structural + slack + artificial
    let mut lo = vec![0.0; total];
    let mut up = vec![0.0; total];
    lo[..n].copy_from_slice(lower);
    up[..n].copy_from_slice(upper);
    for (i, c) in constraints.iter().enumerate() {
        let (l, u) = match c.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lo[n + i] = l;
        up[n + i] = u;
        lo[n + m + i] = 0.0;
        up[n + m + i] = f64::INFINITY;
    }

    // Dense rows.
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; total]; m];
    let mut rhs: Vec<f64> = vec![0.0; m];
    for (i, c) in constraints.iter().enumerate() {
        for &(v, coeff) in &c.terms {
            rows[i][v] += coeff;
        }
        rows[i][n + i] = 1.0;
        rhs[i] = c.rhs;
    }

    // Nonbasic start: every structural/slack variable at a finite bound
    // (the one nearer zero when both are finite).
    let mut x = vec![0.0; total];
    let mut at_upper = vec![false; total];
    for v in 0..n + m {
        let (l, u) = (lo[v], up[v]);
        let (val, upper_flag) = if l.is_finite() && u.is_finite() {
            if u.abs() < l.abs() {
                (u, true)
            } else {
                (l, false)
            }
        } else if l.is_finite() {
            (l, false)
        } else if u.is_finite() {
            (u, true)
        } else {
            (0.0, false) // free variable; not produced by the merge models
        };
        x[v] = val;
        at_upper[v] = upper_flag;
    }

    // Artificials absorb the residuals; flip row signs so they start at +|r|.
    let mut basis = Vec::with_capacity(m);
    let mut in_basis = vec![false; total];
    for i in 0..m {
        let r: f64 = rhs[i] - rows[i][..n + m].iter().zip(&x[..n + m]).map(|(a, b)| a * b).sum::<f64>();
        if r < 0.0 {
            for a in rows[i].iter_mut() {
                *a = -*a;
            }
            rhs[i] = -rhs[i];
        }
        rows[i][n + m + i] = 1.0;
        let art = n + m + i;
        x[art] = r.abs();
        basis.push(art);
        in_basis[art] = true;
    }

    let mut t = Tableau {
        m,
        total,
        tab: rows,
        basis,
        in_basis,
        x,
        lower: lo,
        upper: up,
        at_upper,
        cost: vec![0.0; total],
        reduced: vec![0.0; total],
        degenerate_steps: 0,
        bland: false,
    };

    // Phase 1: minimize the sum of artificials.
    for i in 0..m {
        t.cost[n + m + i] = 1.0;
    }
    t.recompute_reduced();
    if t.run() == LpStatus::Unbounded {
        // Phase 1 objective is bounded below by zero; numerical trouble.
        return LpResult { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] };
    }
    let infeasibility: f64 = (0..m).map(|i| t.x[n + m + i].max(0.0)).sum();
    if infeasibility > FEAS_TOL {
        return LpResult { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] };
    }

    // Phase 2: real objective; artificials pinned to zero.
    for i in 0..m {
        t.cost[n + m + i] = 0.0;
        t.upper[n + m + i] = 0.0;
        t.x[n + m + i] = t.x[n + m + i].clamp(0.0, 0.0);
    }
    for (v, &c) in objective.iter().enumerate() {
        t.cost[v] = c;
    }
    t.degenerate_steps = 0;
    t.bland = false;
    t.recompute_reduced();
    let status = t.run();
    if status == LpStatus::Unbounded {
        return LpResult { status, objective: f64::NEG_INFINITY, x: vec![] };
    }

    let obj: f64 = objective.iter().zip(&t.x[..n]).map(|(c, v)| c * v).sum();
    LpResult { status: LpStatus::Optimal, objective: obj, x: t.x[..n].to_vec() }
}

impl Tableau {
    fn recompute_reduced(&mut self) {
        for j in 0..self.total {
            self.reduced[j] = self.cost[j];
        }
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.total {
                    self.reduced[j] -= cb * self.tab[i][j];
                }
            }
        }
    }

    /// Runs simplex iterations to optimality or unboundedness.
    fn run(&mut self) -> LpStatus {
        let max_iters = 200 * (self.m + self.total) + 5000;
        for _ in 0..max_iters {
            let entering = self.price();
            let (q, dir) = match entering {
                None => return LpStatus::Optimal,
                Some(e) => e,
            };
            match self.ratio_test(q, dir) {
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Flip(theta) => self.apply_flip(q, dir, theta),
                Step::Pivot(row, theta, to_upper) => self.apply_pivot(q, dir, row, theta, to_upper),
            }
        }
        // Iteration cap: fall back to declaring optimality at the current
        // basic solution only if no improving direction remains under Bland.
        self.bland = true;
        if self.price().is_none() {
            LpStatus::Optimal
        } else {
            LpStatus::Unbounded
        }
    }

    /// Picks the entering variable: most attractive reduced cost, lowest
    /// index under Bland's rule.
    fn price(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (var, dir, score)
        for j in 0..self.total {
            if self.in_basis[j] {
                continue;
            }
            if self.lower[j] == self.upper[j] {
                continue; // fixed variable can't move
            }
            let d = self.reduced[j];
            let (can_improve, dir) = if self.at_upper[j] {
                (d > COST_TOL, -1.0)
            } else {
                (d < -COST_TOL, 1.0)
            };
            if !can_improve {
                continue;
            }
            if self.bland {
                return Some((j, dir));
            }
            let score = d.abs();
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, q: usize, dir: f64) -> Step {
        // Entering variable's own travel before hitting its other bound.
        let own = self.upper[q] - self.lower[q];
        let mut theta = if own.is_finite() { own } else { f64::INFINITY };
        let mut leaving: Option<(usize, bool)> = None; // (row, leaves_at_upper)

        let mut candidates: Vec<(usize, f64, bool)> = Vec::new();
        for i in 0..self.m {
            let a = self.tab[i][q];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * a; // change rate of the basic variable
            if rate < 0.0 {
                if self.lower[b].is_finite() {
                    let room = self.x[b] - self.lower[b];
                    candidates.push((i, room / -rate, false));
                }
            } else if self.upper[b].is_finite() {
                let room = self.upper[b] - self.x[b];
                candidates.push((i, room / rate, true));
            }
        }
        for &(i, t, hits_upper) in &candidates {
            let t = t.max(0.0);
            if t < theta - 1e-12 {
                theta = t;
                leaving = Some((i, hits_upper));
            }
        }
        if theta.is_infinite() {
            return Step::Unbounded;
        }
        match leaving {
            None => Step::Flip(theta),
            Some(_) => {
                // Among near-ties, prefer the largest pivot magnitude for
                // stability, then the lowest basis index for determinism.
                let mut best: Option<(usize, bool, f64, usize)> = None;
                for &(i, t, hits_upper) in &candidates {
                    let t = t.max(0.0);
                    if t <= theta + 1e-9 {
                        let mag = self.tab[i][q].abs();
                        let key = self.basis[i];
                        let better = match best {
                            None => true,
                            Some((_, _, bmag, bkey)) => {
                                if self.bland {
                                    key < bkey
                                } else {
                                    mag > bmag + 1e-12 || (mag > bmag - 1e-12 && key < bkey)
                                }
                            }
                        };
                        if better {
                            best = Some((i, hits_upper, mag, key));
                        }
                    }
                }
                let (row, hits_upper, _, _) = best.unwrap();
                Step::Pivot(row, theta, hits_upper)
            }
        }
    }

    fn apply_flip(&mut self, q: usize, dir: f64, theta: f64) {
        for i in 0..self.m {
            let a = self.tab[i][q];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= dir * a * theta;
            }
        }
        self.x[q] += dir * theta;
        self.at_upper[q] = !self.at_upper[q];
        // Snap exactly onto the bound.
        self.x[q] = if self.at_upper[q] { self.upper[q] } else { self.lower[q] };
    }

    fn apply_pivot(&mut self, q: usize, dir: f64, row: usize, theta: f64, leaves_at_upper: bool) {
        if theta.abs() < 1e-12 {
            self.degenerate_steps += 1;
            if self.degenerate_steps > 200 + 10 * self.m {
                self.bland = true;
            }
        } else {
            self.degenerate_steps = 0;
            if self.bland && self.degenerate_steps == 0 {
                self.bland = false;
            }
        }

        // Move the primal point.
        for i in 0..self.m {
            let a = self.tab[i][q];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= dir * a * theta;
            }
        }
        self.x[q] += dir * theta;

        let leaving = self.basis[row];
        // Snap the leaving variable onto the bound it reached.
        self.x[leaving] = if leaves_at_upper { self.upper[leaving] } else { self.lower[leaving] };
        self.at_upper[leaving] = leaves_at_upper;
        self.in_basis[leaving] = false;

        // Row-reduce the tableau and the cost row.
        let pivot = self.tab[row][q];
        let inv = 1.0 / pivot;
        for j in 0..self.total {
            self.tab[row][j] *= inv;
        }
        self.tab[row][q] = 1.0;
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.tab[i][q];
            if factor.abs() > 1e-13 {
                for j in 0..self.total {
                    self.tab[i][j] -= factor * self.tab[row][j];
                }
                self.tab[i][q] = 0.0;
            }
        }
        let dfactor = self.reduced[q];
        if dfactor.abs() > 1e-13 {
            for j in 0..self.total {
                self.reduced[j] -= dfactor * self.tab[row][j];
            }
            self.reduced[q] = 0.0;
        }

        self.basis[row] = q;
        self.in_basis[q] = true;
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot(usize, f64, bool),
}
