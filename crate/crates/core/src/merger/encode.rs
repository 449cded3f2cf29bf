//! Big-M encodings of the non-overlap implications.
//!
//! An implication "if C1 and C2 then D1 or D2" over affine expressions
//! becomes seven inequalities with binaries u, v (condition indicators),
//! t (conjunction indicator), and w (disjunct selector). The product form
//! "if C1 and C2 then (y1 - b1)(y2 - b2) >= 0" becomes nine, with w picking
//! the shared sign of both factors. Strict condition boundaries are realized
//! with a 1e-9 slack; consequents are loosened by the contact tolerance so
//! touching rectangles stay feasible.
//!
//! Conditions and consequents whose truth is already decided by the variable
//! bounds are simplified away; the encoding remains exact over the bounded
//! shift box.

use super::milp::{LinExpr, MilpModel, Sense};

/// Slack standing in for the strict inequalities of the condition
/// encodings. The condition indicator is realized as the biconditional
/// u = 1 <=> expr >= rhs - eps (resp. <= rhs + eps), which leaves no dead
/// band between the two binary choices; the slack must dominate the LP
/// feasibility tolerance and stay below the objective tolerances.
pub const STRICT_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpSense {
    Ge,
    Le,
}

/// expr >= rhs or expr <= rhs.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub expr: LinExpr,
    pub sense: CmpSense,
    pub rhs: f64,
}

impl Comparison {
    pub fn ge(expr: LinExpr, rhs: f64) -> Comparison {
        Comparison { expr, sense: CmpSense::Ge, rhs }
    }

    pub fn le(expr: LinExpr, rhs: f64) -> Comparison {
        Comparison { expr, sense: CmpSense::Le, rhs }
    }

    /// Truth at a point (boundary counts as true).
    pub fn holds(&self, x: &[f64]) -> bool {
        let v = self.expr.eval(x);
        match self.sense {
            CmpSense::Ge => v >= self.rhs,
            CmpSense::Le => v <= self.rhs,
        }
    }

    /// (always_false, always_true) over the variable bounds.
    fn classify(&self, lower: &[f64], upper: &[f64], slack: f64) -> (bool, bool) {
        let (lo, hi) = self.expr.range(lower, upper);
        match self.sense {
            CmpSense::Ge => (hi < self.rhs - slack, lo >= self.rhs - slack),
            CmpSense::Le => (lo > self.rhs + slack, hi <= self.rhs + slack),
        }
    }
}

/// Emits the two condition inequalities tying binary `u` to comparison `c`:
/// u = 1 exactly when the (slack-shifted) condition holds, with both sides
/// closed at the shifted threshold so every point admits an assignment.
fn push_condition(model: &mut MilpModel, c: &Comparison, u: usize, big_m: f64, label: &str) {
    match c.sense {
        CmpSense::Ge => {
            // u = 1 => expr >= rhs - eps;  u = 0 => expr <= rhs - eps.
            let rhs = c.rhs - STRICT_EPS;
            let e1 = c.expr.clone().plus_var(u, -big_m);
            model.add_constraint(e1, Sense::Ge, rhs - big_m, format!("{label}/cond_on"));
            let e2 = c.expr.clone().plus_var(u, -big_m);
            model.add_constraint(e2, Sense::Le, rhs, format!("{label}/cond_off"));
        }
        CmpSense::Le => {
            // u = 1 => expr <= rhs + eps;  u = 0 => expr >= rhs + eps.
            let rhs = c.rhs + STRICT_EPS;
            let e1 = c.expr.clone().plus_var(u, big_m);
            model.add_constraint(e1, Sense::Le, rhs + big_m, format!("{label}/cond_on"));
            let e2 = c.expr.clone().plus_var(u, big_m);
            model.add_constraint(e2, Sense::Ge, rhs, format!("{label}/cond_off"));
        }
    }
}

/// Emits a disjunct enforced exactly when `t = 1` (or unconditionally when
/// `t` is None) and `w` sits at its active value (skipped when `w` is None).
/// The comparison is loosened by `tol` in its feasible direction.
///
/// For a >= disjunct, every inactive indicator subtracts M from the bound;
/// for a <= disjunct it adds M. With indicator z required to be 1:
/// expr -/+ M z {>=,<=} rhs -/+ M; required to be 0: expr +/- M z {>=,<=} rhs.
fn push_disjunct(
    model: &mut MilpModel,
    c: &Comparison,
    t: Option<usize>,
    w: Option<(usize, bool)>,
    tol: f64,
    big_m: f64,
    label: &str,
) {
    let mut expr = c.expr.clone();
    let (sense, mut rhs, dir) = match c.sense {
        CmpSense::Ge => (Sense::Ge, c.rhs - tol, -1.0),
        CmpSense::Le => (Sense::Le, c.rhs + tol, 1.0),
    };
    if let Some(t) = t {
        // t must be 1 to enforce.
        expr = expr.plus_var(t, dir * big_m);
        rhs += dir * big_m;
    }
    if let Some((w, active_high)) = w {
        if active_high {
            // w must be 1 to enforce.
            expr = expr.plus_var(w, dir * big_m);
            rhs += dir * big_m;
        } else {
            // w must be 0 to enforce.
            expr = expr.plus_var(w, -dir * big_m);
        }
    }
    model.add_constraint(expr, sense, rhs, label.to_string());
}

/// Encodes conditions, returning the conjunction indicator: `Ok(t_var)` when
/// binaries were needed, `Err(true)` when the conjunction always holds, and
/// `Err(false)` when it can never hold.
fn encode_conditions(
    model: &mut MilpModel,
    conditions: &[Comparison],
    label: &str,
) -> std::result::Result<Option<usize>, bool> {
    let mut undecided: Vec<&Comparison> = Vec::new();
    for c in conditions {
        let (always_false, always_true) = c.classify(&model.lower, &model.upper, STRICT_EPS);
        if always_false {
            return Err(false);
        }
        if !always_true {
            undecided.push(c);
        }
    }
    if undecided.is_empty() {
        return Err(true);
    }
    let n = undecided.len();
    let us: Vec<usize> = (0..n).map(|i| model.add_binary(format!("{label}/u{i}"))).collect();
    for (i, c) in undecided.iter().enumerate() {
        push_condition(model, c, us[i], model.big_m, &format!("{label}/c{i}"));
    }
    if n == 1 {
        // Single condition: t is u itself.
        return Ok(Some(us[0]));
    }
    let t = model.add_binary(format!("{label}/t"));
    // 0 <= sum(u) - n t <= n - 1.
    let mut e = LinExpr::default();
    for &u in &us {
        e = e.plus_var(u, 1.0);
    }
    let e = e.plus_var(t, -(n as f64));
    model.add_constraint(e.clone(), Sense::Ge, 0.0, format!("{label}/t_lo"));
    model.add_constraint(e, Sense::Le, n as f64 - 1.0, format!("{label}/t_hi"));
    Ok(Some(t))
}

/// "if (all conditions) then d1 or d2", with d1 active when w = 1.
/// Returns the binaries it created.
pub fn encode_implication(
    model: &mut MilpModel,
    conditions: &[Comparison],
    d1: Comparison,
    d2: Comparison,
    tol: f64,
    label: &str,
) -> Vec<usize> {
    let before = model.n_vars();
    let t = match encode_conditions(model, conditions, label) {
        Err(false) => return Vec::new(), // condition can never hold
        Err(true) => None,               // condition always holds
        Ok(t) => t,
    };
    let big_m = model.big_m;
    let (f1, t1) = d1.classify(&model.lower, &model.upper, tol);
    let (f2, t2) = d2.classify(&model.lower, &model.upper, tol);
    if t1 || t2 {
        // One disjunct always holds: the statement is vacuous.
        truncate_vars(model, before);
        return Vec::new();
    }
    match (f1, f2) {
        (true, true) => {
            // Neither disjunct can ever hold: the condition must not hold.
            match t {
                Some(t) => {
                    model.add_constraint(LinExpr::var(t), Sense::Le, 0.0, format!("{label}/never"));
                }
                None => {
                    // Condition always holds and consequent cannot: infeasible.
                    model.add_constraint(LinExpr::default(), Sense::Ge, 1.0, format!("{label}/infeasible"));
                }
            }
        }
        (true, false) => push_disjunct(model, &d2, t, None, tol, big_m, &format!("{label}/d2_only")),
        (false, true) => push_disjunct(model, &d1, t, None, tol, big_m, &format!("{label}/d1_only")),
        (false, false) => {
            let w = model.add_binary(format!("{label}/w"));
            push_disjunct(model, &d1, t, Some((w, true)), tol, big_m, &format!("{label}/d1"));
            push_disjunct(model, &d2, t, Some((w, false)), tol, big_m, &format!("{label}/d2"));
        }
    }
    (before..model.n_vars()).collect()
}

/// "if (all conditions) then (y1 - b1)(y2 - b2) >= 0": both factors share a
/// sign, selected by w (w = 0 picks non-negative, w = 1 non-positive).
pub fn encode_product_implication(
    model: &mut MilpModel,
    conditions: &[Comparison],
    y1: LinExpr,
    b1: f64,
    y2: LinExpr,
    b2: f64,
    tol: f64,
    label: &str,
) -> Vec<usize> {
    let before = model.n_vars();
    let t = match encode_conditions(model, conditions, label) {
        Err(false) => return Vec::new(),
        Err(true) => None,
        Ok(t) => t,
    };
    let big_m = model.big_m;
    let ge1 = Comparison::ge(y1.clone(), b1);
    let le1 = Comparison::le(y1.clone(), b1);
    let ge2 = Comparison::ge(y2.clone(), b2);
    let le2 = Comparison::le(y2.clone(), b2);
    let (ge1_f, ge1_t) = ge1.classify(&model.lower, &model.upper, tol);
    let (le1_f, le1_t) = le1.classify(&model.lower, &model.upper, tol);
    let (ge2_f, ge2_t) = ge2.classify(&model.lower, &model.upper, tol);
    let (le2_f, le2_t) = le2.classify(&model.lower, &model.upper, tol);

    let pos_possible = !ge1_f && !ge2_f;
    let neg_possible = !le1_f && !le2_f;
    let pos_always = ge1_t && ge2_t;
    let neg_always = le1_t && le2_t;

    if pos_always || neg_always {
        truncate_vars(model, before);
        return Vec::new();
    }
    match (pos_possible, neg_possible) {
        (false, false) => match t {
            Some(t) => {
                model.add_constraint(LinExpr::var(t), Sense::Le, 0.0, format!("{label}/never"));
            }
            None => {
                model.add_constraint(LinExpr::default(), Sense::Ge, 1.0, format!("{label}/infeasible"));
            }
        },
        (true, false) => {
            // Only the non-negative branch can hold.
            if !ge1_t {
                push_disjunct(model, &ge1, t, None, tol, big_m, &format!("{label}/y1_ge"));
            }
            if !ge2_t {
                push_disjunct(model, &ge2, t, None, tol, big_m, &format!("{label}/y2_ge"));
            }
        }
        (false, true) => {
            if !le1_t {
                push_disjunct(model, &le1, t, None, tol, big_m, &format!("{label}/y1_le"));
            }
            if !le2_t {
                push_disjunct(model, &le2, t, None, tol, big_m, &format!("{label}/y2_le"));
            }
        }
        (true, true) => {
            let w = model.add_binary(format!("{label}/w"));
            // w = 0: both factors >= 0; w = 1: both <= 0.
            push_disjunct(model, &ge1, t, Some((w, false)), tol, big_m, &format!("{label}/y1_ge"));
            push_disjunct(model, &ge2, t, Some((w, false)), tol, big_m, &format!("{label}/y2_ge"));
            push_disjunct(model, &le1, t, Some((w, true)), tol, big_m, &format!("{label}/y1_le"));
            push_disjunct(model, &le2, t, Some((w, true)), tol, big_m, &format!("{label}/y2_le"));
        }
    }
    (before..model.n_vars()).collect()
}

/// Four-way separation disjunction: at least one of the comparisons must
/// hold (each already carries any contact tolerance in its rhs). One binary
/// per comparison enforces it when set; their sum must reach one.
///
/// The vertex- and edge-exclusion families admit configurations where the
/// two rectangles' boundary lines coincide exactly (every consequent then
/// holds at equality while the interiors fully overlap), and a minimizing
/// solver steers into them; this family is exactly equivalent to
/// closed-interior disjointness and pins those configurations down.
pub fn encode_separation_disjunction(
    model: &mut MilpModel,
    comparisons: &[Comparison],
    label: &str,
) -> Vec<usize> {
    let before = model.n_vars();
    let mut undecided = Vec::new();
    for c in comparisons {
        let (always_false, always_true) = c.classify(&model.lower, &model.upper, 0.0);
        if always_true {
            return Vec::new(); // some separation always holds
        }
        if !always_false {
            undecided.push(c);
        }
    }
    match undecided.len() {
        0 => {
            model.add_constraint(LinExpr::default(), Sense::Ge, 1.0, format!("{label}/infeasible"));
        }
        1 => {
            push_disjunct(model, undecided[0], None, None, 0.0, model.big_m, &format!("{label}/only"));
        }
        _ => {
            let big_m = model.big_m;
            let mut sum = LinExpr::default();
            for (i, c) in undecided.iter().enumerate() {
                let z = model.add_binary(format!("{label}/z{i}"));
                push_disjunct(model, c, None, Some((z, true)), 0.0, big_m, &format!("{label}/s{i}"));
                sum = sum.plus_var(z, 1.0);
            }
            model.add_constraint(sum, Sense::Ge, 1.0, format!("{label}/pick"));
        }
    }
    (before..model.n_vars()).collect()
}

/// Drops trailing variables created after `keep` when a statement turned out
/// vacuous; only safe because nothing else references them yet.
fn truncate_vars(model: &mut MilpModel, keep: usize) {
    // Conditions may already have emitted constraints on the dropped
    // binaries; remove those too.
    model
        .constraints
        .retain(|c| c.terms.iter().all(|&(v, _)| v < keep));
    model.var_names.truncate(keep);
    model.lower.truncate(keep);
    model.upper.truncate(keep);
    model.is_binary.truncate(keep);
    model.objective.truncate(keep);
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive binary enumeration: is there an assignment of the model's
    /// binaries satisfying all constraints when the continuous prefix is
    /// pinned to `point`?
    pub(crate) fn feasible_by_enumeration(model: &MilpModel, point: &[f64]) -> bool {
        let binaries: Vec<usize> =
            (0..model.n_vars()).filter(|&v| model.is_binary[v]).collect();
        assert!(binaries.len() <= 20, "too many binaries to enumerate");
        let mut x = vec![0.0; model.n_vars()];
        x[..point.len()].copy_from_slice(point);
        let combos = 1usize << binaries.len();
        'outer: for mask in 0..combos {
            for (bit, &b) in binaries.iter().enumerate() {
                x[b] = if mask >> bit & 1 == 1 { 1.0 } else { 0.0 };
            }
            for c in &model.constraints {
                let lhs: f64 = c.terms.iter().map(|&(v, coeff)| coeff * x[v]).sum();
                let ok = match c.sense {
                    Sense::Le => lhs <= c.rhs + 1e-9,
                    Sense::Ge => lhs >= c.rhs - 1e-9,
                    Sense::Eq => (lhs - c.rhs).abs() <= 1e-9,
                };
                if !ok {
                    continue 'outer;
                }
            }
            return true;
        }
        false
    }

    fn model_with_two_vars() -> MilpModel {
        let mut m = MilpModel { big_m: 1000.0, ..MilpModel::default() };
        m.add_var("x", -10.0, 10.0);
        m.add_var("y", -10.0, 10.0);
        m
    }

    /// "if 0 <= x and x <= 2 then y >= 5 or y <= 1" on a grid of points.
    #[test]
    fn implication_encoding_matches_truth_table() {
        for &(x, y, want) in &[
            (1.0, 3.0, false), // condition holds, neither disjunct
            (3.0, 3.0, true),  // condition fails
            (1.0, 6.0, true),  // first disjunct (w = 1)
            (1.0, 0.5, true),  // second disjunct (w = 0)
            (0.0, 3.0, false), // boundary x counts as inside
            (2.0, 1.0, true),  // boundary disjunct
            (-0.5, 3.0, true),
        ] {
            let mut m = model_with_two_vars();
            let conds = [
                Comparison::ge(LinExpr::var(0), 0.0),
                Comparison::le(LinExpr::var(0), 2.0),
            ];
            let created = encode_implication(
                &mut m,
                &conds,
                Comparison::ge(LinExpr::var(1), 5.0),
                Comparison::le(LinExpr::var(1), 1.0),
                0.0,
                "test",
            );
            assert_eq!(created.len(), 4, "u, v, t, w");
            assert_eq!(
                feasible_by_enumeration(&m, &[x, y]),
                want,
                "point ({x}, {y})"
            );
        }
    }

    /// "if 0 <= x <= 2 then (y1 - 1)(y2 - 3) >= 0".
    #[test]
    fn product_encoding_matches_truth_table() {
        for &(x, y1, y2, want) in &[
            (1.0, 2.0, 2.0, false), // (+)(-) < 0
            (1.0, 0.0, 2.0, true),  // both <= 0 with w = 1
            (5.0, 2.0, 2.0, true),  // condition fails
            (1.0, 2.0, 4.0, true),  // both >= 0
            (1.0, 1.0, 0.0, true),  // boundary factor
        ] {
            let mut m = model_with_two_vars();
            let y2v = m.add_var("y2", -10.0, 10.0);
            let conds = [
                Comparison::ge(LinExpr::var(0), 0.0),
                Comparison::le(LinExpr::var(0), 2.0),
            ];
            encode_product_implication(
                &mut m,
                &conds,
                LinExpr::var(1),
                1.0,
                LinExpr::var(y2v),
                3.0,
                0.0,
                "test",
            );
            assert_eq!(feasible_by_enumeration(&m, &[x, y1, y2]), want, "point ({x}, {y1}, {y2})");
        }
    }

    #[test]
    fn always_false_condition_emits_nothing() {
        let mut m = model_with_two_vars();
        // x <= -20 is impossible within bounds [-10, 10].
        let conds = [Comparison::le(LinExpr::var(0), -20.0)];
        let created = encode_implication(
            &mut m,
            &conds,
            Comparison::ge(LinExpr::var(1), 5.0),
            Comparison::le(LinExpr::var(1), 1.0),
            0.0,
            "test",
        );
        assert!(created.is_empty());
        assert!(m.constraints.is_empty());
    }

    #[test]
    fn always_true_disjunct_is_vacuous() {
        let mut m = model_with_two_vars();
        let conds = [Comparison::ge(LinExpr::var(0), 0.0)];
        // y >= -20 always holds within bounds.
        encode_implication(
            &mut m,
            &conds,
            Comparison::ge(LinExpr::var(1), -20.0),
            Comparison::le(LinExpr::var(1), -25.0),
            0.0,
            "test",
        );
        assert!(m.constraints.is_empty());
        assert_eq!(m.n_vars(), 2);
    }

    #[test]
    fn impossible_consequent_with_certain_condition_is_infeasible() {
        let mut m = model_with_two_vars();
        // Condition always true (x >= -10); disjuncts out of reach.
        let conds = [Comparison::ge(LinExpr::var(0), -10.0)];
        encode_implication(
            &mut m,
            &conds,
            Comparison::ge(LinExpr::var(1), 50.0),
            Comparison::le(LinExpr::var(1), -50.0),
            0.0,
            "test",
        );
        assert!(!feasible_by_enumeration(&m, &[0.0, 0.0]));
    }
}
