//! Consistent map merging.
//!
//! Unmatched target objects are approximated by their bounding rectangles
//! and given six shift variables each (center x/y plus one per side). Every
//! nearby rectangle pair contributes three families of constraints: each
//! movable vertex excluded from the other rectangle's interior, each of the
//! other rectangle's vertices excluded from the movable, and eight product
//! implications that forbid edge crossings with no vertex containment.
//! A direct four-way separation disjunction per pair completes the families
//! (which alone admit exact boundary-alignment overlaps), so the solved
//! program guarantees a merged map with no new overlap. The objective charges gamma per unit of side shift and one per
//! unit of center shift, linearized with absolute-value auxiliaries.

mod branch;
mod encode;
mod milp;
mod simplex;

pub use branch::{solve_milp_model, MilpSolution, MilpStatus, INT_TOL, LP_TOL};
pub use encode::{
    encode_implication, encode_product_implication, encode_separation_disjunction, CmpSense,
    Comparison, STRICT_EPS,
};
pub use milp::{Constraint, LinExpr, MilpModel, Sense};
pub use simplex::{solve_lp, LpResult, LpStatus};

use crate::error::{Error, Result};
use crate::geom::{EntityId, Gdb, Mbr, Point, PolyEntity, Segment};
use crate::index::SpatialIndex;
use crate::matcher::MatchSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// The six-parameter rectangle transformation: a center shift plus an offset
/// per side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpsilonShift {
    pub eps_c_x: f64,
    pub eps_c_y: f64,
    pub eps_1_x: f64,
    pub eps_2_x: f64,
    pub eps_1_y: f64,
    pub eps_2_y: f64,
}

impl EpsilonShift {
    pub fn is_zero(&self) -> bool {
        *self == EpsilonShift::default()
    }

    pub fn apply_to_mbr(&self, m: &Mbr) -> Mbr {
        Mbr {
            x_min: m.x_min + self.eps_1_x + self.eps_c_x,
            x_max: m.x_max + self.eps_2_x + self.eps_c_x,
            y_min: m.y_min + self.eps_1_y + self.eps_c_y,
            y_max: m.y_max + self.eps_2_y + self.eps_c_y,
        }
    }

    /// Moves a vertex of the shape whose bounding rectangle is `m`: side
    /// shifts interpolate linearly across the rectangle, the center shift
    /// translates.
    pub fn apply_to_point(&self, m: &Mbr, p: Point) -> Point {
        let fx = if m.x_max > m.x_min { (p.x - m.x_min) / (m.x_max - m.x_min) } else { 0.5 };
        let fy = if m.y_max > m.y_min { (p.y - m.y_min) / (m.y_max - m.y_min) } else { 0.5 };
        Point::new(
            p.x + self.eps_c_x + self.eps_1_x * (1.0 - fx) + self.eps_2_x * fx,
            p.y + self.eps_c_y + self.eps_1_y * (1.0 - fy) + self.eps_2_y * fy,
        )
    }
}

/// Merge configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    /// Penalty weight on side shifts relative to center shifts; above one it
    /// prefers translating objects over reshaping them.
    pub gamma: f64,
    /// Bound on the magnitude of every shift component.
    pub eps_max: f64,
    /// Big-M constant; `None` derives 10 x (scene diagonal + eps_max).
    pub big_m: Option<f64>,
    /// Allowed boundary-contact slack when testing non-overlap.
    pub contact_tolerance: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { gamma: 2.1, eps_max: 10.0, big_m: None, contact_tolerance: 0.0 }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.eps_max > 0.0) {
            return Err(Error::Config(format!("eps_max must be positive, got {}", self.eps_max)));
        }
        if self.contact_tolerance < 0.0 {
            return Err(Error::Config("contact_tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Effective big-M for a scene of the given diagonal; rejects an
    /// explicit value that fails to dominate the attainable differences.
    pub fn effective_big_m(&self, scene_diagonal: f64) -> Result<f64> {
        let floor = 2.0 * (scene_diagonal + self.eps_max);
        match self.big_m {
            Some(m) if m <= floor => Err(Error::Config(format!(
                "big_m {m} too small: must exceed 2 * (scene extent + eps_max) = {floor}"
            ))),
            Some(m) => Ok(m),
            None => Ok(10.0 * (scene_diagonal + self.eps_max).max(1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MergeStatus {
    Optimal,
    /// No feasible shift exists; carries pairs whose single-pair models are
    /// already infeasible (or every constrained pair when the conflict is
    /// only joint).
    Infeasible { pairs: Vec<(EntityId, EntityId)> },
}

/// Solved shift per movable entity plus the objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergePlan {
    pub shifts: BTreeMap<EntityId, EpsilonShift>,
    pub objective: f64,
    pub status: MergeStatus,
}

impl MergePlan {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Bounding rectangles of all target entities and segments not covered by
/// the match set, in Gdb order.
pub fn unmatched_targets(match_set: &MatchSet, g_t: &Gdb) -> Vec<(EntityId, Mbr)> {
    let matched: std::collections::BTreeSet<&EntityId> = match_set.matched_target_ids().collect();
    let mut out = Vec::new();
    for e in &g_t.entities {
        if !matched.contains(&e.id) {
            out.push((e.id.clone(), e.mbr()));
        }
    }
    for s in &g_t.segments {
        if !matched.contains(&s.id) {
            out.push((s.id.clone(), s.mbr()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOther {
    Fixed(usize),
    Movable(usize),
}

/// A rectangle pair that could overlap for some admissible shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapPair {
    pub movable: usize,
    pub other: PairOther,
}

/// Pairs whose rectangles, inflated by the worst-case shift (eps_max for a
/// movable against a fixed rectangle, 2 eps_max each for movable-movable,
/// since a vertex can travel up to side + center = 2 eps_max), intersect.
pub fn candidate_overlap_pairs(
    fixed: &[(EntityId, Mbr)],
    movable: &[(EntityId, Mbr)],
    eps_max: f64,
) -> Vec<OverlapPair> {
    let fixed_index = SpatialIndex::build(
        fixed.iter().enumerate().map(|(i, (_, m))| (i, m.inflate(eps_max))).collect(),
    );
    let mut pairs = Vec::new();
    for (mi, (_, mm)) in movable.iter().enumerate() {
        for fi in fixed_index.query_box(&mm.inflate(eps_max)) {
            pairs.push(OverlapPair { movable: mi, other: PairOther::Fixed(fi) });
        }
    }
    let movable_index = SpatialIndex::build(
        movable.iter().enumerate().map(|(i, (_, m))| (i, m.inflate(2.0 * eps_max))).collect(),
    );
    for (mi, (_, mm)) in movable.iter().enumerate() {
        for mj in movable_index.query_box(&mm.inflate(2.0 * eps_max)) {
            if mj > mi {
                pairs.push(OverlapPair { movable: mi, other: PairOther::Movable(mj) });
            }
        }
    }
    pairs
}

/// Shift-variable indices for one movable rectangle.
#[derive(Debug, Clone, Copy)]
pub struct ShiftVars {
    pub center_x: usize,
    pub center_y: usize,
    pub side_x1: usize,
    pub side_x2: usize,
    pub side_y1: usize,
    pub side_y2: usize,
}

/// Shifted-corner expressions of a rectangle.
struct RectExprs {
    a1: LinExpr,
    a2: LinExpr,
    b1: LinExpr,
    b2: LinExpr,
}

fn rect_exprs(m: &Mbr, vars: Option<&ShiftVars>) -> RectExprs {
    match vars {
        None => RectExprs {
            a1: LinExpr::constant(m.x_min),
            a2: LinExpr::constant(m.x_max),
            b1: LinExpr::constant(m.y_min),
            b2: LinExpr::constant(m.y_max),
        },
        Some(v) => RectExprs {
            a1: LinExpr::constant(m.x_min).plus_var(v.side_x1, 1.0).plus_var(v.center_x, 1.0),
            a2: LinExpr::constant(m.x_max).plus_var(v.side_x2, 1.0).plus_var(v.center_x, 1.0),
            b1: LinExpr::constant(m.y_min).plus_var(v.side_y1, 1.0).plus_var(v.center_y, 1.0),
            b2: LinExpr::constant(m.y_max).plus_var(v.side_y2, 1.0).plus_var(v.center_y, 1.0),
        },
    }
}

/// Emits the full Case 1 + Case 2 + Case 3 constraint set for one pair.
/// `mv` is the movable rectangle, `other` is fixed when `other_vars` is None.
pub fn encode_pair_nonoverlap(
    model: &mut MilpModel,
    mv_mbr: &Mbr,
    mv_vars: &ShiftVars,
    other_mbr: &Mbr,
    other_vars: Option<&ShiftVars>,
    contact_tolerance: f64,
    label: &str,
) {
    let mv = rect_exprs(mv_mbr, Some(mv_vars));
    let ot = rect_exprs(other_mbr, other_vars);
    let tol = contact_tolerance;

    // Case 1: no movable vertex inside the other rectangle.
    for (ax, axn) in [(&mv.a1, "a1"), (&mv.a2, "a2")] {
        for (by, byn) in [(&mv.b1, "b1"), (&mv.b2, "b2")] {
            let conds = [
                Comparison::ge(ax.minus(&ot.a1), 0.0),
                Comparison::le(ax.minus(&ot.a2), 0.0),
            ];
            encode_implication(
                model,
                &conds,
                Comparison::ge(by.minus(&ot.b2), 0.0),
                Comparison::le(by.minus(&ot.b1), 0.0),
                tol,
                &format!("{label}/case1/{axn}{byn}"),
            );
        }
    }

    // Case 2: no vertex of the other rectangle inside the movable.
    for (ax, axn) in [(&ot.a1, "a1"), (&ot.a2, "a2")] {
        for (by, byn) in [(&ot.b1, "b1"), (&ot.b2, "b2")] {
            let conds = [
                Comparison::ge(ax.minus(&mv.a1), 0.0),
                Comparison::le(ax.minus(&mv.a2), 0.0),
            ];
            encode_implication(
                model,
                &conds,
                Comparison::ge(by.minus(&mv.b2), 0.0),
                Comparison::le(by.minus(&mv.b1), 0.0),
                tol,
                &format!("{label}/case2/{axn}{byn}"),
            );
        }
    }

    // Case 3: no edge crossing without vertex containment. When a movable
    // x-edge lies within the other's x-range, the movable's y-interval must
    // not straddle either of the other's horizontal lines, and symmetrically
    // in y.
    for (ax, axn) in [(&mv.a1, "a1"), (&mv.a2, "a2")] {
        let conds = [
            Comparison::ge(ax.minus(&ot.a1), 0.0),
            Comparison::le(ax.minus(&ot.a2), 0.0),
        ];
        for (line, linen) in [(&ot.b1, "b1"), (&ot.b2, "b2")] {
            encode_product_implication(
                model,
                &conds,
                mv.b1.minus(line),
                0.0,
                mv.b2.minus(line),
                0.0,
                tol,
                &format!("{label}/case3x/{axn}/{linen}"),
            );
        }
    }
    for (by, byn) in [(&mv.b1, "b1"), (&mv.b2, "b2")] {
        let conds = [
            Comparison::ge(by.minus(&ot.b1), 0.0),
            Comparison::le(by.minus(&ot.b2), 0.0),
        ];
        for (line, linen) in [(&ot.a1, "a1"), (&ot.a2, "a2")] {
            encode_product_implication(
                model,
                &conds,
                mv.a1.minus(line),
                0.0,
                mv.a2.minus(line),
                0.0,
                tol,
                &format!("{label}/case3y/{byn}/{linen}"),
            );
        }
    }

    // Direct separation disjunction: left of, right of, below, or above.
    // Exactly closed-interior disjointness; closes the aligned-boundary
    // configurations the three families above leave open.
    encode_separation_disjunction(
        model,
        &[
            Comparison::le(mv.a2.minus(&ot.a1), tol),
            Comparison::ge(mv.a1.minus(&ot.a2), -tol),
            Comparison::le(mv.b2.minus(&ot.b1), tol),
            Comparison::ge(mv.b1.minus(&ot.b2), -tol),
        ],
        &format!("{label}/sep"),
    );
}

/// Builds the merge MILP: six bounded shift variables and six absolute-value
/// auxiliaries per movable, rectangle validity constraints, and the pair
/// constraint families. Objective: gamma * sum |side| + sum |center|.
pub fn build_merge_milp(
    fixed: &[(EntityId, Mbr)],
    movable: &[(EntityId, Mbr)],
    pairs: &[OverlapPair],
    cfg: &MergeConfig,
) -> Result<(MilpModel, Vec<ShiftVars>)> {
    cfg.validate()?;
    let mut scene: Option<Mbr> = None;
    for (_, m) in fixed.iter().chain(movable) {
        scene = Some(match scene {
            None => *m,
            Some(s) => Mbr {
                x_min: s.x_min.min(m.x_min),
                x_max: s.x_max.max(m.x_max),
                y_min: s.y_min.min(m.y_min),
                y_max: s.y_max.max(m.y_max),
            },
        });
    }
    let diagonal = scene.map_or(1.0, |s| s.width().hypot(s.height()));
    let big_m = cfg.effective_big_m(diagonal)?;

    let mut model = MilpModel { big_m, ..MilpModel::default() };
    let e = cfg.eps_max;
    let mut vars = Vec::with_capacity(movable.len());
    for (id, m) in movable {
        let sv = ShiftVars {
            center_x: model.add_var(format!("ecx[{id}]"), -e, e),
            center_y: model.add_var(format!("ecy[{id}]"), -e, e),
            side_x1: model.add_var(format!("ex1[{id}]"), -e, e),
            side_x2: model.add_var(format!("ex2[{id}]"), -e, e),
            side_y1: model.add_var(format!("ey1[{id}]"), -e, e),
            side_y2: model.add_var(format!("ey2[{id}]"), -e, e),
        };
        // Shifted rectangle stays valid: x_min' <= x_max', y_min' <= y_max'.
        model.add_constraint(
            LinExpr::var(sv.side_x1).plus_var(sv.side_x2, -1.0),
            Sense::Le,
            m.width(),
            format!("valid_x[{id}]"),
        );
        model.add_constraint(
            LinExpr::var(sv.side_y1).plus_var(sv.side_y2, -1.0),
            Sense::Le,
            m.height(),
            format!("valid_y[{id}]"),
        );
        // Absolute-value auxiliaries: aux >= eps, aux >= -eps; at the
        // optimum aux = |eps|.
        for (var, name, weight) in [
            (sv.center_x, "acx", 1.0),
            (sv.center_y, "acy", 1.0),
            (sv.side_x1, "ax1", cfg.gamma),
            (sv.side_x2, "ax2", cfg.gamma),
            (sv.side_y1, "ay1", cfg.gamma),
            (sv.side_y2, "ay2", cfg.gamma),
        ] {
            let aux = model.add_var(format!("{name}[{id}]"), 0.0, e);
            model.objective[aux] = weight;
            model.add_constraint(
                LinExpr::var(aux).plus_var(var, -1.0),
                Sense::Ge,
                0.0,
                format!("abs_pos {name}[{id}]"),
            );
            model.add_constraint(
                LinExpr::var(aux).plus_var(var, 1.0),
                Sense::Ge,
                0.0,
                format!("abs_neg {name}[{id}]"),
            );
        }
        vars.push(sv);
    }

    for pair in pairs {
        let (mid, mm) = &movable[pair.movable];
        match pair.other {
            PairOther::Fixed(fi) => {
                let (fid, fm) = &fixed[fi];
                encode_pair_nonoverlap(
                    &mut model,
                    mm,
                    &vars[pair.movable],
                    fm,
                    None,
                    cfg.contact_tolerance,
                    &format!("{mid}|{fid}"),
                );
            }
            PairOther::Movable(mj) => {
                let (oid, om) = &movable[mj];
                let ov = vars[mj];
                encode_pair_nonoverlap(
                    &mut model,
                    mm,
                    &vars[pair.movable],
                    om,
                    Some(&ov),
                    cfg.contact_tolerance,
                    &format!("{mid}|{oid}"),
                );
            }
        }
    }

    model.validate()?;
    Ok((model, vars))
}

/// Plans the merge: candidate pairs over the source rectangles and the
/// unmatched target rectangles, exact MILP solve, infeasibility diagnosis.
pub fn plan_merge(
    g_s: &Gdb,
    g_t: &Gdb,
    match_set: &MatchSet,
    cfg: &MergeConfig,
) -> Result<(MergePlan, MilpModel)> {
    let fixed: Vec<(EntityId, Mbr)> = g_s
        .entities
        .iter()
        .map(|e| (e.id.clone(), e.mbr()))
        .chain(g_s.segments.iter().map(|s| (s.id.clone(), s.mbr())))
        .collect();
    let movable = unmatched_targets(match_set, g_t);
    let pairs = candidate_overlap_pairs(&fixed, &movable, cfg.eps_max);
    let (model, vars) = build_merge_milp(&fixed, &movable, &pairs, cfg)?;
    let sol = solve_milp_model(&model)?;

    let plan = match sol.status {
        MilpStatus::Optimal => {
            let mut shifts = BTreeMap::new();
            for ((id, _), sv) in movable.iter().zip(&vars) {
                shifts.insert(
                    id.clone(),
                    EpsilonShift {
                        eps_c_x: sol.x[sv.center_x],
                        eps_c_y: sol.x[sv.center_y],
                        eps_1_x: sol.x[sv.side_x1],
                        eps_2_x: sol.x[sv.side_x2],
                        eps_1_y: sol.x[sv.side_y1],
                        eps_2_y: sol.x[sv.side_y2],
                    },
                );
            }
            MergePlan { shifts, objective: sol.objective, status: MergeStatus::Optimal }
        }
        MilpStatus::Infeasible => {
            let bad = diagnose_infeasible(&fixed, &movable, &pairs, cfg)?;
            MergePlan {
                shifts: BTreeMap::new(),
                objective: f64::INFINITY,
                status: MergeStatus::Infeasible { pairs: bad },
            }
        }
    };
    Ok((plan, model))
}

/// Per-pair solo solves to name the culprits; if every pair is individually
/// feasible the conflict is joint and all constrained pairs are reported.
fn diagnose_infeasible(
    fixed: &[(EntityId, Mbr)],
    movable: &[(EntityId, Mbr)],
    pairs: &[OverlapPair],
    cfg: &MergeConfig,
) -> Result<Vec<(EntityId, EntityId)>> {
    let mut bad = Vec::new();
    for pair in pairs {
        let (model, _) = build_merge_milp(fixed, movable, std::slice::from_ref(pair), cfg)?;
        if solve_milp_model(&model)?.status == MilpStatus::Infeasible {
            bad.push(pair_ids(fixed, movable, pair));
        }
    }
    if bad.is_empty() {
        bad = pairs.iter().map(|p| pair_ids(fixed, movable, p)).collect();
    }
    Ok(bad)
}

fn pair_ids(
    fixed: &[(EntityId, Mbr)],
    movable: &[(EntityId, Mbr)],
    pair: &OverlapPair,
) -> (EntityId, EntityId) {
    let m = movable[pair.movable].0.clone();
    match pair.other {
        PairOther::Fixed(fi) => (m, fixed[fi].0.clone()),
        PairOther::Movable(mj) => (m, movable[mj].0.clone()),
    }
}

fn shift_poly(e: &PolyEntity, shift: &EpsilonShift) -> Result<PolyEntity> {
    let mbr = e.mbr();
    let ring: Vec<Point> =
        e.vertices().iter().map(|p| shift.apply_to_point(&mbr, *p)).collect();
    PolyEntity::new(e.id.clone(), ring)
}

fn shift_segment(s: &Segment, shift: &EpsilonShift) -> Result<Segment> {
    let mbr = s.mbr();
    let points: Vec<Point> = s.points.iter().map(|p| shift.apply_to_point(&mbr, *p)).collect();
    Segment::new(s.id.clone(), s.way_id.clone(), points)
}

/// Applies an optimal plan: a copy of the source plus every unmatched target
/// entity moved by its solved shift. Source geometry is untouched.
pub fn apply_merge(
    g_s: &Gdb,
    g_t: &Gdb,
    match_set: &MatchSet,
    plan: &MergePlan,
) -> Result<Gdb> {
    if let MergeStatus::Infeasible { pairs } = &plan.status {
        return Err(Error::MergeInfeasible { pairs: pairs.clone() });
    }
    if g_s.feature_names != g_t.feature_names {
        return Err(Error::Gdb("merge requires a shared feature schema".into()));
    }
    let zero = EpsilonShift::default();
    let matched: std::collections::BTreeSet<&EntityId> = match_set.matched_target_ids().collect();

    let mut merged = g_s.clone();
    for e in &g_t.entities {
        if matched.contains(&e.id) {
            continue;
        }
        let shift = plan.shifts.get(&e.id).unwrap_or(&zero);
        merged.entities.push(shift_poly(e, shift)?);
        merged.features.insert(e.id.clone(), g_t.features[&e.id].clone());
    }
    for s in &g_t.segments {
        if matched.contains(&s.id) {
            continue;
        }
        let shift = plan.shifts.get(&s.id).unwrap_or(&zero);
        merged.segments.push(shift_segment(s, shift)?);
        merged.features.insert(s.id.clone(), g_t.features[&s.id].clone());
    }
    merged.validate()?;
    Ok(merged)
}

/// Position baseline: union without any shift.
pub fn position_merge_baseline(g_s: &Gdb, g_t: &Gdb, match_set: &MatchSet) -> Result<Gdb> {
    let plan = MergePlan {
        shifts: BTreeMap::new(),
        objective: 0.0,
        status: MergeStatus::Optimal,
    };
    apply_merge(g_s, g_t, match_set, &plan)
}

/// Interiors disjoint up to `tol` of overlap area.
pub fn rects_interior_disjoint(a: &Mbr, b: &Mbr, tol: f64) -> bool {
    a.overlap_area(b) <= tol
}
