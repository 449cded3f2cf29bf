//! Branch and bound over the binary variables with LP relaxations.
//!
//! Most-fractional branching, best-lower-bound node selection, deterministic
//! tie-breaks by variable index and node id. Incumbents are cleaned by
//! re-solving the LP with all binaries fixed to their rounded values.

use super::milp::MilpModel;
use super::simplex::{solve_lp, LpResult, LpStatus};
use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Integrality tolerance on binary variables.
pub const INT_TOL: f64 = 1e-5;
/// LP-level tolerance on objective comparisons.
pub const LP_TOL: f64 = 1e-6;

const NODE_LIMIT: usize = 500_000;

#[derive(Debug, Clone, PartialEq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub nodes_explored: usize,
}

struct Node {
    bound: f64,
    id: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the smallest bound pops first,
        // oldest node on ties.
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

/// Solves the MILP to proven optimality or infeasibility.
pub fn solve_milp_model(model: &MilpModel) -> Result<MilpSolution> {
    model.validate()?;
    let binaries: Vec<usize> = (0..model.n_vars()).filter(|&v| model.is_binary[v]).collect();

    let root = relax(model, &model.lower, &model.upper)?;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes_explored = 0usize;

    if let Some(r) = root {
        heap.push(Node {
            bound: r.objective,
            id: next_id,
            lower: model.lower.clone(),
            upper: model.upper.clone(),
            x: r.x,
        });
        next_id += 1;
    }

    while let Some(node) = heap.pop() {
        nodes_explored += 1;
        if nodes_explored > NODE_LIMIT {
            return Err(Error::Milp(format!("node limit {NODE_LIMIT} exceeded")));
        }
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - LP_TOL {
                continue;
            }
        }

        // Most fractional binary (closest to one half).
        let mut branch_var: Option<(usize, f64)> = None;
        for &b in &binaries {
            let frac = node.x[b] - node.x[b].round();
            if frac.abs() > INT_TOL {
                let dist = (node.x[b] - node.x[b].floor() - 0.5).abs();
                match branch_var {
                    Some((_, bd)) if bd <= dist => {}
                    _ => branch_var = Some((b, dist)),
                }
            }
        }

        match branch_var {
            None => {
                // Integral: clean up by fixing binaries and re-solving.
                let mut lo = node.lower.clone();
                let mut up = node.upper.clone();
                for &b in &binaries {
                    let v = node.x[b].round();
                    lo[b] = v;
                    up[b] = v;
                }
                if let Some(r) = relax(model, &lo, &up)? {
                    let better = match &incumbent {
                        None => true,
                        Some((best, _)) => r.objective < best - LP_TOL,
                    };
                    if better {
                        incumbent = Some((r.objective, r.x));
                    }
                }
            }
            Some((b, _)) => {
                for &(fix_lo, fix_up) in &[(0.0, 0.0), (1.0, 1.0)] {
                    let mut lo = node.lower.clone();
                    let mut up = node.upper.clone();
                    lo[b] = fix_lo;
                    up[b] = fix_up;
                    if let Some(r) = relax(model, &lo, &up)? {
                        let prune = matches!(&incumbent, Some((best, _)) if r.objective >= best - LP_TOL);
                        if !prune {
                            heap.push(Node { bound: r.objective, id: next_id, lower: lo, upper: up, x: r.x });
                            next_id += 1;
                        }
                    }
                }
            }
        }
    }

    match incumbent {
        Some((objective, x)) => {
            Ok(MilpSolution { status: MilpStatus::Optimal, objective, x, nodes_explored })
        }
        None => Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            objective: f64::INFINITY,
            x: vec![],
            nodes_explored,
        }),
    }
}

fn relax(model: &MilpModel, lower: &[f64], upper: &[f64]) -> Result<Option<LpResult>> {
    let r = solve_lp(lower, upper, &model.objective, &model.constraints);
    match r.status {
        LpStatus::Optimal => Ok(Some(r)),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Milp(
            "LP relaxation unbounded; the merge model must be box-bounded".into(),
        )),
    }
}
