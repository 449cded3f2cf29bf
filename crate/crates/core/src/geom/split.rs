//! Splitting ways into segments at terminal points.
//!
//! A point of the road network is terminal when it is a dead-end (one
//! incident line), a junction (more than two incident lines), or a sharp
//! bend: exactly two incident lines deviating from straight continuation by
//! more than theta degrees. Every way is cut at its interior terminal points;
//! way endpoints always bound a segment so that each way's segments
//! concatenate back to the original point sequence.

use super::{GeoConfig, Point, Segment, Way};
use crate::error::Result;
use std::collections::HashMap;

/// Coordinate key with -0.0 normalized so identical points hash identically.
fn key(p: &Point) -> (u64, u64) {
    let norm = |v: f64| if v == 0.0 { 0.0_f64.to_bits() } else { v.to_bits() };
    (norm(p.x), norm(p.y))
}

/// Deviation from straight continuation at `p`, in degrees, given the two
/// neighboring points of its incident lines. Zero when the lines are
/// collinear and continuing; 180 when they fold back.
fn deviation_deg(p: Point, u: Point, v: Point) -> f64 {
    let a = (u.x - p.x, u.y - p.y);
    let b = (v.x - p.x, v.y - p.y);
    let la = a.0.hypot(a.1);
    let lb = b.0.hypot(b.1);
    if la == 0.0 || lb == 0.0 {
        return 0.0;
    }
    let cosang = ((a.0 * b.0 + a.1 * b.1) / (la * lb)).clamp(-1.0, 1.0);
    // Angle between the two rays leaving p; straight continuation is 180.
    180.0 - cosang.acos().to_degrees()
}

/// Splits ways into segments at terminal points.
pub fn split_ways_into_segments(ways: &[Way], cfg: &GeoConfig) -> Result<Vec<Segment>> {
    // Incident lines per point, as the neighbor endpoint of each line.
    let mut incident: HashMap<(u64, u64), Vec<Point>> = HashMap::new();
    for way in ways {
        for w in way.points.windows(2) {
            incident.entry(key(&w[0])).or_default().push(w[1]);
            incident.entry(key(&w[1])).or_default().push(w[0]);
        }
    }

    let is_terminal = |p: &Point| -> bool {
        let lines = &incident[&key(p)];
        match lines.len() {
            1 => true,
            2 => deviation_deg(*p, lines[0], lines[1]) > cfg.theta,
            _ => true,
        }
    };

    let mut segments = Vec::new();
    for way in ways {
        // Re-validate so raw point sequences can be passed through Way::new
        // by callers that construct ways directly.
        let way = Way::new(way.id.clone(), way.points.clone())?;
        let mut start = 0usize;
        let mut count = 0usize;
        for i in 1..way.points.len() {
            let at_end = i == way.points.len() - 1;
            if at_end || is_terminal(&way.points[i]) {
                let pts = way.points[start..=i].to_vec();
                segments.push(Segment::new(format!("{}.{}", way.id, count), way.id.clone(), pts)?);
                count += 1;
                start = i;
            }
        }
    }
    Ok(segments)
}
