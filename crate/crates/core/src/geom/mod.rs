//! Geometric primitives: points, segments, polygon entities, bounding
//! rectangles, and the geospatial database container.
//!
//! Coordinates are planar map units (ingestion can project lon/lat to an
//! equirectangular meter grid first). All shapes are immutable after
//! construction and validated on the way in: non-finite coordinates,
//! degenerate rings, and self-intersections are rejected.

mod buffer;
mod hausdorff;
mod poly;
mod split;

pub use buffer::{buffer_polygon, point_in_buffer, point_to_polyline_distance};
pub use hausdorff::hausdorff_distance;
pub use poly::{intersection_area, jaccard_area, polygon_area, ring_centroid, validate_ring};
pub use split::split_ways_into_segments;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Entity identifier. Stable strings so stores and reports stay diffable.
pub type EntityId = String;

/// A planar point in map units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An input way: an ordered polyline as it arrives from ingestion, before
/// terminal-point splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Way {
    pub id: EntityId,
    pub points: Vec<Point>,
}

impl Way {
    pub fn new(id: impl Into<EntityId>, points: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if points.len() < 2 {
            return Err(Error::Geometry(format!("way {id}: fewer than 2 points")));
        }
        for p in &points {
            if !p.is_finite() {
                return Err(Error::Geometry(format!("way {id}: non-finite coordinate")));
            }
        }
        for w in points.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Geometry(format!(
                    "way {id}: repeated identical consecutive points at ({}, {})",
                    w[0].x, w[0].y
                )));
            }
        }
        Ok(Way { id, points })
    }
}

/// A road segment: an ordered point sequence whose first and last points are
/// terminal points of the network and whose interior points are intermediate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub id: EntityId,
    pub way_id: EntityId,
    pub points: Vec<Point>,
}

impl Segment {
    pub fn new(id: impl Into<EntityId>, way_id: impl Into<EntityId>, points: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if points.len() < 2 {
            return Err(Error::Geometry(format!("segment {id}: fewer than 2 points")));
        }
        for p in &points {
            if !p.is_finite() {
                return Err(Error::Geometry(format!("segment {id}: non-finite coordinate")));
            }
        }
        for w in points.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Geometry(format!("segment {id}: repeated consecutive point")));
            }
        }
        Ok(Segment { id, way_id: way_id.into(), points })
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().unwrap()
    }

    /// Point at half the total arc length; used as the segment's center when
    /// classifying grid relations.
    pub fn midpoint(&self) -> Point {
        let total: f64 = self.points.windows(2).map(|w| w[0].dist(&w[1])).sum();
        let mut remaining = total / 2.0;
        for w in self.points.windows(2) {
            let len = w[0].dist(&w[1]);
            if remaining <= len {
                let t = if len > 0.0 { remaining / len } else { 0.0 };
                return Point::new(w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
            }
            remaining -= len;
        }
        self.end()
    }

    pub fn mbr(&self) -> Mbr {
        Mbr::from_points(&self.points).expect("segment has points")
    }
}

/// A non-linear (polygon) entity. The ring is stored closed (first point
/// repeated at the end) and counter-clockwise; `center` is the area centroid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyEntity {
    pub id: EntityId,
    pub ring: Vec<Point>,
    pub center: Point,
}

impl PolyEntity {
    /// Builds a polygon entity from an outer ring given open or closed.
    /// Rejects rings with fewer than 3 distinct vertices, zero area, or
    /// self-intersections. The stored ring is normalized: closed and CCW.
    pub fn new(id: impl Into<EntityId>, ring: Vec<Point>) -> Result<Self> {
        let id = id.into();
        let open = poly::normalize_open_ring(&ring)
            .map_err(|msg| Error::Geometry(format!("polygon {id}: {msg}")))?;
        validate_ring(&open).map_err(|msg| Error::Geometry(format!("polygon {id}: {msg}")))?;
        let center = ring_centroid(&open);
        let mut closed = open;
        closed.push(closed[0]);
        Ok(PolyEntity { id, ring: closed, center })
    }

    /// Ring vertices without the closing duplicate.
    pub fn vertices(&self) -> &[Point] {
        &self.ring[..self.ring.len() - 1]
    }

    pub fn area(&self) -> f64 {
        polygon_area(self.vertices())
    }

    pub fn mbr(&self) -> Mbr {
        Mbr::from_points(self.vertices()).expect("ring has vertices")
    }
}

/// Axis-aligned minimum bounding rectangle in normalized min/max form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Mbr {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min <= x_max && y_min <= y_max) {
            return Err(Error::Geometry(format!(
                "invalid mbr: [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Mbr { x_min, x_max, y_min, y_max })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Geometry("mbr of empty point set".into()));
        }
        let mut m = Mbr {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for p in points {
            m.x_min = m.x_min.min(p.x);
            m.x_max = m.x_max.max(p.x);
            m.y_min = m.y_min.min(p.y);
            m.y_max = m.y_max.max(p.y);
        }
        Ok(m)
    }

    /// Closed (boundary-inclusive) intersection test.
    pub fn intersects(&self, other: &Mbr) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }

    /// Rectangle grown by `d` on every side.
    pub fn inflate(&self, d: f64) -> Mbr {
        Mbr {
            x_min: self.x_min - d,
            x_max: self.x_max + d,
            y_min: self.y_min - d,
            y_max: self.y_max + d,
        }
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Area of the closed intersection with `other`; zero when disjoint.
    pub fn overlap_area(&self, other: &Mbr) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Shortest distance between the two rectangles; zero when they touch or
    /// overlap.
    pub fn gap(&self, other: &Mbr) -> f64 {
        let dx = (other.x_min - self.x_max).max(self.x_min - other.x_max).max(0.0);
        let dy = (other.y_min - self.y_max).max(self.y_min - other.y_max).max(0.0);
        dx.hypot(dy)
    }
}

/// Geometric configuration shared by splitting, knowledge-graph construction,
/// matching, and evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeoConfig {
    /// Terminal-angle threshold in degrees: a degree-2 point is terminal when
    /// the polyline deviates from straight continuation by more than this.
    pub theta: f64,
    /// Circular error: endpoint tolerance for the Connected relation. No
    /// canonical value exists; tune to the positional noise of the data.
    pub delta: f64,
    /// Buffer (corridor) width around segments for the Inside relation.
    pub lambda_buf: f64,
    /// Grid width of the 3x3 relation grid centered on each polygon.
    pub mu: f64,
    /// Displacement thresholds (map units) for merged-segment evaluation.
    pub eta: Vec<f64>,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig { theta: 45.0, delta: 5.0, lambda_buf: 50.0, mu: 100.0, eta: vec![5.0, 10.0] }
    }
}

impl GeoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 180.0) {
            return Err(Error::Config(format!("theta must be in (0, 180), got {}", self.theta)));
        }
        for (name, v) in [("delta", self.delta), ("lambda_buf", self.lambda_buf), ("mu", self.mu)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if self.eta.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("eta thresholds must be strictly positive".into()));
        }
        Ok(())
    }
}

/// A geospatial database: polygon entities, linear segments, and a per-entity
/// feature vector of uniform dimension.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Gdb {
    pub entities: Vec<PolyEntity>,
    pub segments: Vec<Segment>,
    pub features: BTreeMap<EntityId, Vec<f64>>,
    /// Names of the feature columns, shared by every vector in `features`.
    pub feature_names: Vec<String>,
}

impl Gdb {
    pub fn new(
        entities: Vec<PolyEntity>,
        segments: Vec<Segment>,
        features: BTreeMap<EntityId, Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let gdb = Gdb { entities, segments, features, feature_names };
        gdb.validate()?;
        Ok(gdb)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for id in self.ids() {
            if !seen.insert(id.clone()) {
                return Err(Error::Gdb(format!("duplicate id {id}")));
            }
        }
        let d = self.feature_names.len();
        for id in self.ids() {
            match self.features.get(&id) {
                None => return Err(Error::Gdb(format!("missing feature vector for {id}"))),
                Some(v) if v.len() != d => {
                    return Err(Error::Gdb(format!(
                        "feature vector for {id} has dim {} but schema has {d}",
                        v.len()
                    )))
                }
                Some(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::Gdb(format!("non-finite feature for {id}")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// All ids, polygons first, in stored order.
    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entities.iter().map(|e| e.id.clone()).chain(self.segments.iter().map(|s| s.id.clone()))
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entity(&self, id: &str) -> Option<&PolyEntity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }
}
