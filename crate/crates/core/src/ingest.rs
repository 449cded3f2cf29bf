//! GeoJSON ingestion and the on-disk Gdb store.
//!
//! LineString features become ways (split into segments on the way in),
//! Polygon features contribute their outer ring. Numeric properties pass
//! through as feature columns; string properties are one-hot encoded against
//! a recorded vocabulary so a second database can be ingested onto the same
//! schema. Coordinates are either taken as planar map units or projected
//! from lon/lat with an equirectangular projection around the data centroid.

use crate::error::{Error, Result};
use crate::geom::{
    split_ways_into_segments, EntityId, Gdb, GeoConfig, Point, PolyEntity, Segment, Way,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// Coordinates are already planar map units.
    #[default]
    None,
    /// Lon/lat degrees to meters: x = R cos(lat0) (lon - lon0), y = R (lat - lat0).
    Equirectangular,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionInfo {
    pub kind: ProjectionKind,
    pub lon0: f64,
    pub lat0: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestCounts {
    pub polygons: usize,
    pub ways: usize,
    pub segments: usize,
}

/// Written alongside every ingested store; feeding it back into a second
/// ingest pins the feature schema so both databases line up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestManifest {
    pub projection: ProjectionInfo,
    pub numeric_keys: Vec<String>,
    pub categorical_vocab: BTreeMap<String, Vec<String>>,
    pub feature_names: Vec<String>,
    pub counts: IngestCounts,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub projection: ProjectionKind,
    /// Prior manifest whose vocabulary and projection center to reuse.
    pub schema_from: Option<IngestManifest>,
}

struct RawFeature {
    id: EntityId,
    polygon: Option<Vec<Point>>,
    line: Option<Vec<Point>>,
    numeric: BTreeMap<String, f64>,
    categorical: BTreeMap<String, String>,
}

fn parse_coord(v: &Value) -> Result<Point> {
    let arr = v.as_array().ok_or_else(|| Error::Ingest("coordinate is not an array".into()))?;
    if arr.len() < 2 {
        return Err(Error::Ingest("coordinate has fewer than 2 components".into()));
    }
    let x = arr[0].as_f64().ok_or_else(|| Error::Ingest("non-numeric coordinate".into()))?;
    let y = arr[1].as_f64().ok_or_else(|| Error::Ingest("non-numeric coordinate".into()))?;
    Ok(Point::new(x, y))
}

fn parse_coords(v: &Value) -> Result<Vec<Point>> {
    v.as_array()
        .ok_or_else(|| Error::Ingest("coordinates is not an array".into()))?
        .iter()
        .map(parse_coord)
        .collect()
}

/// Ingests a GeoJSON FeatureCollection into a Gdb plus its manifest.
pub fn ingest_geojson(
    path: &Path,
    geo: &GeoConfig,
    options: &IngestOptions,
) -> Result<(Gdb, IngestManifest)> {
    let text = std::fs::read_to_string(path)?;
    let root: Value = serde_json::from_str(&text)?;
    if root["type"] != "FeatureCollection" {
        return Err(Error::Ingest("expected a FeatureCollection".into()));
    }
    let features = root["features"]
        .as_array()
        .ok_or_else(|| Error::Ingest("missing features array".into()))?;

    let mut raw: Vec<RawFeature> = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let geom = &f["geometry"];
        let id = f["id"]
            .as_str()
            .map(str::to_string)
            .or_else(|| f["id"].as_i64().map(|n| n.to_string()))
            .or_else(|| f["properties"]["id"].as_str().map(str::to_string))
            .unwrap_or_else(|| format!("f{i}"));
        let mut numeric = BTreeMap::new();
        let mut categorical = BTreeMap::new();
        if let Some(props) = f["properties"].as_object() {
            for (k, v) in props {
                if k == "id" {
                    continue;
                }
                match v {
                    Value::Number(n) => {
                        if let Some(x) = n.as_f64() {
                            numeric.insert(k.clone(), x);
                        }
                    }
                    Value::Bool(b) => {
                        numeric.insert(k.clone(), if *b { 1.0 } else { 0.0 });
                    }
                    Value::String(s) => {
                        categorical.insert(k.clone(), s.clone());
                    }
                    _ => {} // nested values are ignored
                }
            }
        }
        match geom["type"].as_str() {
            Some("Polygon") => {
                let rings = geom["coordinates"]
                    .as_array()
                    .ok_or_else(|| Error::Ingest(format!("{id}: bad polygon coordinates")))?;
                if rings.is_empty() {
                    return Err(Error::Ingest(format!("{id}: polygon with no rings")));
                }
                // Outer ring only; holes are out of scope.
                let ring = parse_coords(&rings[0])?;
                raw.push(RawFeature { id, polygon: Some(ring), line: None, numeric, categorical });
            }
            Some("LineString") => {
                let pts = parse_coords(&geom["coordinates"])?;
                raw.push(RawFeature { id, polygon: None, line: Some(pts), numeric, categorical });
            }
            Some(other) => {
                return Err(Error::Ingest(format!("{id}: unsupported geometry type {other}")))
            }
            None => return Err(Error::Ingest(format!("{id}: missing geometry type"))),
        }
    }

    // Projection: reuse the prior center when a schema manifest is given.
    let projection = match options.projection {
        ProjectionKind::None => {
            ProjectionInfo { kind: ProjectionKind::None, lon0: 0.0, lat0: 0.0, radius: 0.0 }
        }
        ProjectionKind::Equirectangular => {
            let (lon0, lat0) = match &options.schema_from {
                Some(m) if m.projection.kind == ProjectionKind::Equirectangular => {
                    (m.projection.lon0, m.projection.lat0)
                }
                _ => {
                    let mut n = 0usize;
                    let (mut sx, mut sy) = (0.0, 0.0);
                    for f in &raw {
                        for p in f.polygon.iter().chain(f.line.iter()).flatten() {
                            sx += p.x;
                            sy += p.y;
                            n += 1;
                        }
                    }
                    if n == 0 {
                        return Err(Error::Ingest("no coordinates to project".into()));
                    }
                    (sx / n as f64, sy / n as f64)
                }
            };
            ProjectionInfo {
                kind: ProjectionKind::Equirectangular,
                lon0,
                lat0,
                radius: EARTH_RADIUS_M,
            }
        }
    };
    let project = |p: Point| -> Point {
        match projection.kind {
            ProjectionKind::None => p,
            ProjectionKind::Equirectangular => Point::new(
                projection.radius * projection.lat0.to_radians().cos() * (p.x - projection.lon0).to_radians(),
                projection.radius * (p.y - projection.lat0).to_radians(),
            ),
        }
    };

    // Schema: union of observed keys, or the prior manifest's schema.
    let (numeric_keys, categorical_vocab) = match &options.schema_from {
        Some(m) => (m.numeric_keys.clone(), m.categorical_vocab.clone()),
        None => {
            let mut nk: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
            let mut cv: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();
            for f in &raw {
                nk.extend(f.numeric.keys().cloned());
                for (k, v) in &f.categorical {
                    cv.entry(k.clone()).or_default().insert(v.clone());
                }
            }
            (
                nk.into_iter().collect::<Vec<_>>(),
                cv.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
            )
        }
    };

    // Geometry.
    let mut entities = Vec::new();
    let mut ways = Vec::new();
    let mut props: BTreeMap<EntityId, (BTreeMap<String, f64>, BTreeMap<String, String>)> =
        BTreeMap::new();
    for f in raw {
        if let Some(ring) = f.polygon {
            let ring: Vec<Point> = ring.into_iter().map(project).collect();
            entities.push(PolyEntity::new(&f.id, ring)?);
            props.insert(f.id.clone(), (f.numeric, f.categorical));
        } else if let Some(line) = f.line {
            let pts: Vec<Point> = line.into_iter().map(project).collect();
            ways.push(Way::new(&f.id, pts)?);
            props.insert(f.id.clone(), (f.numeric, f.categorical));
        }
    }
    let segments = split_ways_into_segments(&ways, geo)?;

    // Feature matrix: scaled centroid, kind one-hot, scaled numeric columns,
    // categorical one-hot.
    let feature_names = build_feature_names(&numeric_keys, &categorical_vocab);
    let features = build_feature_vectors(
        &entities,
        &segments,
        &props,
        &numeric_keys,
        &categorical_vocab,
    );

    let manifest = IngestManifest {
        projection,
        numeric_keys,
        categorical_vocab,
        feature_names: feature_names.clone(),
        counts: IngestCounts { polygons: entities.len(), ways: ways.len(), segments: segments.len() },
    };
    let gdb = Gdb::new(entities, segments, features, feature_names)?;
    Ok((gdb, manifest))
}

fn build_feature_names(
    numeric_keys: &[String],
    vocab: &BTreeMap<String, Vec<String>>,
) -> Vec<String> {
    let mut names = vec![
        "cx".to_string(),
        "cy".to_string(),
        "is_polygon".to_string(),
        "is_segment".to_string(),
    ];
    for k in numeric_keys {
        names.push(format!("num:{k}"));
    }
    for (k, values) in vocab {
        for v in values {
            names.push(format!("cat:{k}={v}"));
        }
    }
    names
}

fn build_feature_vectors(
    entities: &[PolyEntity],
    segments: &[Segment],
    props: &BTreeMap<EntityId, (BTreeMap<String, f64>, BTreeMap<String, String>)>,
    numeric_keys: &[String],
    vocab: &BTreeMap<String, Vec<String>>,
) -> BTreeMap<EntityId, Vec<f64>> {
    // Segment properties come from their originating way.
    let empty = (BTreeMap::new(), BTreeMap::new());
    let props_of = |id: &str, way_id: Option<&str>| {
        props
            .get(id)
            .or_else(|| way_id.and_then(|w| props.get(w)))
            .unwrap_or(&empty)
    };

    let mut rows: Vec<(EntityId, Point, bool, &(BTreeMap<String, f64>, BTreeMap<String, String>))> =
        Vec::new();
    for e in entities {
        rows.push((e.id.clone(), e.center, true, props_of(&e.id, None)));
    }
    for s in segments {
        rows.push((s.id.clone(), s.midpoint(), false, props_of(&s.id, Some(&s.way_id))));
    }

    // Min-max ranges for centroid and each numeric column.
    let mut ranges: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); 2 + numeric_keys.len()];
    for (_, center, _, p) in &rows {
        for (slot, v) in [(0, center.x), (1, center.y)] {
            ranges[slot].0 = ranges[slot].0.min(v);
            ranges[slot].1 = ranges[slot].1.max(v);
        }
        for (k, key) in numeric_keys.iter().enumerate() {
            let v = p.0.get(key).copied().unwrap_or(0.0);
            ranges[2 + k].0 = ranges[2 + k].0.min(v);
            ranges[2 + k].1 = ranges[2 + k].1.max(v);
        }
    }
    let scale = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };

    rows.into_iter()
        .map(|(id, center, is_poly, p)| {
            let mut f = vec![
                scale(center.x, ranges[0]),
                scale(center.y, ranges[1]),
                if is_poly { 1.0 } else { 0.0 },
                if is_poly { 0.0 } else { 1.0 },
            ];
            for (k, key) in numeric_keys.iter().enumerate() {
                f.push(scale(p.0.get(key).copied().unwrap_or(0.0), ranges[2 + k]));
            }
            for (key, values) in vocab {
                let observed = p.1.get(key);
                for v in values {
                    f.push(if observed == Some(v) { 1.0 } else { 0.0 });
                }
            }
            (id, f)
        })
        .collect()
}

/// Saves a Gdb store as JSON.
pub fn save_gdb(g: &Gdb, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string(g)?)?;
    Ok(())
}

pub fn load_gdb(path: &Path) -> Result<Gdb> {
    let g: Gdb = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    g.validate()?;
    Ok(g)
}

/// Exports a Gdb as a GeoJSON FeatureCollection: polygons plus one
/// LineString per segment; the numeric attribute columns ride along as
/// properties for round-tripping.
pub fn export_geojson(g: &Gdb, path: &Path) -> Result<()> {
    let mut features = Vec::new();
    for e in &g.entities {
        let ring: Vec<Vec<f64>> = e.ring.iter().map(|p| vec![p.x, p.y]).collect();
        features.push(serde_json::json!({
            "type": "Feature",
            "id": e.id,
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": feature_props(g, &e.id),
        }));
    }
    for s in &g.segments {
        let line: Vec<Vec<f64>> = s.points.iter().map(|p| vec![p.x, p.y]).collect();
        features.push(serde_json::json!({
            "type": "Feature",
            "id": s.id,
            "geometry": {"type": "LineString", "coordinates": line},
            "properties": feature_props(g, &s.id),
        }));
    }
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn feature_props(g: &Gdb, id: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    if let Some(vec) = g.features.get(id) {
        for (name, v) in g.feature_names.iter().zip(vec) {
            m.insert(name.clone(), serde_json::json!(v));
        }
    }
    m
}
