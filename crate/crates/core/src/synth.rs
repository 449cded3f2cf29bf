//! Synthetic ground-truthed scenes: a road lattice with non-overlapping
//! buildings, plus a perturbation operator that jitters, drops, and corrupts
//! a copy while recording the true alignment.

use crate::error::{Error, Result};
use crate::geom::{split_ways_into_segments, EntityId, Gdb, GeoConfig, Point, PolyEntity, Way};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Scene recipe. Buildings are rectangles placed inside lattice cells with a
/// margin, so the generated map has no overlaps by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub n_buildings: usize,
    /// Number of road lines per axis (horizontal + vertical lattice).
    pub n_ways: usize,
    /// Side length of the square scene in map units.
    pub extent: f64,
    /// Building side lengths are drawn uniformly from this range.
    pub building_side: (f64, f64),
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_buildings: 40,
            n_ways: 4,
            extent: 400.0,
            building_side: (10.0, 18.0),
            seed: 0,
        }
    }
}

/// Perturbation recipe: per-entity rigid Gaussian jitter (shape-preserving),
/// independent drop rates for buildings and segments, and a metadata noise
/// rate that resamples feature attributes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSpec {
    pub jitter_sigma: f64,
    pub drop_rate_entities: f64,
    pub drop_rate_segments: f64,
    pub metadata_noise_rate: f64,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            jitter_sigma: 2.0,
            drop_rate_entities: 0.1,
            drop_rate_segments: 0.1,
            metadata_noise_rate: 0.0,
            seed: 1,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("drop_rate_entities", self.drop_rate_entities),
            ("drop_rate_segments", self.drop_rate_segments),
            ("metadata_noise_rate", self.metadata_noise_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        if self.jitter_sigma < 0.0 {
            return Err(Error::Config("jitter_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything needed to reproduce and evaluate a generated scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub spec: SceneSpec,
    pub building_ids: Vec<EntityId>,
    pub way_ids: Vec<EntityId>,
    pub segment_ids: Vec<EntityId>,
}

/// Feature schema of synthetic scenes: scaled centroid coordinates, an
/// object-kind pair, and one numeric attribute ("stories" for buildings,
/// "width class" for segments).
pub const FEATURE_NAMES: [&str; 5] = ["cx", "cy", "is_polygon", "is_segment", "attr"];

/// Per-entity feature vectors: scaled centroids plus kind one-hot plus the
/// attribute, min-max scaled per database.
pub fn build_features(
    entities: &[PolyEntity],
    segments: &[crate::geom::Segment],
    attrs: &BTreeMap<EntityId, f64>,
) -> BTreeMap<EntityId, Vec<f64>> {
    let mut centers: Vec<(EntityId, Point, bool)> = Vec::new();
    for e in entities {
        centers.push((e.id.clone(), e.center, true));
    }
    for s in segments {
        centers.push((s.id.clone(), s.midpoint(), false));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut a_min, mut a_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (id, p, _) in &centers {
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
        let a = attrs.get(id).copied().unwrap_or(0.0);
        a_min = a_min.min(a);
        a_max = a_max.max(a);
    }
    let scale = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    centers
        .into_iter()
        .map(|(id, p, is_poly)| {
            let a = attrs.get(&id).copied().unwrap_or(0.0);
            let f = vec![
                scale(p.x, x_min, x_max),
                scale(p.y, y_min, y_max),
                if is_poly { 1.0 } else { 0.0 },
                if is_poly { 0.0 } else { 1.0 },
                scale(a, a_min, a_max),
            ];
            (id, f)
        })
        .collect()
}

/// Generates a deterministic scene: a lattice of horizontal and vertical
/// ways with intermediate points, and buildings packed into lattice cells
/// with margins so nothing overlaps.
pub fn generate_scene(spec: &SceneSpec, geo: &GeoConfig) -> Result<(Gdb, SceneManifest)> {
    if spec.extent <= 0.0 || spec.building_side.0 <= 0.0 || spec.building_side.1 < spec.building_side.0
    {
        return Err(Error::Synth("invalid scene spec".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_lines = spec.n_ways.max(2);
    let gap = spec.extent / (n_lines as f64);

    // Road lattice: n horizontal and n vertical ways with shape points.
    let mut ways = Vec::new();
    for i in 0..n_lines {
        let offset = (i as f64 + 0.5) * gap;
        let mut h_points = Vec::new();
        let mut v_points = Vec::new();
        let n_steps = 8;
        for k in 0..=n_steps {
            let t = spec.extent * k as f64 / n_steps as f64;
            let wiggle = (k as f64 * 1.7 + i as f64).sin() * gap * 0.02;
            h_points.push(Point::new(t, offset + wiggle));
            v_points.push(Point::new(offset + wiggle, t));
        }
        ways.push(Way::new(format!("wh{i}"), h_points)?);
        ways.push(Way::new(format!("wv{i}"), v_points)?);
    }
    let segments = split_ways_into_segments(&ways, geo)?;

    // Buildings: quarter-cell slots between road lines keep them apart.
    let cells = n_lines * n_lines;
    if spec.n_buildings > cells * 4 {
        return Err(Error::Synth(format!(
            "cannot pack {} buildings into {} cells",
            spec.n_buildings, cells
        )));
    }
    let mut entities = Vec::new();
    let mut attrs: BTreeMap<EntityId, f64> = BTreeMap::new();
    let quarter = gap / 2.0;
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for cx in 0..n_lines {
        for cy in 0..n_lines {
            for q in 0..4 {
                slots.push((cx, cy, q));
            }
        }
    }
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    for (b, &(cx, cy, q)) in slots.iter().take(spec.n_buildings).enumerate() {
        let side = rng
            .gen_range(spec.building_side.0..=spec.building_side.1)
            .min(quarter * 0.7);
        let base_x = cx as f64 * gap + if q % 2 == 0 { gap * 0.08 } else { quarter + gap * 0.08 };
        let base_y = cy as f64 * gap + if q / 2 == 0 { gap * 0.08 } else { quarter + gap * 0.08 };
        let jx = rng.gen_range(0.0..(quarter * 0.8 - side).max(1e-6));
        let jy = rng.gen_range(0.0..(quarter * 0.8 - side).max(1e-6));
        let x = base_x + jx;
        let y = base_y + jy;
        let idb = format!("b{b}");
        entities.push(PolyEntity::new(
            &idb,
            vec![
                Point::new(x, y),
                Point::new(x + side, y),
                Point::new(x + side, y + side),
                Point::new(x, y + side),
            ],
        )?);
        attrs.insert(idb, rng.gen_range(1..=5) as f64);
    }
    for s in &segments {
        attrs.insert(s.id.clone(), rng.gen_range(1..=3) as f64);
    }

    let features = build_features(&entities, &segments, &attrs);
    let manifest = SceneManifest {
        spec: spec.clone(),
        building_ids: entities.iter().map(|e| e.id.clone()).collect(),
        way_ids: ways.iter().map(|w| w.id.clone()).collect(),
        segment_ids: segments.iter().map(|s| s.id.clone()).collect(),
    };
    let gdb = Gdb::new(
        entities,
        segments,
        features,
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok((gdb, manifest))
}

/// Jittered, thinned copy of a Gdb with fresh ids, plus the ground-truth
/// alignment mapping every surviving source id to its target copy.
pub fn perturb(g: &Gdb, spec: &PerturbSpec) -> Result<(Gdb, Vec<(EntityId, EntityId)>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.jitter_sigma.max(1e-300))
        .map_err(|e| Error::Synth(format!("jitter distribution: {e}")))?;
    let draw = |rng: &mut ChaCha8Rng| {
        if spec.jitter_sigma > 0.0 {
            normal.sample(rng)
        } else {
            0.0
        }
    };

    let mut entities = Vec::new();
    let mut segments = Vec::new();
    let mut attrs: BTreeMap<EntityId, f64> = BTreeMap::new();
    let mut alignment = Vec::new();

    // The attribute channel travels as its scaled value; metadata noise
    // resamples it uniformly.
    let attr_col = g.feature_names.iter().position(|n| n == "attr");

    for e in &g.entities {
        let drop = rng.gen_range(0.0..1.0) < spec.drop_rate_entities;
        let (dx, dy) = (draw(&mut rng), draw(&mut rng));
        let noise_hit = rng.gen_range(0.0..1.0) < spec.metadata_noise_rate;
        let noise_val = rng.gen_range(0.0..1.0);
        if drop {
            continue;
        }
        let tid = format!("t_{}", e.id);
        let ring: Vec<Point> =
            e.vertices().iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
        entities.push(PolyEntity::new(&tid, ring)?);
        let mut attr = attr_col.map_or(0.0, |c| g.features[&e.id][c]);
        if noise_hit {
            attr = noise_val;
        }
        attrs.insert(tid.clone(), attr);
        alignment.push((e.id.clone(), tid));
    }
    for s in &g.segments {
        let drop = rng.gen_range(0.0..1.0) < spec.drop_rate_segments;
        let (dx, dy) = (draw(&mut rng), draw(&mut rng));
        let noise_hit = rng.gen_range(0.0..1.0) < spec.metadata_noise_rate;
        let noise_val = rng.gen_range(0.0..1.0);
        if drop {
            continue;
        }
        let tid = format!("t_{}", s.id);
        let points: Vec<Point> = s.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
        segments.push(crate::geom::Segment::new(&tid, format!("t_{}", s.way_id), points)?);
        let mut attr = attr_col.map_or(0.0, |c| g.features[&s.id][c]);
        if noise_hit {
            attr = noise_val;
        }
        attrs.insert(tid.clone(), attr);
        alignment.push((s.id.clone(), tid));
    }

    let features = build_features(&entities, &segments, &attrs);
    let gdb = Gdb::new(entities, segments, features, g.feature_names.clone())?;
    Ok((gdb, alignment))
}
