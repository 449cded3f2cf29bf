//! Shared scene builders for the benchmarks.

use mapweld_core::geom::{Gdb, GeoConfig};
use mapweld_core::synth::{generate_scene, perturb, PerturbSpec, SceneSpec};

/// Deterministic source/target pair with the given building count.
pub fn scene_pair(n_buildings: usize, seed: u64) -> (Gdb, Gdb, Vec<(String, String)>) {
    let geo = GeoConfig::default();
    let n_ways = ((n_buildings as f64 / 3.0).sqrt().ceil() as usize).max(2);
    let spec = SceneSpec {
        n_buildings,
        n_ways,
        extent: 100.0 * n_ways as f64,
        seed,
        ..SceneSpec::default()
    };
    let (source, _) = generate_scene(&spec, &geo).unwrap();
    let (target, alignment) = perturb(
        &source,
        &PerturbSpec { jitter_sigma: 2.0, seed: seed + 1, ..PerturbSpec::default() },
    )
    .unwrap();
    (source, target, alignment)
}
