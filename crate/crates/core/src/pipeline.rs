//! Batch pipeline stages over a working directory.
//!
//! Every stage reads its inputs from files, writes its declared outputs, and
//! drops a run manifest (stage name, crate version, config hash, seeds) next
//! to them. Nothing here depends on wall-clock time, so two runs with the
//! same configuration produce byte-identical artifacts.

use crate::encoder::{
    compute_embeddings, load_checkpoint, save_checkpoint, train, TrainConfig,
};
use crate::error::{Error, Result};
use crate::geom::{EntityId, GeoConfig};
use crate::ingest::{load_gdb, save_gdb};
use crate::kgraph::{build_knowledge_graph, load_knowledge_graph, save_knowledge_graph};
use crate::matcher::{match_entities, write_match_csv, MatchConfig, MatchSet};
use crate::merger::{apply_merge, plan_merge, position_merge_baseline, MergeConfig, MergeStatus};
use crate::metrics::{
    cni_delta, dataset_stats, displacement_within, match_report, width_sweep, write_sweep_csv,
    SweepParam,
};
use crate::synth::{generate_scene, perturb, PerturbSpec, SceneSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Full pipeline configuration: one human-editable document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub geo: GeoConfig,
    pub train: TrainConfig,
    pub matcher: MatchConfig,
    pub merge: MergeConfig,
    pub scene: SceneSpec,
    pub perturb: PerturbSpec,
    pub split: SplitConfig,
    pub sweep: SweepConfig,
}

/// How much of the ground-truth alignment is exposed to training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub seed_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { seed_fraction: 0.3, seed: 17 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub widths: Vec<f64>,
    pub param: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            widths: vec![5.0, 25.0, 50.0, 100.0, 200.0, 400.0],
            param: "grid".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.geo.validate()?;
        self.train.validate()?;
        self.matcher.validate()?;
        self.merge.validate()?;
        self.perturb.validate()?;
        if !(0.0..=1.0).contains(&self.split.seed_fraction) {
            return Err(Error::Config("seed_fraction must be in [0, 1]".into()));
        }
        if self.sweep.param != "grid" && self.sweep.param != "buffer" {
            return Err(Error::Config(format!(
                "sweep.param must be \"grid\" or \"buffer\", got {}",
                self.sweep.param
            )));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex_digest(canonical.as_bytes())
    }

    pub fn sweep_param(&self) -> SweepParam {
        if self.sweep.param == "buffer" {
            SweepParam::BufferWidth
        } else {
            SweepParam::GridWidth
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file, for output comparison in determinism checks.
pub fn hash_file(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    stage: &'a str,
    version: &'a str,
    config_hash: String,
    seeds: Seeds,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Seeds {
    scene: u64,
    perturb: u64,
    train: u64,
    split: u64,
}

fn write_manifest(cfg: &PipelineConfig, dir: &Path, stage: &str, outputs: &[&str]) -> Result<()> {
    let manifest = RunManifest {
        stage,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.config_hash(),
        seeds: Seeds {
            scene: cfg.scene.seed,
            perturb: cfg.perturb.seed,
            train: cfg.train.seed,
            split: cfg.split.seed,
        },
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    std::fs::write(
        dir.join(format!("run_{stage}.manifest.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn paths(dir: &Path) -> PipelinePaths {
    PipelinePaths { dir: dir.to_path_buf() }
}

/// Canonical artifact locations inside a working directory.
pub struct PipelinePaths {
    dir: PathBuf,
}

impl PipelinePaths {
    pub fn source_gdb(&self) -> PathBuf {
        self.dir.join("source.gdb.json")
    }
    pub fn target_gdb(&self) -> PathBuf {
        self.dir.join("target.gdb.json")
    }
    pub fn alignment(&self) -> PathBuf {
        self.dir.join("alignment.csv")
    }
    pub fn train_pairs(&self) -> PathBuf {
        self.dir.join("train_pairs.csv")
    }
    pub fn kg_source_stem(&self) -> PathBuf {
        self.dir.join("kg_source")
    }
    pub fn kg_target_stem(&self) -> PathBuf {
        self.dir.join("kg_target")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }
    pub fn matchset(&self) -> PathBuf {
        self.dir.join("matchset.json")
    }
    pub fn merge_plan(&self) -> PathBuf {
        self.dir.join("merge_plan.json")
    }
    pub fn merge_model(&self) -> PathBuf {
        self.dir.join("merge_model.lp")
    }
    pub fn merged_gdb(&self) -> PathBuf {
        self.dir.join("merged.gdb.json")
    }
    pub fn eval(&self) -> PathBuf {
        self.dir.join("eval.json")
    }
    pub fn sweep_csv(&self) -> PathBuf {
        self.dir.join("sweep.csv")
    }
}

pub fn write_pairs_csv(path: &Path, pairs: &[(EntityId, EntityId)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "source_id,target_id")?;
    for (s, t) in pairs {
        writeln!(out, "{s},{t}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<(EntityId, EntityId)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        match (parts.next(), parts.next()) {
            (Some(s), Some(t)) => out.push((s.to_string(), t.to_string())),
            _ => return Err(Error::Config(format!("{}: bad pair line {}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Deterministic train/eval split of the ground-truth alignment.
pub fn split_alignment(
    alignment: &[(EntityId, EntityId)],
    cfg: &SplitConfig,
) -> Vec<(EntityId, EntityId)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..alignment.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n = ((alignment.len() as f64) * cfg.seed_fraction).ceil() as usize;
    let mut picked: Vec<(EntityId, EntityId)> =
        order.into_iter().take(n.min(alignment.len())).map(|i| alignment[i].clone()).collect();
    picked.sort();
    picked
}

/// `synth` stage: scene + perturbed copy + ground truth + train split.
pub fn stage_synth(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = paths(dir);
    let (source, manifest) = generate_scene(&cfg.scene, &cfg.geo)?;
    let (target, alignment) = perturb(&source, &cfg.perturb)?;
    save_gdb(&source, &p.source_gdb())?;
    save_gdb(&target, &p.target_gdb())?;
    crate::ingest::export_geojson(&source, &dir.join("source.geojson"))?;
    crate::ingest::export_geojson(&target, &dir.join("target.geojson"))?;
    std::fs::write(dir.join("scene_manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    write_pairs_csv(&p.alignment(), &alignment)?;
    let train_pairs = split_alignment(&alignment, &cfg.split);
    write_pairs_csv(&p.train_pairs(), &train_pairs)?;
    write_manifest(
        cfg,
        dir,
        "synth",
        &[
            "source.gdb.json",
            "target.gdb.json",
            "source.geojson",
            "target.geojson",
            "scene_manifest.json",
            "alignment.csv",
            "train_pairs.csv",
        ],
    )
}

/// `build-kg` stage: knowledge graphs of both stores.
pub fn stage_build_kg(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let p = paths(dir);
    let source = load_gdb(&p.source_gdb())?;
    let target = load_gdb(&p.target_gdb())?;
    let kg_s = build_knowledge_graph(&source, &cfg.geo)?;
    let kg_t = build_knowledge_graph(&target, &cfg.geo)?;
    save_knowledge_graph(&kg_s, &p.kg_source_stem())?;
    save_knowledge_graph(&kg_t, &p.kg_target_stem())?;
    write_manifest(
        cfg,
        dir,
        "build-kg",
        &[
            "kg_source.triples.tsv",
            "kg_source.sidecar.json",
            "kg_target.triples.tsv",
            "kg_target.sidecar.json",
        ],
    )
}

/// `train` stage: shared encoder on the two graphs and the seed alignment.
pub fn stage_train(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let p = paths(dir);
    let kg_s = load_knowledge_graph(&p.kg_source_stem())?;
    let kg_t = load_knowledge_graph(&p.kg_target_stem())?;
    let train_pairs = read_pairs_csv(&p.train_pairs())?;
    let out = train(&kg_s, &kg_t, &train_pairs, &cfg.train)?;
    save_checkpoint(&p.checkpoint(), &out.params, &cfg.train, &kg_s.feature_names)?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(p.train_log())?);
    writeln!(log, "epoch,contrastive,semantic,total")?;
    for row in &out.log {
        writeln!(log, "{},{},{},{}", row.epoch, row.contrastive, row.semantic, row.total)?;
    }
    log.flush()?;
    write_manifest(cfg, dir, "train", &["checkpoint.json", "train_log.csv"])
}

/// `match` stage: embeddings from the checkpoint, similarity, assignment.
pub fn stage_match(cfg: &PipelineConfig, dir: &Path) -> Result<MatchSet> {
    let p = paths(dir);
    let source = load_gdb(&p.source_gdb())?;
    let target = load_gdb(&p.target_gdb())?;
    let kg_s = load_knowledge_graph(&p.kg_source_stem())?;
    let kg_t = load_knowledge_graph(&p.kg_target_stem())?;
    let ckpt = load_checkpoint(&p.checkpoint())?;
    let params = ckpt.to_params()?;
    let emb_s = compute_embeddings(&params, &kg_s, ckpt.config.k_hop)?;
    let emb_t = compute_embeddings(&params, &kg_t, ckpt.config.k_hop)?;
    let embeddings = crate::encoder::EmbeddingSet {
        dim: emb_s.cols,
        source: kg_s
            .ids
            .iter()
            .enumerate()
            .map(|(r, id)| (id.clone(), emb_s.row(r).to_vec()))
            .collect(),
        target: kg_t
            .ids
            .iter()
            .enumerate()
            .map(|(r, id)| (id.clone(), emb_t.row(r).to_vec()))
            .collect(),
        relations_source: crate::encoder::relation_encoding(&kg_s, &emb_s),
        relations_target: crate::encoder::relation_encoding(&kg_t, &emb_t),
    };
    let ms = match_entities(&source, &target, &embeddings, &cfg.geo, &cfg.matcher)?;
    std::fs::write(p.matchset(), serde_json::to_string_pretty(&ms)?)?;
    write_match_csv(&ms, dir)?;
    write_manifest(
        cfg,
        dir,
        "match",
        &["matchset.json", "matches.csv", "unmatched_source.csv", "unmatched_target.csv"],
    )?;
    Ok(ms)
}

pub fn load_matchset(dir: &Path) -> Result<MatchSet> {
    let p = paths(dir);
    Ok(serde_json::from_str(&std::fs::read_to_string(p.matchset())?)?)
}

/// `merge` stage: exact MILP merge of the unmatched target objects.
/// Returns the plan status so callers can map it to an exit code.
pub fn stage_merge(cfg: &PipelineConfig, dir: &Path) -> Result<MergeStatus> {
    let p = paths(dir);
    let source = load_gdb(&p.source_gdb())?;
    let target = load_gdb(&p.target_gdb())?;
    let ms = load_matchset(dir)?;
    let (plan, model) = plan_merge(&source, &target, &ms, &cfg.merge)?;
    plan.write_json(&p.merge_plan())?;
    model.write_lp(&p.merge_model())?;
    if plan.status == MergeStatus::Optimal {
        let merged = apply_merge(&source, &target, &ms, &plan)?;
        save_gdb(&merged, &p.merged_gdb())?;
    }
    write_manifest(cfg, dir, "merge", &["merge_plan.json", "merge_model.lp", "merged.gdb.json"])?;
    Ok(plan.status)
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub matching: crate::metrics::MatchReport,
    pub cni: crate::metrics::CniDelta,
    pub cni_position_baseline: crate::metrics::CniDelta,
    pub displacement: Vec<(f64, f64)>,
    pub stats_source: crate::metrics::DatasetStats,
    pub stats_target: crate::metrics::DatasetStats,
    pub stats_merged: crate::metrics::DatasetStats,
}

/// `eval` stage: match accounting, CNI deltas (including the position
/// baseline), displacement fractions, and dataset statistics.
pub fn stage_eval(cfg: &PipelineConfig, dir: &Path) -> Result<EvalSummary> {
    let p = paths(dir);
    let source = load_gdb(&p.source_gdb())?;
    let target = load_gdb(&p.target_gdb())?;
    let merged = load_gdb(&p.merged_gdb())?;
    let ms = load_matchset(dir)?;
    let truth = read_pairs_csv(&p.alignment())?;

    let matching = match_report(&ms, &truth)?;
    let cni = cni_delta(&merged, &source)?;
    let baseline = position_merge_baseline(&source, &target, &ms)?;
    let cni_position_baseline = cni_delta(&baseline, &source)?;
    let displacement = displacement_within(&merged, &target, &cfg.geo.eta)?;

    let summary = EvalSummary {
        matching,
        cni,
        cni_position_baseline,
        displacement,
        stats_source: dataset_stats(&source),
        stats_target: dataset_stats(&target),
        stats_merged: dataset_stats(&merged),
    };
    std::fs::write(p.eval(), serde_json::to_string_pretty(&summary)?)?;
    let mut disp = std::io::BufWriter::new(std::fs::File::create(dir.join("displacement.csv"))?);
    writeln!(disp, "eta,fraction_within")?;
    for (eta, frac) in &summary.displacement {
        writeln!(disp, "{eta},{frac}")?;
    }
    disp.flush()?;
    write_manifest(cfg, dir, "eval", &["eval.json", "displacement.csv"])?;
    Ok(summary)
}

/// `sweep` stage: grid or buffer width sweep.
pub fn stage_sweep(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let p = paths(dir);
    let source = load_gdb(&p.source_gdb())?;
    let target = load_gdb(&p.target_gdb())?;
    let truth = read_pairs_csv(&p.alignment())?;
    let train_pairs = read_pairs_csv(&p.train_pairs())?;
    let rows = width_sweep(
        &source,
        &target,
        &train_pairs,
        &truth,
        &cfg.sweep.widths,
        cfg.sweep_param(),
        &cfg.geo,
        &cfg.train,
        &cfg.matcher,
    )?;
    write_sweep_csv(&rows, &p.sweep_csv())?;
    write_manifest(cfg, dir, "sweep", &["sweep.csv"])
}

/// Runs synth, build-kg, train, match, merge, and eval in order.
pub fn run_all(cfg: &PipelineConfig, dir: &Path) -> Result<EvalSummary> {
    stage_synth(cfg, dir)?;
    stage_build_kg(cfg, dir)?;
    stage_train(cfg, dir)?;
    stage_match(cfg, dir)?;
    match stage_merge(cfg, dir)? {
        MergeStatus::Optimal => {}
        MergeStatus::Infeasible { pairs } => {
            return Err(Error::MergeInfeasible { pairs });
        }
    }
    stage_eval(cfg, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip_and_unknown_key_rejection() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let parsed: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.config_hash(), parsed.config_hash());

        let bad = format!("{text}\n[geo]\nnot_a_key = 1\n");
        assert!(toml::from_str::<PipelineConfig>(&bad).is_err());
    }

    #[test]
    fn split_is_deterministic_and_sized() {
        let alignment: Vec<(EntityId, EntityId)> =
            (0..10).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        let cfg = SplitConfig { seed_fraction: 0.3, seed: 5 };
        let a = split_alignment(&alignment, &cfg);
        let b = split_alignment(&alignment, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn pairs_csv_round_trip() {
        let dir = std::env::temp_dir().join("mapweld-pipeline-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pairs.csv");
        let pairs = vec![("a".to_string(), "x".to_string()), ("b".to_string(), "y".to_string())];
        write_pairs_csv(&path, &pairs).unwrap();
        assert_eq!(read_pairs_csv(&path).unwrap(), pairs);
    }
}
