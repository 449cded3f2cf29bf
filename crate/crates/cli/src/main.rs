//! Batch pipeline driver.
//!
//! Stages compose through files in a working directory: `synth` (or
//! `ingest`) produces the Gdb stores, `build-kg` the graphs, `train` the
//! checkpoint, `match` the match set, `merge` the merged store, `eval` the
//! reports, and `sweep` the width-sweep table.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible merge,
//! 4 training divergence, 1 anything else.

use clap::{Args, Parser, Subcommand};
use mapweld_core::error::Error;
use mapweld_core::ingest::{ingest_geojson, save_gdb, IngestManifest, IngestOptions, ProjectionKind};
use mapweld_core::merger::MergeStatus;
use mapweld_core::pipeline::{self, PipelineConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mapweld", version, about = "Knowledge-graph map conflation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Working directory for stage artifacts.
    #[arg(long, default_value = "run")]
    dir: PathBuf,
    /// Override the scene seed.
    #[arg(long)]
    scene_seed: Option<u64>,
    /// Override the perturbation seed.
    #[arg(long)]
    perturb_seed: Option<u64>,
    /// Override the training seed.
    #[arg(long)]
    train_seed: Option<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the grid width (mu).
    #[arg(long)]
    mu: Option<f64>,
    /// Override the buffer width (lambda).
    #[arg(long)]
    lambda_buf: Option<f64>,
    /// Override the shift bound (eps_max).
    #[arg(long)]
    eps_max: Option<f64>,
    /// Override the match acceptance threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.scene_seed {
            cfg.scene.seed = v;
        }
        if let Some(v) = self.perturb_seed {
            cfg.perturb.seed = v;
        }
        if let Some(v) = self.train_seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.mu {
            cfg.geo.mu = v;
        }
        if let Some(v) = self.lambda_buf {
            cfg.geo.lambda_buf = v;
        }
        if let Some(v) = self.eps_max {
            cfg.merge.eps_max = v;
        }
        if let Some(v) = self.threshold {
            cfg.matcher.threshold = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes the resolved configuration next to the outputs so a run is
    /// reproducible from its directory alone.
    fn persist_resolved(&self, cfg: &PipelineConfig) -> Result<(), Error> {
        std::fs::create_dir_all(&self.dir)?;
        let text = toml::to_string_pretty(cfg)
            .map_err(|e| Error::Config(format!("serialize resolved config: {e}")))?;
        std::fs::write(self.dir.join("resolved_config.toml"), text)?;
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a GeoJSON FeatureCollection into a Gdb store.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Input GeoJSON file.
        #[arg(long)]
        input: PathBuf,
        /// Output store path (JSON).
        #[arg(long)]
        output: PathBuf,
        /// Apply an equirectangular lon/lat -> meters projection.
        #[arg(long)]
        project: bool,
        /// Align the feature schema to a prior ingestion manifest.
        #[arg(long)]
        schema_from: Option<PathBuf>,
    },
    /// Generate a synthetic source/target scene pair with ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Build the knowledge graphs of both stores.
    BuildKg {
        #[command(flatten)]
        common: Common,
    },
    /// Train the alignment encoder on the seed pairs.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Match entities between the two stores.
    Match {
        #[command(flatten)]
        common: Common,
    },
    /// Merge unmatched target objects into the source map.
    Merge {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate matching, consistency, and displacement.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the grid or buffer width and report neighbors and F1.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { common, input, output, project, schema_from } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            let schema = match schema_from {
                Some(p) => {
                    let m: IngestManifest =
                        serde_json::from_str(&std::fs::read_to_string(&p)?)?;
                    Some(m)
                }
                None => None,
            };
            let options = IngestOptions {
                projection: if project {
                    ProjectionKind::Equirectangular
                } else {
                    ProjectionKind::None
                },
                schema_from: schema,
            };
            let (gdb, manifest) = ingest_geojson(&input, &cfg.geo, &options)?;
            save_gdb(&gdb, &output)?;
            let manifest_path = manifest_path_for(&output);
            std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "ingested {} polygons, {} ways, {} segments -> {}",
                manifest.counts.polygons,
                manifest.counts.ways,
                manifest.counts.segments,
                output.display()
            );
            Ok(())
        }
        Command::Synth { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            pipeline::stage_synth(&cfg, &common.dir)?;
            println!("scene written to {}", common.dir.display());
            Ok(())
        }
        Command::BuildKg { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            pipeline::stage_build_kg(&cfg, &common.dir)?;
            println!("knowledge graphs written to {}", common.dir.display());
            Ok(())
        }
        Command::Train { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            pipeline::stage_train(&cfg, &common.dir)?;
            println!("checkpoint written to {}", common.dir.display());
            Ok(())
        }
        Command::Match { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            let ms = pipeline::stage_match(&cfg, &common.dir)?;
            println!(
                "{} pairs accepted, {} source / {} target unmatched",
                ms.pairs.len(),
                ms.unmatched_source.len(),
                ms.unmatched_target.len()
            );
            Ok(())
        }
        Command::Merge { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            match pipeline::stage_merge(&cfg, &common.dir)? {
                MergeStatus::Optimal => {
                    println!("merged store written to {}", common.dir.display());
                    Ok(())
                }
                MergeStatus::Infeasible { pairs } => Err(Error::MergeInfeasible { pairs }),
            }
        }
        Command::Eval { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            let summary = pipeline::stage_eval(&cfg, &common.dir)?;
            println!(
                "precision {:.4} recall {:.4} | new CNI {:.6} (position baseline {:.6})",
                summary.matching.precision,
                summary.matching.recall,
                summary.cni.new_cni,
                summary.cni_position_baseline.new_cni
            );
            Ok(())
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            common.persist_resolved(&cfg)?;
            pipeline::stage_sweep(&cfg, &common.dir)?;
            println!("sweep written to {}", common.dir.display());
            Ok(())
        }
    }
}

fn manifest_path_for(output: &Path) -> PathBuf {
    let name = output
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "store".into());
    output.with_file_name(format!("{name}.ingest-manifest.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::Config(_) => 2,
                Error::MergeInfeasible { .. } => 3,
                Error::TrainingDiverged(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
