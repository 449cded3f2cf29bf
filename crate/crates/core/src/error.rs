//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the conflation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or degenerate geometry (NaN coordinates, self-intersecting
    /// rings, zero-area polygons, repeated consecutive way points).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Malformed geospatial database (duplicate ids, ragged feature matrix).
    #[error("gdb error: {0}")]
    Gdb(String),

    /// Knowledge-graph construction or query failure.
    #[error("knowledge graph error: {0}")]
    Kg(String),

    /// Tensor shape mismatch or non-finite value inside the gradient engine.
    #[error("tensor error: {0}")]
    Tensor(String),

    /// Encoder configuration or forward-pass failure.
    #[error("encoder error: {0}")]
    Encoder(String),

    /// Training aborted (typically a non-finite loss).
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Matching failure (incomparable shapes, missing embeddings).
    #[error("matcher error: {0}")]
    Matcher(String),

    /// MILP model construction error.
    #[error("milp model error: {0}")]
    Milp(String),

    /// The merge MILP is infeasible; carries the offending pair ids.
    #[error("merge infeasible for pairs: {pairs:?}")]
    MergeInfeasible { pairs: Vec<(String, String)> },

    /// Evaluation input mismatch (empty ground truth, unknown ids).
    #[error("metrics error: {0}")]
    Metrics(String),

    /// Scene generation failure (infeasible packing, bad spec).
    #[error("synth error: {0}")]
    Synth(String),

    /// GeoJSON / store ingestion failure.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// Pipeline configuration rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
