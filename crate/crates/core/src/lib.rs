//! Map-conflation engine.
//!
//! Two vector geospatial databases are represented as knowledge graphs whose
//! edges encode relative position (a 3x3 grid of directional relations around
//! each polygon, plus buffer containment and endpoint connectivity for road
//! segments). A shared graph encoder is trained contrastively on a seed set of
//! aligned entities; homologous objects are then matched by solving a
//! minimum-weight bipartite assignment over the blended embedding/area
//! similarity. Unmatched target objects are merged into the source map by an
//! exact mixed-integer linear program over per-rectangle shift variables that
//! provably leaves the merged map free of new overlaps.
//!
//! Modules follow the pipeline order: [`geom`] and [`index`] supply the
//! spatial primitives, [`kgraph`] builds the graphs, [`encoder`] learns the
//! embeddings, [`matcher`] assigns pairs, [`merger`] resolves the leftovers,
//! [`metrics`] scores the result, and [`synth`]/[`ingest`]/[`pipeline`] make
//! the whole thing runnable end to end.

pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod geom;
pub mod index;
pub mod ingest;
pub mod kgraph;
pub mod matcher;
pub mod merger;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{Gdb, GeoConfig, Mbr, Point, PolyEntity, Segment, Way};
pub use kgraph::{KnowledgeGraph, RelationType, Triple};
