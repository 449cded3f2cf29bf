//! Knowledge-graph serialization: line-oriented triples plus a JSON sidecar
//! for the feature matrix and the id-to-row mapping.

use super::{KnowledgeGraph, RelationType, Triple};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    ids: Vec<String>,
    n_polygons: usize,
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
}

/// Writes `<stem>.triples.tsv` (head TAB relation TAB tail) and
/// `<stem>.sidecar.json`.
pub fn save_knowledge_graph(kg: &KnowledgeGraph, stem: &Path) -> Result<()> {
    let tsv_path = stem.with_extension("triples.tsv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&tsv_path)?);
    for t in &kg.triples {
        writeln!(out, "{}\t{}\t{}", t.head, t.rel.name(), t.tail)?;
    }
    out.flush()?;

    let sidecar = Sidecar {
        ids: kg.ids.clone(),
        n_polygons: kg.n_polygons,
        feature_names: kg.feature_names.clone(),
        features: kg.features.clone(),
    };
    let json_path = stem.with_extension("sidecar.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Loads a graph saved by [`save_knowledge_graph`].
pub fn load_knowledge_graph(stem: &Path) -> Result<KnowledgeGraph> {
    let tsv_path = stem.with_extension("triples.tsv");
    let text = std::fs::read_to_string(&tsv_path)?;
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (head, rel, tail) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(r), Some(t), None) => (h, r, t),
            _ => {
                return Err(Error::Kg(format!(
                    "{}:{}: expected head<TAB>relation<TAB>tail",
                    tsv_path.display(),
                    lineno + 1
                )))
            }
        };
        let rel = RelationType::from_name(rel)
            .ok_or_else(|| Error::Kg(format!("unknown relation name {rel}")))?;
        triples.push(Triple { head: head.to_string(), rel, tail: tail.to_string() });
    }

    let sidecar: Sidecar =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("sidecar.json"))?)?;
    KnowledgeGraph::new(
        sidecar.ids,
        sidecar.n_polygons,
        triples,
        sidecar.features,
        sidecar.feature_names,
    )
}
