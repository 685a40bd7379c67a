use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeAttr, EdgeKey, HeteroGraph, NodeRef, Relation};
use crate::corpus::{DescriptionTable, EntityKind, Vocabularies};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub kind: EntityKind,
    pub key: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub kind: Relation,
    pub src: usize,
    pub dst: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub tau: f64,
    /// Ids of the resumes the graph was built from.
    pub built_from: Vec<String>,
    pub resume_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
}

/// JSON form of a [`HeteroGraph`]. Nodes are ordered by kind, then vocabulary index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub meta: GraphMeta,
}

impl HeteroGraph {
    pub fn to_document(&self, names: Option<(&Vocabularies, &DescriptionTable)>) -> GraphDocument {
        let ids: BTreeMap<NodeRef, usize> = self.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeRecord {
                id,
                kind: n.kind,
                key: n.key,
                name: names.and_then(|(v, d)| {
                    match n.kind {
                        EntityKind::Title => v.titles.name(n.key),
                        EntityKind::Company => v.companies.name(n.key),
                        EntityKind::Description => d.text(n.key),
                    }
                    .map(str::to_string)
                }),
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|(k, a)| EdgeRecord {
                kind: k.relation,
                src: ids[&k.src],
                dst: ids[&k.dst],
                duration: a.duration,
                multiplicity: Some(a.multiplicity),
            })
            .collect();
        GraphDocument {
            nodes,
            edges,
            meta: GraphMeta {
                tau: self.tau,
                built_from: self.contributors.iter().cloned().collect(),
                resume_count: self.contributors.len(),
                config_hash: None,
                tool_version: None,
            },
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<HeteroGraph> {
        let mut by_id = BTreeMap::new();
        for n in &doc.nodes {
            if by_id.insert(n.id, NodeRef { kind: n.kind, key: n.key }).is_some() {
                return Err(Error::Config(format!("duplicate node id {}", n.id)));
            }
        }
        let node = |id: usize| {
            by_id
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Config(format!("edge references unknown node {id}")))
        };
        let mut edges = BTreeMap::new();
        for e in &doc.edges {
            let (src, dst) = (node(e.src)?, node(e.dst)?);
            if e.kind.endpoints() != (src.kind, dst.kind) {
                return Err(Error::Config(format!("edge {} connects {} to {}", e.kind, src.kind, dst.kind)));
            }
            edges.insert(
                EdgeKey {
                    relation: e.kind,
                    src,
                    dst,
                },
                EdgeAttr {
                    duration: e.duration,
                    multiplicity: e.multiplicity.unwrap_or(1),
                },
            );
        }
        let nodes: BTreeSet<NodeRef> = by_id.into_values().collect();
        let contributors = doc.meta.built_from.iter().cloned().collect();
        Ok(HeteroGraph::from_parts(nodes, edges, contributors, doc.meta.tau))
    }

    pub fn write_json(&self, path: &Path, doc_meta: impl FnOnce(&mut GraphDocument)) -> Result<()> {
        let mut doc = self.to_document(None);
        doc_meta(&mut doc);
        write_document(path, &doc)
    }
}

pub(crate) fn write_document(path: &Path, doc: &GraphDocument) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, doc)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

impl GraphDocument {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_document(path, self)
    }

    pub fn read(path: &Path) -> Result<GraphDocument> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}
