//! Heterogeneous multi-layer career graph.
//!
//! Nodes are titles, companies and descriptions, identified by kind and
//! vocabulary index. Edges are typed by [`Relation`]; transitions and
//! worked-at durations come from consecutive and individual job entries, and
//! description similarity from thresholded cosine similarity.
//!
//! The global graph is built from trusted genuine resumes only. A user
//! subgraph holds the entities and relations of one resume.

mod io;
mod relation;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{DescriptionTable, EntityKind, Label, Resume};
use crate::error::{Error, Result};

pub use io::{GraphDocument, GraphMeta};
pub use relation::{Layer, LayerSet, Relation};

/// Default cosine threshold for description similarity edges.
pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: EntityKind,
    pub key: u32,
}

impl NodeRef {
    pub fn title(key: u32) -> Self {
        NodeRef { kind: EntityKind::Title, key }
    }
    pub fn company(key: u32) -> Self {
        NodeRef { kind: EntityKind::Company, key }
    }
    pub fn description(key: u32) -> Self {
        NodeRef { kind: EntityKind::Description, key }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub relation: Relation,
    pub src: NodeRef,
    pub dst: NodeRef,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeAttr {
    /// Mean duration in months over merged occurrences (worked-at relations only).
    pub duration: Option<f64>,
    pub multiplicity: u32,
}

/// Accumulates edge occurrences; parallel occurrences merge into one edge with
/// mean duration and a multiplicity count.
#[derive(Debug, Default, Clone)]
struct EdgeAccumulator {
    edges: BTreeMap<EdgeKey, (f64, u32)>,
}

impl EdgeAccumulator {
    fn add(&mut self, relation: Relation, src: NodeRef, dst: NodeRef, duration: Option<f64>) {
        let mut push = |relation, src, dst| {
            let e = self.edges.entry(EdgeKey { relation, src, dst }).or_insert((0.0, 0));
            e.0 += duration.unwrap_or(0.0);
            e.1 += 1;
        };
        push(relation, src, dst);
        if let Some(inv) = relation.inverse() {
            push(inv, dst, src);
        }
    }

    fn finish(self) -> BTreeMap<EdgeKey, EdgeAttr> {
        self.edges
            .into_iter()
            .map(|(k, (sum, m))| {
                let duration = k.relation.carries_duration().then(|| sum / m as f64);
                (k, EdgeAttr { duration, multiplicity: m })
            })
            .collect()
    }
}

/// Emits the nodes and edge occurrences contributed by one resume.
fn resume_structure(
    resume: &Resume,
    desc: &DescriptionTable,
    layers: &LayerSet,
    nodes: &mut Vec<NodeRef>,
    acc: &mut EdgeAccumulator,
) {
    let mut push_node = |n: NodeRef| {
        if !nodes.contains(&n) {
            nodes.push(n);
        }
    };
    for e in &resume.entries {
        let t = NodeRef::title(e.title_id.0);
        let c = NodeRef::company(e.company_id.0);
        push_node(t);
        push_node(c);
        if let Some(d) = desc.description_of(e.title_id.0) {
            push_node(NodeRef::description(d));
            if layers.cross {
                acc.add(Relation::HasDescription, t, NodeRef::description(d), None);
            }
        }
        if layers.cross {
            acc.add(Relation::WorkedAt, t, c, Some(e.duration_months as f64));
        }
    }
    for w in resume.entries.windows(2) {
        if layers.title && w[0].title_id != w[1].title_id {
            acc.add(
                Relation::TitleTransition,
                NodeRef::title(w[0].title_id.0),
                NodeRef::title(w[1].title_id.0),
                None,
            );
        }
        if layers.company && w[0].company_id != w[1].company_id {
            acc.add(
                Relation::CompanyTransition,
                NodeRef::company(w[0].company_id.0),
                NodeRef::company(w[1].company_id.0),
                None,
            );
        }
    }
}

/// Construction settings for the global graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub layers: LayerSet,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            tau: DEFAULT_TAU,
            layers: LayerSet::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    nodes: BTreeSet<NodeRef>,
    edges: BTreeMap<EdgeKey, EdgeAttr>,
    out: HashMap<NodeRef, Vec<(Relation, NodeRef)>>,
    undirected: HashMap<NodeRef, Vec<NodeRef>>,
    /// Ids of the resumes whose entries produced nodes and edges.
    contributors: BTreeSet<String>,
    tau: f64,
}

impl HeteroGraph {
    fn from_parts(
        nodes: BTreeSet<NodeRef>,
        edges: BTreeMap<EdgeKey, EdgeAttr>,
        contributors: BTreeSet<String>,
        tau: f64,
    ) -> Self {
        let mut out: HashMap<NodeRef, Vec<(Relation, NodeRef)>> = HashMap::new();
        let mut undirected: HashMap<NodeRef, BTreeSet<NodeRef>> = HashMap::new();
        for k in edges.keys() {
            out.entry(k.src).or_default().push((k.relation, k.dst));
            undirected.entry(k.src).or_default().insert(k.dst);
            undirected.entry(k.dst).or_default().insert(k.src);
        }
        HeteroGraph {
            nodes,
            edges,
            out,
            undirected: undirected
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            contributors,
            tau,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        self.nodes.contains(&n)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &EdgeAttr)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, relation: Relation, src: NodeRef, dst: NodeRef) -> Option<&EdgeAttr> {
        self.edges.get(&EdgeKey { relation, src, dst })
    }

    /// Outgoing `(relation, destination)` pairs of `n`.
    pub fn out_edges(&self, n: NodeRef) -> &[(Relation, NodeRef)] {
        self.out.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Neighbors of `n` under `relation`: sources of edges of that type ending at `n`.
    pub fn neighbors(&self, n: NodeRef, relation: Relation) -> Vec<NodeRef> {
        self.edges
            .keys()
            .filter(|k| k.relation == relation && k.dst == n)
            .map(|k| k.src)
            .collect()
    }

    /// Neighbors of `n` ignoring direction and relation type, ascending.
    pub fn undirected_neighbors(&self, n: NodeRef) -> &[NodeRef] {
        self.undirected.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contributors(&self) -> &BTreeSet<String> {
        &self.contributors
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Symmetric description-similarity edges among `ids`: `(u, v)`, `u != v`,
/// whenever the cosine similarity of their vectors is at least `tau`.
pub fn description_edges_among(
    table: &DescriptionTable,
    ids: &[u32],
    tau: f64,
) -> Result<BTreeSet<(u32, u32)>> {
    let mut vectors = Vec::with_capacity(ids.len());
    for &id in ids {
        let v = table
            .vector(id)
            .ok_or_else(|| Error::MissingDescription(format!("description #{id}")))?;
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::Config(format!("description #{id} has a zero-norm vector")));
        }
        vectors.push(v);
    }
    let mut out = BTreeSet::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if ids[i] != ids[j] && cosine(vectors[i], vectors[j]) >= tau {
                out.insert((ids[i], ids[j]));
                out.insert((ids[j], ids[i]));
            }
        }
    }
    Ok(out)
}

/// Similarity edges among every description referenced by a title.
pub fn description_edges(table: &DescriptionTable, tau: f64) -> Result<BTreeSet<(u32, u32)>> {
    description_edges_among(table, &table.referenced(), tau)
}

fn build_graph(resumes: &[Resume], desc: &DescriptionTable, cfg: &GraphConfig) -> Result<HeteroGraph> {
    let mut nodes = Vec::new();
    let mut acc = EdgeAccumulator::default();
    let mut contributors = BTreeSet::new();
    for r in resumes {
        r.validate()?;
        resume_structure(r, desc, &cfg.layers, &mut nodes, &mut acc);
        contributors.insert(r.id.clone());
    }
    let nodes: BTreeSet<NodeRef> = nodes.into_iter().collect();
    let mut edges = acc.finish();
    if cfg.layers.description {
        let descs: Vec<u32> = nodes
            .iter()
            .filter(|n| n.kind == EntityKind::Description)
            .map(|n| n.key)
            .collect();
        for (u, v) in description_edges_among(desc, &descs, cfg.tau)? {
            edges.insert(
                EdgeKey {
                    relation: Relation::DescSimilar,
                    src: NodeRef::description(u),
                    dst: NodeRef::description(v),
                },
                EdgeAttr {
                    duration: None,
                    multiplicity: 1,
                },
            );
        }
    }
    Ok(HeteroGraph::from_parts(nodes, edges, contributors, cfg.tau))
}

/// Builds the trusted global graph. Every input resume must be genuine.
pub fn build_global_graph(
    real_training: &[Resume],
    desc: &DescriptionTable,
    cfg: &GraphConfig,
) -> Result<HeteroGraph> {
    if let Some(r) = real_training.iter().find(|r| r.label == Label::Synthetic) {
        return Err(Error::PoisonedGraph(r.id.clone()));
    }
    build_graph(real_training, desc, cfg)
}

/// Builds a graph from genuine and synthetic resumes alike. Only for the
/// contaminated-graph ablation; never use as the trusted graph.
pub fn build_mixed_graph(
    resumes: &[Resume],
    desc: &DescriptionTable,
    cfg: &GraphConfig,
) -> Result<HeteroGraph> {
    build_graph(resumes, desc, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubNode {
    pub node: NodeRef,
    pub origin: Origin,
    /// BFS distance in the global graph for augmented nodes; `None` when unknown.
    pub hop: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubEdge {
    pub relation: Relation,
    /// Positions in [`Subgraph::nodes`].
    pub src: usize,
    pub dst: usize,
    pub duration: Option<f64>,
}

/// Node and edge subset describing one resume, optionally augmented.
///
/// Node order is the encoder order: original nodes in resume order, then
/// augmented nodes by (hop, kind, key).
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub id: String,
    nodes: Vec<SubNode>,
    index: HashMap<NodeRef, usize>,
    edges: BTreeMap<(Relation, usize, usize), Option<f64>>,
}

impl Subgraph {
    pub fn new(id: impl Into<String>) -> Self {
        Subgraph {
            id: id.into(),
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: BTreeMap::new(),
        }
    }

    /// Adds a node if absent and returns its position.
    pub fn add_node(&mut self, node: NodeRef, origin: Origin, hop: Option<usize>) -> usize {
        if let Some(&i) = self.index.get(&node) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(SubNode { node, origin, hop });
        self.index.insert(node, i);
        i
    }

    /// Adds an edge between existing nodes; an existing edge of the same key is kept.
    pub fn add_edge(&mut self, relation: Relation, src: NodeRef, dst: NodeRef, duration: Option<f64>) -> Result<()> {
        let (Some(&s), Some(&d)) = (self.index.get(&src), self.index.get(&dst)) else {
            return Err(Error::Config(format!(
                "edge {relation} endpoint missing from subgraph `{}`",
                self.id
            )));
        };
        self.edges.entry((relation, s, d)).or_insert(duration);
        Ok(())
    }

    pub fn nodes(&self) -> &[SubNode] {
        &self.nodes
    }

    pub fn position(&self, n: NodeRef) -> Option<usize> {
        self.index.get(&n).copied()
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        self.index.contains_key(&n)
    }

    pub fn edges(&self) -> impl Iterator<Item = SubEdge> + '_ {
        self.edges.iter().map(|(&(relation, src, dst), &duration)| SubEdge {
            relation,
            src,
            dst,
            duration,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, relation: Relation, src: NodeRef, dst: NodeRef) -> bool {
        match (self.position(src), self.position(dst)) {
            (Some(s), Some(d)) => self.edges.contains_key(&(relation, s, d)),
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edge keys in node-reference form, for set comparisons.
    pub fn edge_keys(&self) -> BTreeSet<EdgeKey> {
        self.edges
            .keys()
            .map(|&(relation, s, d)| EdgeKey {
                relation,
                src: self.nodes[s].node,
                dst: self.nodes[d].node,
            })
            .collect()
    }

    /// Copy with nodes reordered by `order` (a permutation of positions).
    pub fn permuted(&self, order: &[usize]) -> Subgraph {
        let mut out = Subgraph::new(self.id.clone());
        for &i in order {
            let n = self.nodes[i];
            out.add_node(n.node, n.origin, n.hop);
        }
        for e in self.edges() {
            out.add_edge(e.relation, self.nodes[e.src].node, self.nodes[e.dst].node, e.duration)
                .expect("same node set");
        }
        out
    }
}

/// The subgraph of a single resume: its titles, companies and mapped
/// descriptions with intra-resume transitions, worked-at and has-description
/// edges. Description similarity arrives only through augmentation.
pub fn build_user_subgraph(resume: &Resume, desc: &DescriptionTable, layers: &LayerSet) -> Result<Subgraph> {
    resume.validate()?;
    let mut nodes = Vec::new();
    let mut acc = EdgeAccumulator::default();
    resume_structure(resume, desc, layers, &mut nodes, &mut acc);
    let mut sub = Subgraph::new(resume.id.clone());
    for n in nodes {
        sub.add_node(n, Origin::Original, Some(0));
    }
    for (k, attr) in acc.finish() {
        sub.add_edge(k.relation, k.src, k.dst, attr.duration)?;
    }
    Ok(sub)
}
