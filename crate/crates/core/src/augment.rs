//! Global-to-local augmentation: a user subgraph is expanded with nodes of the
//! trusted global graph that lie within a hop threshold of its own nodes,
//! together with every global edge among the expanded node set.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeRef, Origin, Subgraph};
use crate::rng::keyed_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Hop-bounded expansion in the trusted graph.
    Structural,
    None,
    /// As many uniformly sampled global nodes as structural mode would add.
    Random,
    /// Structural expansion over a graph built from genuine and synthetic resumes.
    Mixed,
}

impl AugmentMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "structural" => AugmentMode::Structural,
            "none" => AugmentMode::None,
            "random" => AugmentMode::Random,
            "mixed" => AugmentMode::Mixed,
            other => return Err(Error::Config(format!("unknown augmentation mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    #[serde(default = "default_hops")]
    pub hop_threshold: usize,
    #[serde(default = "default_cap")]
    pub max_added_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_hops() -> usize {
    2
}

fn default_cap() -> usize {
    256
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::Structural,
            hop_threshold: default_hops(),
            max_added_nodes: default_cap(),
            seed: 0,
        }
    }
}

/// Multi-source BFS over the undirected view of every relation. Nodes
/// farther than `limit` hops (when given) or unreachable are absent.
pub fn hop_distances_within(
    global: &HeteroGraph,
    sources: &[NodeRef],
    limit: Option<usize>,
) -> HashMap<NodeRef, usize> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in sources {
        if global.contains(s) && dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if limit.is_some_and(|l| du >= l) {
            continue;
        }
        for &v in global.undirected_neighbors(u) {
            if !dist.contains_key(&v) {
                dist.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn hop_distances(global: &HeteroGraph, sources: &[NodeRef]) -> HashMap<NodeRef, usize> {
    hop_distances_within(global, sources, None)
}

/// Nodes structural expansion adds, ordered by (hop, kind, key) and capped.
fn structural_additions(sub: &Subgraph, global: &HeteroGraph, cfg: &AugmentConfig) -> Vec<(NodeRef, usize)> {
    let sources: Vec<NodeRef> = sub.nodes().iter().map(|n| n.node).collect();
    let dist = hop_distances_within(global, &sources, Some(cfg.hop_threshold));
    let mut added: Vec<(NodeRef, usize)> = dist
        .into_iter()
        .filter(|(n, _)| !sub.contains(*n))
        .collect();
    added.sort_by_key(|&(n, d)| (d, n));
    added.truncate(cfg.max_added_nodes);
    added
}

fn with_induced_edges(
    sub: &Subgraph,
    global: &HeteroGraph,
    added: &[(NodeRef, Option<usize>)],
) -> Result<Subgraph> {
    let mut out = sub.clone();
    for &(n, hop) in added {
        out.add_node(n, Origin::Augmented, hop);
    }
    for e in sub.edges() {
        debug_assert!(out.has_edge(e.relation, sub.nodes()[e.src].node, sub.nodes()[e.dst].node));
    }
    let members: Vec<NodeRef> = out.nodes().iter().map(|n| n.node).collect();
    for u in members {
        for &(relation, v) in global.out_edges(u) {
            if out.contains(v) {
                let duration = global.edge(relation, u, v).and_then(|a| a.duration);
                out.add_edge(relation, u, v, duration)?;
            }
        }
    }
    Ok(out)
}

/// Expands `sub` according to `cfg.mode`. Original nodes and edges always survive.
pub fn augment_subgraph(sub: &Subgraph, global: &HeteroGraph, cfg: &AugmentConfig) -> Result<Subgraph> {
    match cfg.mode {
        AugmentMode::None => Ok(sub.clone()),
        AugmentMode::Structural | AugmentMode::Mixed => {
            let added: Vec<(NodeRef, Option<usize>)> = structural_additions(sub, global, cfg)
                .into_iter()
                .map(|(n, d)| (n, Some(d)))
                .collect();
            with_induced_edges(sub, global, &added)
        }
        AugmentMode::Random => {
            let count = structural_additions(sub, global, cfg).len();
            let pool: Vec<NodeRef> = global.nodes().filter(|n| !sub.contains(*n)).collect();
            let count = count.min(pool.len());
            let mut rng = crate::rng::substream(keyed_seed(cfg.seed, &sub.id), 0);
            let picked: BTreeSet<NodeRef> = sample(&mut rng, pool.len(), count)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            let added: Vec<(NodeRef, Option<usize>)> = picked.into_iter().map(|n| (n, None)).collect();
            with_induced_edges(sub, global, &added)
        }
    }
}
