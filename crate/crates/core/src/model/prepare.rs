use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;

use super::pipeline::SeenEntities;
use crate::autodiff::CsrMatrix;
use crate::corpus::{DescriptionTable, EntityKind};
use crate::error::{Error, Result};
use crate::graph::{Relation, Subgraph};
use crate::scalar::Scalar;

/// Mean aggregation for one relation: rows are the destination nodes that
/// have at least one in-neighbour under the relation.
#[derive(Debug, Clone)]
pub(crate) struct RelationBlock<T> {
    pub relation: Relation,
    pub dst: Vec<usize>,
    pub aggregate: Arc<CsrMatrix<T>>,
    /// Per destination, the mean log-duration of its incoming edges.
    pub mean_log_duration: Option<Array2<T>>,
}

/// A subgraph compiled into the index arrays and constant matrices the
/// forward pass consumes. Built once and reused across epochs.
#[derive(Debug, Clone)]
pub struct PreparedGraph<T> {
    pub id: String,
    pub(crate) kinds: Vec<usize>,
    pub(crate) title_pos: Vec<usize>,
    pub(crate) title_rows: Vec<usize>,
    pub(crate) company_pos: Vec<usize>,
    pub(crate) company_rows: Vec<usize>,
    pub(crate) desc_pos: Vec<usize>,
    pub(crate) desc_vectors: Array2<T>,
    pub(crate) relations: Vec<RelationBlock<T>>,
}

impl<T> PreparedGraph<T> {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = Relation> + '_ {
        self.relations.iter().map(|b| b.relation)
    }
}

/// Compiles `sub`. Titles and companies absent from `seen` read the UNK row.
pub fn prepare<T: Scalar>(sub: &Subgraph, desc: &DescriptionTable, seen: &SeenEntities) -> Result<PreparedGraph<T>> {
    let n = sub.len();
    let mut g = PreparedGraph {
        id: sub.id.clone(),
        kinds: Vec::with_capacity(n),
        title_pos: Vec::new(),
        title_rows: Vec::new(),
        company_pos: Vec::new(),
        company_rows: Vec::new(),
        desc_pos: Vec::new(),
        desc_vectors: Array2::zeros((0, desc.dim())),
        relations: Vec::new(),
    };
    let mut desc_rows: Vec<T> = Vec::new();
    for (pos, node) in sub.nodes().iter().enumerate() {
        let key = node.node.key;
        g.kinds.push(node.node.kind.index());
        match node.node.kind {
            EntityKind::Title => {
                g.title_pos.push(pos);
                g.title_rows.push(seen.title_row(key));
            }
            EntityKind::Company => {
                g.company_pos.push(pos);
                g.company_rows.push(seen.company_row(key));
            }
            EntityKind::Description => {
                let v = desc
                    .vector(key)
                    .ok_or_else(|| Error::MissingDescription(format!("description node {key}")))?;
                g.desc_pos.push(pos);
                desc_rows.extend(v.iter().map(|&x| T::of(x)));
            }
        }
    }
    g.desc_vectors = Array2::from_shape_vec((g.desc_pos.len(), desc.dim()), desc_rows).expect("rows of width dim");

    // relation -> dst -> [(src, duration)]
    let mut incoming: BTreeMap<Relation, BTreeMap<usize, Vec<(usize, Option<f64>)>>> = BTreeMap::new();
    for e in sub.edges() {
        incoming
            .entry(e.relation)
            .or_default()
            .entry(e.dst)
            .or_default()
            .push((e.src, e.duration));
    }
    for (relation, by_dst) in incoming {
        let mut triplets = Vec::new();
        let mut dst = Vec::with_capacity(by_dst.len());
        let mut logs = Vec::new();
        for (row, (&v, srcs)) in by_dst.iter().enumerate() {
            dst.push(v);
            let w = T::of(1.0 / srcs.len() as f64);
            for &(u, _) in srcs {
                triplets.push((row, u, w));
            }
            if relation.carries_duration() {
                let mut total = 0.0;
                for &(_, d) in srcs {
                    let d = d.ok_or_else(|| Error::Config(format!("{relation} edge without duration in `{}`", sub.id)))?;
                    if !(d >= 1.0) {
                        return Err(Error::Config(format!("{relation} edge with duration {d} in `{}`", sub.id)));
                    }
                    total += d.ln();
                }
                logs.push(T::of(total / srcs.len() as f64));
            }
        }
        let rows = dst.len();
        g.relations.push(RelationBlock {
            relation,
            dst,
            aggregate: Arc::new(CsrMatrix::from_sorted_triplets(rows, n, &triplets)),
            mean_log_duration: relation
                .carries_duration()
                .then(|| Array2::from_shape_vec((rows, 1), logs).expect("one per row")),
        });
    }
    Ok(g)
}
