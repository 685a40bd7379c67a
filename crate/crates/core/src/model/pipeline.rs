use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{predict_prepared, prepare, ModelConfig, ModelParams, PreparedGraph};
use crate::augment::{augment_subgraph, AugmentConfig};
use crate::autodiff::{ParamCheckpoint, CHECKPOINT_VERSION};
use crate::corpus::{DescriptionTable, Resume, Vocabularies, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::{build_user_subgraph, GraphConfig, GraphDocument, HeteroGraph};
use crate::scalar::Scalar;

/// Titles and companies that occur in the training split. Anything else is
/// embedded with the UNK row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeenEntities {
    titles: Vec<bool>,
    companies: Vec<bool>,
}

impl SeenEntities {
    pub fn from_resumes(resumes: &[Resume], vocab: &Vocabularies) -> Self {
        let mut titles = vec![false; vocab.titles.len()];
        let mut companies = vec![false; vocab.companies.len()];
        for e in resumes.iter().flat_map(|r| &r.entries) {
            titles[e.title_id.0 as usize] = true;
            companies[e.company_id.0 as usize] = true;
        }
        titles[Vocabulary::UNK as usize] = false;
        companies[Vocabulary::UNK as usize] = false;
        SeenEntities { titles, companies }
    }

    pub fn title_row(&self, key: u32) -> usize {
        if self.titles.get(key as usize).copied().unwrap_or(false) {
            key as usize
        } else {
            Vocabulary::UNK as usize
        }
    }

    pub fn company_row(&self, key: u32) -> usize {
        if self.companies.get(key as usize).copied().unwrap_or(false) {
            key as usize
        } else {
            Vocabulary::UNK as usize
        }
    }

    pub fn title_count(&self) -> usize {
        self.titles.len()
    }

    pub fn company_count(&self) -> usize {
        self.companies.len()
    }
}

/// One labeled, compiled subgraph.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub id: String,
    pub label: f64,
    pub graph: PreparedGraph<T>,
}

/// Builds, augments and compiles the subgraph of every resume.
pub fn prepare_examples<T: Scalar>(
    resumes: &[Resume],
    desc: &DescriptionTable,
    global: &HeteroGraph,
    augment: &AugmentConfig,
    graph_cfg: &GraphConfig,
    seen: &SeenEntities,
) -> Result<Vec<Example<T>>> {
    resumes
        .iter()
        .map(|r| {
            let sub = build_user_subgraph(r, desc, &graph_cfg.layers)?;
            let sub = augment_subgraph(&sub, global, augment)?;
            Ok(Example {
                id: r.id.clone(),
                label: r.label.as_f64(),
                graph: prepare(&sub, desc, seen)?,
            })
        })
        .collect()
}

/// Copies vectors keyed `title:NAME` / `company:NAME` into the embedding
/// tables. Returns how many rows were set.
pub fn apply_pretrained_embeddings<T: Scalar>(
    model: &mut ModelParams<T>,
    vocab: &Vocabularies,
    vectors: &HashMap<String, Vec<f64>>,
) -> Result<usize> {
    let d = model.cfg.d;
    let mut set = 0;
    for (table, voc, prefix) in [
        (model.title_table(), &vocab.titles, "title:"),
        (model.company_table(), &vocab.companies, "company:"),
    ] {
        for (id, name) in voc.iter() {
            let Some(v) = vectors.get(&format!("{prefix}{name}")) else { continue };
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                    context: format!("pretrained vector for {prefix}{name}"),
                });
            }
            let values = &mut model.params.get_mut(table).value;
            if (id as usize) < values.nrows() {
                for (k, &x) in v.iter().enumerate() {
                    values[[id as usize, k]] = T::of(x);
                }
                set += 1;
            }
        }
    }
    Ok(set)
}

/// Everything inference needs: trained parameters, the trusted graph used
/// for augmentation, vocabularies and description vectors.
#[derive(Debug, Clone)]
pub struct Detector {
    pub model: ModelParams<f64>,
    pub desc: DescriptionTable,
    pub global: HeteroGraph,
    pub augment: AugmentConfig,
    pub graph_cfg: GraphConfig,
    pub vocab: Vocabularies,
    pub seen: SeenEntities,
}

/// On-disk form of a [`Detector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorDocument {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub model: ModelConfig,
    pub augment: AugmentConfig,
    pub graph_config: GraphConfig,
    pub desc_dim: usize,
    pub params: ParamCheckpoint,
    pub vocab: Vocabularies,
    pub descriptions: DescriptionTable,
    pub seen: SeenEntities,
    pub graph: GraphDocument,
}

impl Detector {
    pub fn predict(&self, resume: &Resume) -> Result<f64> {
        let sub = build_user_subgraph(resume, &self.desc, &self.graph_cfg.layers)?;
        let sub = augment_subgraph(&sub, &self.global, &self.augment)?;
        predict_prepared(&self.model, &prepare(&sub, &self.desc, &self.seen)?)
    }

    pub fn to_document(&self, config_hash: &str) -> DetectorDocument {
        DetectorDocument {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            seed: self.model.cfg.seed,
            tool_version: crate::TOOL_VERSION.to_string(),
            model: self.model.cfg,
            augment: self.augment,
            graph_config: self.graph_cfg,
            desc_dim: self.model.desc_dim(),
            params: self.model.params.to_checkpoint(),
            vocab: self.vocab.clone(),
            descriptions: self.desc.clone(),
            seen: self.seen.clone(),
            graph: self.global.to_document(None),
        }
    }

    pub fn from_document(doc: &DetectorDocument) -> Result<Self> {
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", doc.version)));
        }
        let mut model = ModelParams::new(doc.model, doc.seen.title_count(), doc.seen.company_count(), doc.desc_dim)?;
        model.load(&doc.params)?;
        Ok(Detector {
            model,
            desc: doc.descriptions.clone(),
            global: HeteroGraph::from_document(&doc.graph)?,
            augment: doc.augment,
            graph_cfg: doc.graph_config,
            vocab: doc.vocab.clone(),
            seen: doc.seen.clone(),
        })
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let text = serde_json::to_string(&self.to_document(config_hash))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&serde_json::from_str(&text)?)
    }
}
