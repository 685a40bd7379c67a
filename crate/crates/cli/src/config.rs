use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use careergraph::augment::AugmentMode;
use careergraph::corpus::{
    attach_descriptions, load_resumes, read_embedding_file, DescriptionTable, Label, Resume, Vocabularies,
};
use careergraph::eval::{default_seeds, ExperimentSpec, RunSpec};
use careergraph::generators::{ingest_external, GeneratorConfig};
use careergraph::graph::LayerSet;
use careergraph::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// The JSON config document shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Genuine resumes (label 0).
    #[serde(default)]
    pub real: Option<PathBuf>,
    /// Synthetic corpora keyed by generator source.
    #[serde(default)]
    pub fakes: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub desc_map: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_desc_dim")]
    pub desc_dim: usize,
    /// `title:NAME` / `company:NAME` vectors for the global_emb ablation cell.
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_combined_fraction")]
    pub combined_fraction: f64,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_desc_dim() -> usize {
    32
}

fn default_seed() -> u64 {
    1
}

fn default_combined_fraction() -> f64 {
    ExperimentSpec::default().combined_fraction
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn experiment(&self) -> ExperimentSpec {
        ExperimentSpec {
            run: self.run,
            seeds: self.seeds.clone(),
            combined_fraction: self.combined_fraction,
        }
    }
}

fn parse_fake(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((source, path)) if !source.is_empty() && !path.is_empty() => Ok((source.to_string(), path.into())),
        _ => Err(format!("expected SOURCE=PATH, got `{s}`")),
    }
}

/// Inputs and overrides accepted by every command that trains.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Genuine resume file.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Synthetic resume file as SOURCE=PATH (repeatable).
    #[arg(long = "fake", value_parser = parse_fake)]
    pub fakes: Vec<(String, PathBuf)>,
    /// Title to description mapping file.
    #[arg(long)]
    pub desc_map: Option<PathBuf>,
    /// Description embedding file.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Dimension of fallback description vectors.
    #[arg(long)]
    pub desc_dim: Option<usize>,
    /// Entity embedding file for the global_emb cell.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seed list for repeated runs.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Embedding size d.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Augmentation mode: structural, none, random or mixed.
    #[arg(long)]
    pub mode: Option<String>,
    /// Hop threshold of the augmentation.
    #[arg(long)]
    pub hops: Option<usize>,
    /// Cap on nodes added per subgraph.
    #[arg(long)]
    pub max_added: Option<usize>,
    /// Cosine threshold of description edges.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Layer set: JT, C, JD, JT+C, JT+JD, JT+C+JD or All.
    #[arg(long)]
    pub layers: Option<String>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_layers(name: &str) -> Result<LayerSet> {
    LayerSet::ablation_rows()
        .into_iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, l)| l)
        .ok_or_else(|| Error::Config(format!("unknown layer set `{name}`")))
}

pub fn parse_mode(name: &str) -> Result<AugmentMode> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| Error::Config(format!("unknown augmentation mode `{name}`")))
}

impl ConfigArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.real.clone().map(Some) => c.real);
        for (source, path) in &self.fakes {
            c.fakes.insert(source.clone(), path.clone());
        }
        set!(self.desc_map.clone().map(Some) => c.desc_map);
        set!(self.embeddings.clone().map(Some) => c.embeddings);
        set!(self.pretrained.clone().map(Some) => c.pretrained);
        set!(self.out.clone().map(Some) => c.out);
        set!(self.desc_dim => c.desc_dim);
        set!(self.seed => c.seed);
        set!(self.seeds => c.seeds);
        set!(self.dim => c.run.model.d);
        set!(self.epochs => c.run.model.epochs);
        set!(self.lr => c.run.model.lr);
        set!(self.batch_size => c.run.model.batch_size);
        set!(self.dropout => c.run.model.dropout);
        set!(self.hops => c.run.augment.hop_threshold);
        set!(self.max_added => c.run.augment.max_added_nodes);
        set!(self.tau => c.run.graph.tau);
        if let Some(m) = &self.mode {
            c.run.augment.mode = parse_mode(m)?;
        }
        if let Some(l) = &self.layers {
            c.run.graph.layers = parse_layers(l)?;
        }
        c.run.model.validate()?;
        Ok(c)
    }
}

/// Resumes and description vectors named by a config.
pub struct Corpora {
    pub vocab: Vocabularies,
    pub real: Vec<Resume>,
    pub fakes: BTreeMap<String, Vec<Resume>>,
    pub desc: DescriptionTable,
}

impl Corpora {
    pub fn dataset(&self) -> Vec<Resume> {
        self.real.iter().chain(self.fakes.values().flatten()).cloned().collect()
    }
}

/// Loads the genuine corpus, then every synthetic corpus, into one
/// vocabulary, and builds the description table over all titles.
pub fn load_corpora(c: &RunConfig) -> Result<Corpora> {
    let real_path = c
        .real
        .as_ref()
        .ok_or_else(|| Error::Config("no genuine corpus: pass --real or set `real`".into()))?;
    let mut vocab = Vocabularies::default();
    let real = load_resumes(real_path, None, &mut vocab)?;
    if let Some(r) = real.iter().find(|r| r.label == Label::Synthetic) {
        return Err(Error::InvalidResume {
            id: r.id.clone(),
            reason: format!("labeled synthetic in the genuine corpus {}", real_path.display()),
        });
    }
    if c.fakes.is_empty() {
        return Err(Error::Config("no synthetic corpus: pass --fake SOURCE=PATH or set `fakes`".into()));
    }
    let mut fakes = BTreeMap::new();
    for (source, path) in &c.fakes {
        fakes.insert(source.clone(), ingest_external(path, source, &mut vocab)?);
    }
    let desc = descriptions(c, &vocab)?;
    Ok(Corpora {
        vocab,
        real,
        fakes,
        desc,
    })
}

/// Description table over every title of `vocab`: from the mapping file
/// when given, otherwise one fallback description per title.
pub fn descriptions(c: &RunConfig, vocab: &Vocabularies) -> Result<DescriptionTable> {
    match (&c.desc_map, &c.embeddings) {
        (Some(map), emb) => attach_descriptions(&vocab.titles, map, emb.as_deref(), c.desc_dim),
        (None, Some(_)) => Err(Error::Config("--embeddings needs --desc-map".into())),
        (None, None) => DescriptionTable::from_title_names(&vocab.titles, c.desc_dim),
    }
}

pub fn load_pretrained(c: &RunConfig) -> Result<Option<std::collections::HashMap<String, Vec<f64>>>> {
    c.pretrained.as_deref().map(read_embedding_file).transpose()
}
