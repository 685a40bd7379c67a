use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{compute_metrics, split, Confusion, SplitSpec, Splits};
use crate::augment::{AugmentConfig, AugmentMode};
use crate::corpus::{DescriptionTable, Resume, Vocabularies};
use crate::error::{Error, Result};
use crate::graph::{build_global_graph, build_mixed_graph, GraphConfig, HeteroGraph, LayerSet};
use crate::model::{
    apply_pretrained_embeddings, predict_prepared, prepare_examples, train, Detector, EpochLog, ModelConfig,
    ModelParams, SeenEntities,
};
use crate::rng::{keyed_seed, substream};

/// Everything a single run needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub split: SplitSpec,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            model: ModelConfig::default(),
            augment: AugmentConfig::default(),
            graph: GraphConfig::default(),
            split: SplitSpec::default(),
        }
    }
}

impl RunSpec {
    /// The same spec with every seed (split, augmentation, model) set to `seed`.
    pub fn seeded(&self, seed: u64) -> RunSpec {
        let mut s = *self;
        s.model.seed = seed;
        s.augment.seed = seed;
        s.split.seed = seed;
        s
    }
}

/// SHA-256 of the compact JSON form of `value`.
pub fn spec_hash<S: Serialize>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The metrics document written for every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub spec_hash: String,
    pub seed: u64,
    pub f1_positive: f64,
    pub f1_micro: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
    pub threshold: f64,
    pub n_test: usize,
    pub tool_version: String,
}

impl RunMetrics {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Data shared by every run over one corpus.
#[derive(Debug, Clone, Copy)]
pub struct RunInputs<'a> {
    pub dataset: &'a [Resume],
    pub vocab: &'a Vocabularies,
    pub desc: &'a DescriptionTable,
    /// `title:NAME` / `company:NAME` vectors for file-initialized embeddings.
    pub pretrained: Option<&'a HashMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: Vec<EpochLog>,
    pub detector: Detector,
    pub test_ids: Vec<String>,
    pub best_epoch: usize,
}

impl RunOutput {
    pub fn log_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes `metrics.json`, `train_log.jsonl` and `model.ckpt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("metrics.json", self.metrics.to_json()?)?;
        write("train_log.jsonl", self.log_jsonl()?)?;
        self.detector.save(&dir.join("model.ckpt"), &self.metrics.spec_hash)
    }
}

/// Fails when any test resume contributed nodes or edges to `graph`.
pub fn assert_no_leakage(graph: &HeteroGraph, test: &[Resume]) -> Result<()> {
    match test.iter().find(|r| graph.contributors().contains(&r.id)) {
        Some(r) => Err(Error::Leakage(r.id.clone())),
        None => Ok(()),
    }
}

/// The graph used for augmentation: trusted (genuine training resumes) in
/// every mode but `mixed`, which also takes the synthetic training resumes.
pub fn run_graph(splits: &Splits, desc: &DescriptionTable, spec: &RunSpec) -> Result<HeteroGraph> {
    let graph = match spec.augment.mode {
        AugmentMode::Mixed => build_mixed_graph(&splits.train, desc, &spec.graph)?,
        _ => build_global_graph(&splits.trusted(), desc, &spec.graph)?,
    };
    assert_no_leakage(&graph, &splits.test)?;
    Ok(graph)
}

/// Split, build the graph, train, evaluate on the test split.
pub fn run_single(inputs: &RunInputs<'_>, spec: &RunSpec, seed: u64, run_id: &str) -> Result<RunOutput> {
    let hash = spec_hash(spec)?;
    let spec = spec.seeded(seed);
    let splits = split(inputs.dataset, &spec.split)?;
    let global = run_graph(&splits, inputs.desc, &spec)?;
    let seen = SeenEntities::from_resumes(&splits.train, inputs.vocab);
    let prep = |set: &[Resume]| prepare_examples(set, inputs.desc, &global, &spec.augment, &spec.graph, &seen);
    let (train_ex, val_ex, test_ex) = (prep(&splits.train)?, prep(&splits.val)?, prep(&splits.test)?);

    let mut model = ModelParams::new(spec.model, inputs.vocab.titles.len(), inputs.vocab.companies.len(), inputs.desc.dim())?;
    if let Some(vectors) = inputs.pretrained {
        let n = apply_pretrained_embeddings(&mut model, inputs.vocab, vectors)?;
        log::info!("{run_id}: {n} embedding rows initialized from file");
    }
    let outcome = train(model, &train_ex, &val_ex)?;
    let probs = test_ex
        .iter()
        .map(|e| predict_prepared(&outcome.model, &e.graph))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<f64> = test_ex.iter().map(|e| e.label).collect();
    let m = compute_metrics(&probs, &labels, 0.5)?;
    Ok(RunOutput {
        metrics: RunMetrics {
            run_id: run_id.to_string(),
            spec_hash: hash,
            seed,
            f1_positive: m.f1_positive,
            f1_micro: m.f1_micro,
            precision: m.precision,
            recall: m.recall,
            confusion: m.confusion,
            threshold: m.threshold,
            n_test: test_ex.len(),
            tool_version: crate::TOOL_VERSION.to_string(),
        },
        log: outcome.log,
        detector: Detector {
            model: outcome.model,
            desc: inputs.desc.clone(),
            global,
            augment: spec.augment,
            graph_cfg: spec.graph,
            vocab: inputs.vocab.clone(),
            seen,
        },
        test_ids: splits.test.iter().map(|r| r.id.clone()).collect(),
        best_epoch: outcome.best_epoch,
    })
}

fn pick(pool: &[Resume], k: usize, seed: u64, key: &str) -> Result<Vec<Resume>> {
    if k > pool.len() {
        return Err(Error::Empty(format!("{key}: need {k} resumes, have {}", pool.len())));
    }
    let mut idx = sample(&mut substream(keyed_seed(seed, key), 0), pool.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// One generator's run: every fake of `fakes` plus an equal number of
/// genuine resumes.
pub fn assemble_balanced(real: &[Resume], fakes: &[Resume], seed: u64) -> Result<Vec<Resume>> {
    let mut out = pick(real, fakes.len(), seed, "real")?;
    out.extend(fakes.iter().cloned());
    Ok(out)
}

/// The combined run: the same share of every generator's pool (`fraction`
/// of the smallest pool, so sources are equally represented) and as many
/// genuine resumes as fakes in total.
pub fn assemble_combined(
    real: &[Resume],
    fakes_by_source: &BTreeMap<String, Vec<Resume>>,
    fraction: f64,
    seed: u64,
) -> Result<Vec<Resume>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("combined fraction {fraction} outside (0, 1]")));
    }
    let smallest = fakes_by_source
        .values()
        .map(Vec::len)
        .min()
        .ok_or_else(|| Error::Empty("generator pools".into()))?;
    let k = ((smallest as f64 * fraction).round() as usize).max(1);
    let mut fakes = Vec::new();
    for (source, pool) in fakes_by_source {
        fakes.extend(pick(pool, k, seed, &format!("fake/{source}"))?);
    }
    assemble_balanced(real, &fakes, seed)
}

/// Mean, sample standard deviation and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std: f64::NAN,
            median: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
    Summary { mean, std, median }
}

/// Paired two-sided sign test; ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "paired samples".into(),
        });
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let n = wins + losses;
    let k = wins.min(losses);
    // P(X ≤ k) for X ~ Binomial(n, 1/2), doubled
    let mut coef = 1.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            coef *= (n - i + 1) as f64 / i as f64;
        }
        tail += coef;
    }
    let p_value = if n == 0 { 1.0 } else { (2.0 * tail / 2f64.powi(n as i32)).min(1.0) };
    Ok(SignTest {
        wins,
        losses,
        ties: a.len() - n,
        p_value,
    })
}

/// A multi-run experiment over one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Share of each generator's pool in the combined run.
    #[serde(default = "default_combined_fraction")]
    pub combined_fraction: f64,
}

pub fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_combined_fraction() -> f64 {
    0.10
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            run: RunSpec::default(),
            seeds: default_seeds(),
            combined_fraction: default_combined_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub run: String,
    pub f1_positive: Summary,
    pub f1_micro: Summary,
    pub per_seed: Vec<RunMetrics>,
}

/// One run per generator source plus the combined run, each repeated over
/// the seed list. Per-run artifacts go to `out/<run>/seed<k>/` when `out` is
/// given.
pub fn run_experiment(
    real: &[Resume],
    fakes_by_source: &BTreeMap<String, Vec<Resume>>,
    vocab: &Vocabularies,
    desc: &DescriptionTable,
    spec: &ExperimentSpec,
    out: Option<&Path>,
) -> Result<Vec<ExperimentRow>> {
    if spec.seeds.is_empty() {
        return Err(Error::Config("empty seed list".into()));
    }
    let mut runs: Vec<(String, Box<dyn Fn(u64) -> Result<Vec<Resume>> + '_>)> = Vec::new();
    for (source, pool) in fakes_by_source {
        runs.push((source.clone(), Box::new(move |seed| assemble_balanced(real, pool, seed))));
    }
    if fakes_by_source.len() > 1 {
        runs.push((
            "combined".into(),
            Box::new(|seed| assemble_combined(real, fakes_by_source, spec.combined_fraction, seed)),
        ));
    }
    let mut rows = Vec::new();
    for (name, assemble) in runs {
        let mut per_seed = Vec::new();
        for &seed in &spec.seeds {
            let dataset = assemble(seed)?;
            let inputs = RunInputs {
                dataset: &dataset,
                vocab,
                desc,
                pretrained: None,
            };
            let output = run_single(&inputs, &spec.run, seed, &format!("{name}/seed{seed}"))?;
            if let Some(dir) = out {
                output.write(&dir.join(&name).join(format!("seed{seed}")))?;
            }
            per_seed.push(output.metrics);
        }
        rows.push(ExperimentRow {
            f1_positive: summarize(&per_seed.iter().map(|m| m.f1_positive).collect::<Vec<_>>()),
            f1_micro: summarize(&per_seed.iter().map(|m| m.f1_micro).collect::<Vec<_>>()),
            run: name,
            per_seed,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationFamily {
    EmbeddingSize,
    Hops,
    Layers,
    Augmentation,
}

impl AblationFamily {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "embedding_size" => AblationFamily::EmbeddingSize,
            "hops" => AblationFamily::Hops,
            "layers" => AblationFamily::Layers,
            "augmentation" => AblationFamily::Augmentation,
            other => return Err(Error::Config(format!("unknown ablation family `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationFamily::EmbeddingSize => "embedding_size",
            AblationFamily::Hops => "hops",
            AblationFamily::Layers => "layers",
            AblationFamily::Augmentation => "augmentation",
        }
    }
}

/// One configuration of an ablation family.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub setting: String,
    pub spec: RunSpec,
    /// Initialize embeddings from the pretrained vectors.
    pub pretrained: bool,
    /// The cell only approximates the variant it stands for.
    pub approximate: bool,
}

/// The cells of `family` derived from `base`, in table order.
pub fn ablation_cells(family: AblationFamily, base: &RunSpec) -> Vec<AblationCell> {
    let cell = |setting: String, spec: RunSpec| AblationCell {
        setting,
        spec,
        pretrained: false,
        approximate: false,
    };
    match family {
        AblationFamily::EmbeddingSize => [32, 64, 128, 256]
            .into_iter()
            .map(|d| {
                let mut s = *base;
                s.model.d = d;
                cell(d.to_string(), s)
            })
            .collect(),
        AblationFamily::Hops => (0..=3)
            .map(|h| {
                let mut s = *base;
                s.augment.hop_threshold = h;
                // zero hops runs the unaugmented pipeline
                if h == 0 {
                    s.augment.mode = AugmentMode::None;
                }
                cell(h.to_string(), s)
            })
            .collect(),
        AblationFamily::Layers => LayerSet::ablation_rows()
            .into_iter()
            .map(|(name, layers)| {
                let mut s = *base;
                s.graph.layers = layers;
                cell(name.to_string(), s)
            })
            .collect(),
        AblationFamily::Augmentation => {
            let mut cells: Vec<AblationCell> = [
                AugmentMode::Structural,
                AugmentMode::None,
                AugmentMode::Random,
                AugmentMode::Mixed,
            ]
            .into_iter()
            .map(|mode| {
                let mut s = *base;
                s.augment.mode = mode;
                let name = serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(str::to_string));
                cell(name.unwrap_or_default(), s)
            })
            .collect();
            let mut s = *base;
            s.augment.mode = AugmentMode::None;
            cells.push(AblationCell {
                setting: "global_emb".into(),
                spec: s,
                pretrained: true,
                approximate: true,
            });
            cells
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub family: AblationFamily,
    pub setting: String,
    pub approximate: bool,
    pub seeds: Vec<u64>,
    pub f1_positive: Vec<f64>,
    pub f1_micro: Vec<f64>,
    pub summary: Summary,
}

/// Runs every cell of `family` over `seeds`. The pretrained cell is skipped
/// (with a warning) when no vectors are supplied.
pub fn run_ablation(
    family: AblationFamily,
    inputs: &RunInputs<'_>,
    base: &RunSpec,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("empty seed list".into()));
    }
    let mut rows = Vec::new();
    for cell in ablation_cells(family, base) {
        if cell.pretrained && inputs.pretrained.is_none() {
            log::warn!("{}: no pretrained embeddings supplied, cell skipped", cell.setting);
            continue;
        }
        let cell_inputs = RunInputs {
            pretrained: if cell.pretrained { inputs.pretrained } else { None },
            ..*inputs
        };
        let mut f1_positive = Vec::new();
        let mut f1_micro = Vec::new();
        for &seed in seeds {
            let run_id = format!("{}/{}/seed{seed}", family.name(), cell.setting);
            let out = run_single(&cell_inputs, &cell.spec, seed, &run_id)?;
            log::info!("{run_id}: f1_positive {:.4}", out.metrics.f1_positive);
            f1_positive.push(out.metrics.f1_positive);
            f1_micro.push(out.metrics.f1_micro);
        }
        rows.push(AblationRow {
            family,
            summary: summarize(&f1_positive),
            setting: cell.setting,
            approximate: cell.approximate,
            seeds: seeds.to_vec(),
            f1_positive,
            f1_micro,
        });
    }
    Ok(rows)
}

/// CSV with one line per cell; per-seed values are `;`-separated.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("family,setting,approximate,mean_f1_positive,std_f1_positive,median_f1_positive,mean_f1_micro,f1_positive_per_seed\n");
    for r in rows {
        let micro = summarize(&r.f1_micro).mean;
        let per_seed: Vec<String> = r.f1_positive.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            r.family.name(),
            r.setting,
            r.approximate,
            r.summary.mean,
            r.summary.std,
            r.summary.median,
            micro,
            per_seed.join(";")
        );
    }
    out
}
