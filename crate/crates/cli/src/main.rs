mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use careergraph::corpus::{load_resumes, serialize_resumes, write_resumes, Vocabularies};
use careergraph::eval::{
    ablation_csv, compute_metrics, run_ablation, run_experiment, run_single, spec_hash, AblationFamily, ExperimentRow,
    RunInputs, RunMetrics,
};
use careergraph::generators::{
    corpus_stats, gen_markov_real, generate_synthetic, GeneratorConfig, MarkovSchema, Method,
};
use careergraph::graph::build_global_graph;
use careergraph::model::{Detector, DetectorDocument};
use careergraph::{Error, ErrorClass, Result, TOOL_VERSION};
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use config::{descriptions, load_corpora, load_pretrained, parse_layers, ConfigArgs, RunConfig};

#[derive(Parser)]
#[command(name = "careergraph", version, about = "Detect machine-generated career trajectories")]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a resume corpus produced by one generator.
    Generate(GenerateArgs),
    /// Build the trusted global graph from genuine resumes.
    BuildGraph(BuildGraphArgs),
    /// Train one detector on the genuine and synthetic corpora.
    Train(ConfigArgs),
    /// Score a resume file with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Run one ablation family over a seed list.
    Ablate(AblateArgs),
    /// Structural statistics of resume files.
    Stats(StatsArgs),
    /// One run per generator source plus the combined run, over a seed list.
    Experiment(ConfigArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// random, popular, swapping, replacing or markov_real.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Genuine corpus the rule-based generators perturb.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Career schema for markov_real (built-in schema when absent).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// JSON config file; its `generator` section supplies defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Resume file to write (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    desc_map: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    desc_dim: Option<usize>,
    /// Cosine threshold of description edges (default 0.9).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    layers: Option<String>,
    /// Include entity names in the node records.
    #[arg(long)]
    names: bool,
    /// Graph file to write (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled resume file.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Metrics file to write (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// embedding_size, hops, layers or augmentation.
    #[arg(long)]
    family: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct StatsArgs {
    /// Resume files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

#[derive(Serialize)]
struct GenerateMeta<'a> {
    config_hash: String,
    seed: u64,
    tool_version: &'a str,
    generator: &'a GeneratorConfig,
    count: usize,
    unchanged: usize,
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let method = match (&args.method, &file.generator) {
        (Some(m), _) => Method::parse(m)?,
        (None, Some(g)) => g.method,
        (None, None) => return Err(Error::Config("--method is required".into())),
    };
    let mut cfg = file.generator.clone().unwrap_or_else(|| GeneratorConfig::new(method, 0, 0));
    cfg.method = method;
    if let Some(n) = args.count {
        cfg.count = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    let mut vocab = Vocabularies::default();
    let (resumes, unchanged) = if method == Method::MarkovReal {
        let schema = match args.schema.as_ref().or(file.schema.as_ref()) {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?
            }
            None => MarkovSchema::oracle(),
        };
        (gen_markov_real(&cfg, &schema, &mut vocab)?, 0)
    } else {
        let corpus = args
            .corpus
            .as_ref()
            .or(file.real.as_ref())
            .ok_or_else(|| Error::Config(format!("--corpus is required for `{}`", method.tag())))?;
        let real = load_resumes(corpus, None, &mut vocab)?;
        let g = generate_synthetic(&real, &cfg)?;
        (g.resumes, g.unchanged)
    };
    log::info!("{}: {} resumes ({} unchanged)", method.tag(), resumes.len(), unchanged);
    match &args.out {
        Some(p) => {
            write_resumes(p, &resumes, &vocab)?;
            let meta = GenerateMeta {
                config_hash: spec_hash(&cfg)?,
                seed: cfg.seed,
                tool_version: TOOL_VERSION,
                generator: &cfg,
                count: resumes.len(),
                unchanged,
            };
            let mut meta_path = p.clone().into_os_string();
            meta_path.push(".meta.json");
            write_text(Some(Path::new(&meta_path)), &to_json(&meta)?)
        }
        None => {
            let mut buf = Vec::new();
            serialize_resumes(&mut buf, &resumes, &vocab)?;
            write_text(None, &String::from_utf8_lossy(&buf))
        }
    }
}

fn cmd_build_graph(args: &BuildGraphArgs) -> Result<()> {
    let mut c = ConfigArgs {
        config: args.config.clone(),
        real: args.real.clone(),
        desc_map: args.desc_map.clone(),
        embeddings: args.embeddings.clone(),
        desc_dim: args.desc_dim,
        tau: args.tau,
        ..ConfigArgs::default()
    }
    .resolve()?;
    if let Some(l) = &args.layers {
        c.run.graph.layers = parse_layers(l)?;
    }
    let real_path = c
        .real
        .as_ref()
        .ok_or_else(|| Error::Config("no genuine corpus: pass --real or set `real`".into()))?;
    let mut vocab = Vocabularies::default();
    let real = load_resumes(real_path, None, &mut vocab)?;
    let desc = descriptions(&c, &vocab)?;
    let graph = build_global_graph(&real, &desc, &c.run.graph)?;
    log::info!("graph: {} nodes, {} edges", graph.node_count(), graph.edge_count());
    let mut doc = graph.to_document(args.names.then_some((&vocab, &desc)));
    doc.meta.config_hash = Some(spec_hash(&c.run.graph)?);
    doc.meta.tool_version = Some(TOOL_VERSION.to_string());
    write_text(args.out.as_deref(), &to_json(&doc)?)
}

fn output_dir(c: &RunConfig) -> Result<&Path> {
    c.out
        .as_deref()
        .ok_or_else(|| Error::Config("an output directory is required: pass --out or set `out`".into()))
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let c = args.resolve()?;
    let out = output_dir(&c)?;
    let corpora = load_corpora(&c)?;
    let pretrained = load_pretrained(&c)?;
    let data = corpora.dataset();
    let inputs = RunInputs {
        dataset: &data,
        vocab: &corpora.vocab,
        desc: &corpora.desc,
        pretrained: pretrained.as_ref(),
    };
    let output = run_single(&inputs, &c.run, c.seed, &format!("train/seed{}", c.seed))?;
    output.write(out)?;
    write_text(Some(&out.join("config.json")), &to_json(&c)?)?;
    log::info!("best epoch {}, test f1_positive {:.4}", output.best_epoch, output.metrics.f1_positive);
    write_text(None, &output.metrics.to_json()?)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.checkpoint).map_err(|e| io_error(&args.checkpoint, e))?;
    let doc: DetectorDocument = serde_json::from_str(&text)?;
    let detector = Detector::from_document(&doc)?;
    let mut vocab = detector.vocab.clone();
    let test = load_resumes(&args.test, None, &mut vocab)?;
    let probs = test.iter().map(|r| detector.predict(r)).collect::<Result<Vec<f64>>>()?;
    let labels: Vec<f64> = test.iter().map(|r| r.label.as_f64()).collect();
    let m = compute_metrics(&probs, &labels, args.threshold)?;
    let metrics = RunMetrics {
        run_id: format!("evaluate/{}", args.test.display()),
        spec_hash: doc.config_hash.clone(),
        seed: doc.seed,
        f1_positive: m.f1_positive,
        f1_micro: m.f1_micro,
        precision: m.precision,
        recall: m.recall,
        confusion: m.confusion,
        threshold: m.threshold,
        n_test: test.len(),
        tool_version: TOOL_VERSION.to_string(),
    };
    write_text(args.out.as_deref(), &metrics.to_json()?)
}

#[derive(Serialize)]
struct AblationDocument<'a> {
    config_hash: String,
    seeds: &'a [u64],
    tool_version: &'a str,
    rows: &'a [careergraph::eval::AblationRow],
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let family = AblationFamily::parse(&args.family)?;
    let c = args.config.resolve()?;
    let corpora = load_corpora(&c)?;
    let pretrained = load_pretrained(&c)?;
    let data = corpora.dataset();
    let inputs = RunInputs {
        dataset: &data,
        vocab: &corpora.vocab,
        desc: &corpora.desc,
        pretrained: pretrained.as_ref(),
    };
    let rows = run_ablation(family, &inputs, &c.run, &c.seeds)?;
    let csv = ablation_csv(&rows);
    match &c.out {
        Some(dir) => {
            create_dir(dir)?;
            let doc = AblationDocument {
                config_hash: spec_hash(&c.run)?,
                seeds: &c.seeds,
                tool_version: TOOL_VERSION,
                rows: &rows,
            };
            write_text(Some(&dir.join(format!("ablation_{}.csv", family.name()))), &csv)?;
            write_text(Some(&dir.join(format!("ablation_{}.json", family.name()))), &to_json(&doc)?)?;
            write_text(None, &csv)
        }
        None => write_text(None, &csv),
    }
}

#[derive(Serialize)]
struct StatsDocument {
    tool_version: &'static str,
    corpora: BTreeMap<String, careergraph::generators::CorpusStats>,
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let mut corpora = BTreeMap::new();
    for path in &args.files {
        let mut vocab = Vocabularies::default();
        let resumes = load_resumes(path, None, &mut vocab)?;
        corpora.insert(path.display().to_string(), corpus_stats(&resumes)?);
    }
    write_text(
        None,
        &to_json(&StatsDocument {
            tool_version: TOOL_VERSION,
            corpora,
        })?,
    )
}

#[derive(Serialize)]
struct ExperimentDocument<'a> {
    config_hash: String,
    seeds: &'a [u64],
    tool_version: &'a str,
    rows: &'a [ExperimentRow],
}

fn experiment_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from("run,mean_f1_positive,std_f1_positive,median_f1_positive,mean_f1_micro,std_f1_micro\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.run, r.f1_positive.mean, r.f1_positive.std, r.f1_positive.median, r.f1_micro.mean, r.f1_micro.std
        );
    }
    out
}

fn cmd_experiment(args: &ConfigArgs) -> Result<()> {
    let c = args.resolve()?;
    let out = output_dir(&c)?;
    let corpora = load_corpora(&c)?;
    create_dir(out)?;
    let rows = run_experiment(
        &corpora.real,
        &corpora.fakes,
        &corpora.vocab,
        &corpora.desc,
        &c.experiment(),
        Some(out),
    )?;
    let doc = ExperimentDocument {
        config_hash: spec_hash(&c.run)?,
        seeds: &c.seeds,
        tool_version: TOOL_VERSION,
        rows: &rows,
    };
    write_text(Some(&out.join("config.json")), &to_json(&c)?)?;
    write_text(Some(&out.join("summary.json")), &to_json(&doc)?)?;
    let csv = experiment_csv(&rows);
    write_text(Some(&out.join("summary.csv")), &csv)?;
    write_text(None, &csv)
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::BuildGraph(a) => cmd_build_graph(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
