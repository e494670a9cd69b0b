use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use rarepool_core::annotation::{AggregationConfig, Annotation};
use rarepool_core::corpus::{ingest_reader, DocumentCollection, HateLexicon, IngestOptions};
use rarepool_core::features::{load_embeddings, FeatureMode, FeatureVector};
use rarepool_core::io::{read_jsonl, write_atomically, write_json_atomically, write_jsonl};
use rarepool_core::metrics::CoverageDefinition;
use rarepool_core::models::{load_external_scores, ClassifierRegistry, TrainingConfig};
use rarepool_core::pooling::{build_pool, stratify_report, train_pool_members, PoolConfig, PoolMember};
use rarepool_core::simulation::{simulate, SimulationSpec, SyntheticExperiment};
use rarepool_service::{CollectionEntry, ServiceState};
use serde::{Deserialize, Serialize};

use crate::config::{is_false, named_path, required, resolve};
use crate::manifest::{manifest_beside, ManifestBuilder};
use crate::report::{dataset_report, run_aggregation, ReportInputs};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and deduplicate raw posts into a collection file.
    Ingest(IngestArgs),
    /// Select documents for judging from classifier scores above a threshold.
    Pool(PoolArgs),
    /// Replay active learning against known labels and write cost curves.
    Simulate(SimulateArgs),
    /// Majority-vote annotations and split off inconsistent documents.
    Aggregate(AggregateArgs),
    /// Agreement, prevalence, relative coverage and per-class metrics.
    Metrics(MetricsArgs),
    /// Run the annotation session service.
    Serve(ServeArgs),
}

impl Command {
    pub fn run(self) -> Result<()> {
        match self {
            Command::Ingest(a) => ingest(a),
            Command::Pool(a) => pool(a),
            Command::Simulate(a) => simulate_cmd(a),
            Command::Aggregate(a) => aggregate(a),
            Command::Metrics(a) => metrics(a),
            Command::Serve(a) => serve(a),
        }
    }
}

fn open_collection(path: &Path) -> Result<DocumentCollection> {
    DocumentCollection::load_jsonl(path).with_context(|| format!("loading collection {}", path.display()))
}

fn open_annotations(path: &Path) -> Result<Vec<Annotation>> {
    read_jsonl(path).with_context(|| format!("loading annotations {}", path.display()))
}

fn open_lexicon(path: &Path) -> Result<HateLexicon> {
    HateLexicon::load(path).with_context(|| format!("loading lexicon {}", path.display()))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestArgs {
    /// JSON config whose keys mirror the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Raw posts, one JSON object per line.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_note: Option<String>,
}

fn ingest(flags: IngestArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let mut manifest = ManifestBuilder::start("ingest", &args)?;
    let reader = BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?);
    let options = IngestOptions {
        source_note: args.source_note.clone().unwrap_or_else(|| input.display().to_string()),
        ..IngestOptions::default()
    };
    let (collection, report) = ingest_reader(reader, &options);
    write_atomically(&output, |w| collection.write_jsonl(w))?;
    manifest.input(&input).output(&output).summary(&report)?;
    manifest.write(&manifest_beside(&output))?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Collection to select from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collection: Option<PathBuf>,
    /// External score file (doc_id, score); repeat for several models.
    #[arg(long = "scores")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<PathBuf>,
    /// Labeled prior dataset as NAME=PATH; every classifier is trained on it.
    #[arg(long = "train")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub train: Vec<String>,
    /// Classifier families trained on each prior dataset.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classifiers: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Lexicon for the hits-by-lexicon breakdown.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn pool(flags: PoolArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let collection_path = required(&args.collection, "collection")?;
    let out_dir = required(&args.out_dir, "out-dir")?;
    let config = PoolConfig::new(
        required(&args.threshold, "threshold")?,
        required(&args.budget, "budget")?,
        args.seed.unwrap_or(0),
    );
    config.validate()?;
    ensure!(
        !args.scores.is_empty() || !args.train.is_empty(),
        "pool needs at least one --scores file or --train dataset"
    );
    let mut manifest = ManifestBuilder::start("pool", &args)?;
    manifest.seeds([config.rng_seed]).input(&collection_path);
    let collection = open_collection(&collection_path)?;

    let mut members = Vec::new();
    for path in &args.scores {
        let scores = load_external_scores(path).with_context(|| format!("loading scores {}", path.display()))?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
        members.push(PoolMember::new(
            name,
            Box::new(scores),
            Box::new(rarepool_core::features::NoFeatures),
        ));
        manifest.input(path);
    }
    if !args.train.is_empty() {
        let mut datasets = Vec::new();
        for spec in &args.train {
            let (name, path) = named_path(spec)?;
            datasets.push((name, open_collection(&path)?));
            manifest.input(&path);
        }
        let families: Vec<&str> = if args.classifiers.is_empty() {
            vec!["logistic_regression"]
        } else {
            args.classifiers.iter().map(String::as_str).collect()
        };
        members.extend(train_pool_members(
            &datasets,
            &families,
            &ClassifierRegistry::default(),
            &Default::default(),
            &TrainingConfig::default(),
        )?);
    }

    let result = build_pool(&collection, &members, &config)?;
    let lexicon = args.lexicon.as_deref().map(open_lexicon).transpose()?;
    if let Some(p) = &args.lexicon {
        manifest.input(p);
    }
    let report = lexicon.as_ref().map(|lex| stratify_report(&result, &collection, lex));

    #[derive(Serialize)]
    struct Row<'a> {
        doc_id: &'a str,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a PoolConfig,
        candidate_count: usize,
        selected: usize,
        per_model_hits: Vec<(String, usize)>,
        diagnostic: &'a Option<String>,
        report: Option<rarepool_core::pooling::PoolReport>,
    }
    let selection = out_dir.join("selection.jsonl");
    let summary_path = out_dir.join("summary.json");
    write_atomically(&selection, |w| {
        write_jsonl(w, result.selected.iter().map(|id| Row { doc_id: id }))
    })?;
    let summary = Summary {
        config: &config,
        candidate_count: result.candidate_count,
        selected: result.selected.len(),
        per_model_hits: result.per_model_hit_counts(),
        diagnostic: &result.diagnostic,
        report,
    };
    write_json_atomically(&summary_path, &summary)?;
    if let Some(d) = &result.diagnostic {
        tracing::warn!("{d}");
    }
    manifest.output(&selection).output(&summary_path);
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Synthetic experiment file: corpus parameters plus simulation spec.
    #[arg(long, conflicts_with_all = ["collection"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
    /// Labeled collection to simulate on.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collection: Option<PathBuf>,
    /// Simulation spec file (required with --collection).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub feature_modes: Vec<FeatureMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_noise: Option<f64>,
    /// Embedding file for the embedding feature mode.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn simulate_cmd(flags: SimulateArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let out_dir = required(&args.out_dir, "out-dir")?;
    let mut manifest = ManifestBuilder::start("simulate", &args)?;
    let mut extra_outputs = Vec::new();
    let (collection, mut spec) = match (&args.synthetic, &args.collection) {
        (Some(path), None) => {
            let exp = SyntheticExperiment::load(path).with_context(|| format!("loading {}", path.display()))?;
            manifest.input(path).seeds([exp.corpus.rng_seed]);
            let collection = exp.corpus.generate()?;
            let corpus_path = out_dir.join("corpus.jsonl");
            write_atomically(&corpus_path, |w| collection.write_jsonl(w))?;
            extra_outputs.push(corpus_path);
            (collection, exp.simulation)
        }
        (None, Some(path)) => {
            let spec_path = required(&args.spec, "spec")?;
            let spec: SimulationSpec = serde_json::from_str(
                &std::fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?,
            )
            .with_context(|| format!("parsing {}", spec_path.display()))?;
            manifest.input(path).input(&spec_path);
            (open_collection(path)?, spec)
        }
        _ => bail!("simulate needs exactly one of --synthetic or --collection"),
    };
    if !args.strategies.is_empty() {
        spec.strategies = args.strategies.clone();
    }
    if !args.feature_modes.is_empty() {
        spec.feature_modes = args.feature_modes.clone();
    }
    if let Some(r) = args.repetitions {
        spec.repetitions = r;
    }
    if let Some(s) = args.base_seed {
        spec.base_seed = s;
    }
    if let Some(u) = args.batch_size {
        spec.al.batch_size = u;
    }
    if let Some(n) = args.label_noise {
        spec.label_noise = n;
    }
    spec.validate()?;
    let embeddings = match &args.embeddings {
        Some(path) => {
            let dim = args.embedding_dim.context("--embeddings needs --embedding-dim")?;
            manifest.input(path);
            Some(load_embeddings(path, dim)?)
        }
        None => None,
    };
    manifest.seeds((0..spec.repetitions as u64).map(|r| spec.base_seed + r));

    let result = simulate(&collection, &spec, embeddings.as_ref())?;
    let curves = out_dir.join("curves.csv");
    let auc = out_dir.join("auc.json");
    write_atomically(&curves, |w| Ok(w.write_all(result.curves_csv().as_bytes())?))?;
    #[derive(Serialize)]
    struct AucFile<'a> {
        spec: &'a SimulationSpec,
        summary: &'a [rarepool_core::simulation::AucSummary],
        runs: &'a [rarepool_core::simulation::RunAuc],
    }
    write_json_atomically(
        &auc,
        &AucFile {
            spec: &spec,
            summary: &result.summary,
            runs: &result.runs,
        },
    )?;
    for p in &extra_outputs {
        manifest.output(p);
    }
    manifest.output(&curves).output(&auc).summary(&result.summary)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collection: Option<PathBuf>,
    /// Annotation records, one JSON object per line.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    /// Annotators expected per document (default 3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotators: Option<usize>,
    /// Discard a document when any single annotation on it is inconsistent
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub strict: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn aggregation_config(annotators: Option<usize>, strict: bool) -> Result<AggregationConfig> {
    let expected_annotators = annotators.unwrap_or(3);
    ensure!(expected_annotators > 0, "--annotators must be at least 1");
    Ok(AggregationConfig {
        expected_annotators,
        strict_consistency: strict,
    })
}

fn aggregate(flags: AggregateArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let collection_path = required(&args.collection, "collection")?;
    let annotations_path = required(&args.annotations, "annotations")?;
    let out_dir = required(&args.out_dir, "out-dir")?;
    let config = aggregation_config(args.annotators, args.strict)?;
    let mut manifest = ManifestBuilder::start("aggregate", &args)?;
    let collection = open_collection(&collection_path)?;
    let annotations = open_annotations(&annotations_path)?;
    let outcome = run_aggregation(&collection, &annotations, &config)?;

    let labels = out_dir.join("labels.jsonl");
    let kept = out_dir.join("kept.jsonl");
    let discarded = out_dir.join("discarded.jsonl");
    let report = out_dir.join("report.json");
    write_atomically(&labels, |w| write_jsonl(w, &outcome.all))?;
    write_atomically(&kept, |w| write_jsonl(w, &outcome.kept))?;
    write_atomically(&discarded, |w| write_jsonl(w, &outcome.discarded))?;
    write_json_atomically(&report, &outcome.report)?;
    manifest
        .input(&collection_path)
        .input(&annotations_path)
        .output(&labels)
        .output(&kept)
        .output(&discarded)
        .output(&report)
        .summary(&outcome.report)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageArg {
    #[default]
    RelativeToLexicon,
    ShareOfHateful,
}

impl From<CoverageArg> for CoverageDefinition {
    fn from(c: CoverageArg) -> Self {
        match c {
            CoverageArg::RelativeToLexicon => CoverageDefinition::RelativeToLexicon,
            CoverageArg::ShareOfHateful => CoverageDefinition::ShareOfHateful,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collection: Option<PathBuf>,
    /// Annotations; without them the collection's stored labels are used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotators: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub strict: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    /// Classifier scores (doc_id, score) to evaluate against the labels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn metrics(flags: MetricsArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let collection_path = required(&args.collection, "collection")?;
    let output = required(&args.output, "output")?;
    let threshold = args.threshold.unwrap_or(0.5);
    ensure!((0.0..=1.0).contains(&threshold), "--threshold must lie in [0, 1]");
    let aggregation = aggregation_config(args.annotators, args.strict)?;
    let mut manifest = ManifestBuilder::start("metrics", &args)?;
    manifest.input(&collection_path);
    let collection = open_collection(&collection_path)?;
    let annotations = match &args.annotations {
        Some(p) => {
            manifest.input(p);
            Some(open_annotations(p)?)
        }
        None => None,
    };
    let lexicon = match &args.lexicon {
        Some(p) => {
            manifest.input(p);
            Some(open_lexicon(p)?)
        }
        None => None,
    };
    let predictions = match &args.predictions {
        Some(p) => {
            manifest.input(p);
            let scores = load_external_scores(p).with_context(|| format!("loading predictions {}", p.display()))?;
            Some(
                scores
                    .scores
                    .into_iter()
                    .map(|(id, s)| (id, s >= threshold))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
        None => None,
    };
    let report = dataset_report(
        &collection,
        &ReportInputs {
            annotations: annotations.as_deref(),
            aggregation,
            lexicon: lexicon.as_ref(),
            predictions: predictions.as_ref(),
            coverage: args.coverage.unwrap_or_default().into(),
        },
    )?;
    write_json_atomically(&output, &report)?;
    manifest.output(&output);
    manifest.write(&manifest_beside(&output))?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory holding session event logs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Collection served to sessions, as NAME=PATH; repeatable.
    #[arg(long = "collection")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub collections: Vec<String>,
    /// Embedding file for a collection, as NAME=PATH.
    #[arg(long = "embeddings")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub embeddings: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    /// Listen address (default 127.0.0.1:8080; port 0 picks a free port).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub addr: Option<SocketAddr>,
}

fn serve(flags: ServeArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let data_dir = required(&args.data_dir, "data-dir")?;
    ensure!(!args.collections.is_empty(), "serve needs at least one --collection NAME=PATH");
    let addr = args.addr.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 8080)));
    let mut manifest = ManifestBuilder::start("serve", &args)?;

    let mut collections = BTreeMap::new();
    for spec in &args.collections {
        let (name, path) = named_path(spec)?;
        ensure!(!collections.contains_key(&name), "collection `{name}` given twice");
        manifest.input(&path);
        collections.insert(name, CollectionEntry::new(open_collection(&path)?));
    }
    for spec in &args.embeddings {
        let (name, path) = named_path(spec)?;
        let dim = args.embedding_dim.context("--embeddings needs --embedding-dim")?;
        let entry = collections
            .get_mut(&name)
            .with_context(|| format!("embeddings for unknown collection `{name}`"))?;
        let vectors: BTreeMap<String, FeatureVector> = load_embeddings(&path, dim)?;
        entry.embeddings = Some(Arc::new(vectors));
        manifest.input(&path);
    }
    let state = Arc::new(ServiceState::open(&data_dir, collections)?);
    let manifest_path = data_dir.join("serve.manifest.json");
    manifest.output(&data_dir);
    manifest.write(&manifest_path)?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(rarepool_service::serve(state, addr, |bound| {
        println!("listening on http://{bound}");
        let _ = std::io::stdout().flush();
    }))?;
    manifest.write(&manifest_path)?;
    Ok(())
}
