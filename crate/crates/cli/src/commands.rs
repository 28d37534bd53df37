use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use asmsieve::corpus::{
    self, build_pairs, check_corpus, filter_short, parse_listing, truncate, Arch, AssemblyFunction, FunctionPair,
    ListingMeta, OptLevel, Pairing,
};
use asmsieve::eval::{self, ablation_grid, evaluate_pool, sample_pool, AblationAxis, AblationInputs, EvalPool, Scorer};
use asmsieve::extraction::{
    record_fixture, static_extract, ClientError, ExampleBank, ExtractionError, Extractor, FixtureStore, HttpClient,
    HttpConfig, ModelClient, PromptConfig, RecordingClient, ReplayClient, RetryPolicy, ScriptedClient, StaticClient,
};
use asmsieve::index::{IndexError, InvertedIndex, SearchResult};
use asmsieve::schema::{diff, feature_line, read_features, FeatureSet, FieldChange, Section};
use asmsieve::similarity::{flatten, EmbeddingStore, FlattenOptions, TokenSet};
use serde::Serialize;
use serde_json::json;

use crate::config::Settings;
use crate::{
    AblateArgs, ClientKind, Cli, Command, DiffArgs, EvalArgs, ExtractArgs, FixturesCommand, FlattenArgs, Format,
    ImportArgs, IndexArgs, IngestArgs, PairsArgs, PoolArgs, PromptArgs, RerankArgs, SearchArgs, EXIT_CONFIG,
    EXIT_INPUT, EXIT_OK, EXIT_PARTIAL,
};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Outcome = Result<u8, Failure>;

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_INPUT,
            error: e.into(),
        })
    }

    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_CONFIG,
            error: e.into(),
        })
    }
}

pub fn run(cli: Cli) -> Outcome {
    let settings = Settings::load(cli.config.as_deref()).config()?;
    let format = cli.format;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Pairs(a) => pairs(a),
        Command::Pool(a) => pool(a),
        Command::Extract(a) => extract(a, &settings),
        Command::Index(a) => index(a, &settings),
        Command::Search(a) => search(a, &settings, format),
        Command::Diff(a) => diff_cmd(a, format),
        Command::Rerank(a) => rerank(a, &settings, format),
        Command::Eval(a) => eval_cmd(a, &settings, format),
        Command::Ablate(a) => ablate(a, &settings, format),
        Command::Fixtures(FixturesCommand::Import(a)) => import(a, &settings),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("opening {}", path.display()))
        .input()
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .input()?;
            }
            let f = File::create(p).with_context(|| format!("creating {}", p.display())).input()?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn read_corpus_file(path: &Path) -> Result<Vec<AssemblyFunction>, Failure> {
    corpus::read_corpus(open(path)?)
        .with_context(|| format!("reading corpus {}", path.display()))
        .input()
}

fn read_features_file(path: &Path) -> Result<Vec<(String, FeatureSet)>, Failure> {
    read_features(open(path)?)
        .with_context(|| format!("reading features {}", path.display()))
        .input()
}

fn read_embeddings(path: &Path) -> Result<EmbeddingStore, Failure> {
    EmbeddingStore::read_jsonl(open(path)?)
        .with_context(|| format!("reading embeddings {}", path.display()))
        .input()
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(anyhow::Error::from).input()?;
    writeln!(out).input()
}

fn print_text(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes()).input()?;
    out.flush().input()
}

fn ingest(a: IngestArgs) -> Outcome {
    if a.min_instr == 0 || a.max_instr == 0 {
        return Err(anyhow!("--min-instr and --max-instr must be at least 1")).config();
    }
    let arch: Arch = a.arch.parse().config()?;
    let opt: OptLevel = a.opt_level.parse().config()?;
    let meta = ListingMeta::new(a.library.clone(), arch, opt);

    let mut all = Vec::new();
    for path in &a.listings {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .input()?;
        let fns = parse_listing(&text, &meta)
            .with_context(|| format!("{}", path.display()))
            .input()?;
        all.extend(fns);
    }
    let parsed = all.len();
    let kept: Vec<AssemblyFunction> = filter_short(all, a.min_instr)
        .into_iter()
        .map(|f| truncate(f, a.max_instr))
        .collect();
    check_corpus(&kept).input()?;
    log::info!(
        "{} functions parsed, {} kept, {} truncated",
        parsed,
        kept.len(),
        kept.iter().filter(|f| f.truncated).count()
    );
    let mut out = sink(a.output.as_deref())?;
    corpus::write_jsonl(&mut out, &kept).input()?;
    out.flush().input()?;
    Ok(EXIT_OK)
}

fn pairs(a: PairsArgs) -> Outcome {
    let pairing: Pairing = a.pairing.parse().config()?;
    let left = read_corpus_file(&a.left)?;
    let right = read_corpus_file(&a.right)?;
    let pairs = build_pairs(&left, &right, pairing).config()?;
    log::info!("{} pairs", pairs.len());
    let mut out = sink(a.output.as_deref())?;
    corpus::write_jsonl(&mut out, &pairs).input()?;
    out.flush().input()?;
    Ok(EXIT_OK)
}

fn read_pairs(path: &Path) -> Result<Vec<FunctionPair>, Failure> {
    corpus::read_jsonl(open(path)?)
        .with_context(|| format!("reading pairs {}", path.display()))
        .input()
}

fn pool(a: PoolArgs) -> Outcome {
    let pairs = read_pairs(&a.pairs)?;
    let drawn = sample_pool(&pairs, a.size, a.seed).config()?;
    let mut out = sink(a.output.as_deref())?;
    corpus::write_jsonl(&mut out, &drawn).input()?;
    out.flush().input()?;
    Ok(EXIT_OK)
}

fn prompt_config(args: &PromptArgs, settings: &Settings) -> Result<(PromptConfig, RetryPolicy), Failure> {
    let mut cfg = settings.prompt.clone();
    if let Some(n) = args.num_examples {
        cfg.num_examples = n;
    }
    if let Some(names) = &args.sections {
        cfg.sections = names
            .iter()
            .map(|n| n.parse::<Section>().map_err(|e| anyhow!(e)))
            .collect::<anyhow::Result<_>>()
            .config()?;
    }
    if args.no_system_prompt {
        cfg.system_prompt_enabled = false;
    }
    if args.schema_in_prompt {
        cfg.include_schema_in_prompt = true;
    }
    cfg.check().config()?;

    let mut policy = settings.retry;
    if let Some(r) = args.max_retries {
        policy.max_retries = r;
    }
    if let Some(t) = args.base_temperature {
        policy.base_temperature = t;
    }
    if let Some(s) = args.temperature_step {
        policy.temperature_step = s;
    }
    policy.check().config()?;
    Ok((cfg, policy))
}

fn example_bank(args: &PromptArgs) -> Result<ExampleBank, Failure> {
    match &args.examples_dir {
        Some(dir) => ExampleBank::from_dir(dir)
            .with_context(|| format!("loading examples from {}", dir.display()))
            .config(),
        None => Ok(ExampleBank::bundled()),
    }
}

fn flatten_options(args: &FlattenArgs, settings: &Settings) -> FlattenOptions {
    let mut opts = settings.flatten.clone();
    opts.bucket_counts |= args.bucket_counts;
    opts.atomic_arrays |= args.atomic_arrays;
    opts.excluded_fields.extend(args.excluded_fields.iter().cloned());
    opts
}

/// Holds whichever client a command selected.
struct Clients {
    live: Option<HttpClient>,
    store: Option<FixtureStore>,
    record: Option<FixtureStore>,
}

impl Clients {
    fn new(kind: ClientKind, fixtures: Option<&Path>, record: Option<&Path>, settings: &Settings) -> Result<Self, Failure> {
        let live = if kind == ClientKind::Live {
            let mut cfg = match HttpConfig::from_env() {
                Ok(cfg) => cfg,
                Err(e) => match &settings.llm.url {
                    Some(url) => HttpConfig {
                        url: url.clone(),
                        api_key: std::env::var("ASMSIEVE_LLM_KEY").ok(),
                        model: None,
                        timeout: Duration::from_secs(120),
                    },
                    None => return Err(e).config(),
                },
            };
            if cfg.model.is_none() {
                cfg.model = settings.llm.model.clone();
            }
            if let Some(secs) = settings.llm.timeout_secs {
                cfg.timeout = Duration::from_secs(secs);
            }
            Some(HttpClient::new(cfg))
        } else {
            None
        };
        let store = match (kind, fixtures) {
            (ClientKind::Replay, Some(dir)) => Some(FixtureStore::open(dir)),
            (ClientKind::Replay, None) => return Err(anyhow!("--client replay needs --fixtures DIR")).config(),
            _ => None,
        };
        if record.is_some() && !matches!(kind, ClientKind::Live | ClientKind::Heuristic) {
            return Err(anyhow!("--record applies to --client live or heuristic")).config();
        }
        Ok(Clients {
            live,
            store,
            record: record.map(FixtureStore::open),
        })
    }

    fn with<R>(&self, kind: ClientKind, f: impl FnOnce(&dyn ModelClient) -> R) -> R {
        match (kind, &self.record) {
            (ClientKind::Live, None) => f(self.live.as_ref().expect("live client built")),
            (ClientKind::Live, Some(store)) => {
                f(&RecordingClient::new(ForwardRef(self.live.as_ref().expect("live client built")), store))
            }
            (ClientKind::Heuristic, None) => f(&StaticClient),
            (ClientKind::Heuristic, Some(store)) => f(&RecordingClient::new(StaticClient, store)),
            (ClientKind::Replay, _) => f(&ReplayClient::new(self.store.as_ref().expect("fixture store opened"))),
            (ClientKind::Static, _) => unreachable!("static extraction bypasses the client"),
        }
    }
}

struct ForwardRef<'a, C>(&'a C);

impl<C: ModelClient> ModelClient for ForwardRef<'_, C> {
    fn complete(&self, request: &asmsieve::extraction::CompletionRequest<'_>) -> Result<String, ClientError> {
        self.0.complete(request)
    }
}

fn extract(a: ExtractArgs, settings: &Settings) -> Outcome {
    let fns = read_corpus_file(&a.corpus)?;
    let mut out = sink(a.output.as_deref())?;

    if a.client == ClientKind::Static {
        if a.fixtures.is_some() || a.record.is_some() {
            return Err(anyhow!("--client static takes no fixtures")).config();
        }
        for f in &fns {
            let analysis = static_extract(f);
            for w in &analysis.warnings {
                log::warn!("{}: {w}", f.id);
            }
            writeln!(out, "{}", feature_line(&f.id, &analysis.features)).input()?;
        }
        out.flush().input()?;
        return Ok(EXIT_OK);
    }

    let (cfg, policy) = prompt_config(&a.prompt, settings)?;
    let bank = example_bank(&a.prompt)?;
    let clients = Clients::new(a.client, a.fixtures.as_deref(), a.record.as_deref(), settings)?;
    let mut extractor = Extractor::new(cfg, policy, &bank);
    if let Some(t) = settings.llm.max_tokens {
        extractor.max_tokens = t;
    }
    let results = clients.with(a.client, |client| extractor.extract_many(&fns, client, a.parallel));

    let mut transcripts = match &a.transcripts {
        Some(p) => Some(sink(Some(p))?),
        None => None,
    };
    let mut failed = 0usize;
    let mut retried = 0usize;
    for (f, result) in fns.iter().zip(results) {
        match result {
            Ok((fs, transcript)) => {
                if transcript.attempts.len() > 1 {
                    retried += 1;
                }
                writeln!(out, "{}", feature_line(&f.id, &fs)).input()?;
                if let Some(t) = transcripts.as_mut() {
                    writeln!(t, "{}", serde_json::to_string(&transcript).input()?).input()?;
                }
            }
            Err(ExtractionError::Config(msg)) => return Err(anyhow!(msg)).config(),
            Err(e) => {
                failed += 1;
                log::error!("{e}");
                if let (Some(t), Some(tr)) = (transcripts.as_mut(), e.transcript()) {
                    writeln!(t, "{}", serde_json::to_string(tr).input()?).input()?;
                }
            }
        }
    }
    out.flush().input()?;
    if let Some(t) = transcripts.as_mut() {
        t.flush().input()?;
    }
    eprintln!(
        "extracted {} of {} functions ({} needed retries, {} failed)",
        fns.len() - failed,
        fns.len(),
        retried,
        failed
    );
    Ok(if failed > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

fn index(a: IndexArgs, settings: &Settings) -> Outcome {
    let docs = read_features_file(&a.features)?;
    let opts = flatten_options(&a.flatten, settings);
    let mut ix = InvertedIndex::new();
    for (id, fs) in &docs {
        ix.add_document(id.clone(), fs, &flatten(fs, &opts)).input()?;
    }
    ix.save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))
        .input()?;
    log::info!("indexed {} documents, {} distinct tokens", ix.len(), ix.token_count());
    Ok(EXIT_OK)
}

fn open_index(path: &Path) -> Result<InvertedIndex, Failure> {
    InvertedIndex::open(path)
        .with_context(|| format!("loading snapshot {}", path.display()))
        .input()
}

fn select_queries(path: &Path, ids: &[String], opts: &FlattenOptions) -> Result<Vec<(String, TokenSet)>, Failure> {
    let docs = read_features_file(path)?;
    let by_id: BTreeMap<&str, &FeatureSet> = docs.iter().map(|(id, fs)| (id.as_str(), fs)).collect();
    if ids.is_empty() {
        return Ok(docs.iter().map(|(id, fs)| (id.clone(), flatten(fs, opts))).collect());
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|fs| (id.clone(), flatten(fs, opts)))
                .ok_or_else(|| anyhow!("query id `{id}` not in {}", path.display()))
        })
        .collect::<anyhow::Result<_>>()
        .input()
}

#[derive(Serialize)]
struct QueryResult<'a> {
    query: &'a str,
    hits: &'a SearchResult,
}

fn print_results(results: &[(String, SearchResult)], format: Format) -> Result<(), Failure> {
    match format {
        Format::Json => {
            let rows: Vec<QueryResult> = results.iter().map(|(q, r)| QueryResult { query: q, hits: r }).collect();
            print_json(&rows)
        }
        Format::Table => {
            let mut text = String::new();
            for (q, r) in results {
                text.push_str(&format!("query {q}\n"));
                for (rank, h) in r.hits.iter().enumerate() {
                    let detail = match (h.jaccard, h.cosine) {
                        (Some(j), Some(c)) => format!("  (jaccard {j:.6}, cosine {c:.6})"),
                        _ => String::new(),
                    };
                    text.push_str(&format!("{:>4}  {:.6}  {}{detail}\n", rank + 1, h.score, h.id));
                }
            }
            print_text(&text)
        }
    }
}

fn search(a: SearchArgs, settings: &Settings, format: Format) -> Outcome {
    let k = a.k.unwrap_or(settings.search.k);
    if k == 0 {
        return Err(anyhow!("k must be positive")).config();
    }
    let ix = open_index(&a.snapshot)?;
    let opts = flatten_options(&a.flatten, settings);
    let queries = select_queries(&a.query, &a.ids, &opts)?;
    let tokens: Vec<TokenSet> = queries.iter().map(|(_, t)| t.clone()).collect();
    let results = ix.search_many(&tokens, k, a.parallel).input()?;
    let named: Vec<(String, SearchResult)> = queries.into_iter().map(|(q, _)| q).zip(results).collect();
    print_results(&named, format)?;
    Ok(EXIT_OK)
}

fn diff_cmd(a: DiffArgs, format: Format) -> Outcome {
    let left_docs = read_features_file(&a.features)?;
    let right_docs = match &a.right_features {
        Some(p) => read_features_file(p)?,
        None => left_docs.clone(),
    };
    let find = |docs: &[(String, FeatureSet)], id: &str, path: &Path| {
        docs.iter()
            .find(|(d, _)| d == id)
            .map(|(_, fs)| fs.clone())
            .ok_or_else(|| anyhow!("id `{id}` not in {}", path.display()))
    };
    let left = find(&left_docs, &a.left, &a.features).input()?;
    let right = find(&right_docs, &a.right, a.right_features.as_deref().unwrap_or(&a.features)).input()?;
    let d = diff(&left, &right);
    match format {
        Format::Table => print_text(&d.to_string())?,
        Format::Json => {
            let rows: Vec<serde_json::Value> = d
                .differences()
                .map(|fd| match &fd.change {
                    FieldChange::Equal => json!({"field": fd.field, "change": "equal"}),
                    FieldChange::Changed { left, right } => {
                        json!({"field": fd.field, "change": "changed", "left": left, "right": right})
                    }
                    FieldChange::SetChanged { removed, added } => {
                        json!({"field": fd.field, "change": "set_changed", "removed": removed, "added": added})
                    }
                })
                .collect();
            print_json(&rows)?;
        }
    }
    Ok(EXIT_OK)
}

fn rerank(a: RerankArgs, settings: &Settings, format: Format) -> Outcome {
    let k1 = a.k1.unwrap_or(settings.search.k1);
    let k2 = a.k2.unwrap_or(settings.search.k2);
    if k1 == 0 || k2 == 0 || k2 > k1 {
        return Err(anyhow!("need 0 < k2 <= k1 (got k1={k1}, k2={k2})")).config();
    }
    let ix = open_index(&a.snapshot)?;
    let store = read_embeddings(&a.embeddings)?;
    let opts = flatten_options(&a.flatten, settings);
    let queries = select_queries(&a.query, &a.ids, &opts)?;
    let mut results = Vec::with_capacity(queries.len());
    for (id, tokens) in queries {
        let qemb = store
            .get(&id)
            .ok_or_else(|| anyhow!("no embedding for query `{id}`"))
            .input()?;
        let r = ix.prefilter_rerank(&tokens, qemb, k1, k2, &store).map_err(|e| match e {
            IndexError::InvalidK | IndexError::InvalidRerankDepth { .. } => Failure {
                code: EXIT_CONFIG,
                error: e.into(),
            },
            other => Failure {
                code: EXIT_INPUT,
                error: other.into(),
            },
        })?;
        results.push((id, r));
    }
    print_results(&results, format)?;
    Ok(EXIT_OK)
}

fn token_map(path: &Path, opts: &FlattenOptions) -> Result<HashMap<String, TokenSet>, Failure> {
    Ok(read_features_file(path)?
        .into_iter()
        .map(|(id, fs)| {
            let t = flatten(&fs, opts).with_source(id.clone());
            (id, t)
        })
        .collect())
}

fn flatten_label(opts: &FlattenOptions) -> String {
    let mut parts = vec![if opts.bucket_counts { "bucketed" } else { "exact" }.to_string()];
    if opts.atomic_arrays {
        parts.push("atomic-arrays".into());
    }
    for f in &opts.excluded_fields {
        parts.push(format!("-{f}"));
    }
    parts.join(",")
}

fn eval_cmd(a: EvalArgs, settings: &Settings, format: Format) -> Outcome {
    let scorer: Scorer = a.scorer.parse().map_err(|e: String| anyhow!(e)).config()?;
    let pool = EvalPool::new(read_pairs(&a.pool)?, scorer).input()?;
    let opts = flatten_options(&a.flatten, settings);
    let features = token_map(&a.features, &opts)?;
    let embeddings = match &a.embeddings {
        Some(p) => Some(read_embeddings(p)?),
        None => None,
    };
    let report = evaluate_pool(&pool, &features, embeddings.as_ref())
        .map_err(|e| match e {
            eval::EvalError::Config(_) => Failure {
                code: EXIT_CONFIG,
                error: e.into(),
            },
            other => Failure {
                code: EXIT_INPUT,
                error: other.into(),
            },
        })?
        .with_setting("flatten", flatten_label(&opts));
    if let Some(path) = &a.output {
        let mut out = sink(Some(path))?;
        out.write_all(report.to_json_pretty().as_bytes()).input()?;
        out.flush().input()?;
    }
    match format {
        Format::Json => print_text(&report.to_json_pretty())?,
        Format::Table => print_text(&report.render_table())?,
    }
    Ok(EXIT_OK)
}

fn ablate(a: AblateArgs, settings: &Settings, format: Format) -> Outcome {
    if a.client == ClientKind::Static {
        return Err(anyhow!("ablation needs a prompting client (live, replay or heuristic)")).config();
    }
    let axis: AblationAxis = a.axis.parse().map_err(|e: String| anyhow!(e)).config()?;
    let scorer: Scorer = a.scorer.parse().map_err(|e: String| anyhow!(e)).config()?;
    let (base, policy) = prompt_config(&a.prompt, settings)?;
    let bank = example_bank(&a.prompt)?;
    let functions: HashMap<String, AssemblyFunction> = read_corpus_file(&a.corpus)?
        .into_iter()
        .map(|f| (f.id.clone(), f))
        .collect();
    let pools = a
        .pools
        .iter()
        .map(|p| EvalPool::new(read_pairs(p)?, scorer).input())
        .collect::<Result<Vec<_>, Failure>>()?;
    let embeddings = match &a.embeddings {
        Some(p) => Some(read_embeddings(p)?),
        None => None,
    };
    let clients = Clients::new(a.client, a.fixtures.as_deref(), a.record.as_deref(), settings)?;
    let table = clients
        .with(a.client, |client| {
            let inputs = AblationInputs {
                base,
                policy,
                bank: &bank,
                functions: &functions,
                client,
                flatten: flatten_options(&a.flatten, settings),
                embeddings: embeddings.as_ref(),
                parallel: a.parallel,
            };
            ablation_grid(axis, &pools, &inputs)
        })
        .input()?;
    match format {
        Format::Json => print_json(&table)?,
        Format::Table => print_text(&table.render_table())?,
    }
    Ok(EXIT_OK)
}

#[derive(serde::Deserialize)]
struct ResponseRecord {
    id: String,
    responses: Vec<String>,
}

fn import(a: ImportArgs, settings: &Settings) -> Outcome {
    let (cfg, policy) = prompt_config(&a.prompt, settings)?;
    let bank = example_bank(&a.prompt)?;
    let fns: HashMap<String, AssemblyFunction> = read_corpus_file(&a.corpus)?
        .into_iter()
        .map(|f| (f.id.clone(), f))
        .collect();
    let records: Vec<ResponseRecord> = corpus::read_jsonl(open(&a.responses)?)
        .with_context(|| format!("reading {}", a.responses.display()))
        .input()?;
    let store = FixtureStore::open(&a.fixtures);
    let extractor = Extractor::new(cfg, policy, &bank);
    let mut failed = 0usize;
    for rec in &records {
        let f = fns
            .get(&rec.id)
            .ok_or_else(|| anyhow!("response for unknown id `{}`", rec.id))
            .input()?;
        if rec.responses.len() as u32 > policy.max_attempts() {
            return Err(anyhow!(
                "`{}` has {} responses but the retry policy allows {} attempts",
                rec.id,
                rec.responses.len(),
                policy.max_attempts()
            ))
            .input();
        }
        let scripted = ScriptedClient::new(rec.responses.iter().cloned().map(Ok).collect());
        let transcript = match extractor.extract(f, &scripted) {
            Ok((_, t)) => t,
            Err(ExtractionError::Failed { transcript }) => {
                failed += 1;
                log::warn!("`{}`: no valid response among {}", rec.id, rec.responses.len());
                *transcript
            }
            Err(ExtractionError::Client { transcript, .. }) => {
                failed += 1;
                *transcript
            }
            Err(e) => return Err(anyhow!(e)).config(),
        };
        record_fixture(&transcript, &store).input()?;
    }
    eprintln!("imported responses for {} functions into {}", records.len(), PathBuf::from(&a.fixtures).display());
    Ok(if failed > 0 { EXIT_PARTIAL } else { EXIT_OK })
}
