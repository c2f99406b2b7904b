//! `les3`: generate corpora, build indexes, run queries and benchmarks.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use les3_core::ingest::{parse_dataset, parse_records, write_dataset, Format, SetGenerator, SyntheticConfig, TokenDictionary};
use les3_core::objective::{gpo, QueryMode};
use les3_core::pipeline::{auto_groups, index_for, partition, Method, Shape};
use les3_core::query::{brute_force, same_answer, search, verification_count, QueryResult};
use les3_core::updates::{run_update_experiment, UpdateConfig};
use les3_core::{Database, Error, Index, QueryKind, SetRecord, SimilarityMeasure, UniverseMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "les3", version, about = "Exact set similarity search over learned group partitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its dictionary (FILE.dict.tsv).
    Gen(GenArgs),
    /// Partition a dataset and write an index file.
    Build(BuildArgs),
    /// Run kNN or range queries against an index.
    ///
    /// CSV columns: query,hits,frontier,candidates,pe,elapsed_us. The last
    /// row has query "mean" and averages every column.
    Query(QueryArgs),
    /// Compare partitioning methods on one dataset.
    ///
    /// CSV columns: method,groups,partition_ms,gpo,pe,mean_query_us,
    /// verification_count,mismatches.
    Bench(BenchArgs),
    /// Insert sets into an existing index.
    Insert(InsertArgs),
    /// Insert-ratio experiment on a synthetic corpus.
    ///
    /// CSV columns: ratio,mode,inserted,new_tokens,pe_before,pe_after,
    /// pe_rebuilt,queries,mismatches. Post-insert queries are half original
    /// sets and half inserted ones.
    Updates(UpdatesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Distribution {
    Uniform,
    PowerLaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum InsertMode {
    Closed,
    Open,
}

impl From<InsertMode> for UniverseMode {
    fn from(m: InsertMode) -> Self {
        match m {
            InsertMode::Closed => UniverseMode::Closed,
            InsertMode::Open => UniverseMode::Open,
        }
    }
}

#[derive(Args, Clone)]
struct CorpusArgs {
    #[arg(long, value_enum)]
    mode: Distribution,
    #[arg(long)]
    sets: usize,
    #[arg(long)]
    universe: usize,
    /// Power-law exponent.
    #[arg(long, required_if_eq("mode", "power-law"))]
    alpha: Option<f64>,
    /// Per-token inclusion probability for uniform corpora.
    #[arg(long, required_if_eq("mode", "uniform"))]
    prob: Option<f64>,
    /// Tokens drawn per power-law set.
    #[arg(long)]
    set_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CorpusArgs {
    fn config(&self) -> SyntheticConfig {
        let cfg = match self.mode {
            Distribution::Uniform => SyntheticConfig::uniform(self.sets, self.universe, self.prob.unwrap_or(0.0), self.seed),
            Distribution::PowerLaw => SyntheticConfig::power_law(self.sets, self.universe, self.alpha.unwrap_or(0.0), self.seed),
        };
        match self.set_size {
            Some(size) => cfg.with_set_size(size),
            None => cfg,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "l2p")]
    method: Method,
    #[arg(long, conflicts_with = "auto", required_unless_present = "auto")]
    groups: Option<usize>,
    /// Use half a percent of the set count as the group count.
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value = "jaccard")]
    measure: SimilarityMeasure,
    /// Hierarchy levels to keep, coarsest first, e.g. `0,3`.
    #[arg(long, value_delimiter = ',')]
    htgm_levels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("kind").required(true).args(["knn", "range"]))]
#[command(group = clap::ArgGroup::new("source").required(true).args(["queries", "sample"]))]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    range: Option<f64>,
    /// Query sets, one per line, in the dataset format.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Draw this many queries from the database.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    methods: Vec<String>,
    /// Group count; defaults to half a percent of the set count.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, default_value_t = 10)]
    knn: usize,
    #[arg(long, default_value_t = 100)]
    sample: usize,
    #[arg(long, default_value = "jaccard")]
    measure: SimilarityMeasure,
    /// Check every answer against a full scan; exit 3 on any mismatch.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct InsertArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sets to insert, in the dataset format.
    #[arg(long)]
    add: PathBuf,
    #[arg(long, value_enum, default_value = "closed")]
    mode: InsertMode,
    #[arg(long)]
    out: PathBuf,
    /// Also write the enlarged dataset (and its dictionary) here.
    #[arg(long)]
    data_out: Option<PathBuf>,
}

#[derive(Args)]
struct UpdatesArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "l2p")]
    method: Method,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, default_value = "jaccard")]
    measure: SimilarityMeasure,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    ratios: Vec<f64>,
    #[arg(long = "universe-mode", value_enum, default_value = "closed")]
    universe_mode: InsertMode,
    /// Chance that an inserted token is new (open mode).
    #[arg(long, default_value_t = 0.5)]
    new_token_fraction: f64,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    knn: usize,
}

/// Outcome classes mapped to process exit codes.
enum Failure {
    Usage(String),
    Data(String),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn with_path<T>(path: &Path, r: les3_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Data(msg) => Failure::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn dict_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".dict.tsv");
    PathBuf::from(name)
}

/// Reads a dataset. Tokens resolve through the sidecar dictionary when it
/// exists; otherwise ids follow first appearance.
fn load_data(path: &Path) -> CliResult<(Database, TokenDictionary)> {
    let input = BufReader::new(File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?);
    let sidecar = dict_path(path);
    if sidecar.exists() {
        let mut dict = with_path(&sidecar, TokenDictionary::read_tsv(BufReader::new(File::open(&sidecar)?)))?;
        let (records, _) = with_path(path, parse_records(input, &mut dict, false, 0))?;
        let db = with_path(path, Database::new(records, dict.len()))?;
        Ok((db, dict))
    } else {
        let parsed = with_path(path, parse_dataset(input, Format::RawTokens))?;
        Ok((parsed.db, parsed.dictionary))
    }
}

fn save_data(path: &Path, db: &Database, dict: &TokenDictionary) -> CliResult {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(db.records(), dict, &mut out)?;
    out.flush()?;
    let mut side = BufWriter::new(File::create(dict_path(path))?);
    dict.write_tsv(&mut side)?;
    side.flush()?;
    Ok(())
}

fn load_index(path: &Path, db: &Database) -> CliResult<Index> {
    let index = with_path(path, Index::load(path))?;
    if index.num_sets() != db.len() || index.universe_size() != db.universe_size() {
        return Err(Failure::Data(format!(
            "{}: index covers {} sets over {} tokens but the data has {} sets over {} tokens",
            path.display(),
            index.num_sets(),
            index.universe_size(),
            db.len(),
            db.universe_size()
        )));
    }
    Ok(index)
}

fn sample_queries(db: &Database, count: usize, seed: u64) -> Vec<SetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| db.get(rng.random_range(0..db.len() as u32)).clone()).collect()
}

fn gen(args: GenArgs) -> CliResult {
    let cfg = args.corpus.config();
    let db = les3_core::ingest::generate(&cfg)?;
    save_data(&args.out, &db, &TokenDictionary::identity(db.universe_size()))?;
    println!("sets: {}", db.len());
    println!("universe: {}", db.universe_size());
    Ok(())
}

fn build(args: BuildArgs) -> CliResult {
    let (db, _) = load_data(&args.data)?;
    if db.is_empty() {
        return Err(Failure::Data(format!("{}: no sets", args.data.display())));
    }
    let groups = match args.groups {
        Some(0) => return Err(Failure::Usage("--groups must be positive".into())),
        Some(n) => n,
        None => auto_groups(db.len()),
    };
    let start = Instant::now();
    let h = partition(&db, args.method, groups, args.measure, args.seed)?;
    let shape = args.htgm_levels.map_or(Shape::Flat, Shape::Levels);
    let index = index_for(&db, &h, &shape, args.measure)?;
    let elapsed = start.elapsed();
    let bytes = index.to_bytes();
    std::fs::write(&args.out, &bytes)?;
    println!("build_ms: {:.1}", elapsed.as_secs_f64() * 1e3);
    println!("index_bytes: {}", bytes.len());
    println!("groups: {}", index.finest().num_groups());
    Ok(())
}

#[derive(Serialize)]
struct QueryRow {
    query: String,
    hits: f64,
    /// k-th similarity for kNN, weakest hit for range; empty when no hits.
    frontier: Option<f64>,
    candidates: f64,
    pe: f64,
    elapsed_us: f64,
}

fn query_row(id: usize, r: &QueryResult, db_size: usize, mode: QueryMode) -> QueryRow {
    QueryRow {
        query: id.to_string(),
        hits: r.hits.len() as f64,
        frontier: r.frontier().map(|s| s.to_f64()),
        candidates: r.metrics.candidates as f64,
        pe: r.pruning_efficiency(db_size, mode),
        elapsed_us: r.metrics.elapsed.as_secs_f64() * 1e6,
    }
}

fn mean_row(rows: &[QueryRow]) -> QueryRow {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&QueryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let frontiers: Vec<f64> = rows.iter().filter_map(|r| r.frontier).collect();
    QueryRow {
        query: "mean".into(),
        hits: mean(|r| r.hits),
        frontier: (!frontiers.is_empty()).then(|| frontiers.iter().sum::<f64>() / frontiers.len() as f64),
        candidates: mean(|r| r.candidates),
        pe: mean(|r| r.pe),
        elapsed_us: mean(|r| r.elapsed_us),
    }
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    rows: Vec<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregate: Option<T>,
}

fn emit<T: Serialize>(format: OutputFormat, rows: Vec<T>, aggregate: Option<T>) -> CliResult {
    let stdout = io::stdout().lock();
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(stdout);
            for row in rows.iter().chain(aggregate.as_ref()) {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut out = stdout;
            serde_json::to_writer_pretty(&mut out, &Report { rows, aggregate })?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn query(args: QueryArgs) -> CliResult {
    let (db, mut dict) = load_data(&args.data)?;
    let index = load_index(&args.index, &db)?;
    let (kind, mode) = match (args.knn, args.range) {
        (Some(k), _) => (QueryKind::Knn(k), QueryMode::Knn),
        (_, Some(delta)) => (QueryKind::Range(delta), QueryMode::Range),
        _ => unreachable!("clap enforces one query kind"),
    };
    let queries = match (&args.queries, args.sample) {
        (Some(path), _) => {
            let input = BufReader::new(File::open(path)?);
            with_path(path, parse_records(input, &mut dict, true, 0))?.0
        }
        (_, Some(n)) => sample_queries(&db, n, args.seed),
        _ => unreachable!("clap enforces one query source"),
    };
    let results: Vec<QueryResult> =
        queries.par_iter().map(|q| search(&index, &db, q, kind, index.measure)).collect::<Result<_, _>>()?;
    let rows: Vec<QueryRow> = results.iter().enumerate().map(|(i, r)| query_row(i, r, db.len(), mode)).collect();
    let aggregate = mean_row(&rows);
    emit(args.format, rows, Some(aggregate))
}

#[derive(Serialize)]
struct BenchRow {
    method: String,
    groups: usize,
    partition_ms: f64,
    gpo: f64,
    pe: f64,
    mean_query_us: f64,
    verification_count: u64,
    mismatches: usize,
}

fn bench(args: BenchArgs) -> CliResult {
    if args.methods.is_empty() {
        return Err(Failure::Usage("--methods needs at least one method".into()));
    }
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    if args.knn == 0 || args.sample == 0 {
        return Err(Failure::Usage("--knn and --sample must be positive".into()));
    }
    let (db, _) = load_data(&args.data)?;
    if db.is_empty() {
        return Err(Failure::Data(format!("{}: no sets", args.data.display())));
    }
    let groups = args.groups.unwrap_or_else(|| auto_groups(db.len()));
    let m = args.measure;
    let kind = QueryKind::Knn(args.knn);
    let queries = sample_queries(&db, args.sample, args.seed);
    let truth: Option<Vec<QueryResult>> = args
        .oracle
        .then(|| queries.par_iter().map(|q| brute_force(&db, q, kind, m)).collect::<Result<_, _>>())
        .transpose()?;
    let mut rows = Vec::new();
    for method in methods {
        let start = Instant::now();
        let h = partition(&db, method, groups, m, args.seed)?;
        let partition_ms = start.elapsed().as_secs_f64() * 1e3;
        let index = index_for(&db, &h, &Shape::Flat, m)?;
        let results: Vec<QueryResult> =
            queries.par_iter().map(|q| search(&index, &db, q, kind, m)).collect::<Result<_, _>>()?;
        let mismatches = truth
            .as_ref()
            .map_or(0, |t| results.iter().zip(t).filter(|(a, b)| !same_answer(a, b, kind)).count());
        let n = results.len() as f64;
        rows.push(BenchRow {
            method: method.to_string(),
            groups: h.finest().num_groups(),
            partition_ms,
            gpo: gpo(&db, h.finest(), m),
            pe: results.iter().map(|r| r.pruning_efficiency(db.len(), QueryMode::Knn)).sum::<f64>() / n,
            mean_query_us: results.iter().map(|r| r.metrics.elapsed.as_secs_f64() * 1e6).sum::<f64>() / n,
            verification_count: verification_count(h.finest()),
            mismatches,
        });
    }
    let bad: Vec<String> = rows.iter().filter(|r| r.mismatches > 0).map(|r| r.method.clone()).collect();
    emit(args.format, rows, None)?;
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!("answers differ from the full scan for {}", bad.join(", "))))
    }
}

fn insert(args: InsertArgs) -> CliResult {
    let (mut db, mut dict) = load_data(&args.data)?;
    let mut index = load_index(&args.index, &db)?;
    let mode = UniverseMode::from(args.mode);
    let input = BufReader::new(File::open(&args.add)?);
    let open = matches!(mode, UniverseMode::Open);
    let (records, _) = with_path(&args.add, parse_records(input, &mut dict, open, db.len() as u32))?;
    let mut per_group = vec![0usize; index.finest().num_groups()];
    for (line, s) in records.into_iter().enumerate() {
        let g = index
            .update_insert(&mut db, s, mode)
            .map_err(|e| Failure::Data(format!("{}: set {}: {e}", args.add.display(), line + 1)))?;
        per_group[g.index()] += 1;
    }
    index.save(&args.out)?;
    if let Some(path) = &args.data_out {
        save_data(path, &db, &dict)?;
    }
    println!("inserted: {}", per_group.iter().sum::<usize>());
    println!("sets: {}", db.len());
    println!("universe: {}", db.universe_size());
    Ok(())
}

#[derive(Serialize)]
struct UpdateRow {
    ratio: f64,
    mode: &'static str,
    inserted: usize,
    new_tokens: usize,
    pe_before: f64,
    pe_after: f64,
    pe_rebuilt: f64,
    queries: usize,
    mismatches: usize,
}

fn updates(args: UpdatesArgs) -> CliResult {
    let cfg = args.corpus.config();
    let db = les3_core::ingest::generate(&cfg)?;
    let groups = args.groups.unwrap_or_else(|| auto_groups(db.len()));
    let (m, method, seed) = (args.measure, args.method, args.corpus.seed);
    let rebuild = |d: &Database| -> les3_core::Result<Index> {
        let h = partition(d, method, groups, m, seed)?;
        index_for(d, &h, &Shape::Flat, m)
    };
    let index = rebuild(&db)?;
    let mode = UniverseMode::from(args.universe_mode);
    let mut rows = Vec::new();
    for (i, &ratio) in args.ratios.iter().enumerate() {
        let mut generator = SetGenerator::new(cfg)?;
        for _ in 0..db.len() {
            generator.next_tokens();
        }
        let ucfg = UpdateConfig {
            ratio,
            mode,
            new_token_fraction: if matches!(mode, UniverseMode::Open) { args.new_token_fraction } else { 0.0 },
            queries: args.queries,
            k: args.knn,
            seed: seed.wrapping_add(i as u64),
        };
        let r = run_update_experiment(&db, &index, &mut generator, &ucfg, rebuild)?;
        rows.push(UpdateRow {
            ratio,
            mode: if matches!(mode, UniverseMode::Open) { "open" } else { "closed" },
            inserted: r.inserted,
            new_tokens: r.new_tokens,
            pe_before: r.pe_before,
            pe_after: r.pe_after,
            pe_rebuilt: r.pe_rebuilt,
            queries: r.queries,
            mismatches: r.mismatches,
        });
    }
    let mismatched = rows.iter().any(|r| r.mismatches > 0);
    emit(OutputFormat::Csv, rows, None)?;
    if mismatched {
        return Err(Failure::Mismatch("post-insert answers differ from the full scan".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::Insert(a) => insert(a),
        Command::Updates(a) => updates(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
