//! Subcommands of the `climadash` binary. Exit codes: 0 success, 1 invalid
//! input (model, records, unknown names), 2 usage, 3 I/O.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use climadash_core::agent::{answer, apply_command, parse_utterance, AgentError, RetrievalIndex, Bm25Params};
use climadash_core::codegen::{generate_all, write_artifacts, CodegenError, GenerationSelection, ModelHash};
use climadash_core::dashboard::{DashboardError, SourceRef};
use climadash_core::dsl::{load_model, parse_model, validate_model, Model, ValidationReport};
use climadash_core::ingest::{IngestError, IngestResult, Store};
use climadash_core::kpi::evaluate_kpi;
use climadash_core::time::parse_rfc3339_ms;
use serde::Serialize;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::api::{self, AppState, OpenError};

#[derive(Debug, Parser)]
#[command(name = "climadash", version, about = "Model-driven city climate dashboards")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a model and print its diagnostics.
    Check { model: PathBuf },
    /// Generate the SQL schema, API description and default dashboard.
    Generate {
        model: PathBuf,
        /// Comma-separated subset of schema,api,dashboard.
        #[arg(long)]
        only: Option<GenerationSelection>,
        /// Directory that receives `gen/`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        model: PathBuf,
        #[arg(long, env = "CLIMADASH_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, env = "CLIMADASH_DATA", default_value = "data")]
        data: PathBuf,
        /// Directory of .txt/.md documents for question answering.
        #[arg(long, env = "CLIMADASH_CORPUS")]
        corpus: Option<PathBuf>,
        /// Serve files from this directory at `/` instead of the built-in page.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Ingest a CSV or JSON file into a datasource.
    Ingest {
        model: PathBuf,
        datasource: String,
        file: PathBuf,
        #[arg(long, env = "CLIMADASH_DATA", default_value = "data")]
        data: PathBuf,
    },
    /// Evaluate a KPI and print it as JSON.
    Kpi {
        model: PathBuf,
        name: String,
        /// Window end as RFC 3339 (default: now).
        #[arg(long)]
        at: Option<String>,
        #[arg(long, env = "CLIMADASH_DATA", default_value = "data")]
        data: PathBuf,
    },
    /// Print the corpus passages that best answer a question.
    Ask {
        question: String,
        #[arg(long, env = "CLIMADASH_CORPUS")]
        corpus: Option<PathBuf>,
        /// Use an index written by `climadash index` instead of a corpus.
        #[arg(long, conflicts_with = "corpus")]
        index: Option<PathBuf>,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
    },
    /// Build a retrieval index for a corpus and save it.
    Index {
        #[arg(long, env = "CLIMADASH_CORPUS")]
        corpus: PathBuf,
        #[arg(long, default_value = "climadash-index.json")]
        out: PathBuf,
    },
    /// Apply a natural-language command to a stored dashboard.
    Agent {
        model: PathBuf,
        dashboard: String,
        utterance: String,
        #[arg(long, env = "CLIMADASH_DATA", default_value = "data")]
        data: PathBuf,
        /// Evaluation time for value questions, RFC 3339 (default: now).
        #[arg(long)]
        at: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("invalid model\n{0}")]
    Model(ValidationReport),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Model(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<DashboardError> for CliError {
    fn from(e: DashboardError) -> Self {
        match e {
            DashboardError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CodegenError> for CliError {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::Io { .. } => CliError::Io(e.to_string()),
            CodegenError::Dashboard(e) => e.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<OpenError> for CliError {
    fn from(e: OpenError) -> Self {
        match e {
            OpenError::Ingest(e) => e.into(),
            OpenError::Dashboard(e) => e.into(),
            OpenError::Codegen(e) => e.into(),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Dashboard(e) => e.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(json, &e);
            e.exit_code()
        }
    }
}

fn report_error(json: bool, e: &CliError) {
    if json {
        let mut body = json!({ "error": e.to_string(), "exit_code": e.exit_code() });
        if let CliError::Model(report) = e {
            body["error"] = json!("invalid model");
            body["diagnostics"] = serde_json::to_value(&report.diagnostics).unwrap_or(Json::Null);
        }
        println!("{body}");
    } else {
        eprintln!("error: {e}");
    }
}

/// Prints `value` as JSON in JSON mode, otherwise the text rendering.
fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
    } else {
        println!("{}", text());
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))
}

fn load(path: &Path) -> CliResult<(Model, String)> {
    let text = read(path)?;
    let model = load_model(&text).map_err(CliError::Model)?;
    Ok((model, text))
}

fn parse_at(raw: Option<&str>) -> CliResult<Option<i64>> {
    raw.map(|s| {
        parse_rfc3339_ms(s)
            .or_else(|| s.parse().ok())
            .ok_or_else(|| CliError::Usage(format!("--at: `{s}` is not an RFC 3339 time")))
    })
    .transpose()
}

fn build_index(corpus: &Path) -> CliResult<RetrievalIndex> {
    let index = RetrievalIndex::build(corpus).map_err(|e| CliError::Io(e.to_string()))?;
    for skipped in index.skipped() {
        log::warn!("skipped {}: {}", skipped.path, skipped.error);
    }
    Ok(index)
}

fn execute(cli: Cli) -> CliResult<i32> {
    let json = cli.json;
    match cli.command {
        Command::Check { model } => check(json, &model),
        Command::Generate { model, only, out } => generate(json, &model, only, &out).map(|_| 0),
        Command::Serve {
            model,
            addr,
            data,
            corpus,
            static_dir,
        } => serve(json, &model, &addr, &data, corpus.as_deref(), static_dir).map(|_| 0),
        Command::Ingest {
            model,
            datasource,
            file,
            data,
        } => ingest(json, &model, &datasource, &file, &data).map(|_| 0),
        Command::Kpi { model, name, at, data } => kpi(&model, &name, at.as_deref(), &data).map(|_| 0),
        Command::Ask {
            question,
            corpus,
            index,
            k,
        } => ask(json, &question, corpus.as_deref(), index.as_deref(), k).map(|_| 0),
        Command::Index { corpus, out } => index(json, &corpus, &out).map(|_| 0),
        Command::Agent {
            model,
            dashboard,
            utterance,
            data,
            at,
        } => agent(json, &model, &dashboard, &utterance, &data, at.as_deref()),
    }
}

fn check(json: bool, path: &Path) -> CliResult<i32> {
    let text = read(path)?;
    let report = match parse_model(&text) {
        Ok(model) => validate_model(&model),
        Err(report) => report,
    };
    let valid = report.is_empty();
    let body = json!({
        "valid": valid,
        "errors": report.error_count(),
        "warnings": report.warning_count(),
        "diagnostics": report.diagnostics,
    });
    emit(json, &body, || report.to_string());
    Ok(if valid { 0 } else { 1 })
}

fn generate(json: bool, path: &Path, only: Option<GenerationSelection>, out: &Path) -> CliResult {
    let (model, text) = load(path)?;
    let hash = ModelHash::of_source(&text);
    let artifacts = generate_all(&model, &hash, only.unwrap_or_else(GenerationSelection::all))?;
    let manifest = write_artifacts(out, &artifacts)?;
    let body = json!({ "model_sha256": hash.as_str(), "artifacts": manifest });
    emit(json, &body, || {
        let mut lines: Vec<String> = manifest
            .iter()
            .map(|e| {
                let status = serde_json::to_value(e.status).ok();
                let status = status.as_ref().and_then(Json::as_str).unwrap_or("written");
                format!("{status:<9} {} ({} bytes)", out.join(&e.path).display(), e.bytes)
            })
            .collect();
        lines.push(format!("model sha256:{hash}"));
        lines.join("\n")
    });
    Ok(())
}

fn serve(
    json: bool,
    path: &Path,
    addr: &str,
    data: &Path,
    corpus: Option<&Path>,
    static_dir: Option<PathBuf>,
) -> CliResult {
    let (model, _) = load(path)?;
    let index = match corpus {
        Some(dir) => build_index(dir)?,
        None => RetrievalIndex::from_passages(Vec::new(), Bm25Params::default()),
    };
    let (state, report) = AppState::open(Arc::new(model), data, index)?;
    log::info!(
        "replayed {} records ({} unreadable lines skipped)",
        report.replayed,
        report.skipped.len()
    );
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        let url = format!("http://{local}");
        emit(json, &json!({ "listening": url }), || format!("listening on {url}"));
        let _ = std::io::stdout().flush();
        api::serve(listener, Arc::new(state), static_dir)
            .await
            .map_err(|e| CliError::Io(format!("serve: {e}")))
    })
}

/// JSON array, single object, or one object per line.
fn parse_json_records(text: &str) -> Result<Vec<Json>, String> {
    match serde_json::from_str::<Json>(text) {
        Ok(Json::Array(items)) => Ok(items),
        Ok(one @ Json::Object(_)) => Ok(vec![one]),
        Ok(_) => Err("expected an array of records".into()),
        Err(whole) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Json>, _>>()
            .map_err(|_| whole.to_string()),
    }
}

fn ingest(json: bool, path: &Path, datasource: &str, file: &Path, data: &Path) -> CliResult {
    let (model, _) = load(path)?;
    let (store, _) = Store::open(Arc::new(model), data)?;
    store.entity(datasource)?;
    let text = read(file)?;
    let is_csv = file
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let result = if is_csv {
        store.ingest_csv(datasource, &text)?
    } else {
        let records = parse_json_records(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", file.display())))?;
        store.ingest_batch(datasource, &records)?
    };
    emit(json, &result, || describe_ingest(&result));
    Ok(())
}

fn describe_ingest(result: &IngestResult) -> String {
    let mut out = format!("accepted {}, rejected {}", result.accepted, result.rejected.len());
    for r in &result.rejected {
        let field = if r.field.is_empty() { "record" } else { r.field.as_str() };
        out.push_str(&format!("\n  #{}: {field}: {}", r.index, r.reason.code()));
    }
    out
}

fn kpi(path: &Path, name: &str, at: Option<&str>, data: &Path) -> CliResult {
    let at = parse_at(at)?;
    let (model, _) = load(path)?;
    let model = Arc::new(model);
    let def = model
        .kpi(name)
        .ok_or_else(|| CliError::Invalid(format!("no KPI `{name}`")))?
        .clone();
    let (store, _) = Store::open(model, data)?;
    let value = evaluate_kpi(&def, &store, at);
    println!("{}", serde_json::to_string_pretty(&value).expect("serializable KPI value"));
    Ok(())
}

fn ask(json: bool, question: &str, corpus: Option<&Path>, index: Option<&Path>, k: usize) -> CliResult {
    if question.trim().is_empty() {
        return Err(CliError::Usage("the question is empty".into()));
    }
    let index = match (index, corpus) {
        (Some(file), _) => RetrievalIndex::load(file).map_err(|e| CliError::Io(e.to_string()))?,
        (None, Some(dir)) => build_index(dir)?,
        (None, None) => return Err(CliError::Usage("give --corpus, --index or CLIMADASH_CORPUS".into())),
    };
    let hits = answer(question, &index, k);
    emit(json, &hits, || {
        if hits.is_empty() {
            return "no matching passages".into();
        }
        hits.iter()
            .enumerate()
            .map(|(i, h)| {
                format!(
                    "{}. {}#{} (score {:.3})\n   {}",
                    i + 1,
                    h.passage.doc_id,
                    h.passage.ordinal,
                    h.score,
                    h.passage.text.replace('\n', "\n   ")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    });
    Ok(())
}

fn index(json: bool, corpus: &Path, out: &Path) -> CliResult {
    let index = build_index(corpus)?;
    index.save(out).map_err(|e| CliError::Io(e.to_string()))?;
    let body = json!({
        "passages": index.len(),
        "out": out.display().to_string(),
        "skipped": index.skipped(),
    });
    emit(json, &body, || {
        format!("indexed {} passages from {} into {}", index.len(), corpus.display(), out.display())
    });
    Ok(())
}

fn agent(json: bool, path: &Path, dashboard: &str, utterance: &str, data: &Path, at: Option<&str>) -> CliResult<i32> {
    let at = parse_at(at)?;
    let (model, _) = load(path)?;
    let empty = RetrievalIndex::from_passages(Vec::new(), Bm25Params::default());
    let (state, _) = AppState::open(Arc::new(model), data, empty)?;
    let current = state
        .dashboards
        .get(dashboard)
        .ok_or_else(|| CliError::Invalid(format!("no dashboard `{dashboard}`")))?;
    let titles: Vec<String> = current.widgets.iter().map(|w| w.config.title.clone()).collect();
    let command = match parse_utterance(utterance, &SourceRef::all(&state.model), &titles) {
        Ok(command) => command,
        Err(no_match) => {
            emit(json, &no_match, || {
                let mut text = format!("sorry, {}", no_match.message);
                for s in &no_match.suggestions {
                    text.push_str(&format!("\n  try: {s}"));
                }
                text
            });
            return Ok(1);
        }
    };
    let reply = apply_command(&command, &state.dashboards, dashboard, &state.model, &state.store, at)?;
    emit(json, &json!({ "command": command, "reply": reply }), || reply.message.clone());
    Ok(0)
}
