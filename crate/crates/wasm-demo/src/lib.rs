//! WebAssembly bindings for the browser demo. Every export takes and returns
//! plain strings; results are JSON documents so the page needs no glue
//! beyond `JSON.parse`.

use std::sync::Arc;

use climadash_core::agent::{answer, apply_command, parse_utterance, Bm25Params, RetrievalIndex};
use climadash_core::codegen::{default_dashboard, generate_all, GenerationSelection, ModelHash};
use climadash_core::dashboard::{widget_data, Dashboard, DashboardStore, SourceRef};
use climadash_core::dsl::{load_model, parse_model, validate_model, Model};
use climadash_core::ingest::Store;
use serde_json::{json, Map, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn error(message: impl ToString) -> String {
    json!({ "status": "error", "error": message.to_string() }).to_string()
}

fn model_or_error(source: &str) -> Result<Model, String> {
    load_model(source).map_err(|report| format!("the model is invalid:\n{report}"))
}

/// Validates a model and, when it is valid, generates every artifact.
///
/// Returns `{valid, errors, diagnostics, model_sha256?, artifacts: [{path, content}]}`.
#[wasm_bindgen]
pub fn check_model(source: &str) -> String {
    let report = match parse_model(source) {
        Ok(model) => validate_model(&model),
        Err(report) => report,
    };
    let mut body = json!({
        "valid": report.is_empty(),
        "errors": report.error_count(),
        "diagnostics": report.diagnostics,
        "artifacts": [],
    });
    if let Ok(model) = load_model(source) {
        let hash = ModelHash::of_source(source);
        if let Ok(artifacts) = generate_all(&model, &hash, GenerationSelection::all()) {
            body["model_sha256"] = json!(hash.as_str());
            body["artifacts"] = artifacts
                .iter()
                .map(|a| {
                    json!({
                        "path": a.path.to_string_lossy(),
                        "content": String::from_utf8_lossy(&a.content),
                    })
                })
                .collect();
        }
    }
    body.to_string()
}

/// Applies one natural-language command to a dashboard held by the page.
///
/// `dashboard` is the JSON of the current dashboard, or empty for the
/// generated default. `readings` is CSV for the model's first datasource and
/// feeds value questions and widget previews; `at_ms` is the evaluation time.
///
/// Returns `{status: "applied", reply, dashboard, data}`,
/// `{status: "no_match", message, suggestions}` or `{status: "error", error}`.
#[wasm_bindgen]
pub fn agent_command(source: &str, dashboard: &str, readings: &str, utterance: &str, at_ms: f64) -> String {
    let model = match model_or_error(source) {
        Ok(model) => Arc::new(model),
        Err(e) => return error(e),
    };
    let current: Dashboard = if dashboard.trim().is_empty() {
        match default_dashboard(&model) {
            Ok(d) => d,
            Err(e) => return error(e),
        }
    } else {
        match serde_json::from_str(dashboard) {
            Ok(d) => d,
            Err(e) => return error(format!("bad dashboard JSON: {e}")),
        }
    };
    let store = Store::in_memory(model.clone());
    let mut rejected = 0;
    if let (Some(ds), false) = (model.datasources.first(), readings.trim().is_empty()) {
        match store.ingest_csv(&ds.name, readings) {
            Ok(result) => rejected = result.rejected.len(),
            Err(e) => return error(e),
        }
    }
    let id = current.id.clone();
    let titles: Vec<String> = current.widgets.iter().map(|w| w.config.title.clone()).collect();
    let dashboards = DashboardStore::in_memory();
    if let Err(e) = dashboards.insert(current) {
        return error(e);
    }

    let command = match parse_utterance(utterance, &SourceRef::all(&model), &titles) {
        Ok(command) => command,
        Err(no_match) => {
            return json!({
                "status": "no_match",
                "reason": no_match.reason,
                "message": no_match.message,
                "suggestions": no_match.suggestions,
            })
            .to_string()
        }
    };
    let at = at_ms as i64;
    match apply_command(&command, &dashboards, &id, &model, &store, Some(at)) {
        Ok(reply) => {
            let latest = dashboards.get(&id).expect("dashboard was inserted");
            let data: Map<String, Value> = latest
                .widgets
                .iter()
                .map(|w| {
                    let payload = widget_data(w, &model, &store, Some(at));
                    (w.id.clone(), serde_json::to_value(payload).unwrap_or(Value::Null))
                })
                .collect();
            json!({
                "status": "applied",
                "command": command,
                "reply": reply,
                "dashboard": *latest,
                "data": data,
                "rejected_readings": rejected,
            })
            .to_string()
        }
        Err(e) => error(e),
    }
}

/// Ranks passages of in-memory documents against a question.
///
/// `documents` is a JSON array of `[name, text]` pairs. Returns a JSON array
/// of scored passages, best first.
#[wasm_bindgen]
pub fn ask(documents: &str, question: &str, k: u32) -> String {
    let docs: Vec<(String, String)> = match serde_json::from_str(documents) {
        Ok(docs) => docs,
        Err(e) => return error(format!("bad documents JSON: {e}")),
    };
    if question.trim().is_empty() {
        return error("the question is empty");
    }
    let index = RetrievalIndex::from_documents(docs, Bm25Params::default());
    serde_json::to_string(&answer(question, &index, k as usize)).expect("serializable passages")
}
