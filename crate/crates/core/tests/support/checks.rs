//! Whole-property checks shared by the crate's integration tests and the
//! workspace acceptance run. Each check panics on the first violation and
//! otherwise returns a one-line summary of what it covered.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use climadash_core::agent::{answer, parse_utterance, AgentCommand, Bm25Params, NoMatchReason, RetrievalIndex};
use climadash_core::codegen::{generate_all, GenerationSelection, ModelHash};
use climadash_core::dashboard::{DashboardError, DashboardStore, Mutation, Rect, SourceRef, WidgetSpec};
use climadash_core::dsl::{load_model, parse_model, parse_model_bytes, print_model, validate_model, Comparator, Expr, KpiDef, KpiLocs, Model, Target};
use climadash_core::ingest::{Query, Reason, Store};
use climadash_core::kpi::{evaluate_kpi, KpiValue};
use climadash_core::time::{Duration, DurationUnit};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use super::{brute_bm25, close, oracle_groups, oracle_status, window_rows, Row};

/// The core crate's directory, wherever the calling test lives.
pub fn core_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    if here.join("tests/golden").is_dir() {
        here.to_path_buf()
    } else {
        here.join("../core")
    }
}

// ---------------------------------------------------------------- DSL ---

pub fn dsl_round_trip(models: usize) -> String {
    let mut rng = super::rng(0xD51);
    for i in 0..models {
        let src = super::random_model_source(&mut rng);
        let first = parse_model(&src).unwrap_or_else(|r| panic!("model {i} failed to parse:\n{src}\n{r}"));
        let report = validate_model(&first);
        assert!(report.is_empty(), "model {i} invalid:\n{src}\n{report}");
        let printed = print_model(&first);
        let second = parse_model(&printed).unwrap_or_else(|r| panic!("reprint {i} failed:\n{printed}\n{r}"));
        assert_eq!(first, second, "model {i}:\n{src}\n--- printed ---\n{printed}");
        assert_eq!(printed, print_model(&second), "printer is not idempotent for model {i}");
    }
    format!("{models} random models round-trip")
}

pub fn dsl_fuzz(inputs: usize) -> String {
    let mut rng = super::rng(0xF422);
    let seeds: Vec<String> = (0..20).map(|_| super::random_model_source(&mut rng)).collect();
    let mut rejected = 0;
    for _ in 0..inputs {
        let seed = &seeds[rng.gen_range(0..seeds.len())];
        let bytes = super::mutate_bytes(&mut rng, seed.as_bytes());
        match parse_model_bytes(&bytes) {
            Ok(model) => {
                // Valid or not, validation must also be total.
                let _ = validate_model(&model);
            }
            Err(report) => {
                rejected += 1;
                assert!(report.error_count() >= 1);
                assert!(report.diagnostics.iter().all(|d| d.line >= 1 && d.column >= 1));
            }
        }
    }
    format!("{inputs} mutated inputs without a crash ({rejected} rejected with diagnostics)")
}

// ------------------------------------------------------------ codegen ---

pub fn codegen_goldens() -> String {
    let root = core_dir();
    let text = std::fs::read_to_string(root.join("tests/data/air_quality.cbm")).unwrap();
    let model = load_model(&text).unwrap();
    let hash = ModelHash::of_source(&text);
    let first = generate_all(&model, &hash, GenerationSelection::all()).unwrap();
    let second = generate_all(&model, &hash, GenerationSelection::all()).unwrap();
    assert_eq!(first, second, "two runs differ");
    let paths: Vec<String> = first.iter().map(|a| a.path.display().to_string()).collect();
    assert_eq!(paths, ["gen/schema.sql", "gen/api.json", "gen/dashboard.default.json"]);
    for a in &first {
        let name = a.path.file_name().unwrap();
        let golden = std::fs::read(root.join("tests/golden").join(name)).unwrap();
        assert!(
            golden == a.content,
            "{} differs from its golden file:\n{}",
            a.path.display(),
            String::from_utf8_lossy(&a.content)
        );
    }
    format!("{} artifacts byte-identical across runs and to goldens", first.len())
}

// ---------------------------------------------------------------- KPI ---

pub fn kpi_def(expr: Expr, window: Option<Duration>, target: Option<Target>, group_by: Option<&str>) -> KpiDef {
    KpiDef {
        name: "k".into(),
        source: "air".into(),
        expr,
        window,
        unit: None,
        target,
        baseline: None,
        group_by: group_by.map(str::to_owned),
        locs: KpiLocs::default(),
    }
}

fn random_window(rng: &mut StdRng) -> Duration {
    let (max, unit) = match rng.gen_range(0..4) {
        0 => (100_000, DurationUnit::Minute),
        1 => (2_000, DurationUnit::Hour),
        2 => (70, DurationUnit::Day),
        _ => (10, DurationUnit::Week),
    };
    Duration::new(rng.gen_range(1..=max), unit).unwrap()
}

pub fn status_name(v: &KpiValue) -> String {
    serde_json::to_value(v.status).unwrap().as_str().unwrap().to_string()
}

pub fn readings_model() -> Arc<Model> {
    Arc::new(load_model(super::READINGS_MODEL).unwrap())
}

pub fn load_rows(rows: &[Row]) -> Store {
    let store = Store::in_memory(readings_model());
    let batch: Vec<_> = rows.iter().map(Row::to_json).collect();
    let result = store.ingest_batch("air", &batch).unwrap();
    assert_eq!(result.accepted, rows.len(), "{:?}", result.rejected);
    store
}

fn same_value(got: Option<f64>, want: Option<f64>) -> bool {
    match (got, want) {
        (Some(a), Some(b)) => close(a, b, 1e-9),
        (None, None) => true,
        _ => false,
    }
}

pub fn kpi_oracle(cases: usize) -> String {
    let mut rng = super::rng(0xC0FFEE);
    let mut grouped = 0;
    for case in 0..cases {
        let rows = super::random_rows(&mut rng, 200);
        let store = load_rows(&rows);
        let expr = super::random_expr(&mut rng, 3);
        let window = rng.gen_bool(0.8).then(|| random_window(&mut rng));
        let target = rng.gen_bool(0.5).then(|| Target {
            cmp: [Comparator::Le, Comparator::Ge, Comparator::Lt, Comparator::Gt, Comparator::Eq][rng.gen_range(0..5)],
            bound: f64::from(rng.gen_range(0..100)),
        });
        let group_by = rng.gen_bool(0.4).then_some("station");
        let at = super::T0 + rng.gen_range(-5i64..65) * 86_400_000 + rng.gen_range(0..86_400_000);
        let def = kpi_def(expr.clone(), window, target, group_by);
        let got = evaluate_kpi(&def, &store, Some(at));

        let from = window.map(|w| at - w.as_millis());
        let in_window = window_rows(&rows, from, at);
        let target_pair = target.map(|t| (t.cmp.symbol(), t.bound));
        let (want_value, want_status) = oracle_status(&expr, &in_window, target_pair);
        assert_eq!(got.records, in_window.len(), "case {case}: record count");
        assert_eq!(status_name(&got), want_status, "case {case}: {expr:?}");
        assert!(
            same_value(got.value, want_value),
            "case {case}: {:?} vs {:?} for {expr:?}",
            got.value,
            want_value
        );

        if group_by.is_some() {
            grouped += 1;
            let groups = got.groups.as_ref().expect("grouped result");
            let want = oracle_groups(&in_window);
            assert_eq!(groups.len(), want.len(), "case {case}: group keys");
            for (key, rows) in want {
                let g = &groups[&key];
                let (v, s) = oracle_status(&expr, &rows, target_pair);
                assert_eq!(serde_json::to_value(g.status).unwrap(), s, "case {case} group {key}");
                assert!(same_value(g.value, v), "case {case} group {key}");
            }
        } else {
            assert!(got.groups.is_none());
        }
    }
    format!("{cases} random datasets match the brute-force evaluator within 1e-9 ({grouped} grouped)")
}

pub fn kpi_partition(cases: usize) -> String {
    let mut rng = super::rng(0xAD1);
    for _ in 0..cases {
        let rows = super::random_rows(&mut rng, 200);
        let store = load_rows(&rows);
        let w = random_window(&mut rng);
        let double = Duration::new(w.magnitude() * 2, w.unit()).unwrap();
        let at = super::T0 + rng.gen_range(0i64..70) * 86_400_000;
        let count = |window: Duration, end: i64| {
            evaluate_kpi(&kpi_def(Expr::Count, Some(window), None, None), &store, Some(end))
                .value
                .unwrap()
        };
        let recent = count(w, at);
        let earlier = count(w, at - w.as_millis());
        assert_eq!(recent + earlier, count(double, at));

        let grouped = evaluate_kpi(&kpi_def(Expr::Count, Some(w), None, Some("station")), &store, Some(at));
        let sum: f64 = grouped.groups.unwrap().values().map(|g| g.value.unwrap()).sum();
        assert_eq!(sum, recent);
    }
    format!("adjacent windows partition counts exactly in {cases} cases")
}

// ---------------------------------------------------------- ingestion ---

/// A record plus the rejection reason the oracle expects, if any.
fn random_item(rng: &mut StdRng, row: &Row) -> (Json, Option<Reason>) {
    let mut obj = row.to_json();
    if rng.gen_bool(0.5) {
        obj["kind"] = json!(if rng.gen_bool(0.5) { "urban" } else { "rural" });
    }
    let broken = match rng.gen_range(0..10) {
        0 => {
            obj.as_object_mut().unwrap().remove("at");
            Some(Reason::Missing)
        }
        1 => {
            obj["pm25"] = json!("high");
            Some(Reason::TypeMismatch)
        }
        2 => {
            obj["colour"] = json!("red");
            Some(Reason::UnknownField)
        }
        3 => {
            obj["at"] = json!("yesterday-ish");
            Some(Reason::BadDatetime)
        }
        4 => {
            obj["kind"] = json!("suburban");
            Some(Reason::BadEnum)
        }
        _ => None,
    };
    (obj, broken)
}

pub fn csv_cell(v: Option<&Json>) -> String {
    match v {
        None => String::new(),
        Some(Json::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

fn snapshot(store: &Store, q: Query) -> Vec<Json> {
    store.query("air", q).unwrap().iter().map(|r| Json::Object(r.to_json())).collect()
}

pub fn ingest_conservation_replay(batches: usize, queries: usize) -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = super::rng(0x1A6E57);
    let (store, report) = Store::open(readings_model(), dir.path()).unwrap();
    assert_eq!(report.replayed, 0);

    let (mut submitted, mut expected_total) = (0, 0);
    for batch_no in 0..batches {
        let rows = super::random_rows(&mut rng, 60);
        let items: Vec<(Json, Option<Reason>)> = rows.iter().map(|r| random_item(&mut rng, r)).collect();
        let result = if batch_no % 3 == 0 {
            let mut text = String::from("station,at,pm25,n,kind\n");
            for (obj, _) in &items {
                let cells: Vec<String> = ["station", "at", "pm25", "n", "kind"]
                    .iter()
                    .map(|k| csv_cell(obj.get(*k)))
                    .collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            // Unknown-field corruption has no CSV column, so those rows are valid.
            let result = store.ingest_csv("air", &text).unwrap();
            let valid = items
                .iter()
                .filter(|(_, r)| r.is_none() || *r == Some(Reason::UnknownField))
                .count();
            assert_eq!(result.accepted, valid, "batch {batch_no}");
            result
        } else {
            let batch: Vec<Json> = items.iter().map(|(o, _)| o.clone()).collect();
            let result = store.ingest_batch("air", &batch).unwrap();
            let rejected: Vec<(usize, Reason)> = result.rejected.iter().map(|r| (r.index, r.reason)).collect();
            let want: Vec<(usize, Reason)> = items
                .iter()
                .enumerate()
                .filter_map(|(i, (_, r))| r.map(|r| (i, r)))
                .collect();
            assert_eq!(rejected, want, "batch {batch_no}");
            result
        };
        assert_eq!(result.accepted + result.rejected.len(), items.len(), "batch {batch_no}");
        submitted += items.len();
        expected_total += result.accepted;
    }
    assert_eq!(store.len("air").unwrap(), expected_total);

    let queries: Vec<Query> = (0..queries)
        .map(|_| {
            let a = super::T0 + rng.gen_range(-86_400_000i64..61 * 86_400_000);
            let b = a + rng.gen_range(0..20 * 86_400_000);
            Query {
                from: rng.gen_bool(0.8).then_some(a),
                to: rng.gen_bool(0.8).then_some(b),
                limit: rng.gen_bool(0.3).then(|| rng.gen_range(1..50)),
            }
        })
        .collect();
    let before: Vec<Vec<Json>> = queries.iter().map(|q| snapshot(&store, *q)).collect();
    drop(store);

    let (reopened, report) = Store::open(readings_model(), dir.path()).unwrap();
    assert_eq!(report.replayed, expected_total);
    assert!(report.skipped.is_empty());
    for (q, want) in queries.iter().zip(&before) {
        assert_eq!(&snapshot(&reopened, *q), want, "{q:?}");
    }
    format!(
        "{submitted} submitted = {expected_total} accepted + {} rejected; {} replayed queries identical",
        submitted - expected_total,
        queries.len()
    )
}

// ----------------------------------------------------------- geometry ---

const GEOMETRY_MODEL: &str = "entity r { at: datetime station: string v: float }\ndatasource air: r\n\
    kpi k { source: air expr: avg(v) window: 7d target: <= 3 }\nkpi n { source: air expr: count() }";

pub fn geometry_model() -> Model {
    load_model(GEOMETRY_MODEL).unwrap()
}

fn random_mutation(rng: &mut StdRng, ids: &[String]) -> Mutation {
    let picked = match ids.choose(rng) {
        Some(id) if rng.gen_bool(0.97) => id.clone(),
        _ => "missing".to_string(),
    };
    let widget = || picked.clone();
    let coord = |rng: &mut StdRng| rng.gen_range(0..14);
    let size = |rng: &mut StdRng| rng.gen_range(1..9);
    match rng.gen_range(0..6) {
        0 | 1 => {
            let source = ["datasource:air", "kpi:k", "kpi:n", "kpi:ghost"].choose(rng).unwrap();
            let placed = rng.gen_bool(0.5);
            let sized = rng.gen_bool(0.5);
            Mutation::AddWidget(WidgetSpec {
                x: placed.then(|| coord(rng)),
                y: placed.then(|| rng.gen_range(0..30)),
                w: sized.then(|| size(rng)),
                h: sized.then(|| size(rng)),
                ..WidgetSpec::for_source(source.parse::<SourceRef>().unwrap())
            })
        }
        2 => Mutation::RemoveWidget { widget: widget() },
        3 => Mutation::Move {
            widget: widget(),
            x: coord(rng),
            y: rng.gen_range(0..30),
        },
        4 => Mutation::Resize {
            widget: widget(),
            w: size(rng),
            h: size(rng),
        },
        _ => Mutation::Relayout {
            widget: widget(),
            layout: Rect::new(coord(rng), rng.gen_range(0..30), size(rng), size(rng)),
        },
    }
}

pub fn geometry_sequences(steps: usize) -> String {
    let model = geometry_model();
    let store = DashboardStore::in_memory();
    let id = store.create("fuzz").unwrap().id.clone();
    let mut rng = super::rng(0x6E0);
    let (mut accepted, mut rejected) = (0, 0);
    for step in 0..steps {
        let before = store.get(&id).unwrap();
        let ids: Vec<String> = before.widgets.iter().map(|w| w.id.clone()).collect();
        let mutation = random_mutation(&mut rng, &ids);
        // Occasionally send a stale version to exercise conflicts.
        let expected = if rng.gen_bool(0.05) { before.version - 1 } else { before.version };
        match store.mutate(&id, expected, &mutation, &model) {
            Ok(outcome) => {
                accepted += 1;
                assert_eq!(outcome.dashboard.version, before.version + 1, "step {step}");
                if let Some(v) = super::grid_violation(&outcome.dashboard) {
                    panic!("step {step}: {v} after {mutation:?}");
                }
            }
            Err(e) => {
                rejected += 1;
                if expected != before.version {
                    assert!(matches!(e, DashboardError::Conflict { .. }), "step {step}: {e}");
                }
                assert_eq!(*store.get(&id).unwrap(), *before, "step {step}: rejected mutation changed state");
            }
        }
        // Keep the board from filling up forever.
        if store.get(&id).unwrap().widgets.len() > 25 {
            let d = store.get(&id).unwrap();
            let victim = d.widgets[0].id.clone();
            store
                .mutate(&id, d.version, &Mutation::RemoveWidget { widget: victim }, &model)
                .unwrap();
        }
    }
    assert!(accepted > steps / 10 && rejected > steps / 10, "{accepted} accepted, {rejected} rejected");
    format!("{steps} steps: {accepted} accepted with consecutive versions, {rejected} rejected without change")
}

// -------------------------------------------------------------- agent ---

#[derive(Deserialize)]
pub struct CorpusCase {
    pub utterance: String,
    pub expect: AgentCommand,
}

#[derive(Deserialize)]
pub struct CorpusMiss {
    pub utterance: String,
    pub reason: NoMatchReason,
}

#[derive(Deserialize)]
pub struct AgentCorpus {
    pub sources: Vec<SourceRef>,
    pub widget_titles: Vec<String>,
    pub cases: Vec<CorpusCase>,
    pub no_match: Vec<CorpusMiss>,
}

pub fn agent_corpus() -> AgentCorpus {
    let path = core_dir().join("tests/data/agent_corpus.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const AGENT_MODEL: &str = r#"
entity reading { station: string at: datetime pm25: float unit "ug/m3" }
entity passage { road: string station: string at: datetime vehicles: int }
datasource air_quality: reading
datasource traffic_counts: passage
kpi avg_pm25 { source: air_quality expr: avg(pm25) window: 30d unit: "ug/m3" target: <= 10 }
kpi max_pm25 { source: air_quality expr: max(pm25) window: 1d }
kpi daily_traffic { source: traffic_counts expr: sum(vehicles) window: 1d }
"#;

pub fn agent_corpus_exact() -> String {
    let c = agent_corpus();
    assert!(c.cases.len() >= 30, "corpus has only {} cases", c.cases.len());
    assert!(c.no_match.len() >= 10, "corpus has only {} no-match cases", c.no_match.len());
    for case in &c.cases {
        let got = parse_utterance(&case.utterance, &c.sources, &c.widget_titles);
        assert_eq!(got.as_ref().ok(), Some(&case.expect), "{:?} gave {got:?}", case.utterance);
    }
    for miss in &c.no_match {
        match parse_utterance(&miss.utterance, &c.sources, &c.widget_titles) {
            Err(e) => assert_eq!(e.reason, miss.reason, "{:?}: {e}", miss.utterance),
            Ok(cmd) => panic!("{:?} unexpectedly parsed to {cmd:?}", miss.utterance),
        }
    }
    format!(
        "{}/{} utterances exact, {}/{} out-of-grammar give NoMatch",
        c.cases.len(),
        c.cases.len(),
        c.no_match.len(),
        c.no_match.len()
    )
}

// --------------------------------------------------------------- BM25 ---

pub fn bm25_index(texts: &[String]) -> RetrievalIndex {
    // One paragraph per document keeps passages aligned with `texts`.
    let docs: Vec<(String, &String)> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("doc{i:03}.md"), t))
        .collect();
    RetrievalIndex::from_documents(docs, Bm25Params::default())
}

pub fn bm25_hand_example() -> String {
    let texts: Vec<String> = ["urban heat island mitigation", "waste collection routes", "heat pump subsidies for buildings"]
        .map(String::from)
        .to_vec();
    let hits = answer("heat", &bm25_index(&texts), 3);
    let got: Vec<(&str, f64)> = hits.iter().map(|h| (h.passage.doc_id.as_str(), h.score)).collect();
    assert_eq!(got.len(), 2, "{got:?}");
    assert_eq!(got[0].0, "doc000.md");
    assert!((got[0].1 - 0.470).abs() < 1e-3, "{got:?}");
    assert_eq!(got[1].0, "doc002.md");
    assert!((got[1].1 - 0.426).abs() < 1e-3, "{got:?}");
    let brute = brute_bm25("heat", &texts, 1.2, 0.75);
    assert!((got[0].1 - brute[0]).abs() < 1e-6 && (got[1].1 - brute[2]).abs() < 1e-6);
    assert_eq!(brute[1], 0.0);
    format!("P1 = {:.4}, P3 = {:.4}", got[0].1, got[1].1)
}

pub fn bm25_brute_force(corpora: usize) -> String {
    let mut rng = super::rng(0xB425);
    let mut compared = 0;
    for corpus in 0..corpora {
        let texts = super::random_corpus(&mut rng, 50);
        let index = bm25_index(&texts);
        assert_eq!(index.len(), texts.len());
        for _ in 0..5 {
            let q = super::random_query(&mut rng);
            let brute = brute_bm25(&q, &texts, 1.2, 0.75);
            let hits = answer(&q, &index, texts.len());
            let positive = brute.iter().filter(|s| **s > 0.0).count();
            assert_eq!(hits.len(), positive, "corpus {corpus} query {q:?}");
            for h in &hits {
                let i: usize = h.passage.doc_id[3..6].parse().unwrap();
                assert!(close(h.score, brute[i], 1e-9), "corpus {corpus}: {} vs {}", h.score, brute[i]);
                compared += 1;
            }
            for pair in hits.windows(2) {
                let ordered = pair[0].score > pair[1].score
                    || (pair[0].score == pair[1].score && pair[0].passage.doc_id < pair[1].passage.doc_id);
                assert!(ordered, "corpus {corpus}: results out of order");
            }
            let k = rng.gen_range(1..5);
            let top = answer(&q, &index, k);
            assert_eq!(top.len(), positive.min(k));
            assert_eq!(top[..], hits[..top.len()]);
        }
    }
    format!("{corpora} random corpora, {compared} scores within 1e-9 of brute force")
}
