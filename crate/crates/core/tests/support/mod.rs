//! Random generators and brute-force oracles shared by the integration
//! tests. Oracles deliberately avoid the library's own helpers: they
//! recompute everything from raw inputs with naive loops.
#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, HashSet};

use climadash_core::dashboard::{Dashboard, GRID_COLUMNS, MIN_SIZE};
use climadash_core::dsl::{AggFn, BinOp, Expr};
use climadash_core::time::format_rfc3339_ms;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value as Json};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Relative comparison with a tiny absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// ---------------------------------------------------------------- DSL ---

const WORDS: [&str; 12] = [
    "air", "pm25", "station", "heat", "flow", "count", "zone", "level", "temp", "rain", "co2", "grid",
];

fn ident(rng: &mut StdRng, used: &mut HashSet<String>) -> String {
    loop {
        let mut name = WORDS.choose(rng).unwrap().to_string();
        if rng.gen_bool(0.6) {
            name.push('_');
            name.push_str(WORDS.choose(rng).unwrap());
        }
        if rng.gen_bool(0.3) {
            name.push_str(&rng.gen_range(0..100).to_string());
        }
        // Avoid keywords that are reserved in expression position.
        if ["count", "sum", "avg", "min", "max", "first", "last"].contains(&name.as_str()) {
            continue;
        }
        if used.insert(name.clone()) {
            return name;
        }
    }
}

fn sep(rng: &mut StdRng) -> &'static str {
    ["\n", " ", "\n\n  ", " ; ", ";\n", "\t", " # note\n"].choose(rng).unwrap()
}

fn ws(rng: &mut StdRng) -> &'static str {
    ["\n", " ", "\n\n  ", "\t", " # note\n"].choose(rng).unwrap()
}

fn number(rng: &mut StdRng) -> String {
    if rng.gen_bool(0.5) {
        rng.gen_range(0..1000).to_string()
    } else {
        format!("{}.{}", rng.gen_range(0..1000), rng.gen_range(0..100))
    }
}

struct GenEntity {
    name: String,
    numeric: Vec<String>,
    categorical: Vec<String>,
    has_time: bool,
}

fn gen_expr(rng: &mut StdRng, numeric: &[String], depth: u32) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return match rng.gen_range(0..4) {
            0 => number(rng),
            1 => "count()".to_string(),
            _ if !numeric.is_empty() => {
                let f = ["sum", "avg", "min", "max", "first", "last"].choose(rng).unwrap();
                format!("{f}({})", numeric.choose(rng).unwrap())
            }
            _ => "count( )".to_string(),
        };
    }
    let op = ["+", "-", "*", "/"].choose(rng).unwrap();
    let l = gen_expr(rng, numeric, depth - 1);
    let r = gen_expr(rng, numeric, depth - 1);
    if rng.gen_bool(0.4) {
        format!("({l} {op} {r})")
    } else {
        format!("{l}{op}{r}")
    }
}

/// Source text of a random *valid* model, with varied layout, comments and
/// separators.
pub fn random_model_source(rng: &mut StdRng) -> String {
    let mut out = String::new();
    let mut names = HashSet::new();
    let mut entities = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let name = ident(rng, &mut names);
        let mut fields = HashSet::new();
        let mut e = GenEntity {
            name: name.clone(),
            numeric: vec![],
            categorical: vec![],
            has_time: false,
        };
        out.push_str(&format!("entity {name} {{{}", ws(rng)));
        for _ in 0..rng.gen_range(1..6) {
            let f = ident(rng, &mut fields);
            let ty = match rng.gen_range(0..6) {
                0 => {
                    e.categorical.push(f.clone());
                    "string".to_string()
                }
                1 => {
                    e.numeric.push(f.clone());
                    "int".to_string()
                }
                2 => {
                    e.numeric.push(f.clone());
                    "float".to_string()
                }
                3 => "bool".to_string(),
                4 => {
                    e.has_time = true;
                    "datetime".to_string()
                }
                _ => {
                    e.categorical.push(f.clone());
                    let mut vals = HashSet::new();
                    let vs: Vec<String> = (0..rng.gen_range(1..4)).map(|_| ident(rng, &mut vals)).collect();
                    format!("enum({})", vs.join(", "))
                }
            };
            out.push_str(&format!("{f}: {ty}"));
            if rng.gen_bool(0.3) {
                out.push_str(&format!(" unit \"u\\\"{}\\\\\"", rng.gen_range(0..9)));
            }
            if rng.gen_bool(0.3) {
                out.push_str(" optional");
            }
            out.push_str(sep(rng));
        }
        out.push_str("}\n");
        entities.push(e);
    }
    let mut ds_names = HashSet::new();
    let mut datasources: Vec<(String, usize)> = Vec::new();
    if !entities.is_empty() {
        for _ in 0..rng.gen_range(0..4) {
            let name = ident(rng, &mut ds_names);
            let ei = rng.gen_range(0..entities.len());
            out.push_str(&format!("datasource {name}: {}{}", entities[ei].name, sep(rng)));
            datasources.push((name, ei));
        }
    }
    let mut kpi_names = HashSet::new();
    if !datasources.is_empty() {
        for _ in 0..rng.gen_range(0..4) {
            let name = ident(rng, &mut kpi_names);
            let (ds, ei) = datasources.choose(rng).unwrap();
            let e = &entities[*ei];
            let mut attrs = vec![
                format!("source: {ds}"),
                format!("expr: {}", gen_expr(rng, &e.numeric, 3)),
            ];
            if e.has_time && rng.gen_bool(0.6) {
                let unit = ["m", "h", "d", "w"].choose(rng).unwrap();
                attrs.push(format!("window: {}{unit}", rng.gen_range(1..400)));
            }
            if rng.gen_bool(0.4) {
                attrs.push("unit: \"t/yr\"".to_string());
            }
            if rng.gen_bool(0.5) {
                let cmp = ["<=", ">=", "<", ">", "=="].choose(rng).unwrap();
                let neg = if rng.gen_bool(0.2) { "-" } else { "" };
                attrs.push(format!("target: {cmp} {neg}{}", number(rng)));
            }
            if rng.gen_bool(0.3) {
                attrs.push(format!("baseline: {}", number(rng)));
            }
            if !e.categorical.is_empty() && rng.gen_bool(0.4) {
                attrs.push(format!("group_by: {}", e.categorical.choose(rng).unwrap()));
            }
            attrs.shuffle(rng);
            out.push_str(&format!("kpi {name} {{{}", ws(rng)));
            for a in attrs {
                out.push_str(&a);
                out.push_str(sep(rng));
            }
            out.push_str("}\n");
        }
    }
    out
}

/// Byte-level mutation of a seed text: flips, inserts, deletes, splices.
pub fn mutate_bytes(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    const INTERESTING: &[&[u8]] = &[
        b"{", b"}", b"(", b")", b":", b"\"", b"#", b"\\", b"entity", b"kpi", b"expr", b"9999999999999999999999",
        b"-", b"<=", b"\xff", b"\xe2\x82", b"\n", b"0d", b"/",
    ];
    let mut out = seed.to_vec();
    for _ in 0..rng.gen_range(1..8) {
        let pos = if out.is_empty() { 0 } else { rng.gen_range(0..=out.len()) };
        match rng.gen_range(0..5) {
            0 if !out.is_empty() => {
                let i = rng.gen_range(0..out.len());
                out[i] = rng.gen();
            }
            1 => {
                let piece = INTERESTING.choose(rng).unwrap();
                out.splice(pos..pos, piece.iter().copied());
            }
            2 if !out.is_empty() => {
                let end = (pos + rng.gen_range(1..10)).min(out.len());
                let start = pos.min(end);
                out.drain(start..end);
            }
            3 if !out.is_empty() => {
                let a = rng.gen_range(0..out.len());
                let b = (a + rng.gen_range(1..20)).min(out.len());
                let chunk: Vec<u8> = out[a..b].to_vec();
                out.splice(pos..pos, chunk);
            }
            _ => out.truncate(pos),
        }
    }
    out
}

// ---------------------------------------------------------------- KPI ---

/// Model used by KPI and ingestion oracles. `pm25` and `n` are optional so
/// aggregates can see missing values.
pub const READINGS_MODEL: &str = r#"
entity reading {
  station: string optional
  at: datetime
  pm25: float optional
  n: int optional
  kind: enum(urban, rural) optional
}
datasource air: reading
"#;

pub const STATIONS: [&str; 3] = ["s1", "s2", "s3"];

#[derive(Debug, Clone)]
pub struct Row {
    pub station: Option<String>,
    pub t: i64,
    pub pm25: Option<f64>,
    pub n: Option<i64>,
}

impl Row {
    pub fn to_json(&self) -> Json {
        let mut obj = json!({"at": format_rfc3339_ms(self.t)});
        if let Some(s) = &self.station {
            obj["station"] = json!(s);
        }
        if let Some(v) = self.pm25 {
            obj["pm25"] = json!(v);
        }
        if let Some(v) = self.n {
            obj["n"] = json!(v);
        }
        obj
    }

    fn field(&self, name: &str) -> Option<f64> {
        match name {
            "pm25" => self.pm25,
            "n" => self.n.map(|v| v as f64),
            _ => None,
        }
    }
}

/// Base instant of generated data: 2024-06-01T00:00:00Z.
pub const T0: i64 = 1_717_200_000_000;

pub fn random_rows(rng: &mut StdRng, max: usize) -> Vec<Row> {
    let span = 60 * 86_400_000i64;
    // A few shared timestamps exercise arrival-order tie-breaking.
    let shared: Vec<i64> = (0..3).map(|_| T0 + rng.gen_range(0..span)).collect();
    (0..rng.gen_range(0..=max))
        .map(|_| Row {
            station: rng.gen_bool(0.9).then(|| STATIONS.choose(rng).unwrap().to_string()),
            t: if rng.gen_bool(0.15) {
                *shared.choose(rng).unwrap()
            } else {
                // Millisecond resolution, as stored.
                T0 + rng.gen_range(0..span)
            },
            pm25: rng.gen_bool(0.85).then(|| f64::from(rng.gen_range(-500..15000)) / 100.0),
            n: rng.gen_bool(0.8).then(|| rng.gen_range(0..100)),
        })
        .collect()
}

pub fn random_expr(rng: &mut StdRng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.35) {
        return match rng.gen_range(0..6) {
            0 => Expr::number(f64::from(rng.gen_range(0..20))),
            1 => Expr::Count,
            _ => {
                let f = *AggFn::ALL.choose(rng).unwrap();
                Expr::agg(f, if rng.gen_bool(0.6) { "pm25" } else { "n" })
            }
        };
    }
    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div].choose(rng).unwrap();
    Expr::binary(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Value(f64),
    NoData,
    Error,
}

fn any_empty_aggregate(expr: &Expr, rows: &[&Row]) -> bool {
    match expr {
        Expr::Number { .. } | Expr::Count => false,
        Expr::Agg { field, .. } => rows.iter().all(|r| r.field(field).is_none()),
        Expr::Binary { lhs, rhs, .. } => any_empty_aggregate(lhs, rows) || any_empty_aggregate(rhs, rows),
    }
}

fn eval_values(expr: &Expr, rows: &[&Row]) -> Result<f64, ()> {
    match expr {
        Expr::Number { value } => Ok(*value),
        Expr::Count => Ok(rows.len() as f64),
        Expr::Agg { func, field, .. } => {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.field(field)).collect();
            Ok(match func {
                AggFn::Sum => {
                    let mut s = 0.0;
                    for v in &vals {
                        s += v;
                    }
                    s
                }
                AggFn::Avg => {
                    let mut s = 0.0;
                    for v in &vals {
                        s += v;
                    }
                    s / vals.len() as f64
                }
                AggFn::Min => {
                    let mut m = f64::INFINITY;
                    for v in &vals {
                        if *v < m {
                            m = *v;
                        }
                    }
                    m
                }
                AggFn::Max => {
                    let mut m = f64::NEG_INFINITY;
                    for v in &vals {
                        if *v > m {
                            m = *v;
                        }
                    }
                    m
                }
                AggFn::First => vals[0],
                AggFn::Last => vals[vals.len() - 1],
            })
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_values(lhs, rows)?;
            let b = eval_values(rhs, rows)?;
            let v = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(());
                    }
                    a / b
                }
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(())
            }
        }
    }
}

/// Naive evaluation. `rows` must already be in time order with arrival
/// order breaking ties (see [`window_rows`]).
pub fn oracle_expr(expr: &Expr, rows: &[&Row]) -> Oracle {
    if any_empty_aggregate(expr, rows) {
        return Oracle::NoData;
    }
    match eval_values(expr, rows) {
        Ok(v) => Oracle::Value(v),
        Err(()) => Oracle::Error,
    }
}

/// Rows with `from < t <= to` (`from = None` means unbounded), stably
/// sorted by time.
pub fn window_rows(rows: &[Row], from: Option<i64>, to: i64) -> Vec<&Row> {
    let mut picked: Vec<(usize, &Row)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let after = match from {
            Some(f) => r.t > f,
            None => true,
        };
        if after && r.t <= to {
            picked.push((i, r));
        }
    }
    // Insertion sort keeps equal timestamps in arrival order.
    for i in 1..picked.len() {
        let mut j = i;
        while j > 0 && picked[j - 1].1.t > picked[j].1.t {
            picked.swap(j - 1, j);
            j -= 1;
        }
    }
    picked.into_iter().map(|(_, r)| r).collect()
}

/// Expected `(value, status)` for one record set, status as its wire name.
pub fn oracle_status(expr: &Expr, rows: &[&Row], target: Option<(&str, f64)>) -> (Option<f64>, &'static str) {
    let result = oracle_expr(expr, rows);
    if rows.is_empty() {
        return (
            match result {
                Oracle::Value(v) => Some(v),
                _ => None,
            },
            "no_data",
        );
    }
    match result {
        Oracle::Value(v) => {
            let status = match target {
                None => "ok",
                Some((cmp, bound)) => {
                    let holds = match cmp {
                        "<=" => v <= bound,
                        ">=" => v >= bound,
                        "<" => v < bound,
                        ">" => v > bound,
                        _ => v == bound,
                    };
                    if holds {
                        "on_track"
                    } else {
                        "off_track"
                    }
                }
            };
            (Some(v), status)
        }
        Oracle::NoData | Oracle::Error => (None, "error"),
    }
}

/// Rows partitioned by station, missing stations under "".
pub fn oracle_groups<'a>(rows: &[&'a Row]) -> BTreeMap<String, Vec<&'a Row>> {
    let mut out: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        out.entry(r.station.clone().unwrap_or_default()).or_default().push(r);
    }
    out
}

// --------------------------------------------------------------- BM25 ---

fn naive_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Scores of every passage for `query`, straight from the formula.
pub fn brute_bm25(query: &str, passages: &[String], k1: f64, b: f64) -> Vec<f64> {
    let docs: Vec<Vec<String>> = passages.iter().map(|p| naive_tokens(p)).collect();
    let n = docs.len() as f64;
    let mut total = 0.0;
    for d in &docs {
        total += d.len() as f64;
    }
    let avgdl = total / n;
    let mut terms: Vec<String> = Vec::new();
    for t in naive_tokens(query) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    docs.iter()
        .map(|d| {
            let mut score = 0.0;
            for t in &terms {
                let f = d.iter().filter(|x| *x == t).count() as f64;
                if f == 0.0 {
                    continue;
                }
                let nt = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let idf = (1.0 + (n - nt + 0.5) / (nt + 0.5)).ln();
                score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
            }
            score
        })
        .collect()
}

const VOCAB: [&str; 16] = [
    "heat", "island", "urban", "tree", "canopy", "flood", "rain", "bike", "lane", "solar", "roof",
    "waste", "bus", "park", "energy", "water",
];

pub fn random_corpus(rng: &mut StdRng, max_passages: usize) -> Vec<String> {
    (0..rng.gen_range(1..=max_passages))
        .map(|_| {
            (0..rng.gen_range(1..30))
                .map(|_| *VOCAB.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng) -> String {
    let mut words: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.2) {
        words.push("unknownterm");
    }
    words.join(" ")
}

// ----------------------------------------------------------- geometry ---

/// Cell-by-cell check that widgets fit the grid and never share a cell.
pub fn grid_violation(d: &Dashboard) -> Option<String> {
    let mut cells = HashSet::new();
    for w in &d.widgets {
        let r = w.layout;
        if r.w < MIN_SIZE || r.h < MIN_SIZE {
            return Some(format!("{} is smaller than the minimum", w.id));
        }
        if u64::from(r.x) + u64::from(r.w) > u64::from(GRID_COLUMNS) {
            return Some(format!("{} leaves the grid", w.id));
        }
        for x in r.x..r.x + r.w {
            for y in r.y..r.y + r.h {
                if !cells.insert((x, y)) {
                    return Some(format!("cell ({x}, {y}) is covered twice"));
                }
            }
        }
    }
    None
}
