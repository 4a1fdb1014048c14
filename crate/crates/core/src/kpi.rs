//! Windowed KPI evaluation and status/progress against targets.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{AggFn, BinOp, Expr, KpiDef, Target};
use crate::ingest::{Query, Record, Store};
use crate::time::{now_ms, Duration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("result is not a finite number")]
    NonFinite,
}

/// Result of evaluating an expression: a number, no data, or an error.
/// No-data wins over errors when both occur in one expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExprValue {
    Value(f64),
    NoData,
    Error(EvalError),
}

impl ExprValue {
    pub fn value(self) -> Option<f64> {
        match self {
            ExprValue::Value(v) => Some(v),
            _ => None,
        }
    }
}

fn aggregate(func: AggFn, field: &str, records: &[Record]) -> ExprValue {
    let mut values = records
        .iter()
        .filter_map(|r| Some((r.t, r.get(field)?.as_f64()?)));
    let Some(first) = values.next() else {
        return ExprValue::NoData;
    };
    let (mut sum, mut count) = (first.1, 1usize);
    let (mut min, mut max) = (first.1, first.1);
    let (mut earliest, mut latest) = (first, first);
    for (t, v) in values {
        sum += v;
        count += 1;
        min = min.min(v);
        max = max.max(v);
        // Strict for first, inclusive for last: arrival order breaks ties.
        if t < earliest.0 {
            earliest = (t, v);
        }
        if t >= latest.0 {
            latest = (t, v);
        }
    }
    ExprValue::Value(match func {
        AggFn::Sum => sum,
        AggFn::Avg => sum / count as f64,
        AggFn::Min => min,
        AggFn::Max => max,
        AggFn::First => earliest.1,
        AggFn::Last => latest.1,
    })
}

/// Evaluates an expression over records of one datasource, in IEEE double
/// precision. Aggregates skip records where the field is absent; an
/// aggregate with no inputs is no-data (`count()` is 0 instead).
pub fn evaluate_expr(expr: &Expr, records: &[Record]) -> ExprValue {
    match expr {
        Expr::Number { value } => ExprValue::Value(*value),
        Expr::Count => ExprValue::Value(records.len() as f64),
        Expr::Agg { func, field, .. } => aggregate(*func, field, records),
        Expr::Binary { op, lhs, rhs } => {
            let l = evaluate_expr(lhs, records);
            let r = evaluate_expr(rhs, records);
            match (l, r) {
                (ExprValue::NoData, _) | (_, ExprValue::NoData) => ExprValue::NoData,
                (ExprValue::Error(e), _) | (_, ExprValue::Error(e)) => ExprValue::Error(e),
                (ExprValue::Value(a), ExprValue::Value(b)) => {
                    let v = match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div if b == 0.0 => {
                            return ExprValue::Error(EvalError::DivisionByZero)
                        }
                        BinOp::Div => a / b,
                    };
                    if v.is_finite() {
                        ExprValue::Value(v)
                    } else {
                        ExprValue::Error(EvalError::NonFinite)
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    NoData,
    Ok,
    OnTrack,
    OffTrack,
    Error,
}

impl Status {
    pub fn describe(self) -> &'static str {
        match self {
            Status::NoData => "no data",
            Status::Ok => "ok",
            Status::OnTrack => "on track",
            Status::OffTrack => "off track",
            Status::Error => "error",
        }
    }
}

/// `ok` without a target; otherwise `on_track` iff `value cmp bound` holds.
pub fn kpi_status(value: f64, target: Option<&Target>) -> Status {
    match target {
        None => Status::Ok,
        Some(t) if t.holds(value) => Status::OnTrack,
        Some(_) => Status::OffTrack,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("progress is undefined when baseline equals the target bound")]
pub struct UndefinedProgress;

/// Fraction of the way from `baseline` to `target_bound`, clamped to [0, 1].
/// Works for both reduction and increase targets.
pub fn progress(current: f64, baseline: f64, target_bound: f64) -> Result<f64, UndefinedProgress> {
    if baseline == target_bound {
        return Err(UndefinedProgress);
    }
    Ok(((baseline - current) / (baseline - target_bound)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupValue {
    pub value: Option<f64>,
    pub status: Status,
}

/// An evaluated KPI. `value` is `None` when there is no data or evaluation
/// failed; `message` explains error statuses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiValue {
    pub kpi: String,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub window_end: i64,
    pub window: Option<Duration>,
    pub status: Status,
    pub records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, GroupValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Value and status for one record set.
fn assess(kpi: &KpiDef, records: &[Record]) -> (Option<f64>, Status, Option<String>) {
    let result = evaluate_expr(&kpi.expr, records);
    if records.is_empty() {
        return (result.value(), Status::NoData, None);
    }
    match result {
        ExprValue::Value(v) => (Some(v), kpi_status(v, kpi.target.as_ref()), None),
        ExprValue::NoData => (
            None,
            Status::Error,
            Some("aggregated fields have no values in this window".to_string()),
        ),
        ExprValue::Error(e) => (None, Status::Error, Some(e.to_string())),
    }
}

/// Options that widgets may override per evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalOverrides<'a> {
    pub window: Option<Duration>,
    pub group_by: Option<&'a str>,
}

/// Evaluates a KPI over `(end - window, end]` where `end` is `at` or the
/// wall clock. KPIs without a window use every record up to `end`.
pub fn evaluate_kpi(kpi: &KpiDef, store: &Store, at: Option<i64>) -> KpiValue {
    evaluate_kpi_with(kpi, store, at, &EvalOverrides::default())
}

pub fn evaluate_kpi_with(
    kpi: &KpiDef,
    store: &Store,
    at: Option<i64>,
    overrides: &EvalOverrides<'_>,
) -> KpiValue {
    let end = at.unwrap_or_else(now_ms);
    let window = overrides.window.or(kpi.window);
    let query = match window {
        Some(w) => Query::window(end.saturating_sub(w.as_millis()), end),
        None => Query {
            to: Some(end),
            ..Query::default()
        },
    };
    let mut out = KpiValue {
        kpi: kpi.name.clone(),
        value: None,
        unit: kpi.unit.clone(),
        window_end: end,
        window,
        status: Status::Error,
        records: 0,
        target: kpi.target,
        progress: None,
        groups: None,
        message: None,
    };
    let records = match store.query(&kpi.source, query) {
        Ok(r) => r,
        Err(e) => {
            out.message = Some(e.to_string());
            return out;
        }
    };
    let (value, status, message) = assess(kpi, &records);
    out.value = value;
    out.status = status;
    out.message = message;
    out.records = records.len();
    if let (Some(v), Some(baseline), Some(target)) = (value, kpi.baseline, kpi.target) {
        if status != Status::NoData {
            out.progress = progress(v, baseline, target.bound).ok();
        }
    }

    if let Some(group_field) = overrides.group_by.or(kpi.group_by.as_deref()) {
        let mut partitions: BTreeMap<String, Vec<Record>> = BTreeMap::new();
        for r in records {
            let key = r
                .get(group_field)
                .and_then(|v| v.as_category())
                .unwrap_or_default()
                .to_string();
            partitions.entry(key).or_default().push(r);
        }
        out.groups = Some(
            partitions
                .into_iter()
                .map(|(key, recs)| {
                    let (value, status, _) = assess(kpi, &recs);
                    (key, GroupValue { value, status })
                })
                .collect(),
        );
    }
    out
}
