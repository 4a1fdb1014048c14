use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value as Json};

use crate::dsl::Model;
use crate::ingest::{Query, Record, Store};
use crate::kpi::{evaluate_kpi_with, EvalOverrides, KpiValue};
use crate::time::now_ms;

use super::{SourceRef, Widget, WidgetKind};

/// Rows shown by table widgets.
pub const TABLE_ROWS: usize = 100;
/// Consecutive windows plotted by KPI line charts.
pub const KPI_SERIES_POINTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub t: i64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bar {
    pub label: String,
    pub value: Option<f64>,
}

/// Payload rendered by a widget. Problems are reported in-band, never as
/// transport errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WidgetData {
    Series {
        label: String,
        points: Vec<Point>,
    },
    Kpi {
        value: KpiValue,
    },
    Bars {
        category: String,
        bars: Vec<Bar>,
    },
    Table {
        columns: Vec<String>,
        rows: Vec<Map<String, Json>>,
    },
    Latest {
        label: String,
        value: Option<f64>,
        t: Option<i64>,
    },
    Error {
        message: String,
    },
}

/// Computes what a widget displays at time `at` (wall clock if `None`).
pub fn widget_data(widget: &Widget, model: &Model, store: &Store, at: Option<i64>) -> WidgetData {
    let end = at.unwrap_or_else(now_ms);
    match &widget.source {
        SourceRef::Kpi(name) => match model.kpi(name) {
            Some(kpi) => kpi_data(widget, kpi, store, end),
            None => WidgetData::Error {
                message: format!("KPI `{name}` no longer exists"),
            },
        },
        SourceRef::Datasource(name) => match model.datasource_entity(name) {
            Some(entity) => datasource_data(widget, name, entity, store, end),
            None => WidgetData::Error {
                message: format!("datasource `{name}` no longer exists"),
            },
        },
    }
}

fn kpi_data(widget: &Widget, kpi: &crate::dsl::KpiDef, store: &Store, end: i64) -> WidgetData {
    let overrides = EvalOverrides {
        window: widget.config.window_override,
        group_by: widget.config.group_by_override.as_deref(),
    };
    match widget.kind {
        WidgetKind::Gauge | WidgetKind::Stat => WidgetData::Kpi {
            value: evaluate_kpi_with(kpi, store, Some(end), &overrides),
        },
        WidgetKind::Line => {
            let window = overrides.window.or(kpi.window);
            let ends: Vec<i64> = match window {
                Some(w) => (0..KPI_SERIES_POINTS as i64)
                    .rev()
                    .map(|i| end.saturating_sub(i.saturating_mul(w.as_millis())))
                    .collect(),
                None => vec![end],
            };
            let ungrouped = EvalOverrides {
                window,
                group_by: None,
            };
            WidgetData::Series {
                label: kpi.name.clone(),
                points: ends
                    .into_iter()
                    .map(|t| Point {
                        t,
                        value: evaluate_kpi_with(kpi, store, Some(t), &ungrouped).value,
                    })
                    .collect(),
            }
        }
        WidgetKind::Bar | WidgetKind::Table => {
            let v = evaluate_kpi_with(kpi, store, Some(end), &overrides);
            let bars: Vec<Bar> = match &v.groups {
                Some(groups) => groups
                    .iter()
                    .map(|(label, g)| Bar {
                        label: label.clone(),
                        value: g.value,
                    })
                    .collect(),
                None => vec![Bar {
                    label: kpi.name.clone(),
                    value: v.value,
                }],
            };
            if widget.kind == WidgetKind::Bar {
                WidgetData::Bars {
                    category: overrides
                        .group_by
                        .or(kpi.group_by.as_deref())
                        .unwrap_or(&kpi.name)
                        .to_string(),
                    bars,
                }
            } else {
                WidgetData::Table {
                    columns: vec!["group".into(), "value".into()],
                    rows: bars
                        .into_iter()
                        .map(|b| {
                            let mut row = Map::new();
                            row.insert("group".into(), Json::from(b.label));
                            row.insert("value".into(), b.value.map_or(Json::Null, Json::from));
                            row
                        })
                        .collect(),
                }
            }
        }
    }
}

fn datasource_data(
    widget: &Widget,
    name: &str,
    entity: &crate::dsl::Entity,
    store: &Store,
    end: i64,
) -> WidgetData {
    let query = match widget.config.window_override {
        Some(w) => Query::window(end.saturating_sub(w.as_millis()), end),
        None => Query {
            to: Some(end),
            ..Query::default()
        },
    };
    let query = if widget.kind == WidgetKind::Table {
        Query {
            limit: Some(TABLE_ROWS),
            ..query
        }
    } else {
        query
    };
    let records = match store.query(name, query) {
        Ok(r) => r,
        Err(e) => {
            return WidgetData::Error {
                message: e.to_string(),
            }
        }
    };
    let numeric = entity.numeric_fields().next().map(|f| f.name.as_str());
    let value_of = |r: &Record| numeric.and_then(|f| r.get(f)).and_then(|v| v.as_f64());

    match widget.kind {
        WidgetKind::Table => WidgetData::Table {
            columns: entity.fields.iter().map(|f| f.name.clone()).collect(),
            rows: records.iter().map(Record::to_json).collect(),
        },
        WidgetKind::Line => WidgetData::Series {
            label: numeric.unwrap_or(name).to_string(),
            points: records
                .iter()
                .enumerate()
                .map(|(i, r)| Point {
                    t: r.t.unwrap_or(i as i64),
                    value: value_of(r),
                })
                .collect(),
        },
        WidgetKind::Bar => {
            let category = widget
                .config
                .group_by_override
                .as_deref()
                .or_else(|| entity.categorical_fields().next().map(|f| f.name.as_str()));
            let Some(category) = category else {
                return WidgetData::Error {
                    message: format!("datasource `{name}` has no string or enum field to group by"),
                };
            };
            // Average of the first numeric field per category, or a count.
            let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for r in &records {
                let label = r
                    .get(category)
                    .and_then(|v| v.as_category())
                    .unwrap_or_default()
                    .to_string();
                let slot = acc.entry(label).or_insert((0.0, 0));
                match numeric {
                    Some(_) => {
                        if let Some(v) = value_of(r) {
                            slot.0 += v;
                            slot.1 += 1;
                        }
                    }
                    None => slot.0 += 1.0,
                }
            }
            WidgetData::Bars {
                category: category.to_string(),
                bars: acc
                    .into_iter()
                    .map(|(label, (sum, n))| Bar {
                        label,
                        value: match numeric {
                            Some(_) if n == 0 => None,
                            Some(_) => Some(sum / n as f64),
                            None => Some(sum),
                        },
                    })
                    .collect(),
            }
        }
        WidgetKind::Gauge | WidgetKind::Stat => {
            let last = records.iter().rev().find_map(|r| Some((r.t, value_of(r)?)));
            WidgetData::Latest {
                label: numeric.unwrap_or(name).to_string(),
                value: last.map(|(_, v)| v),
                t: last.and_then(|(t, _)| t),
            }
        }
    }
}
