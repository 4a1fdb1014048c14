//! Versioned grid dashboards: widget auto-configuration, first-fit
//! placement, optimistic-concurrency mutations and widget data payloads.

mod auto;
mod data;
mod layout;
mod mutate;
mod store;

pub use auto::{auto_configure, AutoConfig, Bindings};
pub use data::{widget_data, Bar, Point, WidgetData};
pub use layout::{auto_place, check_layout, Rect, GRID_COLUMNS, MIN_SIZE};
pub use mutate::{apply_mutation, Mutation, WidgetSpec, DEFAULT_H, DEFAULT_W};
pub use store::{DashboardStore, DashboardSummary, MutationOutcome};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Model;
use crate::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub id: String,
    pub name: String,
    pub version: u64,
    pub widgets: Vec<Widget>,
    /// Counter for widget ids; never reused within a dashboard.
    #[serde(default)]
    pub next_widget: u64,
}

impl Dashboard {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            version: 1,
            widgets: Vec::new(),
            next_widget: 1,
        }
    }

    pub fn widget(&self, id: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.id == id)
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        self.widgets.iter().map(|w| w.layout)
    }

    pub(crate) fn fresh_widget_id(&mut self) -> String {
        let id = format!("{}-w{}", self.id, self.next_widget.max(1));
        self.next_widget = self.next_widget.max(1) + 1;
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub kind: WidgetKind,
    pub source: SourceRef,
    pub layout: Rect,
    pub config: WidgetConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidgetKind {
    Line,
    Bar,
    Gauge,
    Stat,
    Table,
}

impl WidgetKind {
    pub const ALL: [WidgetKind; 5] = [
        WidgetKind::Line,
        WidgetKind::Bar,
        WidgetKind::Gauge,
        WidgetKind::Stat,
        WidgetKind::Table,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WidgetKind::Line => "line",
            WidgetKind::Bar => "bar",
            WidgetKind::Gauge => "gauge",
            WidgetKind::Stat => "stat",
            WidgetKind::Table => "table",
        }
    }

    /// Human label used in confirmations ("line chart").
    pub fn label(self) -> &'static str {
        match self {
            WidgetKind::Line => "line chart",
            WidgetKind::Bar => "bar chart",
            WidgetKind::Gauge => "gauge",
            WidgetKind::Stat => "stat",
            WidgetKind::Table => "table",
        }
    }
}

impl FromStr for WidgetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown widget kind `{s}`"))
    }
}

/// What a widget visualizes: `datasource:<name>` or `kpi:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceRef {
    Datasource(String),
    Kpi(String),
}

impl SourceRef {
    pub fn name(&self) -> &str {
        match self {
            SourceRef::Datasource(n) | SourceRef::Kpi(n) => n,
        }
    }

    pub fn resolves(&self, model: &Model) -> bool {
        match self {
            SourceRef::Datasource(n) => model.datasource_entity(n).is_some(),
            SourceRef::Kpi(n) => model.kpi(n).is_some(),
        }
    }

    /// Every datasource and KPI of a model, datasources first.
    pub fn all(model: &Model) -> Vec<SourceRef> {
        model
            .datasources
            .iter()
            .map(|d| SourceRef::Datasource(d.name.clone()))
            .chain(model.kpis.iter().map(|k| SourceRef::Kpi(k.name.clone())))
            .collect()
    }
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRef::Datasource(n) => write!(f, "datasource:{n}"),
            SourceRef::Kpi(n) => write!(f, "kpi:{n}"),
        }
    }
}

impl FromStr for SourceRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("datasource", n)) if !n.is_empty() => Ok(SourceRef::Datasource(n.to_string())),
            Some(("kpi", n)) if !n.is_empty() => Ok(SourceRef::Kpi(n.to_string())),
            _ => Err(format!(
                "invalid source `{s}`; expected datasource:<name> or kpi:<name>"
            )),
        }
    }
}

impl Serialize for SourceRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SourceRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WidgetConfig {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_override: Option<Duration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by_override: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Orange,
    Yellow,
    Green,
    Teal,
    Blue,
    Purple,
    Pink,
    Gray,
    Black,
}

impl Color {
    pub const ALL: [Color; 10] = [
        Color::Red,
        Color::Orange,
        Color::Yellow,
        Color::Green,
        Color::Teal,
        Color::Blue,
        Color::Purple,
        Color::Pink,
        Color::Gray,
        Color::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Teal => "teal",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Pink => "pink",
            Color::Gray => "gray",
            Color::Black => "black",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "grey" => Some(Color::Gray),
            _ => Self::ALL.into_iter().find(|c| c.name() == s),
        }
    }
}

#[derive(Debug, Error)]
pub enum DashboardError {
    #[error("no dashboard `{0}`")]
    NotFound(String),
    #[error("dashboard `{0}` already exists")]
    AlreadyExists(String),
    #[error("version conflict: expected {expected}, current is {}", current.version)]
    Conflict {
        expected: u64,
        current: Box<Dashboard>,
    },
    #[error("no widget `{0}`")]
    UnknownWidget(String),
    #[error("{0}")]
    Geometry(String),
    #[error("source `{0}` does not exist in the model")]
    UnknownSource(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{op} {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
