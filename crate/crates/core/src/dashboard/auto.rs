use serde::Serialize;

use crate::dsl::Model;

use super::{DashboardError, SourceRef, WidgetKind};

/// Field bindings chosen for a widget.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Bindings {
    /// Horizontal axis field (time) for line charts over datasources.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    /// Plotted numeric field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    /// Category field for bar charts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Gauge marker (target bound).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marker: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutoConfig {
    pub kind: WidgetKind,
    pub bindings: Bindings,
}

/// Picks a widget kind from the source's schema. First matching rule wins:
///
/// 1. KPI with a window and no target: line
/// 2. KPI with a target: gauge
/// 3. other KPIs: stat
/// 4. datasource with a datetime field and a numeric field: line
/// 5. datasource with a string/enum field and a numeric field: bar
/// 6. anything else: table
pub fn auto_configure(source: &SourceRef, model: &Model) -> Result<AutoConfig, DashboardError> {
    let unresolved = || DashboardError::UnknownSource(source.to_string());
    match source {
        SourceRef::Kpi(name) => {
            let kpi = model.kpi(name).ok_or_else(unresolved)?;
            Ok(match (kpi.window, kpi.target) {
                (Some(_), None) => AutoConfig {
                    kind: WidgetKind::Line,
                    bindings: Bindings {
                        y: Some(kpi.name.clone()),
                        ..Bindings::default()
                    },
                },
                (_, Some(target)) => AutoConfig {
                    kind: WidgetKind::Gauge,
                    bindings: Bindings {
                        marker: Some(target.bound),
                        ..Bindings::default()
                    },
                },
                (None, None) => AutoConfig {
                    kind: WidgetKind::Stat,
                    bindings: Bindings::default(),
                },
            })
        }
        SourceRef::Datasource(name) => {
            let entity = model.datasource_entity(name).ok_or_else(unresolved)?;
            let numeric = entity.numeric_fields().next().map(|f| f.name.clone());
            let time = entity.time_field().map(|f| f.name.clone());
            let category = entity.categorical_fields().next().map(|f| f.name.clone());
            Ok(match (time, category, numeric) {
                (Some(x), _, Some(y)) => AutoConfig {
                    kind: WidgetKind::Line,
                    bindings: Bindings {
                        x: Some(x),
                        y: Some(y),
                        ..Bindings::default()
                    },
                },
                (None, Some(category), Some(y)) => AutoConfig {
                    kind: WidgetKind::Bar,
                    bindings: Bindings {
                        y: Some(y),
                        category: Some(category),
                        ..Bindings::default()
                    },
                },
                _ => AutoConfig {
                    kind: WidgetKind::Table,
                    bindings: Bindings::default(),
                },
            })
        }
    }
}
