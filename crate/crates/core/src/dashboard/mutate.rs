use serde::{Deserialize, Serialize};

use crate::dsl::Model;
use crate::time::Duration;

use super::{
    auto_configure, auto_place, check_layout, Color, Dashboard, DashboardError, Rect, SourceRef,
    Widget, WidgetConfig, WidgetKind,
};

pub const DEFAULT_W: u32 = 6;
pub const DEFAULT_H: u32 = 4;

/// Request to add a widget. Missing kind is auto-configured; missing
/// position is auto-placed; missing size defaults to 6x4.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WidgetSpec {
    pub source: Option<SourceRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<WidgetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_override: Option<Duration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by_override: Option<String>,
}

impl WidgetSpec {
    pub fn for_source(source: SourceRef) -> Self {
        Self {
            source: Some(source),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AddWidget(WidgetSpec),
    RemoveWidget { widget: String },
    Move { widget: String, x: u32, y: u32 },
    Resize { widget: String, w: u32, h: u32 },
    /// Move and resize in one step.
    Relayout { widget: String, layout: Rect },
    Retitle { widget: String, title: String },
    Recolor { widget: String, color: Option<Color> },
    RenameDashboard { name: String },
    /// Replaces name and widgets wholesale (PUT).
    Replace { name: String, widgets: Vec<Widget> },
}

fn widget_index(d: &Dashboard, id: &str) -> Result<usize, DashboardError> {
    d.widgets
        .iter()
        .position(|w| w.id == id)
        .ok_or_else(|| DashboardError::UnknownWidget(id.to_string()))
}

fn check_group_by(
    model: &Model,
    source: &SourceRef,
    group_by: Option<&str>,
) -> Result<(), DashboardError> {
    let Some(group) = group_by else {
        return Ok(());
    };
    let entity = match source {
        SourceRef::Datasource(n) => model.datasource_entity(n),
        SourceRef::Kpi(n) => model
            .kpi(n)
            .and_then(|k| model.datasource_entity(&k.source)),
    };
    match entity.and_then(|e| e.field(group)) {
        Some(f) if f.kind.is_categorical() => Ok(()),
        _ => Err(DashboardError::Invalid(format!(
            "cannot group `{source}` by `{group}`: not a string or enum field"
        ))),
    }
}

/// Applies one mutation to a copy of `dashboard`, bumping its version.
/// Returns the new dashboard and, for `add_widget`, the new widget id.
pub fn apply_mutation(
    dashboard: &Dashboard,
    mutation: &Mutation,
    model: &Model,
) -> Result<(Dashboard, Option<String>), DashboardError> {
    let mut d = dashboard.clone();
    let mut added = None;
    match mutation {
        Mutation::AddWidget(spec) => {
            let source = spec
                .source
                .clone()
                .ok_or_else(|| DashboardError::Invalid("widget source is required".into()))?;
            let auto = auto_configure(&source, model)?;
            check_group_by(model, &source, spec.group_by_override.as_deref())?;
            let w = spec.w.unwrap_or(DEFAULT_W);
            let h = spec.h.unwrap_or(DEFAULT_H);
            let (x, y) = match (spec.x, spec.y) {
                (Some(x), Some(y)) => (x, y),
                (None, None) => {
                    Rect::new(0, 0, w, h).check_bounds()?;
                    let existing: Vec<Rect> = d.rects().collect();
                    auto_place(&existing, w, h)
                }
                _ => {
                    return Err(DashboardError::Invalid(
                        "give both x and y, or neither for automatic placement".into(),
                    ))
                }
            };
            let id = d.fresh_widget_id();
            d.widgets.push(Widget {
                id: id.clone(),
                kind: spec.kind.unwrap_or(auto.kind),
                layout: Rect::new(x, y, w, h),
                config: WidgetConfig {
                    title: spec
                        .title
                        .clone()
                        .unwrap_or_else(|| source.name().to_string()),
                    color: spec.color,
                    window_override: spec.window_override,
                    group_by_override: spec.group_by_override.clone(),
                },
                source,
            });
            added = Some(id);
        }
        Mutation::RemoveWidget { widget } => {
            let i = widget_index(&d, widget)?;
            d.widgets.remove(i);
        }
        Mutation::Move { widget, x, y } => {
            let i = widget_index(&d, widget)?;
            d.widgets[i].layout.x = *x;
            d.widgets[i].layout.y = *y;
        }
        Mutation::Resize { widget, w, h } => {
            let i = widget_index(&d, widget)?;
            d.widgets[i].layout.w = *w;
            d.widgets[i].layout.h = *h;
        }
        Mutation::Relayout { widget, layout } => {
            let i = widget_index(&d, widget)?;
            d.widgets[i].layout = *layout;
        }
        Mutation::Retitle { widget, title } => {
            let i = widget_index(&d, widget)?;
            d.widgets[i].config.title = title.clone();
        }
        Mutation::Recolor { widget, color } => {
            let i = widget_index(&d, widget)?;
            d.widgets[i].config.color = *color;
        }
        Mutation::RenameDashboard { name } => {
            if name.trim().is_empty() {
                return Err(DashboardError::Invalid("dashboard name is empty".into()));
            }
            d.name = name.clone();
        }
        Mutation::Replace { name, widgets } => {
            if name.trim().is_empty() {
                return Err(DashboardError::Invalid("dashboard name is empty".into()));
            }
            d.name = name.clone();
            d.widgets.clear();
            let own_prefix = format!("{}-w", d.id);
            for mut w in widgets.iter().cloned() {
                if !w.source.resolves(model) {
                    return Err(DashboardError::UnknownSource(w.source.to_string()));
                }
                check_group_by(model, &w.source, w.config.group_by_override.as_deref())?;
                let owned = w
                    .id
                    .strip_prefix(&own_prefix)
                    .and_then(|n| n.parse::<u64>().ok());
                match owned {
                    Some(n) if d.widget(&w.id).is_none() => {
                        d.next_widget = d.next_widget.max(n + 1);
                    }
                    _ => w.id = String::new(),
                }
                d.widgets.push(w);
            }
            for i in 0..d.widgets.len() {
                if d.widgets[i].id.is_empty() {
                    d.widgets[i].id = d.fresh_widget_id();
                }
            }
        }
    }
    check_layout(d.widgets.iter().map(|w| &w.layout))?;
    d.version = dashboard.version + 1;
    Ok((d, added))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load_model;

    fn model() -> Model {
        load_model(
            "entity reading { station: string measured_at: datetime pm25: float }\n\
             datasource air_quality: reading\n\
             kpi avg_pm25 { source: air_quality expr: avg(pm25) window: 30d target: <= 10 }",
        )
        .unwrap()
    }

    fn add(d: &Dashboard, source: &str) -> Dashboard {
        let m = Mutation::AddWidget(WidgetSpec::for_source(source.parse().unwrap()));
        apply_mutation(d, &m, &model()).unwrap().0
    }

    #[test]
    fn add_widget_auto_configures_and_places() {
        let d = Dashboard::new("d1", "test");
        let (d2, id) = apply_mutation(
            &d,
            &Mutation::AddWidget(WidgetSpec::for_source("kpi:avg_pm25".parse().unwrap())),
            &model(),
        )
        .unwrap();
        assert_eq!(d2.version, 2);
        assert_eq!(id.as_deref(), Some("d1-w1"));
        let w = &d2.widgets[0];
        assert_eq!(w.kind, WidgetKind::Gauge);
        assert_eq!(w.layout, Rect::new(0, 0, 6, 4));
        assert_eq!(w.config.title, "avg_pm25");
        let d3 = add(&d2, "datasource:air_quality");
        assert_eq!(d3.widgets[1].layout, Rect::new(6, 0, 6, 4));
        assert_eq!(d3.widgets[1].kind, WidgetKind::Line);
    }

    #[test]
    fn move_onto_occupied_is_rejected() {
        let d = add(&add(&Dashboard::new("d", "t"), "kpi:avg_pm25"), "kpi:avg_pm25");
        let err = apply_mutation(
            &d,
            &Mutation::Move {
                widget: "d-w2".into(),
                x: 2,
                y: 1,
            },
            &model(),
        )
        .unwrap_err();
        assert!(matches!(err, DashboardError::Geometry(_)));
    }

    #[test]
    fn resize_out_of_grid_and_unknown_widget() {
        let d = add(&Dashboard::new("d", "t"), "kpi:avg_pm25");
        let m = Mutation::Resize {
            widget: "d-w1".into(),
            w: 13,
            h: 4,
        };
        assert!(matches!(
            apply_mutation(&d, &m, &model()),
            Err(DashboardError::Geometry(_))
        ));
        let m = Mutation::Retitle {
            widget: "nope".into(),
            title: "x".into(),
        };
        assert!(matches!(
            apply_mutation(&d, &m, &model()),
            Err(DashboardError::UnknownWidget(_))
        ));
    }

    #[test]
    fn widget_ids_are_not_reused() {
        let d = add(&Dashboard::new("d", "t"), "kpi:avg_pm25");
        let (d, _) = apply_mutation(
            &d,
            &Mutation::RemoveWidget {
                widget: "d-w1".into(),
            },
            &model(),
        )
        .unwrap();
        let d = add(&d, "kpi:avg_pm25");
        assert_eq!(d.widgets[0].id, "d-w2");
    }

    #[test]
    fn bad_group_override() {
        let mut spec = WidgetSpec::for_source("kpi:avg_pm25".parse().unwrap());
        spec.group_by_override = Some("pm25".into());
        assert!(matches!(
            apply_mutation(&Dashboard::new("d", "t"), &Mutation::AddWidget(spec), &model()),
            Err(DashboardError::Invalid(_))
        ));
    }

    #[test]
    fn replace_reassigns_foreign_ids() {
        let d = add(&Dashboard::new("d", "t"), "kpi:avg_pm25");
        let mut foreign = d.widgets[0].clone();
        foreign.id = "other-w1".into();
        foreign.layout = Rect::new(0, 4, 6, 4);
        let widgets = vec![d.widgets[0].clone(), foreign];
        let (d2, _) = apply_mutation(
            &d,
            &Mutation::Replace {
                name: "renamed".into(),
                widgets,
            },
            &model(),
        )
        .unwrap();
        let ids: Vec<_> = d2.widgets.iter().map(|w| w.id.as_str()).collect();
        assert_eq!(ids, vec!["d-w1", "d-w2"]);
        assert_eq!(d2.name, "renamed");
    }
}
