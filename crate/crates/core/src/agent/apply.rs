//! Executes parsed commands against a dashboard store and phrases the
//! result for the user.

use serde::Serialize;
use thiserror::Error;

use super::{AgentCommand, Intent, WidgetRef};
use crate::dashboard::{
    Dashboard, DashboardError, DashboardStore, Mutation, SourceRef, Widget, WidgetSpec,
};
use crate::dsl::Model;
use crate::ingest::Store;
use crate::kpi::{evaluate_kpi_with, EvalOverrides, KpiValue, Status};

/// How often a command is re-planned when another editor wins the race
/// between reading and writing the dashboard.
const CONFLICT_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no widget {0}")]
    NoWidget(u32),
    #[error("no widget titled \"{0}\"")]
    NoWidgetTitled(String),
    #[error("there is no KPI called `{0}`")]
    UnknownKpi(String),
    #[error("`{kpi}` cannot be grouped by `{field}`")]
    BadGroup { kpi: String, field: String },
    #[error("the command is missing its {0}")]
    Incomplete(&'static str),
    #[error(transparent)]
    Dashboard(#[from] DashboardError),
}

/// Outcome of one command: the confirmation text plus whatever changed.
#[derive(Debug, Clone, Serialize)]
pub struct AgentReply {
    pub intent: Intent,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dashboard: Option<Dashboard>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widget_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<KpiValue>,
}

fn slot<T: Clone>(value: &Option<T>, name: &'static str) -> Result<T, AgentError> {
    value.clone().ok_or(AgentError::Incomplete(name))
}

fn resolve<'a>(d: &'a Dashboard, r: &WidgetRef) -> Result<&'a Widget, AgentError> {
    match r {
        WidgetRef::Index(n) => (*n as usize)
            .checked_sub(1)
            .and_then(|i| d.widgets.get(i))
            .ok_or(AgentError::NoWidget(*n)),
        WidgetRef::Title(t) => {
            let wanted = t.to_lowercase();
            d.widgets
                .iter()
                .find(|w| w.config.title.to_lowercase() == wanted)
                .ok_or_else(|| AgentError::NoWidgetTitled(t.clone()))
        }
    }
}

/// The dashboard mutation a command stands for; `None` for `show_value`,
/// which only reads.
pub fn command_mutation(cmd: &AgentCommand, d: &Dashboard) -> Result<Option<Mutation>, AgentError> {
    let target = || -> Result<String, AgentError> {
        Ok(resolve(d, &slot(&cmd.widget_ref, "widget")?)?.id.clone())
    };
    let mutation = match cmd.intent {
        Intent::ShowValue => return Ok(None),
        Intent::AddWidget => Mutation::AddWidget(WidgetSpec {
            kind: cmd.kind,
            title: cmd.title.clone(),
            color: cmd.color,
            window_override: cmd.window,
            group_by_override: cmd.group_by.clone(),
            ..WidgetSpec::for_source(slot(&cmd.source, "source")?)
        }),
        Intent::RemoveWidget => Mutation::RemoveWidget { widget: target()? },
        Intent::Move => Mutation::Move {
            widget: target()?,
            x: slot(&cmd.x, "column")?,
            y: slot(&cmd.y, "row")?,
        },
        Intent::Resize => Mutation::Resize {
            widget: target()?,
            w: slot(&cmd.w, "width")?,
            h: slot(&cmd.h, "height")?,
        },
        Intent::Retitle => Mutation::Retitle {
            widget: target()?,
            title: slot(&cmd.title, "title")?,
        },
        Intent::Recolor => Mutation::Recolor {
            widget: target()?,
            color: Some(slot(&cmd.color, "color")?),
        },
    };
    Ok(Some(mutation))
}

fn confirmation(cmd: &AgentCommand, before: &Dashboard, after: &Dashboard, added: Option<&str>) -> String {
    let old = cmd
        .widget_ref
        .as_ref()
        .and_then(|r| resolve(before, r).ok());
    let now = |w: &Widget| after.widget(&w.id).cloned();
    match (cmd.intent, old) {
        (Intent::AddWidget, _) => match added.and_then(|id| after.widget(id)) {
            Some(w) => format!(
                "added {} \"{}\" at ({}, {})",
                w.kind.label(),
                w.config.title,
                w.layout.x,
                w.layout.y
            ),
            None => "added widget".to_string(),
        },
        (Intent::RemoveWidget, Some(w)) => {
            format!("removed {} \"{}\"", w.kind.label(), w.config.title)
        }
        (Intent::Move, Some(w)) => match now(w) {
            Some(n) => format!("moved \"{}\" to ({}, {})", n.config.title, n.layout.x, n.layout.y),
            None => "moved widget".to_string(),
        },
        (Intent::Resize, Some(w)) => match now(w) {
            Some(n) => format!("resized \"{}\" to {}x{}", n.config.title, n.layout.w, n.layout.h),
            None => "resized widget".to_string(),
        },
        (Intent::Retitle, Some(w)) => format!(
            "renamed \"{}\" to \"{}\"",
            w.config.title,
            cmd.title.as_deref().unwrap_or_default()
        ),
        (Intent::Recolor, Some(w)) => format!(
            "colored \"{}\" {}",
            w.config.title,
            cmd.color.map(|c| c.name()).unwrap_or("default")
        ),
        _ => "done".to_string(),
    }
}

fn format_number(v: f64) -> String {
    let text = format!("{v:.2}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if v != 0.0 && (text == "0" || text == "-0") {
        return format!("{v:.2e}");
    }
    text.to_string()
}

/// Verbalizes a KPI value: "avg_pm25 is 9.8 ug/m3, on track".
pub fn describe_value(v: &KpiValue) -> String {
    let amount = |x: f64| match &v.unit {
        Some(unit) => format!("{} {unit}", format_number(x)),
        None => format_number(x),
    };
    let mut text = match (v.status, v.value) {
        (Status::NoData, _) => match v.window {
            Some(w) if w.magnitude() == 1 => format!("{}: no data in the last {}", v.kpi, w.unit().noun()),
            Some(w) => format!("{}: no data in the last {}", v.kpi, w.describe()),
            None => format!("{}: no data yet", v.kpi),
        },
        (Status::Error, _) | (_, None) => format!(
            "{} could not be computed: {}",
            v.kpi,
            v.message.as_deref().unwrap_or("unknown error")
        ),
        (Status::Ok, Some(x)) => format!("{} is {}", v.kpi, amount(x)),
        (status, Some(x)) => format!("{} is {}, {}", v.kpi, amount(x), status.describe()),
    };
    if let Some(groups) = &v.groups {
        let parts: Vec<String> = groups
            .iter()
            .map(|(key, g)| {
                let key = if key.is_empty() { "(none)" } else { key };
                match g.value {
                    Some(x) => format!("{key} {}", format_number(x)),
                    None => format!("{key} {}", g.status.describe()),
                }
            })
            .collect();
        if !parts.is_empty() {
            text.push_str(&format!(" ({})", parts.join(", ")));
        }
    }
    text
}

fn show_value(
    cmd: &AgentCommand,
    model: &Model,
    store: &Store,
    at: Option<i64>,
) -> Result<AgentReply, AgentError> {
    let name = match slot(&cmd.source, "source")? {
        SourceRef::Kpi(n) => n,
        SourceRef::Datasource(n) => return Err(AgentError::UnknownKpi(n)),
    };
    let kpi = model.kpi(&name).ok_or_else(|| AgentError::UnknownKpi(name.clone()))?;
    if let Some(field) = &cmd.group_by {
        let categorical = model
            .datasource_entity(&kpi.source)
            .and_then(|e| e.field(field))
            .is_some_and(|f| f.kind.is_categorical());
        if !categorical {
            return Err(AgentError::BadGroup {
                kpi: name,
                field: field.clone(),
            });
        }
    }
    let overrides = EvalOverrides {
        window: cmd.window,
        group_by: cmd.group_by.as_deref(),
    };
    let value = evaluate_kpi_with(kpi, store, at, &overrides);
    Ok(AgentReply {
        intent: cmd.intent,
        message: describe_value(&value),
        dashboard: None,
        widget_id: None,
        value: Some(value),
    })
}

/// Runs a command against dashboard `dashboard_id`. Reads (`show_value`)
/// evaluate at `at`, or now when `None`.
pub fn apply_command(
    cmd: &AgentCommand,
    dashboards: &DashboardStore,
    dashboard_id: &str,
    model: &Model,
    store: &Store,
    at: Option<i64>,
) -> Result<AgentReply, AgentError> {
    if cmd.intent == Intent::ShowValue {
        return show_value(cmd, model, store, at);
    }
    let mut attempt = 0;
    loop {
        let current = dashboards
            .get(dashboard_id)
            .ok_or_else(|| DashboardError::NotFound(dashboard_id.to_string()))?;
        let mutation = command_mutation(cmd, &current)?.expect("only show_value has no mutation");
        match dashboards.mutate(dashboard_id, current.version, &mutation, model) {
            Ok(outcome) => {
                let message = confirmation(cmd, &current, &outcome.dashboard, outcome.widget_id.as_deref());
                return Ok(AgentReply {
                    intent: cmd.intent,
                    message,
                    dashboard: Some((*outcome.dashboard).clone()),
                    widget_id: outcome.widget_id,
                    value: None,
                });
            }
            Err(DashboardError::Conflict { .. }) if attempt < CONFLICT_RETRIES => attempt += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agent::parse_utterance;
    use crate::dsl::load_model;

    const MODEL: &str = r#"
        entity reading { station: string at: datetime pm25: float unit "ug/m3" }
        datasource air_quality: reading
        kpi avg_pm25 { source: air_quality expr: avg(pm25) window: 30d unit: "ug/m3" target: <= 10 }
    "#;

    struct Fixture {
        model: Arc<Model>,
        store: Store,
        dashboards: DashboardStore,
    }

    fn fixture() -> Fixture {
        let model = Arc::new(load_model(MODEL).unwrap());
        let dashboards = DashboardStore::in_memory();
        dashboards.create("test").unwrap();
        Fixture {
            store: Store::in_memory(model.clone()),
            model,
            dashboards,
        }
    }

    impl Fixture {
        fn run(&self, text: &str) -> Result<AgentReply, AgentError> {
            let d = self.dashboards.get("d1").unwrap();
            let titles: Vec<String> = d.widgets.iter().map(|w| w.config.title.clone()).collect();
            let cmd = parse_utterance(text, &SourceRef::all(&self.model), &titles).unwrap();
            apply_command(&cmd, &self.dashboards, "d1", &self.model, &self.store, Some(0))
        }
    }

    #[test]
    fn add_on_empty_dashboard() {
        let f = fixture();
        let reply = f.run("add a line chart of avg pm25").unwrap();
        assert_eq!(reply.message, "added line chart \"avg_pm25\" at (0, 0)");
        assert_eq!(reply.widget_id.as_deref(), Some("d1-w1"));
        assert_eq!(reply.dashboard.unwrap().version, 2);
    }

    #[test]
    fn remove_out_of_range() {
        let f = fixture();
        let err = f.run("remove widget 9").unwrap_err();
        assert_eq!(err.to_string(), "no widget 9");
    }

    #[test]
    fn show_value_without_data() {
        let f = fixture();
        let reply = f.run("what is avg pm25").unwrap();
        assert!(reply.message.contains("no data in the last 30 days"), "{}", reply.message);
    }

    #[test]
    fn show_value_with_data() {
        let f = fixture();
        f.store
            .ingest_batch(
                "air_quality",
                &[serde_json::json!({"station": "a", "at": "1970-01-01T00:00:00Z", "pm25": 9.8})],
            )
            .unwrap();
        let reply = f.run("show avg_pm25").unwrap();
        assert_eq!(reply.message, "avg_pm25 is 9.8 ug/m3, on track");
    }

    #[test]
    fn edit_sequence() {
        let f = fixture();
        f.run("add a gauge of avg pm25").unwrap();
        f.run("add a table of air quality").unwrap();
        assert_eq!(f.run("move widget 2 to 0 4").unwrap().message, "moved \"air_quality\" to (0, 4)");
        assert_eq!(f.run("resize widget 2 to 12x3").unwrap().message, "resized \"air_quality\" to 12x3");
        assert_eq!(
            f.run("rename avg pm25 to \"Dust\"").unwrap().message,
            "renamed \"avg_pm25\" to \"Dust\""
        );
        assert_eq!(f.run("make dust red").unwrap().message, "colored \"Dust\" red");
        let err = f.run("move widget 2 to 0 0").unwrap_err();
        assert!(matches!(err, AgentError::Dashboard(DashboardError::Geometry(_))));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(9.8), "9.8");
        assert_eq!(format_number(10.0), "10");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(0.0001), "1.00e-4");
    }
}
