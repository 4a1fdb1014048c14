//! Deterministic generation of backend artifacts from a validated model:
//! SQL DDL, a JSON API description and the default dashboard.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dashboard::{
    apply_mutation, auto_configure, Dashboard, DashboardError, Mutation, SourceRef, WidgetKind,
    WidgetSpec,
};
use crate::dsl::{validate_model, Entity, FieldKind, Model};

pub const TOOL: &str = "climadash";
pub const DEFAULT_DASHBOARD_ID: &str = "default";

/// Hex SHA-256 of the model source text, recorded in every artifact header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHash(String);

impl ModelHash {
    pub fn of_source(text: &str) -> Self {
        Self(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Schema,
    Api,
    Dashboard,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 3] = [ArtifactKind::Schema, ArtifactKind::Api, ArtifactKind::Dashboard];

    pub fn default_path(self) -> &'static str {
        match self {
            ArtifactKind::Schema => "gen/schema.sql",
            ArtifactKind::Api => "gen/api.json",
            ArtifactKind::Dashboard => "gen/dashboard.default.json",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Schema => "schema",
            ArtifactKind::Api => "api",
            ArtifactKind::Dashboard => "dashboard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedArtifact {
    /// Relative path, e.g. `gen/schema.sql`.
    pub path: PathBuf,
    pub content: Vec<u8>,
    pub kind: ArtifactKind,
}

/// Non-empty subset of artifact kinds to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationSelection {
    schema: bool,
    api: bool,
    dashboard: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("generation selection is empty")]
    Empty,
    #[error("unknown artifact `{0}`; expected schema, api or dashboard")]
    Unknown(String),
}

impl GenerationSelection {
    pub fn all() -> Self {
        Self {
            schema: true,
            api: true,
            dashboard: true,
        }
    }

    pub fn new(kinds: impl IntoIterator<Item = ArtifactKind>) -> Result<Self, SelectionError> {
        let mut sel = Self {
            schema: false,
            api: false,
            dashboard: false,
        };
        for k in kinds {
            match k {
                ArtifactKind::Schema => sel.schema = true,
                ArtifactKind::Api => sel.api = true,
                ArtifactKind::Dashboard => sel.dashboard = true,
            }
        }
        if sel.kinds().next().is_none() {
            return Err(SelectionError::Empty);
        }
        Ok(sel)
    }

    pub fn contains(&self, kind: ArtifactKind) -> bool {
        match kind {
            ArtifactKind::Schema => self.schema,
            ArtifactKind::Api => self.api,
            ArtifactKind::Dashboard => self.dashboard,
        }
    }

    pub fn kinds(&self) -> impl Iterator<Item = ArtifactKind> + '_ {
        ArtifactKind::ALL.into_iter().filter(|k| self.contains(*k))
    }
}

impl FromStr for GenerationSelection {
    type Err = SelectionError;

    /// Comma-separated list such as `schema,api`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kinds = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                ArtifactKind::ALL
                    .into_iter()
                    .find(|k| k.name() == p)
                    .ok_or_else(|| SelectionError::Unknown(p.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(kinds)
    }
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("model has {0} validation error(s); generation requires a valid model")]
    InvalidModel(usize),
    #[error("two entities map to table `{0}`")]
    TableCollision(String),
    #[error("{op} {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("default dashboard: {0}")]
    Dashboard(#[from] DashboardError),
}

fn require_valid(model: &Model) -> Result<(), CodegenError> {
    let report = validate_model(model);
    if report.is_empty() {
        Ok(())
    } else {
        Err(CodegenError::InvalidModel(report.error_count()))
    }
}

fn sql_type(kind: &FieldKind) -> &'static str {
    match kind {
        FieldKind::String | FieldKind::Enum(_) => "TEXT",
        FieldKind::Int => "BIGINT",
        FieldKind::Float => "DOUBLE PRECISION",
        FieldKind::Bool => "BOOLEAN",
        FieldKind::Datetime => "TIMESTAMP",
    }
}

fn create_table(entity: &Entity) -> String {
    let columns: Vec<String> = entity
        .fields
        .iter()
        .map(|f| {
            let mut col = format!("{} {}", f.name, sql_type(&f.kind));
            if !f.optional {
                col.push_str(" NOT NULL");
            }
            if let FieldKind::Enum(values) = &f.kind {
                let quoted: Vec<String> = values.iter().map(|v| format!("'{v}'")).collect();
                let _ = write!(col, " CHECK ({} IN ({}))", f.name, quoted.join(","));
            }
            col
        })
        .collect();
    format!("CREATE TABLE {} ({});", entity.name, columns.join(", "))
}

/// One `CREATE TABLE` per entity, in declaration order, after a header
/// comment.
pub fn generate_schema(model: &Model, hash: &ModelHash) -> Result<GeneratedArtifact, CodegenError> {
    require_valid(model)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = format!("-- generated by {TOOL} from model sha256:{hash}\n");
    for e in &model.entities {
        if !seen.insert(e.name.as_str()) {
            return Err(CodegenError::TableCollision(e.name.clone()));
        }
        out.push('\n');
        out.push_str(&create_table(e));
        out.push('\n');
    }
    Ok(GeneratedArtifact {
        path: ArtifactKind::Schema.default_path().into(),
        content: out.into_bytes(),
        kind: ArtifactKind::Schema,
    })
}

/// JSON-Schema-style description of one field, shared by the API document
/// and runtime validation rules.
pub fn field_schema(kind: &FieldKind) -> Json {
    match kind {
        FieldKind::String => json!({"type": "string"}),
        FieldKind::Int => json!({"type": "integer"}),
        FieldKind::Float => json!({"type": "number"}),
        FieldKind::Bool => json!({"type": "boolean"}),
        FieldKind::Datetime => json!({"type": "string", "format": "date-time"}),
        FieldKind::Enum(values) => json!({"type": "string", "enum": values}),
    }
}

pub fn entity_schema(entity: &Entity) -> Json {
    let mut properties = Map::new();
    for f in &entity.fields {
        let mut schema = field_schema(&f.kind);
        if let (Some(unit), Json::Object(obj)) = (&f.unit, &mut schema) {
            obj.insert("x-unit".into(), Json::from(unit.as_str()));
        }
        properties.insert(f.name.clone(), schema);
    }
    let required: Vec<&str> = entity
        .fields
        .iter()
        .filter(|f| !f.optional)
        .map(|f| f.name.as_str())
        .collect();
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false,
    })
}

fn json_artifact(kind: ArtifactKind, doc: &impl Serialize) -> GeneratedArtifact {
    let mut text = serde_json::to_string_pretty(doc).expect("artifact serializes");
    text.push('\n');
    GeneratedArtifact {
        path: kind.default_path().into(),
        content: text.into_bytes(),
        kind,
    }
}

fn generator_field(hash: &ModelHash) -> Json {
    json!({"tool": TOOL, "model_sha256": hash.as_str()})
}

/// Route list per datasource (data then ingest) and per KPI, with entity
/// schemas referenced by name.
pub fn generate_api_spec(model: &Model, hash: &ModelHash) -> Result<GeneratedArtifact, CodegenError> {
    require_valid(model)?;
    let mut schemas = Map::new();
    for e in &model.entities {
        schemas.insert(e.name.clone(), entity_schema(e));
    }
    let mut routes = Vec::new();
    for d in &model.datasources {
        let schema_ref = json!({"$ref": format!("#/schemas/{}", d.entity)});
        let mut pair = [
            json!({
                "method": "GET",
                "path": format!("/api/v1/data/{}", d.name),
                "datasource": d.name,
                "query": {
                    "from": {"type": "integer", "format": "epoch-ms"},
                    "to": {"type": "integer", "format": "epoch-ms"},
                    "limit": {"type": "integer", "minimum": 1}
                },
                "response": {"type": "array", "items": schema_ref},
            }),
            json!({
                "method": "POST",
                "path": format!("/api/v1/ingest/{}", d.name),
                "datasource": d.name,
                "request": {"type": "array", "items": schema_ref},
                "response": {"$ref": "#/schemas/_ingest_result"},
            }),
        ];
        pair.sort_by(|a, b| a["path"].as_str().cmp(&b["path"].as_str()));
        routes.extend(pair);
    }
    for k in &model.kpis {
        let mut kpi = Map::new();
        kpi.insert("source".into(), Json::from(k.source.as_str()));
        if let Some(w) = k.window {
            kpi.insert("window".into(), Json::from(w.to_string()));
        }
        if let Some(u) = &k.unit {
            kpi.insert("unit".into(), Json::from(u.as_str()));
        }
        if let Some(t) = k.target {
            kpi.insert("target".into(), Json::from(t.to_string()));
        }
        routes.push(json!({
            "method": "GET",
            "path": format!("/api/v1/kpi/{}", k.name),
            "kpi": k.name,
            "query": {"at": {"type": "integer", "format": "epoch-ms"}},
            "response": {"$ref": "#/schemas/_kpi_value"},
            "x-kpi": kpi,
        }));
    }
    schemas.insert(
        "_ingest_result".into(),
        json!({
            "type": "object",
            "properties": {
                "accepted": {"type": "integer"},
                "rejected": {"type": "array", "items": {
                    "type": "object",
                    "properties": {
                        "index": {"type": "integer"},
                        "field": {"type": "string"},
                        "reason": {"type": "string", "enum": ["missing", "unknown-field", "type-mismatch", "bad-datetime", "bad-enum"]}
                    }
                }}
            }
        }),
    );
    schemas.insert(
        "_kpi_value".into(),
        json!({
            "type": "object",
            "properties": {
                "kpi": {"type": "string"},
                "value": {"type": ["number", "null"]},
                "window_end": {"type": "integer", "format": "epoch-ms"},
                "status": {"type": "string", "enum": ["no_data", "ok", "on_track", "off_track", "error"]}
            }
        }),
    );
    let doc = json!({
        "_generator": generator_field(hash),
        "version": "v1",
        "routes": routes,
        "schemas": schemas,
    });
    Ok(json_artifact(ArtifactKind::Api, &doc))
}

/// The default dashboard: one auto-configured widget per KPI, then one
/// table per datasource, placed first-fit at 6x4. Version 1.
pub fn default_dashboard(model: &Model) -> Result<Dashboard, CodegenError> {
    require_valid(model)?;
    let mut d = Dashboard::new(DEFAULT_DASHBOARD_ID, "Default dashboard");
    let kpi_specs = model.kpis.iter().map(|k| {
        let source = SourceRef::Kpi(k.name.clone());
        auto_configure(&source, model).map(|auto| WidgetSpec {
            kind: Some(auto.kind),
            ..WidgetSpec::for_source(source)
        })
    });
    let table_specs = model.datasources.iter().map(|ds| {
        Ok(WidgetSpec {
            kind: Some(WidgetKind::Table),
            ..WidgetSpec::for_source(SourceRef::Datasource(ds.name.clone()))
        })
    });
    for spec in kpi_specs.chain(table_specs) {
        let (next, _) = apply_mutation(&d, &Mutation::AddWidget(spec?), model)?;
        d = next;
    }
    d.version = 1;
    Ok(d)
}

pub fn generate_dashboard_config(
    model: &Model,
    hash: &ModelHash,
) -> Result<GeneratedArtifact, CodegenError> {
    #[derive(Serialize)]
    struct Document<'a> {
        _generator: Json,
        #[serde(flatten)]
        dashboard: &'a Dashboard,
    }
    let dashboard = default_dashboard(model)?;
    Ok(json_artifact(
        ArtifactKind::Dashboard,
        &Document {
            _generator: generator_field(hash),
            dashboard: &dashboard,
        },
    ))
}

/// Exactly the selected artifacts, in schema, api, dashboard order.
pub fn generate_all(
    model: &Model,
    hash: &ModelHash,
    selection: GenerationSelection,
) -> Result<Vec<GeneratedArtifact>, CodegenError> {
    selection
        .kinds()
        .map(|kind| match kind {
            ArtifactKind::Schema => generate_schema(model, hash),
            ArtifactKind::Api => generate_api_spec(model, hash),
            ArtifactKind::Dashboard => generate_dashboard_config(model, hash),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteStatus {
    Written,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub kind: ArtifactKind,
    pub status: WriteStatus,
    pub bytes: usize,
}

/// Writes artifacts under `root`, skipping files whose bytes already match.
pub fn write_artifacts(
    root: &Path,
    artifacts: &[GeneratedArtifact],
) -> Result<Vec<ManifestEntry>, CodegenError> {
    let io = |op: &'static str, path: &Path| {
        let path = path.to_path_buf();
        move |source| CodegenError::Io { op, path, source }
    };
    artifacts
        .iter()
        .map(|a| {
            let path = root.join(&a.path);
            let status = match fs::read(&path) {
                Ok(existing) if existing == a.content => WriteStatus::Unchanged,
                _ => {
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent).map_err(io("create directory", parent))?;
                    }
                    fs::write(&path, &a.content).map_err(io("write", &path))?;
                    WriteStatus::Written
                }
            };
            Ok(ManifestEntry {
                path: a.path.clone(),
                kind: a.kind,
                status,
                bytes: a.content.len(),
            })
        })
        .collect()
}
