use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{Map, Value as Json};

use crate::dsl::{Entity, Field, FieldKind};
use crate::time::{format_rfc3339_ms, parse_rfc3339_ms};

/// Name of the journal/output key carrying the time-axis value.
pub const TIME_KEY: &str = "_t";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    /// Epoch milliseconds, UTC.
    Time(i64),
    Enum(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Text of string and enum values.
    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Str(s) | Value::Enum(s) => Json::String(s.clone()),
            Value::Int(i) => Json::from(*i),
            Value::Float(f) => Json::from(*f),
            Value::Bool(b) => Json::Bool(*b),
            Value::Time(ms) => Json::String(format_rfc3339_ms(*ms)),
        }
    }
}

/// One validated data point. `t` caches the time-axis value when the entity
/// has a datetime field.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub datasource: String,
    pub values: IndexMap<String, Value>,
    pub t: Option<i64>,
}

impl Record {
    pub fn get(&self, field: &str) -> Option<&Value> {
        self.values.get(field)
    }

    /// Raw field values in entity order plus `_t`: the journal line shape.
    pub fn to_json(&self) -> Map<String, Json> {
        let mut map: Map<String, Json> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        if let Some(t) = self.t {
            map.insert(TIME_KEY.to_string(), Json::from(t));
        }
        map
    }
}

impl Serialize for Record {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reason {
    #[serde(rename = "missing")]
    Missing,
    #[serde(rename = "unknown-field")]
    UnknownField,
    #[serde(rename = "type-mismatch")]
    TypeMismatch,
    #[serde(rename = "bad-datetime")]
    BadDatetime,
    #[serde(rename = "bad-enum")]
    BadEnum,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::Missing => "missing",
            Reason::UnknownField => "unknown-field",
            Reason::TypeMismatch => "type-mismatch",
            Reason::BadDatetime => "bad-datetime",
            Reason::BadEnum => "bad-enum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: Reason,
}

impl FieldError {
    fn new(field: &str, reason: Reason) -> Self {
        Self {
            field: field.to_string(),
            reason,
        }
    }
}

enum Raw<'a> {
    Json(&'a Json),
    Text(&'a str),
}

/// Validates a JSON object against an entity. Integral JSON numbers are
/// accepted for int fields, datetimes must be RFC 3339 strings, and nothing
/// else is coerced. `null` counts as absent. A `_t` key is ignored.
pub fn validate_record(
    datasource: &str,
    entity: &Entity,
    raw: &Map<String, Json>,
) -> Result<Record, Vec<FieldError>> {
    validate(
        datasource,
        entity,
        raw.iter()
            .filter(|(k, v)| k.as_str() != TIME_KEY && !v.is_null())
            .map(|(k, v)| (k.as_str(), Raw::Json(v))),
    )
}

/// Validates text cells (CSV) against an entity; each cell is parsed by the
/// declared field kind. Empty cells count as absent.
pub fn validate_text_record<'a>(
    datasource: &str,
    entity: &Entity,
    cells: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<Record, Vec<FieldError>> {
    validate(
        datasource,
        entity,
        cells
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k, Raw::Text(v))),
    )
}

fn validate<'a>(
    datasource: &str,
    entity: &Entity,
    raw: impl Iterator<Item = (&'a str, Raw<'a>)>,
) -> Result<Record, Vec<FieldError>> {
    let mut given: IndexMap<&str, Raw<'a>> = IndexMap::new();
    let mut errors = Vec::new();
    let mut unknown = Vec::new();
    for (name, value) in raw {
        if entity.field(name).is_none() {
            unknown.push(FieldError::new(name, Reason::UnknownField));
        } else {
            given.insert(name, value);
        }
    }

    let mut values = IndexMap::with_capacity(entity.fields.len());
    for field in &entity.fields {
        match given.get(field.name.as_str()) {
            None if field.optional => {}
            None => errors.push(FieldError::new(&field.name, Reason::Missing)),
            Some(raw) => match convert(field, raw) {
                Ok(v) => {
                    values.insert(field.name.clone(), v);
                }
                Err(reason) => errors.push(FieldError::new(&field.name, reason)),
            },
        }
    }
    errors.extend(unknown);
    if !errors.is_empty() {
        return Err(errors);
    }

    let t = entity.time_field().and_then(|f| match values.get(&f.name) {
        Some(Value::Time(ms)) => Some(*ms),
        _ => None,
    });
    Ok(Record {
        datasource: datasource.to_string(),
        values,
        t,
    })
}

fn integral(f: f64) -> Option<i64> {
    // 2^63 is exactly representable; anything at or beyond it overflows.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    (f.is_finite() && f.fract() == 0.0 && (-LIMIT..LIMIT).contains(&f)).then_some(f as i64)
}

fn enum_symbol(allowed: &[String], s: &str) -> Result<Value, Reason> {
    if allowed.iter().any(|a| a == s) {
        Ok(Value::Enum(s.to_string()))
    } else {
        Err(Reason::BadEnum)
    }
}

fn convert(field: &Field, raw: &Raw<'_>) -> Result<Value, Reason> {
    use Reason::*;
    match (&field.kind, raw) {
        (FieldKind::String, Raw::Json(Json::String(s))) => Ok(Value::Str(s.clone())),
        (FieldKind::String, Raw::Text(s)) => Ok(Value::Str(s.to_string())),

        (FieldKind::Int, Raw::Json(Json::Number(n))) => n
            .as_i64()
            .or_else(|| n.as_f64().and_then(integral))
            .map(Value::Int)
            .ok_or(TypeMismatch),
        (FieldKind::Int, Raw::Text(s)) => {
            let s = s.trim();
            s.parse::<i64>()
                .ok()
                .or_else(|| s.parse::<f64>().ok().and_then(integral))
                .map(Value::Int)
                .ok_or(TypeMismatch)
        }

        (FieldKind::Float, Raw::Json(Json::Number(n))) => {
            n.as_f64().map(Value::Float).ok_or(TypeMismatch)
        }
        (FieldKind::Float, Raw::Text(s)) => match s.trim().parse::<f64>() {
            Ok(f) if f.is_finite() => Ok(Value::Float(f)),
            _ => Err(TypeMismatch),
        },

        (FieldKind::Bool, Raw::Json(Json::Bool(b))) => Ok(Value::Bool(*b)),
        (FieldKind::Bool, Raw::Text(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(TypeMismatch),
        },

        (FieldKind::Datetime, Raw::Json(Json::String(s))) => {
            parse_rfc3339_ms(s).map(Value::Time).ok_or(BadDatetime)
        }
        (FieldKind::Datetime, Raw::Text(s)) => parse_rfc3339_ms(s).map(Value::Time).ok_or(BadDatetime),

        (FieldKind::Enum(allowed), Raw::Json(Json::String(s))) => enum_symbol(allowed, s),
        (FieldKind::Enum(allowed), Raw::Text(s)) => enum_symbol(allowed, s.trim()),

        _ => Err(TypeMismatch),
    }
}
