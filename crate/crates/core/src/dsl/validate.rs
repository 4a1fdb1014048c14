use std::collections::{HashMap, HashSet};

use super::{Diagnostic, Entity, FieldKind, Loc, Model, ValidationReport};

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn check_ident(report: &mut ValidationReport, what: &str, name: &str, loc: Loc) {
    if !is_identifier(name) {
        report.push(Diagnostic::error(
            "E-IDENT",
            loc,
            format!("{what} name `{name}` must match [a-z][a-z0-9_]*"),
        ));
    }
}

/// Checks the semantic rules of a parsed model and reports every violation.
///
/// Codes: `E-IDENT` identifier shape, `E-DUP` duplicate name, `E-ENTITY-EMPTY`
/// entity without fields, `E-ENUM-DUP` repeated enum value, `E-DS-ENTITY`
/// dangling datasource entity, `E-KPI-SOURCE` dangling KPI source,
/// `E-EXPR-FIELD` undeclared field in an aggregate, `E-EXPR-TYPE`
/// non-numeric aggregate field, `E-KPI-TIME` window without a datetime field,
/// `E-KPI-GROUP` bad `group_by`.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    for e in &model.entities {
        check_ident(&mut report, "entity", &e.name, e.loc);
        if !seen.insert(e.name.as_str()) {
            report.push(Diagnostic::error(
                "E-DUP",
                e.loc,
                format!("entity `{}` is declared more than once", e.name),
            ));
        }
        if e.fields.is_empty() {
            report.push(Diagnostic::error(
                "E-ENTITY-EMPTY",
                e.loc,
                format!("entity `{}` has no fields", e.name),
            ));
        }
        let mut field_names = HashSet::new();
        for f in &e.fields {
            check_ident(&mut report, "field", &f.name, f.loc);
            if !field_names.insert(f.name.as_str()) {
                report.push(Diagnostic::error(
                    "E-DUP",
                    f.loc,
                    format!("field `{}` appears twice in entity `{}`", f.name, e.name),
                ));
            }
            if let FieldKind::Enum(values) = &f.kind {
                let mut distinct = HashSet::new();
                for v in values {
                    if !distinct.insert(v.as_str()) {
                        report.push(Diagnostic::error(
                            "E-ENUM-DUP",
                            f.loc,
                            format!("enum value `{v}` repeated in field `{}`", f.name),
                        ));
                    }
                }
            }
        }
    }
    let mut entities: HashMap<&str, &Entity> = HashMap::new();
    for e in &model.entities {
        entities.entry(e.name.as_str()).or_insert(e);
    }

    let mut seen = HashSet::new();
    for d in &model.datasources {
        check_ident(&mut report, "datasource", &d.name, d.loc);
        if !seen.insert(d.name.as_str()) {
            report.push(Diagnostic::error(
                "E-DUP",
                d.loc,
                format!("datasource `{}` is declared more than once", d.name),
            ));
        }
        if !entities.contains_key(d.entity.as_str()) {
            report.push(Diagnostic::error(
                "E-DS-ENTITY",
                d.entity_loc,
                format!(
                    "datasource `{}` refers to unknown entity `{}`",
                    d.name, d.entity
                ),
            ));
        }
    }

    let mut seen = HashSet::new();
    for k in &model.kpis {
        check_ident(&mut report, "KPI", &k.name, k.locs.name);
        if !seen.insert(k.name.as_str()) {
            report.push(Diagnostic::error(
                "E-DUP",
                k.locs.name,
                format!("KPI `{}` is declared more than once", k.name),
            ));
        }
        let Some(ds) = model.datasource(&k.source) else {
            report.push(Diagnostic::error(
                "E-KPI-SOURCE",
                k.locs.source,
                format!("KPI `{}` refers to unknown datasource `{}`", k.name, k.source),
            ));
            continue;
        };
        // Dangling entity already reported on the datasource.
        let Some(entity) = entities.get(ds.entity.as_str()) else {
            continue;
        };

        k.expr.for_each_agg(&mut |func, field, loc| match entity.field(field) {
            None => report.push(Diagnostic::error(
                "E-EXPR-FIELD",
                loc,
                format!(
                    "`{}({field})`: entity `{}` has no field `{field}`",
                    func.name(),
                    entity.name
                ),
            )),
            Some(f) if !f.kind.is_numeric() => report.push(Diagnostic::error(
                "E-EXPR-TYPE",
                loc,
                format!(
                    "`{}({field})`: field `{field}` is {}, not int or float",
                    func.name(),
                    f.kind.keyword()
                ),
            )),
            Some(_) => {}
        });

        if k.window.is_some() && entity.time_field().is_none() {
            report.push(Diagnostic::error(
                "E-KPI-TIME",
                k.locs.window,
                format!(
                    "KPI `{}` has a window but entity `{}` has no datetime field",
                    k.name, entity.name
                ),
            ));
        }

        if let Some(group) = &k.group_by {
            match entity.field(group) {
                Some(f) if f.kind.is_categorical() => {}
                Some(f) => report.push(Diagnostic::error(
                    "E-KPI-GROUP",
                    k.locs.group_by,
                    format!(
                        "group_by field `{group}` is {}; expected string or enum",
                        f.kind.keyword()
                    ),
                )),
                None => report.push(Diagnostic::error(
                    "E-KPI-GROUP",
                    k.locs.group_by,
                    format!("group_by names unknown field `{group}` of `{}`", entity.name),
                )),
            }
        }
    }

    report
}
