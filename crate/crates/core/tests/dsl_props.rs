mod support;

use climadash_core::dsl::{parse_model, print_model, validate_model, Expr};
use proptest::prelude::*;

#[test]
fn random_models_round_trip_through_printer() {
    support::checks::dsl_round_trip(200);
}

#[test]
fn mutated_inputs_never_panic() {
    support::checks::dsl_fuzz(10_000);
}

#[test]
fn k_injected_violations_give_k_diagnostics() {
    let src = r#"
        entity Reading { Station: string  v: float  v: int  mood: enum(a, a) }
        entity empty { }
        datasource d1: missing
        datasource d2: reading_ok
        entity reading_ok { at: datetime  s: string  v: float }
        datasource d2: reading_ok
        kpi k1 { source: nowhere expr: avg(v) }
        kpi k2 { source: d2 expr: avg(s) + sum(ghost) }
        kpi k3 { source: d2 expr: count() group_by: v }
    "#;
    let model = parse_model(src).unwrap();
    let report = validate_model(&model);
    for code in [
        "E-IDENT",
        "E-DUP",
        "E-ENUM-DUP",
        "E-ENTITY-EMPTY",
        "E-DS-ENTITY",
        "E-KPI-SOURCE",
        "E-EXPR-TYPE",
        "E-EXPR-FIELD",
        "E-KPI-GROUP",
    ] {
        assert!(report.has_code(code), "missing {code} in\n{report}");
    }
    assert!(report.error_count() >= 11, "{report}");
}

#[test]
fn windowed_kpi_needs_time_axis() {
    let model = parse_model("entity e { v: float }\ndatasource d: e\nkpi k { source: d expr: sum(v) window: 1h }").unwrap();
    assert!(validate_model(&model).has_code("E-KPI-TIME"));
}

proptest! {
    #[test]
    fn numeric_literals_round_trip(value in 0.0f64..1e300, target in -1e12f64..1e12) {
        let src = format!(
            "entity e {{ at: datetime v: float }}\ndatasource d: e\nkpi k {{ source: d expr: sum(v) * {value} target: <= {target} baseline: {target} }}"
        );
        let model = parse_model(&src).unwrap();
        let kpi = &model.kpis[0];
        let Expr::Binary { rhs, .. } = &kpi.expr else { panic!("expected a product") };
        prop_assert_eq!(&**rhs, &Expr::number(value));
        prop_assert_eq!(kpi.baseline, Some(target));
        let reparsed = parse_model(&print_model(&model)).unwrap();
        prop_assert_eq!(model, reparsed);
    }
}
