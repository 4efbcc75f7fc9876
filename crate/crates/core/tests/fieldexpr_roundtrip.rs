use meanflow_core::fieldexpr::{parse_expr, Coords, EvalError, FieldExpr, ParseError};
use meanflow_core::mesh::{MeshGeometry, MeshKind};
use meanflow_core::symmetry::{GeneratorSpec, GroupAction, DEFAULT_GROUP_CAP};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..100).prop_map(|n| n.to_string()),
        (0u32..1000).prop_map(|n| format!("{}.{}", n / 100, n % 100)),
        Just("pi".to_string()),
        Just("x".to_string()),
        Just("y".to_string()),
    ]
}

fn expr_text() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*", "/"]))
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (inner.clone(), prop::sample::select(vec!["sin", "cos", "exp", "abs"]))
                .prop_map(|(a, f)| format!("{f}(({a}) / 10)")),
            (inner, 0u32..4).prop_map(|(a, p)| format!("({a})^{p}")),
        ]
    })
}

fn same(a: Result<f64, EvalError>, b: Result<f64, EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn display_round_trips(text in expr_text()) {
        let parsed = parse_expr(&text).unwrap();
        let printed = parsed.to_string();
        let reparsed = parse_expr(&printed).unwrap();
        prop_assert_eq!(&reparsed, &parsed, "printed as {}", printed);
        for (x, y) in [(0.3, 1.7), (2.0, 5.5)] {
            let at = Coords { kind: MeshKind::Torus, first: x, second: y };
            prop_assert!(same(parsed.eval(&at), reparsed.eval(&at)));
        }
    }

    #[test]
    fn garbage_never_panics(text in "[a-z0-9+*/^() .-]{0,24}") {
        let _ = parse_expr(&text);
    }
}

#[test]
fn invariant_expressions_materialize_to_invariant_fields() {
    // f(g·p) = f(p) for an expression invariant under g, so materializing
    // commutes with the node permutation exactly.
    let mesh = MeshGeometry::torus_n(60).unwrap();
    let group = GroupAction::build(
        &mesh,
        &[GeneratorSpec::Shift(20, 0), GeneratorSpec::Shift(0, 30)],
        DEFAULT_GROUP_CAP,
    )
    .unwrap();
    let f: FieldExpr = "1 + 0.5*cos(3*x) * cos(2*y)".parse().unwrap();
    let field = f.materialize(&mesh).unwrap();
    assert!(group.invariance_error(field.values()) < 1e-12);
    let g: FieldExpr = "1 + 0.5*cos(x)".parse().unwrap();
    assert!(group.invariance_error(g.materialize(&mesh).unwrap().values()) > 0.1);
}

#[test]
fn error_positions() {
    assert_eq!(
        parse_expr("cos(x"),
        Err(ParseError::Syntax { offset: 5, message: "expected ')'".into() })
    );
    assert!(matches!(parse_expr("1 + banana"), Err(ParseError::UnknownIdentifier { offset: 4, .. })));
    let sphere = MeshGeometry::sphere_n(8, 16).unwrap();
    assert!(matches!(
        parse_expr("x").unwrap().materialize(&sphere),
        Err(EvalError::VariableMismatch { .. })
    ));
}
