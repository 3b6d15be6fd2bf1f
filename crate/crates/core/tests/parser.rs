use std::path::PathBuf;

use coda::model::{BinOp, Expr, ExprKind, Extremum, UnOp};
use coda::parser::{parse, parse_expr, print, print_expr};
use proptest::prelude::*;

#[test]
fn shipped_models_survive_print_and_reparse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("coda") {
            continue;
        }
        let src = std::fs::read_to_string(&path).unwrap();
        let model = parse(&src).unwrap();
        let printed = print(&model);
        let back = parse(&printed).unwrap_or_else(|d| panic!("{}: {d:?}", path.display()));
        assert_eq!(model, back, "{}", path.display());
        assert_eq!(print(&back), printed, "{}", path.display());
    }
}

fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "x", "count", "WM"]).prop_map(String::from)
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        any::<bool>().prop_map(ExprKind::Bool),
        (0i64..1000).prop_map(ExprKind::Int),
        prop::collection::vec(ident(), 1..3).prop_map(ExprKind::Name),
        ident().prop_map(ExprKind::Recv),
        prop::collection::vec(ident(), 1..3).prop_map(ExprKind::InState),
    ]
    .prop_map(|k| Expr::new(k, Default::default()))
}

fn binop() -> impl Strategy<Value = BinOp> {
    prop::sample::select(vec![
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
        BinOp::Implies,
    ])
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        let e = |k| Expr::new(k, Default::default());
        prop_oneof![
            (prop::sample::select(vec![UnOp::Not, UnOp::Neg]), inner.clone()).prop_map(move |(op, a)| e(ExprKind::Unary(op, Box::new(a)))),
            (binop(), inner.clone(), inner.clone()).prop_map(move |(op, a, b)| e(ExprKind::Binary(op, Box::new(a), Box::new(b)))),
            (
                prop::sample::select(vec![Extremum::Min, Extremum::Max]),
                prop::collection::vec(inner.clone(), 1..4)
            )
                .prop_map(move |(w, xs)| e(ExprKind::Extremum(w, xs))),
            (inner.clone(), inner.clone(), inner).prop_map(move |(c, t, f)| e(ExprKind::Ite(Box::new(c), Box::new(t), Box::new(f)))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]
    #[test]
    fn printed_expressions_parse_back_to_the_same_tree(e in expr()) {
        let printed = print_expr(&e);
        let back = parse_expr(&printed).map_err(|d| TestCaseError::fail(format!("{printed}: {d}")))?;
        prop_assert_eq!(&e, &back, "{}", printed);
    }
}
