//! Random well-typed programs for property tests.
//!
//! Declarations are fixed: `a`, `b`, `i` are integers and `x`, `y` reals.
//! `a` and `x` are nondeterministic inputs bounded by the leading `know`s;
//! `i` is reserved for loop counters so every loop terminates.

#![allow(dead_code)]

use proptest::prelude::*;

pub const HEADER: &str = "int a, b, i;\ndouble x, y;\nknow (a >= -3 && a <= 3);\nknow (x >= 0.0 && x <= 1.0);\nb = 0;\ny = 0.5;\n";

const REL: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

pub fn int_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        (-3i64..=3).prop_map(|k| k.to_string()),
        Just("coin_flip()".to_string()),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l} + {r})")),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l} - {r})")),
            (-2i64..=2, inner).prop_map(|(k, e)| format!("{k} * ({e})")),
        ]
    })
}

pub fn real_lit() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["0.0", "0.25", "0.5", "1.5", "2.0"]).prop_map(str::to_string)
}

pub fn real_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        real_lit(),
        Just("uniform()".to_string()),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l} + {r})")),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l} - {r})")),
            (real_lit(), inner.clone()).prop_map(|(k, e)| format!("{k} * ({e})")),
            (-2i64..=2, inner).prop_map(|(k, e)| format!("{k} * ({e})")),
        ]
    })
}

pub fn atom() -> impl Strategy<Value = String> {
    let op = prop::sample::select(REL.to_vec());
    prop_oneof![
        (int_expr(), op.clone(), int_expr()).prop_map(|(l, o, r)| format!("{l} {o} {r}")),
        (real_expr(), op, real_expr()).prop_map(|(l, o, r)| format!("{l} {o} {r}")),
    ]
}

pub fn cond() -> impl Strategy<Value = String> {
    atom().prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l}) && ({r})")),
            (inner.clone(), inner).prop_map(|(l, r)| format!("({l}) || ({r})")),
        ]
    })
}

fn simple_stmt() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => (prop::sample::select(vec!["a", "b"]), prop::sample::select(vec!["=", "+=", "-="]), int_expr())
            .prop_map(|(v, op, e)| format!("{v} {op} {e};")),
        3 => (prop::sample::select(vec!["x", "y"]), prop::sample::select(vec!["=", "+=", "-="]), real_expr())
            .prop_map(|(v, op, e)| format!("{v} {op} {e};")),
        1 => cond().prop_map(|c| format!("know ({c});")),
    ]
}

fn block(stmts: Vec<String>) -> String {
    stmts.join(" ")
}

/// Statements without loops.
pub fn loop_free() -> impl Strategy<Value = String> {
    simple_stmt().prop_recursive(2, 8, 3, |inner| {
        (
            cond(),
            prop::collection::vec(inner.clone(), 0..3),
            prop::collection::vec(inner, 0..3),
        )
            .prop_map(|(c, t, e)| format!("if ({c}) {{ {} }} else {{ {} }}", block(t), block(e)))
    })
}

/// A top-level statement: loop-free code or a counted loop over `i`.
pub fn top_stmt() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => loop_free(),
        1 => (0i64..5, prop::collection::vec(loop_free(), 1..3))
            .prop_map(|(k, body)| format!("i = 0; while (i < {k}) {{ {} i += 1; }}", block(body))),
    ]
}

pub fn program() -> impl Strategy<Value = String> {
    (prop::collection::vec(top_stmt(), 0..5), cond())
        .prop_map(|(body, outcome)| format!("{HEADER}{}\nknow ({outcome});\n", body.join("\n")))
}
