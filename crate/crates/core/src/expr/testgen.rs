//! Random expression trees for property tests.

use super::{Expr, Func};
use proptest::prelude::*;

/// Trees over `arity` variables with depth at most `max_depth`.
pub(crate) fn arb_expr(arity: usize, max_depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        (0..arity).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(max_depth - 1, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            inner.clone().prop_map(|a| -a),
            (inner.clone(), -3i32..=4).prop_map(|(a, k)| a.powi(k)),
            (inner, proptest::sample::select(Func::ALL.to_vec())).prop_map(|(a, f)| a.call(f)),
        ]
    })
}
