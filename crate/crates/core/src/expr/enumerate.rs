use std::collections::HashSet;

use super::{Constant, Expr, ExprError, Func, FunctionTable, Number, Terminal, DATA_RANGE_HUNDREDTHS};

/// The terminal column of the base grammar table: the named constants and `x`.
pub fn table_terminals() -> Vec<Terminal> {
    Constant::ALL.iter().map(|&c| Terminal::Const(c)).chain([Terminal::var("x")]).collect()
}

/// All expressions of depth at most `max_depth` (1 or 2) over `terminals`.
///
/// Output order: terminals (sorted), then unary applications by function
/// then argument, then binary applications by function then argument pair.
/// Duplicates are dropped, keeping the first occurrence.
pub fn enumerate(max_depth: usize, terminals: &[Terminal], table: &FunctionTable) -> Vec<Expr> {
    assert!((1..=2).contains(&max_depth), "enumeration depth must be 1 or 2");
    let mut ts: Vec<Terminal> = terminals.to_vec();
    ts.sort();
    let leaves: Vec<Expr> = ts.into_iter().map(Expr::Leaf).collect();

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |e: Expr| {
        if seen.insert(e.clone()) {
            out.push(e);
        }
    };
    for l in &leaves {
        push(l.clone());
    }
    if max_depth == 2 {
        for f in table.unary() {
            for l in &leaves {
                push(Expr::unary(f, l.clone()));
            }
        }
        for f in table.binary() {
            for a in &leaves {
                for b in &leaves {
                    push(Expr::binary(f, a.clone(), b.clone()));
                }
            }
        }
    }
    out
}

fn digit(d: u32) -> Expr {
    Expr::number(Number::from_hundredths(d as i32 * 100))
}

fn power_of_ten(k: i32) -> Expr {
    let exponent = if k >= 0 {
        digit(k as u32)
    } else {
        Expr::binary(Func::Mul, Expr::constant(Constant::NegOne), digit((-k) as u32))
    };
    Expr::binary(Func::Pow, Expr::number(Number::from_hundredths(1000)), exponent)
}

/// Decimal expansion of `n` as a sum of `digit * 10^k` terms.
///
/// Zero digits are skipped (a lone zero becomes `0 * 10^0`), terms are
/// right-nested under `+`, negative exponents are written `(* -1 k)` and a
/// negative number is wrapped as `(* -1 expansion)`.
pub fn decimal_tree(n: Number) -> Result<Expr, ExprError> {
    let h = n.hundredths();
    if h.abs() > DATA_RANGE_HUNDREDTHS {
        return Err(ExprError::Precision(n.value()));
    }
    let a = h.unsigned_abs();
    let digits = [(a / 100, 0), ((a / 10) % 10, -1), (a % 10, -2)];
    let mut terms: Vec<Expr> = digits
        .iter()
        .filter(|(d, _)| *d != 0)
        .map(|&(d, k)| Expr::binary(Func::Mul, digit(d), power_of_ten(k)))
        .collect();
    if terms.is_empty() {
        terms.push(Expr::binary(Func::Mul, digit(0), power_of_ten(0)));
    }
    let mut tree = terms.pop().expect("at least one term");
    while let Some(t) = terms.pop() {
        tree = Expr::binary(Func::Add, t, tree);
    }
    if h < 0 {
        tree = Expr::binary(Func::Mul, Expr::constant(Constant::NegOne), tree);
    }
    Ok(tree)
}
