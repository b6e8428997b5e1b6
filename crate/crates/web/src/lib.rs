//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every exported function takes plain text and returns a JSON string; on
//! bad input the object has a single `error` field.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use eqverify::eval::{eval_closed, eval_expr, verify, Env, OracleConfig, Verdict};
use eqverify::expr::{parse_equation, Equation, Expr, Grammar, Path, Side, Variable};
use eqverify::tasks::{numeric_candidates, symbolic_candidates};

/// Variable name that marks the blank in [`complete`].
pub const BLANK: &str = "_";

#[derive(Debug, Serialize, PartialEq)]
pub struct Checked {
    pub equation: String,
    pub kind: String,
    pub depth: usize,
    pub verdict: String,
    /// Side values of a closed equation.
    pub lhs_value: Option<f64>,
    pub rhs_value: Option<f64>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Completed {
    pub kind: String,
    pub candidates: usize,
    /// Fills that make the equation correct, in candidate order.
    pub fills: Vec<String>,
    /// Number of correct fills, including those past the limit.
    pub correct: usize,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Correct => "correct",
        Verdict::Incorrect => "incorrect",
        Verdict::Undecided => "undecided",
    }
}

fn parse_eq(text: &str, grammar: &Grammar) -> Result<Equation, String> {
    let (l, r) = parse_equation(text, grammar).map_err(|e| e.to_string())?;
    Equation::infer(l, r).map_err(|e| e.to_string())
}

/// Oracle verdict for `lhs = rhs` in prefix notation.
pub fn check_equation(text: &str) -> Result<Checked, String> {
    let eq = parse_eq(text, &Grammar::default())?;
    let value = |e: &Expr| if e.has_variables() { None } else { eval_closed(e).ok() };
    Ok(Checked {
        equation: eq.to_string(),
        kind: eq.kind().to_string(),
        depth: eq.depth(),
        verdict: verdict_name(verify(&eq, &OracleConfig::default())).to_string(),
        lhs_value: value(eq.lhs()),
        rhs_value: value(eq.rhs()),
    })
}

/// Value of one expression at the given variable assignment.
pub fn evaluate_expr(text: &str, x: f64, y: f64, z: f64, th: f64) -> Result<f64, String> {
    let grammar = Grammar::default();
    let e = grammar.parse(text).map_err(|e| e.to_string())?;
    let env: Env = [("x", x), ("y", y), ("z", z), ("th", th)].into_iter().map(|(n, v)| (Variable::new(n), v)).collect();
    eval_expr(&e, &env).map_err(|e| e.to_string())
}

fn find_blank(l: &Expr, r: &Expr) -> Result<(Side, Path), String> {
    let blank = Expr::var(BLANK);
    let mut found = Vec::new();
    for (side, e) in [(Side::Lhs, l), (Side::Rhs, r)] {
        found.extend(e.positions().into_iter().filter(|p| e.get(p) == Some(&blank)).map(|p| (side, p)));
    }
    match found.len() {
        1 => Ok(found.pop().expect("one blank")),
        0 => Err(format!("mark the missing node with `{BLANK}`")),
        n => Err(format!("expected one `{BLANK}`, found {n}")),
    }
}

/// Fills the single `_` in `text` with every depth 1 or 2 candidate and keeps
/// the ones the oracle accepts. Equations without other variables take
/// numeric fills.
pub fn complete_equation(text: &str, limit: usize) -> Result<Completed, String> {
    let base = Grammar::default();
    let names: Vec<&str> = base.variables.iter().map(|v| v.name()).chain([BLANK]).collect();
    let grammar = Grammar::new(base.functions.clone(), &names);
    let (l, r) = parse_equation(text, &grammar).map_err(|e| e.to_string())?;
    let (side, path) = find_blank(&l, &r)?;
    let blank = Variable::new(BLANK);
    let numeric = l.variables().iter().chain(r.variables().iter()).all(|v| *v == blank);
    let candidates = if numeric { numeric_candidates() } else { symbolic_candidates(&base.functions) };
    let oracle = OracleConfig::default();
    let mut fills = Vec::new();
    let mut correct = 0;
    for c in &candidates {
        let (l2, r2) = match side {
            Side::Lhs => (l.substitute(&path, c.clone()), Ok(r.clone())),
            Side::Rhs => (Ok(l.clone()), r.substitute(&path, c.clone())),
        };
        let (Ok(l2), Ok(r2)) = (l2, r2) else { continue };
        let Ok(eq) = Equation::infer(l2, r2) else { continue };
        if verify(&eq, &oracle) == Verdict::Correct {
            correct += 1;
            if fills.len() < limit {
                fills.push(c.to_string());
            }
        }
    }
    Ok(Completed {
        kind: if numeric { "funceval" } else { "symbolic" }.to_string(),
        candidates: candidates.len(),
        fills,
        correct,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn check(text: &str) -> String {
    to_json(check_equation(text))
}

#[wasm_bindgen]
pub fn evaluate(text: &str, x: f64, y: f64, z: f64, th: f64) -> String {
    to_json(evaluate_expr(text, x, y, z, th).map(|value| serde_json::json!({ "value": value })))
}

#[wasm_bindgen]
pub fn complete(text: &str, limit: usize) -> String {
    to_json(complete_equation(text, limit))
}
