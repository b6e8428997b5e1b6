use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{eval_closed, eval_expr, round_to_hundredths, Env};
use crate::expr::{Equation, Kind};

/// Ground-truth label of an equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::Incorrect => "incorrect",
        }
    }

    pub fn is_correct(self) -> bool {
        self == Label::Correct
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Correct,
    Incorrect,
    Undecided,
}

impl Verdict {
    pub fn label(self) -> Option<Label> {
        match self {
            Verdict::Correct => Some(Label::Correct),
            Verdict::Incorrect => Some(Label::Incorrect),
            Verdict::Undecided => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleVerdict {
    pub verdict: Verdict,
    pub samples_tried: usize,
    pub samples_valid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Random assignments drawn per equation.
    pub samples: usize,
    /// Half-width of the symmetric sampling interval.
    pub range: f64,
    /// Values assigned to every variable at once before random sampling.
    pub probes: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub min_valid_samples: usize,
    pub seed: u64,
}

#[allow(clippy::approx_constant)] // the sampling half-width is 3.14 exactly
impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            range: 3.14,
            probes: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            min_valid_samples: 8,
            seed: 0x05ee_d0f0_ac1e,
        }
    }
}

/// Per-equation random stream seed: independent of evaluation order.
pub fn stream_seed(seed: u64, eq: &Equation) -> u64 {
    let digest = Sha256::digest(eq.to_string().as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

fn close(a: f64, b: f64, cfg: &OracleConfig) -> bool {
    (a - b).abs() <= cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())
}

/// Numeric equivalence check by sampling the free variables.
///
/// Samples where either side fails to evaluate are skipped. The equation
/// is correct when every valid sample agrees and there are enough of them,
/// incorrect as soon as one valid sample disagrees.
pub fn verify_identity(eq: &Equation, cfg: &OracleConfig) -> OracleVerdict {
    let vars: Vec<_> = eq.variables().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, eq));
    let mut tried = 0;
    let mut valid = 0;
    let mut env = Env::new();

    let total = if vars.is_empty() { 1 } else { cfg.probes.len() + cfg.samples };
    let needed = if vars.is_empty() { 1 } else { cfg.min_valid_samples };
    for i in 0..total {
        for v in &vars {
            let value = match cfg.probes.get(i) {
                Some(&p) => p,
                None => rng.gen_range(-cfg.range..=cfg.range),
            };
            env.insert(v.clone(), value);
        }
        tried += 1;
        let (Ok(l), Ok(r)) = (eval_expr(eq.lhs(), &env), eval_expr(eq.rhs(), &env)) else {
            continue;
        };
        valid += 1;
        if !close(l, r, cfg) {
            return OracleVerdict { verdict: Verdict::Incorrect, samples_tried: tried, samples_valid: valid };
        }
    }
    let verdict = if valid >= needed { Verdict::Correct } else { Verdict::Undecided };
    OracleVerdict { verdict, samples_tried: tried, samples_valid: valid }
}

/// Function-evaluation check: both sides must agree after rounding to
/// two decimals. A side outside its domain makes the equation incorrect.
pub fn verify_func_eval(eq: &Equation) -> Label {
    match (eval_closed(eq.lhs()), eval_closed(eq.rhs())) {
        (Ok(l), Ok(r)) if round_to_hundredths(l) == round_to_hundredths(r) => Label::Correct,
        _ => Label::Incorrect,
    }
}

/// Labels an equation with the check appropriate to its kind.
pub fn verify(eq: &Equation, cfg: &OracleConfig) -> Verdict {
    match eq.kind() {
        Kind::Symbolic => verify_identity(eq, cfg).verdict,
        Kind::FuncEval => match verify_func_eval(eq) {
            Label::Correct => Verdict::Correct,
            Label::Incorrect => Verdict::Incorrect,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Grammar};

    fn sym(l: &str, r: &str) -> Equation {
        Equation::new(parse(l).unwrap(), parse(r).unwrap(), Kind::Symbolic).unwrap()
    }

    fn fe(l: &str, r: &str) -> Equation {
        Equation::new(parse(l).unwrap(), parse(r).unwrap(), Kind::FuncEval).unwrap()
    }

    #[test]
    fn table_examples() {
        let cfg = OracleConfig::default();
        assert_eq!(verify_identity(&sym("(^ x 1)", "(+ x 0)"), &cfg).verdict, Verdict::Correct);
        assert_eq!(verify_identity(&sym("(^ 0.5 (+ x 2))", "(^ (sin 0.5) (+ x 2))"), &cfg).verdict, Verdict::Incorrect);
    }

    #[test]
    fn empty_domain_is_undecided() {
        let v = verify_identity(&sym("(asin (+ x 10))", "(asin (+ x 10))"), &OracleConfig::default());
        assert_eq!(v.verdict, Verdict::Undecided);
        assert_eq!(v.samples_valid, 0);
        assert_eq!(v.samples_tried, 69);
    }

    #[test]
    fn valid_never_exceeds_tried() {
        let cfg = OracleConfig::default();
        for (l, r) in [("(acosh x)", "(acosh x)"), ("(sin x)", "(cos x)"), ("(^ x 0.5)", "(^ x 0.5)")] {
            let v = verify_identity(&sym(l, r), &cfg);
            assert!(v.samples_valid <= v.samples_tried);
        }
    }

    #[test]
    fn multivariable_identities_need_random_samples() {
        let cfg = OracleConfig::default();
        // Agrees at every probe (x = y there) but not in general.
        assert_eq!(verify_identity(&sym("x", "y"), &cfg).verdict, Verdict::Incorrect);
        assert_eq!(verify_identity(&sym("(+ x y)", "(+ y x)"), &cfg).verdict, Verdict::Correct);
    }

    #[test]
    fn closed_symbolic_equations_use_one_evaluation() {
        let cfg = OracleConfig::default();
        let v = verify_identity(&sym("(^ 1 2)", "1"), &cfg);
        assert_eq!((v.verdict, v.samples_tried), (Verdict::Correct, 1));
    }

    #[test]
    fn verdicts_are_deterministic() {
        let cfg = OracleConfig::default();
        let eq = sym("(* (tan x) (cos x))", "(sin x)");
        assert_eq!(verify_identity(&eq, &cfg), verify_identity(&eq, &cfg));
    }

    #[test]
    fn function_evaluation_examples() {
        assert_eq!(verify_func_eval(&fe("(sin -2.5)", "-0.6")), Label::Correct);
        assert_eq!(verify_func_eval(&fe("(cos (* -1 2.18))", "-0.57")), Label::Correct);
        assert_eq!(verify_func_eval(&fe("(cos (* -1 3))", "-0.57")), Label::Incorrect);
        assert_eq!(verify_func_eval(&fe("(asin 2.5)", "1")), Label::Incorrect);
    }

    #[test]
    fn theta_alias_parses_in_default_grammar() {
        assert!(Grammar::default().parse("(sin θ)").is_ok());
    }
}
