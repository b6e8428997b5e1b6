use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, GenConfig, Provenance, Record};
use crate::eval::{eval_closed, round_to_hundredths, verify_func_eval, Label};
use crate::expr::{decimal_tree, Constant, Equation, Expr, Func, FunctionTable, Kind, Number, DATA_RANGE_HUNDREDTHS};

fn draw_number<R: Rng>(rng: &mut R) -> Number {
    Number::from_hundredths(rng.gen_range(-DATA_RANGE_HUNDREDTHS..=DATA_RANGE_HUNDREDTHS))
}

/// A number as an argument: negative values are sometimes written as
/// `(* -1 |n|)`, which yields depth-3 equations.
fn argument<R: Rng>(n: Number, rng: &mut R) -> Expr {
    if n.hundredths() < 0 && rng.gen_bool(0.5) {
        Expr::binary(
            Func::Mul,
            Expr::constant(Constant::NegOne),
            Expr::number(Number::from_hundredths(-n.hundredths())),
        )
    } else {
        Expr::number(n)
    }
}

/// Draws a function application over random in-range numbers whose rounded
/// value is also in range. Returns the expression and its rounded value.
fn draw_application<R: Rng>(funcs: &[Func], rng: &mut R) -> (Expr, i64) {
    loop {
        let f = *funcs.choose(rng).expect("nonempty function table");
        let args: Vec<Expr> = (0..f.arity()).map(|_| argument(draw_number(rng), rng)).collect();
        let e = Expr::Apply(f, args);
        if let Ok(v) = eval_closed(&e) {
            let r = round_to_hundredths(v);
            if r.abs() <= DATA_RANGE_HUNDREDTHS as i64 {
                return (e, r);
            }
        }
    }
}

fn literal(h: i64) -> Expr {
    Expr::number(Number::from_hundredths(h as i32))
}

/// Moves a rounded result by a random offset of 0.05 to 1.5 in either
/// direction, staying in range and never landing back on `r`.
pub fn perturb_result<R: Rng>(r: i64, rng: &mut R) -> i64 {
    loop {
        let delta: f64 = rng.gen_range(0.05..=1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let moved = round_to_hundredths(r as f64 / 100.0 + delta);
        if moved != r && moved.abs() <= DATA_RANGE_HUNDREDTHS as i64 {
            return moved;
        }
    }
}

fn incorrect_sample<R: Rng>(funcs: &[Func], rng: &mut R) -> Equation {
    let (e, r) = draw_application(funcs, rng);
    let mut pair = None;
    if rng.gen_bool(0.5) {
        // Keep the result, change the input until the value no longer matches.
        for _ in 0..100 {
            let (other, r2) = draw_application(&[head_of(&e)], rng);
            if r2 != r {
                pair = Some((other, literal(r)));
                break;
            }
        }
    }
    let (lhs, rhs) = match pair {
        Some(p) => p,
        None => (e, literal(perturb_result(r, rng))),
    };
    Equation::new(lhs, rhs, Kind::FuncEval).expect("closed numeric equation")
}

fn head_of(e: &Expr) -> Func {
    match e {
        Expr::Apply(f, _) => *f,
        Expr::Leaf(_) => unreachable!("applications only"),
    }
}

/// Function-evaluation equations `f(n) = r`, plus decimal-expansion
/// identities `n = tree(n)`.
///
/// `cfg.funceval_count` equations are produced, `cfg.decimal_fraction` of
/// them decimal identities (always correct); the remaining correct count
/// is chosen so the overall correct fraction matches `cfg.correct_fraction`.
pub fn generate_func_eval<R: Rng>(cfg: &GenConfig, table: &FunctionTable, rng: &mut R) -> Dataset {
    let funcs: Vec<Func> = table.all().to_vec();
    let total = cfg.funceval_count;
    let n_decimal = ((total as f64) * cfg.decimal_fraction).round() as usize;
    let n_correct = (((total as f64) * cfg.correct_fraction).round() as usize).max(n_decimal).min(total);
    let n_correct_eval = n_correct - n_decimal;
    let n_incorrect = total - n_correct;

    let mut d = Dataset::new();
    let fill = |d: &mut Dataset, want: usize, expected: Label, make: &mut dyn FnMut() -> (Equation, Provenance)| {
        let start = d.len();
        let mut attempts = 0;
        while d.len() - start < want && attempts < want * 200 + 1000 {
            attempts += 1;
            let (eq, prov) = make();
            let label = verify_func_eval(&eq);
            debug_assert_eq!(label, expected, "{eq}");
            d.insert(Record::new(eq, label, prov));
        }
    };
    fill(&mut d, n_decimal, Label::Correct, &mut || {
        let n = draw_number(rng);
        let tree = decimal_tree(n).expect("in-range number");
        (Equation::new(Expr::number(n), tree, Kind::FuncEval).expect("closed"), Provenance::Decimal)
    });
    fill(&mut d, n_correct_eval, Label::Correct, &mut || {
        let (e, r) = draw_application(&funcs, rng);
        (Equation::new(e, literal(r), Kind::FuncEval).expect("closed"), Provenance::Funceval)
    });
    fill(&mut d, n_incorrect, Label::Incorrect, &mut || (incorrect_sample(&funcs, rng), Provenance::Funceval));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Verdict;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perturbation_never_rounds_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in [-314, -60, 0, 37, 314] {
            for _ in 0..200 {
                let p = perturb_result(r, &mut rng);
                assert_ne!(p, r);
                assert!(p.abs() <= 314);
                let gap = (p - r).abs();
                assert!((5..=150).contains(&gap), "gap {gap}");
            }
        }
    }

    #[test]
    fn perturbed_sine_is_incorrect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = crate::expr::parse("(sin -2.5)").unwrap();
        let p = perturb_result(-60, &mut rng);
        let eq = Equation::new(e, literal(p), Kind::FuncEval).unwrap();
        assert_eq!(verify_func_eval(&eq), Label::Incorrect);
    }

    #[test]
    fn generated_labels_match_the_checker() {
        let cfg = GenConfig { funceval_count: 400, ..GenConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = generate_func_eval(&cfg, &FunctionTable::standard(), &mut rng);
        assert_eq!(d.len(), 400);
        for r in d.iter() {
            assert_eq!(r.kind(), Kind::FuncEval);
            assert_eq!(crate::eval::verify(&r.equation, &Default::default()).label(), Some(r.label));
            assert_ne!(crate::eval::verify(&r.equation, &Default::default()), Verdict::Undecided);
            assert!(!r.equation.lhs().has_variables());
            if r.provenance == Provenance::Funceval {
                assert!((2..=3).contains(&r.depth()), "{}", r.equation);
            }
        }
        let frac = d.stats().correct_fraction(None);
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        let decimals = d.iter().filter(|r| r.provenance == Provenance::Decimal).count();
        assert_eq!(decimals, (400.0 * cfg.decimal_fraction).round() as usize);
    }
}
