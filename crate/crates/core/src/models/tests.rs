use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{check_gradients_of, Tape};
use crate::expr::parse;

fn sym(l: &str, r: &str) -> Equation {
    Equation::new(parse(l).unwrap(), parse(r).unwrap(), Kind::Symbolic).unwrap()
}

fn fe(l: &str, r: &str) -> Equation {
    Equation::new(parse(l).unwrap(), parse(r).unwrap(), Kind::FuncEval).unwrap()
}

fn model(arch: Arch, d: usize) -> Model {
    Model::new(arch, d, &Grammar::default(), 7)
}

fn embed(m: &Model, e: &str) -> Vec<f64> {
    let mut t = Tape::new();
    let emb = m.embed_expr(&mut t, &parse(e).unwrap(), &mut Mode::Eval).unwrap();
    t.value(emb.h).to_vec()
}

#[test]
fn leaf_embedding_is_the_symbol_block() {
    let m = model(Arch::TreeNn, 6);
    let w = m.params.get(m.params.id("symbol.W").unwrap());
    let j = Constant::ALL.len(); // x is the first variable
    let expected: Vec<f64> = (0..6).map(|r| w.value[r * w.cols + j].tanh()).collect();
    assert_eq!(embed(&m, "x"), expected);
    assert_eq!(embed(&m, "x"), embed(&m, "x"));
}

#[test]
fn other_cells_do_not_affect_an_embedding() {
    for arch in [Arch::TreeNn, Arch::TreeLstm] {
        let mut m = model(arch, 5);
        let before = embed(&m, "(sin x)");
        let cos = m.params.id("cell.cos.W").unwrap();
        m.params.get_mut(cos).value.iter_mut().for_each(|v| *v += 1.0);
        assert_eq!(embed(&m, "(sin x)"), before);
        let sin = m.params.id("cell.sin.W").unwrap();
        m.params.get_mut(sin).value[0] += 1.0;
        assert_ne!(embed(&m, "(sin x)"), before);
    }
}

#[test]
fn identical_subtrees_embed_identically() {
    let m = model(Arch::TreeLstm, 6);
    let mut t = Tape::new();
    let e = parse("(+ (sin (* x 2)) (sin (* x 2)))").unwrap();
    let a = m.embed_expr(&mut t, &e.children()[0], &mut Mode::Eval).unwrap();
    let b = m.embed_expr(&mut t, &e.children()[1], &mut Mode::Eval).unwrap();
    assert_eq!(t.value(a.h), t.value(b.h));
    assert_eq!(t.value(a.c.unwrap()), t.value(b.c.unwrap()));
}

#[test]
fn symbolic_head_is_symmetric_and_in_range() {
    for arch in [Arch::TreeNn, Arch::TreeLstm] {
        let m = model(arch, 8);
        let eq = sym("(+ (^ (sin th) 2) (^ (cos th) 2))", "(* 1 (tan x))");
        let p = m.probability(&eq).unwrap();
        assert_eq!(p, m.probability(&eq.swapped()).unwrap());
        assert!(p > 0.0 && p < 1.0);
        let same = sym("(sin (+ x y))", "(sin (+ x y))");
        assert!(m.probability(&same).unwrap() >= 0.5);
    }
}

#[test]
fn head_bias_shifts_the_logit() {
    let g = Grammar::default();
    let eq = sym("(sin x)", "(cos y)");
    for arch in [Arch::TreeNn, Arch::TreeLstm] {
        let plain = Model::new(arch, 6, &g, 3);
        let mut biased = Model::with_head_bias(arch, 6, &g, 3, true);
        assert!(!plain.has_head_bias() && biased.has_head_bias());
        // A zero bias leaves the head unchanged.
        assert_eq!(plain.probability(&eq).unwrap(), biased.probability(&eq).unwrap());
        let id = biased.params.id("head.b").unwrap();
        biased.params.get_mut(id).value[0] = -1.5;
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let shift = logit(biased.probability(&eq).unwrap()) - logit(plain.probability(&eq).unwrap());
        assert!((shift + 1.5).abs() < 1e-9, "{shift}");
        let back = Model::read_from(&biased.to_bytes()[..]).unwrap();
        assert!(back.has_head_bias());
        assert_eq!(back, biased);
    }
    assert!(!Model::with_head_bias(Arch::Lstm, 6, &g, 3, true).has_head_bias());
}

#[test]
fn unknown_variable_is_an_error() {
    let m = model(Arch::TreeNn, 4);
    let g = Grammar::new(FunctionTable::standard(), &["x", "q"]);
    let (l, r) = crate::expr::parse_equation("(sin q) = q", &g).unwrap();
    let eq = Equation::new(l, r, Kind::Symbolic).unwrap();
    assert!(matches!(m.probability(&eq), Err(ModelError::UnknownSymbol(s)) if s == "q"));
}

#[test]
fn number_identity_has_zero_error() {
    let m = model(Arch::TreeLstm, 6);
    let out = m.func_eval_error(&fe("2.18", "2.18")).unwrap();
    assert_eq!(out.sq_err, 0.0);
    let out = m.func_eval_error(&fe("(sin 2.5)", "0.6")).unwrap();
    assert!(out.sq_err.is_finite());
}

#[test]
fn chain_tokens_cover_both_sides_and_separator() {
    let m = model(Arch::Lstm, 4);
    let eq = sym("(+ (sin x) 1)", "(cos y)");
    let toks = m.chain_tokens(&eq).unwrap();
    assert_eq!(toks.len(), eq.lhs().node_count() + eq.rhs().node_count() + 1);
    assert_ne!(toks, m.chain_tokens(&eq.swapped()).unwrap());
    let p = m.probability(&eq).unwrap();
    assert!(p > 0.0 && p < 1.0);
    let m = model(Arch::Rnn, 4);
    let toks = m.chain_tokens(&fe("(sin 2.5)", "0.6")).unwrap();
    assert!(matches!(toks[1], ChainToken::Number(_)));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for arch in Arch::ALL {
        let mut m = model(arch, 5);
        m.meta.threshold = Some(0.0123);
        m.meta.config_digest = "abc".into();
        let bytes = m.to_bytes();
        let back = Model::read_from(&bytes[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn checkpoint_rejects_other_function_table() {
    let m = model(Arch::TreeNn, 3);
    let bytes = m.to_bytes();
    let g = Grammar::new(FunctionTable::extended(), &["x", "y", "z", "th"]);
    assert!(matches!(Model::read_for(&bytes[..], &g), Err(ModelError::Mismatch(_))));
    assert!(Model::read_for(&bytes[..], &Grammar::default()).is_ok());
    let text = String::from_utf8(bytes).unwrap().replacen("eqverify-checkpoint 1", "eqverify-checkpoint 9", 1);
    assert!(matches!(Model::read_from(text.as_bytes()), Err(ModelError::Checkpoint { line: 1, .. })));
}

#[test]
fn forget_biases_start_at_one() {
    let m = model(Arch::TreeLstm, 3);
    let b = m.params.value(m.params.id("cell.+.b").unwrap());
    assert_eq!(b, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

/// A TreeNN forward for `(+ (sin x) (sin y))` written directly against the
/// tape, with a separate copy of the sine cell for each occurrence.
#[test]
fn shared_cell_gradient_is_the_sum_over_occurrences() {
    let mut m = model(Arch::TreeNn, 4);
    let e = parse("(+ (sin x) (sin y))").unwrap();
    let mut t = Tape::new();
    let h = m.embed_expr(&mut t, &e, &mut Mode::Eval).unwrap().h;
    let loss = t.dot(h, h);
    m.params.zero_grads();
    t.backward(loss, &mut m.params);
    let sin_w = m.params.id("cell.sin.W").unwrap();
    let shared = m.params.grad(sin_w).to_vec();

    let mut ps = m.params.clone();
    ps.zero_grads();
    let w_a = ps.add_value("sinA", 4, 4, m.params.value(sin_w).to_vec());
    let w_b = ps.add_value("sinB", 4, 4, m.params.value(sin_w).to_vec());
    let sin_b = ps.id("cell.sin.b").unwrap();
    let (sw, sb) = (ps.id("symbol.W").unwrap(), ps.id("symbol.b").unwrap());
    let (pw, pb) = (ps.id("cell.+.W").unwrap(), ps.id("cell.+.b").unwrap());
    let mut t = Tape::new();
    let leaf = |t: &mut Tape, j: usize| {
        let c = t.column(&ps, sw, j);
        let b = t.param(&ps, sb);
        let s = t.add(c, b);
        t.tanh(s)
    };
    let x = leaf(&mut t, Constant::ALL.len());
    let y = leaf(&mut t, Constant::ALL.len() + 1);
    let sx = t.affine(&ps, w_a, sin_b, x);
    let sx = t.tanh(sx);
    let sy = t.affine(&ps, w_b, sin_b, y);
    let sy = t.tanh(sy);
    let cat = t.concat(&[sx, sy]);
    let z = t.affine(&ps, pw, pb, cat);
    let h2 = t.tanh(z);
    let loss2 = t.dot(h2, h2);
    assert_eq!(t.scalar(loss2), t.scalar(loss2));
    t.backward(loss2, &mut ps);
    let summed: Vec<f64> = ps.grad(w_a).iter().zip(ps.grad(w_b)).map(|(a, b)| a + b).collect();
    for (a, b) in shared.iter().zip(&summed) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }
    assert_eq!(ps.grad(sin_w).iter().copied().fold(0.0, f64::max), 0.0);
}

#[test]
fn tree_lstm_cells_pass_gradient_check_for_both_arities() {
    let mut m = model(Arch::TreeLstm, 4);
    let eq = sym("(sin (+ x (cos y)))", "(* (tan x) 2)");
    for label in [Label::Correct, Label::Incorrect] {
        let check =
            check_gradients_of(&mut m, 1e-5, usize::MAX, |t, m| m.loss(t, &eq, label, &mut Mode::Eval).unwrap());
        assert!(check.passes(1e-4), "{check:?}");
    }
    let eq = fe("(+ (sin 2.5) (* -1 0.3))", "0.3");
    for label in [Label::Correct, Label::Incorrect] {
        let check = check_gradients_of(&mut m, 1e-5, 64, |t, m| m.loss(t, &eq, label, &mut Mode::Eval).unwrap());
        assert!(check.passes(1e-4), "{check:?}");
    }
}

#[test]
fn gradient_suite_passes_on_small_models() {
    let suite = gradient_suite(12, 5, 3);
    assert_eq!(suite.cases.len(), 12);
    assert!(suite.passes(1e-4), "{:?}", suite.cases.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err)));
    assert!(suite.cases.iter().all(|c| c.checked > 0));
}

#[test]
fn dropout_only_in_training_mode() {
    let m = model(Arch::TreeLstm, 8);
    let eq = sym("(sin (+ x y))", "(cos x)");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tape::new();
    let eval = m.probability(&eq).unwrap();
    let p = m.verify_symbolic(&mut t, &eq, &mut Mode::Train { dropout: 0.0, rng: &mut rng }).unwrap();
    assert_eq!(t.scalar(p), eval);
    t.clear();
    let p = m.verify_symbolic(&mut t, &eq, &mut Mode::Train { dropout: 0.3, rng: &mut rng }).unwrap();
    assert_ne!(t.scalar(p), eval);
}
