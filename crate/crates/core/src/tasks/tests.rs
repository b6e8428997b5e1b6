use proptest::prelude::*;
use rand::seq::SliceRandom;

use super::*;
use crate::datagen::{generate, AxiomSet, GenConfig, Provenance, Record};
use crate::eval::{verify, Label, Verdict};
use crate::expr::{parse, Equation, FunctionTable, Side};

fn eq(l: &str, r: &str) -> Equation {
    Equation::infer(parse(l).unwrap(), parse(r).unwrap()).unwrap()
}

fn instance(l: &str, r: &str, side: Side, path: &[usize]) -> CompletionInstance {
    let equation = eq(l, r);
    let ground_truth = equation.get(side, path).unwrap().clone();
    let candidates = match equation.kind() {
        Kind::Symbolic => symbolic_candidates(&FunctionTable::standard()),
        Kind::FuncEval => numeric_candidates(),
    };
    CompletionInstance { equation, side, path: path.to_vec(), ground_truth, candidates }
}

fn small_data() -> Dataset {
    let cfg = GenConfig { symbolic_count: 300, funceval_count: 120, seed: 3, ..GenConfig::default() };
    generate(&AxiomSet::standard(), &cfg, &Grammar::default(), &OracleConfig::default()).unwrap().0
}

fn ranking_of(inst: &CompletionInstance, order: &[usize]) -> RankedPredictions {
    let n = order.len() as f64;
    RankedPredictions::from_scores(
        order.iter().enumerate().map(|(i, &c)| (inst.candidates[c].clone(), n - i as f64)).collect(),
    )
}

#[test]
fn symbolic_candidate_count_matches_formula() {
    let f = FunctionTable::standard();
    let t = crate::expr::table_terminals().len();
    let (u, b) = (f.unary().count(), f.binary().count());
    assert_eq!((t, u, b), (12, 25, 3));
    assert_eq!(symbolic_candidates(&f).len(), t + u * t + b * t * t);
}

#[test]
fn numeric_candidates_cover_the_grid_once() {
    let c = numeric_candidates();
    // 11 constants plus the 629 grid numbers, minus the 8 grid values that
    // are constants (0, 1, 2, 3, 0.5, -1, 0.4, 0.7).
    assert_eq!(c.len(), 11 + 629 - 8);
    let printed: std::collections::HashSet<String> = c.iter().map(|e| e.to_string()).collect();
    assert_eq!(printed.len(), c.len());
    assert!(printed.contains("2.18") && printed.contains("pi") && printed.contains("-3.14"));
}

#[test]
fn blanks_have_depth_one_or_two() {
    let e = eq("(cos (* -1 2.18))", "-0.57");
    let blanks = eligible_blanks(&e);
    let printed: Vec<String> = blanks.iter().map(|(s, p)| e.get(*s, p).unwrap().to_string()).collect();
    assert_eq!(printed, ["(* -1 2.18)", "-1", "2.18", "-0.57"]);
}

#[test]
fn blank_fills_are_judged_by_the_oracle() {
    let inst = instance("(^ 4 (tanh 0))", "(^ 1 x)", Side::Rhs, &[0]);
    assert_eq!(inst.display(), "(^ 4 (tanh 0)) = (^ _ x)");
    let oracle = OracleConfig::default();
    for fill in ["(^ -1 0)", "(^ 2 0)", "1"] {
        let e = parse(fill).unwrap();
        assert!(inst.candidates.contains(&e), "{fill}");
        assert_eq!(verify(&inst.fill(&e).unwrap(), &oracle), Verdict::Correct, "{fill}");
    }
    assert_eq!(verify(&inst.fill(&parse("2").unwrap()).unwrap(), &oracle), Verdict::Incorrect);
}

#[test]
fn min_mse_arithmetic() {
    let inst = instance("(cos (* -1 2.18))", "-0.57", Side::Lhs, &[0, 1]);
    assert_eq!(inst.display(), "(cos (* -1 _)) = -0.57");
    let scores = [("3", 0.9), ("2.17", 0.8), ("2.16", 0.7), ("2.18", 0.6)];
    let ranking = RankedPredictions::from_scores(scores.iter().map(|(e, c)| (parse(e).unwrap(), *c)).collect());
    let one = std::slice::from_ref(&inst);
    let r = std::slice::from_ref(&ranking);
    assert!((top_k_min_mse(one, r, 1).unwrap() - 0.82f64.powi(2)).abs() < 1e-12);
    assert!((top_k_min_mse(one, r, 3).unwrap() - 1e-4).abs() < 1e-12);
    assert_eq!(top_k_min_mse(one, r, 4).unwrap(), 0.0);
}

#[test]
fn ground_truth_on_top_contributes_zero() {
    let inst = instance("(sin 0.5)", "0.48", Side::Rhs, &[]);
    let truth = inst.candidates.iter().position(|c| *c == inst.ground_truth).unwrap();
    let mut order: Vec<usize> = (0..inst.candidates.len()).collect();
    order.swap(0, truth);
    let r = ranking_of(&inst, &order);
    assert_eq!(top_k_min_mse(&[inst], &[r], 1).unwrap(), 0.0);
}

#[test]
fn top_k_accuracy_extremes() {
    let inst = instance("(sin x)", "(cos (+ x (* -1 (* pi 0.5))))", Side::Lhs, &[]);
    let oracle = OracleConfig::default();
    let n = inst.candidates.len();
    let correct: Vec<usize> =
        (0..n).filter(|&i| verify(&inst.fill(&inst.candidates[i]).unwrap(), &oracle) == Verdict::Correct).collect();
    assert!(!correct.is_empty());
    // Every correct candidate last.
    let mut order: Vec<usize> = (0..n).filter(|i| !correct.contains(i)).collect();
    order.extend(&correct);
    let r = ranking_of(&inst, &order);
    let one = std::slice::from_ref(&inst);
    assert_eq!(top_k_accuracy(one, std::slice::from_ref(&r), 1, &oracle).unwrap(), 0.0);
    assert_eq!(top_k_accuracy(one, std::slice::from_ref(&r), n, &oracle).unwrap(), 1.0);
    assert_eq!(first_correct_rank(&inst, &r, n, &oracle).unwrap(), Some(n - correct.len()));
}

#[test]
fn ranking_orders_by_confidence_then_print() {
    let r = RankedPredictions::from_scores(vec![
        (parse("x").unwrap(), 0.5),
        (parse("1").unwrap(), f64::NAN),
        (parse("0").unwrap(), 0.5),
        (parse("pi").unwrap(), 0.9),
    ]);
    let printed: Vec<String> = r.entries.iter().map(|(e, _)| e.to_string()).collect();
    assert_eq!(printed, ["pi", "0", "x", "1"]);
}

#[test]
fn untrained_model_gives_a_total_order() {
    let g = Grammar::default();
    for arch in [Arch::TreeLstm, Arch::Lstm] {
        let m = Model::new(arch, 4, &g, 1);
        for inst in [instance("(sin x)", "(sin x)", Side::Rhs, &[0]), instance("(cos 0.5)", "0.88", Side::Lhs, &[0])] {
            let r = rank_candidates(&inst, &m).unwrap();
            assert_eq!(r.len(), inst.candidates.len());
            assert!(r.entries.windows(2).all(|w| w[0].1 >= w[1].1));
            if arch.is_tree() && inst.kind() == Kind::FuncEval {
                assert!(r.entries.iter().all(|(_, c)| *c <= 0.0));
            }
        }
    }
}

#[test]
fn incorrect_equations_get_no_instances() {
    let mut d = Dataset::new();
    d.insert(Record::new(eq("(sin x)", "(cos x)"), Label::Incorrect, Provenance::Mutation));
    d.insert(Record::new(eq("x", "x"), Label::Correct, Provenance::Axiom));
    let set = make_completion_instances(&d, &FunctionTable::standard(), &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(set.instances.len(), 1);
    assert_eq!(set.skipped, 0);
    assert_eq!(set.instances[0].ground_truth.to_string(), "x");
}

#[test]
fn variant_and_experiment_names() {
    for s in ["rnn", "treelstm+data", "treenn"] {
        assert_eq!(s.parse::<Variant>().unwrap().to_string(), s);
    }
    assert!("tree+data".parse::<Variant>().is_err());
    assert_eq!("extrapolate".parse::<Experiment>().unwrap(), Experiment::ExtrapolateDepth(4));
    assert_eq!("extrapolate-depth3".parse::<Experiment>().unwrap(), Experiment::ExtrapolateDepth(3));
    assert_eq!(Experiment::ExtrapolateDepth(4).slug(), "extrapolate-depth4");
    assert!("table9".parse::<Experiment>().is_err());
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"variants": ["lstm", "treelstm+data"]}"#).unwrap();
    assert_eq!(cfg.variants, vec![Variant::new(Arch::Lstm, false), Variant::new(Arch::TreeLstm, true)]);
}

#[test]
fn extrapolation_trains_without_the_held_out_depth() {
    let d = small_data();
    let (train, test) = experiment_split(Experiment::ExtrapolateDepth(4), &d, &ExperimentConfig::default()).unwrap();
    assert!(train.iter().all(|r| r.kind() == Kind::FuncEval || r.depth() < 4));
    assert!(test.iter().all(|r| r.kind() == Kind::Symbolic && r.depth() == 4));
    assert_eq!(train.len() + test.len(), d.len());
}

fn temp_dir(tag: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("eqverify-tasks-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&p);
    p
}

#[test]
fn experiments_write_identical_reports_twice() {
    let d = small_data();
    let g = Grammar::default();
    let tc = TrainConfig { dim: 4, epochs: 2, pretrain_steps: 2, seed: 9, ..TrainConfig::default() };
    let cfg = ExperimentConfig {
        variants: vec![Variant::new(Arch::Rnn, false), Variant::new(Arch::TreeLstm, true)],
        k_max: 5,
        max_instances: 6,
        ..ExperimentConfig::default()
    };
    for exp in [Experiment::Generalization, Experiment::Completion] {
        let (a, b) = (temp_dir("a"), temp_dir("b"));
        let ra = run_experiment(exp, &d, &cfg, &tc, &OracleConfig::default(), &g, Some(&a)).unwrap();
        run_experiment(exp, &d, &cfg, &tc, &OracleConfig::default(), &g, Some(&b)).unwrap();
        assert!(!ra.manifest.files.is_empty());
        for f in &ra.manifest.files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        match exp {
            Experiment::Generalization => {
                assert_eq!(ra.table.len(), 2);
                let text = fs::read_to_string(a.join("generalization.csv")).unwrap();
                assert!(text.starts_with("variant,symbolic_accuracy,funceval_mse,"));
                assert!(text.contains("\ntreelstm+data,"));
            }
            _ => {
                let c = &ra.completion;
                assert_eq!(c[0].accuracy.len(), 5);
                assert!(c[0].min_mse.is_empty() && c[1].min_mse.len() == 5);
                assert!(c[1].symbolic_instances <= 6 && c[1].funceval_instances <= 6);
            }
        }
        let _ = fs::remove_dir_all(&a);
        let _ = fs::remove_dir_all(&b);
    }
}

fn correct_records() -> &'static [Equation] {
    static EQS: std::sync::OnceLock<Vec<Equation>> = std::sync::OnceLock::new();
    EQS.get_or_init(|| small_data().iter().filter(|r| r.label.is_correct()).map(|r| r.equation.clone()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ground_truth_restores_the_equation(seed in any::<u64>()) {
        let eqs = correct_records();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = eqs.choose(&mut rng).unwrap();
        let d = Dataset::from_records([Record::new(e.clone(), Label::Correct, Provenance::Axiom)]);
        let set = make_completion_instances(&d, &FunctionTable::standard(), &mut rng);
        prop_assert_eq!(set.instances.len(), 1);
        let inst = &set.instances[0];
        prop_assert!((1..=2).contains(&inst.ground_truth.depth()));
        let restored = inst.fill(&inst.ground_truth).unwrap();
        prop_assert_eq!(restored.to_string(), e.to_string());
        prop_assert_eq!(verify(&restored, &OracleConfig::default()), Verdict::Correct);
    }

    #[test]
    fn top_k_curves_are_monotone_for_any_ranking(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let insts = [
            instance("(^ 4 (tanh 0))", "(^ 1 x)", Side::Rhs, &[0]),
            instance("(sin (* 2 x))", "(* 2 (* (sin x) (cos x)))", Side::Lhs, &[0, 0]),
            instance("(cos (* -1 2.18))", "-0.57", Side::Lhs, &[0, 1]),
            instance("(exp 0.5)", "1.65", Side::Rhs, &[]),
        ];
        let rankings: Vec<RankedPredictions> = insts
            .iter()
            .map(|i| {
                let mut order: Vec<usize> = (0..i.candidates.len()).collect();
                order.shuffle(&mut rng);
                ranking_of(i, &order)
            })
            .collect();
        let acc = top_k_accuracy_curve(&insts[..2], &rankings[..2], 25, &OracleConfig::default()).unwrap();
        let mse = top_k_min_mse_curve(&insts[2..], &rankings[2..], 25).unwrap();
        prop_assert!(check_monotone(&acc, true, "accuracy").is_ok());
        prop_assert!(check_monotone(&mse, false, "mse").is_ok());
        prop_assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}
