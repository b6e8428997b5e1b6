//! Acceptance run at the reduced tier. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use eqverify::datagen::{generate, AxiomSet, Dataset, GenConfig};
use eqverify::eval::{verify, OracleConfig, Verdict};
use eqverify::expr::{parse_equation, Equation, Grammar, Kind};
use eqverify::models::{gradient_suite, Arch, Model};
use eqverify::tasks::{
    completion_curves, completion_instances, experiment_split, train_test_split, Experiment, ExperimentConfig,
    TrainedModel, Variant,
};
use eqverify::training::{evaluate_model, pretrain_autoencoder, train_model, Metrics, TrainConfig};

const GRAD_CONFIGS: usize = 100;
const GRAD_MAX_DIM: usize = 8;
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const GEN_SYMBOLIC: usize = 10_000;
const CORRECT_FRACTION: (f64, f64) = (0.45, 0.55);

const REDUCED_SYMBOLIC: usize = 5_000;
const REDUCED_FUNCEVAL: usize = 4_000;
const REDUCED_DIM: usize = 20;
const REDUCED_EPOCHS: usize = 50;
const REDUCED_BAR: f64 = 0.85;
const REDUCED_BUDGET: Duration = Duration::from_secs(30 * 60);
const SEEDS: [u64; 3] = [1, 2, 3];

const MSE_BAR: f64 = 0.20;
const EXTRAPOLATION_BAR: f64 = 0.85;
const AUTOENCODER_TOL: f64 = 0.01;
const GRID_SIZE: usize = 629;

#[derive(Default)]
struct Report {
    lines: Vec<(u32, bool, String)>,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let text = format!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{text}");
        self.lines.push((id, pass, text));
    }
}

fn eq(text: &str, grammar: &Grammar) -> Equation {
    let (l, r) = parse_equation(text, grammar).unwrap_or_else(|e| panic!("{text}: {e}"));
    Equation::infer(l, r).unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn reduced_config(seed: u64) -> TrainConfig {
    TrainConfig { dim: REDUCED_DIM, epochs: REDUCED_EPOCHS, seed, ..TrainConfig::default() }
}

fn train(train: &Dataset, arch: Arch, data: bool, seed: u64, grammar: &Grammar) -> TrainedModel {
    let cfg = TrainConfig { use_funceval_data: data, ..reduced_config(seed) };
    let (model, log) = train_model(train, &cfg, arch, grammar, None).expect("training");
    TrainedModel { variant: Variant::new(arch, data), model, log }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn gradients(r: &mut Report) {
    let t = Instant::now();
    let suite = gradient_suite(GRAD_CONFIGS, GRAD_MAX_DIM, 1);
    let took = t.elapsed();
    let archs: HashSet<Arch> = suite.cases.iter().map(|c| c.arch).collect();
    let heads: HashSet<Kind> = suite.cases.iter().filter(|c| c.arch.is_tree()).map(|c| c.kind).collect();
    let covered = archs.len() == 4 && heads.len() == 2 && suite.cases.len() == GRAD_CONFIGS;
    let pass = covered && suite.passes(GRAD_TOL) && took < GRAD_BUDGET;
    r.line(
        1,
        "gradient correctness",
        pass,
        format!(
            "{} configs, d <= {GRAD_MAX_DIM}, max rel err {:.2e} (< {GRAD_TOL:e}), {:.1}s (< {}s)",
            suite.cases.len(),
            suite.max_rel_err(),
            took.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    );
}

fn oracle_fidelity(r: &mut Report, grammar: &Grammar, oracle: &OracleConfig) {
    let axioms = AxiomSet::standard();
    let bad_axioms = axioms.equations.iter().filter(|e| verify(e, oracle) != Verdict::Correct).count();
    let correct = [
        "(^ 1 2) = (^ x (* -1 0))",
        "(^ (atan 10) (^ 2 2)) = (^ (atan 10) (+ 3 1))",
        "(* x (+ -1 x)) = (* x (+ x -1))",
        "(^ x 1) = (+ x 0)",
    ];
    let incorrect = [
        "(^ 0.5 (+ x 2)) = (^ (sin 0.5) (+ x 2))",
        "(* pi (csc x)) = (* -1 (csc x))",
        "(* -1 4) = (* -1 (^ 4 x))",
        "(* (* (^ 2 0.5) (^ 2 -1)) (^ x 0.5)) = (^ x 0.5)",
    ];
    let wrong: Vec<&str> = correct
        .iter()
        .filter(|t| verify(&eq(t, grammar), oracle) != Verdict::Correct)
        .chain(incorrect.iter().filter(|t| verify(&eq(t, grammar), oracle) != Verdict::Incorrect))
        .copied()
        .collect();
    r.line(
        2,
        "oracle fidelity",
        bad_axioms == 0 && wrong.is_empty(),
        format!("{} axioms, {bad_axioms} not correct; reference examples misjudged: {wrong:?}", axioms.len()),
    );
}

fn generator(r: &mut Report, grammar: &Grammar, oracle: &OracleConfig) {
    let cfg = GenConfig { symbolic_count: GEN_SYMBOLIC, seed: 1, ..GenConfig::default() };
    let (data, _) = generate(&AxiomSet::standard(), &cfg, grammar, oracle).expect("generation");
    let sym = data.of_kind(Kind::Symbolic);
    let mut invalid = 0;
    let mut keys = HashSet::new();
    let mut mismatches = 0;
    for rec in sym.iter() {
        let text = rec.equation.to_string();
        let reparsed = parse_equation(&text, grammar).ok().and_then(|(l, r)| Equation::new(l, r, Kind::Symbolic).ok());
        if reparsed.as_ref() != Some(&rec.equation) || rec.depth() > 4 {
            invalid += 1;
        }
        keys.insert(rec.key());
        if verify(&rec.equation, oracle).label() != Some(rec.label) {
            mismatches += 1;
        }
    }
    let dupes = sym.len() - keys.len();
    let frac = sym.stats().correct_fraction(Some(Kind::Symbolic));
    let pass = sym.len() >= GEN_SYMBOLIC
        && invalid == 0
        && dupes == 0
        && mismatches == 0
        && (CORRECT_FRACTION.0..=CORRECT_FRACTION.1).contains(&frac);
    r.line(
        3,
        "generator integrity",
        pass,
        format!(
            "{} symbolic, {invalid} invalid, {dupes} duplicates, {mismatches} label mismatches, correct fraction {frac:.3} (in [{}, {}])",
            sym.len(),
            CORRECT_FRACTION.0,
            CORRECT_FRACTION.1
        ),
    );
}

fn autoencoder(r: &mut Report, grammar: &Grammar) {
    let cfg = reduced_config(1);
    let mut model = Model::new(Arch::TreeLstm, cfg.dim, grammar, cfg.seed);
    pretrain_autoencoder(&mut model, cfg.pretrain_steps, cfg.pretrain_lr, cfg.seed);
    let grid = Model::number_grid();
    let worst = grid.iter().map(|n| (model.round_trip(n.value()) - n.value()).abs()).fold(0.0, f64::max);
    r.line(
        8,
        "autoencoder round trip",
        grid.len() == GRID_SIZE && worst <= AUTOENCODER_TOL,
        format!("{} grid values, max |decode(encode(n)) - n| = {worst:.4} (<= {AUTOENCODER_TOL})", grid.len()),
    );
}

fn fmt_acc(m: &Metrics) -> String {
    format!("{:.4}", m.accuracy)
}

/// Criteria 4, 5 and 7 share the reduced-tier models.
fn verification(r: &mut Report, data: &Dataset, grammar: &Grammar, oracle: &OracleConfig) {
    let (train_set, test) = train_test_split(data, 7).expect("split");
    let start = Instant::now();
    let order = [Arch::TreeLstm, Arch::TreeNn, Arch::Lstm, Arch::Rnn];
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); order.len()];
    let mut seed_one = Vec::new();
    for &seed in &SEEDS {
        for (i, &arch) in order.iter().enumerate() {
            let t = train(&train_set, arch, false, seed, grammar);
            let m = evaluate_model(&test, &t.model, 1).expect("evaluation");
            println!("  {} seed {seed}: accuracy {}", t.variant, fmt_acc(&m));
            acc[i].push(m.accuracy);
            if seed == SEEDS[0] {
                seed_one.push(t);
            }
        }
    }
    let mut with_data = Vec::new();
    for arch in [Arch::TreeLstm, Arch::TreeNn] {
        let t = train(&train_set, arch, true, SEEDS[0], grammar);
        let m = evaluate_model(&test, &t.model, 1).expect("evaluation");
        println!("  {} seed {}: accuracy {} funceval mse {:?}", t.variant, SEEDS[0], fmt_acc(&m), m.mse);
        with_data.push((t, m));
    }
    let took = start.elapsed();
    let med: Vec<f64> = acc.iter().map(|v| median(v.clone())).collect();
    let ordered = med.windows(2).all(|w| w[0] > w[1]);
    let lstm_data = with_data[0].1.accuracy;
    let pass = lstm_data >= REDUCED_BAR && med[0] >= REDUCED_BAR && ordered && took <= REDUCED_BUDGET;
    r.line(
        4,
        "verification generalization (reduced tier)",
        pass,
        format!(
            "treelstm+data {lstm_data:.4}, medians treelstm {:.4} > treenn {:.4} > lstm {:.4} > rnn {:.4}: {ordered}; bar {REDUCED_BAR}; {:.0}s (<= {}s)",
            med[0],
            med[1],
            med[2],
            med[3],
            took.as_secs_f64(),
            REDUCED_BUDGET.as_secs()
        ),
    );

    let (lstm_mse, nn_mse) = (with_data[0].1.mse.unwrap_or(f64::INFINITY), with_data[1].1.mse.unwrap_or(f64::INFINITY));
    r.line(
        5,
        "funceval mse",
        lstm_mse <= MSE_BAR && lstm_mse < nn_mse,
        format!("treelstm+data {lstm_mse:.4} (<= {MSE_BAR}), treenn+data {nn_mse:.4}"),
    );

    let ecfg = ExperimentConfig::default();
    let (sym, fe, _) = completion_instances(&test, grammar, &ecfg);
    let mut monotone = true;
    let mut top1 = Vec::new();
    for t in seed_one.iter().chain(with_data.iter().map(|(t, _)| t)) {
        match completion_curves(t, &sym, &fe, &ecfg, oracle) {
            Ok(c) => {
                println!(
                    "  {} completion top-1 {:.4} top-{} {:.4}",
                    t.variant,
                    c.accuracy[0],
                    ecfg.k_max,
                    c.accuracy[ecfg.k_max - 1]
                );
                top1.push((t.variant, c.accuracy[0]));
            }
            Err(e) => {
                println!("  {} completion: {e}", t.variant);
                monotone = false;
            }
        }
    }
    let get = |v: Variant| top1.iter().find(|(w, _)| *w == v).map_or(f64::NAN, |p| p.1);
    let (a, b) = (get(Variant::new(Arch::TreeLstm, true)), get(Variant::new(Arch::TreeNn, true)));
    r.line(
        7,
        "completion metrics",
        monotone && a >= b,
        format!(
            "{} symbolic / {} funceval instances, curves monotone for all {} models: {monotone}; top-1 treelstm+data {a:.4} >= treenn+data {b:.4}",
            sym.len(),
            fe.len(),
            top1.len()
        ),
    );
}

fn extrapolation(r: &mut Report, data: &Dataset, grammar: &Grammar) {
    let (train_set, test) =
        experiment_split(Experiment::ExtrapolateDepth(4), data, &ExperimentConfig::default()).expect("split");
    let mut depths: Vec<usize> =
        train_set.of_kind(Kind::Symbolic).iter().map(|r| r.depth()).collect::<HashSet<_>>().into_iter().collect();
    depths.sort_unstable();
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for &seed in &SEEDS {
        for (data_flag, out) in [(true, &mut with), (false, &mut without)] {
            let t = train(&train_set, Arch::TreeLstm, data_flag, seed, grammar);
            let acc = evaluate_model(&test, &t.model, 1).expect("evaluation").accuracy;
            println!("  extrapolation {} seed {seed}: accuracy {acc:.4}", t.variant);
            out.push(acc);
        }
    }
    let (w, wo) = (median(with), median(without));
    r.line(
        6,
        "depth extrapolation",
        w >= EXTRAPOLATION_BAR && w >= wo,
        format!(
            "train depths {depths:?}, test depth 4 ({} equations), medians over {} seeds: treelstm+data {w:.4} (>= {EXTRAPOLATION_BAR}), treelstm {wo:.4}",
            test.len(),
            SEEDS.len()
        ),
    );
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_eqverify")).current_dir(dir).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn determinism(r: &mut Report) {
    let dir = std::env::temp_dir().join(format!("eqverify-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("temp dir");
    let config = format!(
        "seed = 5\narch = \"treelstm\"\n\n[generation]\nsymbolic_count = {REDUCED_SYMBOLIC}\nfunceval_count = {REDUCED_FUNCEVAL}\n\n[training]\ndim = {REDUCED_DIM}\nepochs = {REDUCED_EPOCHS}\n"
    );
    fs::write(dir.join("run.toml"), config).expect("config");
    let mut runs = Vec::new();
    for i in 0..2 {
        let dataset = format!("data{i}.jsonl");
        let ckpt = format!("model{i}.ckpt");
        let ok = run_cli(&dir, &["--config", "run.toml", "gen", "--out", &dataset])
            && run_cli(&dir, &["--config", "run.toml", "train", "--dataset", &dataset, "--out", &ckpt])
            && run_cli(&dir, &["--config", "run.toml", "eval", "--dataset", &dataset, "--checkpoint", &ckpt]);
        // Both runs write to the same report paths, so read them right away.
        let read = |p: &str| fs::read(dir.join(p)).unwrap_or_default();
        runs.push((ok, read(&dataset), read("reports/train-treelstm.csv"), read("reports/eval-treelstm.csv")));
    }
    let _ = fs::remove_dir_all(&dir);
    let ok = runs.iter().all(|r| r.0 && !r.1.is_empty() && !r.3.is_empty());
    let same = runs[0].1 == runs[1].1 && runs[0].2 == runs[1].2 && runs[0].3 == runs[1].3;
    r.line(
        9,
        "determinism",
        ok && same,
        format!(
            "two gen+train+eval runs: commands succeeded {ok}, dataset bytes equal {}, train log equal {}, eval metrics equal {}",
            runs[0].1 == runs[1].1,
            runs[0].2 == runs[1].2,
            runs[0].3 == runs[1].3
        ),
    );
}

fn main() {
    let grammar = Grammar::default();
    let oracle = OracleConfig::default();
    let mut r = Report::default();
    let start = Instant::now();

    gradients(&mut r);
    oracle_fidelity(&mut r, &grammar, &oracle);
    generator(&mut r, &grammar, &oracle);
    autoencoder(&mut r, &grammar);

    let cfg = GenConfig {
        symbolic_count: REDUCED_SYMBOLIC,
        funceval_count: REDUCED_FUNCEVAL,
        seed: 1,
        ..GenConfig::default()
    };
    let (data, _) = generate(&AxiomSet::standard(), &cfg, &grammar, &oracle).expect("generation");
    verification(&mut r, &data, &grammar, &oracle);
    extrapolation(&mut r, &data, &grammar);
    determinism(&mut r);

    r.lines.sort_by_key(|l| l.0);
    println!("\nsummary");
    for (_, _, text) in &r.lines {
        println!("{text}");
    }
    let failed = r.lines.iter().filter(|l| !l.1).count();
    println!("{failed} of {} criteria failed; {:.0}s total", r.lines.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
