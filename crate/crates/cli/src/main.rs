use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eqverify::config::RunConfig;
use eqverify::datagen::{generate, AxiomSet, Dataset};
use eqverify::expr::Grammar;
use eqverify::models::{gradient_suite, Arch, Model};
use eqverify::tasks::{
    completion_curves, completion_instances, run_experiment, train_test_split, write_curves, TrainedModel, Variant,
};
use eqverify::training::{evaluate_model, train_model, write_log, METRICS_HEADER};

#[derive(Parser, Debug)]
#[command(name = "eqverify", version, about = "Generate equation datasets and train neural equation verifiers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Global {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the generation and training seeds.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for evaluation and completion ranking.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Model architecture: rnn, lstm, treenn or treelstm.
    #[arg(long, global = true, value_name = "ARCH")]
    arch: Option<Arch>,
    /// Train on function-evaluation equations as well.
    #[arg(long, global = true, value_name = "BOOL")]
    use_funceval: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled dataset from the axioms.
    Gen {
        /// Axiom file; the built-in list when neither this nor paths.axioms is set.
        #[arg(long)]
        axioms: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Train a model on the training part of a dataset.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint at --out.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the test part of a dataset.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Top-k equation completion with a checkpoint.
    Complete {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of every model gradient.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Train every configured variant and write an experiment report.
    Experiment {
        /// generalization, extrapolate[-depthK] or completion.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if let Some(j) = g.jobs {
        cfg.experiment.jobs = j;
    }
    if let Some(a) = g.arch {
        cfg.arch = a;
    }
    if let Some(u) = g.use_funceval {
        cfg.training.use_funceval_data = u;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn read_dataset(path: &Path, grammar: &Grammar) -> Result<Dataset> {
    let f = fs::File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    Dataset::read_from(BufReader::new(f), grammar).with_context(|| format!("reading dataset {}", path.display()))
}

fn read_checkpoint(path: &Path, grammar: &Grammar) -> Result<Model> {
    let f = fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    Model::read_for(BufReader::new(f), grammar).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn warn(msg: &str) {
    eprintln!("WARNING: {msg}");
}

/// Warns when the checkpoint was trained on other data or settings.
fn check_provenance(model: &Model, train: &Dataset, cfg: &RunConfig) {
    let meta = &model.meta;
    if !meta.dataset_digest.is_empty() && meta.dataset_digest != train.digest() {
        warn(&format!(
            "checkpoint was trained on dataset {} but the training split here is {}; metrics are not comparable",
            meta.dataset_digest,
            train.digest()
        ));
    }
    let digest = cfg.training().digest();
    if !meta.config_digest.is_empty() && meta.config_digest != digest {
        warn(&format!("checkpoint training config {} differs from the current one {digest}", meta.config_digest));
    }
    if model.arch != cfg.arch {
        warn(&format!("checkpoint architecture is {} but the config selects {}", model.arch, cfg.arch));
    }
}

fn metrics_path(cfg: &RunConfig, stem: &str) -> PathBuf {
    cfg.paths.reports.join(format!("{stem}-{}.csv", cfg.arch))
}

fn cmd_gen(cfg: &RunConfig, axioms: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let grammar = cfg.grammar()?;
    let axioms = match axioms.or_else(|| cfg.paths.axioms.clone()) {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading axioms {}", p.display()))?;
            AxiomSet::parse(&text, &grammar, &cfg.oracle).with_context(|| format!("axiom file {}", p.display()))?
        }
        None => AxiomSet::standard(),
    };
    let (data, report) = generate(&axioms, &cfg.generation(), &grammar, &cfg.oracle)?;
    let out = out.unwrap_or_else(|| cfg.paths.dataset.clone());
    create_parent(&out)?;
    fs::write(&out, data.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", data.summary());
    for (depth, (c, i)) in &report.shortfall {
        if c + i > 0 {
            warn(&format!("depth {depth} is short of its target by {c} correct and {i} incorrect equations"));
        }
    }
    println!("wrote {} equations to {} (sha256 {})", data.len(), out.display(), data.digest());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dataset: Option<PathBuf>, out: Option<PathBuf>, resume: bool) -> Result<()> {
    let grammar = cfg.grammar()?;
    let data = read_dataset(&dataset.unwrap_or_else(|| cfg.paths.dataset.clone()), &grammar)?;
    let (train, test) = train_test_split(&data, cfg.experiment.split_seed)?;
    let out = out.unwrap_or_else(|| cfg.paths.checkpoint.clone());
    let prior = if resume { Some(read_checkpoint(&out, &grammar)?) } else { None };
    if let Some(m) = &prior {
        check_provenance(m, &train, cfg);
    }
    let tcfg = cfg.training();
    let (model, mut log) = train_model(&train, &tcfg, cfg.arch, &grammar, prior)?;
    create_parent(&out)?;
    fs::write(&out, model.to_bytes()).with_context(|| format!("writing {}", out.display()))?;

    let metrics = evaluate_model(&test, &model, cfg.experiment.jobs)?;
    let epochs = model.train_state.as_ref().map_or(0, |s| s.epochs_done);
    log.push(eqverify::training::EpochLog { epoch: epochs, split: "test".into(), mean_loss: f64::NAN, metrics });
    let log_path = metrics_path(cfg, "train");
    create_parent(&log_path)?;
    write_log(&log, cfg.arch, BufWriter::new(fs::File::create(&log_path)?))?;
    let last = &log[log.len() - 1].metrics;
    println!(
        "{} trained {epochs} epochs: test accuracy {:.4}{}",
        cfg.arch,
        last.accuracy,
        last.mse.map_or(String::new(), |m| format!(", funceval mse {m:.4}"))
    );
    println!("checkpoint {}; log {}", out.display(), log_path.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, dataset: Option<PathBuf>, checkpoint: Option<PathBuf>) -> Result<()> {
    let grammar = cfg.grammar()?;
    let data = read_dataset(&dataset.unwrap_or_else(|| cfg.paths.dataset.clone()), &grammar)?;
    let (train, test) = train_test_split(&data, cfg.experiment.split_seed)?;
    let model = read_checkpoint(&checkpoint.unwrap_or_else(|| cfg.paths.checkpoint.clone()), &grammar)?;
    check_provenance(&model, &train, cfg);
    let metrics = evaluate_model(&test, &model, cfg.experiment.jobs)?;
    let epochs = model.train_state.as_ref().map_or(0, |s| s.epochs_done);
    let path = metrics_path(cfg, "eval");
    create_parent(&path)?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(METRICS_HEADER)?;
    w.write_record(metrics.csv_row(epochs, "test", model.arch))?;
    w.flush()?;
    println!("accuracy {:.4} precision {:.4} recall {:.4}", metrics.accuracy, metrics.precision, metrics.recall);
    if let Some(m) = metrics.mse {
        println!("funceval mse {m:.4}");
    }
    if let Some(a) = metrics.funceval_accuracy {
        println!("funceval accuracy {a:.4}");
    }
    for (d, (c, n)) in &metrics.by_depth {
        println!("depth {d}: {c}/{n}");
    }
    println!("metrics {}", path.display());
    Ok(())
}

fn cmd_complete(cfg: &RunConfig, dataset: Option<PathBuf>, checkpoint: Option<PathBuf>) -> Result<()> {
    let grammar = cfg.grammar()?;
    let data = read_dataset(&dataset.unwrap_or_else(|| cfg.paths.dataset.clone()), &grammar)?;
    let (train, test) = train_test_split(&data, cfg.experiment.split_seed)?;
    let model = read_checkpoint(&checkpoint.unwrap_or_else(|| cfg.paths.checkpoint.clone()), &grammar)?;
    check_provenance(&model, &train, cfg);
    let (sym, fe, skipped) = completion_instances(&test, &grammar, &cfg.experiment);
    let variant = Variant::new(model.arch, cfg.training.use_funceval_data);
    let trained = TrainedModel { variant, model, log: Vec::new() };
    let curves = completion_curves(&trained, &sym, &fe, &cfg.experiment, &cfg.oracle)?;
    fs::create_dir_all(&cfg.paths.reports)?;
    let acc_path = cfg.paths.reports.join("completion-topk-accuracy.csv");
    write_curves(std::slice::from_ref(&curves), &acc_path, |c| &c.accuracy)?;
    println!("{} symbolic and {} funceval instances ({skipped} equations without a blank)", sym.len(), fe.len());
    let ks: BTreeSet<usize> =
        [1, 5, 10, cfg.experiment.k_max].into_iter().filter(|&k| k <= cfg.experiment.k_max).collect();
    for &k in &ks {
        if let Some(a) = curves.accuracy.get(k - 1) {
            println!("top-{k} accuracy {a:.4}");
        }
    }
    println!("curves {}", acc_path.display());
    if !curves.min_mse.is_empty() {
        let mse_path = cfg.paths.reports.join("completion-topk-min-mse.csv");
        write_curves(std::slice::from_ref(&curves), &mse_path, |c| &c.min_mse)?;
        for &k in &ks {
            if let Some(m) = curves.min_mse.get(k - 1) {
                println!("top-{k} min mse {m:.4}");
            }
        }
        println!("curves {}", mse_path.display());
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &RunConfig, configs: usize, max_dim: usize, tol: f64) -> Result<bool> {
    if max_dim == 0 {
        bail!("--max-dim must be positive");
    }
    let suite = gradient_suite(configs, max_dim, cfg.training().seed);
    let worst = suite.cases.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err));
    let checked: usize = suite.cases.iter().map(|c| c.checked).sum();
    println!("{} configurations, {checked} partial derivatives checked", suite.cases.len());
    println!("max relative error {:.3e}", suite.max_rel_err());
    if let Some(w) = worst {
        println!("worst: {} {} d={} head_bias={} {}", w.arch, w.kind, w.dim, w.head_bias, w.equation);
    }
    let ok = suite.passes(tol);
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn cmd_experiment(cfg: &RunConfig, name: Option<String>, dataset: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let grammar = cfg.grammar()?;
    let mut ecfg = cfg.experiment.clone();
    if let Some(n) = name {
        ecfg.name = n;
    }
    let exp = ecfg.experiment()?;
    let data = read_dataset(&dataset.unwrap_or_else(|| cfg.paths.dataset.clone()), &grammar)?;
    let out = out.unwrap_or_else(|| cfg.paths.reports.clone());
    let report = run_experiment(exp, &data, &ecfg, &cfg.training(), &cfg.oracle, &grammar, Some(&out))?;
    for row in &report.table {
        let m = &row.metrics;
        println!(
            "{:<16} accuracy {:.4}{}",
            row.variant.to_string(),
            m.accuracy,
            m.mse.map_or(String::new(), |v| format!("  funceval mse {v:.4}"))
        );
    }
    for c in &report.completion {
        println!("{:<16} top-1 {:.4}", c.variant.to_string(), c.accuracy.first().copied().unwrap_or(0.0));
    }
    for f in &report.manifest.files {
        println!("wrote {f}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Gen { axioms, out } => cmd_gen(&cfg, axioms, out)?,
        Command::Train { dataset, out, resume } => cmd_train(&cfg, dataset, out, resume)?,
        Command::Eval { dataset, checkpoint } => cmd_eval(&cfg, dataset, checkpoint)?,
        Command::Complete { dataset, checkpoint } => cmd_complete(&cfg, dataset, checkpoint)?,
        Command::Gradcheck { configs, max_dim, tol } => return cmd_gradcheck(&cfg, configs, max_dim, tol),
        Command::Experiment { name, dataset, out } => cmd_experiment(&cfg, name, dataset, out)?,
        Command::Config => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(cfg.to_toml().as_bytes())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
