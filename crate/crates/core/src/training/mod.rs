//! Adam training loop, evaluation metrics and threshold calibration.

mod adam;
mod metrics;

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tape;
use crate::datagen::{DataError, Dataset, Record};
use crate::expr::{Grammar, Kind};
use crate::models::{Arch, Mode, Model, ModelError};

pub use adam::Adam;
pub use metrics::{evaluate_model, Confusion, Metrics, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: u64 },
    #[error("threshold calibration needs both labels among function-evaluation records")]
    SingleLabel,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    pub dropout: f64,
    pub dim: usize,
    pub seed: u64,
    /// Examples per parameter update; only 1 is supported.
    pub batch_size: usize,
    pub use_funceval_data: bool,
    /// Autoencoder pretraining passes over the number grid, each one Adam
    /// update per grid number.
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    /// Share of the training set held out for early stopping and
    /// threshold calibration.
    pub validation_fraction: f64,
    /// Stop after this many epochs without a better validation accuracy;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Update only the parameters each example touches.
    pub lazy_updates: bool,
    /// Learned scalar offset in the symbolic head of tree models.
    pub head_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 1e-5,
            dropout: 0.2,
            dim: 50,
            seed: 1,
            batch_size: 1,
            use_funceval_data: true,
            pretrain_steps: 300,
            pretrain_lr: 5e-4,
            validation_fraction: 0.1,
            patience: 0,
            lazy_updates: true,
            head_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size != 1 {
            return bad("batch_size must be 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.lr < 0.0 || self.l2 < 0.0 || self.pretrain_lr < 0.0 {
            return bad("learning rates and l2 must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// SHA-256 of the serialized config.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable")))
    }

    fn adam(&self) -> Adam {
        Adam { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, l2: self.l2 }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub mean_loss: f64,
    pub metrics: Metrics,
}

fn epoch_seed(seed: u64, epoch: usize, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((epoch as u64) << 8) ^ stream
}

/// Splits off the validation part of a training set, deterministically.
pub fn validation_split(train: &Dataset, cfg: &TrainConfig) -> Result<(Dataset, Dataset), TrainError> {
    if cfg.validation_fraction == 0.0 || train.len() < 10 {
        return Ok((train.clone(), Dataset::new()));
    }
    Ok(train.split_fraction(cfg.validation_fraction, cfg.seed ^ 0x5eed)?)
}

/// Records used for training under `cfg`: symbolic records, plus
/// function-evaluation records when enabled.
pub fn training_records(train: &Dataset, cfg: &TrainConfig) -> Vec<Record> {
    train.iter().filter(|r| r.kind() == Kind::Symbolic || cfg.use_funceval_data).cloned().collect()
}

/// Fits the number autoencoder on the grid of data-range numbers. Each step
/// is one shuffled pass over the grid with an Adam update per number; the
/// learning rate decays along a cosine to 1% of `lr`. Returns the final
/// maximum absolute round-trip error.
pub fn pretrain_autoencoder(model: &mut Model, steps: usize, lr: f64, seed: u64) -> f64 {
    let mut grid: Vec<f64> = Model::number_grid().iter().map(|n| n.value()).collect();
    let enc_dec = model.number_block_ids();
    let mut adam = Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, l2: 0.0 };
    let mut state = adam.fresh_state(&model.params);
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.params.zero_grads();
    for s in 0..steps {
        let frac = s as f64 / steps as f64;
        adam.lr = lr * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()));
        grid.shuffle(&mut rng);
        for &x in &grid {
            tape.clear();
            let e = model.encode_number(&mut tape, x);
            let d = model.decode_number(&mut tape, e);
            let l = tape.mse(d, &[x]);
            tape.backward(l, &mut model.params);
            adam.step(&mut model.params, &mut state, &enc_dec);
            for &id in &enc_dec {
                model.params.get_mut(id).grad.fill(0.0);
            }
        }
    }
    grid.iter().map(|&x| (model.round_trip(x) - x).abs()).fold(0.0, f64::max)
}

type BlockKey = (usize, u64, usize, u64);

/// Pretrained number blocks by (dim, seed, steps, lr bits). The blocks'
/// initialization does not depend on the architecture, so one pretraining
/// serves every model with the same settings.
fn block_cache() -> &'static Mutex<HashMap<BlockKey, Vec<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<BlockKey, Vec<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn pretrained_number_blocks(model: &mut Model, cfg: &TrainConfig) {
    let key = (cfg.dim, cfg.seed, cfg.pretrain_steps, cfg.pretrain_lr.to_bits());
    let ids = model.number_block_ids();
    let cached = block_cache().lock().expect("cache lock").get(&key).cloned();
    let values = match cached {
        Some(v) => v,
        None => {
            pretrain_autoencoder(model, cfg.pretrain_steps, cfg.pretrain_lr, cfg.seed);
            let v: Vec<Vec<f64>> = ids.iter().map(|id| model.params.value(*id).to_vec()).collect();
            block_cache().lock().expect("cache lock").insert(key, v.clone());
            v
        }
    };
    for (id, v) in ids.into_iter().zip(values) {
        model.params.get_mut(id).value = v;
    }
}

/// Trains a model from scratch, or resumes one whose `train_state` records
/// completed epochs. The validation split is carved out of `train`.
pub fn train_model(
    train: &Dataset,
    cfg: &TrainConfig,
    arch: Arch,
    grammar: &Grammar,
    resume: Option<Model>,
) -> Result<(Model, Vec<EpochLog>), TrainError> {
    cfg.validate()?;
    let (fit, validation) = validation_split(train, cfg)?;
    let records = training_records(&fit, cfg);
    if records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let validation = validation.filter(|r| r.kind() == Kind::Symbolic || cfg.use_funceval_data);

    let mut model = match resume {
        Some(m) => m,
        None => {
            let mut m = Model::with_head_bias(arch, cfg.dim, grammar, cfg.seed, cfg.head_bias);
            if cfg.pretrain_steps > 0 {
                pretrained_number_blocks(&mut m, cfg);
            }
            m
        }
    };
    model.meta.config_digest = cfg.digest();
    model.meta.dataset_digest = train.digest();
    let adam = cfg.adam();
    let mut state = model.train_state.take().unwrap_or_else(|| adam.fresh_state(&model.params));
    let all_ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();

    let mut log = Vec::new();
    let mut tape = Tape::new();
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..records.len()).collect();
    for epoch in state.epochs_done..cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 1));
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 2));
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &i in &order {
            let r = &records[i];
            tape.clear();
            let mut mode = Mode::Train { dropout: cfg.dropout, rng: &mut dropout_rng };
            let loss = model.loss(&mut tape, &r.equation, r.label, &mut mode)?;
            let l = tape.scalar(loss);
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch, step: state.step });
            }
            total += l;
            tape.backward(loss, &mut model.params);
            if cfg.lazy_updates {
                let used = tape.params_used();
                adam.step(&mut model.params, &mut state, &used);
                for id in used {
                    model.params.get_mut(id).grad.fill(0.0);
                }
            } else {
                adam.step(&mut model.params, &mut state, &all_ids);
                model.params.zero_grads();
            }
        }
        state.epochs_done = epoch + 1;
        let mean_loss = total / records.len() as f64;
        if !validation.is_empty() {
            let metrics = evaluate_model(&validation, &model, 1)?;
            let acc = metrics.accuracy;
            log.push(EpochLog { epoch: epoch + 1, split: "validation".into(), mean_loss, metrics });
            if acc > best {
                best = acc;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            log.push(EpochLog { epoch: epoch + 1, split: "train".into(), mean_loss, metrics: Metrics::default() });
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            break;
        }
    }
    if arch.is_tree() && cfg.use_funceval_data {
        match calibrate_func_eval_threshold(&validation, &model) {
            Ok(tau) => model.meta.threshold = Some(tau),
            Err(TrainError::SingleLabel) => {}
            Err(e) => return Err(e),
        }
    }
    model.train_state = Some(state);
    Ok((model, log))
}

/// Threshold on the squared side gap that maximizes balanced accuracy of
/// the function-evaluation validity call on `validation`. Ties go to the
/// smallest threshold.
pub fn calibrate_func_eval_threshold(validation: &Dataset, model: &Model) -> Result<f64, TrainError> {
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for r in validation.iter().filter(|r| r.kind() == Kind::FuncEval) {
        scored.push((model.func_eval_error(&r.equation)?.sq_err, r.label.is_correct()));
    }
    best_threshold(&scored).ok_or(TrainError::SingleLabel)
}

/// Threshold maximizing balanced accuracy of `score <= tau` as a predictor
/// of the flag.
pub fn best_threshold(scored: &[(f64, bool)]) -> Option<f64> {
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Candidates: below everything, then midpoints between distinct scores.
    let mut best = (f64::NEG_INFINITY, sorted[0].0 - 1.0);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i: usize = 0;
    loop {
        let bal = 0.5 * (tp as f64 / pos as f64 + (neg - fp) as f64 / neg as f64);
        if bal > best.0 {
            let tau = match (i.checked_sub(1).map(|j| sorted[j].0), sorted.get(i).map(|s| s.0)) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) => a,
                (None, _) => sorted[0].0 - 1.0,
            };
            best = (bal, tau);
        }
        if i == sorted.len() {
            break;
        }
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    Some(best.1)
}

/// Writes the epoch log as CSV.
pub fn write_log(log: &[EpochLog], arch: Arch, w: impl Write) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER).map_err(csv_io)?;
    for row in log {
        out.write_record(row.metrics.csv_row(row.epoch, &row.split, arch)).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}
