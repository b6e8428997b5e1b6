use std::collections::BTreeMap;

use super::TrainError;
use crate::datagen::{Dataset, Record};
use crate::expr::Kind;
use crate::models::{Arch, Model};

pub const METRICS_HEADER: [&str; 11] =
    ["epoch", "split", "arch", "accuracy", "precision", "recall", "mse", "depth1", "depth2", "depth3", "depth4"];

/// Confusion counts with Correct as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    /// Symbolic accuracy at threshold 0.5.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
    /// Mean squared gap between decoded sides over correct
    /// function-evaluation equations (tree models only).
    pub mse: Option<f64>,
    /// Accuracy of the thresholded function-evaluation validity call.
    pub funceval_accuracy: Option<f64>,
    /// Symbolic (correct, total) per depth.
    pub by_depth: BTreeMap<usize, (usize, usize)>,
}

impl Metrics {
    pub fn depth_accuracy(&self, depth: usize) -> Option<f64> {
        self.by_depth.get(&depth).map(|&(c, n)| ratio(c, n))
    }

    pub fn csv_row(&self, epoch: usize, split: &str, arch: Arch) -> Vec<String> {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut row = vec![
            epoch.to_string(),
            split.to_string(),
            arch.to_string(),
            self.accuracy.to_string(),
            self.precision.to_string(),
            self.recall.to_string(),
            opt(self.mse),
        ];
        row.extend((1..=4).map(|d| opt(self.depth_accuracy(d))));
        row
    }
}

enum Score {
    Prob(f64),
    SqErr(f64),
    Skip,
}

fn score(model: &Model, r: &Record) -> Result<Score, TrainError> {
    Ok(match (r.kind(), model.arch.is_tree()) {
        (Kind::Symbolic, _) => Score::Prob(model.probability(&r.equation)?),
        (Kind::FuncEval, true) => Score::SqErr(model.func_eval_error(&r.equation)?.sq_err),
        (Kind::FuncEval, false) => Score::Skip,
    })
}

/// Metrics of `model` on `test`, scoring records on up to `jobs` threads.
pub fn evaluate_model(test: &Dataset, model: &Model, jobs: usize) -> Result<Metrics, TrainError> {
    let records = test.records();
    let jobs = jobs.max(1).min(records.len().max(1));
    let chunk = records.len().div_ceil(jobs).max(1);
    let scores: Vec<Score> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|r| score(model, r)).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut all = Vec::with_capacity(records.len());
        for h in handles {
            all.extend(h.join().expect("evaluation thread")?);
        }
        Ok::<_, TrainError>(all)
    })?;

    let mut m = Metrics::default();
    let (mut se, mut n_se) = (0.0, 0usize);
    let mut fe = Confusion::default();
    for (r, s) in records.iter().zip(scores) {
        let actual = r.label.is_correct();
        match s {
            Score::Prob(p) => {
                let predicted = p >= 0.5;
                m.confusion.add(predicted, actual);
                let e = m.by_depth.entry(r.depth()).or_default();
                e.0 += usize::from(predicted == actual);
                e.1 += 1;
            }
            Score::SqErr(x) => {
                if actual {
                    se += x;
                    n_se += 1;
                }
                if let Some(tau) = model.meta.threshold {
                    fe.add(x <= tau, actual);
                }
            }
            Score::Skip => {}
        }
    }
    m.accuracy = m.confusion.accuracy();
    m.precision = m.confusion.precision();
    m.recall = m.confusion.recall();
    m.mse = (n_se > 0).then(|| se / n_se as f64);
    m.funceval_accuracy = (fe.total() > 0).then(|| fe.accuracy());
    Ok(m)
}
