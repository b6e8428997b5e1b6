use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::TaskError;
use crate::datagen::Dataset;
use crate::eval::{eval_closed, verify, OracleConfig, Verdict};
use crate::expr::{
    enumerate, table_terminals, Constant, Equation, Expr, FunctionTable, Kind, Number, Path, Side, Terminal,
};
use crate::models::Model;

/// A correct equation with one node blanked out.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionInstance {
    pub equation: Equation,
    pub side: Side,
    pub path: Path,
    pub ground_truth: Expr,
    pub candidates: Vec<Expr>,
}

impl CompletionInstance {
    pub fn kind(&self) -> Kind {
        self.equation.kind()
    }

    /// The equation with `fill` in the blank.
    pub fn fill(&self, fill: &Expr) -> Result<Equation, TaskError> {
        Ok(self.equation.substitute(self.side, &self.path, fill.clone())?)
    }

    /// Equation text with the blank shown as `_`.
    pub fn display(&self) -> String {
        let blank = Expr::var("_");
        let (l, r) = match self.side {
            Side::Lhs => (self.equation.lhs().substitute(&self.path, blank), Ok(self.equation.rhs().clone())),
            Side::Rhs => (Ok(self.equation.lhs().clone()), self.equation.rhs().substitute(&self.path, blank)),
        };
        match (l, r) {
            (Ok(l), Ok(r)) => format!("{l} = {r}"),
            _ => self.equation.to_string(),
        }
    }
}

/// Candidate fills for symbolic blanks: every depth 1 and 2 expression over
/// the base terminal set.
pub fn symbolic_candidates(functions: &FunctionTable) -> Vec<Expr> {
    enumerate(2, &table_terminals(), functions)
}

/// Candidate fills for numeric blanks: the named constants, then every
/// precision-2 number of the data range that is not already a constant.
pub fn numeric_candidates() -> Vec<Expr> {
    let mut seen = HashSet::new();
    Constant::ALL
        .iter()
        .map(|&c| Expr::constant(c))
        .chain(Number::data_grid().map(Expr::number))
        .filter(|e| seen.insert(e.clone()))
        .collect()
}

/// Positions whose subtree has depth 1 or 2, left side first, pre-order.
pub fn eligible_blanks(eq: &Equation) -> Vec<(Side, Path)> {
    let mut out = Vec::new();
    for side in [Side::Lhs, Side::Rhs] {
        let e = eq.side(side);
        for p in e.positions() {
            let d = e.get(&p).map_or(0, Expr::depth);
            if d == 1 || d == 2 {
                out.push((side, p));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceSet {
    pub instances: Vec<CompletionInstance>,
    /// Correct equations with no eligible node.
    pub skipped: usize,
}

/// One instance per correct test equation, with the blank drawn uniformly
/// from the eligible nodes. Incorrect equations are ignored.
pub fn make_completion_instances<R: Rng>(test: &Dataset, functions: &FunctionTable, rng: &mut R) -> InstanceSet {
    let symbolic = symbolic_candidates(functions);
    let numeric = numeric_candidates();
    let mut set = InstanceSet::default();
    for r in test.iter().filter(|r| r.label.is_correct()) {
        let eq = &r.equation;
        let Some((side, path)) = eligible_blanks(eq).choose(rng).cloned() else {
            set.skipped += 1;
            continue;
        };
        let ground_truth = eq.get(side, &path).expect("eligible position").clone();
        let candidates = match eq.kind() {
            Kind::Symbolic => symbolic.clone(),
            Kind::FuncEval => numeric.clone(),
        };
        set.instances.push(CompletionInstance { equation: eq.clone(), side, path, ground_truth, candidates });
    }
    set
}

/// Candidates with confidences, highest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedPredictions {
    pub entries: Vec<(Expr, f64)>,
}

impl RankedPredictions {
    /// Sorts by descending confidence, ties and NaNs broken by printed form.
    pub fn from_scores(scored: Vec<(Expr, f64)>) -> Self {
        let mut keyed: Vec<(String, Expr, f64)> = scored.into_iter().map(|(e, c)| (e.to_string(), e, c)).collect();
        keyed.sort_by(|a, b| match (a.2.is_nan(), b.2.is_nan()) {
            (false, false) => b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)),
            (true, true) => a.0.cmp(&b.0),
            (a_nan, _) => {
                if a_nan {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
        });
        Self { entries: keyed.into_iter().map(|(_, e, c)| (e, c)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, k: usize) -> &[(Expr, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Model confidence for one filled equation: the verification probability
/// for symbolic equations and the negated squared side gap for numeric ones.
/// Chain models have no decoder and use their probability for both.
pub fn confidence(model: &Model, eq: &Equation) -> Result<f64, TaskError> {
    Ok(match eq.kind() {
        Kind::FuncEval if model.arch.is_tree() => -model.func_eval_error(eq)?.sq_err,
        _ => model.probability(eq)?,
    })
}

pub fn rank_candidates(inst: &CompletionInstance, model: &Model) -> Result<RankedPredictions, TaskError> {
    let mut scored = Vec::with_capacity(inst.candidates.len());
    for c in &inst.candidates {
        scored.push((c.clone(), confidence(model, &inst.fill(c)?)?));
    }
    Ok(RankedPredictions::from_scores(scored))
}

/// Rankings for every instance, spread over up to `jobs` threads.
pub fn rank_all(
    instances: &[CompletionInstance],
    model: &Model,
    jobs: usize,
) -> Result<Vec<RankedPredictions>, TaskError> {
    let jobs = jobs.max(1).min(instances.len().max(1));
    let chunk = instances.len().div_ceil(jobs).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = instances
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|i| rank_candidates(i, model)).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut out = Vec::with_capacity(instances.len());
        for h in handles {
            out.extend(h.join().expect("ranking thread")?);
        }
        Ok(out)
    })
}

/// Index of the first oracle-correct fill among the top `limit`, if any.
pub fn first_correct_rank(
    inst: &CompletionInstance,
    ranking: &RankedPredictions,
    limit: usize,
    oracle: &OracleConfig,
) -> Result<Option<usize>, TaskError> {
    for (i, (c, _)) in ranking.top(limit).iter().enumerate() {
        if verify(&inst.fill(c)?, oracle) == Verdict::Correct {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Fraction of instances with at least one oracle-correct fill among the
/// `k` most confident candidates.
pub fn top_k_accuracy(
    instances: &[CompletionInstance],
    rankings: &[RankedPredictions],
    k: usize,
    oracle: &OracleConfig,
) -> Result<f64, TaskError> {
    Ok(top_k_accuracy_curve(instances, rankings, k, oracle)?.last().copied().unwrap_or(0.0))
}

/// Top-k accuracy for k = 1..=k_max.
pub fn top_k_accuracy_curve(
    instances: &[CompletionInstance],
    rankings: &[RankedPredictions],
    k_max: usize,
    oracle: &OracleConfig,
) -> Result<Vec<f64>, TaskError> {
    if instances.is_empty() {
        return Ok(vec![0.0; k_max]);
    }
    let mut hits = vec![0usize; k_max];
    for (inst, ranking) in instances.iter().zip(rankings) {
        if let Some(i) = first_correct_rank(inst, ranking, k_max, oracle)? {
            for h in &mut hits[i..] {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / instances.len() as f64).collect())
}

fn value_of(e: &Expr) -> Result<f64, TaskError> {
    eval_closed(e).map_err(|err| TaskError::Invariant(format!("cannot evaluate {e}: {err}")))
}

/// Mean over instances of the smallest squared gap between the true blank
/// value and the values of the `k` most confident candidates.
pub fn top_k_min_mse(
    instances: &[CompletionInstance],
    rankings: &[RankedPredictions],
    k: usize,
) -> Result<f64, TaskError> {
    Ok(top_k_min_mse_curve(instances, rankings, k)?.last().copied().unwrap_or(0.0))
}

/// Top-k min MSE for k = 1..=k_max.
pub fn top_k_min_mse_curve(
    instances: &[CompletionInstance],
    rankings: &[RankedPredictions],
    k_max: usize,
) -> Result<Vec<f64>, TaskError> {
    if instances.is_empty() {
        return Ok(vec![0.0; k_max]);
    }
    let mut sums = vec![0.0; k_max];
    for (inst, ranking) in instances.iter().zip(rankings) {
        let truth = value_of(&inst.ground_truth)?;
        let mut best = f64::INFINITY;
        for (k, sum) in sums.iter_mut().enumerate() {
            if let Some((c, _)) = ranking.entries.get(k) {
                let d = value_of(c)? - truth;
                best = best.min(d * d);
            }
            *sum += best;
        }
    }
    Ok(sums.iter().map(|s| s / instances.len() as f64).collect())
}

/// Checks that a top-k curve moves in one direction.
pub fn check_monotone(curve: &[f64], nondecreasing: bool, what: &str) -> Result<(), TaskError> {
    for (k, w) in curve.windows(2).enumerate() {
        let ok = if nondecreasing { w[1] >= w[0] } else { w[1] <= w[0] };
        if !ok {
            return Err(TaskError::Invariant(format!("{what} not monotone at k = {}: {} then {}", k + 1, w[0], w[1])));
        }
    }
    Ok(())
}

/// True if the terminal set of the symbolic candidates can express `e`.
pub fn expressible(e: &Expr) -> bool {
    let ts = table_terminals();
    e.depth() <= 2 && e.terminals().into_iter().all(|t: &Terminal| ts.contains(t))
}
