use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_func_eval, rewrite_once, AxiomSet, DataError, Dataset, Mutator, Provenance, Record, RewriteTable,
};
use crate::eval::{verify_identity, Label, OracleConfig};
use crate::expr::{Equation, Grammar, Kind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub max_depth: usize,
    /// Target number of symbolic equations.
    pub symbolic_count: usize,
    /// Relative share of each depth 1..=max_depth in the symbolic target.
    pub depth_weights: Vec<f64>,
    pub correct_fraction: f64,
    pub seed: u64,
    /// ShrinkNode, ReplaceNode, GrowNode, GrowSides.
    pub mutation_weights: [f64; 4],
    /// Rounds without a new dataset entry before the depth cap grows.
    pub stall_rounds: usize,
    pub max_rounds: usize,
    /// Generated correct equations up to this depth join the rewrite table.
    pub rewrite_key_max_depth: usize,
    pub funceval_count: usize,
    /// Share of the function-evaluation set made of decimal expansions.
    pub decimal_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            symbolic_count: 12_000,
            depth_weights: vec![39.0, 2547.0, 12217.0, 2836.0],
            correct_fraction: 0.5,
            seed: 1,
            mutation_weights: [1.0; 4],
            stall_rounds: 50,
            max_rounds: 1_000_000,
            rewrite_key_max_depth: 3,
            funceval_count: 2000,
            decimal_fraction: 0.15,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Config(m.to_string()));
        if !(self.correct_fraction > 0.0 && self.correct_fraction < 1.0) {
            return bad("correct_fraction must lie in (0, 1)");
        }
        if self.max_depth == 0 || self.depth_weights.len() < self.max_depth {
            return bad("depth_weights needs one entry per depth up to max_depth");
        }
        if self.depth_weights.iter().any(|w| *w < 0.0) || self.depth_weights.iter().sum::<f64>() <= 0.0 {
            return bad("depth_weights must be nonnegative with positive sum");
        }
        if !(0.0..=1.0).contains(&self.decimal_fraction) {
            return bad("decimal_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// (correct, incorrect) targets for each depth.
    pub fn depth_targets(&self) -> BTreeMap<usize, (usize, usize)> {
        let w = &self.depth_weights[..self.max_depth];
        let sum: f64 = w.iter().sum();
        (1..=self.max_depth)
            .map(|d| {
                let total = (self.symbolic_count as f64 * w[d - 1] / sum).round() as usize;
                let correct = (total as f64 * self.correct_fraction).round() as usize;
                (d, (correct, total - correct))
            })
            .collect()
    }
}

/// Bookkeeping from a symbolic generation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenReport {
    pub rounds: usize,
    pub final_cap: usize,
    /// Rounds at which the depth cap was raised.
    pub cap_raises: Vec<usize>,
    pub candidates: usize,
    pub undecided: usize,
    pub rewrite_table_size: usize,
    /// depth -> (correct missing, incorrect missing) relative to targets.
    pub shortfall: BTreeMap<usize, (usize, usize)>,
}

struct Pools {
    targets: BTreeMap<usize, (usize, usize)>,
    filled: BTreeMap<usize, (usize, usize)>,
}

impl Pools {
    fn has_room(&self, depth: usize, label: Label) -> bool {
        let (Some(t), Some(f)) = (self.targets.get(&depth), self.filled.get(&depth)) else {
            return false;
        };
        if label.is_correct() {
            f.0 < t.0
        } else {
            f.1 < t.1
        }
    }

    fn take(&mut self, depth: usize, label: Label) {
        let f = self.filled.entry(depth).or_default();
        if label.is_correct() {
            f.0 += 1;
        } else {
            f.1 += 1;
        }
    }

    fn full_up_to(&self, cap: usize) -> bool {
        (1..=cap).all(|d| !self.has_room(d, Label::Correct) && !self.has_room(d, Label::Incorrect))
    }
}

/// Generates the symbolic part of the dataset from the axioms.
///
/// Each round mutates a random known equation and rewrites a random correct
/// one; both candidates are labeled by the oracle. Candidates deeper than
/// the current cap are dropped. The cap starts at 1 and grows when every
/// depth under it is full or after `stall_rounds` rounds without a new
/// entry. Per-depth pools are balanced to `correct_fraction`.
pub fn generate_symbolic(
    axioms: &AxiomSet,
    cfg: &GenConfig,
    grammar: &Grammar,
    oracle: &OracleConfig,
) -> Result<(Dataset, GenReport), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mutator = Mutator::new(grammar, cfg.mutation_weights)?;
    let fill = grammar.symbolic_terminals();
    let mut table = RewriteTable::from_equations(&axioms.equations);
    let mut pools = Pools { targets: cfg.depth_targets(), filled: BTreeMap::new() };
    let mut report = GenReport::default();

    let mut accepted: Vec<Record> = Vec::new();
    let mut verdicts: HashMap<String, Option<Label>> = HashMap::new();
    let mut known: Vec<Equation> = Vec::new();
    let mut known_correct: Vec<Equation> = Vec::new();

    for eq in &axioms.equations {
        verdicts.insert(eq.to_string(), Some(Label::Correct));
        known.push(eq.clone());
        known_correct.push(eq.clone());
        if eq.depth() <= cfg.max_depth {
            pools.take(eq.depth(), Label::Correct);
            accepted.push(Record::new(eq.clone(), Label::Correct, Provenance::Axiom));
        }
    }

    let mut cap = 1;
    let mut stall = 0;
    for round in 0..cfg.max_rounds {
        if pools.full_up_to(cfg.max_depth) {
            break;
        }
        report.rounds = round + 1;
        let mut added = false;
        let mut candidates: Vec<(Equation, Provenance)> = Vec::with_capacity(2);
        let src = known.choose(&mut rng).expect("axioms are nonempty");
        if let Ok((c, _)) = mutator.mutate(src, &mut rng) {
            candidates.push((c, Provenance::Mutation));
        }
        let src = known_correct.choose(&mut rng).expect("axioms are nonempty");
        if let Some(c) = rewrite_once(src, &table, &fill, &mut rng) {
            candidates.push((c, Provenance::Rewrite));
        }

        for (cand, prov) in candidates {
            let depth = cand.depth();
            // Above depth 1, `e = e` carries no information.
            if depth > cap || (depth > 1 && cand.lhs() == cand.rhs()) {
                continue;
            }
            let key = cand.to_string();
            if verdicts.contains_key(&key) {
                continue;
            }
            report.candidates += 1;
            let label = verify_identity(&cand, oracle).verdict.label();
            verdicts.insert(key, label);
            let Some(label) = label else {
                report.undecided += 1;
                continue;
            };
            if label.is_correct() {
                let universal_key = cand.lhs().is_leaf() && cand.lhs().has_variables()
                    || cand.rhs().is_leaf() && cand.rhs().has_variables();
                if depth <= cfg.rewrite_key_max_depth && !universal_key {
                    table.add_equation(&cand);
                }
                known_correct.push(cand.clone());
            }
            known.push(cand.clone());
            if pools.has_room(depth, label) {
                pools.take(depth, label);
                accepted.push(Record::new(cand, label, prov));
                added = true;
            }
        }

        stall = if added { 0 } else { stall + 1 };
        if cap < cfg.max_depth && (stall >= cfg.stall_rounds || pools.full_up_to(cap)) {
            cap += 1;
            stall = 0;
            report.cap_raises.push(round);
        }
    }
    report.final_cap = cap;
    report.rewrite_table_size = table.len();

    // Trim incorrect entries where correct ones fell short of the target.
    let ratio = (1.0 - cfg.correct_fraction) / cfg.correct_fraction;
    let mut keep_incorrect: BTreeMap<usize, usize> = BTreeMap::new();
    for (&d, &(tc, ti)) in &pools.targets {
        let (fc, fi) = pools.filled.get(&d).copied().unwrap_or_default();
        let allowed = ((fc as f64) * ratio).round() as usize;
        keep_incorrect.insert(d, fi.min(allowed.max(if fc >= tc { ti } else { 0 })));
        report.shortfall.insert(d, (tc.saturating_sub(fc), ti.saturating_sub(fi)));
    }
    let mut kept: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Dataset::new();
    for r in accepted {
        if !r.label.is_correct() {
            let k = kept.entry(r.depth()).or_default();
            if *k >= keep_incorrect.get(&r.depth()).copied().unwrap_or(0) {
                continue;
            }
            *k += 1;
        }
        out.insert(r);
    }

    let frac = out.stats().correct_fraction(Some(Kind::Symbolic));
    if (frac - cfg.correct_fraction).abs() > 0.05 {
        return Err(DataError::Unreachable(format!(
            "correct fraction {frac:.3} is more than 5 points from {}",
            cfg.correct_fraction
        )));
    }
    Ok((out, report))
}

/// Symbolic plus function-evaluation data, in that order.
pub fn generate(
    axioms: &AxiomSet,
    cfg: &GenConfig,
    grammar: &Grammar,
    oracle: &OracleConfig,
) -> Result<(Dataset, GenReport), DataError> {
    let (mut d, report) = generate_symbolic(axioms, cfg, grammar, oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    d.extend(generate_func_eval(cfg, &grammar.functions, &mut rng));
    Ok((d, report))
}
