use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;
use crate::eval::Label;
use crate::expr::{Equation, Grammar, Kind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    None,
}

/// Which generator produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Axiom,
    Mutation,
    Rewrite,
    Funceval,
    Decimal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub equation: Equation,
    pub label: Label,
    pub split: Split,
    pub provenance: Provenance,
}

impl Record {
    pub fn new(equation: Equation, label: Label, provenance: Provenance) -> Self {
        Self { equation, label, split: Split::None, provenance }
    }

    pub fn key(&self) -> String {
        self.equation.to_string()
    }

    pub fn kind(&self) -> Kind {
        self.equation.kind()
    }

    pub fn depth(&self) -> usize {
        self.equation.depth()
    }
}

/// On-disk layout of one record. Field order is part of the file format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    lhs: String,
    rhs: String,
    label: Label,
    kind: String,
    depth: usize,
    split: Split,
    provenance: Provenance,
}

/// Count summary of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// (kind, depth, label) -> count
    pub counts: BTreeMap<(Kind, usize, Label), usize>,
}

impl Stats {
    pub fn total(&self, kind: Option<Kind>) -> usize {
        self.counts.iter().filter(|((k, _, _), _)| kind.is_none_or(|kk| *k == kk)).map(|(_, n)| n).sum()
    }

    pub fn correct(&self, kind: Option<Kind>) -> usize {
        self.counts
            .iter()
            .filter(|((k, _, l), _)| kind.is_none_or(|kk| *k == kk) && l.is_correct())
            .map(|(_, n)| n)
            .sum()
    }

    pub fn by_depth(&self, kind: Kind) -> BTreeMap<usize, (usize, usize)> {
        let mut out: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for ((k, d, l), n) in &self.counts {
            if *k == kind {
                let e = out.entry(*d).or_default();
                if l.is_correct() {
                    e.0 += n;
                } else {
                    e.1 += n;
                }
            }
        }
        out
    }

    pub fn correct_fraction(&self, kind: Option<Kind>) -> f64 {
        let t = self.total(kind);
        if t == 0 {
            0.0
        } else {
            self.correct(kind) as f64 / t as f64
        }
    }
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for kind in [Kind::Symbolic, Kind::FuncEval] {
            let total = self.total(Some(kind));
            writeln!(f, "{kind}: {total} equations, {} correct", self.correct(Some(kind)))?;
            for (d, (c, i)) in self.by_depth(kind) {
                writeln!(f, "  depth {d}: {} equations ({c} correct, {i} incorrect)", c + i)?;
            }
        }
        Ok(())
    }
}

/// Labeled equations, unique by their printed form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<Record>,
    keys: HashSet<String>,
}

/// How to partition a dataset into train and test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Seeded shuffle, 80% train.
    Random80_20(u64),
    /// Every symbolic equation of this depth goes to test, the rest to train.
    HoldOutDepth(usize),
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = Record>) -> Self {
        let mut d = Self::new();
        for r in records {
            d.insert(r);
        }
        d
    }

    /// Adds a record unless an equation with the same print exists.
    pub fn insert(&mut self, r: Record) -> bool {
        if self.keys.insert(r.key()) {
            self.records.push(r);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, eq: &Equation) -> bool {
        self.keys.contains(&eq.to_string())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn extend(&mut self, other: Dataset) {
        for r in other.records {
            self.insert(r);
        }
    }

    pub fn filter(&self, pred: impl Fn(&Record) -> bool) -> Dataset {
        Dataset::from_records(self.records.iter().filter(|r| pred(r)).cloned())
    }

    pub fn of_kind(&self, kind: Kind) -> Dataset {
        self.filter(|r| r.kind() == kind)
    }

    pub fn with_split(&self, split: Split) -> Dataset {
        self.filter(|r| r.split == split)
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats::default();
        for r in &self.records {
            *s.counts.entry((r.kind(), r.depth(), r.label)).or_default() += 1;
        }
        s
    }

    fn tagged(records: Vec<Record>, split: Split) -> Dataset {
        Dataset::from_records(records.into_iter().map(|mut r| {
            r.split = split;
            r
        }))
    }

    /// Partitions into (train, test) with split tags set.
    pub fn split(&self, mode: SplitMode) -> Result<(Dataset, Dataset), DataError> {
        let (train, test): (Vec<Record>, Vec<Record>) = match mode {
            SplitMode::Random80_20(seed) => {
                let mut idx: Vec<usize> = (0..self.len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let cut = self.len() * 4 / 5;
                let mut train_idx = idx[..cut].to_vec();
                let mut test_idx = idx[cut..].to_vec();
                train_idx.sort_unstable();
                test_idx.sort_unstable();
                (
                    train_idx.iter().map(|&i| self.records[i].clone()).collect(),
                    test_idx.iter().map(|&i| self.records[i].clone()).collect(),
                )
            }
            SplitMode::HoldOutDepth(k) => {
                self.records.iter().cloned().partition(|r| !(r.kind() == Kind::Symbolic && r.depth() == k))
            }
        };
        if train.is_empty() || test.is_empty() {
            return Err(DataError::EmptySplit);
        }
        Ok((Self::tagged(train, Split::Train), Self::tagged(test, Split::Test)))
    }

    /// Seeded split of `fraction` of the records into a second set; used for
    /// validation hold-outs. Split tags are left unchanged.
    pub fn split_fraction(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let mut held: Vec<usize> = idx[..cut].to_vec();
        let mut kept: Vec<usize> = idx[cut..].to_vec();
        held.sort_unstable();
        kept.sort_unstable();
        if held.is_empty() || kept.is_empty() {
            return Err(DataError::EmptySplit);
        }
        let pick = |ix: &[usize]| Dataset::from_records(ix.iter().map(|&i| self.records[i].clone()));
        Ok((pick(&kept), pick(&held)))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            let line = RecordLine {
                lhs: r.equation.lhs().to_string(),
                rhs: r.equation.rhs().to_string(),
                label: r.label,
                kind: r.kind().as_str().to_string(),
                depth: r.depth(),
                split: r.split,
                provenance: r.provenance,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// SHA-256 of the serialized dataset, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn read_from(r: impl BufRead, grammar: &Grammar) -> Result<Dataset, DataError> {
        let mut d = Dataset::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let at = |msg: String| DataError::Record { line: i + 1, msg };
            let rec: RecordLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
            let lhs = grammar.parse(&rec.lhs).map_err(|e| at(e.to_string()))?;
            let rhs = grammar.parse(&rec.rhs).map_err(|e| at(e.to_string()))?;
            let kind = match rec.kind.as_str() {
                "symbolic" => Kind::Symbolic,
                "funceval" => Kind::FuncEval,
                other => return Err(at(format!("unknown kind `{other}`"))),
            };
            let equation = Equation::new(lhs, rhs, kind).map_err(|e| at(e.to_string()))?;
            if equation.depth() != rec.depth {
                return Err(at(format!("stored depth {} but tree depth is {}", rec.depth, equation.depth())));
            }
            let record = Record { equation, label: rec.label, split: rec.split, provenance: rec.provenance };
            if !d.insert(record) {
                return Err(at("duplicate equation".into()));
            }
        }
        Ok(d)
    }

    pub fn summary(&self) -> String {
        let s = self.stats();
        let mut out = String::new();
        let _ = write!(out, "{s}");
        out
    }
}
