use std::io::{BufRead, Write};

use super::{Arch, Model, ModelError};
use crate::autodiff::ParamStore;
use crate::expr::{FunctionTable, Grammar, Variable};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "eqverify-checkpoint";

/// Provenance stored alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Digest of the training configuration, empty if unknown.
    pub config_digest: String,
    /// Digest of the training dataset, empty if unknown.
    pub dataset_digest: String,
    /// Calibrated function-evaluation threshold.
    pub threshold: Option<f64>,
}

/// Adam moments and progress, aligned with the parameter store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub epochs_done: usize,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn opt(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

impl Model {
    /// Line-based text checkpoint. Floats are written as their IEEE bit
    /// patterns, so a load/save cycle reproduces the file exactly.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {CHECKPOINT_VERSION}")?;
        writeln!(w, "arch {}", self.arch)?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "functions {}", self.functions.signature())?;
        let vars: Vec<&str> = self.variables.iter().map(Variable::name).collect();
        writeln!(w, "variables {}", vars.join(","))?;
        writeln!(w, "seed {}", self.meta.seed)?;
        writeln!(w, "config_digest {}", opt(&self.meta.config_digest))?;
        writeln!(w, "dataset_digest {}", opt(&self.meta.dataset_digest))?;
        writeln!(w, "threshold {}", self.meta.threshold.map_or("-".to_string(), bits))?;
        writeln!(w, "params {}", self.params.len())?;
        for (_, p) in self.params.iter() {
            writeln!(w, "param {} {} {}", p.name, p.rows, p.cols)?;
            for row in p.value.chunks(p.cols.max(1)) {
                let line: Vec<String> = row.iter().map(|x| bits(*x)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        if let Some(st) = &self.train_state {
            writeln!(w, "optimizer {} {}", st.step, st.epochs_done)?;
            for (moments, tag) in [(&st.m, "m"), (&st.v, "v")] {
                for ((_, p), xs) in self.params.iter().zip(moments) {
                    let line: Vec<String> = xs.iter().map(|x| bits(*x)).collect();
                    writeln!(w, "{tag} {} {}", p.name, line.join(" "))?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn read_from(r: impl BufRead) -> Result<Model, ModelError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
        let mut next = |key: &str| -> Result<(usize, String), ModelError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| ModelError::Checkpoint { line: 0, msg: format!("unexpected end, wanted {key}") })??;
            if key.is_empty() {
                return Ok((n, line));
            }
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((n, v.to_string())),
                _ => Err(ModelError::Checkpoint { line: n, msg: format!("expected `{key}`") }),
            }
        };
        let bad = |line: usize, msg: String| ModelError::Checkpoint { line, msg };

        let (n, v) = next(MAGIC)?;
        if v != CHECKPOINT_VERSION.to_string() {
            return Err(bad(n, format!("unsupported version {v}")));
        }
        let (n, v) = next("arch")?;
        let arch: Arch = v.parse().map_err(|e| bad(n, e))?;
        let (n, v) = next("dim")?;
        let dim: usize = v.parse().map_err(|_| bad(n, format!("bad dim {v}")))?;
        let (n, v) = next("functions")?;
        let names: Vec<&str> = v.split(',').collect();
        let functions = FunctionTable::from_names(&names).ok_or_else(|| bad(n, format!("bad function list {v}")))?;
        let (_, v) = next("variables")?;
        let variables: Vec<Variable> = v.split(',').filter(|s| !s.is_empty()).map(Variable::new).collect();
        let (n, v) = next("seed")?;
        let seed: u64 = v.parse().map_err(|_| bad(n, format!("bad seed {v}")))?;
        let unopt = |s: String| if s == "-" { String::new() } else { s };
        let config_digest = unopt(next("config_digest")?.1);
        let dataset_digest = unopt(next("dataset_digest")?.1);
        let (n, v) = next("threshold")?;
        let threshold =
            if v == "-" { None } else { Some(parse_bits(&v).ok_or_else(|| bad(n, "bad threshold".into()))?) };
        let (n, v) = next("params")?;
        let count: usize = v.parse().map_err(|_| bad(n, format!("bad param count {v}")))?;

        let mut ps = ParamStore::new();
        for _ in 0..count {
            let (n, v) = next("param")?;
            let fields: Vec<&str> = v.split(' ').collect();
            let [name, rows, cols] = fields[..] else {
                return Err(bad(n, "expected `param NAME ROWS COLS`".into()));
            };
            let rows: usize = rows.parse().map_err(|_| bad(n, "bad rows".into()))?;
            let cols: usize = cols.parse().map_err(|_| bad(n, "bad cols".into()))?;
            if ps.id(name).is_some() {
                return Err(bad(n, format!("duplicate parameter {name}")));
            }
            let mut value = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next("")?;
                let row: Option<Vec<f64>> = line.split(' ').map(parse_bits).collect();
                let row = row.ok_or_else(|| bad(n, "bad value".into()))?;
                if row.len() != cols {
                    return Err(bad(n, format!("expected {cols} values, found {}", row.len())));
                }
                value.extend(row);
            }
            ps.add_value(name, rows, cols, value);
        }
        let sizes: Vec<(String, usize)> = ps.iter().map(|(_, p)| (p.name.clone(), p.len())).collect();
        let meta = CheckpointMeta { seed, config_digest, dataset_digest, threshold };
        let mut model = Model::from_parts(arch, dim, functions, variables, ps, meta)?;
        let Some(first) = lines.next() else {
            return Ok(model);
        };
        let (n, line) = first?;
        let fields: Vec<&str> = line.split(' ').collect();
        let ["optimizer", step, epochs] = fields[..] else {
            return Err(bad(n, "expected `optimizer STEP EPOCHS` or end of file".into()));
        };
        let mut st = TrainState {
            step: step.parse().map_err(|_| bad(n, "bad step".into()))?,
            epochs_done: epochs.parse().map_err(|_| bad(n, "bad epoch count".into()))?,
            ..TrainState::default()
        };
        for tag in ["m", "v"] {
            for (name, len) in &sizes {
                let (n, line) = lines.next().ok_or_else(|| bad(0, format!("missing {tag} {name}")))??;
                let mut it = line.split(' ');
                if it.next() != Some(tag) || it.next() != Some(name.as_str()) {
                    return Err(bad(n, format!("expected `{tag} {name}`")));
                }
                let xs: Option<Vec<f64>> = it.map(parse_bits).collect();
                let xs = xs.filter(|x| x.len() == *len).ok_or_else(|| bad(n, "bad moment values".into()))?;
                if tag == "m" {
                    st.m.push(xs)
                } else {
                    st.v.push(xs)
                }
            }
        }
        model.train_state = Some(st);
        Ok(model)
    }

    /// Loads a checkpoint and checks that it was trained on `grammar`.
    pub fn read_for(r: impl BufRead, grammar: &Grammar) -> Result<Model, ModelError> {
        let m = Model::read_from(r)?;
        if m.functions != grammar.functions {
            return Err(ModelError::Mismatch(format!(
                "checkpoint functions [{}] differ from [{}]",
                m.functions.signature(),
                grammar.functions.signature()
            )));
        }
        if m.variables != grammar.variables {
            return Err(ModelError::Mismatch("checkpoint variables differ from the grammar".into()));
        }
        Ok(m)
    }
}

fn parse_bits(s: &str) -> Option<f64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}
