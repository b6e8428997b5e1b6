//! Tree-structured and chain-structured networks over equations.
//!
//! Tree models embed each side of an equation bottom-up with one cell per
//! grammar function, shared across all occurrences of that function. The
//! symbolic head is `sigmoid(<h_lhs, h_rhs>)`; the function-evaluation head
//! decodes both side embeddings to scalars and compares them. Chain models
//! read the prefix tokens of `lhs SEP rhs` with a single recurrent cell.

mod checkpoint;
mod gradsuite;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Init, ParamId, ParamStore, Tape, Var};
use crate::eval::{eval_closed, Label};
use crate::expr::{Constant, Equation, Expr, Func, FunctionTable, Grammar, Kind, Number, Terminal, Variable};

pub use checkpoint::{CheckpointMeta, TrainState, CHECKPOINT_VERSION};
pub use gradsuite::{gradient_suite, random_equation, GradCase, GradSuite};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("function {0} has no cell in this model")]
    UnknownFunction(Func),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Rnn,
    Lstm,
    TreeNn,
    TreeLstm,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Rnn, Arch::Lstm, Arch::TreeNn, Arch::TreeLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
            Arch::TreeNn => "treenn",
            Arch::TreeLstm => "treelstm",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, Arch::TreeNn | Arch::TreeLstm)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown architecture `{s}` (expected rnn, lstm, treenn or treelstm)"))
    }
}

/// Forward mode. Training mode applies dropout to cell inputs.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

impl Mode<'_> {
    fn drop(&mut self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Mode::Eval => x,
            Mode::Train { dropout, rng } => tape.dropout(x, *dropout, *rng),
        }
    }
}

/// Embedding of one side: `h`, plus the memory cell for LSTM models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Embedding {
    pub h: Var,
    pub c: Option<Var>,
}

/// Margin below which the squared side gap of an incorrect
/// function-evaluation example is penalized.
pub const FUNCEVAL_MARGIN: f64 = 0.05;

const NUMBER_STREAM: u64 = 0x6e75_6d62_6572;

#[derive(Clone, Debug, PartialEq)]
struct Ids {
    symbol_w: Option<ParamId>,
    symbol_b: Option<ParamId>,
    enc: [ParamId; 4],
    dec: [ParamId; 4],
    cells: HashMap<Func, (ParamId, ParamId)>,
    chain: Option<ChainIds>,
    head_b: Option<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
struct ChainIds {
    embed: ParamId,
    w: ParamId,
    b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// A model: architecture, vocabulary and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Arch,
    pub dim: usize,
    pub functions: FunctionTable,
    pub variables: Vec<Variable>,
    pub params: ParamStore,
    pub meta: CheckpointMeta,
    /// Optimizer state for resuming training.
    pub train_state: Option<TrainState>,
    ids: Ids,
}

fn gate_rows(arch: Arch, arity: usize) -> usize {
    match arch {
        // i, f_1..f_n, o, u
        Arch::TreeLstm => 3 + arity,
        Arch::Lstm => 4,
        _ => 1,
    }
}

impl Model {
    /// Fresh model with Xavier-initialized matrices, zero biases and forget
    /// biases of 1.
    pub fn new(arch: Arch, dim: usize, grammar: &Grammar, seed: u64) -> Self {
        Self::with_head_bias(arch, dim, grammar, seed, false)
    }

    /// Like [`Model::new`]; with `head_bias` a tree model's symbolic head
    /// becomes σ(⟨h_l, h_r⟩ + b) with a learned scalar b starting at 0.
    pub fn with_head_bias(arch: Arch, dim: usize, grammar: &Grammar, seed: u64, head_bias: bool) -> Self {
        assert!(dim > 0, "hidden dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let d = dim;
        let variables: Vec<Variable> = grammar.variables.clone();
        let n_sym = Constant::ALL.len() + variables.len();
        if arch.is_tree() {
            ps.add("symbol.W", d, n_sym, Init::Xavier, &mut rng);
            ps.add("symbol.b", d, 1, Init::Zeros, &mut rng);
        }
        // The number blocks draw from their own stream so that every
        // architecture starts from the same autoencoder.
        let mut num_rng = ChaCha8Rng::seed_from_u64(seed ^ NUMBER_STREAM);
        ps.add("numenc.W1", d, 1, Init::Xavier, &mut num_rng);
        ps.add("numenc.b1", d, 1, Init::Zeros, &mut num_rng);
        ps.add("numenc.W2", d, d, Init::Xavier, &mut num_rng);
        ps.add("numenc.b2", d, 1, Init::Zeros, &mut num_rng);
        ps.add("numdec.W1", d, d, Init::Xavier, &mut num_rng);
        ps.add("numdec.b1", d, 1, Init::Zeros, &mut num_rng);
        ps.add("numdec.W2", 1, d, Init::Xavier, &mut num_rng);
        ps.add("numdec.b2", 1, 1, Init::Zeros, &mut num_rng);
        if arch.is_tree() {
            for &f in grammar.functions.all() {
                let n = f.arity();
                let rows = gate_rows(arch, n) * d;
                ps.add(&format!("cell.{}.W", f.name()), rows, n * d, Init::Xavier, &mut rng);
                let mut b = vec![0.0; rows];
                if arch == Arch::TreeLstm {
                    b[d..(1 + n) * d].fill(1.0);
                }
                ps.add_value(&format!("cell.{}.b", f.name()), rows, 1, b);
            }
            if head_bias {
                ps.add_value("head.b", 1, 1, vec![0.0]);
            }
        } else {
            let n_tok = chain_vocab_len(&grammar.functions, variables.len());
            ps.add("chain.E", d, n_tok, Init::Xavier, &mut rng);
            let rows = gate_rows(arch, 1) * d;
            ps.add("chain.W", rows, 2 * d, Init::Xavier, &mut rng);
            let mut b = vec![0.0; rows];
            if arch == Arch::Lstm {
                b[d..2 * d].fill(1.0);
            }
            ps.add_value("chain.b", rows, 1, b);
            ps.add("chain.out.W", 1, d, Init::Xavier, &mut rng);
            ps.add("chain.out.b", 1, 1, Init::Zeros, &mut rng);
        }
        let meta = CheckpointMeta { seed, ..CheckpointMeta::default() };
        Self::from_parts(arch, dim, grammar.functions.clone(), variables, ps, meta)
            .expect("fresh parameters are complete")
    }

    fn from_parts(
        arch: Arch,
        dim: usize,
        functions: FunctionTable,
        variables: Vec<Variable>,
        params: ParamStore,
        meta: CheckpointMeta,
    ) -> Result<Self, ModelError> {
        let get = |name: &str| params.id(name).ok_or_else(|| ModelError::Mismatch(format!("missing parameter {name}")));
        let enc = [get("numenc.W1")?, get("numenc.b1")?, get("numenc.W2")?, get("numenc.b2")?];
        let dec = [get("numdec.W1")?, get("numdec.b1")?, get("numdec.W2")?, get("numdec.b2")?];
        let mut cells = HashMap::new();
        let (mut symbol_w, mut symbol_b, mut chain) = (None, None, None);
        if arch.is_tree() {
            symbol_w = Some(get("symbol.W")?);
            symbol_b = Some(get("symbol.b")?);
            for &f in functions.all() {
                cells.insert(f, (get(&format!("cell.{}.W", f.name()))?, get(&format!("cell.{}.b", f.name()))?));
            }
        } else {
            chain = Some(ChainIds {
                embed: get("chain.E")?,
                w: get("chain.W")?,
                b: get("chain.b")?,
                out_w: get("chain.out.W")?,
                out_b: get("chain.out.b")?,
            });
        }
        let head_b = if arch.is_tree() { params.id("head.b") } else { None };
        let ids = Ids { symbol_w, symbol_b, enc, dec, cells, chain, head_b };
        let m = Self { arch, dim, functions, variables, params, meta, train_state: None, ids };
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<(), ModelError> {
        let d = self.dim;
        let expect = |id: ParamId, rows: usize, cols: usize| {
            let p = self.params.get(id);
            if p.rows == rows && p.cols == cols {
                Ok(())
            } else {
                Err(ModelError::Mismatch(format!("{} is {}x{}, expected {rows}x{cols}", p.name, p.rows, p.cols)))
            }
        };
        expect(self.ids.enc[0], d, 1)?;
        expect(self.ids.enc[2], d, d)?;
        expect(self.ids.dec[0], d, d)?;
        expect(self.ids.dec[2], 1, d)?;
        if let Some(w) = self.ids.symbol_w {
            expect(w, d, Constant::ALL.len() + self.variables.len())?;
        }
        for (f, (w, b)) in &self.ids.cells {
            let rows = gate_rows(self.arch, f.arity()) * d;
            expect(*w, rows, f.arity() * d)?;
            expect(*b, rows, 1)?;
        }
        if let Some(c) = &self.ids.chain {
            expect(c.embed, d, chain_vocab_len(&self.functions, self.variables.len()))?;
            expect(c.w, gate_rows(self.arch, 1) * d, 2 * d)?;
        }
        Ok(())
    }

    fn symbol_index(&self, t: &Terminal) -> Result<usize, ModelError> {
        match t {
            Terminal::Const(c) => Ok(Constant::ALL.iter().position(|k| k == c).expect("listed constant")),
            Terminal::Var(v) => self
                .variables
                .iter()
                .position(|u| u == v)
                .map(|i| Constant::ALL.len() + i)
                .ok_or_else(|| ModelError::UnknownSymbol(v.to_string())),
            Terminal::Num(n) => Err(ModelError::UnknownSymbol(n.to_string())),
        }
    }

    /// Number encoder: scalar -> tanh layer -> linear layer.
    pub fn encode_number(&self, tape: &mut Tape, x: f64) -> Var {
        let [w1, b1, w2, b2] = self.ids.enc;
        let a = tape.scale_param(&self.params, w1, x);
        let bv = tape.param(&self.params, b1);
        let a = tape.add(a, bv);
        let a = tape.tanh(a);
        tape.affine(&self.params, w2, b2, a)
    }

    /// Number decoder: vector -> tanh layer -> scalar.
    pub fn decode_number(&self, tape: &mut Tape, h: Var) -> Var {
        let [w1, b1, w2, b2] = self.ids.dec;
        let a = tape.affine(&self.params, w1, b1, h);
        let a = tape.tanh(a);
        tape.affine(&self.params, w2, b2, a)
    }

    /// `decode(encode(x))` evaluated on a fresh tape.
    pub fn round_trip(&self, x: f64) -> f64 {
        let mut tape = Tape::new();
        let e = self.encode_number(&mut tape, x);
        let d = self.decode_number(&mut tape, e);
        tape.scalar(d)
    }

    fn leaf(&self, tape: &mut Tape, t: &Terminal) -> Result<Var, ModelError> {
        if let Terminal::Num(n) = t {
            return Ok(self.encode_number(tape, n.value()));
        }
        let j = self.symbol_index(t)?;
        let (w, b) = (self.ids.symbol_w.expect("tree model"), self.ids.symbol_b.expect("tree model"));
        let col = tape.column(&self.params, w, j);
        let bv = tape.param(&self.params, b);
        let s = tape.add(col, bv);
        Ok(tape.tanh(s))
    }

    /// Embeds one side of an equation with a tree model.
    pub fn embed_expr(&self, tape: &mut Tape, e: &Expr, mode: &mut Mode) -> Result<Embedding, ModelError> {
        assert!(self.arch.is_tree(), "embed_expr needs a tree model");
        match e {
            Expr::Leaf(t) => {
                let h = self.leaf(tape, t)?;
                let c = (self.arch == Arch::TreeLstm).then(|| tape.input(&vec![0.0; self.dim]));
                Ok(Embedding { h, c })
            }
            Expr::Apply(f, args) => {
                let kids: Vec<Embedding> =
                    args.iter().map(|a| self.embed_expr(tape, a, mode)).collect::<Result<_, _>>()?;
                let (w, b) = *self.ids.cells.get(f).ok_or(ModelError::UnknownFunction(*f))?;
                let hs: Vec<Var> = kids.iter().map(|k| k.h).collect();
                let x = if hs.len() == 1 { hs[0] } else { tape.concat(&hs) };
                let x = mode.drop(tape, x);
                let z = tape.affine(&self.params, w, b, x);
                match self.arch {
                    Arch::TreeNn => Ok(Embedding { h: tape.tanh(z), c: None }),
                    _ => {
                        let cs: Vec<Var> = kids.iter().map(|k| k.c.expect("lstm child")).collect();
                        Ok(self.lstm_gates(tape, z, &cs))
                    }
                }
            }
        }
    }

    /// Applies LSTM gating to stacked pre-activations `[i, f_1..f_n, o, u]`.
    fn lstm_gates(&self, tape: &mut Tape, z: Var, cs: &[Var]) -> Embedding {
        let d = self.dim;
        let n = cs.len();
        let gate = |tape: &mut Tape, k: usize| {
            let s = tape.slice(z, k * d, d);
            tape.sigmoid(s)
        };
        let i = gate(tape, 0);
        let o = gate(tape, 1 + n);
        let u = tape.slice(z, (2 + n) * d, d);
        let u = tape.tanh(u);
        let mut c = tape.hadamard(i, u);
        for (k, ck) in cs.iter().enumerate() {
            let f = gate(tape, 1 + k);
            let fc = tape.hadamard(f, *ck);
            c = tape.add(c, fc);
        }
        let tc = tape.tanh(c);
        let h = tape.hadamard(o, tc);
        Embedding { h, c: Some(c) }
    }

    /// Probability that a symbolic equation holds, as a tape value.
    pub fn verify_symbolic(&self, tape: &mut Tape, eq: &Equation, mode: &mut Mode) -> Result<Var, ModelError> {
        if !self.arch.is_tree() {
            return self.chain_forward(tape, eq, mode);
        }
        let l = self.embed_expr(tape, eq.lhs(), mode)?;
        let r = self.embed_expr(tape, eq.rhs(), mode)?;
        let mut s = tape.dot(l.h, r.h);
        if let Some(b) = self.ids.head_b {
            let b = tape.param(&self.params, b);
            s = tape.add(s, b);
        }
        Ok(tape.sigmoid(s))
    }

    /// Decoded values of both sides of a function-evaluation equation.
    pub fn decode_sides(&self, tape: &mut Tape, eq: &Equation, mode: &mut Mode) -> Result<(Var, Var), ModelError> {
        let l = self.embed_expr(tape, eq.lhs(), mode)?;
        let r = self.embed_expr(tape, eq.rhs(), mode)?;
        Ok((self.decode_number(tape, l.h), self.decode_number(tape, r.h)))
    }

    /// Decoded sides and their squared gap, in evaluation mode.
    pub fn func_eval_error(&self, eq: &Equation) -> Result<FuncEvalOutput, ModelError> {
        let mut tape = Tape::new();
        let (l, r) = self.decode_sides(&mut tape, eq, &mut Mode::Eval)?;
        let (lhs, rhs) = (tape.scalar(l), tape.scalar(r));
        Ok(FuncEvalOutput { lhs, rhs, sq_err: (lhs - rhs) * (lhs - rhs) })
    }

    /// Symbolic-head probability in evaluation mode. Chain models accept
    /// either kind.
    pub fn probability(&self, eq: &Equation) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let p = self.verify_symbolic(&mut tape, eq, &mut Mode::Eval)?;
        Ok(tape.scalar(p))
    }

    /// Token ids of `lhs SEP rhs` for chain models; numbers map to `None`.
    pub fn chain_tokens(&self, eq: &Equation) -> Result<Vec<ChainToken>, ModelError> {
        let mut out = Vec::with_capacity(eq.node_count() + 1);
        self.push_tokens(eq.lhs(), &mut out)?;
        out.push(ChainToken::Symbol(chain_vocab_len(&self.functions, self.variables.len()) - 1));
        self.push_tokens(eq.rhs(), &mut out)?;
        Ok(out)
    }

    fn push_tokens(&self, e: &Expr, out: &mut Vec<ChainToken>) -> Result<(), ModelError> {
        match e {
            Expr::Leaf(Terminal::Num(n)) => out.push(ChainToken::Number(*n)),
            Expr::Leaf(t) => out.push(ChainToken::Symbol(self.functions.len() + self.symbol_index(t)?)),
            Expr::Apply(f, args) => {
                let i = self.functions.all().iter().position(|g| g == f).ok_or(ModelError::UnknownFunction(*f))?;
                out.push(ChainToken::Symbol(i));
                for a in args {
                    self.push_tokens(a, out)?;
                }
            }
        }
        Ok(())
    }

    /// Chain RNN/LSTM over the token sequence; final state -> linear -> sigmoid.
    pub fn chain_forward(&self, tape: &mut Tape, eq: &Equation, mode: &mut Mode) -> Result<Var, ModelError> {
        let ids = self.ids.chain.as_ref().expect("chain model");
        let zero = vec![0.0; self.dim];
        let mut h = tape.input(&zero);
        let mut c = tape.input(&zero);
        for tok in self.chain_tokens(eq)? {
            let x = match tok {
                ChainToken::Symbol(j) => tape.column(&self.params, ids.embed, j),
                ChainToken::Number(n) => self.encode_number(tape, n.value()),
            };
            let x = mode.drop(tape, x);
            let xh = tape.concat(&[x, h]);
            let z = tape.affine(&self.params, ids.w, ids.b, xh);
            if self.arch == Arch::Lstm {
                let e = self.lstm_gates(tape, z, &[c]);
                h = e.h;
                c = e.c.expect("lstm state");
            } else {
                h = tape.tanh(z);
            }
        }
        let logit = tape.affine(&self.params, ids.out_w, ids.out_b, h);
        Ok(tape.sigmoid(logit))
    }

    /// Training loss for one labeled equation.
    ///
    /// Symbolic equations, and every equation for chain models, use binary
    /// cross-entropy on the symbolic head. Function-evaluation equations on
    /// tree models use the squared side gap plus an anchor of the decoded
    /// right side to its value when correct, and a hinge keeping the gap
    /// above [`FUNCEVAL_MARGIN`] when incorrect.
    pub fn loss(&self, tape: &mut Tape, eq: &Equation, label: Label, mode: &mut Mode) -> Result<Var, ModelError> {
        let y = if label.is_correct() { 1.0 } else { 0.0 };
        if eq.kind() == Kind::Symbolic || !self.arch.is_tree() {
            let p = self.verify_symbolic(tape, eq, mode)?;
            return Ok(tape.bce(p, y));
        }
        let (l, r) = self.decode_sides(tape, eq, mode)?;
        let gap = tape.sub(l, r);
        let sq = tape.dot(gap, gap);
        if label.is_correct() {
            let target = eval_closed(eq.rhs()).unwrap_or_else(|_| tape.scalar(r));
            let anchor = tape.mse(r, &[target]);
            Ok(tape.add(sq, anchor))
        } else {
            Ok(tape.hinge(sq, FUNCEVAL_MARGIN))
        }
    }

    /// Whether the tree-model function-evaluation head accepts `eq`, given
    /// the calibrated threshold.
    pub fn func_eval_valid(&self, eq: &Equation) -> Result<bool, ModelError> {
        let tau = self.meta.threshold.unwrap_or(FUNCEVAL_MARGIN);
        Ok(self.func_eval_error(eq)?.sq_err <= tau)
    }

    pub fn has_head_bias(&self) -> bool {
        self.ids.head_b.is_some()
    }

    /// Parameters of the number encoder and decoder.
    pub fn number_block_ids(&self) -> Vec<ParamId> {
        self.ids.enc.iter().chain(&self.ids.dec).copied().collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.size()
    }

    /// All grid numbers in the data range.
    pub fn number_grid() -> Vec<Number> {
        Number::data_grid().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuncEvalOutput {
    pub lhs: f64,
    pub rhs: f64,
    pub sq_err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainToken {
    Symbol(usize),
    Number(Number),
}

/// Functions, constants, variables and the separator.
fn chain_vocab_len(functions: &FunctionTable, n_vars: usize) -> usize {
    functions.len() + Constant::ALL.len() + n_vars + 1
}

#[cfg(test)]
mod tests;
