//! Expression grammar: terminals, function symbols, trees, equations and
//! the prefix text format.
//!
//! Depth follows one convention everywhere: a terminal has depth 1, an
//! application has depth one more than its deepest child, and an equation
//! has the depth of its deeper side (the equality itself is not counted).

mod enumerate;
mod func;
mod parse;
mod pattern;
mod terminal;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use enumerate::{decimal_tree, enumerate, table_terminals};
pub use func::{Func, FunctionTable};
pub use parse::{parse, parse_equation, parse_with, ParseError};
pub use pattern::{instantiate, match_at, match_subtree, Bindings};
pub use terminal::{Constant, Number, Terminal, Variable, DATA_RANGE_HUNDREDTHS, MAX_LITERAL_HUNDREDTHS};

/// Path from a root to a node: the child index taken at each step.
pub type Path = Vec<usize>;

/// Immutable expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Leaf(Terminal),
    Apply(Func, Vec<Expr>),
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("invalid position {0:?}")]
    InvalidPosition(Path),
    #[error("{func} takes {expected} argument(s), got {got}")]
    Arity { func: Func, expected: usize, got: usize },
    #[error("number {0} exceeds two decimal digits or the literal range")]
    Precision(f64),
    #[error("{0} equation contains a {1} terminal")]
    KindViolation(Kind, &'static str),
}

impl Expr {
    pub fn leaf(t: Terminal) -> Expr {
        Expr::Leaf(t)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Leaf(Terminal::var(name))
    }

    pub fn constant(c: Constant) -> Expr {
        Expr::Leaf(Terminal::Const(c))
    }

    pub fn number(n: Number) -> Expr {
        Expr::Leaf(Terminal::number(n))
    }

    pub fn unary(f: Func, arg: Expr) -> Expr {
        debug_assert_eq!(f.arity(), 1);
        Expr::Apply(f, vec![arg])
    }

    pub fn binary(f: Func, a: Expr, b: Expr) -> Expr {
        debug_assert_eq!(f.arity(), 2);
        Expr::Apply(f, vec![a, b])
    }

    /// Checked constructor for an application node.
    pub fn apply(f: Func, children: Vec<Expr>) -> Result<Expr, ExprError> {
        if children.len() != f.arity() {
            return Err(ExprError::Arity { func: f, expected: f.arity(), got: children.len() });
        }
        Ok(Expr::Apply(f, children))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Leaf(_) => 1,
            Expr::Apply(_, cs) => 1 + cs.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Leaf(_) => 1,
            Expr::Apply(_, cs) => 1 + cs.iter().map(Expr::node_count).sum::<usize>(),
        }
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Leaf(_) => &[],
            Expr::Apply(_, cs) => cs,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Expr::Leaf(_))
    }

    /// All node paths in pre-order.
    pub fn positions(&self) -> Vec<Path> {
        fn walk(e: &Expr, path: &mut Path, out: &mut Vec<Path>) {
            out.push(path.clone());
            for (i, c) in e.children().iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::with_capacity(self.node_count());
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn get(&self, path: &[usize]) -> Option<&Expr> {
        let mut cur = self;
        for &i in path {
            cur = cur.children().get(i)?;
        }
        Some(cur)
    }

    /// Copy of `self` with the subtree at `path` replaced.
    pub fn substitute(&self, path: &[usize], replacement: Expr) -> Result<Expr, ExprError> {
        match path.split_first() {
            None => Ok(replacement),
            Some((&i, rest)) => match self {
                Expr::Apply(f, cs) if i < cs.len() => {
                    let mut cs = cs.clone();
                    cs[i] =
                        cs[i].substitute(rest, replacement).map_err(|_| ExprError::InvalidPosition(path.to_vec()))?;
                    Ok(Expr::Apply(*f, cs))
                }
                _ => Err(ExprError::InvalidPosition(path.to_vec())),
            },
        }
    }

    pub fn terminals(&self) -> Vec<&Terminal> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |t| out.push(t));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a Terminal)) {
        match self {
            Expr::Leaf(t) => f(t),
            Expr::Apply(_, cs) => cs.iter().for_each(|c| c.visit_leaves(f)),
        }
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.visit_leaves(&mut |t| {
            if let Terminal::Var(v) = t {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn has_variables(&self) -> bool {
        self.terminals().iter().any(|t| matches!(t, Terminal::Var(_)))
    }

    pub fn has_numbers(&self) -> bool {
        self.terminals().iter().any(|t| matches!(t, Terminal::Num(_)))
    }

    pub fn functions(&self) -> Vec<Func> {
        let mut out = Vec::new();
        fn walk(e: &Expr, out: &mut Vec<Func>) {
            if let Expr::Apply(f, cs) = e {
                out.push(*f);
                cs.iter().for_each(|c| walk(c, out));
            }
        }
        walk(self, &mut out);
        out
    }

    /// Prefix token stream, one entry per node.
    pub fn prefix_tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.node_count());
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Leaf(t) => out.push(t.to_string()),
                Expr::Apply(f, cs) => {
                    out.push(f.name().to_string());
                    cs.iter().for_each(|c| walk(c, out));
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Leaf(t) => t.fmt(f),
            Expr::Apply(func, cs) => {
                write!(f, "({func}")?;
                for c in cs {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Which family an equation belongs to, decided by its terminal types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Symbolic,
    FuncEval,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Symbolic => "symbolic",
            Kind::FuncEval => "funceval",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Lhs,
    Rhs,
}

/// A node of an equation: the equality root, or a path within one side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EqPosition {
    Root,
    Node(Side, Path),
}

/// An (unlabeled) equality between two expressions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Equation {
    lhs: Expr,
    rhs: Expr,
    kind: Kind,
}

impl Equation {
    /// Builds an equation, rejecting terminals that contradict `kind`.
    pub fn new(lhs: Expr, rhs: Expr, kind: Kind) -> Result<Self, ExprError> {
        let check = |e: &Expr| match kind {
            Kind::Symbolic if e.has_numbers() => Err(ExprError::KindViolation(kind, "number")),
            Kind::FuncEval if e.has_variables() => Err(ExprError::KindViolation(kind, "variable")),
            _ => Ok(()),
        };
        check(&lhs)?;
        check(&rhs)?;
        Ok(Self { lhs, rhs, kind })
    }

    /// Infers the kind: any number makes it function evaluation.
    pub fn infer(lhs: Expr, rhs: Expr) -> Result<Self, ExprError> {
        let kind = if lhs.has_numbers() || rhs.has_numbers() { Kind::FuncEval } else { Kind::Symbolic };
        Self::new(lhs, rhs, kind)
    }

    pub fn lhs(&self) -> &Expr {
        &self.lhs
    }

    pub fn rhs(&self) -> &Expr {
        &self.rhs
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn side(&self, side: Side) -> &Expr {
        match side {
            Side::Lhs => &self.lhs,
            Side::Rhs => &self.rhs,
        }
    }

    pub fn depth(&self) -> usize {
        self.lhs.depth().max(self.rhs.depth())
    }

    pub fn node_count(&self) -> usize {
        self.lhs.node_count() + self.rhs.node_count()
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut v = self.lhs.variables();
        v.extend(self.rhs.variables());
        v
    }

    /// Every node of both sides, preceded by the equality root.
    pub fn positions(&self) -> Vec<EqPosition> {
        let mut out = vec![EqPosition::Root];
        for side in [Side::Lhs, Side::Rhs] {
            out.extend(self.side(side).positions().into_iter().map(|p| EqPosition::Node(side, p)));
        }
        out
    }

    pub fn get(&self, side: Side, path: &[usize]) -> Option<&Expr> {
        self.side(side).get(path)
    }

    /// Replaces a subtree on one side, re-checking the kind invariant.
    pub fn substitute(&self, side: Side, path: &[usize], replacement: Expr) -> Result<Self, ExprError> {
        let (lhs, rhs) = match side {
            Side::Lhs => (self.lhs.substitute(path, replacement)?, self.rhs.clone()),
            Side::Rhs => (self.lhs.clone(), self.rhs.substitute(path, replacement)?),
        };
        Self::new(lhs, rhs, self.kind)
    }

    pub fn swapped(&self) -> Self {
        Self { lhs: self.rhs.clone(), rhs: self.lhs.clone(), kind: self.kind }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

/// Function table plus the variable alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    pub functions: FunctionTable,
    pub variables: Vec<Variable>,
}

impl Grammar {
    pub fn new(functions: FunctionTable, variables: &[&str]) -> Self {
        Self { functions, variables: variables.iter().map(|v| Variable::new(v)).collect() }
    }

    pub fn is_variable(&self, name: &str) -> bool {
        self.variables.iter().any(|v| v.name() == name)
    }

    /// Named constants followed by the variable alphabet.
    pub fn symbolic_terminals(&self) -> Vec<Terminal> {
        Constant::ALL
            .iter()
            .map(|&c| Terminal::Const(c))
            .chain(self.variables.iter().cloned().map(Terminal::Var))
            .collect()
    }
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::new(FunctionTable::standard(), &["x", "y", "z", "th"])
    }
}
