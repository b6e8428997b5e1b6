use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::DataError;
use crate::expr::{Constant, EqPosition, Equation, Expr, Func, Grammar, Terminal};

/// Local change applied at a randomly selected node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    /// Replace an inner node by one of its children.
    ShrinkNode,
    /// Swap the node's symbol for a compatible one.
    ReplaceNode,
    /// Feed the node into a new function; binary functions get a random
    /// terminal as second argument.
    GrowNode,
    /// At the equality: add, multiply or exponentiate both sides by a
    /// random constant.
    GrowSides,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::ShrinkNode, Action::ReplaceNode, Action::GrowNode, Action::GrowSides];
}

/// Random local mutations of symbolic equations.
#[derive(Clone, Debug)]
pub struct Mutator {
    unary: Vec<Func>,
    binary: Vec<Func>,
    terminals: Vec<Terminal>,
    constants: Vec<Terminal>,
    weights: WeightedIndex<f64>,
    max_tries: usize,
}

impl Mutator {
    pub fn new(grammar: &Grammar, weights: [f64; 4]) -> Result<Self, DataError> {
        let weights = WeightedIndex::new(weights).map_err(|e| DataError::Config(format!("mutation weights: {e}")))?;
        Ok(Self {
            unary: grammar.functions.unary().collect(),
            binary: grammar.functions.binary().collect(),
            terminals: grammar.symbolic_terminals(),
            constants: Constant::ALL.iter().map(|&c| Terminal::Const(c)).collect(),
            weights,
            max_tries: 64,
        })
    }

    pub fn terminals(&self) -> &[Terminal] {
        &self.terminals
    }

    /// A grammar-valid equation that differs from `eq`.
    pub fn mutate<R: Rng>(&self, eq: &Equation, rng: &mut R) -> Result<(Equation, Action), DataError> {
        let positions = eq.positions();
        for _ in 0..self.max_tries {
            let pos = positions.choose(rng).expect("an equation has nodes");
            let action = Action::ALL[self.weights.sample(rng)];
            if let Some(out) = self.apply(eq, pos, action, rng) {
                if out != *eq {
                    return Ok((out, action));
                }
            }
        }
        Err(DataError::MutationExhausted(self.max_tries))
    }

    /// Applies `action` at `pos`; `None` when the action does not apply there.
    pub fn apply<R: Rng>(&self, eq: &Equation, pos: &EqPosition, action: Action, rng: &mut R) -> Option<Equation> {
        match (action, pos) {
            (Action::GrowSides, EqPosition::Root) => {
                let op = **self
                    .binary
                    .iter()
                    .filter(|f| matches!(f, Func::Add | Func::Mul | Func::Pow))
                    .collect::<Vec<_>>()
                    .choose(rng)?;
                let c = Expr::Leaf(self.constants.choose(rng)?.clone());
                let lhs = Expr::binary(op, eq.lhs().clone(), c.clone());
                let rhs = Expr::binary(op, eq.rhs().clone(), c);
                Equation::new(lhs, rhs, eq.kind()).ok()
            }
            (_, EqPosition::Root) | (Action::GrowSides, _) => None,
            (_, EqPosition::Node(side, path)) => {
                let node = eq.get(*side, path)?;
                let replacement = match action {
                    Action::ShrinkNode => node.children().choose(rng)?.clone(),
                    Action::ReplaceNode => match node {
                        Expr::Leaf(t) => {
                            let others: Vec<&Terminal> = self.terminals.iter().filter(|u| *u != t).collect();
                            Expr::Leaf((*others.choose(rng)?).clone())
                        }
                        Expr::Apply(f, cs) => {
                            let pool = if f.arity() == 1 { &self.unary } else { &self.binary };
                            let others: Vec<Func> = pool.iter().copied().filter(|g| g != f).collect();
                            Expr::Apply(*others.choose(rng)?, cs.clone())
                        }
                    },
                    Action::GrowNode => {
                        let n = self.unary.len() + self.binary.len();
                        let k = rng.gen_range(0..n);
                        if k < self.unary.len() {
                            Expr::unary(self.unary[k], node.clone())
                        } else {
                            let t = Expr::Leaf(self.terminals.choose(rng)?.clone());
                            Expr::binary(self.binary[k - self.unary.len()], node.clone(), t)
                        }
                    }
                    Action::GrowSides => unreachable!(),
                };
                eq.substitute(*side, path, replacement).ok()
            }
        }
    }
}
