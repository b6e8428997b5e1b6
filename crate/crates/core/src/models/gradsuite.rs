use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Arch, Mode, Model};
use crate::autodiff::{check_gradients_of, ParamStore};
use crate::eval::Label;
use crate::expr::{Equation, Expr, Func, Grammar, Kind, Number, Terminal};

impl AsRef<ParamStore> for Model {
    fn as_ref(&self) -> &ParamStore {
        &self.params
    }
}

impl AsMut<ParamStore> for Model {
    fn as_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

/// One gradient-check case of [`gradient_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCase {
    pub arch: Arch,
    pub kind: Kind,
    pub dim: usize,
    /// Symbolic head with the learned offset.
    pub head_bias: bool,
    pub equation: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradSuite {
    pub cases: Vec<GradCase>,
}

impl GradSuite {
    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

const STEP: f64 = 1e-5;
const MAX_PER_PARAM: usize = 48;

fn random_expr<R: Rng>(depth: usize, leaves: &[Terminal], unary: &[Func], binary: &[Func], rng: &mut R) -> Expr {
    if depth <= 1 || rng.gen_bool(0.3) {
        return Expr::Leaf(leaves.choose(rng).expect("terminals").clone());
    }
    if rng.gen_bool(0.5) {
        Expr::unary(*unary.choose(rng).expect("unary"), random_expr(depth - 1, leaves, unary, binary, rng))
    } else {
        let a = random_expr(depth - 1, leaves, unary, binary, rng);
        let b = random_expr(depth - 1, leaves, unary, binary, rng);
        Expr::binary(*binary.choose(rng).expect("binary"), a, b)
    }
}

/// A random equation of depth at most 4 whose left side applies both a
/// unary and a binary function.
pub fn random_equation<R: Rng>(grammar: &Grammar, kind: Kind, rng: &mut R) -> Equation {
    let unary: Vec<Func> = grammar.functions.unary().collect();
    let binary: Vec<Func> = grammar.functions.binary().collect();
    let leaves: Vec<Terminal> = match kind {
        Kind::Symbolic => grammar.symbolic_terminals(),
        Kind::FuncEval => {
            (0..6).map(|_| Terminal::number(Number::from_hundredths(rng.gen_range(-314..=314)))).collect()
        }
    };
    let inner = Expr::unary(*unary.choose(rng).unwrap(), random_expr(2, &leaves, &unary, &binary, rng));
    let other = random_expr(2, &leaves, &unary, &binary, rng);
    let lhs = Expr::binary(*binary.choose(rng).unwrap(), inner, other);
    let mut rhs = random_expr(4, &leaves, &unary, &binary, rng);
    if kind == Kind::FuncEval && !rhs.has_numbers() && !lhs.has_numbers() {
        rhs = Expr::Leaf(leaves[0].clone());
    }
    Equation::new(lhs, rhs, kind).expect("kind matches the leaves")
}

/// Finite-difference checks of every cell type and both heads on random
/// models and equations, cycling through the architectures.
pub fn gradient_suite(configs: usize, max_dim: usize, seed: u64) -> GradSuite {
    let grammar = Grammar::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = [
        (Arch::TreeNn, Kind::Symbolic),
        (Arch::TreeNn, Kind::FuncEval),
        (Arch::TreeLstm, Kind::Symbolic),
        (Arch::TreeLstm, Kind::FuncEval),
        (Arch::Rnn, Kind::Symbolic),
        (Arch::Lstm, Kind::Symbolic),
    ];
    let mut cases = Vec::with_capacity(configs);
    for i in 0..configs {
        let (arch, kind) = plan[i % plan.len()];
        let dim = rng.gen_range(2..=max_dim.max(2));
        let head_bias = i % (2 * plan.len()) < plan.len();
        let mut model = Model::with_head_bias(arch, dim, &grammar, rng.gen(), head_bias);
        let eq = random_equation(&grammar, kind, &mut rng);
        let label = if rng.gen_bool(0.5) { Label::Correct } else { Label::Incorrect };
        let check = check_gradients_of(&mut model, STEP, MAX_PER_PARAM, |tape, m| {
            m.loss(tape, &eq, label, &mut Mode::Eval).expect("grammar symbols")
        });
        cases.push(GradCase {
            arch,
            kind,
            dim,
            head_bias: model.has_head_bias(),
            equation: eq.to_string(),
            checked: check.checked,
            max_rel_err: check.max_rel_err,
        });
    }
    GradSuite { cases }
}
