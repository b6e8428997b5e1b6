use std::fmt;

use serde::{Deserialize, Serialize};

/// A grammar function symbol.
///
/// The first 25 variants are the unary functions and the next three the
/// binary ones, both in table order. `Log` and `Atan2` are extensions that
/// are only available when a [`FunctionTable`] enables them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Csc,
    Sec,
    Tan,
    Cot,
    Asin,
    Acos,
    Acsc,
    Asec,
    Atan,
    Acot,
    Sinh,
    Cosh,
    Csch,
    Sech,
    Tanh,
    Coth,
    Asinh,
    Acosh,
    Acsch,
    Asech,
    Atanh,
    Acoth,
    Exp,
    Add,
    Mul,
    Pow,
    Log,
    Atan2,
}

impl Func {
    pub const ALL: [Func; 30] = [
        Func::Sin,
        Func::Cos,
        Func::Csc,
        Func::Sec,
        Func::Tan,
        Func::Cot,
        Func::Asin,
        Func::Acos,
        Func::Acsc,
        Func::Asec,
        Func::Atan,
        Func::Acot,
        Func::Sinh,
        Func::Cosh,
        Func::Csch,
        Func::Sech,
        Func::Tanh,
        Func::Coth,
        Func::Asinh,
        Func::Acosh,
        Func::Acsch,
        Func::Asech,
        Func::Atanh,
        Func::Acoth,
        Func::Exp,
        Func::Add,
        Func::Mul,
        Func::Pow,
        Func::Log,
        Func::Atan2,
    ];

    pub fn arity(self) -> usize {
        match self {
            Func::Add | Func::Mul | Func::Pow | Func::Atan2 => 2,
            _ => 1,
        }
    }

    /// Token used by the prefix text format.
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Csc => "csc",
            Func::Sec => "sec",
            Func::Tan => "tan",
            Func::Cot => "cot",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Acsc => "acsc",
            Func::Asec => "asec",
            Func::Atan => "atan",
            Func::Acot => "acot",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Csch => "csch",
            Func::Sech => "sech",
            Func::Tanh => "tanh",
            Func::Coth => "coth",
            Func::Asinh => "asinh",
            Func::Acosh => "acosh",
            Func::Acsch => "acsch",
            Func::Asech => "asech",
            Func::Atanh => "atanh",
            Func::Acoth => "acoth",
            Func::Exp => "exp",
            Func::Add => "+",
            Func::Mul => "*",
            Func::Pow => "^",
            Func::Log => "log",
            Func::Atan2 => "atan2",
        }
    }

    pub fn from_name(token: &str) -> Option<Func> {
        match token {
            "×" => return Some(Func::Mul),
            "∧" => return Some(Func::Pow),
            _ => {}
        }
        Func::ALL.iter().copied().find(|f| f.name() == token)
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The set of functions a grammar admits, in enumeration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionTable {
    funcs: Vec<Func>,
}

impl FunctionTable {
    /// The 25 unary and 3 binary functions of the base grammar.
    pub fn standard() -> Self {
        Self { funcs: Func::ALL[..28].to_vec() }
    }

    /// Standard table plus `log` and `atan2`.
    pub fn extended() -> Self {
        Self { funcs: Func::ALL.to_vec() }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Option<Self> {
        let mut funcs = Vec::with_capacity(names.len());
        for name in names {
            let f = Func::from_name(name.as_ref())?;
            if !funcs.contains(&f) {
                funcs.push(f);
            }
        }
        funcs.sort();
        Some(Self { funcs })
    }

    pub fn contains(&self, f: Func) -> bool {
        self.funcs.contains(&f)
    }

    pub fn all(&self) -> &[Func] {
        &self.funcs
    }

    pub fn unary(&self) -> impl Iterator<Item = Func> + '_ {
        self.funcs.iter().copied().filter(|f| f.arity() == 1)
    }

    pub fn binary(&self) -> impl Iterator<Item = Func> + '_ {
        self.funcs.iter().copied().filter(|f| f.arity() == 2)
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    /// Stable identifier of the table contents, recorded in checkpoints.
    pub fn signature(&self) -> String {
        self.funcs.iter().map(|f| f.name()).collect::<Vec<_>>().join(",")
    }
}

impl Default for FunctionTable {
    fn default() -> Self {
        Self::standard()
    }
}
