use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

/// Named constants of the grammar, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constant {
    Zero,
    One,
    Two,
    Three,
    Four,
    Ten,
    Half,
    NegOne,
    PointFour,
    PointSeven,
    Pi,
}

impl Constant {
    pub const ALL: [Constant; 11] = [
        Constant::Zero,
        Constant::One,
        Constant::Two,
        Constant::Three,
        Constant::Four,
        Constant::Ten,
        Constant::Half,
        Constant::NegOne,
        Constant::PointFour,
        Constant::PointSeven,
        Constant::Pi,
    ];

    pub fn value(self) -> f64 {
        match self {
            Constant::Zero => 0.0,
            Constant::One => 1.0,
            Constant::Two => 2.0,
            Constant::Three => 3.0,
            Constant::Four => 4.0,
            Constant::Ten => 10.0,
            Constant::Half => 0.5,
            Constant::NegOne => -1.0,
            Constant::PointFour => 0.4,
            Constant::PointSeven => 0.7,
            Constant::Pi => std::f64::consts::PI,
        }
    }

    /// Value in hundredths, for every constant except pi.
    pub fn hundredths(self) -> Option<i32> {
        Some(match self {
            Constant::Zero => 0,
            Constant::One => 100,
            Constant::Two => 200,
            Constant::Three => 300,
            Constant::Four => 400,
            Constant::Ten => 1000,
            Constant::Half => 50,
            Constant::NegOne => -100,
            Constant::PointFour => 40,
            Constant::PointSeven => 70,
            Constant::Pi => return None,
        })
    }

    pub fn token(self) -> &'static str {
        match self {
            Constant::Zero => "0",
            Constant::One => "1",
            Constant::Two => "2",
            Constant::Three => "3",
            Constant::Four => "4",
            Constant::Ten => "10",
            Constant::Half => "0.5",
            Constant::NegOne => "-1",
            Constant::PointFour => "0.4",
            Constant::PointSeven => "0.7",
            Constant::Pi => "pi",
        }
    }

    pub fn from_hundredths(h: i32) -> Option<Constant> {
        Constant::ALL.iter().copied().find(|c| c.hundredths() == Some(h))
    }
}

/// Largest magnitude accepted for a number literal, in hundredths.
///
/// Sampled data stays within 3.14; decimal expansion trees also use the
/// digits 5 through 9 as literals.
pub const MAX_LITERAL_HUNDREDTHS: i32 = 1000;

/// Largest magnitude of a sampled data number, in hundredths.
pub const DATA_RANGE_HUNDREDTHS: i32 = 314;

/// A decimal number with at most two fractional digits, stored in hundredths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Number(i32);

impl Number {
    pub fn from_hundredths(h: i32) -> Self {
        Number(h)
    }

    pub fn hundredths(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Exact conversion; `None` if `v` has more than two decimals.
    pub fn from_f64(v: f64) -> Option<Self> {
        let scaled = (v * 100.0).round();
        if !scaled.is_finite() || (scaled / 100.0 - v).abs() > 1e-9 {
            return None;
        }
        Some(Number(scaled as i32))
    }

    /// Every precision-2 number in `[-3.14, 3.14]`, ascending.
    pub fn data_grid() -> impl Iterator<Item = Number> {
        (-DATA_RANGE_HUNDREDTHS..=DATA_RANGE_HUNDREDTHS).map(Number)
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.0;
        let sign = if h < 0 { "-" } else { "" };
        let a = h.unsigned_abs();
        let (int, frac) = (a / 100, a % 100);
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else if frac % 10 == 0 {
            write!(f, "{sign}{int}.{}", frac / 10)
        } else {
            write!(f, "{sign}{int}.{frac:02}")
        }
    }
}

/// A variable name, e.g. `x` or `th`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(Arc<str>);

impl Variable {
    pub fn new(name: &str) -> Self {
        Variable(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Leaf of an expression tree.
///
/// Numbers whose value coincides with a named constant are always stored as
/// the constant, so that printing and parsing are mutually inverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    Const(Constant),
    Var(Variable),
    Num(Number),
}

impl Terminal {
    pub fn number(n: Number) -> Terminal {
        match Constant::from_hundredths(n.hundredths()) {
            Some(c) => Terminal::Const(c),
            None => Terminal::Num(n),
        }
    }

    pub fn var(name: &str) -> Terminal {
        Terminal::Var(Variable::new(name))
    }

    /// Numeric value, if the terminal is not a variable.
    pub fn value(&self) -> Option<f64> {
        match self {
            Terminal::Const(c) => Some(c.value()),
            Terminal::Num(n) => Some(n.value()),
            Terminal::Var(_) => None,
        }
    }

    /// Value in hundredths for number-like terminals (not pi, not variables).
    pub fn hundredths(&self) -> Option<i32> {
        match self {
            Terminal::Const(c) => c.hundredths(),
            Terminal::Num(n) => Some(n.hundredths()),
            Terminal::Var(_) => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Terminal::Const(_) => 0,
            Terminal::Var(_) => 1,
            Terminal::Num(_) => 2,
        }
    }
}

impl Ord for Terminal {
    /// Constants in table order, then variables by name, then numbers
    /// ascending.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Terminal::Const(a), Terminal::Const(b)) => a.cmp(b),
            (Terminal::Var(a), Terminal::Var(b)) => a.cmp(b),
            (Terminal::Num(a), Terminal::Num(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Terminal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Const(c) => f.write_str(c.token()),
            Terminal::Var(v) => v.fmt(f),
            Terminal::Num(n) => n.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_print_with_minimal_digits() {
        assert_eq!(Number::from_hundredths(50).to_string(), "0.5");
        assert_eq!(Number::from_hundredths(-250).to_string(), "-2.5");
        assert_eq!(Number::from_hundredths(-314).to_string(), "-3.14");
        assert_eq!(Number::from_hundredths(5).to_string(), "0.05");
        assert_eq!(Number::from_hundredths(-5).to_string(), "-0.05");
        assert_eq!(Number::from_hundredths(700).to_string(), "7");
        assert_eq!(Number::from_hundredths(0).to_string(), "0");
    }

    #[test]
    fn numbers_matching_constants_normalize() {
        assert_eq!(Terminal::number(Number::from_hundredths(50)), Terminal::Const(Constant::Half));
        assert_eq!(Terminal::number(Number::from_hundredths(-100)), Terminal::Const(Constant::NegOne));
        assert!(matches!(Terminal::number(Number::from_hundredths(-250)), Terminal::Num(_)));
    }

    #[test]
    fn data_grid_has_629_values() {
        assert_eq!(Number::data_grid().count(), 629);
    }

    #[test]
    fn from_f64_rejects_extra_precision() {
        assert_eq!(Number::from_f64(2.18), Some(Number::from_hundredths(218)));
        assert_eq!(Number::from_f64(2.185), None);
    }
}
