use super::DataError;
use crate::eval::{verify_identity, OracleConfig, Verdict};
use crate::expr::{parse_equation, Equation, Grammar, Kind};

/// The axiom list shipped with the crate.
pub const DEFAULT_AXIOMS: &str = include_str!("../../data/axioms.txt");

/// Hand-curated correct symbolic identities that seed generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxiomSet {
    pub equations: Vec<Equation>,
}

impl AxiomSet {
    /// Parses `lhs = rhs` lines; `#` starts a comment. Every axiom must be
    /// symbolic and verify as correct.
    pub fn parse(text: &str, grammar: &Grammar, oracle: &OracleConfig) -> Result<Self, DataError> {
        let mut equations = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| DataError::Axiom { line: i + 1, msg };
            let (lhs, rhs) = parse_equation(line, grammar).map_err(|e| err(e.to_string()))?;
            let eq = Equation::new(lhs, rhs, Kind::Symbolic).map_err(|e| err(e.to_string()))?;
            let v = verify_identity(&eq, oracle);
            if v.verdict != Verdict::Correct {
                return Err(err(format!("`{eq}` does not verify ({:?})", v.verdict)));
            }
            if !equations.contains(&eq) {
                equations.push(eq);
            }
        }
        Ok(Self { equations })
    }

    pub fn standard() -> Self {
        Self::parse(DEFAULT_AXIOMS, &Grammar::default(), &OracleConfig::default()).expect("shipped axioms are valid")
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.equations.iter().map(Equation::depth).max().unwrap_or(0)
    }
}
