use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::expr::{instantiate, match_at, Bindings, EqPosition, Equation, Expr, Func, Terminal};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Head {
    Func(Func),
    Leaf(Terminal),
}

fn head(e: &Expr) -> Option<Head> {
    match e {
        Expr::Leaf(Terminal::Var(_)) => None,
        Expr::Leaf(t) => Some(Head::Leaf(t.clone())),
        Expr::Apply(f, _) => Some(Head::Func(*f)),
    }
}

/// Lookup from pattern keys to equal pattern values. Variables in both are
/// wildcards.
#[derive(Clone, Debug, Default)]
pub struct RewriteTable {
    entries: Vec<(Expr, Expr)>,
    by_head: HashMap<Head, Vec<usize>>,
    /// Keys that are a bare wildcard and match every node.
    universal: Vec<usize>,
    seen: HashSet<(Expr, Expr)>,
}

impl RewriteTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table holding both orientations of every equation.
    pub fn from_equations<'a>(eqs: impl IntoIterator<Item = &'a Equation>) -> Self {
        let mut t = Self::new();
        for eq in eqs {
            t.add_equation(eq);
        }
        t
    }

    pub fn insert(&mut self, key: Expr, value: Expr) -> bool {
        if key == value || !self.seen.insert((key.clone(), value.clone())) {
            return false;
        }
        let idx = self.entries.len();
        match head(&key) {
            Some(h) => self.by_head.entry(h).or_default().push(idx),
            None => self.universal.push(idx),
        }
        self.entries.push((key, value));
        true
    }

    /// Adds `lhs -> rhs` and `rhs -> lhs`.
    pub fn add_equation(&mut self, eq: &Equation) -> usize {
        usize::from(self.insert(eq.lhs().clone(), eq.rhs().clone()))
            + usize::from(self.insert(eq.rhs().clone(), eq.lhs().clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Expr, Expr)] {
        &self.entries
    }

    /// Entries whose key matches `node` at its root, with the bindings.
    pub fn matches(&self, node: &Expr) -> Vec<(usize, Bindings)> {
        let by_head = head(node).and_then(|h| self.by_head.get(&h)).map(Vec::as_slice).unwrap_or(&[]);
        by_head
            .iter()
            .chain(&self.universal)
            .filter_map(|&i| match_at(node, &self.entries[i].0).map(|b| (i, b)))
            .collect()
    }
}

/// One rewrite step: pick a random node, collect the table keys matching
/// there and replace the subtree with the value of one of them, chosen
/// uniformly. Value wildcards that the key leaves unbound are filled with
/// random terminals from `fill`. Returns `None` when no key matches.
pub fn rewrite_once<R: Rng>(eq: &Equation, table: &RewriteTable, fill: &[Terminal], rng: &mut R) -> Option<Equation> {
    let positions: Vec<EqPosition> = eq.positions().into_iter().filter(|p| *p != EqPosition::Root).collect();
    let EqPosition::Node(side, path) = positions.choose(rng)? else {
        return None;
    };
    let node = eq.get(*side, path)?;
    let found = table.matches(node);
    let (idx, mut bindings) = found.choose(rng)?.clone();
    let value = &table.entries[idx].1;
    let mut extra = BTreeMap::new();
    for v in value.variables() {
        if !bindings.contains_key(&v) {
            extra.insert(v, Expr::Leaf(fill.choose(rng)?.clone()));
        }
    }
    bindings.extend(extra);
    eq.substitute(*side, path, instantiate(value, &bindings)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{verify_identity, OracleConfig, Verdict};
    use crate::expr::{parse, Grammar, Kind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(l: &str, r: &str) -> Equation {
        Equation::new(parse(l).unwrap(), parse(r).unwrap(), Kind::Symbolic).unwrap()
    }

    #[test]
    fn commutativity_swaps_the_pythagorean_sum() {
        let mut table = RewriteTable::new();
        table.insert(parse("(+ x y)").unwrap(), parse("(+ y x)").unwrap());
        let eq = sym("(+ (^ (sin th) 2) (^ (cos th) 2))", "1");
        let fill = Grammar::default().symbolic_terminals();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut produced = None;
        for _ in 0..100 {
            if let Some(out) = rewrite_once(&eq, &table, &fill, &mut rng) {
                produced = Some(out);
                break;
            }
        }
        assert_eq!(produced.unwrap().to_string(), "(+ (^ (cos th) 2) (^ (sin th) 2)) = 1");
    }

    #[test]
    fn rewrite_at_lhs_root() {
        let mut table = RewriteTable::new();
        table.insert(parse("(+ x y)").unwrap(), parse("(+ y x)").unwrap());
        let eq = sym("(+ x y)", "(+ y x)");
        let fill = Grammar::default().symbolic_terminals();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let outs: HashSet<String> =
            (0..100).filter_map(|_| rewrite_once(&eq, &table, &fill, &mut rng)).map(|e| e.to_string()).collect();
        assert!(outs.contains("(+ y x) = (+ y x)"));
        assert!(outs.contains("(+ x y) = (+ x y)"));
    }

    #[test]
    fn no_match_gives_none() {
        let mut table = RewriteTable::new();
        table.insert(parse("(* x 1)").unwrap(), parse("x").unwrap());
        let eq = sym("(sin x)", "(cos y)");
        let fill = Grammar::default().symbolic_terminals();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            assert!(rewrite_once(&eq, &table, &fill, &mut rng).is_none());
        }
    }

    #[test]
    fn unbound_value_wildcards_are_filled() {
        let mut table = RewriteTable::new();
        table.insert(parse("0").unwrap(), parse("(* x 0)").unwrap());
        let eq = sym("(sin 0)", "0");
        let fill = Grammar::default().symbolic_terminals();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = OracleConfig::default();
        for _ in 0..30 {
            if let Some(out) = rewrite_once(&eq, &table, &fill, &mut rng) {
                assert_eq!(verify_identity(&out, &cfg).verdict, Verdict::Correct, "{out}");
            }
        }
    }

    #[test]
    fn both_orientations_are_stored_once() {
        let eq = sym("(+ x 0)", "x");
        let mut t = RewriteTable::from_equations([&eq]);
        assert_eq!(t.len(), 2);
        assert_eq!(t.add_equation(&eq), 0);
        assert_eq!(t.universal.len(), 1);
        assert_eq!(t.matches(&parse("(sin y)").unwrap()).len(), 1);
    }
}
