use std::collections::BTreeMap;

use super::{Expr, Path, Terminal, Variable};

/// Wildcard assignments produced by a pattern match.
pub type Bindings = BTreeMap<Variable, Expr>;

/// Matches `pattern` against the root of `e`. Variables in the pattern are
/// wildcards; a wildcard that occurs twice must bind identical subtrees.
pub fn match_at(e: &Expr, pattern: &Expr) -> Option<Bindings> {
    let mut b = Bindings::new();
    bind(e, pattern, &mut b).then_some(b)
}

fn bind(e: &Expr, pattern: &Expr, b: &mut Bindings) -> bool {
    match (pattern, e) {
        (Expr::Leaf(Terminal::Var(v)), _) => match b.get(v) {
            Some(prev) => prev == e,
            None => {
                b.insert(v.clone(), e.clone());
                true
            }
        },
        (Expr::Leaf(t), Expr::Leaf(u)) => t == u,
        (Expr::Apply(f, ps), Expr::Apply(g, cs)) => {
            f == g && ps.len() == cs.len() && ps.iter().zip(cs).all(|(p, c)| bind(c, p, b))
        }
        _ => false,
    }
}

/// Every position in `e` (pre-order) where `pattern` matches.
pub fn match_subtree(e: &Expr, pattern: &Expr) -> Vec<(Path, Bindings)> {
    e.positions()
        .into_iter()
        .filter_map(|p| {
            let sub = e.get(&p).expect("position from positions()");
            match_at(sub, pattern).map(|b| (p, b))
        })
        .collect()
}

/// Replaces every wildcard of `pattern` with its binding; unbound
/// variables are left in place.
pub fn instantiate(pattern: &Expr, b: &Bindings) -> Expr {
    match pattern {
        Expr::Leaf(Terminal::Var(v)) => b.get(v).cloned().unwrap_or_else(|| pattern.clone()),
        Expr::Leaf(_) => pattern.clone(),
        Expr::Apply(f, cs) => Expr::Apply(*f, cs.iter().map(|c| instantiate(c, b)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn root_match_binds_children() {
        let m = match_subtree(&p("(+ (sin x) 1)"), &p("(+ x y)"));
        assert_eq!(m.len(), 1);
        let (pos, b) = &m[0];
        assert!(pos.is_empty());
        assert_eq!(b[&Variable::new("x")], p("(sin x)"));
        assert_eq!(b[&Variable::new("y")], p("1"));
    }

    #[test]
    fn pythagorean_lhs_matches_sum() {
        let e = p("(+ (^ (sin th) 2) (^ (cos th) 2))");
        let m = match_subtree(&e, &p("(+ x y)"));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].1[&Variable::new("x")], p("(^ (sin th) 2)"));
        assert_eq!(m[0].1[&Variable::new("y")], p("(^ (cos th) 2)"));
    }

    #[test]
    fn mismatched_head_gives_nothing() {
        assert!(match_subtree(&p("(+ x y)"), &p("(* x y)")).is_empty());
    }

    #[test]
    fn repeated_wildcard_requires_equal_subtrees() {
        assert!(match_at(&p("(* (sin y) (sin y))"), &p("(* x x)")).is_some());
        assert!(match_at(&p("(* (sin y) (cos y))"), &p("(* x x)")).is_none());
    }

    #[test]
    fn bindings_reproduce_the_matched_subtree() {
        let e = p("(* (+ (sin y) 1) (exp (+ (sin y) 1)))");
        let pat = p("(+ x 1)");
        let m = match_subtree(&e, &pat);
        assert_eq!(m.len(), 2);
        for (pos, b) in m {
            assert_eq!(&instantiate(&pat, &b), e.get(&pos).unwrap());
        }
    }

    #[test]
    fn constants_in_patterns_match_literally() {
        assert!(match_at(&p("(+ x 0)"), &p("(+ y 0)")).is_some());
        assert!(match_at(&p("(+ x 1)"), &p("(+ y 0)")).is_none());
    }
}
