//! Binary Chomsky normal form: every non-start rule has exactly two
//! non-parameter nodes, `A(y..) -> X(y.., Y(y..), y..)`.

use super::text::NameSource;
use super::{child_positions, non_param_count, subtree_sizes, GrammarError, NtId, Rule, SltGrammar, Sym};

/// Converts a grammar to binary normal form. The start rule keeps its shape;
/// rules with a single non-parameter node are inlined away. The result lists
/// rules in dependency order with the start rule last.
pub fn to_bcnf(g: &SltGrammar) -> Result<SltGrammar, GrammarError> {
    g.validate()?;
    let order = g.topo_order()?;
    let mut names = NameSource::for_grammar(g);
    let mut mapped: Vec<Option<Sym>> = vec![None; g.rules.len()];
    let mut out: Vec<Rule> = Vec::new();

    let map_rhs = |rhs: &[Sym], mapped: &[Option<Sym>]| -> Vec<Sym> {
        rhs.iter()
            .map(|&s| match s {
                Sym::N(m) => mapped[m.index()].expect("dependency order"),
                s => s,
            })
            .collect()
    };

    for &nt in &order {
        if nt == g.start {
            continue;
        }
        let rule = g.rule(nt);
        let rhs = map_rhs(&rule.rhs, &mapped);
        if non_param_count(&rhs) == 1 {
            mapped[nt.index()] = Some(rhs[0]);
            continue;
        }
        let rank_of = |s: Sym, out: &[Rule]| match s {
            Sym::T(l) => g.alphabet.rank(l),
            Sym::N(n) => out[n.index()].rank,
            Sym::Y(_) => 0,
        };
        let sizes = subtree_sizes(&rhs, |s| rank_of(s, &out))?;
        let mut reduced: Vec<Option<Sym>> = vec![None; rhs.len()];
        for p in (0..rhs.len()).rev() {
            let x = rhs[p];
            if matches!(x, Sym::Y(_)) {
                continue;
            }
            let rx = rank_of(x, &out);
            let slots: Vec<(usize, Sym)> = child_positions(&sizes, p, rx)
                .enumerate()
                .filter_map(|(k, c)| reduced[c].map(|z| (k, z)))
                .collect();
            if slots.is_empty() {
                reduced[p] = Some(x);
                continue;
            }
            let final_name = if p == 0 { rule.name.clone() } else { names.fresh() };
            let mut head = x;
            for (j, &(k, z)) in slots.iter().enumerate().rev() {
                let name = if j == 0 { final_name.clone() } else { names.fresh() };
                let rh = rank_of(head, &out);
                let rz = rank_of(z, &out);
                let mut body = Vec::with_capacity(2 + rh as usize + rz as usize);
                body.push(head);
                let mut y = 1u16;
                for slot in 0..rh as usize {
                    if slot == k {
                        body.push(z);
                        for _ in 0..rz {
                            body.push(Sym::Y(y));
                            y += 1;
                        }
                    } else {
                        body.push(Sym::Y(y));
                        y += 1;
                    }
                }
                out.push(Rule {
                    name,
                    rank: rh + rz - 1,
                    rhs: body,
                });
                head = Sym::N(NtId(out.len() as u32 - 1));
            }
            reduced[p] = Some(head);
        }
        mapped[nt.index()] = reduced[0];
    }
    let start = g.start_rule();
    out.push(Rule {
        name: start.name.clone(),
        rank: 0,
        rhs: map_rhs(&start.rhs, &mapped),
    });
    Ok(SltGrammar {
        alphabet: g.alphabet.clone(),
        start: NtId(out.len() as u32 - 1),
        rules: out,
    })
}

/// The decomposition `(X, i, Y)` of a bCNF rule: the root symbol, the
/// 1-based child of the root holding the second node, and that node.
pub fn bcnf_parts(g: &SltGrammar, nt: NtId) -> Option<(Sym, u8, Sym)> {
    let rhs = &g.rule(nt).rhs;
    let x = rhs[0];
    let (pos, y) = rhs
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, s)| !matches!(s, Sym::Y(_)))?;
    // children of the root before `pos` are all parameters
    Some((x, pos as u8, *y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use crate::grammar::tests::{G1, RANK1};

    #[test]
    fn reproduces_g1() {
        let g = parse_grammar(RANK1, None).unwrap();
        let b = to_bcnf(&g).unwrap();
        b.validate().unwrap();
        assert!(b.is_bcnf());
        assert_eq!(b.to_text(), format!("{G1}\n"));
        assert_eq!(b.stats().size, 9);
    }

    #[test]
    fn idempotent_on_bcnf_input() {
        let g = parse_grammar(G1, None).unwrap();
        let b = to_bcnf(&g).unwrap();
        assert_eq!(b.to_text(), g.to_text());
    }

    #[test]
    fn parts_of_g1_rules() {
        let b = to_bcnf(&parse_grammar(RANK1, None).unwrap()).unwrap();
        let a = b.nt_by_name("A").unwrap();
        let (x, i, y) = bcnf_parts(&b, a).unwrap();
        assert_eq!(i, 2);
        assert_eq!(b.rhs_text(&[x, Sym::Y(1), Sym::Y(2)]), "f(y1,y2)");
        assert_eq!(y, Sym::N(b.nt_by_name("B").unwrap()));
    }
}
