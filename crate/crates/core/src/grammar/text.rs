//! Term syntax for trees and grammars: `f(a,b)`, `A(y1) -> f(y1,B)`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use crate::labels::{LabelId, LabelTable};

use super::{subtree_sizes, Alphabet, BinaryTree, GrammarError, NtId, Rule, SltGrammar, Sym};

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Name(&'a str),
    Open,
    Close,
    Comma,
}

fn tokenize(src: &str, line: usize) -> Result<Vec<Tok<'_>>, GrammarError> {
    let mut toks = Vec::new();
    let mut start = None;
    for (i, ch) in src.char_indices() {
        let punct = match ch {
            '(' => Some(Tok::Open),
            ')' => Some(Tok::Close),
            ',' => Some(Tok::Comma),
            c if c.is_whitespace() => None,
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
                continue;
            }
        };
        if let Some(s) = start.take() {
            toks.push(Tok::Name(&src[s..i]));
        }
        if let Some(p) = punct {
            toks.push(p);
        }
    }
    if let Some(s) = start {
        toks.push(Tok::Name(&src[s..]));
    }
    if toks.is_empty() {
        return Err(GrammarError::Parse {
            line,
            message: "empty term".into(),
        });
    }
    Ok(toks)
}

/// Parses a term into pre-order (name, child count) pairs.
fn parse_shape<'a>(src: &'a str, line: usize) -> Result<Vec<(&'a str, u8)>, GrammarError> {
    let err = |m: &str| GrammarError::Parse {
        line,
        message: m.to_string(),
    };
    let toks = tokenize(src, line)?;
    let mut out: Vec<(&str, u8)> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut i = 0;
    let mut expect_name = true;
    while i < toks.len() {
        match toks[i] {
            Tok::Name(n) if expect_name => {
                if out.len() > 0 && open.is_empty() {
                    return Err(err("trailing input after term"));
                }
                if let Some(&p) = open.last() {
                    out[p].1 = out[p].1.checked_add(1).ok_or_else(|| err("too many children"))?;
                }
                out.push((n, 0));
                expect_name = false;
                if toks.get(i + 1) == Some(&Tok::Open) {
                    open.push(out.len() - 1);
                    i += 1;
                    expect_name = true;
                }
            }
            Tok::Comma if !expect_name && !open.is_empty() => expect_name = true,
            Tok::Close if !expect_name && !open.is_empty() => {
                open.pop();
            }
            _ => return Err(err("unexpected token")),
        }
        i += 1;
    }
    if expect_name || !open.is_empty() {
        return Err(err("unbalanced term"));
    }
    Ok(out)
}

fn default_rank(l: LabelId) -> u8 {
    if l == LabelId::NULL {
        0
    } else {
        2
    }
}

fn set_rank(
    labels: &LabelTable,
    ranks: &mut Vec<u8>,
    seen: &mut Vec<bool>,
    l: LabelId,
    r: u8,
) -> Result<(), GrammarError> {
    if ranks.len() <= l.index() {
        ranks.resize(l.index() + 1, 2);
        seen.resize(l.index() + 1, false);
    }
    if seen[l.index()] && ranks[l.index()] != r {
        return Err(GrammarError::RankMismatch {
            label: labels.name(l).to_string(),
            first: ranks[l.index()],
            second: r,
        });
    }
    seen[l.index()] = true;
    ranks[l.index()] = r;
    Ok(())
}

/// Parses a term such as `f(a(b,c),#)`; label ranks are inferred from use.
pub fn parse_term(src: &str) -> Result<BinaryTree, GrammarError> {
    let shape = parse_shape(src, 1)?;
    let mut labels = LabelTable::new();
    let mut ranks: Vec<u8> = labels.ids().map(default_rank).collect();
    let mut seen = vec![false; ranks.len()];
    let mut seq = Vec::with_capacity(shape.len());
    for (name, k) in shape {
        let l = labels.intern(name);
        set_rank(&labels, &mut ranks, &mut seen, l, k)?;
        seq.push(l);
    }
    Ok(BinaryTree::from_named(labels, ranks, seq))
}

fn parse_head(src: &str, line: usize) -> Result<(String, Vec<String>), GrammarError> {
    let shape = parse_shape(src, line)?;
    let (name, k) = shape[0];
    if shape.len() != 1 + k as usize || shape[1..].iter().any(|(_, c)| *c != 0) {
        return Err(GrammarError::Parse {
            line,
            message: "rule head must be N(y1,...,yk)".into(),
        });
    }
    let params: Vec<String> = shape[1..].iter().map(|(n, _)| n.to_string()).collect();
    for (i, p) in params.iter().enumerate() {
        if *p != format!("y{}", i + 1) {
            return Err(GrammarError::Parse {
                line,
                message: format!("parameter {p} should be y{}", i + 1),
            });
        }
    }
    Ok((name.to_string(), params))
}

/// Parses one rule per line, `Head -> rhs` (the arrow may also be `→`).
/// The first rule is the start rule. Names with a rule are nonterminals,
/// everything else is a terminal. An existing alphabet may be supplied.
pub fn parse_grammar(src: &str, alphabet: Option<&Alphabet>) -> Result<SltGrammar, GrammarError> {
    let mut heads = Vec::new();
    for (no, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let (lhs, rhs) = line
            .split_once("->")
            .or_else(|| line.split_once('→'))
            .ok_or_else(|| GrammarError::Parse {
                line: no + 1,
                message: "missing arrow".into(),
            })?;
        let (name, params) = parse_head(lhs, no + 1)?;
        heads.push((no + 1, name, params.len(), rhs.trim()));
    }
    if heads.is_empty() {
        return Err(GrammarError::Parse {
            line: 0,
            message: "no rules".into(),
        });
    }
    let mut nt_ids = HashMap::new();
    for (i, (line, name, _, _)) in heads.iter().enumerate() {
        if nt_ids.insert(name.clone(), i).is_some() {
            return Err(GrammarError::Parse {
                line: *line,
                message: format!("rule {name} defined twice"),
            });
        }
    }
    let (mut labels, mut ranks, mut seen) = match alphabet {
        Some(a) => (a.labels.clone(), a.ranks().to_vec(), vec![true; a.len()]),
        None => {
            let l = LabelTable::new();
            let r: Vec<u8> = l.ids().map(default_rank).collect();
            let s = vec![false; r.len()];
            (l, r, s)
        }
    };
    let mut rules = Vec::with_capacity(heads.len());
    for (line, name, rank, rhs_src) in &heads {
        let shape = parse_shape(rhs_src, *line)?;
        let mut rhs = Vec::with_capacity(shape.len());
        for (sym_name, k) in shape {
            if let Some(&i) = nt_ids.get(sym_name) {
                if heads[i].2 != k as usize {
                    return Err(GrammarError::Parse {
                        line: *line,
                        message: format!("{sym_name} applied to {k} arguments, has rank {}", heads[i].2),
                    });
                }
                rhs.push(Sym::N(NtId(i as u32)));
            } else if let Some(p) = sym_name
                .strip_prefix('y')
                .and_then(|d| d.parse::<u16>().ok())
                .filter(|p| (1..=*rank as u16).contains(p))
            {
                if k != 0 {
                    return Err(GrammarError::Parse {
                        line: *line,
                        message: "parameter with children".into(),
                    });
                }
                rhs.push(Sym::Y(p));
            } else {
                if alphabet.is_some() && labels.get(sym_name).is_none() {
                    return Err(GrammarError::Parse {
                        line: *line,
                        message: format!("unknown terminal {sym_name}"),
                    });
                }
                let l = labels.intern(sym_name);
                set_rank(&labels, &mut ranks, &mut seen, l, k)?;
                rhs.push(Sym::T(l));
            }
        }
        rules.push(Rule {
            name: name.clone(),
            rank: *rank as u8,
            rhs,
        });
    }
    ranks.resize(labels.len(), 2);
    Ok(SltGrammar {
        alphabet: Alphabet::with_ranks(labels, ranks),
        rules,
        start: NtId(0),
    })
}

/// Term syntax for a right-hand side.
pub(crate) fn rhs_to_string(g: &SltGrammar, rhs: &[Sym]) -> String {
    let mut out = String::new();
    let mut open: Vec<u8> = Vec::new();
    for &s in rhs {
        match s {
            Sym::T(l) => out.push_str(g.alphabet.labels.name(l)),
            Sym::N(n) => out.push_str(&g.rule(n).name),
            Sym::Y(k) => {
                let _ = write!(out, "y{k}");
            }
        }
        let r = g.sym_rank(s);
        if r > 0 {
            out.push('(');
            open.push(r);
            continue;
        }
        while let Some(rem) = open.last_mut() {
            *rem -= 1;
            if *rem == 0 {
                out.push(')');
                open.pop();
            } else {
                out.push(',');
                break;
            }
        }
    }
    out
}

impl SltGrammar {
    /// One rule per line, start rule first, then in order of first reference.
    pub fn to_text(&self) -> String {
        let mut order = vec![self.start];
        let mut listed = vec![false; self.rules.len()];
        listed[self.start.index()] = true;
        let mut i = 0;
        while i < order.len() {
            for s in &self.rules[order[i].index()].rhs {
                if let Sym::N(m) = *s {
                    if !listed[m.index()] {
                        listed[m.index()] = true;
                        order.push(m);
                    }
                }
            }
            i += 1;
        }
        order.extend((0..self.rules.len()).filter(|&j| !listed[j]).map(|j| NtId(j as u32)));
        let mut out = String::new();
        for nt in order {
            let r = self.rule(nt);
            out.push_str(&r.name);
            if r.rank > 0 {
                out.push('(');
                for k in 1..=r.rank {
                    if k > 1 {
                        out.push(',');
                    }
                    let _ = write!(out, "y{k}");
                }
                out.push(')');
            }
            out.push_str(" -> ");
            out.push_str(&rhs_to_string(self, &r.rhs));
            out.push('\n');
        }
        out
    }

    /// Term syntax of a right-hand side of this grammar.
    pub fn rhs_text(&self, rhs: &[Sym]) -> String {
        rhs_to_string(self, rhs)
    }
}

/// Hands out rule names that clash with no terminal and no existing rule.
pub(crate) struct NameSource {
    used: HashSet<String>,
    next_letter: u8,
    next_num: usize,
}

impl NameSource {
    pub(crate) fn new<'a>(taken: impl IntoIterator<Item = &'a str>) -> Self {
        NameSource {
            used: taken.into_iter().map(str::to_string).collect(),
            next_letter: b'A',
            next_num: 0,
        }
    }

    pub(crate) fn for_grammar(g: &SltGrammar) -> Self {
        Self::new(
            g.alphabet
                .labels
                .names()
                .chain(g.rules.iter().map(|r| r.name.as_str())),
        )
    }

    pub(crate) fn fresh(&mut self) -> String {
        while self.next_letter <= b'Z' {
            let c = (self.next_letter as char).to_string();
            self.next_letter += 1;
            if c != "S" && !self.used.contains(&c) {
                self.used.insert(c.clone());
                return c;
            }
        }
        loop {
            let n = format!("N{}", self.next_num);
            self.next_num += 1;
            if !self.used.contains(&n) {
                self.used.insert(n.clone());
                return n;
            }
        }
    }
}

/// Checks a right-hand side against ranks; used by callers building rules.
#[allow(dead_code)]
pub(crate) fn well_formed(g: &SltGrammar, rhs: &[Sym]) -> bool {
    subtree_sizes(rhs, |s| g.sym_rank(s)).is_ok()
}
