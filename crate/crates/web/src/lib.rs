//! Browser bindings: index a document, then count or serialize queries.

use std::fmt::Write as _;

use wasm_bindgen::prelude::*;

use tinyt::automata::automaton_for;
use tinyt::corpus::gen_xmark_like;
use tinyt::eval::{count_with_stats, serialize_fragments, CountOptions, JumpMode, PrintOptions};
use tinyt::grammar::{binarize, compress_repair, to_bcnf, SltGrammar};
use tinyt::index::{build_index, TinyTIndex};
use tinyt::xml::{make_structure_tree, structure_xml_len, TextCollection};

/// An indexed document, usable without a browser.
pub struct Session {
    index: TinyTIndex,
    texts: TextCollection,
    grammar: SltGrammar,
    xml_bytes: usize,
    structure_bytes: usize,
}

impl Session {
    pub fn build(xml: &str, max_rank: u8) -> Result<Session, String> {
        let (st, texts) = make_structure_tree(xml.as_bytes()).map_err(|e| e.to_string())?;
        let grammar = to_bcnf(&compress_repair(&binarize(&st), max_rank)).map_err(|e| e.to_string())?;
        let index = build_index(&grammar).map_err(|e| e.to_string())?;
        Ok(Session {
            index,
            texts,
            grammar,
            xml_bytes: xml.len(),
            structure_bytes: structure_xml_len(&st),
        })
    }

    pub fn index(&self) -> &TinyTIndex {
        &self.index
    }

    /// Result count and evaluation counters, as JSON.
    pub fn count(&self, xpath: &str, jump: bool) -> Result<String, String> {
        let a = automaton_for(xpath, self.index.labels()).map_err(|e| e.to_string())?;
        let opts = CountOptions {
            jump: if jump { JumpMode::FRelevant } else { JumpMode::Off },
            skip: jump,
        };
        let (c, s) = count_with_stats(&self.index, &a, opts).map_err(|e| e.to_string())?;
        Ok(format!(
            "{{\"count\":{c},\"states\":{},\"transitions\":{},\"behaviours\":{},\"jumps\":{},\"skips\":{},\"rules_touched\":{}}}",
            a.num_states(),
            s.transitions,
            s.behaviours,
            s.jumps,
            s.skips,
            s.rules_touched
        ))
    }

    /// The first `limit` result subtrees, one per line.
    pub fn serialize(&self, xpath: &str, limit: usize) -> Result<String, String> {
        let a = automaton_for(xpath, self.index.labels()).map_err(|e| e.to_string())?;
        let frags = serialize_fragments(&self.index, &self.texts, &a, PrintOptions::default()).map_err(|e| e.to_string())?;
        let mut out = String::new();
        for f in frags.iter().take(limit) {
            out.push_str(&String::from_utf8_lossy(f));
            out.push('\n');
        }
        if frags.len() > limit {
            let _ = writeln!(out, "... {} more", frags.len() - limit);
        }
        Ok(out)
    }

    pub fn stats(&self) -> String {
        let g = self.index.grammar_stats();
        format!(
            "{{\"xml_bytes\":{},\"structure_bytes\":{},\"index_bytes\":{:.0},\"rules\":{},\"size\":{},\"rank\":{},\"depth\":{},\"elements\":{},\"texts\":{}}}",
            self.xml_bytes,
            self.structure_bytes,
            self.index.size_report().total(),
            g.num_rules,
            g.size,
            g.rank,
            g.depth,
            self.index.element_count(),
            self.index.text_count()
        )
    }

    /// The first `limit` lines of the grammar, start rule first.
    pub fn grammar_text(&self, limit: usize) -> String {
        let text = self.grammar.to_text();
        let total = text.lines().count();
        let mut out: String = text.lines().take(limit).flat_map(|l| [l, "\n"]).collect();
        if total > limit {
            let _ = writeln!(out, "... {} more rules", total - limit);
        }
        out
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(xml: &str, max_rank: u8) -> Result<Demo, JsError> {
        Session::build(xml, max_rank).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn count(&self, xpath: &str, jump: bool) -> Result<String, JsError> {
        self.0.count(xpath, jump).map_err(|e| JsError::new(&e))
    }

    pub fn serialize(&self, xpath: &str, limit: usize) -> Result<String, JsError> {
        self.0.serialize(xpath, limit).map_err(|e| JsError::new(&e))
    }

    pub fn stats(&self) -> String {
        self.0.stats()
    }

    pub fn grammar(&self, limit: usize) -> String {
        self.0.grammar_text(limit)
    }
}

/// A generated XMark-like sample document.
#[wasm_bindgen]
pub fn sample_document(scale: f64, seed: u32) -> String {
    String::from_utf8(gen_xmark_like(scale, seed as u64)).unwrap_or_default()
}
