use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tinyt::automata::{automaton_for, StAutomaton};
use tinyt::corpus::{gen_tree, gen_xmark_like, TreeGenSpec};
use tinyt::eval::{self, CountOptions, EvalError, EvalStats, JumpMode, PrintOptions};
use tinyt::grammar::{binarize, build_dag, compress_repair, to_bcnf, SltGrammar};
use tinyt::index::{build_index, load_index, load_texts, save_index, save_texts, TinyTIndex};
use tinyt::navigation::{dflr_iterative, dflr_recursive, label_checksum, NodePool, Navigator};
use tinyt::xml::{emit_xml, make_structure_tree, structure_xml_len};

macro_rules! out {
    ($($t:tt)*) => {
        writeln!(io::stdout().lock(), $($t)*)?
    };
}

macro_rules! out_raw {
    ($($t:tt)*) => {
        write!(io::stdout().lock(), $($t)*)?
    };
}

#[derive(Parser)]
#[command(name = "tinyt", version, about = "Grammar-compressed structural self-index for XML")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Compressor {
    Repair,
    Dag,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Jump {
    Off,
    Relevant,
    F,
}

impl From<Jump> for JumpMode {
    fn from(j: Jump) -> Self {
        match j {
            Jump::Off => JumpMode::Off,
            Jump::Relevant => JumpMode::Relevant,
            Jump::F => JumpMode::FRelevant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    DflrRec,
    DflrIt,
}

#[derive(Subcommand)]
enum Cmd {
    /// Index an XML document.
    Build {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Text collection file; defaults to `<out>.texts`.
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "repair")]
        compressor: Compressor,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(0..=15))]
        max_rank: u8,
    },
    /// Print the number of selected nodes.
    Count {
        index: PathBuf,
        xpath: String,
        #[arg(long, value_enum, default_value = "f")]
        jump: Jump,
        #[arg(long)]
        no_skip: bool,
        /// Print evaluation counters to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Write the subtree of every selected node.
    Serialize {
        index: PathBuf,
        texts: PathBuf,
        xpath: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "f")]
        jump: Jump,
        /// Recompute every chunk instead of replaying memoized ones.
        #[arg(long)]
        no_memo: bool,
    },
    /// Print the pre-order element number of every selected node.
    Materialize { index: PathBuf, xpath: String },
    /// Grammar statistics and component sizes.
    Stats { index: PathBuf },
    /// Full document-order traversal through the node interface.
    Traverse {
        index: PathBuf,
        #[arg(long, value_enum, default_value = "dflr-it")]
        mode: Mode,
        /// Store node ids in a prefix-sharing pool.
        #[arg(long)]
        pool: bool,
    },
    /// Generate a test document.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// XMark-like document with the benchmark vocabulary.
    Xmark {
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random tree with tunable repetitiveness.
    Tree {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        #[arg(long, default_value_t = 4)]
        labels: usize,
        #[arg(long, default_value_t = 0.2)]
        text_prob: f64,
        #[arg(long, default_value_t = 0.0)]
        repeat: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of an internal consistency check, as opposed to bad input.
#[derive(Debug)]
struct Internal(String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant failure: {}", self.0)
    }
}

impl std::error::Error for Internal {}

fn eval_err(e: EvalError) -> anyhow::Error {
    match e {
        EvalError::Io(e) => e.into(),
        other => Internal(other.to_string()).into(),
    }
}

fn open_index(path: &Path) -> Result<TinyTIndex> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_index(&mut BufReader::new(f)).with_context(|| format!("cannot load index {}", path.display()))
}

fn automaton(ix: &TinyTIndex, xpath: &str) -> Result<StAutomaton> {
    automaton_for(xpath, ix.labels()).with_context(|| format!("bad query `{xpath}`"))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn stats_json(s: &EvalStats) -> serde_json::Value {
    json!({
        "transitions": s.transitions,
        "behaviours": s.behaviours,
        "memo_hits": s.memo_hits,
        "jumps": s.jumps,
        "skips": s.skips,
        "rules_touched": s.rules_touched,
        "recomputations": s.recomputations,
        "chunk_hits": s.chunk_hits,
        "chunks_computed": s.chunks_computed,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn build(input: &Path, out: &Path, texts: Option<&Path>, compressor: Compressor, max_rank: u8, as_json: bool) -> Result<()> {
    let texts_path = texts.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".texts");
        PathBuf::from(p)
    });
    let xml = fs::read(input).with_context(|| format!("cannot read {}", input.display()))?;
    let t0 = Instant::now();
    let (st, tc) = make_structure_tree(&xml).with_context(|| format!("cannot parse {}", input.display()))?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let bt = binarize(&st);
    let g = match compressor {
        Compressor::Repair => compress_repair(&bt, max_rank),
        Compressor::Dag => build_dag(&bt),
        Compressor::None => SltGrammar::one_rule(&bt),
    };
    let compress_ms = ms(t1);
    let t2 = Instant::now();
    let b = to_bcnf(&g).map_err(|e| Internal(e.to_string()))?;
    let ix = build_index(&b).map_err(|e| Internal(e.to_string()))?;
    let index_ms = ms(t2);

    let mut ibytes = Vec::new();
    save_index(&ix, &mut ibytes)?;
    let mut tbytes = Vec::new();
    save_texts(&tc, &mut tbytes)?;
    fs::write(out, &ibytes).with_context(|| format!("cannot write {}", out.display()))?;
    fs::write(&texts_path, &tbytes).with_context(|| format!("cannot write {}", texts_path.display()))?;

    let gs = ix.grammar_stats();
    let sxml = structure_xml_len(&st);
    if as_json {
        let v = json!({
            "nodes": st.len(),
            "elements": st.element_count(),
            "texts": tc.len(),
            "structure_xml_bytes": sxml,
            "grammar": {"size": gs.size, "rules": gs.num_rules, "rank": gs.rank, "depth": gs.depth, "start_rhs": gs.start_rhs_size},
            "index_bytes": ibytes.len(),
            "texts_bytes": tbytes.len(),
            "ms": {"parse": parse_ms, "compress": compress_ms, "index": index_ms},
        });
        out!("{v}");
    } else {
        out!("nodes {}  elements {}  texts {}", st.len(), st.element_count(), tc.len());
        out!(
            "bCNF grammar: size {}  rules {}  rank {}  depth {}  start rhs {}",
            gs.size, gs.num_rules, gs.rank, gs.depth, gs.start_rhs_size
        );
        out!(
            "index {} bytes ({:.2}% of {} structure bytes), texts {} bytes",
            ibytes.len(),
            100.0 * ibytes.len() as f64 / sxml.max(1) as f64,
            sxml,
            tbytes.len()
        );
        out!("parse {parse_ms:.1} ms  compress {compress_ms:.1} ms  index {index_ms:.1} ms");
        out_raw!("{}", ix.size_report());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let as_json = cli.json;
    match cli.cmd {
        Cmd::Build {
            input,
            out,
            texts,
            compressor,
            max_rank,
        } => build(&input, &out, texts.as_deref(), compressor, max_rank, as_json),
        Cmd::Count {
            index,
            xpath,
            jump,
            no_skip,
            stats,
        } => {
            let ix = open_index(&index)?;
            let a = automaton(&ix, &xpath)?;
            let opts = CountOptions {
                jump: jump.into(),
                skip: !no_skip,
            };
            let t = Instant::now();
            let (c, s) = eval::count_with_stats(&ix, &a, opts).map_err(eval_err)?;
            let elapsed = ms(t);
            if as_json {
                out!("{}", json!({"count": c, "ms": elapsed, "stats": stats_json(&s)}));
            } else {
                out!("{c}");
                if stats {
                    eprintln!("{:.3} ms  {}", elapsed, stats_json(&s));
                }
            }
            Ok(())
        }
        Cmd::Serialize {
            index,
            texts,
            xpath,
            out,
            jump,
            no_memo,
        } => {
            let ix = open_index(&index)?;
            let f = File::open(&texts).with_context(|| format!("cannot open {}", texts.display()))?;
            let tc = load_texts(&mut BufReader::new(f)).with_context(|| format!("cannot load texts {}", texts.display()))?;
            let a = automaton(&ix, &xpath)?;
            let opts = PrintOptions {
                jump: jump.into(),
                chunk_memo: !no_memo,
                ..Default::default()
            };
            if as_json && out.is_none() {
                let frags = eval::serialize_fragments(&ix, &tc, &a, opts).map_err(eval_err)?;
                let frags: Vec<String> = frags.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect();
                out!("{}", json!({"count": frags.len(), "fragments": frags}));
                return Ok(());
            }
            let mut w = sink(out.as_deref())?;
            let n = eval::serialize_query(&ix, &tc, &a, opts, &mut w).map_err(eval_err)?;
            w.flush()?;
            if as_json {
                out!("{}", json!({ "count": n }));
            }
            Ok(())
        }
        Cmd::Materialize { index, xpath } => {
            let ix = open_index(&index)?;
            let a = automaton(&ix, &xpath)?;
            let nums = eval::materialize_query(&ix, &a, PrintOptions::default()).map_err(eval_err)?;
            let mut w = sink(None)?;
            if as_json {
                writeln!(w, "{}", json!(nums))?;
            } else {
                for n in nums {
                    writeln!(w, "{n}")?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Cmd::Stats { index } => {
            let ix = open_index(&index)?;
            let gs = ix.grammar_stats();
            let rep = ix.size_report();
            if as_json {
                let comps: serde_json::Map<String, serde_json::Value> =
                    rep.components.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
                let v = json!({
                    "grammar": {"size": gs.size, "rules": gs.num_rules, "rank": gs.rank, "depth": gs.depth, "start_rhs": gs.start_rhs_size},
                    "labels": ix.num_terminals(),
                    "elements": ix.element_count(),
                    "texts": ix.text_count(),
                    "component_bytes": comps,
                    "total_bytes": rep.total(),
                });
                out!("{v}");
            } else {
                out!(
                    "size {}  rules {}  rank {}  depth {}  start rhs {}",
                    gs.size, gs.num_rules, gs.rank, gs.depth, gs.start_rhs_size
                );
                out!(
                    "labels {}  elements {}  texts {}",
                    ix.num_terminals(),
                    ix.element_count(),
                    ix.text_count()
                );
                out_raw!("{rep}");
            }
            Ok(())
        }
        Cmd::Traverse { index, mode, pool } => {
            let ix = open_index(&index)?;
            let t = Instant::now();
            let labels = match (mode, pool) {
                (Mode::DflrRec, false) => dflr_recursive(&mut Navigator::new(&ix)),
                (Mode::DflrIt, false) => dflr_iterative(&mut Navigator::new(&ix)),
                (Mode::DflrRec, true) => dflr_recursive(&mut Navigator::with_store(&ix, NodePool::new())),
                (Mode::DflrIt, true) => dflr_iterative(&mut Navigator::with_store(&ix, NodePool::new())),
            };
            let secs = t.elapsed().as_secs_f64();
            let sum = label_checksum(labels.iter().copied());
            let rate = labels.len() as f64 / secs.max(1e-9);
            if as_json {
                out!("{}", json!({"nodes": labels.len(), "nodes_per_second": rate, "checksum": format!("{sum:016x}")}));
            } else {
                out!("nodes {}  {:.0} nodes/s  checksum {sum:016x}", labels.len(), rate);
            }
            Ok(())
        }
        Cmd::Gen { kind } => {
            let (bytes, out) = match kind {
                GenKind::Xmark { scale, seed, out } => {
                    anyhow::ensure!(scale.is_finite() && scale > 0.0, "scale must be positive");
                    (gen_xmark_like(scale, seed), out)
                }
                GenKind::Tree {
                    seed,
                    budget,
                    labels,
                    text_prob,
                    repeat,
                    out,
                } => {
                    anyhow::ensure!(budget >= 1, "budget must be at least 1");
                    anyhow::ensure!((0.0..=1.0).contains(&text_prob), "text probability must be in [0, 1]");
                    anyhow::ensure!((0.0..=1.0).contains(&repeat), "repetition bias must be in [0, 1]");
                    let (st, tc) = gen_tree(TreeGenSpec {
                        seed,
                        node_budget: budget,
                        label_count: labels.max(1),
                        text_probability: text_prob,
                        repetition_bias: repeat,
                    });
                    let mut buf = Vec::new();
                    emit_xml(&st, &tc, &mut buf)?;
                    (buf, out)
                }
            };
            let mut w = sink(out.as_deref())?;
            w.write_all(&bytes)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn closed_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Internal>() { 3 } else { 2 })
        }
    }
}
