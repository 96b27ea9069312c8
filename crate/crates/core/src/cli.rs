//! The `pcfg` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
//! errors. Reports go to standard output as JSON (or TSV for vocabularies);
//! diagnostics go to standard error as a single line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::corpus::Corpus;
use crate::earley::{LeftCornerMatrices, PrefixParser};
use crate::error::Error;
use crate::grammar::{binarize, induce_from_treebank, parse_grammar, prune_rules, validate, Grammar, UnaryClosure};
use crate::inside_outside::{InsideOutside, PerplexityResult};
use crate::lm_eval::{compare, pos_divergence, ClassMap, TagTable, TAGS_HEADER};
use crate::naturalness::{length_histogram, ngram_spearman, zipf_fit, NaturalnessReport};
use crate::oracle::oracle_check;
use crate::records::{load_records, records_to_tsv};
use crate::sampler::{build_vocab, generate_corpus, SamplerConfig, SplitSizes, Vocabulary};
use crate::tree::parse_treebank;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (grammar format 1, records format 1)");

#[derive(Debug, Parser)]
#[command(name = "pcfg", version = VERSION, about = "PCFG ground-truth toolkit for language-model evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Induce a relative-frequency grammar from a bracketed treebank.
    Induce {
        #[arg(long)]
        treebank: PathBuf,
        /// Binarize the induced grammar.
        #[arg(long)]
        binarize: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check rule sums, reachability and productivity.
    Validate {
        #[arg(long)]
        grammar: PathBuf,
    },
    /// Rewrite every rule to at most two children.
    Binarize {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Drop rules below a probability threshold and renormalize.
    Prune {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        threshold: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sample train/dev/test/eval corpora.
    Sample(SampleArgs),
    /// Build an evaluation vocabulary from a corpus.
    Vocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_freq: u64,
        /// Write the vocabulary here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exact perplexity lower bound of a corpus under the grammar.
    PplBound(PplArgs),
    /// Zipf fit, length histogram and n-gram correlation of a corpus.
    Naturalness {
        #[arg(long)]
        corpus: PathBuf,
        /// Corpus supplying the frequency ranks for the Zipf fit. Without it,
        /// even-numbered sentences provide ranks and odd-numbered ones counts.
        #[arg(long)]
        rank_corpus: Option<PathBuf>,
        /// Reference corpus for n-gram correlation.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// N-gram orders for the correlation.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<usize>,
    },
    /// Compare language-model records against grammar records.
    EvalLm {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        pcfg: PathBuf,
        /// Per-token tags (`sentence_id position tag`) for class divergence.
        #[arg(long)]
        tags: Option<PathBuf>,
        /// JSON object mapping tags to classes; defaults to a Penn-style map.
        #[arg(long, requires = "tags")]
        class_map: Option<PathBuf>,
    },
    /// Cross-check the chart engines against brute-force enumeration.
    OracleCheck {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        max_len: usize,
        #[arg(long, default_value_t = 100)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 6)]
    min_len: usize,
    #[arg(long, default_value_t = 25)]
    max_len: usize,
    #[arg(long, default_value_t = 1000)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    dev: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    #[arg(long, default_value_t = 100)]
    eval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Derivation expansion cap; defaults to 10 × max-len.
    #[arg(long)]
    max_expansions: Option<usize>,
    /// Reject repeated sentences within a split.
    #[arg(long)]
    no_duplicates: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Objective {
    Masked,
    Causal,
}

#[derive(Debug, Args)]
struct PplArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    objective: Objective,
    /// Vocabulary TSV; tokens outside it are skipped.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Write per-token records here.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Also score the end-of-sentence event (causal only).
    #[arg(long)]
    score_eos: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

/// Entry point of the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the tool on `argv` (including the program name), writing reports to
/// `out` and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn load_grammar(path: &Path) -> Result<Grammar, Error> {
    parse_grammar(&read(path)?)
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct GrammarSummary<'a> {
    output: String,
    start: &'a str,
    rules: usize,
    nonterminals: usize,
    terminals: usize,
    binarized: bool,
}

fn summarize<'a>(g: &'a Grammar, output: &Path) -> GrammarSummary<'a> {
    GrammarSummary {
        output: output.display().to_string(),
        start: g.nonterminal_name(g.start()),
        rules: g.rules().len(),
        nonterminals: g.num_nonterminals(),
        terminals: g.num_terminals(),
        binarized: g.is_binarized(),
    }
}

fn save_grammar(g: &Grammar, output: &Path, out: &mut dyn Write) -> Result<(), Error> {
    write_file(output, &g.to_text())?;
    emit(out, &summarize(g, output))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), Error> {
    match command {
        Command::Induce {
            treebank,
            binarize: bin,
            output,
        } => {
            let trees = parse_treebank(&read(&treebank)?)?;
            let g = induce_from_treebank(&trees, bin)?;
            save_grammar(&g, &output, out)
        }
        Command::Validate { grammar } => {
            let g = load_grammar(&grammar)?;
            let report = validate(&g);
            emit(out, &report)?;
            if report.ok {
                return Ok(());
            }
            let mut problems = Vec::new();
            let bad = report.bad_sums().count();
            if bad > 0 {
                problems.push(format!("{bad} rule sums off by more than tolerance"));
            }
            if !report.unreachable.is_empty() {
                problems.push(format!("{} unreachable", report.unreachable.len()));
            }
            if !report.nonproductive.is_empty() {
                problems.push(format!("{} non-productive", report.nonproductive.len()));
            }
            Err(Error::ValidationFailed(problems.join(", ")))
        }
        Command::Binarize { grammar, output } => {
            let g = binarize(&load_grammar(&grammar)?);
            save_grammar(&g, &output, out)
        }
        Command::Prune {
            grammar,
            threshold,
            output,
        } => {
            let g = prune_rules(&load_grammar(&grammar)?, threshold)?;
            save_grammar(&g, &output, out)
        }
        Command::Sample(args) => sample(args, out),
        Command::Vocab {
            corpus,
            min_freq,
            output,
        } => {
            let vocab = build_vocab(&Corpus::from_text(&read(&corpus)?), min_freq)?;
            match output {
                Some(path) => {
                    write_file(&path, &vocab.to_tsv())?;
                    emit(out, &json!({ "output": path.display().to_string(), "size": vocab.len() }))
                }
                None => Ok(out.write_all(vocab.to_tsv().as_bytes())?),
            }
        }
        Command::PplBound(args) => ppl_bound(args, out),
        Command::Naturalness {
            corpus,
            rank_corpus,
            reference,
            orders,
        } => {
            let corpus = Corpus::from_text(&read(&corpus)?);
            let zipf = match rank_corpus {
                Some(path) => zipf_fit(&Corpus::from_text(&read(&path)?), &corpus)?,
                None => {
                    let (ranks, counts): (Vec<_>, Vec<_>) =
                        corpus.sentences.iter().cloned().enumerate().partition(|(i, _)| i % 2 == 0);
                    let strip = |v: Vec<(usize, Vec<String>)>| Corpus::new(v.into_iter().map(|(_, s)| s).collect());
                    zipf_fit(&strip(ranks), &strip(counts))?
                }
            };
            let mut spearman = BTreeMap::new();
            if let Some(path) = reference {
                let reference = Corpus::from_text(&read(&path)?);
                for n in orders {
                    spearman.insert(n, ngram_spearman(&corpus, &reference, n)?);
                }
            }
            emit(
                out,
                &NaturalnessReport {
                    zipf,
                    lengths: length_histogram(&corpus),
                    spearman,
                },
            )
        }
        Command::EvalLm {
            lm,
            pcfg,
            tags,
            class_map,
        } => {
            let lm_records = load_records(&read(&lm)?, &lm.display().to_string())?;
            let pcfg_records = load_records(&read(&pcfg)?, &pcfg.display().to_string())?;
            let mut report = compare(&lm_records, &pcfg_records)?;
            if let Some(tags) = tags {
                let table = TagTable::from_tsv(&read(&tags)?, &tags.display().to_string())?;
                let classes = match class_map {
                    Some(path) => ClassMap::from_json(&read(&path)?)?,
                    None => ClassMap::penn_default(),
                };
                report.per_class_divergence = Some(pos_divergence(&lm_records, &pcfg_records, &table, &classes)?);
            }
            emit(out, &report)
        }
        Command::OracleCheck {
            grammar,
            max_len,
            sentences,
            seed,
        } => {
            let g = load_grammar(&grammar)?;
            emit(out, &oracle_check(&g, max_len, sentences, seed)?)
        }
    }
}

fn sample(args: SampleArgs, out: &mut dyn Write) -> Result<(), Error> {
    let g = load_grammar(&args.grammar)?;
    let sizes = SplitSizes {
        train: args.train,
        dev: args.dev,
        test: args.test,
        eval: args.eval,
    };
    let mut config = SamplerConfig::new(args.min_len, args.max_len, sizes, args.seed);
    if let Some(cap) = args.max_expansions {
        config.max_expansions = cap;
    }
    config.allow_duplicates_within_split = !args.no_duplicates;
    let splits = generate_corpus(&g, &config)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut summary = BTreeMap::new();
    for (name, corpus) in splits.named() {
        write_file(&args.out_dir.join(format!("{name}.txt")), &corpus.to_text())?;
        write_file(
            &args.out_dir.join(format!("{name}.trees")),
            &corpus.trees_text().unwrap_or_default(),
        )?;
        let mut tags = String::from(TAGS_HEADER);
        tags.push('\n');
        for (sid, tree) in corpus.trees.iter().flatten().enumerate() {
            for (i, tag) in tree.preterminals().iter().enumerate() {
                tags.push_str(&format!("{sid}\t{}\t{tag}\n", i + 1));
            }
        }
        write_file(&args.out_dir.join(format!("{name}.tags.tsv")), &tags)?;
        summary.insert(
            name,
            json!({ "sentences": corpus.len(), "tokens": corpus.num_tokens() }),
        );
    }
    emit(
        out,
        &json!({
            "seed": args.seed,
            "min_len": args.min_len,
            "max_len": args.max_len,
            "splits": summary,
        }),
    )
}

fn ppl_bound(args: PplArgs, out: &mut dyn Write) -> Result<(), Error> {
    let g = load_grammar(&args.grammar)?;
    let corpus = Corpus::from_text(&read(&args.corpus)?);
    let vocab = match &args.vocab {
        Some(path) => Some(Vocabulary::from_tsv(&read(path)?)?),
        None => None,
    };
    if args.score_eos && args.objective == Objective::Masked {
        return Err(Error::InvalidConfig("--score-eos applies to the causal objective only".into()));
    }
    let compute = || -> Result<PerplexityResult, Error> {
        match args.objective {
            Objective::Masked => {
                let binarized;
                let g = if g.is_binarized() {
                    &g
                } else {
                    binarized = binarize(&g);
                    &binarized
                };
                let closure = UnaryClosure::build(g)?;
                InsideOutside::new(g, &closure)?.pseudo_ppl(&corpus, vocab.as_ref())
            }
            Objective::Causal => {
                let lc = LeftCornerMatrices::build(&g)?;
                PrefixParser::new(&g, &lc).causal_ppl(&corpus, vocab.as_ref(), args.score_eos)
            }
        }
    };
    let result = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(compute)?,
        None => compute()?,
    };
    if let Some(path) = &args.records {
        write_file(path, &records_to_tsv(&result.records))?;
    }
    match args.objective {
        Objective::Masked => emit(
            out,
            &MaskedReport {
                psi_ppl: result.ppl,
                n_scored: result.n_scored,
            },
        ),
        Objective::Causal => emit(
            out,
            &CausalReport {
                ppl: result.ppl,
                n_scored: result.n_scored,
            },
        ),
    }
}

#[derive(Serialize)]
struct MaskedReport {
    psi_ppl: f64,
    n_scored: usize,
}

#[derive(Serialize)]
struct CausalReport {
    ppl: f64,
    n_scored: usize,
}
