//! Golden-file checks for the `pcfg` binary.
//!
//! Each case copies its input files from `tests/data` into a fresh temporary
//! directory, runs the binary there with relative paths, and compares exit
//! code, stdout, stderr and every file the command wrote against
//! `tests/golden/<case>/`. Setting `PCFG_BLESS=1` rewrites the goldens
//! instead of comparing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub inputs: &'static [&'static str],
}

const fn case(name: &'static str, args: &'static [&'static str], inputs: &'static [&'static str]) -> Case {
    Case { name, args, inputs }
}

pub const CASES: &[Case] = &[
    case("version", &["--version"], &[]),
    case("usage_error", &["ppl-bound", "--grammar"], &[]),
    case("unknown_subcommand", &["frobnicate"], &[]),
    case("induce", &["induce", "--treebank", "treebank.txt", "-o", "induced.pcfg"], &["treebank.txt"]),
    case(
        "induce_binarize",
        &["induce", "--treebank", "treebank.txt", "--binarize", "-o", "induced.pcfg"],
        &["treebank.txt"],
    ),
    case("induce_missing_file", &["induce", "--treebank", "absent.txt", "-o", "x.pcfg"], &[]),
    case("validate_g1", &["validate", "--grammar", "g1.pcfg"], &["g1.pcfg"]),
    case("validate_improper", &["validate", "--grammar", "improper.pcfg"], &["improper.pcfg"]),
    case("binarize_nary", &["binarize", "--grammar", "nary.pcfg", "-o", "nary.bin.pcfg"], &["nary.pcfg"]),
    case(
        "prune_desk",
        &["prune", "--grammar", "desk.pcfg", "--threshold", "0.05", "-o", "pruned.pcfg"],
        &["desk.pcfg"],
    ),
    case(
        "sample_desk",
        &[
            "sample", "--grammar", "desk.pcfg", "--out-dir", "corpora", "--min-len", "3", "--max-len", "12", "--train",
            "20", "--dev", "5", "--test", "5", "--eval", "5", "--seed", "0",
        ],
        &["desk.pcfg"],
    ),
    case(
        "sample_exhaustion",
        &[
            "sample", "--grammar", "g1.pcfg", "--out-dir", "corpora", "--min-len", "2", "--max-len", "2", "--train", "4",
            "--dev", "1", "--test", "0", "--eval", "1", "--no-duplicates",
        ],
        &["g1.pcfg"],
    ),
    case("vocab", &["vocab", "--corpus", "desk_reference.txt", "--min-freq", "2"], &["desk_reference.txt"]),
    case(
        "ppl_masked_g1",
        &["ppl-bound", "--grammar", "g1.pcfg", "--corpus", "ab.txt", "--objective", "masked", "--records", "rec.tsv"],
        &["g1.pcfg", "ab.txt"],
    ),
    case(
        "ppl_masked_desk",
        &["ppl-bound", "--grammar", "desk.pcfg", "--corpus", "desk_corpus.txt", "--objective", "masked"],
        &["desk.pcfg", "desk_corpus.txt"],
    ),
    case(
        "ppl_causal_desk",
        &[
            "ppl-bound", "--grammar", "desk.pcfg", "--corpus", "desk_corpus.txt", "--objective", "causal", "--vocab",
            "desk_vocab.tsv", "--score-eos", "--records", "rec.tsv",
        ],
        &["desk.pcfg", "desk_corpus.txt", "desk_vocab.tsv"],
    ),
    case(
        "ppl_causal_desk_one_thread",
        &[
            "ppl-bound", "--grammar", "desk.pcfg", "--corpus", "desk_corpus.txt", "--objective", "causal", "--vocab",
            "desk_vocab.tsv", "--score-eos", "--records", "rec.tsv", "--threads", "1",
        ],
        &["desk.pcfg", "desk_corpus.txt", "desk_vocab.tsv"],
    ),
    case(
        "naturalness",
        &["naturalness", "--corpus", "desk_corpus.txt", "--reference", "desk_reference.txt", "--orders", "1,2"],
        &["desk_corpus.txt", "desk_reference.txt"],
    ),
    case(
        "eval_lm",
        &["eval-lm", "--lm", "lm_records.tsv", "--pcfg", "pcfg_records.tsv", "--tags", "desk_tags.tsv"],
        &["lm_records.tsv", "pcfg_records.tsv", "desk_tags.tsv"],
    ),
    case(
        "eval_lm_self",
        &["eval-lm", "--lm", "pcfg_records.tsv", "--pcfg", "pcfg_records.tsv"],
        &["pcfg_records.tsv"],
    ),
    case(
        "oracle_check_g1",
        &["oracle-check", "--grammar", "g1.pcfg", "--max-len", "6", "--sentences", "20", "--seed", "0"],
        &["g1.pcfg"],
    ),
];

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data_dir() -> PathBuf {
    manifest_dir().join("tests").join("data")
}

fn golden_dir(case: &Case) -> PathBuf {
    manifest_dir().join("tests").join("golden").join(case.name)
}

fn blessing() -> bool {
    std::env::var("PCFG_BLESS").map(|v| v == "1").unwrap_or(false)
}

/// Recursively lists files under `root` as `/`-separated relative paths.
fn list_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap();
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    if root.is_dir() {
        walk(root, root, &mut out);
    }
    out
}

/// Everything a run produced, keyed by golden file name.
fn observe(case: &Case) -> BTreeMap<String, Vec<u8>> {
    let work = tempfile::tempdir().expect("temporary directory");
    for input in case.inputs {
        fs::copy(data_dir().join(input), work.path().join(input)).unwrap_or_else(|e| panic!("copy {input}: {e}"));
    }
    let output = Command::new(env!("CARGO_BIN_EXE_pcfg"))
        .args(case.args)
        .current_dir(work.path())
        .output()
        .expect("binary runs");

    let mut observed = BTreeMap::new();
    observed.insert("cmd".to_string(), format!("pcfg {}\n", case.args.join(" ")).into_bytes());
    observed.insert("exit_code".to_string(), format!("{}\n", output.status.code().unwrap_or(-1)).into_bytes());
    observed.insert("stdout".to_string(), output.stdout);
    observed.insert("stderr".to_string(), output.stderr);
    for (name, bytes) in list_files(work.path()) {
        if !case.inputs.contains(&name.as_str()) {
            observed.insert(format!("files/{name}"), bytes);
        }
    }
    observed
}

/// Runs one case, returning a description of the first mismatch.
pub fn check(case: &Case) -> Result<(), String> {
    let observed = observe(case);
    let dir = golden_dir(case);
    if blessing() {
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        }
        for (name, bytes) in &observed {
            let path = dir.join(name);
            fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
            fs::write(&path, bytes).map_err(|e| e.to_string())?;
        }
        return Ok(());
    }
    let expected = list_files(&dir);
    if expected.is_empty() {
        return Err(format!("{}: no golden files; run with PCFG_BLESS=1", case.name));
    }
    let expected_names: Vec<&String> = expected.keys().collect();
    let observed_names: Vec<&String> = observed.keys().collect();
    if expected_names != observed_names {
        return Err(format!("{}: produced {:?}, golden has {:?}", case.name, observed_names, expected_names));
    }
    for (name, bytes) in &expected {
        if &observed[name] != bytes {
            return Err(format!(
                "{}: {} differs\n--- golden\n{}\n--- observed\n{}",
                case.name,
                name,
                String::from_utf8_lossy(bytes),
                String::from_utf8_lossy(&observed[name])
            ));
        }
    }
    Ok(())
}

/// Runs every case and collects the failures.
pub fn check_all() -> Vec<String> {
    CASES.iter().filter_map(|c| check(c).err()).collect()
}
