//! Command-line entry points.
//!
//! Every command resolves a [`RunConfig`] (file, then `--preset`, `--seed`
//! and `--out` overrides), writes its artifacts under `out_dir` and records
//! the resolved configuration as `manifest.txt` next to them.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 1 for any
//! other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{apply, view_seed, AugmentationKind, AugmentationSpec};
use crate::config::{Preset, RunConfig};
use crate::corpus::{load_jsonl, split_sentences, RawExample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, RougeScore, SliceReport};
use crate::model::Seq2Seq;
use crate::rng::derive_seed;
use crate::tokenizer::Vocabulary;
use crate::training::{train, write_loss_csv, LossRecord};

pub const MANIFEST: &str = "manifest.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Debug, Parser)]
#[command(name = "cseq", version, about = "Contrastive seq2seq summarization: train, evaluate, ablate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Default set the config file is applied over: desk or full.
    #[arg(long, global = true)]
    pub preset: Option<Preset>,

    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on `train_path`, writing checkpoints and the loss history.
    Train,
    /// Score `checkpoint` on `test_path` (or `val_path`).
    Eval,
    /// Write both augmented views of every `train_path` document.
    Augment,
    /// Score candidate lines against reference lines.
    Rouge { candidates: PathBuf, references: PathBuf },
    /// Evaluate and write top/bottom decile slices.
    Robustness,
    /// Train and evaluate every cell of an ablation grid.
    Ablate {
        #[arg(long, value_enum)]
        grid: Grid,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    AugmentationPairs,
    NOps,
    FreezeLayers,
}

impl Grid {
    pub fn name(self) -> &'static str {
        match self {
            Grid::AugmentationPairs => "augmentation-pairs",
            Grid::NOps => "n-ops",
            Grid::FreezeLayers => "freeze-layers",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Grid::AugmentationPairs => 1,
            Grid::NOps => 2,
            Grid::FreezeLayers => 3,
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parses `args` and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!("config file {} does not exist", path.display())));
            }
            RunConfig::load(path, cli.preset)?
        }
        None => RunConfig::preset(cli.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Rouge { candidates, references } = &cli.command {
        let score = cmd_rouge(candidates, references)?;
        print!("{}", score_table(&score));
        return Ok(());
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Train => {
            let out = cmd_train(&cfg)?;
            if let Some(last) = out.history.last() {
                println!("trained {} batches; final L = {}", out.history.len(), last.total);
            }
        }
        Command::Eval => print!("{}", cmd_eval(&cfg)?.to_table()),
        Command::Augment => {
            let n = cmd_augment(&cfg)?;
            println!("wrote {n} augmented pairs");
        }
        Command::Robustness => print!("{}", cmd_robustness(&cfg)?.to_csv()),
        Command::Ablate { grid } => print!("{}", cmd_ablate(&cfg, *grid)?.to_csv()),
        Command::Rouge { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write(&cfg.out_dir.join(MANIFEST), cfg.to_config_string())
}

fn existing(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{key} is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{key} {} does not exist", p.display())));
    }
    Ok(p.clone())
}

fn eval_corpus_path(cfg: &RunConfig) -> Result<PathBuf> {
    if cfg.test_path.is_some() {
        existing(&cfg.test_path, "test_path")
    } else {
        existing(&cfg.val_path, "val_path")
            .map_err(|_| Error::Config("neither test_path nor val_path is set".into()))
    }
}

fn training_vocab(cfg: &RunConfig, corpus: &[RawExample]) -> Result<Vocabulary> {
    match &cfg.vocab_path {
        Some(p) if p.exists() => Vocabulary::load(p),
        _ => Vocabulary::build(corpus, cfg.vocab_max_size, cfg.vocab_min_freq),
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Seq2Seq<f64>,
    pub vocab: Vocabulary,
    pub history: Vec<LossRecord>,
}

fn train_model(cfg: &RunConfig, corpus: &[RawExample], vocab: Vocabulary, ckpt_dir: Option<&Path>) -> Result<TrainOutput> {
    let mut model = Seq2Seq::new(cfg.model_config(vocab.len()), cfg.init_seed())?;
    let history = train(&mut model, &vocab, &cfg.training_config()?, corpus, ckpt_dir)?;
    Ok(TrainOutput { model, vocab, history })
}

/// Writes `manifest.txt`, `vocab.txt`, `epoch-{e}.ckpt`, `model.ckpt` and
/// `loss.csv` under `out_dir`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    let corpus = load_jsonl(existing(&cfg.train_path, "train_path")?)?;
    if corpus.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    prepare_out_dir(cfg)?;
    let vocab = training_vocab(cfg, &corpus)?;
    vocab.save(cfg.out_dir.join(VOCAB_FILE))?;
    let out = train_model(cfg, &corpus, vocab, Some(&cfg.out_dir))?;
    out.model.params.save(cfg.out_dir.join(MODEL_FILE))?;
    write_loss_csv(cfg.out_dir.join(LOSS_FILE), &out.history)?;
    Ok(out)
}

fn load_trained(cfg: &RunConfig) -> Result<(Seq2Seq<f64>, Vocabulary)> {
    let ckpt = existing(&cfg.checkpoint, "checkpoint")?;
    let vocab_path = match &cfg.vocab_path {
        Some(_) => existing(&cfg.vocab_path, "vocab_path")?,
        None => {
            let sibling = ckpt.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE);
            existing(&Some(sibling), "vocab_path")?
        }
    };
    let vocab = Vocabulary::load(vocab_path)?;
    let mut model = Seq2Seq::new(cfg.model_config(vocab.len()), cfg.init_seed())?;
    model.params.load(ckpt)?;
    Ok((model, vocab))
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write(&dir.join("scores.csv"), report.to_csv())?;
    write(&dir.join("scores.txt"), report.to_table())?;
    let mut preds = report.predictions.join("\n");
    preds.push('\n');
    write(&dir.join("predictions.txt"), preds)?;
    if let Some(s) = &report.slices {
        write(&dir.join("slices.csv"), s.to_csv())?;
    }
    Ok(())
}

/// Writes `scores.csv`, `scores.txt`, `predictions.txt` and, for at least
/// 10 examples, `slices.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let (model, vocab) = load_trained(cfg)?;
    let corpus = load_jsonl(eval_corpus_path(cfg)?)?;
    prepare_out_dir(cfg)?;
    let report = evaluate(&model, &vocab, &corpus, cfg.max_decode_len)?;
    write_report(&cfg.out_dir, &report)?;
    Ok(report)
}

pub fn cmd_robustness(cfg: &RunConfig) -> Result<SliceReport> {
    let report = cmd_eval(cfg)?;
    report.slices.ok_or_else(|| {
        Error::Validation(format!(
            "robustness slices need at least 10 examples, got {}",
            report.per_example.len()
        ))
    })
}

#[derive(Debug, Serialize)]
struct AugmentedRecord<'a> {
    view1: String,
    view2: String,
    summary: &'a str,
}

/// Writes `augmented.jsonl` with one `{view1, view2, summary}` object per
/// `train_path` example; an unset augmentation copies the document. View
/// `j` of example `i` uses `view_seed(spec_j.seed, i, j)`.
pub fn cmd_augment(cfg: &RunConfig) -> Result<usize> {
    let corpus = load_jsonl(existing(&cfg.train_path, "train_path")?)?;
    prepare_out_dir(cfg)?;
    let tc = cfg.training_config()?;
    let mut out = String::new();
    for (i, ex) in corpus.iter().enumerate() {
        let doc = split_sentences(&ex.document)?;
        let view = |spec: &Option<AugmentationSpec>, j: usize| match spec {
            Some(s) => apply(&s.with_seed(view_seed(s.seed, i, j)), &doc).join(),
            None => doc.join(),
        };
        let rec = AugmentedRecord {
            view1: view(&tc.aug1, 0),
            view2: view(&tc.aug2, 1),
            summary: &ex.summary,
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Validation(e.to_string()))?);
        out.push('\n');
    }
    write(&cfg.out_dir.join("augmented.jsonl"), out)?;
    Ok(corpus.len())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Mean ROUGE over paired lines of the two files.
pub fn cmd_rouge(candidates: &Path, references: &Path) -> Result<RougeScore> {
    let c = read_lines(candidates)?;
    let r = read_lines(references)?;
    if c.len() != r.len() {
        return Err(Error::Validation(format!(
            "{} candidate lines but {} reference lines",
            c.len(),
            r.len()
        )));
    }
    let scores: Vec<RougeScore> = c.iter().zip(&r).map(|(a, b)| RougeScore::score(a, b)).collect();
    Ok(RougeScore::mean(&scores))
}

pub fn score_table(s: &RougeScore) -> String {
    let mut out = format!("{:<8} {:>9} {:>9} {:>9}\n", "variant", "precision", "recall", "f1");
    for (name, p) in [("rouge1", s.rouge1), ("rouge2", s.rouge2), ("rougeL", s.rouge_l)] {
        out.push_str(&format!("{name:<8} {:>9.4} {:>9.4} {:>9.4}\n", p.precision, p.recall, p.f1));
    }
    out
}

/// One configured cell of an ablation grid.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Row/column labels, e.g. `["RI", "RD"]` or `["3"]`.
    pub labels: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub labels: Vec<String>,
    pub outcome: std::result::Result<RougeScore, String>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub grid: Grid,
    pub cells: Vec<CellResult>,
}

impl GridReport {
    fn label_columns(&self) -> &'static str {
        match self.grid {
            Grid::AugmentationPairs => "aug1,aug2",
            Grid::NOps => "n",
            Grid::FreezeLayers => "freeze_layers",
        }
    }

    /// One row per cell: labels, RG-1/RG-2/RG-L F1, status.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},rg1,rg2,rgl,status\n", self.label_columns());
        for c in &self.cells {
            let labels = c.labels.join(",");
            match &c.outcome {
                Ok(s) => {
                    let [a, b, l] = s.f1s();
                    out.push_str(&format!("{labels},{a},{b},{l},ok\n"));
                }
                Err(msg) => {
                    let msg = msg.replace([',', '\n'], ";");
                    out.push_str(&format!("{labels},,,,failed: {msg}\n"));
                }
            }
        }
        out
    }

    /// Upper-triangular matrix of `RG-2 (RG-L)` F1 (×100), rows `aug1` and
    /// columns `aug2`. Only meaningful for the augmentation-pairs grid.
    pub fn to_matrix_table(&self) -> String {
        let kinds = AugmentationKind::ALL;
        let mut out = format!("{:<4}", "");
        for k in kinds {
            out.push_str(&format!(" {:>15}", k.as_str()));
        }
        out.push('\n');
        for a in kinds {
            out.push_str(&format!("{:<4}", a.as_str()));
            for b in kinds {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.labels == [a.as_str(), b.as_str()]);
                let text = match cell.map(|c| &c.outcome) {
                    Some(Ok(s)) => format!("{:.2} ({:.2})", 100.0 * s.rouge2.f1, 100.0 * s.rouge_l.f1),
                    Some(Err(_)) => "failed".to_string(),
                    None => String::new(),
                };
                out.push_str(&format!(" {text:>15}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Cell configurations in table order, each with its own derived seed and
/// output subdirectory.
pub fn grid_cells(base: &RunConfig, grid: Grid) -> Vec<Cell> {
    let kinds = AugmentationKind::ALL;
    let mut cells = Vec::new();
    match grid {
        Grid::AugmentationPairs => {
            for (i, a) in kinds.iter().enumerate() {
                for b in &kinds[i..] {
                    let mut c = base.clone();
                    c.aug1 = Some(*a);
                    c.aug2 = Some(*b);
                    cells.push((vec![a.to_string(), b.to_string()], c));
                }
            }
        }
        Grid::NOps => {
            for n in [1, 3, 5] {
                let mut c = base.clone();
                c.aug1 = Some(AugmentationKind::RD);
                c.aug2 = Some(AugmentationKind::RS);
                c.aug1_n = n;
                c.aug2_n = n;
                cells.push((vec![n.to_string()], c));
            }
        }
        Grid::FreezeLayers => {
            for l in [0, base.enc_layers / 2, base.enc_layers] {
                let mut c = base.clone();
                c.freeze_layers = l;
                cells.push((vec![l.to_string()], c));
            }
        }
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(i, (labels, mut config))| {
            config.seed = derive_seed(base.seed, &[grid.tag(), i as u64]);
            config.out_dir = base.out_dir.join(grid.name()).join(labels.join("-"));
            config.checkpoint = Some(config.out_dir.join(MODEL_FILE));
            Cell { labels, config }
        })
        .collect()
}

fn run_cell(cell: &Cell, train_corpus: &[RawExample], eval_corpus: &[RawExample], vocab: &Vocabulary) -> Result<RougeScore> {
    let cfg = &cell.config;
    prepare_out_dir(cfg)?;
    let out = train_model(cfg, train_corpus, vocab.clone(), None)?;
    out.model.params.save(cfg.out_dir.join(MODEL_FILE))?;
    write_loss_csv(cfg.out_dir.join(LOSS_FILE), &out.history)?;
    let report = evaluate(&out.model, vocab, eval_corpus, cfg.max_decode_len)?;
    write_report(&cfg.out_dir, &report)?;
    if !report.overall.is_finite() {
        return Err(Error::Validation("non-finite ROUGE".into()));
    }
    Ok(report.overall)
}

/// Trains and evaluates every cell in parallel. Evaluation uses
/// `test_path`, then `val_path`, then the training corpus. A failing cell
/// is reported in its row and does not stop the grid. Writes
/// `{grid}.csv`, `{grid}.txt`, the base manifest and one subdirectory per
/// cell.
pub fn cmd_ablate(cfg: &RunConfig, grid: Grid) -> Result<GridReport> {
    let train_corpus = load_jsonl(existing(&cfg.train_path, "train_path")?)?;
    let eval_corpus = match eval_corpus_path(cfg) {
        Ok(p) => load_jsonl(p)?,
        Err(_) => train_corpus.clone(),
    };
    prepare_out_dir(cfg)?;
    let vocab = training_vocab(cfg, &train_corpus)?;
    vocab.save(cfg.out_dir.join(VOCAB_FILE))?;
    let cells = grid_cells(cfg, grid);
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|cell| CellResult {
            labels: cell.labels.clone(),
            outcome: run_cell(cell, &train_corpus, &eval_corpus, &vocab).map_err(|e| e.to_string()),
        })
        .collect();
    let report = GridReport { grid, cells: results };
    write(&cfg.out_dir.join(format!("{}.csv", grid.name())), report.to_csv())?;
    let table = match grid {
        Grid::AugmentationPairs => report.to_matrix_table(),
        _ => report.to_csv(),
    };
    write(&cfg.out_dir.join(format!("{}.txt", grid.name())), table)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let base = RunConfig::preset(Preset::Desk);
        let aug = grid_cells(&base, Grid::AugmentationPairs);
        assert_eq!(aug.len(), 10);
        assert_eq!(aug[0].labels, ["RI", "RI"]);
        assert_eq!(aug[9].labels, ["DR", "DR"]);
        let n = grid_cells(&base, Grid::NOps);
        assert_eq!(n.iter().map(|c| c.config.aug1_n).collect::<Vec<_>>(), [1, 3, 5]);
        let f = grid_cells(&base, Grid::FreezeLayers);
        assert_eq!(f.iter().map(|c| c.config.freeze_layers).collect::<Vec<_>>(), [0, 1, 2]);
        let mut seeds: Vec<u64> = aug.iter().map(|c| c.config.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Validation("x".into())), 1);
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["cseq", "ablate", "--grid", "n-ops", "--seed", "4"]).unwrap();
        assert!(matches!(cli.command, Command::Ablate { grid: Grid::NOps }));
        assert_eq!(cli.seed, Some(4));
        let cli = Cli::try_parse_from(["cseq", "--preset", "full", "train"]).unwrap();
        assert_eq!(cli.preset, Some(Preset::Full));
        assert!(Cli::try_parse_from(["cseq", "ablate", "--grid", "bogus"]).is_err());
    }

    #[test]
    fn failed_cells_are_rows() {
        let report = GridReport {
            grid: Grid::NOps,
            cells: vec![
                CellResult {
                    labels: vec!["1".into()],
                    outcome: Ok(RougeScore::default()),
                },
                CellResult {
                    labels: vec!["3".into()],
                    outcome: Err("boom, bad".into()),
                },
            ],
        };
        assert_eq!(
            report.to_csv(),
            "n,rg1,rg2,rgl,status\n1,0,0,0,ok\n3,,,,failed: boom; bad\n"
        );
    }
}
