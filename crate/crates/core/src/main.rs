use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use depablate::analysis::{emit_report, Axis};
use depablate::cli::{self, FileConfig, Grid, RunConfig, TagChoice};
use depablate::parser::{EpochRecord, EpochTiming};

#[derive(Parser)]
#[command(name = "depablate", version, about = "BiLSTM transition parser and word-representation ablations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sentence counts, type-token ratio and character-set size.
    Stats {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
    },
    /// Train one system over all seeds.
    Train(RunArgs),
    /// Parse a CoNLL-U file with a saved checkpoint.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// `gold` or a CoNLL-U file with predicted tags.
        #[arg(long)]
        tags: Option<String>,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Labelled attachment score of a prediction.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
    },
    /// HDLAS or LAS breakdown written as CSV.
    Analyze {
        /// Repeat with --predicted, once per language for the language axis.
        #[arg(long, required = true)]
        gold: Vec<PathBuf>,
        #[arg(long, required = true)]
        predicted: Vec<PathBuf>,
        /// Training treebank, needed for the frequency axis.
        #[arg(long)]
        train: Option<PathBuf>,
        /// frequency, pos or language.
        #[arg(long)]
        axis: String,
        #[arg(long, default_value = "system")]
        system: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a grid of systems, skipping cells already in the summary.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `systems` for the eight representations, `char` for the
        /// character-size presets.
        #[arg(long, default_value = "systems")]
        grid: String,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as these flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// baseline, +ext, +char, +pos, -ext, -char, -pos or combined.
    #[arg(long, allow_hyphen_values = true)]
    system: Option<String>,
    #[arg(long)]
    char_size: Option<usize>,
    /// `gold` or a CoNLL-U file with predicted dev tags.
    #[arg(long)]
    tags: Option<String>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    best_epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report sentences per second while training and parsing.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::read(path)?,
            None => FileConfig::default(),
        };
        let flags = FileConfig {
            train: self.train.clone(),
            dev: self.dev.clone(),
            system: self.system.clone(),
            char_size: self.char_size,
            tags: self.tags.clone(),
            embeddings: self.embeddings.clone(),
            epochs: self.epochs,
            seeds: self.seeds.clone(),
            best_epochs: self.best_epochs,
            out: self.out.clone(),
            ..FileConfig::default()
        };
        Ok(RunConfig::resolve(file.merge(flags))?)
    }
}

fn report_epoch(prefix: &str, r: &EpochRecord, t: &EpochTiming, timing: bool) {
    let mut line = format!(
        "{prefix}seed {} epoch {}: dev LAS {:.2}, loss {:.4}",
        r.seed, r.epoch, r.dev_las, r.train_loss
    );
    if timing {
        line += &format!(
            ", train {:.1} sent/s, parse {:.1} sent/s",
            t.train_sentences_per_sec, t.parse_sentences_per_sec
        );
    }
    eprintln!("{line}");
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { train, dev } => {
            let s = cli::cmd_stats(&train, &dev)?;
            println!("train_sentences\tdev_sentences\ttype_token_ratio\tcharset_size");
            println!(
                "{}\t{}\t{:.4}\t{}",
                s.train_sentences, s.dev_sentences, s.type_token_ratio, s.charset_size
            );
        }
        Command::Train(args) => {
            let run = args.resolve()?;
            let summary = cli::cmd_train(&run, |r, t| report_epoch("", r, t, args.timing))?;
            for s in &summary.per_seed {
                println!("seed {}: best-epoch mean {:.2} (epochs {:?})", s.seed, s.best_mean, s.best_epochs);
            }
            println!("mean dev LAS {:.2}", summary.grand_mean);
        }
        Command::Parse {
            model,
            input,
            tags,
            output,
        } => {
            let tags: Option<TagChoice> = tags.as_deref().map(str::parse).transpose()?;
            let text = cli::cmd_parse(&model, &input, tags.as_ref())?;
            match output {
                Some(path) => cli::write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Eval { gold, predicted } => {
            println!("{:.2}", cli::cmd_eval(&gold, &predicted)?);
        }
        Command::Analyze {
            gold,
            predicted,
            train,
            axis,
            system,
            out,
        } => {
            if gold.len() != predicted.len() {
                bail!("{} --gold files but {} --predicted files", gold.len(), predicted.len());
            }
            let axis: Axis = axis.parse()?;
            let files: Vec<(PathBuf, PathBuf)> = gold.into_iter().zip(predicted).collect();
            let report = cli::cmd_analyze(&files, train.as_deref(), axis, &system)?;
            emit_report(&report, &out).with_context(|| format!("writing {}", out.display()))?;
            for (category, cell) in report.visible_rows() {
                println!("{category}\t{}\t{:.2}", cell.token_count, cell.score);
            }
        }
        Command::Sweep { run, grid } => {
            let base = run.resolve()?;
            let grid: Grid = grid.parse()?;
            let timing = run.timing;
            let rows = cli::cmd_sweep(
                &base,
                grid,
                |row, skipped| {
                    let note = if skipped { " (already done)" } else { "" };
                    eprintln!("{} char {}: {:.2}{note}", row.system, row.char_size, row.grand_mean);
                },
                |cell, r, t| report_epoch(&format!("[{cell}] "), r, t, timing),
            )?;
            println!("system\tchar_size\tmean_las");
            for row in rows {
                println!("{}\t{}\t{:.2}", row.system, row.char_size, row.grand_mean);
            }
        }
        Command::Gradcheck { seed } => {
            let results = cli::cmd_gradcheck(seed)?;
            let mut failed = 0;
            for r in &results {
                let status = if r.passed() { "ok" } else { "FAILED" };
                failed += usize::from(!r.passed());
                println!("{status}\t{}\t{} entries\tmax rel. error {:.2e}", r.name, r.checked, r.max_rel_error);
            }
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
