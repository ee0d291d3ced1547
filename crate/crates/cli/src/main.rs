use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dumptriage::cfg::{emit_dot, Cfg};
use dumptriage::evidence::EvidenceConfig;
use dumptriage::harness::{build_corpus, read_corpus, run_calibration, write_corpus};
use dumptriage::report::{render_json, render_text, ReportOptions};
use dumptriage::{analyze, load_model, parse_dump, AnalyzeError, AnalyzeOptions, DumpSnapshot, PastheldModelF64};

#[derive(Parser)]
#[command(
    name = "dumptriage",
    version,
    about = "Rank the execution paths that could explain an illegal memory reference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a dump and print the ranked path report.
    Analyze {
        dump: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Emit the machine-readable report.
        #[arg(long)]
        json: bool,
        /// Show the full breakdown for every path.
        #[arg(long)]
        expand_all: bool,
    },
    /// Print the control-flow graph as DOT, optionally highlighting the best paths.
    Dot {
        dump: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Highlight the K highest-ranked paths (0 for a plain graph).
        #[arg(long, value_name = "K", default_value_t = 0)]
        highlight_top: usize,
    },
    /// Generate a corpus of programs with planted faults.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Instructions per generated program.
        #[arg(long, default_value_t = 24)]
        size: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score a corpus and report ranking accuracy and calibration.
    Calibrate {
        /// Corpus directory written by `gen`.
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Model file (defaults to the built-in PASTHELD model).
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "N", default_value_t = EvidenceConfig::default().close_threshold)]
    close_threshold: u64,
    #[arg(long, value_name = "N", default_value_t = EvidenceConfig::default().neg_threshold, allow_negative_numbers = true)]
    neg_threshold: i64,
    #[arg(long, value_name = "N", default_value_t = EvidenceConfig::default().near_end_window)]
    near_end_window: u64,
    #[arg(long, value_name = "N", default_value_t = AnalyzeOptions::default().path_cap)]
    path_cap: usize,
}

impl Common {
    fn options(&self) -> Result<AnalyzeOptions> {
        let evidence = EvidenceConfig::new(self.close_threshold, self.neg_threshold, self.near_end_window)?;
        if self.path_cap == 0 {
            bail!("--path-cap must be positive");
        }
        Ok(AnalyzeOptions { evidence, path_cap: self.path_cap })
    }

    fn model(&self) -> Result<PastheldModelF64> {
        match &self.model {
            None => Ok(PastheldModelF64::default()),
            Some(p) => {
                let text = read(p)?;
                load_model(&text).with_context(|| format!("{}", p.display()))
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_dump(path: &Path) -> Result<DumpSnapshot> {
    let text = read(path)?;
    parse_dump(&text).with_context(|| format!("{}", path.display()))
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Analyze { dump, common, json, expand_all } => {
            let opts = common.options()?;
            let model = common.model()?;
            let dump = load_dump(&dump)?;
            let a = analyze(&dump, &model, &opts)?;
            Ok(if json {
                render_json(&a, &model, &opts)
            } else {
                render_text(&a, &model, &opts, &ReportOptions { expand_all })
            })
        }
        Command::Dot { dump, common, highlight_top } => {
            let opts = common.options()?;
            let model = common.model()?;
            let dump = load_dump(&dump)?;
            if highlight_top == 0 {
                return Ok(emit_dot(&Cfg::from_program(&dump.program), None)?);
            }
            let a = analyze(&dump, &model, &opts)?;
            let top: Vec<_> =
                a.diagnosis.ranking.iter().take(highlight_top).map(|&i| a.paths.paths[i].clone()).collect();
            Ok(emit_dot(&a.cfg, Some(&top))?)
        }
        Command::Gen { seed, n, size, out } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            if size < 4 {
                bail!("--size must be at least 4");
            }
            let entries = build_corpus(seed, n, size);
            write_corpus(&out, &entries)?;
            Ok(format!("wrote {} entries to {}\n", entries.len(), out.display()))
        }
        Command::Calibrate { corpus, common, json } => {
            let opts = common.options()?;
            let model = common.model()?;
            let entries = read_corpus(&corpus)?;
            let stats = run_calibration(&entries, &model, &opts)?;
            for f in &stats.failures {
                eprintln!("entry {}: {}", f.entry, f.error);
            }
            Ok(if json {
                let mut s = serde_json::to_string_pretty(&stats)?;
                s.push('\n');
                s
            } else {
                stats.render_text()
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            // A dump that parsed but admits no diagnosis is a result, not a
            // usage error.
            if e.downcast_ref::<AnalyzeError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
