use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use adoptminer::fight::{Epsilon, FightMode};
use adoptminer::pipeline::{self, RunConfig, DEFAULT_HORIZON};
use adoptminer::synth::{self, SynthSpec};
use adoptminer::{git, ingest, Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adoptminer",
    version,
    about = "Library adoption and code fight mining for Python histories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a local git repository into a commit stream.
    Export {
        #[arg(long)]
        repo: PathBuf,
        /// Repository id written to the stream; defaults to the directory name.
        #[arg(long)]
        repo_id: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labelled synthetic corpus from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full analysis and write the report bundle.
    Analyze {
        /// Commit-stream file or directory of *.jsonl files; repeatable.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        so_dump: Option<PathBuf>,
        #[arg(long)]
        builtin_vocab: Option<PathBuf>,
        #[arg(long)]
        pypi_vocab: Option<PathBuf>,
        #[arg(long)]
        python_tags: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
        epsilon: Vec<Epsilon>,
        #[arg(long, default_value = "reduction")]
        fight_inequality: FightMode,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Extract plot-ready CSV for one figure from a report bundle.
    PlotData {
        /// Report directory written by `analyze`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_output(out: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        }),
        None => io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Export { repo, repo_id, out } => {
            let commits = git::export_from_git(&repo, repo_id.as_deref())?;
            let mut buf = Vec::new();
            ingest::write_commit_stream(&mut buf, &commits)?;
            write_output(out.as_ref(), &buf)?;
            log::info!("exported {} commits", commits.len());
        }
        Command::Synth { spec, out } => {
            let text = fs::read_to_string(&spec).map_err(|e| Error::Io {
                path: spec.clone(),
                source: e,
            })?;
            let output = synth::generate(&SynthSpec::from_json(&text)?)?;
            output.write_to(&out)?;
            log::info!(
                "generated {} commits, {} labels",
                output.commits.len(),
                output.labels.len()
            );
        }
        Command::Analyze {
            input,
            out,
            so_dump,
            builtin_vocab,
            pypi_vocab,
            python_tags,
            epsilon,
            fight_inequality,
            horizon,
            threads,
        } => {
            let mut config = RunConfig::new(input, out);
            config.so_dump = so_dump;
            config.builtin_vocab = builtin_vocab;
            config.pypi_vocab = pypi_vocab;
            config.python_tags = python_tags;
            config.epsilons = epsilon;
            config.mode = fight_inequality;
            config.horizon = horizon;
            config.threads = threads;
            let summary = pipeline::run_analyze(&config)?;
            log::info!(
                "{} projects, {} commits, {} adoptions",
                summary.projects,
                summary.commits,
                summary.adoptions
            );
        }
        Command::PlotData { input, figure, out } => {
            let csv = pipeline::emit_plot_data(&input, &figure)?;
            write_output(out.as_ref(), csv.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { 2 } else { 1 })
        }
    }
}
