use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "trace", version, about = "Topic densities from contextual embeddings")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "TRACE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic corpus and write it with its ground truth.
    Simulate(SimulateArgs),
    /// Fit net, hyperword topics and bandwidth; write a model file.
    Fit(FitArgs),
    /// Evaluate topic densities and relevances as CSV.
    Densities(DensitiesArgs),
    /// Estimate per-document topic weights as CSV.
    Weights(WeightsArgs),
    /// Rank observed embeddings by topic relevance.
    Anchors(AnchorsArgs),
    /// Print singular values of the normalized hyperword counts.
    Scree(ScreeArgs),
    /// Score a bandwidth grid by kNN entropy of the relevance cloud.
    SelectH(SelectHArgs),
    /// Score fits against simulation truth.
    Eval(EvalArgs),
    /// Embedded topic coherence and diversity of top words.
    Metrics(MetricsArgs),
    /// Planar membership coordinates of every embedding as CSV.
    Coords(CoordsArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Densities(a) => densities(a),
        Command::Weights(a) => weights(a),
        Command::Anchors(a) => anchors(a),
        Command::Scree(a) => scree(a),
        Command::SelectH(a) => select_h(a),
        Command::Eval(a) => eval(a),
        Command::Metrics(a) => metrics(a),
        Command::Coords(a) => coords(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
