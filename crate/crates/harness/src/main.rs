use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use greybox_core::problems::PROBLEM_NAMES;
use greybox_harness::summary::{self, cost_to_target, evaluations_to_target, load_runs};
use greybox_harness::{run_to_dir, HarnessError, Method, RunConfig};

#[derive(Parser)]
#[command(name = "greybox-bo", version, about = "Grey-box Bayesian optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config (or manifest) file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize the run directory (or directory of run directories).
    Summarize {
        dir: PathBuf,
        /// Regret threshold for evaluations-to-target and cost-to-target.
        #[arg(long)]
        target: Option<f64>,
    },
    ListProblems,
    ListMethods,
}

fn run_command(config: PathBuf, output: Option<PathBuf>) -> Result<(), HarnessError> {
    let mut cfg = RunConfig::from_file(&config)?;
    if let Some(out) = output {
        cfg.output_dir = Some(out);
    }
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| HarnessError::config("output.dir", "no output directory given"))?;
    let out = run_to_dir(&cfg, &dir)?;
    let failed = out.manifest.failed();
    println!(
        "{} replication(s) of {} on {} written to {}",
        cfg.replications,
        cfg.method.name(),
        cfg.problem,
        dir.display()
    );
    if failed > 0 {
        return Err(HarnessError::Runtime(format!(
            "{failed} replication(s) failed; see the manifest"
        )));
    }
    Ok(())
}

fn summarize_command(dir: PathBuf, target: Option<f64>) -> Result<(), HarnessError> {
    let runs = load_runs(&dir)?;
    let mut all = Vec::new();
    for r in &runs {
        let s = summary::summarize(&r.method, &r.traces)?;
        let last = s.by_evaluation.last().expect("nonempty");
        print!(
            "{:<16} reps={:<3} evals={:<4} final median log10 regret={:.4}",
            s.method,
            s.replications,
            last.at,
            last.median
        );
        if let Some(t) = target {
            let e = evaluations_to_target(&r.traces, t).map_or("-".to_string(), |v| v.to_string());
            let c = cost_to_target(&r.traces, t).map_or("-".to_string(), |v| v.to_string());
            print!(" evals-to-target={e} cost-to-target={c}");
        }
        println!();
        all.push(s);
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary::summary_csv(&all)).map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Run { config, output } => run_command(config, output),
        Command::Summarize { dir, target } => summarize_command(dir, target),
        Command::ListProblems => {
            PROBLEM_NAMES.iter().for_each(|p| println!("{p}"));
            Ok(())
        }
        Command::ListMethods => {
            Method::ALL.iter().for_each(|m| println!("{}", m.name()));
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
