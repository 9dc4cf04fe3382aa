use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use c2kd::experiment::{Experiment, ExperimentConfig, ExperimentOutcome, Manifest, Stage, SUMMARY_FILE};
use c2kd::verify::{grad_check_suite, run_invariants, CheckOutcome};

#[derive(Parser)]
#[command(name = "c2kd", version, about = "Multilingual text-video retrieval with cross-lingual distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for every artifact and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (also capped by C2KD_THREADS).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the corpus and write it to the output directory.
    GenData(RunArgs),
    /// Train the frozen teacher ensemble with the contrastive loss.
    TrainTeachers(RunArgs),
    /// Train students for every variant and seed against saved teachers.
    TrainStudent(RunArgs),
    /// Evaluate saved students and write retrieval reports.
    Evaluate(RunArgs),
    /// Run every stage end to end.
    Sweep(RunArgs),
    /// Finite-difference check of the student objective gradients.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include the video transformer.
        #[arg(long)]
        attention: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run the invariant suite; with --out, also re-hash a run's manifest.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

fn run_stages(args: &RunArgs, stages: &[Stage]) -> Result<(), String> {
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(seeds) = &args.seeds {
        config = config.with_seeds(seeds.clone()).map_err(|e| e.to_string())?;
    }
    let experiment = Experiment::new(config, &args.out, args.jobs).map_err(|e| e.to_string())?;
    let outcome = experiment.run(stages).map_err(|e| {
        format!("{e}\n(partial manifest written to {})", args.out.join("manifest.json").display())
    })?;
    print_outcome(&outcome, &args.out, args.format)
}

fn print_outcome(outcome: &ExperimentOutcome, out: &Path, format: Format) -> Result<(), String> {
    // CSV mode prints exactly one document: the summary when students were
    // evaluated, otherwise the teacher report.
    match format {
        Format::Csv if !outcome.reports.is_empty() => {
            let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).map_err(|e| e.to_string())?;
            print!("{summary}");
        }
        Format::Csv => {
            if let Some(teachers) = &outcome.teacher_report {
                print!("{}", teachers.to_csv());
            }
        }
        Format::Table => {
            if let Some(teachers) = &outcome.teacher_report {
                for (i, run) in teachers.runs.iter().enumerate() {
                    let values: Vec<String> = teachers
                        .ks
                        .iter()
                        .zip(&run.recall[0])
                        .map(|(k, v)| format!("R@{k} {v:.1}"))
                        .collect();
                    println!("teacher {i} (en): {}", values.join("  "));
                }
            }
            print!("{}", outcome.table().map_err(|e| e.to_string())?);
        }
    }
    eprintln!(
        "{} artifacts hashed in {}",
        outcome.manifest.artifacts.len(),
        out.join("manifest.json").display()
    );
    Ok(())
}

fn print_checks(checks: &[CheckOutcome], format: Format) -> bool {
    match format {
        Format::Csv => {
            println!("check,passed,detail");
            for c in checks {
                println!("\"{}\",{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"));
            }
        }
        Format::Table => {
            for c in checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
    }
    checks.iter().all(|c| c.passed)
}

fn verify(seed: u64, out: Option<&Path>, format: Format) -> Result<bool, String> {
    let mut checks = run_invariants(seed).map_err(|e| e.to_string())?;
    if let Some(dir) = out {
        let manifest = Manifest::read(dir).map_err(|e| format!("cannot read manifest in {}: {e}", dir.display()))?;
        let bad = manifest.verify(dir);
        checks.push(CheckOutcome {
            name: "manifest hashes".into(),
            passed: bad.is_empty() && manifest.complete,
            detail: if !manifest.complete {
                format!("run is incomplete: {}", manifest.error.unwrap_or_default())
            } else if bad.is_empty() {
                format!("{} artifacts verified", manifest.artifacts.len())
            } else {
                format!("mismatched: {}", bad.join(", "))
            },
        });
    }
    Ok(print_checks(&checks, format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => run_stages(a, &[Stage::GenData]).map(|_| true),
        Command::TrainTeachers(a) => run_stages(a, &[Stage::GenData, Stage::TrainTeachers]).map(|_| true),
        Command::TrainStudent(a) => run_stages(a, &[Stage::TrainStudent]).map(|_| true),
        Command::Evaluate(a) => run_stages(a, &[Stage::Evaluate]).map(|_| true),
        Command::Sweep(a) => run_stages(
            a,
            &[Stage::GenData, Stage::TrainTeachers, Stage::TrainStudent, Stage::Evaluate],
        )
        .map(|_| true),
        Command::GradCheck { seed, attention, format } => grad_check_suite(*seed, *attention)
            .map(|checks| print_checks(&checks, *format))
            .map_err(|e| e.to_string()),
        Command::Verify { seed, out, format } => verify(*seed, out.as_deref(), *format),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
