//! Command-line entry point: single-claim verification, batch
//! benchmarking, and config validation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use claimcheck::config::{resolve, FileConfig, Overrides, RunMode};
use claimcheck::harness::{
    emit_report, evaluate, load_dataset, prediction_pairs, summary_table, Pipeline, Report,
};
use claimcheck::model::Claim;
use claimcheck::toolplane::parse_detector_line;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "claimcheck",
    about = "Evidence-centric verification of image-text claims",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run mode override.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    /// Seed override for reproducibility tests.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size override.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one image-text claim and print the verdict.
    Verify {
        /// Path to the claim image.
        image: PathBuf,
        /// The textual claim.
        text: String,
        #[command(flatten)]
        common: CommonFlags,
        /// Inline detector report for hybrid mode: "VERDICT CONFIDENCE [NAME]",
        /// e.g. "fake 0.92 npr".
        #[arg(long)]
        detector_report: Option<String>,
        /// Write the full claim trace to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a dataset through the pipeline and report metrics.
    Bench {
        /// Normalized JSONL dataset.
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
        /// Report JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional plain-text summary table output path.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print every resolved parameter with its source and check invariants.
    ValidateConfig {
        #[command(flatten)]
        common: CommonFlags,
    },
}

fn parse_mode(raw: &str) -> Result<RunMode, String> {
    match raw {
        "plain" => Ok(RunMode::Plain),
        "hybrid" => Ok(RunMode::Hybrid),
        other => Err(format!("mode must be plain or hybrid, got {other}")),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Verify {
            image,
            text,
            common,
            detector_report,
            out,
        } => cmd_verify(&image, &text, &common, detector_report.as_deref(), out.as_deref()),
        Command::Bench {
            dataset,
            common,
            out,
            summary,
        } => cmd_bench(&dataset, &common, &out, summary.as_deref()),
        Command::ValidateConfig { common } => cmd_validate_config(&common),
    }
}

/// Load, resolve, and validate configuration; usage errors exit 2.
fn load_config(
    common: &CommonFlags,
) -> Result<(claimcheck::config::RunConfig, Vec<claimcheck::config::ResolvedParam>, PathBuf), ExitCode>
{
    let file = match &common.config {
        Some(path) => match FileConfig::load(path) {
            Ok(file) => file,
            Err(err) => {
                eprintln!("config error: {err}");
                return Err(ExitCode::from(EXIT_USAGE));
            }
        },
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        mode: common.mode,
        seed: common.seed,
        workers: common.workers,
    };
    let (config, table) = resolve(file, &overrides);
    let base_dir = common
        .config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok((config, table, base_dir))
}

fn cmd_verify(
    image: &Path,
    text: &str,
    common: &CommonFlags,
    detector_report: Option<&str>,
    out: Option<&Path>,
) -> ExitCode {
    if text.trim().is_empty() {
        eprintln!("claim text must be non-empty");
        return ExitCode::from(EXIT_USAGE);
    }
    let (config, _, base_dir) = match load_config(common) {
        Ok(loaded) => loaded,
        Err(code) => return code,
    };
    if let Err(err) = config.validate() {
        eprintln!("{err}");
        return ExitCode::from(EXIT_USAGE);
    }
    let inline_detector = match detector_report.map(parse_inline_detector).transpose() {
        Ok(report) => report,
        Err(message) => {
            eprintln!("invalid --detector-report: {message}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if config.mode == RunMode::Hybrid
        && inline_detector.is_none()
        && config.tools.detector_command.is_none()
    {
        eprintln!(
            "hybrid mode needs a detector source: --detector-report or tools.detector_command"
        );
        return ExitCode::from(EXIT_USAGE);
    }
    if !image.exists() {
        eprintln!("image not found: {}", image.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let pipeline = match Pipeline::from_config(config, &base_dir) {
        Ok(pipeline) => pipeline,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let detector = if pipeline.config.mode == RunMode::Hybrid {
        match inline_detector {
            Some(report) => Some(report),
            None => match pipeline
                .detector_command
                .as_ref()
                .expect("checked above")
                .run(&image.display().to_string())
            {
                Ok(report) => Some(report),
                Err(err) => {
                    eprintln!("detector command failed: {err}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            },
        }
    } else {
        None
    };
    let claim = Claim::new("cli", image.display().to_string(), text);
    match pipeline.verify_claim(&claim, detector.as_ref()) {
        Ok((verdict, trace)) => {
            println!(
                "{} confidence {:.2} ({:?})",
                verdict.label, verdict.confidence, verdict.origin
            );
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&trace).expect("trace serializes");
                if let Err(err) = std::fs::write(path, body + "\n") {
                    eprintln!("writing trace {}: {err}", path.display());
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("verification failed: {message}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn parse_inline_detector(raw: &str) -> Result<claimcheck::toolplane::DetectorReport, String> {
    let mut parts = raw.split_whitespace();
    let verdict_and_confidence: Vec<&str> = parts.by_ref().take(2).collect();
    let name = parts.next().unwrap_or("cli");
    parse_detector_line(&verdict_and_confidence.join(" "), name).map_err(|e| e.to_string())
}

fn cmd_bench(
    dataset: &Path,
    common: &CommonFlags,
    out: &Path,
    summary: Option<&Path>,
) -> ExitCode {
    let (config, _, base_dir) = match load_config(common) {
        Ok(loaded) => loaded,
        Err(code) => return code,
    };
    if let Err(err) = config.validate() {
        eprintln!("{err}");
        return ExitCode::from(EXIT_USAGE);
    }
    let records = match load_dataset(dataset, &config.labels) {
        Ok(records) => records,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if records.is_empty() {
        eprintln!("{}", claimcheck::harness::HarnessError::EmptyEvaluation);
        return ExitCode::from(EXIT_USAGE);
    }
    let pipeline = match Pipeline::from_config(config, &base_dir) {
        Ok(pipeline) => pipeline,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let outcomes = match pipeline.run_batch(&records) {
        Ok(outcomes) => outcomes,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let pairs = prediction_pairs(&outcomes);
    let metrics = if pairs.is_empty() {
        None
    } else {
        match evaluate(&pairs) {
            Ok(metrics) => Some(metrics),
            Err(err) => {
                eprintln!("{err}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        }
    };
    let report = Report::assemble(&pipeline.config, outcomes, metrics);
    if let Err(err) = emit_report(&report, out, summary) {
        eprintln!("{err}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    print!("{}", summary_table(&report));
    if report.n_failed > 0 {
        eprintln!("{} record(s) failed", report.n_failed);
        ExitCode::from(EXIT_RUNTIME)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_validate_config(common: &CommonFlags) -> ExitCode {
    let (config, table, _) = match load_config(common) {
        Ok(loaded) => loaded,
        Err(code) => return code,
    };
    for param in &table {
        println!("{} = {} ({})", param.name, param.value, param.source);
    }
    let violations = config.violations();
    if violations.is_empty() {
        println!("configuration valid");
        ExitCode::SUCCESS
    } else {
        for violation in &violations {
            eprintln!("violation: {violation}");
        }
        ExitCode::from(EXIT_USAGE)
    }
}
