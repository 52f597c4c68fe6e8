mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use sheetcalc::malliavin::FaultInjection;
use sheetcalc::verify::to_canonical_json;

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ASSERT: u8 = 4;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fault {
    /// Use −R in place of R inside L.
    RSign,
}

/// Runs a sheetcalc experiment described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "sheetcalc", version)]
struct Cli {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Exit with status 4 when the acceptance thresholds are not met.
    #[arg(long = "assert")]
    assert_thresholds: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Replaces mc.seed.
    #[arg(long)]
    seed_override: Option<u64>,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<sheetcalc::Error> for Failure {
    fn from(e: sheetcalc::Error) -> Self {
        Failure {
            code: if e.is_numeric() { EXIT_NUMERIC } else { EXIT_VALIDATION },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let text = fs::read_to_string(&cli.config).map_err(|e| io_failure(&cli.config, e))?;
    let mut raw = config::parse(&text).map_err(|message| Failure {
        code: EXIT_VALIDATION,
        message,
    })?;
    if let Some(seed) = cli.seed_override {
        raw.mc.seed = seed;
    }
    if let Some(workers) = cli.workers {
        raw.mc.workers = workers;
    }
    if let Ok(dir) = std::env::var("OUTPUT_DIR") {
        raw.output.directory = dir;
    }
    let cfg = raw.expand()?;
    let digest = cfg.digest();
    let fault = FaultInjection {
        flip_r_sign_in_l: matches!(cli.inject_fault, Some(Fault::RSign)),
    };

    let dir = PathBuf::from(&cfg.output.directory);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    write(&dir, "expanded-config.json", &to_canonical_json(&cfg))?;

    let outcome = commands::execute(&cfg, &digest, fault)?;
    let formats = &cfg.output.formats;
    if formats.iter().any(|f| f == "json") {
        let report = json!({
            "command": cfg.run.command,
            "config_digest": digest,
            "workers": cfg.mc.workers,
            "passed": outcome.passed,
            "result": outcome.result,
        });
        write(&dir, "report.json", &to_canonical_json(&report))?;
    }
    if formats.iter().any(|f| f == "csv") {
        write(&dir, "report.csv", &outcome.csv)?;
        for (name, contents) in &outcome.dumps {
            write(&dir, name, contents)?;
        }
    }
    println!(
        "{}: {} [{}] digest {}",
        serde_json::to_value(cfg.run.command).unwrap().as_str().unwrap_or("run"),
        outcome.summary,
        if outcome.passed { "pass" } else { "fail" },
        &digest[..16]
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(passed) if passed || !cli.assert_thresholds => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("error: acceptance thresholds not met");
            ExitCode::from(EXIT_ASSERT)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
