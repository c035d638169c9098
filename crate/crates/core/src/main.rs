use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use snapiter::harness::bench::{run_benchmark, write_csv, WorkloadConfig};
use snapiter::harness::lincheck::check_corpus;
use snapiter::harness::stepper::{check_hash, check_rotation, check_ubst};
use snapiter::harness::stress::{global_consistency_stress, StressConfig};
use snapiter::harness::{Mix, Structure};
use snapiter::Key;

#[derive(Parser)]
#[command(name = "snapiter", version, about = "Snapshot-iterable lock-free sets: checks and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure updater throughput without and with concurrent iterators.
    Bench {
        #[arg(long, value_enum)]
        structure: Structure,
        #[arg(long, default_value_t = 4)]
        updaters: usize,
        #[arg(long, default_value_t = 3)]
        iterators: usize,
        /// Key range exponent: keys are drawn from 0..2^RANGE.
        #[arg(long, default_value_t = 14, value_parser = parse_range_bits)]
        range: u32,
        #[arg(long, default_value = "25-25-50")]
        mix: Mix,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0.5)]
        warmup: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        sorted_append: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-thread rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run iterators against hot-range updaters; fail if any snapshot misses a cold key.
    StressGlobal {
        #[arg(long, value_enum)]
        structure: Structure,
        #[arg(long, default_value = "1:100", value_parser = parse_range)]
        cold: RangeInclusive<Key>,
        #[arg(long, default_value = "200:300", value_parser = parse_range)]
        hot: RangeInclusive<Key>,
        #[arg(long, default_value_t = 4)]
        updaters: usize,
        #[arg(long, default_value_t = 2)]
        iterators: usize,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "50-50-0")]
        mix: Mix,
    },
    /// Exhaustively check local consistency of every shipped atomic step.
    CheckLocal {
        /// Defaults to both structures.
        #[arg(long, value_enum)]
        structure: Option<Structure>,
        /// Tree leaves (and hash key universe, plus four, capped at 12).
        #[arg(long, default_value_t = 8)]
        exhaustive_bound: usize,
    },
    /// Check a JSONL corpus of histories against expected verdicts.
    Lincheck {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<RangeInclusive<Key>, String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("{s:?} is not LO:HI"))?;
    let lo: Key = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: Key = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {s:?}"));
    }
    Ok(lo..=hi)
}

fn parse_range_bits(s: &str) -> Result<u32, String> {
    match s {
        "12" | "14" | "16" => Ok(s.parse().unwrap()),
        _ => Err(format!("{s:?} is not one of 12, 14, 16")),
    }
}

fn usage_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Bench {
            structure,
            updaters,
            iterators,
            range,
            mix,
            seconds,
            warmup,
            seed,
            sorted_append,
            out,
            csv,
        } => {
            let cfg = WorkloadConfig {
                structure,
                updaters,
                iterators,
                range_bits: range,
                mix,
                seconds,
                warmup,
                seed,
                sorted_append,
            };
            let report = match run_benchmark(&cfg) {
                Ok(r) => r,
                Err(e) => return usage_error(e),
            };
            if let Some(path) = csv {
                if let Err(e) = write_csv(&report, &path) {
                    return usage_error(e);
                }
            }
            let json = serde_json::to_string_pretty(&report).expect("reports serialize");
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, json) {
                        return usage_error(format!("cannot write {}: {e}", path.display()));
                    }
                }
                None => println!("{json}"),
            }
            ExitCode::SUCCESS
        }
        Command::StressGlobal {
            structure,
            cold,
            hot,
            updaters,
            iterators,
            seconds,
            seed,
            mix,
        } => {
            let cfg = StressConfig {
                structure,
                cold,
                hot,
                updaters,
                iterators,
                duration: Duration::from_secs_f64(seconds),
                seed,
                mix,
            };
            match global_consistency_stress(&cfg) {
                Ok(r) => {
                    print_json(&r);
                    if r.clean() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => usage_error(e),
            }
        }
        Command::CheckLocal {
            structure,
            exhaustive_bound,
        } => {
            if exhaustive_bound == 0 {
                return usage_error("exhaustive bound must be at least 1");
            }
            let mut reports = Vec::new();
            let mut rotation = None;
            for s in structure.map_or(Structure::ALL.to_vec(), |s| vec![s]) {
                let report = match s {
                    Structure::Ubst => check_ubst(exhaustive_bound),
                    Structure::Hashset => check_hash(exhaustive_bound),
                };
                eprintln!(
                    "{}: {} scenarios, {} checks, {} failures",
                    report.structure,
                    report.scenarios,
                    report.total_checks(),
                    report.failure_count
                );
                reports.push(report);
                if s == Structure::Ubst {
                    let rot = check_rotation(exhaustive_bound);
                    eprintln!(
                        "in-place rotation (must be rejected): {} of {} rejected",
                        rot.rejected, rot.scenarios
                    );
                    rotation = Some(rot);
                }
            }
            let passed = reports.iter().all(|r| r.passed());
            print_json(&serde_json::json!({
                "passed": passed,
                "structures": reports,
                "adversarial_rotation": rotation,
            }));
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Lincheck { corpus } => match check_corpus(&corpus) {
            Ok(r) => {
                print_json(&r);
                if r.all_agree() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => usage_error(e),
        },
    }
}
