//! `manetsim`: run scenario files or the built-in reference scenarios and
//! write metrics, throughput series and traces.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use manet_qos::batch::{mean_std, replicate, simulate_all};
use manet_qos::metrics::{mean_throughput, series_csv, MetricsReport};
use manet_qos::paper::{self, NAMES};
use manet_qos::{RunOutput, Scenario};
use serde_json::{json, Value};

const EXIT_SCHEMA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "manetsim",
    version,
    about = "802.11 ad hoc network simulator with admission-controlled AODV"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run; more than one adds summary.json.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    seeds: u32,
    /// Also write the event trace as trace.jsonl.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a built-in scenario, expanding sweeps into all their points.
    Paper {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List the built-in scenarios.
    List,
    /// Print a built-in scenario as a scenario file.
    Show { name: String },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn schema_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_SCHEMA,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { file, opts } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let scenario = Scenario::from_toml(&text)
                .map_err(|e| schema_error(anyhow::anyhow!("{}: {e}", file.display())))?;
            run_batch(&[scenario], &opts)
        }
        Command::Paper { name, opts } => {
            let scenarios = paper::paper_sweep(&name).map_err(schema_error)?;
            run_batch(&scenarios, &opts)
        }
        Command::List => {
            for name in NAMES {
                let runs = paper::paper_sweep(name).map(|s| s.len()).unwrap_or(0);
                println!("{name}\t{runs} run{}", if runs == 1 { "" } else { "s" });
            }
            Ok(())
        }
        Command::Show { name } => {
            let scenario = paper::paper_scenario(&name).map_err(schema_error)?;
            print!("{}", scenario.to_toml());
            Ok(())
        }
    }
}

fn run_batch(scenarios: &[Scenario], opts: &RunOpts) -> Result<(), Failure> {
    let nested = scenarios.len() > 1;
    for base in scenarios {
        let mut base = base.clone();
        if let Some(seed) = opts.seed {
            base.seed = seed;
        }
        let runs = replicate(&base, opts.seeds);
        let outputs =
            panic::catch_unwind(AssertUnwindSafe(|| simulate_all(&runs))).map_err(|payload| Failure {
                code: EXIT_RUNTIME,
                error: anyhow::anyhow!("simulation of {} aborted: {}", base.name, panic_message(&payload)),
            })?;
        let dir = if nested {
            opts.out.join(format!("{}_{}", base.name, base.protocol))
        } else {
            opts.out.clone()
        };
        for out in &outputs {
            let run_dir = if opts.seeds > 1 {
                dir.join(format!("seed_{}", out.report.seed))
            } else {
                dir.clone()
            };
            write_run(&run_dir, out, opts.trace)?;
            println!("{}", one_line(&out.report));
        }
        if opts.seeds > 1 {
            let reports: Vec<&MetricsReport> = outputs.iter().map(|o| &o.report).collect();
            let summary = serde_json::to_string_pretty(&summary(&reports))?;
            fs::write(dir.join("summary.json"), summary + "\n")?;
        }
    }
    Ok(())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

fn write_run(dir: &Path, out: &RunOutput, trace: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("metrics.json"), out.report.to_json() + "\n")?;
    for f in &out.report.flows {
        fs::write(
            dir.join(format!("throughput_flow{}.csv", f.flow_id)),
            series_csv(&f.throughput),
        )?;
    }
    if trace {
        fs::write(dir.join("trace.jsonl"), out.trace.to_jsonl())?;
    }
    Ok(())
}

fn one_line(r: &MetricsReport) -> String {
    let pdr = r.aggregate.pdr.map_or("-".to_string(), |p| format!("{p:.1}%"));
    format!(
        "{} [{}] seed {}: pdr {pdr}, control packets {}, flows admitted {} rejected {}",
        r.scenario,
        r.protocol,
        r.seed,
        r.overhead.total,
        r.admissions.flows_admitted,
        r.admissions.flows_rejected
    )
}

fn stat(values: impl IntoIterator<Item = f64>) -> Value {
    let values: Vec<f64> = values.into_iter().collect();
    match mean_std(&values) {
        Some((mean, std)) => json!({ "mean": mean, "std": std, "n": values.len() }),
        None => json!({ "mean": null, "std": null, "n": 0 }),
    }
}

/// Mean and standard deviation across seeds of the headline metrics.
fn summary(reports: &[&MetricsReport]) -> Value {
    let first = reports[0];
    let flows: Vec<Value> = first
        .flows
        .iter()
        .map(|f| {
            let per_seed: Vec<_> = reports.iter().filter_map(|r| r.flow(f.flow_id)).collect();
            json!({
                "flow_id": f.flow_id,
                "pdr": stat(per_seed.iter().filter_map(|x| x.pdr)),
                "avg_delay_s": stat(per_seed.iter().filter_map(|x| x.avg_delay_s)),
                "throughput_bps": stat(per_seed.iter().map(|x| mean_throughput(&x.throughput, 0.0, first.duration_s))),
                "admitted_runs": per_seed.iter().filter(|x| x.admitted_at_s.is_some()).count(),
                "rejected_runs": per_seed.iter().filter(|x| x.rejected).count(),
            })
        })
        .collect();
    json!({
        "scenario": first.scenario,
        "protocol": first.protocol,
        "seeds": reports.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "aggregate_pdr": stat(reports.iter().filter_map(|r| r.aggregate.pdr)),
        "avg_delay_s": stat(reports.iter().filter_map(|r| r.aggregate.avg_delay_s)),
        "control_packets": stat(reports.iter().map(|r| r.overhead.total as f64)),
        "flows_rejected": stat(reports.iter().map(|r| r.admissions.flows_rejected as f64)),
        "flows": flows,
    })
}
