//! Command-line front end: scenario launcher, preset and seed management,
//! CSV emission and summary rendering.
//!
//! Exit codes: 0 success, 2 configuration error, 3 capacity error,
//! 4 I/O error. Every error path prints one `error: ...` line to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reconcile_bench_core::harness::{
    self, aggregate, run_scenario, ExperimentParams, KpiRecord, RunConfig, RunOutput, Scenario,
};
use reconcile_bench_core::preset;
use reconcile_bench_core::reconcilers::ProfileId;
use reconcile_bench_core::stats;
use reconcile_bench_core::Error;

#[derive(Parser)]
#[command(
    name = "reconcile-bench",
    about = "Deterministic benchmark simulator for GitOps reconcilers and intent pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a GitOps scenario (single-app or multi-app) per profile.
    Run(RunArgs),
    /// Run an intent-pipeline scenario (single or multi mode).
    Nephio(NephioArgs),
    /// Recompute summary statistics from stored raw CSV files.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Maximum number of deployments or replicas (defaults per scenario).
    #[arg(long)]
    max: Option<u32>,
    /// Repetitions per scale point.
    #[arg(long, default_value_t = 20)]
    reps: u32,
    /// Step of the scale grid {1, 1+step, ...}.
    #[arg(long, default_value_t = 10)]
    step: u32,
    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Calibration preset (table3, fig3, fig4, fig5, fig6-prose, or a
    /// file in $RECONCILE_BENCH_PRESET_DIR).
    #[arg(long, default_value = "table3")]
    preset: String,
    /// Output directory for CSVs and summaries.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write the event trace log (one line per dispatched event).
    #[arg(long)]
    trace: bool,
    /// Write the post-cleanup cluster state line per iteration.
    #[arg(long)]
    cluster_states: bool,
    /// Number of isolated simulation instances running in parallel.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct RunArgs {
    /// single-app or multi-app.
    #[arg(long)]
    scenario: String,
    /// Profile to benchmark; repeat for several (default: all three).
    #[arg(long = "profile")]
    profiles: Vec<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct NephioArgs {
    /// single (one intent, scaling replicas) or multi (scaling intents).
    #[arg(long)]
    mode: String,
    /// Downstream reconciler tracking the deployment repository.
    #[arg(long, default_value = "csync")]
    profile: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Raw CSV files to combine.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory for the combined summary.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    std::fs::write(path, content)?;
    Ok(())
}

struct ScenarioResults {
    records: Vec<KpiRecord>,
    failures: u32,
    trace: Vec<String>,
    cleanup_lines: Vec<String>,
}

fn emit_outputs(
    results: &ScenarioResults,
    out_dir: &Path,
    source_note: &str,
    trace: bool,
    cluster_states: bool,
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    write_file(
        &out_dir.join("raw.csv"),
        &harness::raw_csv(&results.records),
    )?;
    let aggs = aggregate(&results.records)?;
    write_file(
        &out_dir.join("aggregated.csv"),
        &harness::aggregated_csv(&aggs),
    )?;
    let rows = stats::summarize(&results.records);
    let note = if results.failures > 0 {
        format!(
            "{source_note}; failed iterations excluded: {}",
            results.failures
        )
    } else {
        source_note.to_string()
    };
    write_file(
        &out_dir.join("summary.txt"),
        &stats::render_summary_text(&rows, &note),
    )?;
    write_file(
        &out_dir.join("summary.csv"),
        &stats::render_summary_csv(&rows, &note),
    )?;
    if trace {
        let mut text = results.trace.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_file(&out_dir.join("trace.log"), &text)?;
    }
    if cluster_states {
        let mut text = results.cleanup_lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_file(&out_dir.join("cluster_states.log"), &text)?;
    }
    println!(
        "wrote {} records to {} ({} failures)",
        results.records.len(),
        out_dir.display(),
        results.failures
    );
    print!("{}", stats::render_summary_text(&rows, &note));
    Ok(())
}

fn collect_run(
    scenario: Scenario,
    profile: ProfileId,
    common: &CommonArgs,
    default_max: u32,
    results: &mut ScenarioResults,
) -> Result<(), Error> {
    let max = common.max.unwrap_or(default_max);
    let ep = ExperimentParams::new(profile.prefix(), max, common.reps, common.step)?;
    let preset = preset::load(&common.preset)?;
    let mut cfg = RunConfig::new(
        scenario,
        profile,
        ep,
        preset,
        common.seed,
        common.out.join("work"),
    );
    cfg.parallel = common.parallel;
    cfg.trace = common.trace;
    let out: RunOutput = run_scenario(&cfg)?;
    for ((k, rep), state) in &out.cleanup_states {
        if state != &out.baseline_state {
            return Err(Error::InvalidParams(format!(
                "cluster reset verification failed at k={k} rep={rep}: {state} != {}",
                out.baseline_state
            )));
        }
        results.cleanup_lines.push(state.clone());
    }
    results.records.extend(out.records);
    results.failures += out.failures;
    results.trace.extend(out.trace);
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let scenario = Scenario::parse(&args.scenario)?;
    if scenario.is_nephio() {
        return Err(Error::InvalidParams(
            "use the `nephio` subcommand for intent-pipeline scenarios".into(),
        ));
    }
    let default_max = match scenario {
        Scenario::SingleApp => 100,
        _ => 90,
    };
    let profile_names: Vec<String> = if args.profiles.is_empty() {
        vec!["argo".into(), "flux".into(), "csync".into()]
    } else {
        args.profiles.clone()
    };
    let mut profiles = Vec::new();
    for name in &profile_names {
        profiles.push(ProfileId::parse(name)?);
    }
    let mut results = ScenarioResults {
        records: Vec::new(),
        failures: 0,
        trace: Vec::new(),
        cleanup_lines: Vec::new(),
    };
    for profile in profiles {
        collect_run(scenario, profile, &args.common, default_max, &mut results)?;
    }
    let note = format!(
        "scenario: {}; preset: {}; seed: {}",
        scenario.as_str(),
        args.common.preset,
        args.common.seed
    );
    emit_outputs(
        &results,
        &args.common.out,
        &note,
        args.common.trace,
        args.common.cluster_states,
    )
}

fn cmd_nephio(args: &NephioArgs) -> Result<(), Error> {
    let scenario = match args.mode.as_str() {
        "single" => Scenario::NephioSingle,
        "multi" => Scenario::NephioMulti,
        other => {
            return Err(Error::InvalidParams(format!(
                "unknown nephio mode `{other}`; expected single or multi"
            )));
        }
    };
    let profile = ProfileId::parse(&args.profile)?;
    let mut results = ScenarioResults {
        records: Vec::new(),
        failures: 0,
        trace: Vec::new(),
        cleanup_lines: Vec::new(),
    };
    collect_run(scenario, profile, &args.common, 90, &mut results)?;
    let note = format!(
        "scenario: {}; preset: {}; seed: {}",
        scenario.as_str(),
        args.common.preset,
        args.common.seed
    );
    emit_outputs(
        &results,
        &args.common.out,
        &note,
        args.common.trace,
        args.common.cluster_states,
    )
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<(), Error> {
    let mut records = Vec::new();
    let mut names = Vec::new();
    for input in &args.inputs {
        let text = std::fs::read_to_string(input)?;
        records.extend(harness::parse_raw_csv(&text)?);
        names.push(input.display().to_string());
    }
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    std::fs::create_dir_all(&args.out)?;
    let rows = stats::summarize(&records);
    let note = format!("inputs: {}", names.join(", "));
    write_file(
        &args.out.join("summary.txt"),
        &stats::render_summary_text(&rows, &note),
    )?;
    write_file(
        &args.out.join("summary.csv"),
        &stats::render_summary_csv(&rows, &note),
    )?;
    print!("{}", stats::render_summary_text(&rows, &note));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep machine-parseable single-line diagnostics on bad usage
            if err.use_stderr() {
                let first = err.to_string();
                let first = first.lines().next().unwrap_or("invalid arguments");
                eprintln!("error: {}", first.trim_start_matches("error: "));
                return ExitCode::from(2);
            }
            // --help / --version
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Nephio(args) => cmd_nephio(args),
        Command::Summarize(args) => cmd_summarize(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
