//! `blockplan` — command-line front end for the construction pipeline.
//!
//! Every subcommand is a thin shell over one library operation: `execute`,
//! `analyze`, `verify`, and `clarify` expose single pipeline stages for
//! scripting and inspection, `run` drives whole benchmark scenarios, and
//! `stats` compares two run reports with a Welch t-test. All JSON output
//! is newline-terminated and stable-ordered, so outputs diff cleanly.
//!
//! Exit codes: 0 success, 1 verification found unrecoverable (re-plan)
//! errors, 2 input error, 3 execution error, 4 a `--check` threshold
//! failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use blockplan_core::analyzer::{self, Primitive};
use blockplan_core::clarify::{self, PolicyConfig};
use blockplan_core::enrichment::{self, EnrichmentRule};
use blockplan_core::executor;
use blockplan_core::grid::Grid;
use blockplan_core::harness::{
    bundled_oracle_plans, render_ablation_table, render_run_table, run_ablation,
    run_scenario_with, Agent, AgentToggles, ArchitectModel, RunStats, Scenario,
};
use blockplan_core::plan::Plan;
use blockplan_core::planner::{
    Direct3dAdapter, ErrorProfile, FaultyPlanner, Planner, RemotePlanner, ScriptedPlanner,
    ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL,
};
use blockplan_core::stats::{welch_t, WelchResult};
use blockplan_core::verifier::{self, Diagnostic, InstructionFacts};

#[derive(Parser)]
#[command(
    name = "blockplan",
    version,
    about = "Gravity-grid construction pipeline: execute ground-plane plans, analyze \
             grids, verify and clarify instructions, and run scored benchmark scenarios",
    after_help = format!(
        "Remote-planner credentials come from the environment only: \
         {ENV_ENDPOINT}, {ENV_MODEL}, {ENV_API_KEY}."
    )
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan against a grid and print the resulting grid JSON
    Execute(ExecuteArgs),
    /// Detect structures in a grid; print primitives JSON and description
    Analyze(AnalyzeArgs),
    /// Check a plan against an instruction and grid; print the corrected
    /// plan and diagnostics (exit 1 when a full re-plan is needed)
    Verify(VerifyArgs),
    /// Print the ask-or-guess clarification decision for an instruction
    Clarify(ClarifyArgs),
    /// Run a benchmark scenario and print its summary table
    Run(Box<RunArgs>),
    /// Welch t-test comparing a metric across two run reports
    Stats(StatsArgs),
}

#[derive(Args)]
struct ExecuteArgs {
    /// Plan JSON file
    #[arg(long)]
    plan: PathBuf,
    /// Starting grid JSON file
    #[arg(long)]
    grid: PathBuf,
    /// Also print the execution trace JSON on a second line
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Grid JSON file
    #[arg(long)]
    grid: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Plan JSON file
    #[arg(long)]
    plan: PathBuf,
    /// Grid JSON file the plan would run against
    #[arg(long)]
    grid: PathBuf,
    /// The instruction the plan claims to implement
    #[arg(long)]
    instruction: String,
}

#[derive(Args)]
struct ClarifyArgs {
    /// The instruction to scan for missing colors and counts
    #[arg(long)]
    instruction: String,
    /// Grid JSON file providing inference context
    #[arg(long)]
    grid: PathBuf,
    /// Decide as if no question budget were available
    #[arg(long)]
    no_question: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerChoice {
    /// Deterministic fixture lookup by round id
    Scripted,
    /// Scripted planner wrapped in seeded error injection
    Faulty,
    /// OpenAI-compatible chat endpoint, configured via environment
    Remote,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file; the bundled 20-round suite when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Plan fixtures JSON (object mapping round id to plan text) for the
    /// scripted planner; the bundled oracle plans when omitted
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlannerChoice::Scripted)]
    planner: PlannerChoice,
    /// Error-profile JSON for the faulty planner; bundled profile when omitted
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Seed for the faulty planner's error stream
    #[arg(long)]
    fault_seed: Option<u64>,
    /// Independent runs over the scenario
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Comma-separated per-run seeds; 0,1,... when omitted
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Architect wrong-answer rate for generic questions
    #[arg(long, default_value_t = 0.23)]
    generic_error_rate: f64,
    /// Architect wrong-answer rate for color-specific questions
    #[arg(long, default_value_t = 0.05)]
    specific_error_rate: f64,
    /// Enrichment rule file overriding the bundled set
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Sampling temperature passed to remote planners
    #[arg(long, default_value_t = 0.1)]
    temperature: f64,
    /// Planner emits explicit 3-D placements instead of ground-plane actions
    #[arg(long)]
    no_decomposition: bool,
    /// Never ask the architect; always guess underspecified values
    #[arg(long)]
    no_questions: bool,
    /// Skip prompt enrichment
    #[arg(long)]
    no_enrichment: bool,
    /// Disable the skip-forward rule during execution
    #[arg(long)]
    no_skip_forward: bool,
    /// Skip plan verification (and with it, re-plan requests)
    #[arg(long)]
    no_verifier: bool,
    /// Run all six toggle configurations and print the ablation table
    #[arg(long)]
    ablation: bool,
    /// Run the rounds of each repeat in parallel
    #[arg(long)]
    parallel: bool,
    /// Write the full JSON report to this file
    #[arg(long)]
    report: Option<PathBuf>,
    /// Threshold manifest JSON; exit 4 when any check fails
    #[arg(long)]
    check: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Accuracy,
    Score,
    F1,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Score => "score",
            Metric::F1 => "f1",
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    /// First run-report JSON file
    report_a: PathBuf,
    /// Second run-report JSON file
    report_b: PathBuf,
    /// Which per-run metric to compare
    #[arg(long, value_enum, default_value_t = Metric::Accuracy)]
    metric: Metric,
}

/// A failed command: input problems exit 2, execution problems exit 3.
enum Failure {
    Input(String),
    Execution(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Execution(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Execution(m) => m,
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Execute(args) => cmd_execute(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Clarify(args) => cmd_clarify(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Stats(args) => cmd_stats(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_grid(path: &Path) -> Result<Grid, Failure> {
    Grid::from_json(&read_file(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_plan(path: &Path) -> Result<Plan, Failure> {
    Plan::from_json(&read_file(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn to_line(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("command output serializes")
}

fn cmd_execute(args: &ExecuteArgs) -> CmdResult {
    let plan = read_plan(&args.plan)?;
    let grid = read_grid(&args.grid)?;
    let (result, trace) =
        executor::execute(&plan, &grid).map_err(|e| Failure::Execution(e.to_string()))?;
    println!("{}", result.to_json());
    if args.trace {
        println!("{}", trace.to_json());
    }
    Ok(0)
}

#[derive(Serialize)]
struct AnalyzeOutput {
    primitives: Vec<Primitive>,
    description: String,
}

fn cmd_analyze(args: &AnalyzeArgs) -> CmdResult {
    let grid = read_grid(&args.grid)?;
    let primitives = analyzer::analyze(&grid);
    let description = analyzer::describe(&primitives);
    println!(
        "{}",
        to_line(&AnalyzeOutput {
            primitives,
            description,
        })
    );
    Ok(0)
}

#[derive(Serialize)]
struct VerifyOutput {
    plan: serde_json::Value,
    diagnostics: Vec<Diagnostic>,
    needs_replan: bool,
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let plan = read_plan(&args.plan)?;
    let grid = read_grid(&args.grid)?;
    let facts = InstructionFacts::from_instruction(&args.instruction);
    let primitives = analyzer::analyze(&grid);
    let (corrected, diagnostics) = verifier::verify(&plan, &facts, &grid, &primitives);
    let needs_replan = verifier::needs_replan(&diagnostics);
    println!(
        "{}",
        to_line(&VerifyOutput {
            plan: corrected.to_value(),
            diagnostics,
            needs_replan,
        })
    );
    Ok(u8::from(needs_replan))
}

fn cmd_clarify(args: &ClarifyArgs) -> CmdResult {
    let grid = read_grid(&args.grid)?;
    let primitives = analyzer::analyze(&grid);
    let decision = clarify::decide(
        &args.instruction,
        &grid,
        &primitives,
        !args.no_question,
        &PolicyConfig::default(),
    )
    .map_err(|e| Failure::Input(e.to_string()))?;
    println!("{}", to_line(&decision));
    Ok(0)
}

/// Thresholds a run must clear; any miss exits 4. Metrics are per-run
/// means: accuracy in [0, 1], score in points, F1 in [0, 1], questions
/// as a count.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckManifest {
    min_accuracy: Option<f64>,
    min_score: Option<f64>,
    min_f1: Option<f64>,
    max_questions_per_run: Option<f64>,
}

fn evaluate_checks(manifest: &CheckManifest, stats: &RunStats) -> Vec<String> {
    let mut failures = Vec::new();
    let mut require_min = |name: &str, value: f64, min: Option<f64>| {
        if let Some(min) = min {
            if value < min {
                failures.push(format!("check failed: {name} {value:.4} < minimum {min:.4}"));
            }
        }
    };
    require_min("accuracy", stats.accuracy.mean, manifest.min_accuracy);
    require_min("score", stats.score.mean, manifest.min_score);
    require_min("f1", stats.f1.mean, manifest.min_f1);
    if let Some(max) = manifest.max_questions_per_run {
        let mean_questions = stats
            .per_run
            .iter()
            .map(|r| f64::from(r.questions))
            .sum::<f64>()
            / stats.per_run.len() as f64;
        if mean_questions > max {
            failures.push(format!(
                "check failed: questions per run {mean_questions:.4} > maximum {max:.4}"
            ));
        }
    }
    failures
}

fn config_label(toggles: &AgentToggles) -> String {
    let mut off = Vec::new();
    if !toggles.decomposition {
        off.push("-decomposition");
    }
    if !toggles.questions {
        off.push("-questions");
    }
    if !toggles.enrichment {
        off.push("-enrichment");
    }
    if !toggles.skip_forward {
        off.push("-skip-forward");
    }
    if !toggles.verifier {
        off.push("-verifier");
    }
    if off.is_empty() {
        "full".to_string()
    } else {
        off.join(",")
    }
}

fn write_report(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let scenario = match &args.scenario {
        Some(path) => Scenario::from_json(&read_file(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        None => Scenario::bundled(),
    };
    let fixtures: BTreeMap<String, String> = match &args.fixtures {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        None => bundled_oracle_plans(),
    };
    let seeds: Vec<u64> = match &args.seeds {
        Some(seeds) => seeds.clone(),
        None => (0..args.repeats as u64).collect(),
    };
    let architect = ArchitectModel {
        generic_error_rate: args.generic_error_rate,
        specific_error_rate: args.specific_error_rate,
        seed: 0,
    };
    if args.planner != PlannerChoice::Faulty {
        if args.profile.is_some() {
            return Err(Failure::Input(
                "--profile applies to the faulty planner only".to_string(),
            ));
        }
        if args.fault_seed.is_some() {
            return Err(Failure::Input(
                "--fault-seed applies to the faulty planner only".to_string(),
            ));
        }
    }
    if args.planner == PlannerChoice::Remote && args.fixtures.is_some() {
        return Err(Failure::Input(
            "--fixtures applies to the scripted and faulty planners only".to_string(),
        ));
    }
    let profile = match &args.profile {
        Some(path) => serde_json::from_str::<ErrorProfile>(&read_file(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        None => ErrorProfile::bundled(),
    };
    let fault_seed = args.fault_seed.unwrap_or(0);

    let rules_override = match &args.rules {
        Some(path) => Some(
            enrichment::load_rules(&read_file(path)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let rules: &[EnrichmentRule] = match &rules_override {
        Some(rules) => rules,
        None => enrichment::bundled_rules(),
    };

    if args.ablation {
        return cmd_run_ablation(args, &scenario, &fixtures, profile, fault_seed, &architect, &seeds);
    }

    let mut planner: Box<dyn Planner> = match args.planner {
        PlannerChoice::Scripted | PlannerChoice::Faulty => {
            Box::new(ScriptedPlanner::new(fixtures))
        }
        PlannerChoice::Remote => {
            Box::new(RemotePlanner::from_env().map_err(|e| Failure::Input(e.to_string()))?)
        }
    };
    if args.no_decomposition {
        planner = Box::new(Direct3dAdapter::new(planner));
    }
    if args.planner == PlannerChoice::Faulty {
        planner = Box::new(
            FaultyPlanner::new(planner, profile, fault_seed)
                .map_err(|e| Failure::Input(e.to_string()))?,
        );
    }

    let toggles = AgentToggles {
        decomposition: !args.no_decomposition,
        questions: !args.no_questions,
        enrichment: !args.no_enrichment,
        skip_forward: !args.no_skip_forward,
        verifier: !args.no_verifier,
    };
    let agent = Agent {
        planner: planner.as_ref(),
        toggles,
        policy: PolicyConfig::default(),
        rules,
        temperature: args.temperature,
    };
    let report = run_scenario_with(
        &scenario,
        &agent,
        &architect,
        args.repeats,
        &seeds,
        args.parallel,
    )
    .map_err(|e| Failure::Input(e.to_string()))?;

    print!("{}", render_run_table(&config_label(&toggles), &report.stats));
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    if let Some(path) = &args.check {
        let manifest: CheckManifest = serde_json::from_str(&read_file(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let failures = evaluate_checks(&manifest, &report.stats);
        if !failures.is_empty() {
            for line in &failures {
                eprintln!("{line}");
            }
            return Ok(4);
        }
    }
    Ok(0)
}

fn cmd_run_ablation(
    args: &RunArgs,
    scenario: &Scenario,
    fixtures: &BTreeMap<String, String>,
    profile: ErrorProfile,
    fault_seed: u64,
    architect: &ArchitectModel,
    seeds: &[u64],
) -> CmdResult {
    if args.planner == PlannerChoice::Remote {
        return Err(Failure::Input(
            "the ablation grid runs scripted planners; --planner remote is not supported"
                .to_string(),
        ));
    }
    if args.no_decomposition
        || args.no_questions
        || args.no_enrichment
        || args.no_skip_forward
        || args.no_verifier
    {
        return Err(Failure::Input(
            "--ablation sweeps every toggle configuration; drop the --no-* flags".to_string(),
        ));
    }
    if args.parallel || args.rules.is_some() || args.check.is_some() {
        return Err(Failure::Input(
            "--parallel, --rules, and --check apply to single-configuration runs".to_string(),
        ));
    }
    let fault = (args.planner == PlannerChoice::Faulty).then_some((profile, fault_seed));
    let rows = run_ablation(scenario, fixtures, fault, architect, args.repeats, seeds)
        .map_err(|e| Failure::Input(e.to_string()))?;
    print!("{}", render_ablation_table(&rows));
    if let Some(path) = &args.report {
        write_report(path, &rows)?;
    }
    Ok(0)
}

/// The slice of a run report the stats command reads: per-metric run
/// count, mean, and sample standard deviation.
#[derive(Deserialize)]
struct ReportDoc {
    stats: ReportStatsDoc,
}

#[derive(Deserialize)]
struct ReportStatsDoc {
    accuracy: MetricDoc,
    score: MetricDoc,
    f1: MetricDoc,
}

#[derive(Deserialize, Serialize, Clone, Copy)]
struct MetricDoc {
    n: usize,
    mean: f64,
    sd: Option<f64>,
}

#[derive(Serialize)]
struct StatsOutput {
    metric: &'static str,
    a: MetricDoc,
    b: MetricDoc,
    welch: WelchResult,
}

fn cmd_stats(args: &StatsArgs) -> CmdResult {
    let load = |path: &Path| -> Result<MetricDoc, Failure> {
        let doc: ReportDoc = serde_json::from_str(&read_file(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let metric = match args.metric {
            Metric::Accuracy => doc.stats.accuracy,
            Metric::Score => doc.stats.score,
            Metric::F1 => doc.stats.f1,
        };
        if metric.sd.is_none() {
            return Err(Failure::Input(format!(
                "{}: records a single run, so σ is unavailable",
                path.display()
            )));
        }
        Ok(metric)
    };
    let a = load(&args.report_a)?;
    let b = load(&args.report_b)?;
    let welch = welch_t(
        a.mean,
        a.sd.expect("checked above"),
        a.n,
        b.mean,
        b.sd.expect("checked above"),
        b.n,
    )
    .map_err(|e| Failure::Input(e.to_string()))?;
    println!(
        "{}",
        to_line(&StatsOutput {
            metric: args.metric.name(),
            a,
            b,
            welch,
        })
    );
    Ok(0)
}
