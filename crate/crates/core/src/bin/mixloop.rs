use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mixloop::agents::RemoteConfig;
use mixloop::config::{BackendSection, ExperimentConfig};
use mixloop::control::{run, RunOutcome};
use mixloop::export::{export_run, read_llm_op, LLM_OP_FILE};
use mixloop::metrics::{expected_from_records, score, score_records, ExpectedTrace, RunMetrics};
use mixloop::plant::{FaultConfig, FaultKind};
use mixloop::prompt::{render, Representation};
use mixloop::scenarios::builtin_scenarios;

const EXIT_TIMEOUT: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "mixloop", version, about = "Closed-loop fault handling for a four-tank mixing module")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Run a closed-loop experiment and export its operation logs.
    Run(RunArgs),
    /// Score an exported decision log against an expected action trace.
    Score(ScoreArgs),
    /// Print the full prompt a backend would receive for the initial state.
    RenderPrompt(RenderArgs),
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Oracle,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Text,
    Simcode,
    Stategraph,
}

impl From<ReprArg> for Representation {
    fn from(r: ReprArg) -> Self {
        match r {
            ReprArg::Text => Representation::Text,
            ReprArg::Simcode => Representation::SimCode,
            ReprArg::Stategraph => Representation::StateGraph,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultKindArg {
    Clogging,
    Leakage,
    PumpDegradation,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name; overrides the config's scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Decision backend; overrides the config.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Plant-description representation; overrides the config.
    #[arg(long, value_enum)]
    repr: Option<ReprArg>,
    /// Inject an extra fault of this kind.
    #[arg(long, value_enum, requires = "fault_severity")]
    fault_kind: Option<FaultKindArg>,
    /// Severity of the injected fault, in [0, 1].
    #[arg(long, requires = "fault_kind")]
    fault_severity: Option<f64>,
    /// Location of the injected fault; a per-kind default applies.
    #[arg(long, requires = "fault_kind")]
    fault_location: Option<String>,
    /// Onset time of the injected fault in s.
    #[arg(long, default_value_t = 80.0, requires = "fault_kind")]
    fault_onset: f64,
    /// Directory receiving the three CSV operation logs.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Expected action trace (JSON) to score against; when omitted, a
    /// reference trace is generated by an oracle run of the same setup.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the executed action trace (JSON) to this file.
    #[arg(long)]
    save_trace: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory holding the exported operation logs.
    #[arg(long)]
    log_dir: PathBuf,
    /// Expected action trace (JSON).
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    repr: Option<ReprArg>,
    #[arg(long)]
    scenario: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| e.to_string()),
        None => Ok(ExperimentConfig::default()),
    }
}

fn default_fault_location(kind: FaultKindArg) -> &'static str {
    match kind {
        FaultKindArg::Clogging => "pipe_transfer",
        FaultKindArg::Leakage => "B201",
        FaultKindArg::PumpDegradation => "pump_P101",
    }
}

fn apply_run_overrides(config: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(name) = &args.scenario {
        config.scenario.name = Some(name.clone());
    }
    if let Some(repr) = args.repr {
        config.prompt.representation = repr.into();
    }
    match args.backend {
        Some(BackendArg::Oracle) => config.backend = BackendSection::Oracle,
        Some(BackendArg::Llm) => {
            if !matches!(config.backend, BackendSection::Llm(_)) {
                config.backend = BackendSection::Llm(RemoteConfig {
                    base_url: "https://api.openai.com/v1".into(),
                    model: "gpt-4o".into(),
                    timeout_s: 60,
                });
            }
        }
        None => {}
    }
    if let Some(kind) = args.fault_kind {
        config.scenario.faults.push(FaultConfig {
            kind: match kind {
                FaultKindArg::Clogging => FaultKind::Clogging,
                FaultKindArg::Leakage => FaultKind::Leakage,
                FaultKindArg::PumpDegradation => FaultKind::PumpDegradation,
            },
            severity: args.fault_severity.unwrap_or(0.0),
            location: args
                .fault_location
                .clone()
                .unwrap_or_else(|| default_fault_location(kind).to_string()),
            onset_time: args.fault_onset,
        });
    }
}

fn load_trace(path: &PathBuf) -> Result<ExpectedTrace, String> {
    let raw = fs::read_to_string(path).map_err(|e| format!("cannot read {path:?}: {e}"))?;
    serde_json::from_str(&raw).map_err(|e| format!("cannot parse {path:?}: {e}"))
}

fn print_metrics(metrics: &RunMetrics) {
    println!("n_actions:          {}", metrics.n_actions);
    println!("n_expected_actions: {}", metrics.n_expected_actions);
    println!("n_correct:          {}", metrics.n_correct);
    println!("n_incorrect_valve:  {}", metrics.n_incorrect_valve);
    println!("n_incorrect_pump:   {}", metrics.n_incorrect_pump);
    println!("n_missed_valve:     {}", metrics.n_missed_valve);
    println!("n_missed_pump:      {}", metrics.n_missed_pump);
    println!("n_reprompts:        {}", metrics.n_reprompts);
    println!("tokens_total:       {}", metrics.tokens_total);
}

fn cmd_run(args: &RunArgs) -> Result<u8, String> {
    let mut config = load_config(&args.config)?;
    apply_run_overrides(&mut config, args);
    let setup = config.build_setup().map_err(|e| e.to_string())?;
    let mut backend = config.build_backend(&setup).map_err(|e| e.to_string())?;
    let result = run(&setup, backend.as_mut()).map_err(|e| e.to_string())?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| format!("cannot create {:?}: {e}", args.out_dir))?;
    let paths = export_run(&args.out_dir, &result, &setup.kb.topology)
        .map_err(|e| e.to_string())?;
    for path in &paths {
        println!("wrote {}", path.display());
    }

    if let Some(path) = &args.save_trace {
        let trace = expected_from_records(&result.records);
        let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
        fs::write(path, json).map_err(|e| format!("cannot write {path:?}: {e}"))?;
        println!("wrote {}", path.display());
    }

    let expected = match &args.trace {
        Some(path) => load_trace(path)?,
        None => {
            // Reference trace from an oracle run of the identical setup.
            let reference_config = ExperimentConfig {
                backend: BackendSection::Oracle,
                ..config.clone()
            };
            let mut oracle = reference_config
                .build_backend(&setup)
                .map_err(|e| e.to_string())?;
            let reference = run(&setup, oracle.as_mut()).map_err(|e| e.to_string())?;
            expected_from_records(&reference.records)
        }
    };
    println!();
    println!(
        "outcome: {}",
        match result.outcome {
            RunOutcome::TargetReached => "target_reached",
            RunOutcome::Timeout => "timeout",
        }
    );
    println!(
        "final B204 level: {:.3} m after {:.1} s, {} decision points",
        result.final_state.level("B204"),
        result.final_state.time,
        result.records.len()
    );
    match score_records(&result.records, &expected) {
        Ok(metrics) => print_metrics(&metrics),
        Err(e) => println!("scoring skipped: {e}"),
    }
    Ok(match result.outcome {
        RunOutcome::TargetReached => 0,
        RunOutcome::Timeout => EXIT_TIMEOUT,
    })
}

fn cmd_score(args: &ScoreArgs) -> Result<u8, String> {
    let expected = load_trace(&args.trace)?;
    let log_path = args.log_dir.join(LLM_OP_FILE);
    let rows = read_llm_op(&log_path).map_err(|e| e.to_string())?;
    let points: Vec<_> = rows.iter().map(|r| r.decision_point()).collect();
    let metrics = score(&points, &expected).map_err(|e| e.to_string())?;
    print_metrics(&metrics);
    Ok(0)
}

fn cmd_render_prompt(args: &RenderArgs) -> Result<u8, String> {
    let mut config = load_config(&args.config)?;
    if let Some(name) = &args.scenario {
        config.scenario.name = Some(name.clone());
    }
    if let Some(repr) = args.repr {
        config.prompt.representation = repr.into();
    }
    let setup = config.build_setup().map_err(|e| e.to_string())?;
    let bundle = render(
        &setup.kb,
        &setup.initial_state,
        setup.representation,
        &setup.profile,
    );
    println!("{}", bundle.rendered_text);
    eprintln!(
        "[{} representation, ~{} tokens]",
        setup.representation.as_str(),
        bundle.token_estimate
    );
    Ok(0)
}

fn cmd_list_scenarios() -> u8 {
    for scenario in builtin_scenarios() {
        println!("{:<20} {}", scenario.name, scenario.description);
    }
    0
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        CliCommand::Run(args) => cmd_run(args),
        CliCommand::Score(args) => cmd_score(args),
        CliCommand::RenderPrompt(args) => cmd_render_prompt(args),
        CliCommand::ListScenarios => Ok(cmd_list_scenarios()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
