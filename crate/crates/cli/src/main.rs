//! `dropball`: run the case-study experiments, score event tapes, serve the
//! API and manage the document store.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad input (arguments, files
//! that fail to parse or validate).

mod chart;
mod fixture;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dropball_core::engine::{replay, EngineError};
use dropball_core::export;
use dropball_core::model::{default_plan, validate_plan, SessionHeader, TreatmentPlan, SCHEMA_VERSION};
use dropball_core::simulator::{run_experiment, Part};
use dropball_core::{tape, LevelDefinition, Store, StoreError};
use dropball_service::ServiceConfig;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// A failure caused by the caller's input; exits with status 2.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(message: impl Into<String>) -> anyhow::Error {
    InputError(message.into()).into()
}

#[derive(Parser)]
#[command(name = "dropball", version, about = "Drop-the-ball attention training: experiments, scoring and service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl From<PartArg> for Part {
    fn from(p: PartArg) -> Self {
        match p {
            PartArg::One => Part::One,
            PartArg::Two => Part::Two,
        }
    }
}

#[derive(Args)]
struct StoreArgs {
    /// Store directory.
    #[arg(long, env = "DROPBALL_STORE_ROOT", default_value = "data", conflicts_with = "config")]
    store: PathBuf,
    /// Take the store directory from a service config file instead.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl StoreArgs {
    fn open(&self) -> Result<Store> {
        let root = match &self.config {
            Some(path) => ServiceConfig::load(path).map_err(|e| input_error(e.to_string()))?.store_root,
            None => self.store.clone(),
        };
        Store::open(&root).with_context(|| format!("opening store {}", root.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a case-study experiment and write its tables.
    Simulate {
        #[arg(long, value_enum)]
        part: PartArg,
        #[arg(long)]
        seed: u64,
        /// Sessions per phase.
        #[arg(long, default_value_t = 20)]
        sessions: u32,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also render the PI-versus-session chart as SVG.
        #[arg(long)]
        charts: bool,
        /// Also write every session's event tape.
        #[arg(long)]
        tapes: bool,
    },
    /// Score an event tape and print its metrics report as JSON.
    Score {
        tape: PathBuf,
        /// Plan document; defaults to the built-in plan.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        level: u32,
        /// Layout seed the tape was played against. Defaults to the tape's
        /// `# layout_seed N` comment, then 0.
        #[arg(long)]
        layout_seed: Option<u64>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Manage treatment plans in the store.
    Plan {
        #[command(subcommand)]
        action: PlanAction,
    },
    /// Write a patient's finalized sessions as CSV.
    Export {
        #[arg(long)]
        patient: String,
        /// Replace patient ids with salted pseudonyms.
        #[arg(long, value_name = "SALT")]
        pseudonymize: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Write the layout fixture shared with the game client.
    Layouts {
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Trials per seed.
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        level: u32,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PlanAction {
    /// Validate a plan document and store it.
    Add {
        file: PathBuf,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Print a stored plan.
    Show {
        plan_id: String,
        #[command(flatten)]
        store: StoreArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { part, seed, sessions, out, charts, tapes } => {
            simulate(part.into(), seed, sessions, &out, charts, tapes)
        }
        Command::Score { tape, plan, level, layout_seed } => score(&tape, plan.as_deref(), level, layout_seed),
        Command::Serve { config } => serve(&config),
        Command::Plan { action: PlanAction::Add { file, store } } => plan_add(&file, &store),
        Command::Plan { action: PlanAction::Show { plan_id, store } } => plan_show(&plan_id, &store),
        Command::Export { patient, pseudonymize, out, store } => {
            export_patient(&patient, pseudonymize.as_deref(), out.as_deref(), &store)
        }
        Command::Layouts { seeds, first_seed, trials, plan, level, out } => {
            let level = load_level(plan.as_deref(), level)?;
            let fixture = fixture::build(&level, first_seed, seeds, trials);
            let text = serde_json::to_string_pretty(&fixture)? + "\n";
            write_or_print(out.as_deref(), &text)
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads a plan document. `schema_version` may be omitted.
fn read_plan(path: &Path) -> Result<TreatmentPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("schema_version").or_insert(SCHEMA_VERSION.into());
    }
    let text = value.to_string();
    dropball_core::storage::from_document(&text, path).map_err(|e| input_error(e.to_string()))
}

fn load_level(plan: Option<&Path>, level: u32) -> Result<LevelDefinition> {
    let plan = match plan {
        Some(path) => read_plan(path)?,
        None => default_plan("default"),
    };
    plan.game.level(level).cloned().ok_or_else(|| input_error(format!("plan {} has no level {level}", plan.plan_id)))
}

fn simulate(part: Part, seed: u64, sessions: u32, out: &Path, charts: bool, tapes: bool) -> Result<()> {
    let level = default_plan("simulated").game.levels[0].clone();
    let exp = run_experiment(part, sessions, &level, seed, None).map_err(|e| input_error(e.to_string()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let n = part.number();
    let summaries: Vec<_> = exp.phases.iter().map(|p| p.summary.clone()).collect();
    let files = [
        (format!("part{n}_table.csv"), export::experiment_table_csv(&summaries)),
        (format!("part{n}_pi_series.csv"), export::pi_series_csv(&exp.pi_series())),
        (format!("part{n}_sessions.csv"), export::experiment_sessions_csv(&exp, level.index)),
    ];
    for (name, text) in &files {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if tapes {
        let dir = out.join(format!("part{n}_tapes"));
        fs::create_dir_all(&dir)?;
        for phase in &exp.phases {
            for s in &phase.sessions {
                let id = dropball_core::simulator::session_id(&phase.config.label, s.session);
                let text = format!("# layout_seed {}\n{}", s.layout_seed, tape::to_string(&s.events));
                fs::write(dir.join(format!("{id}.tape")), text)?;
            }
        }
    }
    if charts {
        let path = out.join(format!("part{n}_pi.svg"));
        chart::pi_chart(&exp, &path)?;
    }
    print!("{}", export::experiment_summary(&exp));
    Ok(())
}

fn score(tape_path: &Path, plan: Option<&Path>, level_index: u32, layout_seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(tape_path).with_context(|| format!("reading {}", tape_path.display()))?;
    let events = tape::parse(&text).map_err(|e| input_error(format!("{}: {e}", tape_path.display())))?;
    let layout_seed = layout_seed.or_else(|| tape_seed(&text)).unwrap_or(0);
    let level = load_level(plan, level_index)?;
    let header = SessionHeader {
        session_id: tape_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        level_index,
        ..Default::default()
    };
    let (_, report) = replay(header, &level, layout_seed, &events).map_err(|e| match e {
        EngineError::Placement(_) => anyhow::Error::from(e),
        other => input_error(format!("{}: {other}", tape_path.display())),
    })?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn tape_seed(text: &str) -> Option<u64> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .find_map(|l| l.trim().strip_prefix("layout_seed")?.trim().parse().ok())
}

fn serve(config: &Path) -> Result<()> {
    let config = ServiceConfig::load(config).map_err(|e| input_error(e.to_string()))?;
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        dropball_service::serve(config, |_| {}, shutdown).await
    })?;
    Ok(())
}

fn plan_add(file: &Path, store: &StoreArgs) -> Result<()> {
    let plan = read_plan(file)?;
    let violations = validate_plan(&plan);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(input_error(format!("plan {} is invalid:\n{}", plan.plan_id, list.join("\n"))));
    }
    store.open()?.put_plan(&plan)?;
    println!("{}", plan.plan_id);
    Ok(())
}

fn plan_show(plan_id: &str, store: &StoreArgs) -> Result<()> {
    match store.open()?.get_plan(plan_id) {
        Ok(plan) => {
            print!("{}", dropball_core::storage::to_document(&plan));
            Ok(())
        }
        Err(e @ (StoreError::NotFound { .. } | StoreError::BadId(_))) => Err(input_error(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn export_patient(patient: &str, salt: Option<&str>, out: Option<&Path>, store: &StoreArgs) -> Result<()> {
    let store = store.open()?;
    let reports = match store.list_reports(Some(patient)) {
        Ok(r) => r,
        Err(e @ StoreError::BadId(_)) => return Err(input_error(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    if reports.is_empty() {
        if let Err(e @ (StoreError::NotFound { .. } | StoreError::BadId(_))) = store.get_patient(patient) {
            return Err(input_error(e.to_string()));
        }
    }
    write_or_print(out, &export::sessions_csv(&reports, salt))
}
