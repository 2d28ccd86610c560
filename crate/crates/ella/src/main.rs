//! `ella` command line. Exit codes: 0 success, 1 I/O or internal error,
//! 2 invalid input or configuration, 3 provider failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ella::config::{load_config, ConfigError, EngineConfig};
use ella::core::analytics::AnalyticsError;
use ella::core::pipeline::PipelineError;
use ella::core::session::SessionError;
use ella::core::Story;
use ella::engine;
use ella::formats::{self, FormatError};
use ella::service::{self, AppState};
use ella::store::{FileStore, StoreError};

#[derive(Parser)]
#[command(name = "ella", version, about = "Personalized storytelling robot engine")]
struct Cli {
    /// Engine configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Author, narrate and compile every day's stories for one child.
    Generate {
        #[arg(long)]
        curriculum: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Mark every package approved, skipping caregiver review.
        #[arg(long)]
        auto_approve: bool,
    },
    /// Narrate one story JSON and compile its behavior programs.
    Behaviors {
        #[arg(long)]
        story: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one session of a day against a simulated child.
    Run {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        day: u32,
        /// Built-in persona name or persona TOML file.
        #[arg(long, default_value = "eager")]
        persona: String,
        #[arg(long, default_value = "friend")]
        child_name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: PathBuf,
    },
    /// Run one session per day of a schedule directory.
    Simulate {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        curriculum: PathBuf,
        #[arg(long, default_value = "eager")]
        persona: String,
        #[arg(long, default_value_t = ella::core::domain::DEFAULT_DEPLOYMENT_DAYS)]
        days: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-child metrics from a directory of session logs.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        curriculum: PathBuf,
        /// Last day of the first half for the split-half comparison.
        #[arg(long, default_value_t = 4)]
        boundary: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the story-service HTTP API.
    Serve {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        address: Option<String>,
    },
    /// Validate the configuration and print it with defaults filled in.
    Config,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Internal(_) => 1,
            Self::Invalid(_) => 2,
            Self::Provider(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::Internal(e.to_string()),
            _ => Self::Invalid(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => Self::Internal(e.to_string()),
            _ => Self::Invalid(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.root() {
            PipelineError::InvalidCurriculum(_) | PipelineError::InvalidConstraints(_) | PipelineError::EditViolatesConstraints(_) => {
                Self::Invalid(e.to_string())
            }
            _ => Self::Provider(e.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ella: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => EngineConfig::default(),
    };
    match cli.command {
        Command::Generate { curriculum, out, seed, auto_approve } => {
            let c = formats::read_curriculum(&curriculum)?;
            let days = engine::generate(&cfg.pipeline()?, &c, seed.unwrap_or(cfg.seeds.generate), auto_approve)?;
            formats::write_schedules(&out, &days)?;
            emit(&format!(
                "wrote {} day schedules ({} stories) to {}\n",
                days.len(),
                days.iter().map(|d| d.stories.len()).sum::<usize>(),
                out.display()
            ))?;
        }
        Command::Behaviors { story, out, seed } => {
            let s: Story = formats::read_json(&story)?;
            let (audio, program) = cfg.pipeline()?.produce(&s, seed.unwrap_or(cfg.seeds.generate))?;
            formats::write_json(&out.join("audio.json"), &audio)?;
            formats::write_json(&out.join("behavior.json"), &program)?;
            write_text(&out.join("trajectory.txt"), &formats::write_trajectory(&program.body))?;
            emit(&format!("compiled {} cues, {} body stages into {}\n", program.cues.len(), program.body.stages.len(), out.display()))?;
        }
        Command::Run { schedule, day, persona, child_name, seed, log } => {
            let mut sched = formats::read_schedule(&schedule, day)?;
            let persona = engine::resolve_persona(&persona)?;
            let providers = cfg.providers()?;
            let outcome = engine::run_day(&cfg, &providers, &mut sched, &child_name, &persona, 0, seed.unwrap_or(cfg.seeds.simulate))?;
            let path = formats::write_log(&log, &outcome.log)?;
            emit(&format!("delivered {} stories; log at {}\n", outcome.delivered.len(), path.display()))?;
            if let Some(e) = outcome.error {
                return Err(CliError::Provider(format!("session ended early: {e}")));
            }
        }
        Command::Simulate { schedule, curriculum, persona, days, seed, out } => {
            let c = formats::read_curriculum(&curriculum)?;
            let schedules = formats::read_schedules(&schedule)?;
            if schedules.is_empty() {
                return Err(CliError::Invalid(format!("no day schedules in {}", schedule.display())));
            }
            let persona = engine::resolve_persona(&persona)?;
            let providers = cfg.providers()?;
            let outcomes =
                engine::simulate(&cfg, &providers, &schedules, &c.display_name, &persona, days, seed.unwrap_or(cfg.seeds.simulate))?;
            for o in &outcomes {
                formats::write_log(&out, &o.log)?;
            }
            let delivered: usize = outcomes.iter().map(|o| o.delivered.len()).sum();
            emit(&format!("simulated {} sessions, {delivered} stories delivered; logs in {}\n", outcomes.len(), out.display()))?;
            if let Some(e) = outcomes.iter().find_map(|o| o.error.clone()) {
                return Err(CliError::Provider(format!("a session ended early: {e}")));
            }
        }
        Command::Analyze { logs, curriculum, boundary, out } => {
            let c = formats::read_curriculum(&curriculum)?;
            let logs = formats::read_logs(&logs)?;
            let report = engine::analyze(&logs, &c, boundary)?;
            match out {
                Some(p) => formats::write_json(&p, &report)?,
                None => emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")))?,
            }
        }
        Command::Serve { store, address } => {
            let token = std::env::var(&cfg.service.token_env)
                .map_err(|_| CliError::Invalid(format!("set {} to the bearer token clients must present", cfg.service.token_env)))?;
            let store = FileStore::open(&store.unwrap_or_else(|| cfg.store.path.clone()))?;
            let address = address.unwrap_or_else(|| cfg.service.address.clone());
            let state = AppState::new(store, cfg.pipeline()?, token);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| CliError::Internal(e.to_string()))?;
            eprintln!("ella: serving on {address}");
            rt.block_on(service::serve(&address, state)).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        Command::Config => {
            let errs = cfg.validate();
            if !errs.is_empty() {
                return Err(CliError::Invalid(errs.join("; ")));
            }
            emit(&cfg.to_toml())?;
        }
    }
    Ok(())
}

/// Write to stdout; a closed pipe (`ella analyze | head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Internal(e.to_string())),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}
