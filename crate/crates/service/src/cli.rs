//! The `segedit` command line.
//!
//! Exit codes for `edit`: 0 when every step applied, 2 when at least one
//! step was skipped for lack of a match, 1 on a failed step or any other
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use segedit_core::backends::{BackendRegistry, Role};
use segedit_core::pipeline::{parse_instructions, run_session_with, PipelineConfig, StepStatus};
use segedit_core::ImageBuffer;

use crate::api::{router, AppState};
use crate::model_server::{backend_router, ServedBackend};
use crate::server::serve_until_ctrl_c;
use crate::store::{write_atomic, write_session_dir, Store, StoredSession, SESSION_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SKIPPED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "segedit", version, about = "Text-guided region editing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an instruction script over an image.
    Edit(EditArgs),
    /// Serve the session HTTP API.
    Serve(ServeArgs),
    /// Serve one reference backend over the model-server protocol.
    ServeBackend(ServeBackendArgs),
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Script text, e.g. "replace red circle with blue".
    #[arg(long, required_unless_present = "script_file", conflicts_with = "script_file")]
    pub script: Option<String>,
    #[arg(long)]
    pub script_file: Option<PathBuf>,
    /// Backend stack id; overrides the config's stack_id.
    #[arg(long)]
    pub stack: Option<String>,
    /// PipelineConfig JSON. Without it, defaults scaled to the image are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Final image (PNG).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step PNGs and session.json go here; defaults to `<out>.steps`.
    #[arg(long)]
    pub steps_dir: Option<PathBuf>,
    /// Base seed; overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Backend registry JSON; the built-in reference stack when absent.
    #[arg(long, env = "SEGEDIT_REGISTRY")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "SEGEDIT_STORE", default_value = "segedit-store")]
    pub store: PathBuf,
    #[arg(long, env = "SEGEDIT_REGISTRY")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Segmenter,
    Scorer,
    Inpainter,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Segmenter => Role::Segmenter,
            RoleArg::Scorer => Role::Scorer,
            RoleArg::Inpainter => Role::Inpainter,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeBackendArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    #[arg(long, default_value = "127.0.0.1:9000")]
    pub addr: SocketAddr,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Edit(a) => return edit(&a, out, err),
        Command::Serve(a) => serve(a),
        Command::ServeBackend(a) => serve_backend(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn load_registry(path: Option<&Path>) -> Result<BackendRegistry, String> {
    match path {
        Some(p) => BackendRegistry::from_file(p).map_err(|e| format!("registry {}: {e}", p.display())),
        None => Ok(BackendRegistry::with_reference()),
    }
}

fn default_steps_dir(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".steps");
    out.with_file_name(name)
}

pub fn edit(a: &EditArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    macro_rules! fail {
        ($($t:tt)*) => {{
            let _ = writeln!(err, $($t)*);
            return EXIT_FAILURE;
        }};
    }

    let bytes = match std::fs::read(&a.image) {
        Ok(b) => b,
        Err(e) => fail!("error: reading {}: {e}", a.image.display()),
    };
    let image = match ImageBuffer::from_png(&bytes) {
        Ok(i) => i,
        Err(e) => fail!("error: decoding {}: {e}", a.image.display()),
    };
    let script = match (&a.script, &a.script_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => match std::fs::read_to_string(p) {
            Ok(s) => s,
            Err(e) => fail!("error: reading {}: {e}", p.display()),
        },
        (None, None) => fail!("error: one of --script or --script-file is required"),
    };
    let instructions = match parse_instructions(&script) {
        Ok(i) => i,
        Err(e) => fail!("syntax error: {e}"),
    };
    let registry = match load_registry(a.registry.as_deref()) {
        Ok(r) => r,
        Err(e) => fail!("error: {e}"),
    };
    let mut config = match &a.config {
        Some(p) => {
            let parsed = std::fs::read(p)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<PipelineConfig>(&b).map_err(|e| e.to_string()));
            match parsed {
                Ok(c) => c,
                Err(e) => fail!("error: config {}: {e}", p.display()),
            }
        }
        None => PipelineConfig::default_for_image(image.width(), image.height()),
    };
    if let Some(s) = &a.stack {
        config.stack_id = s.clone();
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let Some(stack) = registry.get(&config.stack_id) else {
        let known: Vec<&str> = registry.stack_ids().collect();
        fail!("error: unknown stack {:?} (known: {})", config.stack_id, known.join(", "));
    };

    let id = format!("cli-{}", uuid::Uuid::new_v4().simple());
    let session = match run_session_with(id, &image, &instructions, stack, &config, None) {
        Ok(s) => s,
        Err(e) => fail!("error: {e}"),
    };

    let steps_dir = a.steps_dir.clone().unwrap_or_else(|| default_steps_dir(&a.out));
    let stored = StoredSession::new(session);
    if let Err(e) = write_session_dir(&steps_dir, &stored, 0) {
        fail!("error: writing steps: {e}");
    }
    let final_png = match stored.session.current_image().to_png() {
        Ok(p) => p,
        Err(e) => fail!("error: encoding output: {e}"),
    };
    if let Err(e) = write_atomic(&a.out, &final_png) {
        fail!("error: writing {}: {e}", a.out.display());
    }

    let mut code = EXIT_OK;
    for (i, step) in stored.session.steps.iter().enumerate() {
        let k = i + 1;
        let ins = &step.instruction;
        match &step.status {
            StepStatus::Applied => {
                let id = step.selection.as_ref().and_then(|s| s.chosen()).map(|c| c.segment.id());
                let _ = writeln!(
                    out,
                    "step {k}: applied {:?} -> {:?} on {}",
                    ins.source_prompt(),
                    ins.target_prompt(),
                    id.unwrap_or("?")
                );
            }
            StepStatus::SkippedNoMatch => {
                let _ = writeln!(out, "step {k}: skipped, {:?} matched nothing", ins.source_prompt());
                code = EXIT_SKIPPED;
            }
            StepStatus::Failed(f) => {
                let stage = f.stage.map(|s| s.to_string()).unwrap_or_else(|| "pipeline".into());
                let _ = writeln!(err, "step {k} failed at stage {stage}: {}", f.message);
                code = EXIT_FAILURE;
            }
        }
    }
    let _ = writeln!(
        out,
        "wrote {} and {}",
        a.out.display(),
        steps_dir.join(SESSION_FILE).display()
    );
    code
}

fn runtime() -> Result<tokio::runtime::Runtime, String> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())
}

fn init_tracing() {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
}

fn serve(a: ServeArgs) -> Result<(), String> {
    init_tracing();
    let registry = load_registry(a.registry.as_deref())?;
    std::fs::create_dir_all(&a.store).map_err(|e| format!("store {}: {e}", a.store.display()))?;
    let app = router(AppState::new(registry, Store::new(&a.store)));
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await.map_err(|e| e.to_string())?;
        tracing::info!(addr = %a.addr, store = %a.store.display(), "serving session API");
        serve_until_ctrl_c(listener, app).await.map_err(|e| e.to_string())
    })
}

fn serve_backend(a: ServeBackendArgs) -> Result<(), String> {
    init_tracing();
    let role: Role = a.role.into();
    let app = backend_router(ServedBackend::reference(role));
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await.map_err(|e| e.to_string())?;
        tracing::info!(addr = %a.addr, %role, "serving reference backend");
        serve_until_ctrl_c(listener, app).await.map_err(|e| e.to_string())
    })
}
