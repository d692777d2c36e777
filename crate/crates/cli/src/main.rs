//! `primscene`: place primitives in a captured scene, run the insertion
//! pipeline and read back the timing report.
//!
//! Scene commands talk to a running service when `--server` is given.
//! Otherwise they start an embedded service rooted at the scene's parent
//! directory for the duration of the command.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use primscene_client::{Client, ClientError};
use primscene_core::api::SceneStatus;
use primscene_core::config::Config;
use primscene_core::dataset::load_dataset;
use primscene_core::fixture::{synthetic_dataset, write_synthetic_dataset, FixtureSpec};
use primscene_core::geometry::{Pose, Primitive, PrimitiveKind, Vec3};
use primscene_core::integration::{ObjectSpec, Strategy};
use primscene_core::jobs::SceneDir;
use primscene_server::AppState;

#[derive(Parser)]
#[command(
    name = "primscene",
    version,
    about = "Stylize primitives into furniture and insert them into NeRF datasets"
)]
struct Cli {
    /// Service configuration (JSON). PRIMSCENE_* variables override fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Remote {
    /// Base URL of a running service; the scene argument is then its id.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load a Nerfstudio dataset and report its size.
    Validate { dataset: PathBuf },
    /// Write the synthetic room dataset.
    Fixture {
        out: PathBuf,
        #[arg(long, default_value_t = 303)]
        frames: usize,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 96)]
        height: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write a scene directory (dataset plus scene state) instead of a
        /// bare dataset.
        #[arg(long)]
        scene: bool,
    },
    /// Create a scene directory from an existing dataset.
    Init {
        scene: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Queue an object for insertion.
    Place {
        scene: PathBuf,
        #[arg(long)]
        kind: PrimitiveKind,
        /// Position `x,y,z` with an optional yaw in degrees: `x,y,z,yaw`.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        /// One value for all axes or `sx,sy,sz`.
        #[arg(long)]
        scale: String,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        name: Option<String>,
        /// `add_new_images` or `modify_existing`.
        #[arg(long, default_value = "add_new_images")]
        strategy: Strategy,
        #[command(flatten)]
        remote: Remote,
    },
    /// Insert every queued object and print the report.
    Run {
        scene: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Print the timing report, or write it as CSV with `--out`.
    Report {
        scene: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        remote: Remote,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

/// Failure classes with their exit codes.
enum Failure {
    Validation(String),
    Pipeline(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(1),
            Failure::Pipeline(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Pipeline(m) => m,
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match &e {
            ClientError::Api { status, message, .. } if (400..500).contains(status) => {
                Failure::Validation(message.clone())
            }
            _ => Failure::Pipeline(e.to_string()),
        }
    }
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Validation(format!("invalid {what} `{text}`: {e}")))
}

fn parse_pose(text: &str) -> Result<Pose, Failure> {
    match parse_floats(text, "pose")?.as_slice() {
        [x, y, z] => Ok(Pose::from_translation(Vec3::new(*x, *y, *z))),
        [x, y, z, yaw] => Ok(Pose::from_yaw_translation(yaw.to_radians(), Vec3::new(*x, *y, *z))),
        _ => Err(Failure::Validation(format!("pose `{text}` needs x,y,z or x,y,z,yaw"))),
    }
}

fn parse_scale(text: &str) -> Result<Vec3, Failure> {
    match parse_floats(text, "scale")?.as_slice() {
        [s] => Ok(Vec3::repeat(*s)),
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(Failure::Validation(format!("scale `{text}` needs one or three values"))),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| Failure::Validation(e.to_string()))
}

/// Client plus scene id, backed by an embedded service unless `--server`
/// was given. The embedded service lives as long as the returned value.
struct Session {
    client: Client,
    id: String,
    _server: Option<tokio::task::JoinHandle<()>>,
}

async fn connect(scene: &Path, remote: &Remote, config: Option<&Path>) -> Result<Session, Failure> {
    let id = scene
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Failure::Validation(format!("`{}` does not name a scene", scene.display())))?
        .to_string();
    if let Some(url) = &remote.server {
        return Ok(Session {
            client: Client::new(url.clone()),
            id,
            _server: None,
        });
    }
    SceneDir::open(scene).map_err(|_| {
        Failure::Validation(format!(
            "`{}` is not a scene directory; create one with `primscene init` or `primscene fixture --scene`",
            scene.display()
        ))
    })?;
    let mut cfg = load_config(config)?;
    cfg.scenes_root = match scene.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let (addr, handle) = primscene_server::spawn(AppState::new(cfg), "127.0.0.1:0")
        .await
        .map_err(|e| Failure::Pipeline(format!("cannot start embedded service: {e}")))?;
    Ok(Session {
        client: Client::new(format!("http://{addr}")),
        id,
        _server: Some(handle),
    })
}

async fn execute(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Validate { dataset } => {
            let ds = load_dataset(&dataset).map_err(|e| Failure::Validation(e.to_string()))?;
            let k = ds.intrinsics;
            println!("{} frames", ds.len());
            println!(
                "{}x{} fx={} fy={} cx={} cy={}",
                k.width, k.height, k.fx, k.fy, k.cx, k.cy
            );
        }
        Command::Fixture {
            out,
            frames,
            width,
            height,
            seed,
            scene,
        } => {
            let spec = FixtureSpec {
                frames,
                width,
                height,
                seed,
            };
            let fail = |e: primscene_core::Error| Failure::Pipeline(e.to_string());
            if scene {
                let ds = synthetic_dataset(&spec, &out).map_err(fail)?;
                SceneDir::create(&out, &ds).map_err(fail)?;
            } else {
                write_synthetic_dataset(&spec, &out).map_err(fail)?;
            }
            println!("wrote {frames} frames to {}", out.display());
        }
        Command::Init { scene, dataset } => {
            let ds = load_dataset(&dataset).map_err(|e| Failure::Validation(e.to_string()))?;
            SceneDir::create(&scene, &ds).map_err(|e| Failure::Pipeline(e.to_string()))?;
            println!("created scene {} with {} frames", scene.display(), ds.len());
        }
        Command::Place {
            scene,
            kind,
            pose,
            scale,
            prompt,
            name,
            strategy,
            remote,
        } => {
            let primitive = Primitive::new(kind, parse_pose(&pose)?, parse_scale(&scale)?);
            let session = connect(&scene, &remote, config).await?;
            let name = match name {
                Some(n) => n,
                None => {
                    let summary = session.client.scene(&session.id).await?;
                    format!("{kind}{}", summary.inserted.len() + summary.queue.len())
                }
            };
            let spec = ObjectSpec {
                name,
                primitive,
                prompt,
                strategy,
            };
            session.client.place(&session.id, &spec).await?;
            println!("queued `{}` ({kind}) in {}", spec.name, session.id);
        }
        Command::Run { scene, remote } => {
            let session = connect(&scene, &remote, config).await?;
            let accepted = session.client.run(&session.id).await?;
            eprintln!("{} started", accepted.job_id);
            let view = session
                .client
                .wait_for_job(&session.id, Duration::from_millis(100))
                .await?;
            if let SceneStatus::Failed { reason } = view.status {
                return Err(Failure::Pipeline(format!("{} failed: {reason}", accepted.job_id)));
            }
            let report = session.client.report(&session.id).await?;
            let summary = session.client.scene(&session.id).await?;
            print!("{}", report.to_table());
            println!("{} frames", summary.frames);
        }
        Command::Report { scene, out, remote } => {
            let session = connect(&scene, &remote, config).await?;
            let csv = session.client.report_csv(&session.id).await?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &csv)
                        .map_err(|e| Failure::Pipeline(format!("cannot write {}: {e}", path.display())))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Serve { bind } => {
            let mut cfg = load_config(config)?;
            if let Some(bind) = bind {
                cfg.bind = bind;
            }
            primscene_server::serve(cfg)
                .await
                .map_err(|e| Failure::Pipeline(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}
