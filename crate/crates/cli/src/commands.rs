//! Subcommands of the `kinechain` binary.

use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kinechain_core::fitting::{default_temperature, fit_stage1, fit_stage2, write_loss_trace, FitConfig};
use kinechain_core::io::{
    load_anchors, load_chain, load_config, load_frames, load_joint_positions, load_mesh,
    load_model, load_pose, repose_to_json, save_anchors, save_chain, save_joint_positions,
    save_mesh, save_transforms, JointPositionsDoc, TransformsDoc, ANCHORS_FILE, CHAIN_FILE,
    MESH_FILE,
};
use kinechain_core::{deform_mesh, evaluate, recover_chain, Error, ModelBundle, Result};
use serde::Serialize;

use crate::service;

#[derive(Debug, Parser)]
#[command(name = "kinechain", version, about = "Kinematic-chain re-posing, fitting and evaluation")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deform a model into a pose and write the mesh as OBJ.
    Repose(ReposeArgs),
    /// Fit per-frame transforms and link-length residuals to target frames.
    Fit(FitArgs),
    /// Rebuild a proper chain from unconstrained joint positions.
    Recover(RecoverArgs),
    /// Chamfer distance and F-scores between two OBJ files.
    Eval(EvalArgs),
    /// Serve the model and re-posing over HTTP.
    Serve(ServeArgs),
}

/// A model given either as a directory or as three files.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory holding mesh.obj, chain.json and anchors.json.
    #[arg(long, conflicts_with_all = ["mesh", "chain", "anchors"])]
    pub model: Option<PathBuf>,
    #[arg(long, requires_all = ["chain", "anchors"])]
    pub mesh: Option<PathBuf>,
    #[arg(long, requires_all = ["mesh", "anchors"])]
    pub chain: Option<PathBuf>,
    #[arg(long, requires_all = ["mesh", "chain"])]
    pub anchors: Option<PathBuf>,
}

impl ModelArgs {
    pub fn load(&self) -> Result<ModelBundle> {
        if let Some(dir) = &self.model {
            return load_model(dir);
        }
        match (&self.mesh, &self.chain, &self.anchors) {
            (Some(m), Some(c), Some(a)) => {
                let mesh = load_mesh(m)?;
                let chain = load_chain(c)?;
                let anchors = load_anchors(a, default_temperature(&mesh.vertices))?;
                ModelBundle::new(mesh, chain, anchors)
            }
            _ => Err(Error::InvalidArgument(
                "give --model <dir> or all of --mesh, --chain and --anchors".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct ReposeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Pose document.
    #[arg(long)]
    pub pose: PathBuf,
    /// Deformed mesh (OBJ).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write vertices, joints and anchors as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory of per-frame OBJ point clouds.
    #[arg(long)]
    pub frames: PathBuf,
    /// Fit configuration; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// Unconstrained joint positions.
    #[arg(long)]
    pub joints: PathBuf,
    /// Revised joints; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reconstructed mesh.
    pub predicted: PathBuf,
    /// Reference mesh; F-score thresholds are fractions of its bbox diagonal.
    pub reference: PathBuf,
    #[arg(long = "threshold", default_values_t = [0.02])]
    pub thresholds: Vec<f64>,
    /// Machine-readable report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    /// Directory served under `/` (the pose editor build).
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_io() {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Repose(a) => repose(&a),
        Command::Fit(a) => fit(&a),
        Command::Recover(a) => recover(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn repose(args: &ReposeArgs) -> Result<()> {
    let bundle = args.model.load()?;
    let pose = load_pose(&args.pose, &bundle.chain)?;
    let reposed = bundle.repose(&pose)?;
    save_mesh(&reposed.mesh, &args.out)?;
    if let Some(json) = &args.json {
        write_file(json, repose_to_json(&reposed).as_bytes())?;
    }
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let bundle = args.model.load()?;
    let frames = load_frames(&args.frames)?;
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    log::info!("fitting {} frames", frames.len());
    let s1 = fit_stage1(&bundle.mesh, &bundle.anchors, &frames, &config)?;
    let s2 = fit_stage2(&bundle.mesh, &bundle.chain, &bundle.anchors, &s1, &frames, &config)?;
    let anchors = match config.tau {
        Some(t) => bundle.anchors.with_temperature(t)?,
        None => bundle.anchors.clone(),
    };

    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    save_mesh(&bundle.mesh, &out.join(MESH_FILE))?;
    save_chain(&s2.chain, &out.join(CHAIN_FILE))?;
    save_anchors(&anchors, &out.join(ANCHORS_FILE))?;
    let gamma = s2.residuals.gamma;
    save_transforms(
        &TransformsDoc::new(&s2.frames, &s2.residuals.raw, gamma),
        &out.join("transforms.json"),
    )?;
    for (f, t) in frames.iter().zip(&s2.frames) {
        let mesh = deform_mesh(&bundle.mesh, &anchors, &t.per_anchor, &f.root_pose)?;
        save_mesh(&mesh, &out.join(format!("fitted_{:04}.obj", f.time_index)))?;
    }
    let mut trace = Vec::new();
    write_loss_trace(&s1.trace, &mut trace).map_err(|e| io_error(out, e))?;
    // One header for both stages.
    let mut rest = Vec::new();
    write_loss_trace(&s2.trace, &mut rest).map_err(|e| io_error(out, e))?;
    let body = rest.iter().position(|b| *b == b'\n').map_or(0, |i| i + 1);
    trace.extend_from_slice(&rest[body..]);
    write_file(&out.join("loss_trace.tsv"), &trace)
}

pub fn recover(args: &RecoverArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let free = load_joint_positions(&args.joints, &chain)?;
    let recovered = recover_chain(&chain, &free)?;
    for l in &recovered.degenerate_links {
        log::warn!("link {l}: coincident endpoints, canonical direction kept");
    }
    match &args.out {
        Some(p) => save_joint_positions(&chain, &recovered.positions, p),
        None => {
            let doc = JointPositionsDoc::from_positions(&chain, &recovered.positions);
            let text = serde_json::to_string_pretty(&doc).expect("documents serialize");
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

#[derive(Debug, Serialize)]
struct FScoreDoc {
    threshold: f64,
    f_score: f64,
}

#[derive(Debug, Serialize)]
struct ReportDoc {
    chamfer: f64,
    f_scores: Vec<FScoreDoc>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let a = load_mesh(&args.predicted)?;
    let b = load_mesh(&args.reference)?;
    let report = evaluate(&a.vertices, &b.vertices, &args.thresholds)?;
    let mut table = format!("metric\tvalue\nchamfer\t{}\n", report.chamfer);
    for (t, f) in &report.f_scores {
        table.push_str(&format!("f_score@{t}\t{f}\n"));
    }
    print!("{table}");
    if let Some(p) = &args.out {
        let doc = ReportDoc {
            chamfer: report.chamfer,
            f_scores: report
                .f_scores
                .iter()
                .map(|&(threshold, f_score)| FScoreDoc { threshold, f_score })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("documents serialize");
        text.push('\n');
        write_file(p, text.as_bytes())?;
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    // Validate before binding so a bad model never reaches a listener.
    let bundle = load_model(&args.model)?;
    let app = service::router(bundle, args.static_dir.as_deref());
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| io_error(&args.model, e))?;
    runtime
        .block_on(service::serve(app, addr))
        .map_err(|e| io_error(Path::new(&addr.to_string()), e))
}
