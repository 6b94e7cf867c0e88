use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsp_core::exec::{with_jobs, Execution};
use hsp_core::io::to_json_bytes;
use hsp_core::pipeline::{
    cmd_fit, cmd_make_fixture, cmd_masks, cmd_metrics, cmd_render_overlay, cmd_retarget, Context, MasksArgs,
    PipelineConfig, RetargetArgs,
};
use hsp_core::Result;

/// Landmark retargeting and mask preparation for head-swap pipelines.
#[derive(Parser, Debug)]
#[command(name = "hsp", version)]
struct Cli {
    /// JSON pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized stages (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Check output invariants before writing anything.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the morphable model to every frame of a landmark file.
    Fit {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transfer a driving sequence's expressions onto a reference face.
    Retarget {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        driving: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build block, cloth and hair masks.
    Masks(MaskCli),
    /// Draw landmarks as dots, one image per frame.
    RenderOverlay {
        #[arg(long)]
        landmarks: PathBuf,
        /// Directory holding frame_00000.png, frame_00001.png, ...
        #[arg(long)]
        image_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic fixture with known ground truth.
    MakeFixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        frames: usize,
    },
    /// Pose and expression error between two sequences.
    Metrics {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        per_frame: bool,
    },
}

#[derive(Args, Debug)]
struct MaskCli {
    #[arg(long)]
    foreground: PathBuf,
    #[arg(long)]
    cloth: PathBuf,
    #[arg(long)]
    hair_donor: Option<PathBuf>,
    #[arg(long)]
    donor_landmarks: Option<PathBuf>,
    #[arg(long)]
    target_landmarks: Option<PathBuf>,
    #[arg(long)]
    shoulders: Option<PathBuf>,
    #[arg(long)]
    frame: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let jobs = cli.jobs.unwrap_or(0);
    let ctx = Context {
        config,
        seed: cli.seed,
        exec: if jobs == 1 {
            Execution::Sequential
        } else {
            Execution::default()
        },
        verify: cli.verify,
    };
    let report = with_jobs(jobs, || match cli.command {
        Command::Fit { model, landmarks, out } => cmd_fit(&ctx, model.as_deref(), &landmarks, &out).map(|_| None),
        Command::Retarget {
            model,
            reference,
            driving,
            out_dir,
        } => {
            let args = RetargetArgs {
                model,
                reference,
                driving,
                out_dir,
            };
            cmd_retarget(&ctx, &args).map(|s| Some(to_json_bytes(&s)))
        }
        Command::Masks(m) => {
            let args = MasksArgs {
                foreground: m.foreground,
                cloth: m.cloth,
                hair_donor: m.hair_donor,
                donor_landmarks: m.donor_landmarks,
                target_landmarks: m.target_landmarks,
                shoulders: m.shoulders,
                frame: m.frame,
                background: m.background,
                out_dir: m.out_dir,
            };
            cmd_masks(&ctx, &args).map(|s| Some(to_json_bytes(&s)))
        }
        Command::RenderOverlay {
            landmarks,
            image_dir,
            out_dir,
        } => cmd_render_overlay(&ctx, &landmarks, image_dir.as_deref(), &out_dir)
            .map(|n| Some(format!("{n} overlays\n").into_bytes())),
        Command::MakeFixture { out_dir, frames } => {
            let seed = ctx.config.require_seed(ctx.seed)?;
            cmd_make_fixture(&out_dir, seed, frames).map(|_| None)
        }
        Command::Metrics {
            model,
            a,
            b,
            out,
            per_frame,
        } => cmd_metrics(&ctx, model.as_deref(), &a, &b, out.as_deref(), per_frame).map(|r| Some(to_json_bytes(&r))),
    })?;
    if let Some(bytes) = report {
        print!("{}", String::from_utf8_lossy(&bytes));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HSP_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
