use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdae_ivs_cli::{cmd_eval, cmd_export_patterns, cmd_ivs, cmd_reconstruct, cmd_run, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sdae-ivs", version, about = "Importance-based variable selection for stacked denoising auto-encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Reject hyper-parameters outside the standard candidate grids.
    #[arg(long)]
    paper_grid: bool,
    /// Output directory; defaults to the config's `out_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train, fine-tune and evaluate SDAE and SDAE-IVS.
    Run(Common),
    /// Run variable selection on the raw input only.
    Ivs(Common),
    /// Evaluate a serialized stack on the configured splits.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Render test inputs and their reconstructions through each layer.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Split a layer's extractors into task-relevant and task-irrelevant sets.
    ExportPatterns {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        layer: usize,
    },
}

fn prepare(c: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if c.paper_grid {
        cfg.check_paper_grid()?;
    }
    let out = match (&c.out, &cfg.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn print_json<S: serde::Serialize>(v: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = prepare(&c)?;
            let report = cmd_run(&cfg, &out)?;
            print!("{}", report.table_csv());
            eprintln!("wrote {} ({:.1}s)", out.join("report.json").display(), report.wall_seconds);
        }
        Command::Ivs(c) => {
            let (cfg, out) = prepare(&c)?;
            let s = cmd_ivs(&cfg, &out)?;
            println!("kept {} of {} variables ({:?})", s.final_popcount, s.input_width, s.stop);
        }
        Command::Eval { common, model } => {
            let (cfg, out) = prepare(&common)?;
            let r = cmd_eval(&cfg, &model)?;
            let path = out.join("eval.json");
            let text = serde_json::to_string_pretty(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            print_json(&r)?;
        }
        Command::Reconstruct { common, model } => {
            let (cfg, out) = prepare(&common)?;
            let rel = cmd_reconstruct(&cfg, &model, &out)?;
            println!("{}", Path::new(&out).join(rel).display());
        }
        Command::ExportPatterns { common, model, layer } => {
            let (cfg, out) = prepare(&common)?;
            print_json(&cmd_export_patterns(&cfg, &model, layer, &out)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sdae-ivs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
