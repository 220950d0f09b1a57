use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use quakesim::pipeline::{self, Overrides, Pipeline, PipelineError, RunConfig};
use quakesim::prompt::Section;
use quakesim::scenario::RadialScenario;

/// Simulate perceived earthquake intensity with a language model and score
/// it against felt reports.
#[derive(Parser)]
#[command(name = "quakesim", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw sample points inside each zone.
    Sample(StepArgs),
    /// Attach hazard, building, census and imagery features to each point.
    Fuse(StepArgs),
    /// Render prompts and collect model ratings.
    Simulate(StepArgs),
    /// Aggregate predictions per zone and score them.
    Evaluate(StepArgs),
    /// Term statistics of the reasoning text and the distance scatter.
    Analyze(StepArgs),
    /// Choropleth GeoJSON, metrics and run manifest.
    Export(StepArgs),
    /// All steps in order.
    Run(StepArgs),
    /// Run several configurations and print one comparison table.
    Sweep {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic scenario (inputs plus config.json) to a directory.
    Demo {
        #[arg(long, default_value = "demo")]
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        zones: usize,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct StepArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Recompute even when outputs are up to date.
    #[arg(long)]
    force: bool,
    /// Drop a prompt section (geospatial, building, socioeconomic, visual).
    #[arg(long, value_parser = parse_section)]
    ablate: Vec<Section>,
    /// Replace state and city names in prompts.
    #[arg(long)]
    redact_location: bool,
    /// Include the MMI scale descriptions in prompts.
    #[arg(long)]
    icl: bool,
    /// Number of retrieved reference samples.
    #[arg(long)]
    rag_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            ablate: self.ablate.clone(),
            redact_location: self.redact_location,
            icl: self.icl,
            rag_k: self.rag_k,
            seed: self.seed,
        }
    }
}

fn parse_section(s: &str) -> Result<Section, String> {
    Section::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Section::ALL.iter().map(|s| s.name()).collect();
        format!("unknown section {s:?}; expected one of {}", names.join(", "))
    })
}

fn load_config(path: &PathBuf, common: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(path).map_err(PipelineError::Config)?;
    cfg.apply(&common.overrides());
    Ok(cfg)
}

fn step(name: &str, args: &StepArgs) -> Result<(), PipelineError> {
    let p = Pipeline::new(load_config(&args.config, &args.common)?, args.common.force)?;
    let outcomes = match name {
        "run" => p.cmd_run()?,
        _ => vec![p.run_step(name)?],
    };
    pipeline::print_outcomes(std::io::stdout().lock(), &outcomes).map_err(|source| PipelineError::Io {
        path: "<stdout>".into(),
        source,
    })?;
    if matches!(name, "run" | "evaluate" | "export") {
        print!("{}", p.load_report()?.to_text_table());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let r = match &cli.cmd {
        Cmd::Sample(a) => step("sample", a),
        Cmd::Fuse(a) => step("fuse", a),
        Cmd::Simulate(a) => step("simulate", a),
        Cmd::Evaluate(a) => step("evaluate", a),
        Cmd::Analyze(a) => step("analyze", a),
        Cmd::Export(a) => step("export", a),
        Cmd::Run(a) => step("run", a),
        Cmd::Sweep { configs, common } => configs
            .iter()
            .map(|c| load_config(c, common))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|cfgs| pipeline::sweep(cfgs, common.force))
            .map(|reports| print!("{}", pipeline::sweep_table(&reports))),
        Cmd::Demo { dir, zones, points, seed } => {
            let s = RadialScenario {
                n_zones: *zones,
                points_per_zone: *points,
                seed: *seed,
                ..Default::default()
            };
            let path = s.write(dir).with_context(|| format!("writing scenario to {}", dir.display()))?;
            println!("{}", path.display());
            Ok(())
        }
    };
    r.map_err(anyhow::Error::from)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>() {
        Some(e) => e.exit_code() as u8,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
