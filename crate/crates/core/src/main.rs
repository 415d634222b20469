use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geotrack::io;
use geotrack::manifold::ManifoldKind;
use geotrack::metric::Model;
use geotrack::pipeline::{
    run_pipeline, CostSource, Pipeline, PipelineConfig, PixelPose, COST_FILE, DISTANCE_FILE,
};
use geotrack::{Error, Result};

/// Geodesic vessel tracking on M2 and W2.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift the image to an M2 vesselness volume.
    Lift(ConfigArgs),
    /// Build the cost volume on the run's manifold.
    Cost(ConfigArgs),
    /// Solve the eikonal equation on the saved cost volume.
    Solve(ConfigArgs),
    /// Backtrack every tip on the saved distance map.
    Track(ConfigArgs),
    /// Draw the saved tracks over the input image.
    Plot(ConfigArgs),
    /// All stages in order, plus a JSON run report.
    Run(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; the flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// m2 | w2
    #[arg(long, value_parser = parse_manifold)]
    manifold: Option<ManifoldKind>,
    /// sr | forward
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// crossing_preserving | frangi_r2 | external
    #[arg(long)]
    source: Option<CostSource>,
    /// Array file for the external cost source.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_alpha: Option<usize>,
    #[arg(long)]
    n_beta: Option<usize>,
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Seed pose `col,row,theta_deg`.
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<PixelPose>,
    /// Tip pose `col,row,theta_deg`; repeat for several tips. Replaces the
    /// configured tips.
    #[arg(long, allow_hyphen_values = true)]
    tip: Vec<PixelPose>,
}

fn parse_manifold(s: &str) -> std::result::Result<ManifoldKind, String> {
    match s {
        "m2" => Ok(ManifoldKind::M2),
        "w2" => Ok(ManifoldKind::W2),
        _ => Err(format!("expected m2 or w2, got `{s}`")),
    }
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    match s {
        "sr" => Ok(Model::SubRiemannian),
        "forward" => Ok(Model::ForwardGear),
        _ => Err(format!("expected sr or forward, got `{s}`")),
    }
}

impl ConfigArgs {
    fn resolve(self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml_file(path)?,
            None => {
                let missing =
                    |what: &str| Error::BadConfig(format!("--{what} is required without --config"));
                PipelineConfig::new(
                    self.image.clone().ok_or_else(|| missing("image"))?,
                    self.output.clone().ok_or_else(|| missing("output"))?,
                    self.seed.ok_or_else(|| missing("seed"))?,
                )
            }
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set! {
            image => cfg.image,
            output => cfg.output,
            manifold => cfg.manifold,
            model => cfg.model,
            xi => cfg.xi,
            eta => cfg.eta,
            source => cfg.cost.source,
            lambda => cfg.cost.lambda,
            p => cfg.cost.p,
            a => cfg.camera.a,
            c => cfg.camera.c,
            n_theta => cfg.grid.n_theta,
            n_alpha => cfg.grid.n_alpha,
            n_beta => cfg.grid.n_beta,
            n_phi => cfg.grid.n_phi,
            tol => cfg.solver.tol,
            seed => cfg.seed,
        }
        if self.input.is_some() {
            cfg.cost.external = self.input;
        }
        if self.epsilon.is_some() {
            cfg.solver.epsilon = self.epsilon;
        }
        if self.n_max.is_some() {
            cfg.solver.n_max = self.n_max;
        }
        if !self.tip.is_empty() {
            cfg.tips = self.tip;
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let report = run_pipeline(args.resolve()?)?;
            for t in &report.tracks {
                println!(
                    "track {:02}: {} (length {:.4}, W {:.4}, cusps {})",
                    t.index,
                    t.status,
                    t.finsler_length,
                    t.w_tip,
                    t.cusps.len()
                );
            }
            if let Some(s) = &report.solver {
                println!(
                    "solver: {} iterations, converged {}, residual {:.3e}",
                    s.iterations, s.converged, s.residual
                );
            }
            Ok(report.converged)
        }
        Command::Lift(args) => {
            let pipe = Pipeline::new(args.resolve()?)?;
            pipe.lift()?;
            Ok(true)
        }
        Command::Cost(args) => {
            let pipe = Pipeline::new(args.resolve()?)?;
            let (_, summary) = pipe.cost(None)?;
            println!(
                "cost in [{:.4e}, {:.4e}], coverage {:.3}",
                summary.min, summary.max, summary.coverage
            );
            Ok(true)
        }
        Command::Solve(args) => {
            let pipe = Pipeline::new(args.resolve()?)?;
            let cost =
                io::read_cost(&pipe.output_path(COST_FILE)).map_err(|e| e.in_stage("solve"))?;
            let map = pipe.solve(&cost, None)?;
            let report = map.report.expect("solver attaches a report");
            println!(
                "{} iterations, converged {}, residual {:.3e}",
                report.iterations, report.converged, report.residual
            );
            Ok(report.converged)
        }
        Command::Track(args) => {
            let pipe = Pipeline::new(args.resolve()?)?;
            let read = || -> Result<_> {
                Ok((
                    io::read_cost(&pipe.output_path(COST_FILE))?,
                    io::read_distance(&pipe.output_path(DISTANCE_FILE))?,
                ))
            };
            let (cost, map) = read().map_err(|e| e.in_stage("track"))?;
            let set = pipe.track(&map, &cost, None)?;
            for s in &set.summaries {
                println!(
                    "track {:02}: {} (cusps {})",
                    s.index,
                    s.status,
                    s.cusps.len()
                );
            }
            Ok(set.all_reached())
        }
        Command::Plot(args) => {
            let pipe = Pipeline::new(args.resolve()?)?;
            let tracks = pipe.read_tracks().map_err(|e| e.in_stage("plot"))?;
            let out = pipe.plot(&tracks)?;
            println!("{} ({} tracks)", out.display(), tracks.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: not every stage converged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
