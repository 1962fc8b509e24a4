use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qmloc::coeff::{attach_coefficient, check_quasi_monotonicity};
use qmloc::counterexamples::{checkerboard_mesh, fig1_meshes, hexagon_mesh, Fig1Layout};
use qmloc::field::SmoothTarget;
use qmloc::harness::{
    emit_report, estimate_inequality_constants, run, ExperimentConfig, ExperimentKind, OutputFormat, Pattern,
};
use qmloc::mesh::MeshFile;
use qmloc::Error;

#[derive(Parser)]
#[command(name = "qmloc", version, about = "Localized best-approximation experiments for weighted energy norms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Output {
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Polynomial degree.
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Emit one CSV row per locus instead of the summary.
    #[arg(long)]
    loci: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Hexagon,
    Checkerboard,
    Fig1Left,
    Fig1Right,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the coefficient of a mesh file; exit code 3 if not quasi-monotone.
    QmCheck { mesh: PathBuf },
    /// Hexagon sweep over eps.
    Hexagon {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        eps: Vec<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Checkerboard star sweep over N.
    Stars {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        n: Vec<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Contrast sweep on a quasi-monotone pattern.
    Alpha {
        #[arg(long, default_value = "fig1-left")]
        pattern: String,
        #[arg(long, value_delimiter = ',', default_value = "1,1e-2,1e-4,1e-6")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "sin-sin,exp,poly-cos")]
        targets: Vec<String>,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Reaction-diffusion sweep over contrast and reaction weight.
    Rd {
        #[arg(long, default_value = "fig1-left")]
        pattern: String,
        #[arg(long, value_delimiter = ',', default_value = "1,1e-4")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1e-4,1,1e4")]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "sin-sin,exp,poly-cos")]
        targets: Vec<String>,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Scaling, trace and Poincaré constants on refined unit squares.
    Constants {
        #[arg(long, default_value_t = 4)]
        max_refinements: usize,
    },
    /// Write a built-in mesh with its coefficient as JSON.
    Export {
        #[arg(value_enum)]
        family: Family,
        /// eps for the hexagon, N for the checkerboard, M for the figure layouts.
        #[arg(long)]
        param: f64,
        #[arg(long, default_value_t = 0)]
        refinements: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverFailure { .. } | Error::QuadratureFailure { .. } | Error::SingularMassMatrix(_) => 2,
        _ => 1,
    }
}

fn parse_targets(names: &[String]) -> Result<Vec<SmoothTarget>, Error> {
    names
        .iter()
        .map(|n| SmoothTarget::parse(n).ok_or_else(|| Error::InvalidInput(format!("unknown target {n}"))))
        .collect()
}

fn parse_pattern(name: &str) -> Result<Pattern, Error> {
    Pattern::parse(name).ok_or_else(|| Error::InvalidInput(format!("unknown pattern {name}")))
}

fn sweep(mut cfg: ExperimentConfig, out: Output) -> Result<String, Error> {
    cfg.degree = out.ell;
    cfg.format = match out.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    cfg.output = out.output.clone();
    let result = run(&cfg)?;
    if out.loci {
        let text = result.loci_csv();
        if let Some(p) = &out.output {
            std::fs::write(p, &text).map_err(|e| Error::IoFailure(format!("{}: {e}", p.display())))?;
        }
        return Ok(text);
    }
    emit_report(&result, cfg.format, out.output.as_deref())
}

fn execute(cli: Cli) -> Result<(String, u8), Error> {
    let text = match cli.command {
        Command::QmCheck { mesh } => {
            let file = MeshFile::load(&mesh)?;
            let tri = file.triangulation()?;
            let values = file
                .coefficient
                .clone()
                .ok_or_else(|| Error::InvalidInput("mesh file has no coefficient".into()))?;
            let a = attach_coefficient(&tri, values)?;
            let report = check_quasi_monotonicity(&tri, &a);
            let code = if report.quasi_monotone { 0 } else { 3 };
            return Ok((serde_json::to_string_pretty(&report)?, code));
        }
        Command::Hexagon { eps, out } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Hexagon)?;
            cfg.eps = eps;
            sweep(cfg, out)?
        }
        Command::Stars { n, out } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Stars)?;
            cfg.n = n;
            sweep(cfg, out)?
        }
        Command::Alpha { pattern, alphas, targets, refinements, out } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::AlphaRobustness)?;
            cfg.pattern = parse_pattern(&pattern)?;
            cfg.alphas = alphas;
            cfg.targets = parse_targets(&targets)?;
            cfg.refinements = refinements;
            sweep(cfg, out)?
        }
        Command::Rd { pattern, alphas, betas, targets, refinements, out } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::ReactionDiffusion)?;
            cfg.pattern = parse_pattern(&pattern)?;
            cfg.alphas = alphas;
            cfg.betas = betas;
            cfg.targets = parse_targets(&targets)?;
            cfg.refinements = refinements;
            sweep(cfg, out)?
        }
        Command::Constants { max_refinements } => {
            serde_json::to_string_pretty(&estimate_inequality_constants(max_refinements)?)?
        }
        Command::Export { family, param, refinements } => {
            let (tri, a) = match family {
                Family::Hexagon => hexagon_mesh(param)?,
                Family::Checkerboard => {
                    if param.fract() != 0.0 || param < 1.0 {
                        return Err(Error::ParameterOutOfRange(format!("N = {param}")));
                    }
                    checkerboard_mesh(param as usize)?
                }
                Family::Fig1Left => fig1_meshes(Fig1Layout::Left, param, refinements)?,
                Family::Fig1Right => fig1_meshes(Fig1Layout::Right, param, refinements)?,
            };
            tri.to_file(Some(a.values())).to_json()
        }
    };
    Ok((text, 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok((text, code)) => {
            println!("{}", text.trim_end());
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("qmloc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
