use bog_lab_cli::config::{self, Command, ExperimentConfig};
use bog_lab_cli::{configure_threads, run, CliError};
use clap::Parser;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical experiments on divergence solvers and Liouville-type criteria.
///
/// Values come from built-in defaults, then `--config`, then flags.
/// Lists are comma separated; exponent grids also accept `start:end:step`.
#[derive(Debug, Parser)]
#[command(name = "bog-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain kind, e.g. annulus3d, halfannulus3d, cylindershell, slabshell.
    #[arg(long)]
    kind: Option<String>,
    /// Inner radii.
    #[arg(long = "R", allow_hyphen_values = true)]
    radii: Option<String>,
    /// Radius ratios; `auto` gives 1 + 8 sigma for covering-stats.
    #[arg(long = "L", allow_hyphen_values = true)]
    ratios: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Cutoff width or covering ball radius.
    #[arg(long)]
    sigma: Option<String>,
    /// Cells per axis, one value or three.
    #[arg(long)]
    resolution: Option<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Random points for coverage statistics.
    #[arg(long)]
    samples: Option<String>,
    /// Seeded pressures for pressure-check.
    #[arg(long)]
    count: Option<String>,
    /// Random candidates per pressure estimator.
    #[arg(long)]
    probes: Option<String>,
    /// Exact field: zero, constant, shear, rigid_rotation, point_source.
    #[arg(long)]
    solution: Option<String>,
    /// ratio, thin, slab_power or slab_integral.
    #[arg(long)]
    criterion: Option<String>,
    /// whole, half or slab.
    #[arg(long)]
    region: Option<String>,
    /// spherical or cylindrical.
    #[arg(long)]
    variant: Option<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("kind", &self.kind),
            ("R", &self.radii),
            ("L", &self.ratios),
            ("q", &self.q),
            ("delta", &self.delta),
            ("alpha", &self.alpha),
            ("sigma", &self.sigma),
            ("resolution", &self.resolution),
            ("output", &self.output),
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("count", &self.count),
            ("probes", &self.probes),
            ("solution", &self.solution),
            ("criterion", &self.criterion),
            ("region", &self.region),
            ("variant", &self.variant),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool, CliError> {
        configure_threads()?;
        let file = match &cli.config {
            Some(path) => config::read_file(path).map_err(CliError::Config)?,
            None => BTreeMap::new(),
        };
        let config = ExperimentConfig::resolve(cli.command, file, cli.flags()).map_err(CliError::Config)?;
        let artifacts = run(&config)?;
        println!("{}", artifacts.csv.display());
        println!("{}", artifacts.summary.display());
        Ok(artifacts.passed)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bog-lab: one or more assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("bog-lab: {e}");
            ExitCode::from(2)
        }
    }
}
