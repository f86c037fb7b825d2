//! `subheat`: analyze systems, evaluate distances, volumes and kernels, and run the
//! verification suites. Exit codes: 0 pass, 2 configuration error, 3 numerical
//! failure, 4 property violation.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subheat::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "subheat", version, about = "Heat kernels of homogeneous Hormander sums of squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// System config file, or a catalog name (euclid2, grushin, grushin3).
    #[arg(value_name = "SYSTEM")]
    pub system_arg: Option<String>,
    /// Same as the positional SYSTEM.
    #[arg(long = "system", value_name = "PATH")]
    pub system: Option<String>,
    /// Group lifting config; defaults to `<stem>.group.json` next to the system file, then the catalog.
    #[arg(long, value_name = "PATH")]
    pub group: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Sample count of the check (its meaning depends on the subcommand).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output directory for the JSON report and CSV tables.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "NAME=VAL")]
    pub tol: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lie structure, dimensions and the exact homogeneity identities.
    Analyze(Common),
    /// Carnot-Caratheodory distances between point pairs.
    Dist {
        #[command(flatten)]
        common: Common,
        /// Start point `a,b,..`, repeatable; a single start is paired with every target.
        #[arg(long, allow_hyphen_values = true, required = true)]
        x: Vec<String>,
        /// Target point, repeatable.
        #[arg(long, allow_hyphen_values = true, required = true)]
        y: Vec<String>,
    },
    /// Monte Carlo ball volumes.
    Volume {
        #[command(flatten)]
        common: Common,
        /// Center, repeatable; defaults to the origin.
        #[arg(long, allow_hyphen_values = true)]
        x: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
    },
    /// Saturated heat kernel values.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
        t: Vec<f64>,
        /// Defaults to the origin.
        #[arg(long, allow_hyphen_values = true)]
        x: Vec<String>,
        /// Defaults to the origin.
        #[arg(long, allow_hyphen_values = true)]
        y: Vec<String>,
        /// Paths of the Monte Carlo group kernel, when the group needs one.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Property suites.
    Verify {
        #[arg(value_enum)]
        check: Check,
        #[command(flatten)]
        common: Common,
        /// Base point of the volume-transition and slice checks.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Radius of the slice check.
        #[arg(long)]
        rho: Option<f64>,
        /// Dilation factor of the stability checks.
        #[arg(long)]
        lambda: Option<f64>,
        /// Monte Carlo paths for the cross-oracle check.
        #[arg(long)]
        paths: Option<usize>,
        /// θ of the equivalent-Gaussian check.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
    },
    /// Solve the Cauchy problem for an initial datum.
    Cauchy {
        #[command(flatten)]
        common: Common,
        /// Datum JSON, inline or as a file path, e.g. `{"type":"exp-power","alpha":1.5,"mu":0.1}`.
        #[arg(long)]
        datum: String,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        t: Vec<f64>,
        /// Defaults to the origin.
        #[arg(long, allow_hyphen_values = true)]
        x: Vec<String>,
        /// Two-sided envelope constant; fitted on `--samples` pairs when a quadratic datum needs it.
        #[arg(long)]
        envelope_rho: Option<f64>,
        /// Halving steps for the caloric residual at each (t, x), coarsest first.
        #[arg(long, value_delimiter = ',')]
        residual_steps: Vec<f64>,
    },
    /// Harnack ratios of a dilated kernel-column family.
    Harnack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        r: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        lambda: f64,
        /// Cylinder center at unit scale; defaults to the origin.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Field derivatives X_i, 1-based, outermost first.
        #[arg(long, value_delimiter = ',')]
        fields: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        time_order: u32,
        #[arg(long, default_value_t = 5)]
        slices: usize,
        #[arg(long, default_value_t = 60)]
        spatial: usize,
        /// Use the constant solution with this value instead of a kernel column.
        #[arg(long)]
        constant: Option<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Homogeneity,
    Metric,
    Volume,
    Group,
    CrossOracle,
    Kernel,
    Gaussian,
    Derivative,
    Saturation,
    Equivalent,
    Slices,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Homogeneity => "homogeneity",
            Check::Metric => "metric",
            Check::Volume => "volume",
            Check::Group => "group",
            Check::CrossOracle => "cross-oracle",
            Check::Kernel => "kernel",
            Check::Gaussian => "gaussian",
            Check::Derivative => "derivative",
            Check::Saturation => "saturation",
            Check::Equivalent => "equivalent",
            Check::Slices => "slices",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
