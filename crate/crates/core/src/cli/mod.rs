//! The `receiver-sim` command line: closed-form tables, Monte Carlo figure
//! reproduction to CSV, and SVG plotting.
//!
//! Exit status: 0 success, 2 invalid parameters, 3 I/O failure, 4 malformed
//! input file.

mod experiment;
mod output;
mod plot;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analytic::{
    dolinar_error, helstrom_bound, kennedy_error, sh_error, sh_error_at_optimum, sh_receiver_theta,
};
use crate::montecarlo::{sweep_with_threads, TrialConfig};

pub use experiment::{
    efficiency_grid, mean_photon_grid, phase_grid, Experiment, ExperimentSpec, Series, Settings,
    PHASE_PRESET_PHOTONS, PRESET_DELAY, PRESET_DURATION,
};
pub use output::{format_sig9, write_results, ResultRow, SIMULATE_HEADER};
pub use plot::{read_plot_data, render_svg, PlotData};

/// Environment variable capping the number of Monte Carlo worker threads.
pub const THREADS_ENV: &str = "RECEIVER_SIM_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Io(String),
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Io(_) => 3,
            Self::Parse(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) | Self::Io(m) | Self::Parse(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        Self::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "receiver-sim",
    version,
    about = "Binary coherent-state receiver simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print closed-form error probabilities as CSV
    Analytic(AnalyticArgs),
    /// Run a Monte Carlo experiment and write CSV
    Simulate(SimulateArgs),
    /// Render a simulation CSV as SVG
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    /// Prior probability of the pulse codeword (comma-separated list)
    #[arg(long, default_value = "0.5")]
    pub xi1: String,
    /// Mean photon number N̄ (comma-separated list)
    #[arg(long, default_value = "1")]
    pub nbar: String,
    /// Detector efficiency η (comma-separated list)
    #[arg(long, default_value = "1")]
    pub eta: String,
    /// Sasaki-Hirota rotation angle in radians (default: optimal)
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named experiment: fig1, fig2, fig3, fig4 or custom
    #[arg(long)]
    pub preset: Option<String>,
    /// key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    pub out: Option<String>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<String>,
    /// Trials per grid point and receiver
    #[arg(long)]
    pub trials: Option<String>,
    /// Receivers: kennedy, sasaki_hirota, dolinar or all (comma-separated)
    #[arg(long)]
    pub receiver: Option<String>,
    /// Prior probability of the pulse codeword
    #[arg(long)]
    pub xi1: Option<String>,
    /// Mean photon number N̄
    #[arg(long)]
    pub nbar: Option<String>,
    /// Detector efficiency η
    #[arg(long)]
    pub eta: Option<String>,
    /// Pulse duration T in seconds
    #[arg(long)]
    pub duration: Option<String>,
    /// Dark counts per second
    #[arg(long)]
    pub dark_rate: Option<String>,
    /// Detector dead time in seconds
    #[arg(long)]
    pub dead_time: Option<String>,
    /// Afterpulse probability per click
    #[arg(long)]
    pub afterpulse: Option<String>,
    /// Saturation count rate in counts per second (inf for none)
    #[arg(long)]
    pub max_count_rate: Option<String>,
    /// Feedback delay in seconds
    #[arg(long)]
    pub delay: Option<String>,
    /// Signal-to-local-oscillator phase error in radians
    #[arg(long, allow_hyphen_values = true)]
    pub phase_error: Option<String>,
    /// Local-oscillator amplitude cap as a multiple of the peak signal amplitude
    #[arg(long)]
    pub amplitude_cap: Option<String>,
    /// Swept variable: mean_photons, efficiency or phase_error
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated, strictly increasing sweep values
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

impl SimulateArgs {
    fn settings(&self) -> Settings {
        let mut s = Settings::default();
        let flags = [
            ("preset", &self.preset),
            ("out", &self.out),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("receiver", &self.receiver),
            ("xi1", &self.xi1),
            ("nbar", &self.nbar),
            ("eta", &self.eta),
            ("duration", &self.duration),
            ("dark-rate", &self.dark_rate),
            ("dead-time", &self.dead_time),
            ("afterpulse", &self.afterpulse),
            ("max-count-rate", &self.max_count_rate),
            ("delay", &self.delay),
            ("phase-error", &self.phase_error),
            ("amplitude-cap", &self.amplitude_cap),
            ("sweep", &self.sweep),
            ("grid", &self.grid),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v.clone());
            }
        }
        s
    }
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Simulation CSV to read
    pub input: PathBuf,
    /// SVG file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Logarithmic error-probability axis
    #[arg(long)]
    pub log_y: bool,
    /// Plot title
    #[arg(long)]
    pub title: Option<String>,
}

/// Closed-form table for every combination of the given parameters.
pub fn analytic_table(args: &AnalyticArgs) -> Result<String, CliError> {
    let xi1s = experiment::parse_list("xi1", &args.xi1)?;
    let nbars = experiment::parse_list("nbar", &args.nbar)?;
    let etas = experiment::parse_list("eta", &args.eta)?;
    let mut out = String::from("xi1,nbar,eta,theta,helstrom,kennedy,sasaki_hirota,dolinar\n");
    for &xi1 in &xi1s {
        let xi0 = 1.0 - xi1;
        for &nbar in &nbars {
            for &eta in &etas {
                let (theta, sh) = match args.theta {
                    Some(theta) => (theta, sh_error(xi0, xi1, nbar, eta, theta)?),
                    None => (
                        sh_receiver_theta(xi0, xi1, nbar)?,
                        sh_error_at_optimum(xi0, xi1, nbar, eta)?,
                    ),
                };
                out.push_str(&format!(
                    "{xi1:.6},{nbar:.6},{eta:.6},{theta:.6},{:.6},{:.6},{sh:.6},{:.6}\n",
                    helstrom_bound(xi0, xi1, nbar, eta)?,
                    kennedy_error(xi1, nbar, eta)?,
                    dolinar_error(xi0, xi1, nbar, eta)?,
                ));
            }
        }
    }
    Ok(out)
}

/// Worker-thread cap from the environment, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "{THREADS_ENV} must be a positive integer, got '{v}'"
                ))
            }),
        Err(_) => Ok(None),
    }
}

/// Runs every (series, receiver) sweep of an experiment.
pub fn run_experiment(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<Vec<ResultRow>, CliError> {
    let mut rows = Vec::new();
    for (index, series) in spec.series.iter().enumerate() {
        let sweeps = spec
            .receivers
            .iter()
            .map(|&receiver| {
                let base = TrialConfig::for_receiver(
                    receiver,
                    series.alphabet,
                    series.detector,
                    series.feedback,
                    spec.trials,
                    spec.sweep_seed(index, receiver),
                );
                sweep_with_threads(&base, series.variable, &series.grid, threads)
            })
            .collect::<crate::Result<Vec<_>>>()?;
        for k in 0..series.grid.len() {
            for s in &sweeps {
                let (value, estimate) = s.points[k];
                rows.push(ResultRow {
                    sweep_var: series.label.clone(),
                    value,
                    receiver: s.receiver,
                    estimate,
                });
            }
        }
    }
    Ok(rows)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut settings = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            Settings::parse(&text)?
        }
        None => Settings::default(),
    };
    settings.overlay(&args.settings());
    let spec = ExperimentSpec::from_settings(&settings)?;
    let path = spec
        .out
        .clone()
        .ok_or_else(|| CliError::Validation("an output path is required (--out)".into()))?;
    let file = std::fs::File::create(&path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    let rows = run_experiment(&spec, thread_cap()?)?;
    write_results(std::io::BufWriter::new(file), &rows)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn plot(args: &PlotArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", args.input.display())))?;
    let data = read_plot_data(&text)?;
    let svg = render_svg(&data, args.log_y, args.title.as_deref());
    std::fs::write(&args.out, svg)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", args.out.display())))
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analytic(args) => {
            let table = analytic_table(args)?;
            std::io::stdout()
                .write_all(table.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        }
        Command::Simulate(args) => simulate(args),
        Command::Plot(args) => plot(args),
    }
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
