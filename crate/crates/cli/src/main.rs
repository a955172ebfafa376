use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slowlight::checks::{outcomes_table, run_checks};
use slowlight::config::{parse_config, RunConfig};
use slowlight::csv::Table;
use slowlight::harness::{
    calibrate, model_hash, run_delay_measurement, run_intensity_scan, run_phase_resolved, run_spectrum_scan,
};
use slowlight::spectrum::symmetric_grid;
use slowlight::{Error, Result};

/// EIT and slow-light simulator for an inhomogeneously broadened Λ medium.
#[derive(Parser, Debug)]
#[command(name = "slowlight", version)]
struct Cli {
    /// JSON configuration; every key optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the noisy-fit Monte Carlo in `check`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the Rabi calibration to the reference EIT width.
    Calibrate,
    /// Absorption spectrum with and without coupling.
    Spectrum {
        /// Emit the lock-in phase-resolved spectrum instead.
        #[arg(long)]
        phase_resolved: bool,
        /// Reference phase (rad) for the phase-resolved spectrum; defaults to
        /// the phase that suppresses the background.
        #[arg(long, requires = "phase_resolved", allow_hyphen_values = true)]
        phase_ref: Option<f64>,
    },
    /// Modulation-phase group delay at the configured coupling intensity.
    Delay,
    /// EIT amplitude, width, delay and velocity against coupling intensity.
    IntensityScan,
    /// Run the invariant suite.
    Check,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_config(&text)
        }
    }
}

fn emit(mut table: Table, config: &RunConfig, out: Option<&Path>) -> Result<()> {
    table.meta("config", config.to_compact_json());
    match out {
        Some(path) => table.write(path),
        None => std::io::stdout().write_all(&table.to_bytes()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli.config.as_deref())?;
    let model = config.model();
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Calibrate => {
            let result = calibrate(&config.targets(), &model, &config.spectrum_settings())?;
            eprintln!(
                "rabi_calibration = {:e} (rad/s)/sqrt(W/cm^2), optical depth = {:.6}, FWHM = {:.1} Hz, peak transparency = {:.4}",
                result.rabi_calibration, result.background_optical_depth, result.achieved_fwhm, result.peak_transparency
            );
            let mut table = result.to_table();
            table.meta("model_hash", model_hash(&result.apply(&model)));
            emit(table, &config, out)?;
        }
        Command::Spectrum { phase_resolved, phase_ref } => {
            if *phase_resolved {
                let s = &config.spectrum;
                let carriers = symmetric_grid(s.phase_resolved_half_span, s.phase_resolved_points)?;
                let spectrum = run_phase_resolved(&model, &carriers, s.phase_resolved_modulation, &config.delay_settings())?;
                if spectrum.separation.non_separable {
                    eprintln!("warning: background and peak suppression phases coincide within 1 mrad");
                }
                let phase = phase_ref.unwrap_or(spectrum.separation.background.phase);
                let mut table = spectrum.to_table(phase);
                table.meta("model_hash", model_hash(&model));
                emit(table, &config, out)?;
            } else {
                let grid = config.spectrum_settings().grid_for(&model)?;
                emit(run_spectrum_scan(&model, &grid)?, &config, out)?;
            }
        }
        Command::Delay => {
            let m = run_delay_measurement(&model, &config.modulation.frequencies, &config.delay_settings())?;
            eprintln!("delay = {:e} s, r^2 = {:.6}", m.delay, m.fit.r_squared);
            let mut table = m.to_table();
            table.meta("model_hash", model_hash(&model));
            emit(table, &config, out)?;
        }
        Command::IntensityScan => {
            let scan = run_intensity_scan(&model, &config.scan.intensities, &config.spectrum_settings())?;
            emit(scan.to_table(), &config, out)?;
        }
        Command::Check => {
            let outcomes = run_checks(&config, cli.seed);
            for o in &outcomes {
                eprintln!(
                    "{} {:<26} {:>12.4e} (bound {:.1e})  {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.value,
                    o.bound,
                    o.detail
                );
            }
            let mut table = outcomes_table(&outcomes);
            table.meta("seed", cli.seed.to_string());
            emit(table, &config, out)?;
            return Ok(outcomes.iter().all(|o| o.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
