//! Command-line driver: turns an [`ExperimentConfig`] into CSV/JSON outputs.

pub mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use oam_thermo::io::{
    write_band_csv, write_calibration_csv, write_fit_report_json, write_kernel_csv, write_observations_csv,
    write_work_csv,
};
use oam_thermo::optics::{calibration_profiles, simulate_observations};
use oam_thermo::oscillator::thermal_distribution;
use oam_thermo::process::demon_kernel;
use oam_thermo::reconstruct::fit_transition_matrix;
use oam_thermo::stats::{fluctuation_curve, monte_carlo_band, work_distribution};
use oam_thermo::{
    CalibrationSet, FitReport, FluctuationResult, McConfig, Observations, TransitionKernel, UncertaintyBand,
};
use serde::Serialize;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<oam_thermo::Error> for CliError {
    fn from(e: oam_thermo::Error) -> Self {
        use oam_thermo::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Json(_) => CliError::Io(e.to_string()),
            E::NonConvergence(_) | E::UnderdeterminedFit(_) => CliError::Numerical(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Calibrate,
    Simulate,
    Reconstruct,
    WorkStats,
    Demon,
    McBand,
    Pipeline,
}

/// Writes files into one output directory and remembers what it wrote.
struct Outputs<'a> {
    dir: &'a Path,
    quiet: bool,
    written: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(BufWriter<File>) -> oam_thermo::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        f(BufWriter::new(file))?;
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |mut w| {
            serde_json::to_writer_pretty(&mut w, value)?;
            std::io::Write::write_all(&mut w, b"\n")?;
            Ok(())
        })
    }

    fn curve(&mut self, name: &str, curve: &[FluctuationResult]) -> Result<(), CliError> {
        self.write(name, |w| write_band_csv(&UncertaintyBand::from_curve(curve), w))
    }
}

#[derive(Debug, Serialize)]
struct WorkSummary {
    beta_hw: f64,
    mean_work_theory: f64,
    mean_work: f64,
    exp_avg_theory: f64,
    exp_avg: f64,
}

#[derive(Debug, Serialize)]
struct BandSummary {
    trials: usize,
    excluded: usize,
    seed: u64,
    generator: &'static str,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: Outputs<'a>,
}

impl Run<'_> {
    fn calibration(&self) -> Result<CalibrationSet, CliError> {
        Ok(calibration_profiles(&self.cfg.geometry)?)
    }

    fn process(&self) -> Result<TransitionKernel, CliError> {
        Ok(self.cfg.process.kernel(self.cfg.input_range())?)
    }

    fn observations(&self, calib: &CalibrationSet) -> Result<Observations, CliError> {
        Ok(simulate_observations(&self.process()?, calib, &self.cfg.noise, self.cfg.seed)?)
    }

    fn fit(&self, calib: &CalibrationSet) -> Result<FitReport, CliError> {
        let obs = self.observations(calib)?;
        Ok(fit_transition_matrix(calib, &obs, &self.cfg.solver)?)
    }

    fn curve(&self, kernel: &TransitionKernel, information: f64) -> Result<Vec<FluctuationResult>, CliError> {
        let grid = self.cfg.beta_grid.values();
        Ok(fluctuation_curve(kernel, self.cfg.cutoff, &grid, self.cfg.process.delta_f, information)?)
    }

    fn calibrate(&mut self) -> Result<(), CliError> {
        let calib = self.calibration()?;
        self.out.write("calibration.csv", |w| write_calibration_csv(&calib, w))
    }

    fn simulate(&mut self) -> Result<(), CliError> {
        let obs = self.observations(&self.calibration()?)?;
        self.out.write("observations.csv", |w| write_observations_csv(&obs, w))
    }

    /// Writes the fitted kernel even when the solver did not converge.
    fn reconstruct(&mut self) -> Result<(), CliError> {
        let fit = self.fit(&self.calibration()?)?;
        self.out.write("kernel.csv", |w| write_kernel_csv(&fit.kernel, w))?;
        self.out.write("fit_report.json", |w| write_fit_report_json(&fit, w))?;
        if !fit.converged {
            return Err(CliError::Numerical(format!(
                "reconstruction did not converge within {} iterations",
                self.cfg.solver.max_iter
            )));
        }
        Ok(())
    }

    fn work_stats(&mut self) -> Result<(), CliError> {
        let beta = self.cfg.work_beta;
        let ideal = self.process()?;
        let fit = self.fit(&self.calibration()?)?;
        let ens = thermal_distribution(beta, self.cfg.cutoff)?;
        let dist_theory = work_distribution(&ens, &ideal)?;
        let dist = work_distribution(&ens, &fit.kernel)?;
        let theory = self.curve(&ideal, 0.0)?;
        let fitted = self.curve(&fit.kernel, 0.0)?;
        self.out.curve("curve_theory.csv", &theory)?;
        self.out.curve("curve.csv", &fitted)?;
        self.out.write("work_distribution_theory.csv", |w| write_work_csv(&dist_theory, w))?;
        self.out.write("work_distribution.csv", |w| write_work_csv(&dist, w))?;
        let delta_f = self.cfg.process.delta_f;
        let summary = WorkSummary {
            beta_hw: beta,
            mean_work_theory: oam_thermo::stats::mean_work(&dist_theory),
            mean_work: oam_thermo::stats::mean_work(&dist),
            exp_avg_theory: oam_thermo::stats::exp_avg(&dist_theory, beta, delta_f),
            exp_avg: oam_thermo::stats::exp_avg(&dist, beta, delta_f),
        };
        self.out.json("work_summary.json", &summary)?;
        if !fit.converged {
            return Err(CliError::Numerical("reconstruction did not converge".into()));
        }
        Ok(())
    }

    fn demon(&mut self) -> Result<(), CliError> {
        let kernel = demon_kernel(self.cfg.process.demon_shift, self.cfg.input_range())?;
        let plain = self.curve(&kernel, 0.0)?;
        let with_info = self.curve(&kernel, self.cfg.information)?;
        let ens = thermal_distribution(self.cfg.work_beta, self.cfg.cutoff)?;
        let dist = work_distribution(&ens, &kernel)?;
        self.out.curve("demon_curve.csv", &plain)?;
        self.out.curve("demon_info_curve.csv", &with_info)?;
        self.out.write("demon_work_distribution.csv", |w| write_work_csv(&dist, w))
    }

    fn mc_band(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let mc = McConfig {
            geometry: cfg.geometry.clone(),
            kernel: self.process()?,
            noise: cfg.noise,
            cutoff: cfg.cutoff,
            beta_grid: cfg.beta_grid.values(),
            trials: cfg.trials,
            seed: cfg.seed,
            delta_f: cfg.process.delta_f,
            information: 0.0,
            solver: cfg.solver,
        };
        let band = monte_carlo_band(&mc)?;
        self.out.write("band.csv", |w| write_band_csv(&band, w))?;
        let summary = BandSummary {
            trials: band.trials,
            excluded: band.excluded,
            seed: cfg.seed,
            generator: oam_thermo::rng::GENERATOR,
        };
        self.out.json("band_summary.json", &summary)
    }
}

/// Runs one subcommand, writing into `out_dir` (created if missing).
/// Returns the paths written; on a numerical failure, files already
/// written are kept.
pub fn run_subcommand(
    cmd: Subcommand,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    quiet: bool,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut run = Run { cfg, out: Outputs { dir: out_dir, quiet, written: Vec::new() } };
    let result = match cmd {
        Subcommand::Calibrate => run.calibrate(),
        Subcommand::Simulate => run.simulate(),
        Subcommand::Reconstruct => run.reconstruct(),
        Subcommand::WorkStats => run.work_stats(),
        Subcommand::Demon => run.demon(),
        Subcommand::McBand => run.mc_band(),
        Subcommand::Pipeline => (|| {
            run.calibrate()?;
            run.simulate()?;
            run.reconstruct()?;
            run.work_stats()?;
            run.demon()?;
            run.mc_band()
        })(),
    };
    result.map(|()| run.out.written)
}
