//! Simulation and analysis of work statistics for a two-dimensional quantum
//! harmonic oscillator whose energy eigenstates are carried by the orbital
//! angular momentum (OAM) of light.
//!
//! The pipeline mirrors a bench experiment:
//!
//! 1. [`oscillator`]: thermal ensembles over the azimuthal index ℓ.
//! 2. [`process`]: row-stochastic transition kernels p(ℓ′|ℓ).
//! 3. [`optics`]: a synthetic mode-sorter camera with a noise model.
//! 4. [`reconstruct`]: simplex-constrained least squares recovery of the kernel.
//! 5. [`stats`]: work distributions, Jarzynski and feedback averages, and
//!    Monte Carlo uncertainty bands.
//!
//! Energies and work are in units of ħω; temperatures enter only through the
//! dimensionless product β̃ = βħω.

pub mod error;
pub mod io;
pub mod optics;
pub mod oscillator;
pub mod process;
pub mod reconstruct;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use optics::{CalibrationSet, IntensityProfile, NoiseModel, Observations, SorterGeometry};
pub use oscillator::{BoltzmannFit, Cutoff, EnergyValue, ModeIndex, ThermalEnsemble};
pub use process::{LRange, PerturbMode, ProcessKind, ProcessSpec, TransitionKernel};
pub use reconstruct::{FitReport, SolverOptions};
pub use stats::{BetaGrid, FluctuationResult, McConfig, UncertaintyBand, WorkDistribution};
