//! Numerical laboratory for a one-dimensional transmission problem coupling
//! two damped two-wave systems across an interface.
//!
//! The crate discretizes the system with conforming P1 elements (one shared
//! interface degree of freedom per chain), realizes the semigroup generator
//! together with its energy Gram matrix, and provides the instruments the
//! stability analysis needs: the dissipation identity, static solves,
//! dense and shift-invert spectra, resolvent-norm sweeps along the
//! imaginary axis, a dissipation-exact implicit midpoint integrator, and
//! decay-law fitting of energy traces.
//!
//! The two regimes of interest are selected by the right-interval wave
//! speed: `a2 = 1` yields a uniformly damped spectrum and exponential energy
//! decay, `a2 != 1` leaves high frequencies underdamped, a resolvent
//! envelope growing like `lambda^2`, and a `1/t` decay of smooth solutions.

pub mod config;
pub mod decay;
pub mod fem;
pub mod generator;
pub mod mesh;
pub mod spectrum;
pub mod timestep;

pub use config::{
    poincare_constant, validate_config, CoefficientKind, ConfigError, PiecewiseCoefficient,
    RegimeWarning, SystemConfig, ValidatedConfig,
};
pub use decay::{
    classify_decay, fit_exponential, fit_polynomial, tail_window, DecayClass, DecayError,
    DecayFit, DecayModel, FitWindow,
};
pub use fem::{
    assemble_matrices, energy, energy_gram, interface_flux_jump, interpolate_chains,
    write_matrix_triplets, FemError, FluxJump, GramMatrix, StateVector, SystemMatrices,
};
pub use generator::{GeneratorOperator, GeneratorError, Regime};
pub use mesh::{build_mesh, ElementCoefficients, Mesh, MeshError};
pub use spectrum::{
    eig_residual_hnorm, eigenvalues, eigenvalues_near_axis, least_damped_mode_state, log_grid,
    refine_eigenpair, resolvent_norm, resolvent_norm_dense, resolvent_sweep, valid_band,
    EnvelopeFit, ResolventPoint, ResolventSamples, SpectrumError, SpectrumResult,
    NEAR_SINGULAR_NORM,
};
pub use timestep::{
    project_initial_data, simulate, step_midpoint, EnergyTrace, InitialProfiles,
    MidpointStepper, SampleSchedule, TimestepError,
};
