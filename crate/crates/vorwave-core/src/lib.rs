//! Spectral numerics for gravity-capillary water waves with constant vorticity.
//!
//! * [`dispersion`]: linear frequencies and their κ-derivatives.
//! * [`fields`]: Fourier fields on the circle, the torus and traveling profiles.
//! * [`dno`]: the Dirichlet-Neumann operator by Taylor expansion in `η`.
//! * [`dynamics`]: the water-wave vector field, invariants and time integration.
//! * [`nonres`]: Diophantine, Melnikov, transversality and measure diagnostics.
//! * [`normalform`]: constant coefficients of the reduced linearized operator.
//! * [`solver`]: Newton continuation of reversible traveling tori.

pub mod dispersion;
pub mod dno;
pub mod dynamics;
pub mod fields;
pub mod nonres;
pub mod normalform;
pub mod solver;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dispersion(#[from] dispersion::DispersionError),
    #[error(transparent)]
    Field(#[from] fields::FieldError),
    #[error(transparent)]
    Dno(#[from] dno::DnoError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error(transparent)]
    Nonres(#[from] nonres::NonresError),
    #[error(transparent)]
    NormalForm(#[from] normalform::NormalFormError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
}

impl Error {
    /// Whether the error comes from invalid input rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Dispersion(_) => true,
            Error::Nonres(nonres::NonresError::NotAdmissible(_)) => false,
            Error::Nonres(_) => true,
            Error::Dynamics(dynamics::DynamicsError::BadConfig(_) | dynamics::DynamicsError::Cfl { .. }) => true,
            Error::NormalForm(normalform::NormalFormError::Input(_)) => true,
            Error::Solver(solver::SolverError::Config(_)) => true,
            Error::Solver(solver::SolverError::Json(_)) => true,
            Error::Solver(solver::SolverError::Snapshot(_)) => true,
            Error::Field(fields::FieldError::Parse(_)) => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
