use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("symmetry sector {0} is empty at the requested cutoffs")]
    EmptySector(String),

    #[error("too few levels for unfolding: need {need}, got {got}")]
    TooFewLevels { need: usize, got: usize },

    #[error("spectrum carries no eigenvectors")]
    MissingVectors,

    #[error("state has weight {outside:e} outside the diagonalized subspace")]
    UncoveredState { outside: f64 },

    #[error("normal-phase-like series: no growth phase (max/initial = {ratio:.3})")]
    NoGrowthPhase { ratio: f64 },

    #[error("growth window too short to fit: {points} points in [{t_lo}, {t_hi}]")]
    DegenerateFitWindow { points: usize, t_lo: f64, t_hi: f64 },

    #[error("Fock cutoff exceeded the configured hard cap of {cap}")]
    CutoffCap { cap: usize },

    #[error("empty energy shell |E - {e0}| < {delta_e}; nearest level at {nearest}")]
    EmptyShell { e0: f64, delta_e: f64, nearest: f64 },

    #[error("mean-field branch mismatch: {0}")]
    WrongBranch(String),

    #[error("initial states do not share energy: {e_a} vs {e_b}")]
    EnergyMismatch { e_a: f64, e_b: f64 },
}
