use thiserror::Error;

/// Failure modes shared by all modules.
///
/// Variants split into two families used by the CLI exit-code mapping:
/// *verdict* errors are meaningful negative answers about well-formed input
/// (exit 1), everything else is an input or usage error (exit 2).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at position {0}")]
    NonFinite(usize),

    #[error("matrix is not hermitian: max asymmetry {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("eigensolver did not converge: off-diagonal norm {off:.3e} after {sweeps} sweeps")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("matrix is not normal: commutator residual {residual:.3e} exceeds {tol:.3e}")]
    NotNormal { residual: f64, tol: f64 },

    #[error("accuracy check failed: {what} = {value:.3e} exceeds {bound:.3e}")]
    Accuracy {
        what: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("duplicate spectrum atom at ({re}, {im}) after canonical rounding")]
    DuplicateAtom { re: f64, im: f64 },

    #[error("vector belongs to model '{got}' but operation targets '{expected}'")]
    ModelMismatch { expected: String, got: String },

    #[error("coordinate ({block}, {index}) outside the allocated range of the model")]
    CoordinateRange { block: u32, index: u32 },

    #[error("block {block} has no free coordinate: all {mult} are allocated")]
    Capacity { block: u32, mult: u32 },

    #[error("partition defect: {0}")]
    Partition(String),

    #[error("measure is not positive: atom ({re}, {im}) has mass {mass_re:.3e}{mass_im:+.3e}i")]
    Positivity {
        re: f64,
        im: f64,
        mass_re: f64,
        mass_im: f64,
    },

    #[error("support of size {size} exceeds the exhaustive-search limit {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: u32, got: u32 },

    #[error("parameter labels differ: '{left}' vs '{right}'")]
    ParamMismatch { left: String, right: String },

    #[error("type is inconsistent with the theory: measure atom ({re}, {im}) lies outside the spectrum set")]
    InconsistentType { re: f64, im: f64 },

    #[error("materialization budget exceeded: {what} needs {needed}, budget {budget}")]
    Budget {
        what: &'static str,
        needed: u64,
        budget: u64,
    },

    #[error("net of mesh {eps} would exceed the size budget; achievable mesh {achievable:.6}")]
    NetBudget { eps: f64, achievable: f64 },

    #[error("residual of mass {mass:.3e} in finite block {block}; free extension needs infinite blocks")]
    FiniteResidual { block: u32, mass: f64 },

    #[error("regions are not separated: atoms ({a_re}, {a_im}) and ({b_re}, {b_im}) at distance {dist:.3e} <= {eps:.3e}")]
    Separation {
        a_re: f64,
        a_im: f64,
        b_re: f64,
        b_im: f64,
        dist: f64,
        eps: f64,
    },

    #[error("no alignment: {reason}; best partial bottleneck {bound:.6e}")]
    NoAlignment { reason: String, bound: f64 },

    #[error("sequence diverges: {what} at index {index}, value {value:.6e}")]
    Divergence {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("type is not realized in the model: measure atom ({re}, {im}) is not a spectrum atom")]
    Realization { re: f64, im: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// True when the error is a negative verdict about well-formed input
    /// rather than a usage problem. The CLI maps verdicts to exit code 1
    /// and everything else to exit code 2.
    pub fn is_verdict(&self) -> bool {
        matches!(
            self,
            Error::NotNormal { .. }
                | Error::NoConvergence { .. }
                | Error::Accuracy { .. }
                | Error::NotHermitian { .. }
                | Error::Separation { .. }
                | Error::NoAlignment { .. }
                | Error::Divergence { .. }
                | Error::NetBudget { .. }
                | Error::Budget { .. }
                | Error::FiniteResidual { .. }
        )
    }
}
