use thiserror::Error;

/// Errors produced by lattice construction, spectral routines, and the
/// iterated projection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:.3e}")]
    NonHermitian { deviation: f64 },

    #[error("spectral gap closed at filling {n_occ}: gap = {gap:.3e}")]
    GapClosed { n_occ: usize, gap: f64 },

    #[error("no uniform spectral gaps{}: {detail}", format_path(.path))]
    NoUniformGaps { detail: String, path: Vec<usize> },

    #[error("eigenvector matrix ill-conditioned: cond = {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("rank deficient: smallest singular value {sigma_min:.3e}")]
    RankDeficient { sigma_min: f64 },

    #[error("eigenvalue modulus {modulus:.3e} too close to zero for imaginary-log sorting")]
    NearZeroModulus { modulus: f64 },

    #[error("position expectation modulus {modulus:.3e} below threshold; center undefined")]
    DelocalizedCenter { modulus: f64 },

    #[error("too few samples for decay fit: {count} above floor, need at least {needed}")]
    TooFewSamples { count: usize, needed: usize },

    #[error("branch tracking ambiguous at slice {slice}: separation {separation:.3e}")]
    TrackingAmbiguous { slice: usize, separation: f64 },

    #[error("Kramers pairing ambiguous at endpoint: splitting {splitting:.3e} exceeds tolerance")]
    PairingAmbiguous { splitting: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear algebra backend error: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_path(path: &[usize]) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!(
            " at cluster path [{}]",
            path.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(", ")
        )
    }
}

impl Error {
    /// Prefix `cluster` onto the provenance path of a gap-detection failure.
    pub fn push_path(self, cluster: usize) -> Self {
        match self {
            Error::NoUniformGaps { detail, mut path } => {
                path.insert(0, cluster);
                Error::NoUniformGaps { detail, path }
            }
            other => other,
        }
    }

    /// Process exit code class for the CLI and FFI layers.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
            Error::NoUniformGaps { .. } => 3,
            Error::GapClosed { .. } => 4,
            _ => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
