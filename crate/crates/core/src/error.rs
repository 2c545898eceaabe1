use thiserror::Error;

/// Errors raised across model construction, analysis, control design and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),

    #[error("singular network reduction at bus {bus} (pivot {pivot:e})")]
    SingularReduction { bus: String, pivot: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("no switch-on opportunity in [{t_arm:.4}, {t_max:.4}] s (min |h| = {min_abs_h:e})")]
    NoSwitchOpportunity {
        t_arm: f64,
        t_max: f64,
        min_abs_h: f64,
    },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("step size underflow at t = {t:.6} s (h = {h:e})")]
    Stiffness { t: f64, h: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Io(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
