use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, out-of-range hyper-parameters or inconsistent models.
    #[error("configuration error: {0}")]
    Config(String),

    /// The correction controller cannot act at this state (for example the
    /// barrier gradient vanishes or is orthogonal to the actuated subspace).
    #[error("filter error: {0}")]
    Filter(String),

    /// The integrator produced a non-finite state.
    #[error("simulation fault at t = {t}: {message}")]
    Simulation { t: f64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn filter(msg: impl Into<String>) -> Self {
        Error::Filter(msg.into())
    }
}
