use thiserror::Error;

/// Errors surfaced by the library. Every variant maps to a stable category
/// string so callers can emit machine-parseable one-line diagnostics.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("chunk MGF pole: t = {t} not below alpha = {alpha}")]
    MgfPole { t: f64, alpha: f64 },

    #[error("server {server} has zero aggregate arrival rate; service mixture undefined")]
    IdleServer { server: usize },

    #[error("server {server} unstable: utilization {rho} >= 1")]
    Unstable { server: usize, rho: f64 },

    #[error("MGF existence violated at server {server}: {constraint} = {value} (need < 0) at t = {t}")]
    MgfExistence {
        server: usize,
        constraint: &'static str,
        value: f64,
        t: f64,
    },

    #[error("no feasible t > 0 (binding server {server})")]
    EmptyTDomain { server: usize },

    #[error("t = {t} outside feasible domain (0, {t_max}) for file {file}")]
    InfeasibleT { file: usize, t: f64, t_max: f64 },

    #[error("projection infeasible for file {file}: k = {k} exceeds support size {cap}")]
    InfeasibleProjection { file: usize, k: f64, cap: usize },

    #[error("access row for file {file} infeasible: {detail}")]
    InfeasibleRow { file: usize, detail: String },

    #[error("initialization infeasible at server {server}: {detail}")]
    InfeasibleInit { server: usize, detail: String },

    #[error("insufficient samples: need at least {need}, have {have}")]
    InsufficientSamples { need: usize, have: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Stable category tag used by the CLI for single-line error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MgfPole { .. } => "mgf-pole",
            Error::IdleServer { .. } => "idle-server",
            Error::Unstable { .. } => "unstable",
            Error::MgfExistence { .. } => "mgf-existence",
            Error::EmptyTDomain { .. } => "empty-t-domain",
            Error::InfeasibleT { .. } => "infeasible-t",
            Error::InfeasibleProjection { .. } => "infeasible-projection",
            Error::InfeasibleRow { .. } => "infeasible-row",
            Error::InfeasibleInit { .. } => "infeasible-init",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
