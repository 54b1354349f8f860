//! Evaluation side of the array workbench: angular error metrics,
//! benchmark runs over stored datasets, reports and polar plots.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod metrics;
pub mod plot;
pub mod report;

pub use bench::{run_benchmark, write_csv, BenchConfig, BenchReport, CellReport, MethodRuntime, Row};
pub use metrics::{accuracy, angular_error_stats, classification_stats, ClassificationStats, ErrorStats};
pub use plot::{polar_error_plot, polar_svg};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] beamlab_core::Error),
    #[error(transparent)]
    Net(#[from] beamnet::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn core_code(e: &beamlab_core::Error) -> i32 {
    use beamlab_core::Error as E;
    match e {
        E::Geometry(_) | E::InvalidArgument(_) | E::Json(_) => 1,
        E::ZeroPower => 3,
        E::Source { source, .. } => core_code(source),
        _ => 2,
    }
}

impl Error {
    /// Process exit code: 1 configuration, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use beamnet::Error as N;
        match self {
            Error::Config(_) | Error::Json(_) => 1,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) => 2,
            Error::Numeric(_) => 3,
            Error::Core(e) => core_code(e),
            Error::Net(e) => match e {
                N::Spec(_) => 1,
                N::NonFinite(_) | N::Diverged { .. } => 3,
                N::Core(c) => core_code(c),
                _ => 2,
            },
        }
    }
}
