use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no channel observation for rsu {rsu} and region {region}")]
    NoChannelObservation { rsu: usize, region: usize },
    #[error("invalid noise power: {0}")]
    InvalidNoisePower(f64),
    #[error("degenerate channel between rsu {rsu} and region {region}: mean rate {rate} b/s below floor")]
    DegenerateChannel { rsu: usize, region: usize, rate: f64 },
    #[error("region {region} is not covered by rsu {rsu}")]
    NotCovered { rsu: usize, region: usize },
    #[error("datum {datum} not yet generated at slot {slot}")]
    DatumNotYetGenerated { datum: usize, slot: u64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("allocation exceeds demand for region {region}, datum {datum}")]
    AllocationExceedsDemand { region: usize, datum: usize },
    #[error("queue unstable: load {load} >= service rate {service_rate}")]
    QueueUnstable { load: f64, service_rate: f64 },
    #[error("negative energy: {0}")]
    NegativeEnergy(f64),
    #[error("empty trace")]
    EmptyTrace,
    #[error("inconsistent trace at slot {slot}: queue recurrence violated")]
    InconsistentTrace { slot: usize },
    #[error("instance too large for exact solver: {0}")]
    InstanceTooLarge(String),
    #[error("iteration {iter} exceeds maximum {max}")]
    IterationOutOfRange { iter: usize, max: usize },
    #[error("coverage constraint unsatisfiable with given radii")]
    CoverageUnsatisfiable,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible decision for slot")]
    Infeasible,
    #[error("mixed horizons in trace set: {0} vs {1}")]
    MixedHorizon(usize, usize),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
