use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("master capacity exhausted: AP {ap} already masters a UE on every pilot (UE {ue})")]
    MasterCapacityExhausted { ue: usize, ap: usize },

    #[error("pilot covariance singular at pilot {pilot}, AP {ap}; noise power must be positive")]
    SingularPilotCovariance { pilot: usize, ap: usize },

    #[error("precoder normalization statistic is zero for UE {ue} at AP {ap}")]
    ZeroNormalization { ue: usize, ap: usize },

    #[error("no Monte-Carlo blocks accumulated")]
    NoBlocks,

    #[error("block provenance mismatch: {0}")]
    BlockMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
