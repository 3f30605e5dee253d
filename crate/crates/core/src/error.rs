use thiserror::Error;

#[derive(Debug, Error)]
pub enum Is2Error {
    #[error("all importance weights are zero; the proposal misses the posterior mass")]
    AllWeightsZero,

    #[error("too few draws: need at least {needed}, have {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("non-finite particle weight (individual {individual:?}, particle {particle})")]
    NonFiniteWeight {
        individual: Option<usize>,
        particle: usize,
    },

    #[error("antithetic pairing needs an even count, got {0}")]
    OddCount(usize),

    #[error("particle collapse at period {t}: every observation density underflowed")]
    ParticleCollapse { t: usize },

    #[error("too few particles for the jackknife: need {needed}, have {got}")]
    TooFewParticles { needed: usize, got: usize },

    #[error("too few pilot draws: need {needed}, have {got}")]
    TooFewPilots { needed: usize, got: usize },

    #[error("likelihood estimate carries no particle weights or variance estimate")]
    MissingVariance,

    #[error("effective sample size {ess:.2} below the {needed:.0} needed to fit a proposal")]
    InsufficientEss { ess: f64, needed: f64 },

    #[error("no initial point with finite weight after {attempts} proposal draws")]
    InitFailure { attempts: usize },

    #[error("quadrature not converged: {coarse} vs {fine}")]
    NotConverged { coarse: f64, fine: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Is2Error {
    /// Failures caused by the numbers themselves rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Is2Error::AllWeightsZero
                | Is2Error::ParticleCollapse { .. }
                | Is2Error::NonFiniteWeight { .. }
                | Is2Error::NotConverged { .. }
                | Is2Error::InitFailure { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Is2Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Is2Error>;
