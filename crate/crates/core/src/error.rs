use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contraction violated: ratio {ratio} for word {word}")]
    Contraction { word: String, ratio: f64 },

    #[error("point left the domain U while applying word {word} (step {step})")]
    DomainViolation { word: String, step: usize },

    #[error("derivative is not conformal: residual {residual:e}")]
    Conformality { residual: f64 },

    #[error("word too short: need {needed} symbols, have {available}")]
    Depth { needed: usize, available: usize },

    #[error("pressure has no sign change on [{lo}, {hi}]: P(lo)={p_lo}, P(hi)={p_hi}")]
    Bracket { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },

    #[error("scale {r:e} is below the resolution floor {floor:e}; {usable} of the requested scales are usable")]
    Resolution { r: f64, floor: f64, usable: usize },

    #[error("normalizer -log C1^2 + q log(1/rho) = {normalizer} is not positive; increase q")]
    QTooSmall { normalizer: f64 },

    #[error("table too large: {0} entries")]
    TooLarge(usize),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
