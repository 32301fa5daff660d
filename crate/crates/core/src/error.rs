//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A spec invariant failed; the message names the violated hypothesis.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Time step too large for the advertised coefficient bounds.
    #[error("CFL violation: {0}")]
    Cfl(String),

    /// NaN or an out-of-range solution value appeared during stepping.
    #[error("numerical anomaly: {0}")]
    Anomaly(String),

    /// The front (or control frontier) reached the computational boundary.
    #[error("front reached box boundary at t = {t:.4} (ring max {ring_max:.3e})")]
    FrontAtBoundary { t: f64, ring_max: f64 },

    /// A travel time exceeded its a-priori linear deadline.
    #[error("travel deadline exceeded: {0}")]
    Deadline(String),

    /// The requested run cannot fit in the computational box.
    #[error("box too small: {0}")]
    BoxTooSmall(String),

    /// Degenerate polygon or other geometric failure.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A sampling lattice or grid is too coarse for the requested check.
    #[error("insufficient resolution: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
