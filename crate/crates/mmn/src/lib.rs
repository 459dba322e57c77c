//! Mean mixtures of multivariate normal distributions.
//!
//! A random vector Y follows MMN(ξ, Ω, δ; H) when
//! Y = ξ + ω(δU + Z) with Z ~ N(0, Ω̄ − δδᵀ) independent of U ~ H,
//! ω = diag(Ω)^{1/2} and Ω̄ = ω⁻¹Ωω⁻¹. Exponential mixing gives MMNE and
//! standard gamma mixing gives MMNG.

pub mod dist;
pub mod em;
pub mod error;
pub mod mc;
pub mod mixing;
pub mod moments;
pub mod params;
pub mod quad;
pub mod roots;
pub mod skewness;
pub mod special;

pub use dist::Mmn;
pub use em::{FitConfig, FitResult, Init};
pub use error::{MmnError, Result};
pub use mc::{CriticalTable, McConfig, PowerTable};
pub use mixing::MixingLaw;
pub use moments::MomentSet;
pub use params::{CanonicalInfo, MmnParams, StdDecomp};
pub use skewness::{SkewnessReport, Statistic};
