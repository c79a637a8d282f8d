//! Free relativistic spinless wave packets and the time-retardation test.
//!
//! A Gaussian packet of a scalar particle is evolved with the positive-energy
//! Klein-Gordon dispersion relation `E_k = sqrt(k^2 + m^2)`. Its position
//! dispersions are computed three ways:
//!
//! * [`analytic`]: closed forms valid when the packet is much wider than
//!   the Compton wavelength,
//! * [`oracle`]: exact momentum-space moments by Gauss-Hermite quadrature,
//! * [`propagator`]: spectral evolution on a momentum grid, Fourier synthesis
//!   of the Newton-Wigner density and moments by grid summation.
//!
//! [`harness`] fits the effective time-rescaling exponent `alpha` in
//! `sigma^2(p, t) = sigma^2(0, t / gamma^alpha)` and decides whether the moving
//! packet obeys the Einstein retardation `F_v(t) = F_0(t / gamma)`.
//!
//! Natural units are used throughout: `hbar = c = 1`, so velocities are
//! dimensionless, momentum and energy share a unit, and so do length and time.

pub mod analytic;
pub mod error;
pub mod frame;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod propagator;

pub use error::{Error, Result};
pub use model::{check_validity, derive_kinematics, DerivedKinematics, PacketSpec, Validity, ValidityClass};

/// Which evolution route produced a set of moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Oracle,
    Grid,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Oracle => "oracle",
            Method::Grid => "grid",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(Method::Analytic),
            "oracle" => Ok(Method::Oracle),
            "grid" => Ok(Method::Grid),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Spatial dimension of a model. The one-dimensional model is a distinct
/// physical system with `E = sqrt(k^2 + m^2)` along the direction of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Dimension {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "3")]
    Three,
}

impl Dimension {
    pub fn count(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Three => 3,
        }
    }
}

/// Direction of a dispersion relative to the mean momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Along the mean momentum.
    Longitudinal,
    /// Perpendicular to the mean momentum.
    Transverse,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Longitudinal => "longitudinal",
            Axis::Transverse => "transverse",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position moments of a packet at one instant.
///
/// `mean_position` is in lab coordinates. Dispersions are taken along the
/// packet frame (see [`frame::PacketFrame`]): `longitudinal` along the mean
/// momentum, `transverse` along the two perpendicular frame axes. One
/// dimensional models carry no transverse information.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentSet {
    pub time: f64,
    pub method: Method,
    pub mean_position: nalgebra::Vector3<f64>,
    pub longitudinal: f64,
    pub transverse: Option<[f64; 2]>,
}
