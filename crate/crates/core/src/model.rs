//! Packet parameters, derived kinematics and the validity gate.
//!
//! All quantities are in natural units (`hbar = c = 1`).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on `sigma * m` above which the packet is comfortably wider than
/// the Compton wavelength.
pub const VALID_SIGMA_M: f64 = 3.0;
/// Threshold on `sigma * m` at or below which the quadratic expansion of the
/// dispersion relation has no footing at all.
pub const INVALID_SIGMA_M: f64 = 1.0;

/// Physical definition of a Gaussian packet.
///
/// The momentum amplitude is `prod_j M exp(-(k_j - p_j)^2 sigma^2)`, so the
/// initial position dispersion along every axis is `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPacketSpec", into = "RawPacketSpec")]
pub struct PacketSpec {
    mass: f64,
    sigma: f64,
    mean_momentum: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPacketSpec {
    mass: f64,
    sigma: f64,
    mean_momentum: [f64; 3],
}

impl TryFrom<RawPacketSpec> for PacketSpec {
    type Error = Error;

    fn try_from(raw: RawPacketSpec) -> Result<Self> {
        PacketSpec::new(raw.mass, raw.sigma, Vector3::from(raw.mean_momentum))
    }
}

impl From<PacketSpec> for RawPacketSpec {
    fn from(spec: PacketSpec) -> Self {
        RawPacketSpec {
            mass: spec.mass,
            sigma: spec.sigma,
            mean_momentum: spec.mean_momentum.into(),
        }
    }
}

impl PacketSpec {
    pub fn new(mass: f64, sigma: f64, mean_momentum: Vector3<f64>) -> Result<Self> {
        positive("mass", mass)?;
        positive("sigma", sigma)?;
        for p in mean_momentum.iter() {
            if !p.is_finite() {
                return Err(Error::InvalidParameter {
                    field: "mean_momentum",
                    value: *p,
                    reason: "must be finite",
                });
            }
        }
        Ok(PacketSpec {
            mass,
            sigma,
            mean_momentum,
        })
    }

    /// Packet whose mean momentum of magnitude `p` points along `+z`.
    pub fn along_z(mass: f64, sigma: f64, p: f64) -> Result<Self> {
        Self::new(mass, sigma, Vector3::new(0.0, 0.0, p))
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean_momentum(&self) -> Vector3<f64> {
        self.mean_momentum
    }

    /// `|p|`, computed without overflow.
    pub fn momentum_magnitude(&self) -> f64 {
        let p = &self.mean_momentum;
        p.x.hypot(p.y).hypot(p.z)
    }

    /// Same packet at rest.
    pub fn at_rest(&self) -> Self {
        PacketSpec {
            mean_momentum: Vector3::zeros(),
            ..*self
        }
    }

    /// Same mass and width with a different mean momentum.
    pub fn with_momentum(&self, mean_momentum: Vector3<f64>) -> Result<Self> {
        Self::new(self.mass, self.sigma, mean_momentum)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mass, sigma, self.mean_momentum)
    }
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            field,
            value,
            reason: "must be finite",
        });
    }
    if value <= 0.0 {
        return Err(Error::InvalidParameter {
            field,
            value,
            reason: "must be strictly positive",
        });
    }
    Ok(())
}

/// Kinematic quantities of the packet's mean momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedKinematics {
    pub energy: f64,
    pub speed: f64,
    pub gamma: f64,
    pub compton_wavelength: f64,
    pub sigma_m: f64,
}

impl DerivedKinematics {
    /// `1 - v^2`, evaluated as `(m/E)^2` so that it stays accurate as `v -> 1`.
    pub fn one_minus_v_sq(&self) -> f64 {
        let r = self.gamma.recip();
        r * r
    }
}

pub fn derive_kinematics(spec: &PacketSpec) -> DerivedKinematics {
    let m = spec.mass();
    let p = spec.momentum_magnitude();
    let energy = p.hypot(m);
    DerivedKinematics {
        energy,
        speed: p / energy,
        gamma: energy / m,
        compton_wavelength: m.recip(),
        sigma_m: spec.sigma() * m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidityClass {
    Valid,
    Marginal,
    Invalid,
}

impl std::fmt::Display for ValidityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ValidityClass::Valid => "valid",
            ValidityClass::Marginal => "marginal",
            ValidityClass::Invalid => "invalid",
        })
    }
}

/// Whether the packet is wide enough for the quadratic expansion of the
/// dispersion relation, with the `sigma * m` value that decided it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub class: ValidityClass,
    pub sigma_m: f64,
}

pub fn check_validity(spec: &PacketSpec) -> Validity {
    let sigma_m = spec.sigma() * spec.mass();
    let class = if sigma_m > VALID_SIGMA_M {
        ValidityClass::Valid
    } else if sigma_m > INVALID_SIGMA_M {
        ValidityClass::Marginal
    } else {
        ValidityClass::Invalid
    };
    Validity { class, sigma_m }
}
