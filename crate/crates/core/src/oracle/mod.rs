//! Exact packet moments by quadrature in momentum space.
//!
//! Free evolution only multiplies the momentum amplitude by `exp(-i t E_k)`,
//! so with `x = i d/dk` acting on `Phi(k) exp(-i t E_k)`:
//!
//! ```text
//! X_j(t)       = t <v_j>
//! sigma_j^2(t) = 4 sigma^4 Var(k_j) + t^2 Var(v_j),      v_j = k_j / E_k
//! ```
//!
//! where averages are over `|Phi(k)|^2`. The cross term that would be linear
//! in `t` vanishes because the Gaussian amplitude is real; a chirped initial
//! state would need it, and [`GaussianMomentumAmplitude`] cannot represent one.
//! No expansion of `sqrt(k^2 + m^2)` is made, so these moments are the
//! reference the closed forms approximate.
//!
//! After the substitution `u = sqrt(2) sigma (k_j - p_j)` each factor of
//! `|Phi|^2` is exactly the Hermite weight `exp(-u^2)`, so tensor-product
//! Gauss-Hermite quadrature converges spectrally for the smooth bounded
//! integrands `k_j / E_k`.

mod quadrature;

pub use quadrature::QuadratureScheme;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_2_PI, SQRT_2};

use crate::analytic;
use crate::error::{Error, Result};
use crate::frame::PacketFrame;
use crate::model::{derive_kinematics, PacketSpec};
use crate::{Dimension, Method, MomentSet};

/// Default relative change tolerated when the quadrature order is doubled.
pub const DEFAULT_CONVERGENCE_TOLERANCE: f64 = 1e-9;

/// Errors smaller than this cannot carry a convergence order.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Gaussian momentum amplitude `prod_j M exp(-(k_j - p_j)^2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMomentumAmplitude {
    spec: PacketSpec,
    normalization: f64,
}

impl GaussianMomentumAmplitude {
    /// Unit-normalized amplitude, `M^2 = sigma sqrt(2/pi)`.
    pub fn new(spec: PacketSpec) -> Self {
        let normalization = (spec.sigma() * FRAC_2_PI.sqrt()).sqrt();
        GaussianMomentumAmplitude { spec, normalization }
    }

    pub fn with_normalization(spec: PacketSpec, normalization: f64) -> Self {
        GaussianMomentumAmplitude { spec, normalization }
    }

    pub fn spec(&self) -> &PacketSpec {
        &self.spec
    }

    /// Per-axis constant `M`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// One-axis factor `M exp(-(k - p)^2 sigma^2)`.
    pub fn axis_factor(&self, k: f64, p: f64) -> f64 {
        let d = (k - p) * self.spec.sigma();
        self.normalization * (-d * d).exp()
    }

    /// `Phi(k)` at a lab-frame momentum.
    pub fn value(&self, k: &Vector3<f64>) -> f64 {
        let p = self.spec.mean_momentum();
        (0..3).map(|j| self.axis_factor(k[j], p[j])).product()
    }

    /// `int dk |phi_j|^2` for one axis under the given rule.
    fn axis_norm(&self, scheme: &QuadratureScheme) -> f64 {
        let m2 = self.normalization * self.normalization;
        m2 / (SQRT_2 * self.spec.sigma()) * scheme.integrate(|_| 1.0)
    }

    /// Momentum offset `k - p` at quadrature node `u`.
    fn offset(&self, u: f64) -> f64 {
        u / (SQRT_2 * self.spec.sigma())
    }
}

/// `int d^3k |Phi(k)|^2`.
pub fn normalization_integral(amp: &GaussianMomentumAmplitude, scheme: &QuadratureScheme) -> f64 {
    amp.axis_norm(scheme).powi(3)
}

/// `int d^3k k_j |Phi(k)|^2` for each lab axis.
pub fn mean_momentum(amp: &GaussianMomentumAmplitude, scheme: &QuadratureScheme) -> Vector3<f64> {
    let axis_norm = amp.axis_norm(scheme);
    let m2 = amp.normalization * amp.normalization;
    let jacobian = m2 / (SQRT_2 * amp.spec.sigma());
    amp.spec.mean_momentum().map(|p| {
        let first = jacobian * scheme.integrate(|u| p + amp.offset(u));
        first * axis_norm * axis_norm
    })
}

/// Moments of the group velocity `k / E_k` under `|Phi|^2`.
///
/// Components are in the [`PacketFrame`] (third axis along `p`). For the
/// one-dimensional model only the third entry is meaningful and the
/// transverse entries are `NaN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityMoments {
    pub dimension: Dimension,
    pub order: usize,
    pub mean_velocity: [f64; 3],
    pub velocity_variance: [f64; 3],
    /// Diagonal of `<v_i v_j>`.
    pub velocity_second_moments: [f64; 3],
    /// `Var(k_j)`, equal to `1 / (4 sigma^2)` for the Gaussian.
    pub momentum_variance: [f64; 3],
    pub norm: f64,
    frame: PacketFrame,
}

/// Exact position moments at one time. Axes as in [`VelocityMoments`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub time: f64,
    pub dimension: Dimension,
    /// Lab coordinates.
    pub mean_position: Vector3<f64>,
    pub dispersion: [f64; 3],
    pub mean_velocity: [f64; 3],
    pub velocity_second_moments: [f64; 3],
    pub norm: f64,
}

impl VelocityMoments {
    /// Initial dispersion `4 sigma^4 Var(k_j)` per axis.
    pub fn initial_dispersion(&self, sigma: f64) -> [f64; 3] {
        let s4 = sigma.powi(4);
        self.momentum_variance.map(|v| 4.0 * s4 * v)
    }

    pub fn at(&self, sigma: f64, t: f64) -> ExactMoments {
        let initial = self.initial_dispersion(sigma);
        let mut dispersion = [0.0; 3];
        for j in 0..3 {
            dispersion[j] = initial[j] + t * t * self.velocity_variance[j];
        }
        let v = match self.dimension {
            Dimension::One => Vector3::new(0.0, 0.0, self.mean_velocity[2]),
            Dimension::Three => Vector3::from(self.mean_velocity),
        };
        ExactMoments {
            time: t,
            dimension: self.dimension,
            mean_position: self.frame.to_lab(&v) * t,
            dispersion,
            mean_velocity: self.mean_velocity,
            velocity_second_moments: self.velocity_second_moments,
            norm: self.norm,
        }
    }
}

impl ExactMoments {
    pub fn to_moment_set(&self) -> MomentSet {
        MomentSet {
            time: self.time,
            method: Method::Oracle,
            mean_position: self.mean_position,
            longitudinal: self.dispersion[2],
            transverse: match self.dimension {
                Dimension::One => None,
                Dimension::Three => Some([self.dispersion[0], self.dispersion[1]]),
            },
        }
    }
}

/// Three-dimensional velocity moments with the default convergence check.
pub fn velocity_moments(amp: &GaussianMomentumAmplitude, scheme: &QuadratureScheme) -> Result<VelocityMoments> {
    velocity_moments_checked(amp, scheme, Dimension::Three, DEFAULT_CONVERGENCE_TOLERANCE)
}

/// Velocity moments in `dimension`, rejected if doubling the quadrature order
/// moves any output by more than `rel_tol` (relative).
pub fn velocity_moments_checked(
    amp: &GaussianMomentumAmplitude,
    scheme: &QuadratureScheme,
    dimension: Dimension,
    rel_tol: f64,
) -> Result<VelocityMoments> {
    let base = raw_velocity_moments(amp, scheme, dimension);
    let refined = raw_velocity_moments(amp, &scheme.doubled()?, dimension);
    let axes = match dimension {
        Dimension::One => 2..3,
        Dimension::Three => 0..3,
    };
    for j in axes {
        let spread = base.velocity_variance[j].max(0.0).sqrt();
        let (a, b) = (base.mean_velocity[j], refined.mean_velocity[j]);
        let scale = a.abs().max(b.abs()) + spread;
        if (a - b).abs() > rel_tol * scale {
            return Err(Error::NotConverged {
                quantity: "mean velocity",
                order: scheme.order(),
                relative_change: (a - b).abs() / scale,
            });
        }
        let (a, b) = (base.velocity_variance[j], refined.velocity_variance[j]);
        let scale = a.abs().max(b.abs());
        if (a - b).abs() > rel_tol * scale {
            return Err(Error::NotConverged {
                quantity: "velocity variance",
                order: scheme.order(),
                relative_change: (a - b).abs() / scale,
            });
        }
    }
    Ok(base)
}

/// Quadrature without the order-doubling check.
pub fn raw_velocity_moments(
    amp: &GaussianMomentumAmplitude,
    scheme: &QuadratureScheme,
    dimension: Dimension,
) -> VelocityMoments {
    let spec = amp.spec();
    let m = spec.mass();
    let p = spec.momentum_magnitude();
    let offsets: Vec<f64> = scheme.nodes().iter().map(|&u| amp.offset(u)).collect();
    let weights = scheme.weights();
    let axis_norm = amp.axis_norm(scheme);

    match dimension {
        Dimension::One => {
            let total: f64 = weights.iter().sum();
            let velocity = |d: f64| {
                let k = p + d;
                k / k.hypot(m)
            };
            let mean = weighted_mean(weights, total, offsets.iter().map(|&d| velocity(d)));
            let second = weighted_mean(weights, total, offsets.iter().map(|&d| velocity(d).powi(2)));
            let var = weighted_mean(weights, total, offsets.iter().map(|&d| (velocity(d) - mean).powi(2)));
            let dmean = weighted_mean(weights, total, offsets.iter().copied());
            let kvar = weighted_mean(weights, total, offsets.iter().map(|&d| (d - dmean).powi(2)));
            VelocityMoments {
                dimension,
                order: scheme.order(),
                mean_velocity: [f64::NAN, f64::NAN, mean],
                velocity_variance: [f64::NAN, f64::NAN, var],
                velocity_second_moments: [f64::NAN, f64::NAN, second],
                momentum_variance: [f64::NAN, f64::NAN, kvar],
                norm: axis_norm,
                frame: PacketFrame::of(spec),
            }
        }
        Dimension::Three => {
            let n = offsets.len();
            let total: f64 = weights.iter().sum::<f64>().powi(3);
            // iterate the tensor grid: offsets along (e1, e2, e3)
            let each = |f: &mut dyn FnMut(f64, [f64; 3])| {
                for a in 0..n {
                    let (k1, wa) = (offsets[a], weights[a]);
                    for b in 0..n {
                        let (k2, wb) = (offsets[b], weights[b]);
                        let k12 = k1.hypot(k2);
                        let wab = wa * wb;
                        for c in 0..n {
                            let k3 = p + offsets[c];
                            let e = k12.hypot(k3).hypot(m);
                            f(wab * weights[c], [k1 / e, k2 / e, k3 / e]);
                        }
                    }
                }
            };

            let mut sum = [0.0; 3];
            let mut sum_sq = [0.0; 3];
            each(&mut |w, v| {
                for j in 0..3 {
                    sum[j] += w * v[j];
                    sum_sq[j] += w * v[j] * v[j];
                }
            });
            let mean = sum.map(|s| s / total);
            let mut centered = [0.0; 3];
            each(&mut |w, v| {
                for j in 0..3 {
                    let d = v[j] - mean[j];
                    centered[j] += w * d * d;
                }
            });

            let total_1d: f64 = weights.iter().sum();
            let dmean = weighted_mean(weights, total_1d, offsets.iter().copied());
            let kvar = weighted_mean(weights, total_1d, offsets.iter().map(|&d| (d - dmean).powi(2)));
            VelocityMoments {
                dimension,
                order: scheme.order(),
                mean_velocity: mean,
                velocity_variance: centered.map(|c| c / total),
                velocity_second_moments: sum_sq.map(|s| s / total),
                momentum_variance: [kvar; 3],
                norm: axis_norm.powi(3),
                frame: PacketFrame::of(spec),
            }
        }
    }
}

fn weighted_mean(weights: &[f64], total: f64, values: impl Iterator<Item = f64>) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total
}

/// Exact three-dimensional moments at time `t`.
pub fn exact_moments(amp: &GaussianMomentumAmplitude, scheme: &QuadratureScheme, t: f64) -> Result<ExactMoments> {
    Ok(velocity_moments(amp, scheme)?.at(amp.spec().sigma(), t))
}

/// Exact moments of the one-dimensional model `E = sqrt(k^2 + m^2)` along `p`.
pub fn exact_moments_1d(amp: &GaussianMomentumAmplitude, scheme: &QuadratureScheme, t: f64) -> Result<ExactMoments> {
    let vm = velocity_moments_checked(amp, scheme, Dimension::One, DEFAULT_CONVERGENCE_TOLERANCE)?;
    Ok(vm.at(amp.spec().sigma(), t))
}

/// Measured decay of the oracle-vs-closed-form error with `sigma * m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOrder {
    pub sigma_m: Vec<f64>,
    /// Relative deviation of the `t^2` coefficient of the longitudinal
    /// dispersion, oracle against closed form.
    pub relative_errors: Vec<f64>,
    /// `-d ln(error) / d ln(sigma m)` by least squares.
    pub exponent: f64,
}

/// Relative error of the longitudinal `t^2` coefficient at `sigma`, `2 sigma`,
/// `4 sigma` (mass and velocity fixed) and its fitted decay exponent.
pub fn convergence_order_check(spec_base: &PacketSpec, t: f64, scheme: &QuadratureScheme) -> Result<ConvergenceOrder> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter {
            field: "t",
            value: t,
            reason: "the t^2 coefficient needs a finite nonzero time",
        });
    }
    let mut sigma_m = Vec::with_capacity(3);
    let mut relative_errors = Vec::with_capacity(3);
    for factor in [1.0, 2.0, 4.0] {
        let spec = spec_base.with_sigma(spec_base.sigma() * factor)?;
        let amp = GaussianMomentumAmplitude::new(spec);
        let vm = velocity_moments(&amp, scheme)?;
        let s2 = spec.sigma().powi(2);
        let exact = (vm.at(spec.sigma(), t).dispersion[2] - vm.at(spec.sigma(), 0.0).dispersion[2]) / (t * t);
        let closed = (analytic::longitudinal_dispersion(&spec, t) - s2) / (t * t);
        sigma_m.push(derive_kinematics(&spec).sigma_m);
        relative_errors.push((exact / closed - 1.0).abs());
    }
    if relative_errors.iter().any(|&e| e < NOISE_FLOOR) {
        return Err(Error::BelowNoiseFloor { floor: NOISE_FLOOR });
    }
    let exponent = -log_log_slope(&sigma_m, &relative_errors);
    Ok(ConvergenceOrder {
        sigma_m,
        relative_errors,
        exponent,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub(crate) fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
