//! Closed-form moments of the wide Gaussian packet.
//!
//! These follow from expanding `sqrt((p - k')^2 + m^2)` to second order in
//! `k'`, which turns the evolution integral into a product of three Gaussian
//! integrals. With `E = gamma m`:
//!
//! ```text
//! X(t)            = v t p_hat
//! sigma_l^2(p, t) = sigma^2 + t^2 / (4 gamma^6 m^2 sigma^2)   (along p)
//! sigma_t^2(p, t) = sigma^2 + t^2 / (4 gamma^2 m^2 sigma^2)   (across p)
//! sigma^2(0, t)   = sigma^2 + t^2 / (4 m^2 sigma^2)           (at rest)
//! ```
//!
//! so the moving dispersions are the rest dispersion evaluated at `t / gamma^3`
//! (longitudinal) and `t / gamma` (transverse).
//!
//! All functions work for any direction of `p`: quantities are computed in
//! the [`PacketFrame`] and mean positions are returned in lab coordinates.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frame::PacketFrame;
use crate::model::{derive_kinematics, PacketSpec};
use crate::Axis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormMoments {
    pub time: f64,
    pub mean_position: Vector3<f64>,
    pub sigma_sq_longitudinal: f64,
    pub sigma_sq_transverse_1: f64,
    pub sigma_sq_transverse_2: f64,
    /// Direction of `p`, or `+z` for a packet at rest.
    pub frame_axis: Vector3<f64>,
}

/// Complex width parameters of the three factorized Gaussian integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticExpansionFactors {
    pub a1_sq: Complex64,
    pub a2_sq: Complex64,
    pub a3_sq: Complex64,
    /// Group velocity components in the packet frame, `(0, 0, v)`.
    pub v_axis: [f64; 3],
}

pub fn rest_dispersion(spec: &PacketSpec, t: f64) -> f64 {
    let (m, s) = (spec.mass(), spec.sigma());
    let growth = t / (2.0 * m * s);
    s * s + growth * growth
}

pub fn longitudinal_dispersion(spec: &PacketSpec, t: f64) -> f64 {
    let (m, s) = (spec.mass(), spec.sigma());
    let gamma = derive_kinematics(spec).gamma;
    let growth = t / (2.0 * m * s * gamma.powi(3));
    s * s + growth * growth
}

pub fn transverse_dispersion(spec: &PacketSpec, t: f64) -> f64 {
    let (m, s) = (spec.mass(), spec.sigma());
    let gamma = derive_kinematics(spec).gamma;
    let growth = t / (2.0 * m * s * gamma);
    s * s + growth * growth
}

/// Longitudinal dispersion written with `E` and `1 - v^2` instead of `gamma`.
pub fn longitudinal_dispersion_energy_form(spec: &PacketSpec, t: f64) -> f64 {
    let s = spec.sigma();
    let kin = derive_kinematics(spec);
    let w = kin.one_minus_v_sq();
    s * s + t * t * w * w / (4.0 * kin.energy * kin.energy * s * s)
}

/// Transverse dispersion written with `E` instead of `gamma`.
pub fn transverse_dispersion_energy_form(spec: &PacketSpec, t: f64) -> f64 {
    let s = spec.sigma();
    let e = derive_kinematics(spec).energy;
    s * s + t * t / (4.0 * e * e * s * s)
}

pub fn mean_position(spec: &PacketSpec, t: f64) -> Vector3<f64> {
    let kin = derive_kinematics(spec);
    PacketFrame::of(spec).e3 * (t * kin.speed)
}

pub fn closed_form_moments(spec: &PacketSpec, t: f64) -> ClosedFormMoments {
    let transverse = transverse_dispersion(spec, t);
    ClosedFormMoments {
        time: t,
        mean_position: mean_position(spec, t),
        sigma_sq_longitudinal: longitudinal_dispersion(spec, t),
        sigma_sq_transverse_1: transverse,
        sigma_sq_transverse_2: transverse,
        frame_axis: PacketFrame::of(spec).e3,
    }
}

pub fn expansion_factors(spec: &PacketSpec, t: f64) -> QuadraticExpansionFactors {
    let kin = derive_kinematics(spec);
    let s2 = spec.sigma() * spec.sigma();
    let transverse_im = t / (2.0 * kin.energy);
    let a1_sq = Complex64::new(s2, transverse_im);
    QuadraticExpansionFactors {
        a1_sq,
        a2_sq: a1_sq,
        a3_sq: Complex64::new(s2, transverse_im * kin.one_minus_v_sq()),
        v_axis: [0.0, 0.0, kin.speed],
    }
}

/// Rest-frame time at which the rest dispersion equals the moving packet's
/// dispersion at `t`: `t / gamma^3` along `p`, `t / gamma` across it.
pub fn retarded_time_map(t: f64, gamma: f64, axis: Axis) -> f64 {
    match axis {
        Axis::Longitudinal => t / gamma.powi(3),
        Axis::Transverse => t / gamma,
    }
}

/// Exact minus second-order-expanded energy at momentum offset `k'`.
///
/// `kprime` is the lab-frame offset in `k = p - k'`. The expansion is
///
/// ```text
/// E [1 - (p.k')/E^2 + (k'_perp^2 + (1 - v^2) k'_par^2) / (2 E^2)]
/// ```
///
/// with `k'_par` the component along `p`. The difference is third order in
/// `k'` whenever `p != 0`.
pub fn dispersion_relation_residual(spec: &PacketSpec, kprime: &Vector3<f64>) -> f64 {
    let kin = derive_kinematics(spec);
    let p = spec.mean_momentum();
    let m = spec.mass();
    let e = kin.energy;

    let k = p - kprime;
    let exact = k.norm().hypot(m);

    let par = PacketFrame::of(spec).e3.dot(kprime);
    let perp_sq = (kprime.norm_squared() - par * par).max(0.0);
    let quadratic = (perp_sq + kin.one_minus_v_sq() * par * par) / (2.0 * e * e);
    let approx = e * (1.0 - p.dot(kprime) / (e * e) + quadratic);
    exact - approx
}
