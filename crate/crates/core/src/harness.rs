//! The retardation test.
//!
//! Every dispersion curve considered here has the form `sigma^2 + C t^2`. If
//! the moving packet's curve equals the rest curve at a rescaled time
//! `t / gamma^alpha`, then `C_moving = C_rest / gamma^(2 alpha)`, so
//!
//! ```text
//! alpha = ln(C_rest / C_moving) / (2 ln gamma).
//! ```
//!
//! Einstein retardation `F_v(t) = F_0(t / gamma)` means `alpha = 1`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_validity, derive_kinematics, PacketSpec, Validity};
use crate::oracle::{self, GaussianMomentumAmplitude, QuadratureScheme};
use crate::propagator::{self, MomentumGrid};
use crate::{analytic, Axis, Dimension, Method, MomentSet};

pub const DEFAULT_VERDICT_TOLERANCE: f64 = 0.05;
/// Relative RMS fit residual above which a curve is not treated as quadratic.
pub const NON_QUADRATIC_THRESHOLD: f64 = 1e-6;
/// `gamma - 1` below which the exponent is undefined.
pub const DEGENERATE_GAMMA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mass: f64,
    pub sigma: f64,
    /// Magnitudes of the mean momentum, taken along `+z`.
    pub momenta: Vec<f64>,
    pub times: Vec<f64>,
    pub methods: Vec<Method>,
    pub quad_order: usize,
    pub grid_points: usize,
    pub grid_dimension: Dimension,
    pub verdict_tolerance: f64,
}

impl SweepConfig {
    pub fn new(mass: f64, sigma: f64, momenta: Vec<f64>, times: Vec<f64>, methods: Vec<Method>) -> Self {
        SweepConfig {
            mass,
            sigma,
            momenta,
            times,
            methods,
            quad_order: QuadratureScheme::DEFAULT_ORDER,
            grid_points: propagator::DEFAULT_POINTS_1D,
            grid_dimension: Dimension::One,
            verdict_tolerance: DEFAULT_VERDICT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        PacketSpec::along_z(self.mass, self.sigma, 0.0)?;
        if self.momenta.is_empty() {
            return Err(Error::InsufficientData("no momenta".into()));
        }
        if let Some(&p) = self.momenta.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter {
                field: "momenta",
                value: p,
                reason: "momentum magnitudes must be finite and >= 0",
            });
        }
        if self.times.is_empty() || !self.times.contains(&0.0) {
            return Err(Error::InsufficientData("times must include 0".into()));
        }
        if let Some(&t) = self.times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "times",
                value: t,
                reason: "must be finite",
            });
        }
        if self.methods.is_empty() {
            return Err(Error::InsufficientData("no methods".into()));
        }
        if self.quad_order < 2 {
            return Err(Error::InvalidParameter {
                field: "quad_order",
                value: self.quad_order as f64,
                reason: "must be at least 2",
            });
        }
        if !(self.verdict_tolerance > 0.0 && self.verdict_tolerance.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "verdict_tolerance",
                value: self.verdict_tolerance,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    fn spec(&self, p: f64) -> Result<PacketSpec> {
        PacketSpec::along_z(self.mass, self.sigma, p)
    }
}

/// Least-squares `t^2` coefficient of a curve `sigma^2(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub offset: f64,
    pub coefficient: f64,
    /// RMS of `sigma^2(t) - offset - C t^2` over `max |sigma^2|`.
    pub residual: f64,
}

/// Fits `(sigma^2(t) - sigma^2(0))` against `t^2`. The curve must contain
/// `t = 0` and at least three distinct nonzero times.
pub fn fit_spreading_coefficient(curve: &[(f64, f64)]) -> Result<QuadraticFit> {
    let offset = curve
        .iter()
        .find(|(t, _)| *t == 0.0)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::InsufficientData("curve has no t = 0 sample".into()))?;
    let mut nonzero: Vec<f64> = curve.iter().map(|(t, _)| *t).filter(|t| *t != 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    nonzero.dedup();
    if nonzero.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 distinct nonzero times, got {}",
            nonzero.len()
        )));
    }
    let (num, den) = curve.iter().fold((0.0, 0.0), |(n, d), (t, s)| {
        let t2 = t * t;
        (n + (s - offset) * t2, d + t2 * t2)
    });
    let coefficient = num / den;
    let scale = curve.iter().map(|(_, s)| s.abs()).fold(0.0, f64::max);
    let sq: f64 = curve
        .iter()
        .map(|(t, s)| (s - offset - coefficient * t * t).powi(2))
        .sum();
    let residual = (sq / curve.len() as f64).sqrt() / scale;
    Ok(QuadraticFit {
        offset,
        coefficient,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha: f64,
    pub coefficient: f64,
    pub rest_coefficient: f64,
    pub residual: f64,
    pub non_quadratic: bool,
}

/// Effective exponent `alpha` in `sigma^2(p, t) = sigma^2(0, t / gamma^alpha)`.
pub fn fit_retardation_exponent(moving_curve: &[(f64, f64)], rest_coefficient: f64, gamma: f64) -> Result<ExponentFit> {
    if gamma.is_nan() || gamma - 1.0 <= DEGENERATE_GAMMA {
        return Err(Error::DegenerateFrame { gamma });
    }
    let fit = fit_spreading_coefficient(moving_curve)?;
    if !(fit.coefficient > 0.0 && rest_coefficient > 0.0) {
        return Err(Error::InsufficientData(format!(
            "spreading coefficients must be positive (moving {}, rest {})",
            fit.coefficient, rest_coefficient
        )));
    }
    Ok(ExponentFit {
        alpha: (rest_coefficient / fit.coefficient).ln() / (2.0 * gamma.ln()),
        coefficient: fit.coefficient,
        rest_coefficient,
        residual: fit.residual,
        non_quadratic: fit.residual > NON_QUADRATIC_THRESHOLD,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    /// `gamma = 1`: there is no moving frame to compare.
    Degenerate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Degenerate => "degenerate",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Einstein retardation holds iff `|alpha - 1| <= tolerance`.
pub fn er_verdict(alpha: f64, tolerance: f64) -> Verdict {
    if (alpha - 1.0).abs() <= tolerance {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

/// One dispersion sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub gamma: f64,
    pub axis: Axis,
    pub method: Method,
    pub t: f64,
    pub sigma_sq: f64,
}

/// Fitted exponent for one (momentum, axis, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub p: f64,
    pub gamma: f64,
    pub axis: Axis,
    pub method: Method,
    pub alpha: Option<f64>,
    pub residual: Option<f64>,
    pub non_quadratic: bool,
    /// `gamma^alpha`, the effective slow-down factor, next to `gamma`.
    pub gamma_alpha: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDelta {
    pub p: f64,
    pub axis: Axis,
    pub method_a: Method,
    pub method_b: Method,
    /// `max_t |a - b| / |b|`.
    pub max_relative_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub p: f64,
    pub method: Method,
    pub message: String,
}

/// Rest-frame reference curve of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestCurve {
    pub method: Method,
    pub points: Vec<(f64, f64)>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetardationReport {
    pub config: SweepConfig,
    pub validity: Validity,
    pub curves: Vec<CurvePoint>,
    pub rest_curves: Vec<RestCurve>,
    pub fits: Vec<AxisFit>,
    pub deltas: Vec<MethodDelta>,
    pub failures: Vec<PointFailure>,
}

/// Column order of [`RetardationReport::write_csv`].
pub const CSV_HEADER: &str = "m,sigma,p,gamma,axis,method,t,sigma_sq,alpha_fit,residual,verdict";

impl RetardationReport {
    pub fn fit(&self, p: f64, axis: Axis, method: Method) -> Option<&AxisFit> {
        self.fits
            .iter()
            .find(|f| f.p == p && f.axis == axis && f.method == method)
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// One row per dispersion sample; numbers carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for c in &self.curves {
            let fit = self.fit(c.p, c.axis, c.method);
            let alpha = fit.and_then(|f| f.alpha).map(fmt_num).unwrap_or_default();
            let residual = fit.and_then(|f| f.residual).map(fmt_num).unwrap_or_default();
            let verdict = fit.map(|f| f.verdict.as_str()).unwrap_or("");
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_num(self.config.mass),
                fmt_num(self.config.sigma),
                fmt_num(c.p),
                fmt_num(c.gamma),
                c.axis,
                c.method,
                fmt_num(c.t),
                fmt_num(c.sigma_sq),
                alpha,
                residual,
                verdict
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::from)
    }
}

/// 17 significant digits, locale-free.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

struct MethodCurves {
    longitudinal: Vec<(f64, f64)>,
    transverse: Option<Vec<(f64, f64)>>,
}

fn run_method(config: &SweepConfig, spec: &PacketSpec, method: Method) -> Result<MethodCurves> {
    let moments: Vec<MomentSet> = match method {
        Method::Analytic => config
            .times
            .iter()
            .map(|&t| {
                let c = analytic::closed_form_moments(spec, t);
                MomentSet {
                    time: t,
                    method,
                    mean_position: c.mean_position,
                    longitudinal: c.sigma_sq_longitudinal,
                    transverse: Some([c.sigma_sq_transverse_1, c.sigma_sq_transverse_2]),
                }
            })
            .collect(),
        Method::Oracle => {
            let scheme = QuadratureScheme::new(config.quad_order)?;
            let vm = oracle::velocity_moments(&GaussianMomentumAmplitude::new(*spec), &scheme)?;
            config
                .times
                .iter()
                .map(|&t| vm.at(spec.sigma(), t).to_moment_set())
                .collect()
        }
        Method::Grid => {
            let t_max = config.times.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let grid = MomentumGrid::sized_for(spec, config.grid_dimension, config.grid_points, t_max)?;
            let initial = propagator::init_packet_on_grid(spec, &grid)?;
            config
                .times
                .iter()
                .map(|&t| propagator::grid_moments(&propagator::to_position_density(&propagator::evolve(&initial, t))))
                .collect::<Result<_>>()?
        }
    };
    Ok(MethodCurves {
        longitudinal: moments.iter().map(|m| (m.time, m.longitudinal)).collect(),
        transverse: moments
            .iter()
            .map(|m| m.transverse.map(|[a, b]| (m.time, 0.5 * (a + b))))
            .collect(),
    })
}

struct PointResult {
    curves: Vec<CurvePoint>,
    fits: Vec<AxisFit>,
    deltas: Vec<MethodDelta>,
    failures: Vec<PointFailure>,
}

/// Runs every requested method at every momentum, fits the exponents against
/// each method's own rest curve and tabulates method-vs-method deltas.
/// Failures of individual points are collected, not propagated.
pub fn compare_methods(config: &SweepConfig) -> Result<RetardationReport> {
    config.validate()?;
    let rest_spec = config.spec(0.0)?;

    let rest: Vec<std::result::Result<RestCurve, PointFailure>> = config
        .methods
        .par_iter()
        .map(|&method| {
            let fail = |e: Error| PointFailure {
                p: 0.0,
                method,
                message: format!("rest curve: {e}"),
            };
            let curves = run_method(config, &rest_spec, method).map_err(fail)?;
            let fit = fit_spreading_coefficient(&curves.longitudinal).map_err(fail)?;
            Ok(RestCurve {
                method,
                points: curves.longitudinal,
                coefficient: fit.coefficient,
            })
        })
        .collect();
    let mut failures = Vec::new();
    let mut rest_curves = Vec::new();
    for r in rest {
        match r {
            Ok(c) => rest_curves.push(c),
            Err(f) => failures.push(f),
        }
    }

    let points: Vec<PointResult> = config
        .momenta
        .par_iter()
        .map(|&p| run_point(config, p, &rest_curves))
        .collect();

    let mut curves = Vec::new();
    let mut fits = Vec::new();
    let mut deltas = Vec::new();
    for pr in points {
        curves.extend(pr.curves);
        fits.extend(pr.fits);
        deltas.extend(pr.deltas);
        failures.extend(pr.failures);
    }
    Ok(RetardationReport {
        config: config.clone(),
        validity: check_validity(&rest_spec),
        curves,
        rest_curves,
        fits,
        deltas,
        failures,
    })
}

fn run_point(config: &SweepConfig, p: f64, rest_curves: &[RestCurve]) -> PointResult {
    let mut out = PointResult {
        curves: Vec::new(),
        fits: Vec::new(),
        deltas: Vec::new(),
        failures: Vec::new(),
    };
    let spec = match config.spec(p) {
        Ok(s) => s,
        Err(e) => {
            for &method in &config.methods {
                out.failures.push(PointFailure {
                    p,
                    method,
                    message: e.to_string(),
                });
            }
            return out;
        }
    };
    let gamma = derive_kinematics(&spec).gamma;

    let mut per_method: Vec<(Method, MethodCurves)> = Vec::new();
    for &method in &config.methods {
        match run_method(config, &spec, method) {
            Ok(c) => per_method.push((method, c)),
            Err(e) => out.failures.push(PointFailure {
                p,
                method,
                message: e.to_string(),
            }),
        }
    }

    for (method, curves) in &per_method {
        let rest = rest_curves.iter().find(|r| r.method == *method);
        let axes = [
            Some((Axis::Longitudinal, &curves.longitudinal)),
            curves.transverse.as_ref().map(|c| (Axis::Transverse, c)),
        ];
        for (axis, curve) in axes.into_iter().flatten() {
            out.curves.extend(curve.iter().map(|&(t, sigma_sq)| CurvePoint {
                p,
                gamma,
                axis,
                method: *method,
                t,
                sigma_sq,
            }));
            let Some(rest) = rest else { continue };
            let fit = match fit_retardation_exponent(curve, rest.coefficient, gamma) {
                Ok(f) => Some(f),
                Err(Error::DegenerateFrame { .. }) => None,
                Err(e) => {
                    out.failures.push(PointFailure {
                        p,
                        method: *method,
                        message: format!("{axis} fit: {e}"),
                    });
                    continue;
                }
            };
            out.fits.push(AxisFit {
                p,
                gamma,
                axis,
                method: *method,
                alpha: fit.map(|f| f.alpha),
                residual: fit.map(|f| f.residual),
                non_quadratic: fit.is_some_and(|f| f.non_quadratic),
                gamma_alpha: fit.map(|f| gamma.powf(f.alpha)),
                verdict: fit.map_or(Verdict::Degenerate, |f| er_verdict(f.alpha, config.verdict_tolerance)),
            });
        }
    }

    for (i, (ma, ca)) in per_method.iter().enumerate() {
        for (mb, cb) in &per_method[i + 1..] {
            let pairs = [
                Some((Axis::Longitudinal, &ca.longitudinal, &cb.longitudinal)),
                ca.transverse
                    .as_ref()
                    .zip(cb.transverse.as_ref())
                    .map(|(a, b)| (Axis::Transverse, a, b)),
            ];
            for (axis, a, b) in pairs.into_iter().flatten() {
                let max_relative_delta = a
                    .iter()
                    .zip(b)
                    .map(|((_, x), (_, y))| (x - y).abs() / y.abs())
                    .fold(0.0, f64::max);
                out.deltas.push(MethodDelta {
                    p,
                    axis,
                    method_a: *ma,
                    method_b: *mb,
                    max_relative_delta,
                });
            }
        }
    }
    out
}
