//! Spectral evolution on a momentum grid and Newton-Wigner densities.
//!
//! The momentum amplitude is sampled on a uniform grid centred on the mean
//! momentum, multiplied by the exact phase `exp(-i t E_k)` and Fourier
//! synthesised,
//!
//! ```text
//! Psi(x, t) = (2 pi)^(-d/2) int d^dk exp(i k.x) Phi(k) exp(-i t E_k),
//! ```
//!
//! onto the reciprocal position grid. The position box is re-centred on the
//! closed-form mean position at each time so the packet never wraps around
//! the periodic box. Moments are then plain weighted sums over `|Psi|^2`.
//!
//! One-dimensional grids live on the line through the origin along `p`
//! (third axis of the [`PacketFrame`]); three-dimensional grids use lab
//! coordinates.

use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic;
use crate::error::{Error, Result};
use crate::frame::PacketFrame;
use crate::model::PacketSpec;
use crate::oracle::GaussianMomentumAmplitude;
use crate::{Dimension, Method, MomentSet};

/// Minimum grid halfwidth in units of `1/sigma`: `|Phi|^2` has dropped to
/// `exp(-50)` there.
pub const MIN_HALFWIDTH_SIGMA: f64 = 5.0;
/// Halfwidth used when sizing a grid automatically.
pub const DEFAULT_HALFWIDTH_SIGMA: f64 = 6.0;
/// Box margin in predicted standard deviations.
pub const BOX_MARGIN_SIGMAS: f64 = 8.0;
/// Edge-to-peak density ratio above which the packet is taken to wrap.
pub const WRAP_THRESHOLD: f64 = 1e-10;

pub const DEFAULT_POINTS_1D: usize = 128;
pub const DEFAULT_POINTS_3D: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    dimension: Dimension,
    points_per_axis: usize,
    k_center: Vector3<f64>,
    k_halfwidth: f64,
}

impl MomentumGrid {
    /// Uniform grid `k_center + (i - N/2) dk`, `dk = 2 halfwidth / N`.
    ///
    /// For a one-dimensional grid only `k_center.z` is used.
    pub fn new(dimension: Dimension, points_per_axis: usize, k_center: Vector3<f64>, k_halfwidth: f64) -> Result<Self> {
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {points_per_axis}"
            )));
        }
        if !(k_halfwidth > 0.0 && k_halfwidth.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "halfwidth must be positive, got {k_halfwidth}"
            )));
        }
        if k_center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid centre".into()));
        }
        Ok(MomentumGrid {
            dimension,
            points_per_axis,
            k_center,
            k_halfwidth,
        })
    }

    /// Grid centred on the packet with halfwidth `6/sigma`.
    pub fn for_packet(spec: &PacketSpec, dimension: Dimension, points_per_axis: usize) -> Result<Self> {
        Self::new(
            dimension,
            points_per_axis,
            Self::packet_center(spec, dimension),
            DEFAULT_HALFWIDTH_SIGMA / spec.sigma(),
        )
    }

    /// [`for_packet`](Self::for_packet) plus the box check up to `t_max`.
    pub fn sized_for(spec: &PacketSpec, dimension: Dimension, points_per_axis: usize, t_max: f64) -> Result<Self> {
        let grid = Self::for_packet(spec, dimension, points_per_axis)?;
        grid.check_box(spec, t_max)?;
        Ok(grid)
    }

    fn packet_center(spec: &PacketSpec, dimension: Dimension) -> Vector3<f64> {
        match dimension {
            Dimension::One => Vector3::new(0.0, 0.0, spec.momentum_magnitude()),
            Dimension::Three => spec.mean_momentum(),
        }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn k_center(&self) -> Vector3<f64> {
        self.k_center
    }

    pub fn k_halfwidth(&self) -> f64 {
        self.k_halfwidth
    }

    pub fn dk(&self) -> f64 {
        2.0 * self.k_halfwidth / self.points_per_axis as f64
    }

    /// Position spacing `2 pi / (N dk)`.
    pub fn dx(&self) -> f64 {
        2.0 * PI / (self.points_per_axis as f64 * self.dk())
    }

    pub fn box_half_length(&self) -> f64 {
        0.5 * self.points_per_axis as f64 * self.dx()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dimension.count() as u32)
    }

    /// Same centre and halfwidth with `factor` times the points.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.dimension,
            self.points_per_axis * factor,
            self.k_center,
            self.k_halfwidth,
        )
    }

    fn axes(&self) -> std::ops::Range<usize> {
        match self.dimension {
            Dimension::One => 2..3,
            Dimension::Three => 0..3,
        }
    }

    fn axis_values(&self, axis: usize) -> Vec<f64> {
        let n = self.points_per_axis as isize;
        let dk = self.dk();
        (0..n).map(|i| self.k_center[axis] + (i - n / 2) as f64 * dk).collect()
    }

    /// Rejects grids whose support does not reach `5/sigma` beyond the
    /// packet centre on every axis.
    pub fn check_support(&self, spec: &PacketSpec) -> Result<()> {
        let center = Self::packet_center(spec, self.dimension);
        let worst = self
            .axes()
            .map(|a| (self.k_halfwidth - (center[a] - self.k_center[a]).abs()) * spec.sigma())
            .fold(f64::INFINITY, f64::min);
        if worst < MIN_HALFWIDTH_SIGMA {
            return Err(Error::GridSupport { halfwidth_sigma: worst });
        }
        Ok(())
    }

    /// Checks that the re-centred box holds `8` predicted standard deviations
    /// on each side at `|t| <= t_max`.
    pub fn check_box(&self, spec: &PacketSpec, t_max: f64) -> Result<()> {
        let t = t_max.abs();
        let widest = match self.dimension {
            Dimension::One => analytic::longitudinal_dispersion(spec, t),
            Dimension::Three => {
                analytic::longitudinal_dispersion(spec, t).max(analytic::transverse_dispersion(spec, t))
            }
        }
        .sqrt();
        let required = BOX_MARGIN_SIGMAS * widest;
        let available = self.box_half_length();
        if available < required {
            return Err(Error::GridBox { required, available });
        }
        Ok(())
    }
}

/// Momentum amplitude `Phi(k) exp(-i t E_k)` on a grid.
///
/// The real initial samples are kept and the phase is applied for the total
/// elapsed time, so successive evolutions compose exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedGridState {
    grid: MomentumGrid,
    spec: PacketSpec,
    initial: Vec<f64>,
    energies: Vec<f64>,
    time: f64,
}

impl EvolvedGridState {
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn spec(&self) -> &PacketSpec {
        &self.spec
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Initial (real) samples, row-major with the last axis fastest.
    pub fn initial_samples(&self) -> &[f64] {
        &self.initial
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.initial
            .iter()
            .zip(&self.energies)
            .map(|(&a, &e)| Complex64::from_polar(a, -self.time * e))
            .collect()
    }

    /// `sum |Phi_t|^2 dk^d`.
    pub fn norm(&self) -> f64 {
        let cell = self.grid.dk().powi(self.grid.dimension.count() as i32);
        self.amplitudes().iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }
}

pub fn init_packet_on_grid(spec: &PacketSpec, grid: &MomentumGrid) -> Result<EvolvedGridState> {
    grid.check_support(spec)?;
    let amp = GaussianMomentumAmplitude::new(*spec);
    let m = spec.mass();
    let center = MomentumGrid::packet_center(spec, grid.dimension);
    let (initial, energies) = match grid.dimension {
        Dimension::One => {
            let k = grid.axis_values(2);
            let initial = k.iter().map(|&k| amp.axis_factor(k, center.z)).collect();
            let energies = k.iter().map(|&k| k.hypot(m)).collect();
            (initial, energies)
        }
        Dimension::Three => {
            let axes: Vec<Vec<f64>> = (0..3).map(|a| grid.axis_values(a)).collect();
            let factors: Vec<Vec<f64>> = (0..3)
                .map(|a| axes[a].iter().map(|&k| amp.axis_factor(k, center[a])).collect())
                .collect();
            let total = grid.total_points();
            let mut initial = Vec::with_capacity(total);
            let mut energies = Vec::with_capacity(total);
            for (k0, f0) in axes[0].iter().zip(&factors[0]) {
                for (k1, f1) in axes[1].iter().zip(&factors[1]) {
                    let k01 = k0.hypot(*k1);
                    let f01 = f0 * f1;
                    for (k2, f2) in axes[2].iter().zip(&factors[2]) {
                        initial.push(f01 * f2);
                        energies.push(k01.hypot(*k2).hypot(m));
                    }
                }
            }
            (initial, energies)
        }
    };
    Ok(EvolvedGridState {
        grid: *grid,
        spec: *spec,
        initial,
        energies,
        time: 0.0,
    })
}

/// Advances the state by `t`.
pub fn evolve(state: &EvolvedGridState, t: f64) -> EvolvedGridState {
    EvolvedGridState {
        time: state.time + t,
        ..state.clone()
    }
}

/// `|Psi|^2` on the position grid `origin + (j - N/2) dx` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub dimension: Dimension,
    pub points_per_axis: usize,
    pub dx: f64,
    /// Box centre: lab coordinates in 3D, line coordinate in `z` for 1D.
    pub origin: Vector3<f64>,
    pub time: f64,
    pub frame: PacketFrame,
    /// Row-major samples, last axis fastest.
    pub values: Vec<f64>,
    /// Largest face value over the peak value.
    pub edge_ratio: f64,
}

impl DensityField {
    pub fn norm(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx.powi(self.dimension.count() as i32)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn wrapped(&self) -> bool {
        self.edge_ratio.is_nan() || self.edge_ratio > WRAP_THRESHOLD
    }

    fn coordinate(&self, axis: usize, j: usize) -> f64 {
        self.origin[axis] + (j as f64 - (self.points_per_axis / 2) as f64) * self.dx
    }

    /// Plain CSV: `x,rho` in 1D, `x1,x2,x3,rho` in 3D; 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.points_per_axis;
        match self.dimension {
            Dimension::One => {
                writeln!(w, "x,rho")?;
                for (j, rho) in self.values.iter().enumerate() {
                    writeln!(w, "{:.16e},{:.16e}", self.coordinate(2, j), rho)?;
                }
            }
            Dimension::Three => {
                writeln!(w, "x1,x2,x3,rho")?;
                for (idx, rho) in self.values.iter().enumerate() {
                    let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        self.coordinate(0, a),
                        self.coordinate(1, b),
                        self.coordinate(2, c),
                        rho
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Whitespace-separated `x rho` along one axis through the box centre.
    /// Axis indices are `0..3`; a one-dimensional field only has axis `2`.
    pub fn write_axis_slice<W: Write>(&self, axis: usize, mut w: W) -> io::Result<()> {
        let n = self.points_per_axis;
        let mid = n / 2;
        writeln!(w, "# x{} rho   t = {:.16e}", axis + 1, self.time)?;
        match self.dimension {
            Dimension::One => {
                if axis != 2 {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidInput,
                        "1D density only has axis 3",
                    ));
                }
                for (j, rho) in self.values.iter().enumerate() {
                    writeln!(w, "{:.16e} {:.16e}", self.coordinate(2, j), rho)?;
                }
            }
            Dimension::Three => {
                if axis > 2 {
                    return Err(io::Error::new(io::ErrorKind::InvalidInput, "axis out of range"));
                }
                for j in 0..n {
                    let mut idx = [mid; 3];
                    idx[axis] = j;
                    let rho = self.values[(idx[0] * n + idx[1]) * n + idx[2]];
                    writeln!(w, "{:.16e} {:.16e}", self.coordinate(axis, j), rho)?;
                }
            }
        }
        Ok(())
    }
}

pub fn to_position_density(state: &EvolvedGridState) -> DensityField {
    let grid = &state.grid;
    let n = grid.points_per_axis;
    let frame = PacketFrame::of(&state.spec);
    let center = analytic::mean_position(&state.spec, state.time);
    let origin = match grid.dimension {
        Dimension::One => Vector3::new(0.0, 0.0, frame.e3.dot(&center)),
        Dimension::Three => center,
    };

    // exp(i (i - N/2) dk x_c) (-1)^i per axis moves the box to x_c and puts
    // the zero-frequency sample where the unshifted inverse FFT expects it
    let dk = grid.dk();
    let modulation: Vec<Vec<Complex64>> = (0..3)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let shift = (i as f64 - (n / 2) as f64) * dk * origin[a];
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    Complex64::from_polar(sign, shift)
                })
                .collect()
        })
        .collect();

    let mut data = state.amplitudes();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    match grid.dimension {
        Dimension::One => {
            for (x, f) in data.iter_mut().zip(&modulation[2]) {
                *x *= f;
            }
            fft.process(&mut data);
        }
        Dimension::Three => {
            for (idx, x) in data.iter_mut().enumerate() {
                *x *= modulation[0][idx / (n * n)] * modulation[1][(idx / n) % n] * modulation[2][idx % n];
            }
            transform_3d(&mut data, n, fft.as_ref());
        }
    }

    let d = grid.dimension.count() as i32;
    let scale = (dk * dk / (2.0 * PI)).powi(d);
    let values: Vec<f64> = data.iter().map(|z| z.norm_sqr() * scale).collect();
    let peak = values.iter().copied().fold(0.0, f64::max);
    let edge = face_maximum(&values, n, grid.dimension);
    DensityField {
        dimension: grid.dimension,
        points_per_axis: n,
        dx: grid.dx(),
        origin,
        time: state.time,
        frame,
        edge_ratio: if peak > 0.0 { edge / peak } else { f64::INFINITY },
        values,
    }
}

fn transform_3d(data: &mut [Complex64], n: usize, fft: &dyn rustfft::Fft<f64>) {
    // last axis is contiguous
    for line in data.chunks_exact_mut(n) {
        fft.process(line);
    }
    let mut line = vec![Complex64::default(); n];
    for (stride, outer) in [(n, n * n), (n * n, n * n * n)] {
        for base in (0..data.len()).step_by(outer) {
            for offset in 0..stride {
                let start = base + offset;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[start + j * stride] = *v;
                }
            }
        }
    }
}

fn face_maximum(values: &[f64], n: usize, dimension: Dimension) -> f64 {
    match dimension {
        Dimension::One => values[0].max(values[n - 1]),
        Dimension::Three => {
            let mut edge = 0.0f64;
            for (idx, &v) in values.iter().enumerate() {
                let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
                if [a, b, c].iter().any(|&i| i == 0 || i == n - 1) {
                    edge = edge.max(v);
                }
            }
            edge
        }
    }
}

/// Mean position and dispersions by summation over the density grid.
pub fn grid_moments(density: &DensityField) -> Result<MomentSet> {
    if density.wrapped() {
        return Err(Error::WrapAround {
            time: density.time,
            edge_ratio: density.edge_ratio,
        });
    }
    let n = density.points_per_axis;
    let mid = (n / 2) as f64;
    let total: f64 = density.values.iter().sum();
    let offset = |j: usize| (j as f64 - mid) * density.dx;
    match density.dimension {
        Dimension::One => {
            let mean = density
                .values
                .iter()
                .enumerate()
                .map(|(j, r)| offset(j) * r)
                .sum::<f64>()
                / total;
            let var = density
                .values
                .iter()
                .enumerate()
                .map(|(j, r)| (offset(j) - mean).powi(2) * r)
                .sum::<f64>()
                / total;
            Ok(MomentSet {
                time: density.time,
                method: Method::Grid,
                mean_position: density.frame.e3 * (density.origin.z + mean),
                longitudinal: var,
                transverse: None,
            })
        }
        Dimension::Three => {
            let coords = |idx: usize| Vector3::new(offset(idx / (n * n)), offset((idx / n) % n), offset(idx % n));
            let mean = density
                .values
                .iter()
                .enumerate()
                .fold(Vector3::zeros(), |acc, (idx, r)| acc + coords(idx) * *r)
                / total;
            let cov = density
                .values
                .iter()
                .enumerate()
                .fold(Matrix3::zeros(), |acc, (idx, r)| {
                    let d = coords(idx) - mean;
                    acc + d * d.transpose() * *r
                })
                / total;
            let f = &density.frame;
            let along = |e: &Vector3<f64>| (e.transpose() * cov * e)[(0, 0)];
            Ok(MomentSet {
                time: density.time,
                method: Method::Grid,
                mean_position: density.origin + mean,
                longitudinal: along(&f.e3),
                transverse: Some([along(&f.e1), along(&f.e2)]),
            })
        }
    }
}

/// Summary of one density snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub momentum_norm: f64,
    pub density_norm: f64,
    pub peak: f64,
    pub edge_ratio: f64,
    pub wrapped: bool,
    /// `None` when the density wrapped.
    pub moments: Option<MomentSet>,
}

pub fn snapshot_series(spec: &PacketSpec, grid: &MomentumGrid, times: &[f64]) -> Result<Vec<Snapshot>> {
    let initial = init_packet_on_grid(spec, grid)?;
    Ok(times
        .iter()
        .map(|&t| {
            let state = evolve(&initial, t);
            let density = to_position_density(&state);
            Snapshot {
                time: t,
                momentum_norm: state.norm(),
                density_norm: density.norm(),
                peak: density.peak(),
                edge_ratio: density.edge_ratio,
                wrapped: density.wrapped(),
                moments: grid_moments(&density).ok(),
            }
        })
        .collect())
}
