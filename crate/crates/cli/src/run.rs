use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use erlab::harness::{compare_methods, fmt_num, RetardationReport};
use erlab::oracle::{self, GaussianMomentumAmplitude, QuadratureScheme};
use erlab::propagator::{self, MomentumGrid, Snapshot};
use erlab::{analytic, check_validity, derive_kinematics, Error as CoreError, Method, MomentSet, PacketSpec};
use serde_json::json;
use thiserror::Error;

use crate::config::{CommandKind, Format, RunConfig};
use crate::output::{emit_plotdata, opt_num, sibling, tag_of, write_atomic};

pub const DISPERSION_HEADER: &str = "m,sigma,p,gamma,method,t,x1,x2,x3,sigma1_sq,sigma2_sq,sigma3_sq";
pub const EVOLVE_HEADER: &str = "t,momentum_norm,density_norm,peak,edge_ratio,wrapped,x3,sigma1_sq,sigma2_sq,sigma3_sq";
pub const RESIDUAL_HEADER: &str = "lambda,k1,k2,k3,residual,residual_over_lambda3";
pub const RESIDUAL_LAMBDAS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
/// Allowed spread of `residual / lambda^3` between the two smallest lambdas.
pub const CUBIC_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(_) => crate::EXIT_VALIDATION,
            RunError::Io { .. } => crate::EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_status: i32,
    pub computed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: Duration,
    pub table: String,
}

impl RunSummary {
    /// Table plus counts, outputs and wall time.
    pub fn render(&self) -> String {
        let mut s = self.table.clone();
        let _ = writeln!(
            s,
            "points: {} computed, {} failed   wall time {:.3} s",
            self.computed,
            self.failed,
            self.wall_time.as_secs_f64()
        );
        for f in &self.failures {
            let _ = writeln!(s, "  failed: {f}");
        }
        for p in &self.outputs {
            let _ = writeln!(s, "wrote {}", p.display());
        }
        s
    }
}

/// Result of a subcommand before anything is written.
struct Outcome {
    data: Vec<u8>,
    computed: usize,
    failures: Vec<String>,
    table: String,
    extra: Extra,
}

enum Extra {
    None,
    Report(Box<RetardationReport>),
    Densities(Vec<propagator::DensityField>),
}

/// Runs the subcommand. Data goes to `config.out`, or to `stdout` when no
/// output file is set; side files (config echo, plot data, density slices)
/// are only written alongside an output file.
pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let outcome = match config.command {
        CommandKind::Dispersion => dispersion(config)?,
        CommandKind::Evolve => evolve(config)?,
        CommandKind::ErTest | CommandKind::Sweep => retardation(config)?,
        CommandKind::Residual => residual(config)?,
    };

    let mut outputs = Vec::new();
    match &config.out {
        Some(out) => {
            write_atomic(out, |w| w.write_all(&outcome.data)).map_err(io_err(out))?;
            outputs.push(out.clone());
            let echo_path = sibling(out, ".config.json");
            write_atomic(&echo_path, |w| {
                serde_json::to_writer_pretty(&mut *w, &config.echo())?;
                writeln!(w)
            })
            .map_err(io_err(&echo_path))?;
            outputs.push(echo_path);

            let dir = out.parent().unwrap_or(Path::new(""));
            let tag = tag_of(out);
            match &outcome.extra {
                Extra::None => {}
                Extra::Report(report) => outputs.extend(emit_plotdata(report, dir, &tag).map_err(io_err(dir))?),
                Extra::Densities(fields) => {
                    for (i, d) in fields.iter().enumerate() {
                        let path = dir.join(format!("{tag}_density_{i}.dat"));
                        write_atomic(&path, |w| d.write_axis_slice(2, w)).map_err(io_err(&path))?;
                        outputs.push(path);
                    }
                }
            }
        }
        None => stdout.write_all(&outcome.data).map_err(io_err(Path::new("<stdout>")))?,
    }

    let failed = outcome.failures.len();
    Ok(RunSummary {
        exit_status: if failed > 0 {
            crate::EXIT_POINT_FAILURES
        } else {
            crate::EXIT_OK
        },
        computed: outcome.computed,
        failed,
        failures: outcome.failures,
        outputs,
        wall_time: start.elapsed(),
        table: outcome.table,
    })
}

fn header(config: &RunConfig, spec: &PacketSpec) -> String {
    let v = check_validity(spec);
    format!(
        "erlab {}   m = {}   sigma = {}   sigma*m = {} ({})\n",
        config.command,
        spec.mass(),
        spec.sigma(),
        v.sigma_m,
        v.class
    )
}

fn to_json(value: &impl serde::Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report values serialize");
    v.push(b'\n');
    v
}

fn method_moments(config: &RunConfig, method: Method) -> Result<Vec<Result<MomentSet, CoreError>>, CoreError> {
    let spec = &config.spec;
    Ok(match method {
        Method::Analytic => config
            .times
            .iter()
            .map(|&t| {
                let c = analytic::closed_form_moments(spec, t);
                Ok(MomentSet {
                    time: t,
                    method,
                    mean_position: c.mean_position,
                    longitudinal: c.sigma_sq_longitudinal,
                    transverse: Some([c.sigma_sq_transverse_1, c.sigma_sq_transverse_2]),
                })
            })
            .collect(),
        Method::Oracle => {
            let scheme = QuadratureScheme::new(config.quad_order)?;
            let vm = oracle::velocity_moments(&GaussianMomentumAmplitude::new(*spec), &scheme)?;
            config
                .times
                .iter()
                .map(|&t| Ok(vm.at(spec.sigma(), t).to_moment_set()))
                .collect()
        }
        Method::Grid => {
            let t_max = config.times.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let grid = MomentumGrid::sized_for(spec, config.dim, config.grid_n, t_max)?;
            let initial = propagator::init_packet_on_grid(spec, &grid)?;
            config
                .times
                .iter()
                .map(|&t| propagator::grid_moments(&propagator::to_position_density(&propagator::evolve(&initial, t))))
                .collect()
        }
    })
}

fn dispersion(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = &config.spec;
    let kin = derive_kinematics(spec);
    let mut moments = Vec::new();
    let mut failures = Vec::new();
    for &method in &config.methods {
        match method_moments(config, method) {
            Ok(points) => {
                for (t, r) in config.times.iter().zip(points) {
                    match r {
                        Ok(m) => moments.push(m),
                        Err(e) => failures.push(format!("{method} at t = {t}: {e}")),
                    }
                }
            }
            Err(e) => failures.push(format!("{method}: {e}")),
        }
    }

    let data = match config.format {
        Format::Csv => {
            let mut s = format!("{DISPERSION_HEADER}\n");
            for m in &moments {
                let [t1, t2] = m.transverse.map_or([None, None], |[a, b]| [Some(a), Some(b)]);
                let x = m.mean_position;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    fmt_num(spec.mass()),
                    fmt_num(spec.sigma()),
                    fmt_num(spec.momentum_magnitude()),
                    fmt_num(kin.gamma),
                    m.method,
                    fmt_num(m.time),
                    fmt_num(x.x),
                    fmt_num(x.y),
                    fmt_num(x.z),
                    opt_num(t1),
                    opt_num(t2),
                    fmt_num(m.longitudinal)
                );
            }
            s.into_bytes()
        }
        Format::Json => to_json(&json!({
            "spec": spec,
            "kinematics": kin,
            "validity": check_validity(spec),
            "moments": moments,
            "failures": failures,
        })),
    };

    let mut table = header(config, spec);
    let _ = writeln!(table, "gamma = {:.6}   |p| = {}", kin.gamma, spec.momentum_magnitude());
    let _ = writeln!(
        table,
        "{:<9} {:>10} {:>16} {:>16} {:>16}",
        "method", "t", "sigma1^2", "sigma2^2", "sigma3^2"
    );
    for m in &moments {
        let [t1, t2] = m.transverse.map_or(["-".to_string(), "-".to_string()], |[a, b]| {
            [format!("{a:.10}"), format!("{b:.10}")]
        });
        let _ = writeln!(
            table,
            "{:<9} {:>10} {:>16} {:>16} {:>16.10}",
            m.method.as_str(),
            m.time,
            t1,
            t2,
            m.longitudinal
        );
    }
    Ok(Outcome {
        data,
        computed: moments.len(),
        failures,
        table,
        extra: Extra::None,
    })
}

fn evolve(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = &config.spec;
    let t_max = config.times.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let grid = MomentumGrid::sized_for(spec, config.dim, config.grid_n, t_max)?;
    let initial = propagator::init_packet_on_grid(spec, &grid)?;

    let mut snapshots = Vec::new();
    let mut densities = Vec::new();
    let mut failures = Vec::new();
    for &t in &config.times {
        let state = propagator::evolve(&initial, t);
        let density = propagator::to_position_density(&state);
        let moments = match propagator::grid_moments(&density) {
            Ok(m) => Some(m),
            Err(e) => {
                failures.push(format!("t = {t}: {e}"));
                None
            }
        };
        snapshots.push(Snapshot {
            time: t,
            momentum_norm: state.norm(),
            density_norm: density.norm(),
            peak: density.peak(),
            edge_ratio: density.edge_ratio,
            wrapped: density.wrapped(),
            moments,
        });
        densities.push(density);
    }

    let data = match config.format {
        Format::Csv => {
            let mut s = format!("{EVOLVE_HEADER}\n");
            for snap in &snapshots {
                let m = snap.moments.as_ref();
                let [t1, t2] = m
                    .and_then(|m| m.transverse)
                    .map_or([None, None], |[a, b]| [Some(a), Some(b)]);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    fmt_num(snap.time),
                    fmt_num(snap.momentum_norm),
                    fmt_num(snap.density_norm),
                    fmt_num(snap.peak),
                    fmt_num(snap.edge_ratio),
                    snap.wrapped,
                    opt_num(m.map(|m| m.mean_position.z)),
                    opt_num(t1),
                    opt_num(t2),
                    opt_num(m.map(|m| m.longitudinal))
                );
            }
            s.into_bytes()
        }
        Format::Json => to_json(&json!({
            "spec": spec,
            "grid": {
                "dimension": grid.dimension().count(),
                "points_per_axis": grid.points_per_axis(),
                "k_center": grid.k_center(),
                "k_halfwidth": grid.k_halfwidth(),
                "dx": grid.dx(),
            },
            "snapshots": snapshots,
        })),
    };

    let mut table = header(config, spec);
    let _ = writeln!(
        table,
        "gamma = {:.6}   grid {}^{}   dx = {:.6}",
        derive_kinematics(spec).gamma,
        grid.points_per_axis(),
        grid.dimension().count(),
        grid.dx()
    );
    let _ = writeln!(
        table,
        "{:>10} {:>14} {:>14} {:>16} {:>8}",
        "t", "norm", "peak", "sigma3^2", "wrapped"
    );
    for s in &snapshots {
        let sl = s
            .moments
            .as_ref()
            .map_or("-".to_string(), |m| format!("{:.10}", m.longitudinal));
        let _ = writeln!(
            table,
            "{:>10} {:>14.12} {:>14.6e} {:>16} {:>8}",
            s.time, s.density_norm, s.peak, sl, s.wrapped
        );
    }
    Ok(Outcome {
        data,
        computed: snapshots.len() - failures.len(),
        failures,
        table,
        extra: Extra::Densities(densities),
    })
}

fn retardation(config: &RunConfig) -> Result<Outcome, RunError> {
    let report = compare_methods(&config.sweep_config())?;
    let mut data = Vec::new();
    match config.format {
        Format::Csv => report.write_csv(&mut data),
        Format::Json => report.write_json(&mut data).and_then(|_| writeln!(data)),
    }
    .expect("writing to a Vec cannot fail");

    let mut table = header(config, &config.spec);
    let _ = writeln!(
        table,
        "{:>12} {:>10} {:<13} {:<9} {:>10} {:>8}",
        "p", "gamma", "axis", "method", "alpha", "verdict"
    );
    for f in &report.fits {
        let alpha = f.alpha.map_or("-".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(
            table,
            "{:>12.8} {:>10.6} {:<13} {:<9} {:>10} {:>8}{}",
            f.p,
            f.gamma,
            f.axis.as_str(),
            f.method.as_str(),
            alpha,
            f.verdict.as_str(),
            if f.non_quadratic { "  (non-quadratic)" } else { "" }
        );
    }
    for d in &report.deltas {
        let _ = writeln!(
            table,
            "max |{} - {}| / {} on {} at p = {}: {:.3e}",
            d.method_a, d.method_b, d.method_b, d.axis, d.p, d.max_relative_delta
        );
    }
    let failures = report
        .failures
        .iter()
        .map(|f| format!("{} at p = {}: {}", f.method, f.p, f.message))
        .collect();
    Ok(Outcome {
        data,
        computed: report.curves.len(),
        failures,
        table,
        extra: Extra::Report(Box::new(report)),
    })
}

/// `residual(lambda k')` and `residual / lambda^3` on the fixed lambda ladder.
pub fn residual_ladder(spec: &PacketSpec, kprime: &nalgebra::Vector3<f64>) -> Vec<(f64, f64, f64)> {
    RESIDUAL_LAMBDAS
        .iter()
        .map(|&l| {
            let r = analytic::dispersion_relation_residual(spec, &(kprime * l));
            (l, r, r / l.powi(3))
        })
        .collect()
}

fn residual(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = &config.spec;
    let k = config.kprime;
    let ladder = residual_ladder(spec, &k);
    let (c4, c8) = (ladder[2].2, ladder[3].2);
    let spread = ((c4 - c8) / c8).abs();
    let cubic = c8 != 0.0 && spread < CUBIC_TOLERANCE;

    let data = match config.format {
        Format::Csv => {
            let mut s = format!("{RESIDUAL_HEADER}\n");
            for &(l, r, c) in &ladder {
                let kl = k * l;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    fmt_num(l),
                    fmt_num(kl.x),
                    fmt_num(kl.y),
                    fmt_num(kl.z),
                    fmt_num(r),
                    fmt_num(c)
                );
            }
            s.into_bytes()
        }
        Format::Json => to_json(&json!({
            "spec": spec,
            "kprime": k,
            "ladder": ladder
                .iter()
                .map(|&(l, r, c)| json!({"lambda": l, "residual": r, "residual_over_lambda3": c}))
                .collect::<Vec<_>>(),
            "cubic_spread": spread,
            "cubic": cubic,
        })),
    };

    let mut table = header(config, spec);
    let _ = writeln!(
        table,
        "gamma = {:.6}   k' = ({}, {}, {})",
        derive_kinematics(spec).gamma,
        k.x,
        k.y,
        k.z
    );
    let _ = writeln!(table, "{:>8} {:>22} {:>22}", "lambda", "residual", "residual/lambda^3");
    for &(l, r, c) in &ladder {
        let _ = writeln!(table, "{l:>8} {r:>22.12e} {c:>22.12e}");
    }
    let _ = writeln!(
        table,
        "cubic scaling: {} (spread {:.4} between lambda = 1/4 and 1/8, limit {})",
        if cubic { "yes" } else { "no" },
        spread,
        CUBIC_TOLERANCE
    );
    Ok(Outcome {
        data,
        computed: ladder.len(),
        failures: Vec::new(),
        table,
        extra: Extra::None,
    })
}
