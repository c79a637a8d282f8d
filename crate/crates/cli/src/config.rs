use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use erlab::harness::{SweepConfig, DEFAULT_VERDICT_TOLERANCE};
use erlab::oracle::QuadratureScheme;
use erlab::propagator::{DEFAULT_POINTS_1D, DEFAULT_POINTS_3D};
use erlab::{Dimension, Error as CoreError, Method, PacketSpec};
use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const DEFAULT_MASS: f64 = 1.0;
pub const DEFAULT_SIGMA: f64 = 5.0;
pub const DEFAULT_TIMES: [f64; 4] = [0.0, 5.0, 10.0, 20.0];
pub const DEFAULT_KPRIME: [f64; 3] = [0.0, 0.0, 0.6];
/// Lorentz factors of the default `sweep` momenta.
pub const DEFAULT_SWEEP_GAMMAS: [f64; 3] = [1.25, 2.0, 4.0];

/// Keys accepted in a config file. They match the long flag names.
pub const CONFIG_KEYS: &[&str] = &[
    "command",
    "m",
    "sigma",
    "p",
    "times",
    "method",
    "quad-order",
    "grid-n",
    "dim",
    "out",
    "format",
    "momenta",
    "kprime",
    "verdict-tolerance",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Also carries `--help` and `--version` output.
    #[error("{0}")]
    Usage(clap::Error),

    #[error("cannot read config file {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("malformed config file {}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },

    #[error("unknown key `{key}` in config file {}", path.display())]
    UnknownKey { path: PathBuf, key: String },

    #[error("conflicting options: {0}")]
    Conflict(String),

    #[error("invalid value for --{key}: {message}")]
    InvalidValue { key: &'static str, message: String },
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Read { .. } => crate::EXIT_IO,
            ConfigError::Usage(e) if !e.use_stderr() => crate::EXIT_OK,
            _ => crate::EXIT_VALIDATION,
        }
    }
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Dispersion,
    Evolve,
    ErTest,
    Residual,
    Sweep,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Dispersion => "dispersion",
            CommandKind::Evolve => "evolve",
            CommandKind::ErTest => "er-test",
            CommandKind::Residual => "residual",
            CommandKind::Sweep => "sweep",
        }
    }

    fn is_sweep(self) -> bool {
        matches!(self, CommandKind::ErTest | CommandKind::Sweep)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean momentum as given: a magnitude along z or a full vector.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MomentumArg {
    Scalar(f64),
    Triple([f64; 3]),
    #[serde(deserialize_with = "deserialize_momentum_text")]
    Text(Vector3<f64>),
}

impl MomentumArg {
    pub fn vector(self) -> Vector3<f64> {
        match self {
            MomentumArg::Scalar(p) => Vector3::new(0.0, 0.0, p),
            MomentumArg::Triple(v) => Vector3::from(v),
            MomentumArg::Text(v) => v,
        }
    }
}

fn deserialize_momentum_text<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
    let s = String::deserialize(d)?;
    parse_momentum(&s)
        .map(MomentumArg::vector)
        .map_err(serde::de::Error::custom)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", x.trim())))
        .collect()
}

fn parse_momentum(s: &str) -> Result<MomentumArg, String> {
    match parse_list(s)?.as_slice() {
        [p] => Ok(MomentumArg::Scalar(*p)),
        [a, b, c] => Ok(MomentumArg::Triple([*a, *b, *c])),
        other => Err(format!(
            "expected a magnitude or three components, got {} values",
            other.len()
        )),
    }
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    match parse_list(s)?.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(format!("expected three components, got {} values", other.len())),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "erlab",
    version,
    about = "Dispersion of free relativistic Gaussian wave packets"
)]
#[command(args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Position dispersions sigma_j^2(t) by each selected method
    Dispersion(Flags),
    /// Evolve the packet on the grid and write density snapshots
    Evolve(Flags),
    /// Fit the retardation exponent at one momentum and give the verdict
    ErTest(Flags),
    /// Residual of the quadratic expansion of the energy at k'
    Residual(Flags),
    /// Retardation exponents over a list of momenta, with plot data
    Sweep(Flags),
}

#[derive(Args, Debug, Default)]
#[command(allow_negative_numbers = true)]
struct Flags {
    /// Mass [default: 1]
    #[arg(long)]
    m: Option<f64>,
    /// Gaussian width sigma [default: 5]
    #[arg(long)]
    sigma: Option<f64>,
    /// Mean momentum: magnitude along z, or `px,py,pz` [default: sqrt(3) along z]
    #[arg(long, value_parser = parse_momentum)]
    p: Option<MomentumArg>,
    /// Comma-separated evaluation times [default: 0,5,10,20]
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// analytic | oracle | grid; repeatable [default: analytic]
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Gauss-Hermite order per axis [default: 40]
    #[arg(long)]
    quad_order: Option<usize>,
    /// Grid points per axis, a power of two [default: 128 in 1D, 64 in 3D]
    #[arg(long)]
    grid_n: Option<usize>,
    /// Grid dimension, 1 or 3 [default: 1]
    #[arg(long)]
    dim: Option<u8>,
    /// Output file; without it data goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat TOML or JSON file with the same keys as the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated momentum magnitudes for er-test and sweep
    #[arg(long, value_delimiter = ',')]
    momenta: Option<Vec<f64>>,
    /// Momentum offset `k1,k2,k3` for residual [default: 0,0,0.6]
    #[arg(long, value_parser = parse_triple)]
    kprime: Option<[f64; 3]>,
    /// Largest |alpha - 1| that still counts as "holds" [default: 0.05]
    #[arg(long)]
    verdict_tolerance: Option<f64>,
}

/// Unresolved settings from one source.
#[derive(Debug, Default, Clone)]
struct Settings {
    command: Option<String>,
    m: Option<f64>,
    sigma: Option<f64>,
    p: Option<MomentumArg>,
    times: Option<Vec<f64>>,
    method: Option<Vec<Method>>,
    quad_order: Option<usize>,
    grid_n: Option<usize>,
    dim: Option<u8>,
    out: Option<PathBuf>,
    format: Option<Format>,
    momenta: Option<Vec<f64>>,
    kprime: Option<[f64; 3]>,
    verdict_tolerance: Option<f64>,
}

impl From<Flags> for Settings {
    fn from(f: Flags) -> Self {
        Settings {
            command: None,
            m: f.m,
            sigma: f.sigma,
            p: f.p,
            times: f.times,
            method: (!f.method.is_empty()).then_some(f.method),
            quad_order: f.quad_order,
            grid_n: f.grid_n,
            dim: f.dim,
            out: f.out,
            format: f.format,
            momenta: f.momenta,
            kprime: f.kprime,
            verdict_tolerance: f.verdict_tolerance,
        }
    }
}

impl Settings {
    /// `top` wins key by key. `p` and `momenta` are alternatives, so setting
    /// either one in `top` clears both from `self`.
    fn overlay(mut self, top: Settings) -> Settings {
        if top.p.is_some() || top.momenta.is_some() {
            self.p = None;
            self.momenta = None;
        }
        Settings {
            command: top.command.or(self.command),
            m: top.m.or(self.m),
            sigma: top.sigma.or(self.sigma),
            p: top.p.or(self.p),
            times: top.times.or(self.times),
            method: top.method.or(self.method),
            quad_order: top.quad_order.or(self.quad_order),
            grid_n: top.grid_n.or(self.grid_n),
            dim: top.dim.or(self.dim),
            out: top.out.or(self.out),
            format: top.format.or(self.format),
            momenta: top.momenta.or(self.momenta),
            kprime: top.kprime.or(self.kprime),
            verdict_tolerance: top.verdict_tolerance.or(self.verdict_tolerance),
        }
    }
}

fn file_value<T: DeserializeOwned>(key: &'static str, value: Value) -> Result<T, ConfigError> {
    serde_json::from_value(value).map_err(|e| invalid(key, e.to_string()))
}

fn load_file(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    let malformed = |message: String| ConfigError::Malformed {
        path: path.to_owned(),
        message,
    };
    let table: Map<String, Value> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| malformed(e.message().to_string()))?;
        match serde_json::to_value(t).map_err(|e| malformed(e.to_string()))? {
            Value::Object(map) => map,
            _ => unreachable!("a TOML table serializes to an object"),
        }
    };

    let mut s = Settings::default();
    for (key, value) in table {
        let Some(&key) = CONFIG_KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                path: path.to_owned(),
                key,
            });
        };
        match key {
            "command" => s.command = Some(file_value(key, value)?),
            "m" => s.m = Some(file_value(key, value)?),
            "sigma" => s.sigma = Some(file_value(key, value)?),
            "p" => s.p = Some(file_value(key, value)?),
            "times" => s.times = Some(file_value(key, value)?),
            "method" => {
                s.method = Some(match value {
                    Value::Array(_) => file_value(key, value)?,
                    v => vec![file_value(key, v)?],
                })
            }
            "quad-order" => s.quad_order = Some(file_value(key, value)?),
            "grid-n" => s.grid_n = Some(file_value(key, value)?),
            "dim" => s.dim = Some(file_value(key, value)?),
            "out" => s.out = Some(file_value(key, value)?),
            "format" => s.format = Some(file_value(key, value)?),
            "momenta" => s.momenta = Some(file_value(key, value)?),
            "kprime" => s.kprime = Some(file_value(key, value)?),
            "verdict-tolerance" => s.verdict_tolerance = Some(file_value(key, value)?),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    Ok(s)
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    /// For `er-test` and `sweep` the momentum lives in `momenta` and this
    /// spec is at rest.
    pub spec: PacketSpec,
    pub times: Vec<f64>,
    pub methods: Vec<Method>,
    pub quad_order: usize,
    pub grid_n: usize,
    pub dim: Dimension,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Empty unless the command is `er-test` or `sweep`.
    pub momenta: Vec<f64>,
    pub kprime: Vector3<f64>,
    pub verdict_tolerance: f64,
}

impl RunConfig {
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            mass: self.spec.mass(),
            sigma: self.spec.sigma(),
            momenta: self.momenta.clone(),
            times: self.times.clone(),
            methods: self.methods.clone(),
            quad_order: self.quad_order,
            grid_points: self.grid_n,
            grid_dimension: self.dim,
            verdict_tolerance: self.verdict_tolerance,
        }
    }

    /// Canonical JSON of the effective configuration. Keys are sorted and
    /// match the config-file keys, so the echo can be fed back with
    /// `--config`.
    pub fn echo(&self) -> Value {
        let mut map = Map::new();
        map.insert("command".into(), json!(self.command.as_str()));
        map.insert("m".into(), json!(self.spec.mass()));
        map.insert("sigma".into(), json!(self.spec.sigma()));
        if self.command.is_sweep() {
            map.insert("momenta".into(), json!(self.momenta));
        } else {
            let p: [f64; 3] = self.spec.mean_momentum().into();
            map.insert("p".into(), json!(p));
        }
        map.insert("times".into(), json!(self.times));
        map.insert("method".into(), json!(self.methods));
        map.insert("quad-order".into(), json!(self.quad_order));
        map.insert("grid-n".into(), json!(self.grid_n));
        map.insert("dim".into(), json!(self.dim.count()));
        if let Some(out) = &self.out {
            map.insert("out".into(), json!(out));
        }
        map.insert("format".into(), json!(self.format));
        if self.command == CommandKind::Residual {
            let k: [f64; 3] = self.kprime.into();
            map.insert("kprime".into(), json!(k));
        }
        map.insert("verdict-tolerance".into(), json!(self.verdict_tolerance));
        Value::Object(map)
    }
}

fn spec_error(e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidParameter { field, value, reason } => {
            let key = match field {
                "mass" => "m",
                "mean_momentum" | "momenta" => "p",
                "quad_order" => "quad-order",
                "verdict_tolerance" => "verdict-tolerance",
                other => other,
            };
            invalid(key, format!("{value}: {reason}"))
        }
        CoreError::InsufficientData(msg) => invalid("times", msg),
        other => invalid("config", other.to_string()),
    }
}

/// Parses argv (including the program name) plus the optional config file.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ConfigError::Usage)?;
    let (command, flags) = match cli.command {
        Command::Dispersion(f) => (CommandKind::Dispersion, f),
        Command::Evolve(f) => (CommandKind::Evolve, f),
        Command::ErTest(f) => (CommandKind::ErTest, f),
        Command::Residual(f) => (CommandKind::Residual, f),
        Command::Sweep(f) => (CommandKind::Sweep, f),
    };
    let file = match &flags.config {
        Some(path) => load_file(path)?,
        None => Settings::default(),
    };
    let flag_settings = Settings::from(flags);
    if flag_settings.p.is_some() && flag_settings.momenta.is_some() {
        return Err(ConfigError::Conflict(
            "--p and --momenta are alternatives; give one".into(),
        ));
    }
    if file.p.is_some() && file.momenta.is_some() {
        return Err(ConfigError::Conflict("config file sets both `p` and `momenta`".into()));
    }
    resolve(command, file.overlay(flag_settings))
}

fn resolve(command: CommandKind, s: Settings) -> Result<RunConfig, ConfigError> {
    if let Some(c) = &s.command {
        if c != command.as_str() {
            return Err(ConfigError::Conflict(format!(
                "config file is for `{c}` but the subcommand is `{command}`"
            )));
        }
    }
    if s.momenta.is_some() && !command.is_sweep() {
        return Err(ConfigError::Conflict(format!(
            "--momenta does not apply to `{command}`"
        )));
    }
    if s.kprime.is_some() && command != CommandKind::Residual {
        return Err(ConfigError::Conflict(format!("--kprime does not apply to `{command}`")));
    }

    let mass = s.m.unwrap_or(DEFAULT_MASS);
    let sigma = s.sigma.unwrap_or(DEFAULT_SIGMA);
    let p =
        s.p.map(MomentumArg::vector)
            .unwrap_or_else(|| Vector3::new(0.0, 0.0, 3f64.sqrt()));
    let spec = PacketSpec::new(mass, sigma, p).map_err(spec_error)?;

    let dim = match s.dim.unwrap_or(1) {
        1 => Dimension::One,
        3 => Dimension::Three,
        d => return Err(invalid("dim", format!("{d}: must be 1 or 3"))),
    };
    let grid_n = s.grid_n.unwrap_or(match dim {
        Dimension::One => DEFAULT_POINTS_1D,
        Dimension::Three => DEFAULT_POINTS_3D,
    });
    if grid_n < 4 || !grid_n.is_power_of_two() {
        return Err(invalid(
            "grid-n",
            format!("{grid_n}: must be a power of two, at least 4"),
        ));
    }
    let quad_order = s.quad_order.unwrap_or(QuadratureScheme::DEFAULT_ORDER);
    if quad_order < 2 {
        return Err(invalid("quad-order", format!("{quad_order}: must be at least 2")));
    }
    let times = s.times.unwrap_or_else(|| DEFAULT_TIMES.to_vec());
    if times.is_empty() {
        return Err(invalid("times", "empty list"));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(invalid("times", format!("{t}: must be finite")));
    }
    let verdict_tolerance = s.verdict_tolerance.unwrap_or(DEFAULT_VERDICT_TOLERANCE);
    if !(verdict_tolerance > 0.0 && verdict_tolerance.is_finite()) {
        return Err(invalid(
            "verdict-tolerance",
            format!("{verdict_tolerance}: must be positive"),
        ));
    }

    let mut methods = s.method.unwrap_or_else(|| match command {
        CommandKind::Evolve => vec![Method::Grid],
        _ => vec![Method::Analytic],
    });
    methods.sort();
    methods.dedup();
    if command == CommandKind::Evolve && methods != [Method::Grid] {
        return Err(ConfigError::Conflict("`evolve` only runs the grid method".into()));
    }

    let kprime = Vector3::from(s.kprime.unwrap_or(DEFAULT_KPRIME));
    if kprime.iter().any(|k| !k.is_finite()) {
        return Err(invalid("kprime", "components must be finite"));
    }

    let (spec, momenta) = if command.is_sweep() {
        let momenta = match (s.momenta, s.p) {
            (Some(list), _) => list,
            (None, Some(_)) => vec![spec.momentum_magnitude()],
            (None, None) if command == CommandKind::Sweep => DEFAULT_SWEEP_GAMMAS
                .iter()
                .map(|g| mass * (g * g - 1.0).sqrt())
                .collect(),
            (None, None) => vec![spec.momentum_magnitude()],
        };
        (spec.at_rest(), momenta)
    } else {
        (spec, Vec::new())
    };

    let config = RunConfig {
        command,
        spec,
        times,
        methods,
        quad_order,
        grid_n,
        dim,
        out: s.out,
        format: s.format.unwrap_or(Format::Csv),
        momenta,
        kprime,
        verdict_tolerance,
    };
    if command.is_sweep() {
        config.sweep_config().validate().map_err(spec_error)?;
        let mut nonzero: Vec<f64> = config.times.iter().copied().filter(|t| *t != 0.0).collect();
        nonzero.sort_by(f64::total_cmp);
        nonzero.dedup();
        if nonzero.len() < 3 {
            return Err(invalid(
                "times",
                "the fit needs t = 0 and at least 3 distinct nonzero times",
            ));
        }
    }
    Ok(config)
}
