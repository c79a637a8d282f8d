use std::fs;
use std::path::Path;
use std::process::Command;

use erlab::harness::{compare_methods, RetardationReport, SweepConfig};
use erlab::{analytic, Method, PacketSpec};
use erlab_cli::{emit_plotdata, parse_config, run, CommandKind, ConfigError, Format};

fn parse(args: &[&str]) -> Result<erlab_cli::RunConfig, ConfigError> {
    parse_config(std::iter::once("erlab").chain(args.iter().copied()))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_erlab"))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn parses_er_test_example() {
    let c = parse(&[
        "er-test",
        "--m",
        "1",
        "--sigma",
        "5",
        "--p",
        "1.7320508",
        "--times",
        "0,5,10,20",
    ])
    .unwrap();
    assert_eq!(c.command, CommandKind::ErTest);
    assert_eq!(c.momenta, vec![1.7320508]);
    assert_eq!(c.times, vec![0.0, 5.0, 10.0, 20.0]);
    assert_eq!(c.methods, vec![Method::Analytic]);
    assert_eq!(c.quad_order, 40);
    assert_eq!(c.grid_n, 128);
}

#[test]
fn defaults() {
    let c = parse(&["dispersion"]).unwrap();
    assert_eq!(c.spec, PacketSpec::along_z(1.0, 5.0, 3f64.sqrt()).unwrap());
    assert_eq!(c.times, vec![0.0, 5.0, 10.0, 20.0]);
    assert_eq!(c.format, Format::Csv);
    assert_eq!(parse(&["dispersion", "--dim", "3"]).unwrap().grid_n, 64);
    let sweep = parse(&["sweep"]).unwrap();
    assert_eq!(sweep.momenta.len(), 3);
    assert!((sweep.momenta[1] - 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn momentum_triple_and_repeated_methods() {
    let c = parse(&[
        "dispersion",
        "--p",
        "0.5,-1,2",
        "--method",
        "grid",
        "--method",
        "oracle,analytic",
    ])
    .unwrap();
    assert_eq!(c.spec.mean_momentum(), nalgebra::Vector3::new(0.5, -1.0, 2.0));
    assert_eq!(c.methods, vec![Method::Analytic, Method::Oracle, Method::Grid]);
}

#[test]
fn negative_sigma_names_the_field() {
    let err = parse(&["dispersion", "--sigma", "-1"]).unwrap_err();
    assert!(matches!(err, ConfigError::InvalidValue { key: "sigma", .. }), "{err}");
    assert!(err.to_string().contains("--sigma"));
    assert_eq!(err.exit_code(), 1);
    let err = parse(&["dispersion", "--m", "0"]).unwrap_err();
    assert!(matches!(err, ConfigError::InvalidValue { key: "m", .. }));
    let err = parse(&["dispersion", "--grid-n", "100"]).unwrap_err();
    assert!(matches!(err, ConfigError::InvalidValue { key: "grid-n", .. }));
    let err = parse(&["er-test", "--times", "0,5"]).unwrap_err();
    assert!(matches!(err, ConfigError::InvalidValue { key: "times", .. }));
}

#[test]
fn flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "sigma = 7\nm = 2\ntimes = [0, 1, 2, 3]\nmethod = \"oracle\"\n").unwrap();
    let c = parse(&["dispersion", "--config", path.to_str().unwrap(), "--sigma", "6"]).unwrap();
    assert_eq!(c.spec.sigma(), 6.0);
    assert_eq!(c.spec.mass(), 2.0);
    assert_eq!(c.times, vec![0.0, 1.0, 2.0, 3.0]);
    assert_eq!(c.methods, vec![Method::Oracle]);
}

#[test]
fn flag_momenta_replaces_file_momentum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "p = 2.0\n").unwrap();
    let c = parse(&["sweep", "--config", path.to_str().unwrap(), "--momenta", "1,3"]).unwrap();
    assert_eq!(c.momenta, vec![1.0, 3.0]);
}

#[test]
fn config_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let unknown = write("a.toml", "sigma = 5\nwidth = 3\n");
    let malformed = write("b.toml", "sigma = = 5\n");
    let nested = write("c.toml", "[grid]\nn = 64\n");
    let wrong_type = write("d.json", "{\"sigma\": \"five\"}");
    let both = write("e.toml", "p = 1.0\nmomenta = [1.0]\n");
    let other_cmd = write("f.json", "{\"command\": \"sweep\"}");

    match parse(&["dispersion", "--config", &unknown]).unwrap_err() {
        ConfigError::UnknownKey { key, .. } => assert_eq!(key, "width"),
        e => panic!("{e}"),
    }
    assert!(matches!(
        parse(&["dispersion", "--config", &malformed]).unwrap_err(),
        ConfigError::Malformed { .. }
    ));
    assert!(matches!(
        parse(&["dispersion", "--config", &nested]).unwrap_err(),
        ConfigError::UnknownKey { .. }
    ));
    assert!(matches!(
        parse(&["dispersion", "--config", &wrong_type]).unwrap_err(),
        ConfigError::InvalidValue { key: "sigma", .. }
    ));
    assert!(matches!(
        parse(&["er-test", "--config", &both]).unwrap_err(),
        ConfigError::Conflict(_)
    ));
    assert!(matches!(
        parse(&["dispersion", "--config", &other_cmd]).unwrap_err(),
        ConfigError::Conflict(_)
    ));
    assert!(matches!(
        parse(&["er-test", "--p", "1", "--momenta", "1,2"]).unwrap_err(),
        ConfigError::Conflict(_)
    ));
    assert!(matches!(
        parse(&["dispersion", "--kprime", "0,0,1"]).unwrap_err(),
        ConfigError::Conflict(_)
    ));
    assert!(matches!(
        parse(&["evolve", "--method", "oracle"]).unwrap_err(),
        ConfigError::Conflict(_)
    ));
    let missing = parse(&["dispersion", "--config", "/nonexistent/erlab.toml"]).unwrap_err();
    assert!(matches!(missing, ConfigError::Read { .. }));
    assert_eq!(missing.exit_code(), 3);
}

#[test]
fn echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &[
            "dispersion",
            "--p",
            "0.3,0.4,1.2",
            "--method",
            "oracle,grid",
            "--dim",
            "3",
            "--quad-order",
            "24",
        ],
        &["evolve", "--times", "0,1.5,-3", "--grid-n", "256", "--format", "json"],
        &["er-test", "--p", "2.5", "--verdict-tolerance", "0.1"],
        &["residual", "--kprime", "0.1,-0.2,0.3", "--sigma", "11"],
        &["sweep", "--momenta", "0.5,1,4", "--m", "2", "--times", "0,1,2,4,8"],
    ];
    for args in cases {
        let c = parse(args).unwrap();
        let path = dir.path().join(format!("{}.json", args[0]));
        fs::write(&path, serde_json::to_string_pretty(&c.echo()).unwrap()).unwrap();
        let back = parse(&[args[0], "--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(back, c, "{args:?}");
        assert_eq!(back.echo(), c.echo());
    }
}

#[test]
fn default_er_test_reports_cubic_and_linear_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("er.csv");
    let c = parse(&["er-test", "--out", out.to_str().unwrap()]).unwrap();
    let summary = run(&c, &mut Vec::new()).unwrap();
    assert_eq!(summary.exit_status, 0);
    assert_eq!(summary.failed, 0);
    assert!(summary.table.contains("3.000000") && summary.table.contains("1.000000"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), erlab::harness::CSV_HEADER);
    for row in csv_rows(&out) {
        let alpha: f64 = row[8].parse().unwrap();
        match row[4].as_str() {
            "longitudinal" => assert!((alpha - 3.0).abs() < 1e-9 && row[10] == "fails"),
            "transverse" => assert!((alpha - 1.0).abs() < 1e-9 && row[10] == "holds"),
            a => panic!("axis {a}"),
        }
    }
    assert!(dir.path().join("er.config.json").exists());
}

#[test]
fn oracle_dispersion_csv_matches_independent_quadrature() {
    // 80-point Hermite-Gauss tensor product, computed outside this crate
    let reference = [
        (0.0, 25.000000000000018, 25.00000000000001, 0.0),
        (20.0, 25.994993894170186, 25.067762429132564, 17.261058722179975),
    ];
    let mut buf = Vec::new();
    let c = parse(&["dispersion", "--method", "oracle", "--times", "0,20"]).unwrap();
    let summary = run(&c, &mut buf).unwrap();
    assert_eq!(summary.computed, 2);
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), erlab_cli::run::DISPERSION_HEADER);
    for (line, (t, s1, s3, x3)) in lines.zip(reference) {
        let f: Vec<f64> = line.split(',').filter_map(|x| x.parse().ok()).collect();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert_eq!(f[4], t);
        assert!(rel(f[8], s1) < 1e-12 && rel(f[9], s1) < 1e-12, "{line}");
        assert!(rel(f[10], s3) < 1e-12, "{line}");
        assert!((f[7] - x3).abs() < 1e-12 * x3.max(1.0), "{line}");
    }
}

#[test]
fn residual_reports_cubic_scaling() {
    let mut buf = Vec::new();
    let c = parse(&["residual", "--kprime", "0,0,0.6"]).unwrap();
    let summary = run(&c, &mut buf).unwrap();
    assert!(summary.table.contains("cubic scaling: yes"));
    let text = String::from_utf8(buf).unwrap();
    let first: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((first[4] / 0.0075916674151760765 - 1.0).abs() < 1e-12);
}

#[test]
fn outputs_are_deterministic_and_leave_no_temp_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut contents = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name).join("sweep.csv");
        fs::create_dir(out.parent().unwrap()).unwrap();
        let c = parse(&[
            "sweep",
            "--method",
            "analytic,oracle,grid",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        run(&c, &mut Vec::new()).unwrap();
        let mut files: Vec<_> = fs::read_dir(out.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        assert!(files
            .iter()
            .all(|p| !p.file_name().unwrap().to_string_lossy().starts_with(".tmp")));
        contents.push(
            files
                .iter()
                .filter(|p| !p.to_string_lossy().ends_with(".config.json"))
                .map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(contents[0], contents[1]);
    // report, series, rest curves, alpha series; the 1D grid has no transverse axis
    assert_eq!(contents[0].len(), 1 + 5 + 3 + 5);
}

fn data_columns(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .split("\n\n\n")
        .map(|block| {
            block
                .lines()
                .filter(|l| !l.starts_with('#') && !l.is_empty())
                .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn plot_series_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let times = vec![0.0, 5.0, 10.0, 20.0];
    let config = SweepConfig::new(1.0, 5.0, vec![0.75, 3f64.sqrt()], times.clone(), vec![Method::Analytic]);
    let report = compare_methods(&config).unwrap();
    let files = emit_plotdata(&report, dir.path(), "run").unwrap();
    assert_eq!(files.len(), 2 + 1 + 2);

    let spec = PacketSpec::along_z(1.0, 5.0, 3f64.sqrt()).unwrap();
    let blocks = data_columns(&dir.path().join("run_longitudinal_analytic.dat"));
    assert_eq!(blocks.len(), 2);
    for (t, s) in times.iter().zip(&blocks[1]) {
        assert!((s / analytic::longitudinal_dispersion(&spec, *t) - 1.0).abs() < 1e-15);
    }
    assert_eq!(blocks[1][3], 25.0625);
    let rest = data_columns(&dir.path().join("run_rest_analytic.dat"));
    for (t, s) in times.iter().zip(&rest[0]) {
        assert_eq!(*s, 25.0 + t * t / 100.0);
    }
    let alpha = data_columns(&dir.path().join("run-alpha_transverse_analytic.dat"));
    assert!(alpha[0].iter().all(|a| (a - 1.0).abs() < 1e-9));
}

#[test]
fn empty_report_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = SweepConfig::new(1.0, 5.0, vec![1.0], vec![0.0, 1.0, 2.0, 3.0], vec![Method::Analytic]);
    let mut report: RetardationReport = compare_methods(&config).unwrap();
    report.curves.clear();
    report.rest_curves.clear();
    report.fits.clear();
    assert!(emit_plotdata(&report, dir.path(), "empty").unwrap().is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn json_report_parses() {
    let mut buf = Vec::new();
    let c = parse(&["er-test", "--format", "json", "--method", "oracle"]).unwrap();
    run(&c, &mut buf).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["fits"].as_array().unwrap().len(), 2);
    assert_eq!(v["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| bin().args(args).current_dir(dir.path()).output().unwrap().status.code();
    assert_eq!(status(&["er-test"]), Some(0));
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["dispersion", "--sigma", "-1"]), Some(1));
    assert_eq!(status(&["dispersion", "--no-such-flag"]), Some(1));
    // box rule rejects the grid for this time span; the other method still runs
    assert_eq!(
        status(&["dispersion", "--method", "analytic,grid", "--times", "0,2000"]),
        Some(2)
    );
    assert_eq!(status(&["dispersion", "--out", "missing/dir/out.csv"]), Some(3));
    assert_eq!(status(&["dispersion", "--config", "missing.toml"]), Some(3));
}

#[test]
fn evolve_writes_density_slices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev.csv");
    let c = parse(&["evolve", "--out", out.to_str().unwrap()]).unwrap();
    let summary = run(&c, &mut Vec::new()).unwrap();
    assert_eq!(summary.exit_status, 0);
    for i in 0..4 {
        let text = fs::read_to_string(dir.path().join(format!("ev_density_{i}.dat"))).unwrap();
        let rho: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(rho.len(), 128);
        assert!(rho.iter().all(|r| *r >= 0.0));
    }
    let rows = csv_rows(&out);
    let norm: f64 = rows[3][2].parse().unwrap();
    assert!((norm - 1.0).abs() < 1e-8);
}
