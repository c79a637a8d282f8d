use std::collections::BTreeMap;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use erlab::harness::{fmt_num, RetardationReport};
use erlab::{Axis, Method};
use tempfile::NamedTempFile;

/// Writes `path` through a temporary file in the same directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir)?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w)?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `dir/stem.ext` next to `out`, where `stem` is the file stem of `out`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn tag_of(out: &Path) -> String {
    out.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "erlab".into())
}

/// Writes whitespace-delimited series for plotting into `dir`:
///
/// * `<tag>_<axis>_<method>.dat`: `t sigma_sq`, one block per momentum,
///   blocks separated by two blank lines;
/// * `<tag>_rest_<method>.dat`: the rest-frame curve;
/// * `<tag>-alpha_<axis>_<method>.dat`: `gamma alpha` over the momenta.
///
/// An empty report writes nothing and logs a warning.
pub fn emit_plotdata(report: &RetardationReport, dir: &Path, tag: &str) -> io::Result<Vec<PathBuf>> {
    if report.is_empty() {
        log::warn!("report is empty; no plot data written");
        return Ok(Vec::new());
    }
    let mut written = Vec::new();

    // (p, gamma, t, sigma_sq) per axis and method
    type Series = BTreeMap<(Axis, Method), Vec<(f64, f64, f64, f64)>>;
    let mut series = Series::new();
    for c in &report.curves {
        series
            .entry((c.axis, c.method))
            .or_default()
            .push((c.p, c.gamma, c.t, c.sigma_sq));
    }
    for ((axis, method), points) in &series {
        let path = dir.join(format!("{tag}_{axis}_{method}.dat"));
        write_atomic(&path, |w| {
            let mut current: Option<f64> = None;
            for &(p, gamma, t, s) in points {
                if current != Some(p) {
                    if current.is_some() {
                        writeln!(w, "\n")?;
                    }
                    writeln!(w, "# p = {}  gamma = {}", fmt_num(p), fmt_num(gamma))?;
                    writeln!(w, "# t sigma_sq")?;
                    current = Some(p);
                }
                writeln!(w, "{} {}", fmt_num(t), fmt_num(s))?;
            }
            Ok(())
        })?;
        written.push(path);
    }

    for rest in &report.rest_curves {
        let path = dir.join(format!("{tag}_rest_{}.dat", rest.method));
        write_atomic(&path, |w| {
            writeln!(w, "# t sigma_sq")?;
            for &(t, s) in &rest.points {
                writeln!(w, "{} {}", fmt_num(t), fmt_num(s))?;
            }
            Ok(())
        })?;
        written.push(path);
    }

    let mut alphas: BTreeMap<(Axis, Method), Vec<(f64, f64)>> = BTreeMap::new();
    for f in &report.fits {
        if let Some(a) = f.alpha {
            alphas.entry((f.axis, f.method)).or_default().push((f.gamma, a));
        }
    }
    for ((axis, method), points) in &alphas {
        let path = dir.join(format!("{tag}-alpha_{axis}_{method}.dat"));
        write_atomic(&path, |w| {
            writeln!(w, "# gamma alpha")?;
            for &(g, a) in points {
                writeln!(w, "{} {}", fmt_num(g), fmt_num(a))?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Formats an optional number for CSV; `None` becomes an empty field.
pub fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}
