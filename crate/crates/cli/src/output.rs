//! CSV emission with fixed 17-significant-digit floats and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Scientific notation with 17 significant digits; parses back to the same
/// `f64` and re-formats to the same text.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// `dir/stem.suffix` next to the main output, e.g. `run.csv` → `run.config`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_text_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE, 123_456_789.123_456_78] {
            let s = num(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
            assert_eq!(num(back), s);
        }
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("a/b/run.csv"), "config"), Path::new("a/b/run.config"));
        assert_eq!(sidecar(Path::new("run"), "hyper.csv"), Path::new("run.hyper.csv"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &["a"], [vec![num(1.0)]]).unwrap();
        write_csv(&p, &["a"], [vec![num(2.0)]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a\n2.0000000000000000e0\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
