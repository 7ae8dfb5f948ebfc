//! Output directory layout: a lock file, the cache keyed by config hash, and
//! the emitted report and tables.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Format;

pub const LOCK_FILE: &str = ".screwlab.lock";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} is locked by another run; remove the lock file if that run is gone")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

/// Held for the lifetime of a run; the file is removed on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(io_at(&path))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Serialized results of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub report_json: String,
    /// `(file name, contents)`.
    pub tables: Vec<(String, String)>,
}

pub fn cache_dir(out: &Path, key: &str) -> PathBuf {
    out.join("cache").join(key)
}

pub fn load_cached(out: &Path, key: &str) -> Result<Option<Artifacts>, StoreError> {
    let dir = cache_dir(out, key);
    let report = dir.join(REPORT_FILE);
    if !report.is_file() {
        return Ok(None);
    }
    let report_json = fs::read_to_string(&report).map_err(io_at(&report))?;
    let mut tables = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_at(&dir))? {
        let path = entry.map_err(io_at(&dir))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().expect("listed file").to_string_lossy().into_owned();
            tables.push((name, fs::read_to_string(&path).map_err(io_at(&path))?));
        }
    }
    tables.sort();
    Ok(Some(Artifacts { report_json, tables }))
}

/// Tables first, report last: a cache entry counts only once its report exists.
pub fn store_cached(out: &Path, key: &str, artifacts: &Artifacts) -> Result<(), StoreError> {
    let dir = cache_dir(out, key);
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    for (name, text) in &artifacts.tables {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_at(&path))?;
    }
    let tmp = dir.join("report.json.partial");
    fs::write(&tmp, &artifacts.report_json).map_err(io_at(&tmp))?;
    let report = dir.join(REPORT_FILE);
    fs::rename(&tmp, &report).map_err(io_at(&report))
}

/// Writes the requested formats into the output directory and returns the paths.
pub fn emit(out: &Path, artifacts: &Artifacts, formats: &[Format]) -> Result<Vec<PathBuf>, StoreError> {
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        let path = out.join(REPORT_FILE);
        fs::write(&path, &artifacts.report_json).map_err(io_at(&path))?;
        written.push(path);
    }
    if formats.contains(&Format::Csv) {
        for (name, text) in &artifacts.tables {
            let path = out.join(name);
            fs::write(&path, text).map_err(io_at(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(StoreError::Locked(_))));
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_cached(dir.path(), "k").unwrap(), None);
        let a = Artifacts {
            report_json: "{\"a\":1}\n".into(),
            tables: vec![("b.csv".into(), "x\n1\n".into()), ("a.csv".into(), "y\n".into())],
        };
        store_cached(dir.path(), "k", &a).unwrap();
        let back = load_cached(dir.path(), "k").unwrap().unwrap();
        assert_eq!(back.report_json, a.report_json);
        assert_eq!(back.tables, vec![("a.csv".into(), "y\n".into()), ("b.csv".into(), "x\n1\n".into())]);
    }

    #[test]
    fn emit_respects_formats() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifacts { report_json: "{}".into(), tables: vec![("t.csv".into(), "h\n".into())] };
        let written = emit(dir.path(), &a, &[Format::Json]).unwrap();
        assert_eq!(written, vec![dir.path().join(REPORT_FILE)]);
        assert!(!dir.path().join("t.csv").exists());
    }
}
