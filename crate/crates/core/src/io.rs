//! Output files: CSV/JSON formatting with a config echo, and all-or-nothing
//! writes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::flow::Trajectory;

pub const VERSION: &str = concat!("isoflow ", env!("CARGO_PKG_VERSION"));

/// `{:.16e}`: 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Comment lines carrying the config echo and version.
pub fn csv_preamble(config: &Value) -> String {
    format!("# config: {config}\n# version: {VERSION}\n")
}

pub fn trajectory_csv(traj: &Trajectory, config: &Value) -> String {
    let k = traj.x0.len();
    let mut out = csv_preamble(config);
    out.push('t');
    for i in 1..=k {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",norm_sq,min_wall_gap,radial_residual\n");
    for s in &traj.samples {
        out.push_str(&fmt_f64(s.t));
        for v in s.x.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in [s.norm_sq, s.min_wall_gap, s.radial_residual] {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

/// Adds `config` and `version` keys to a JSON object.
pub fn stamp(mut value: Value, config: &Value) -> Value {
    if let Value::Object(map) = &mut value {
        map.insert("config".into(), config.clone());
        map.insert("version".into(), Value::String(VERSION.into()));
    }
    value
}

pub fn json_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Files produced by one command, written only once all are ready.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|f| f.0.as_str())
    }

    /// Writes every file to a temporary name, then renames them into place.
    /// On failure the temporaries are removed and nothing is left behind.
    pub fn commit(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut temps: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |temps: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in temps {
                let _ = fs::remove_file(tmp);
            }
        };
        for (name, contents) in &self.files {
            let dest = dir.join(name);
            let tmp = dir.join(format!(".{name}.partial"));
            if let Err(e) = fs::write(&tmp, contents) {
                cleanup(&temps);
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
            temps.push((tmp, dest));
        }
        let mut done = Vec::new();
        for (i, (tmp, dest)) in temps.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dest) {
                cleanup(&temps[i..]);
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(e);
            }
            done.push(dest.clone());
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn commit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new();
        out.add("a.txt", "x".into());
        out.add("b.txt", "y".into());
        let paths = out.commit(dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(fs::read_to_string(dir.path().join("b.txt")).unwrap(), "y");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn stamp_adds_fields() {
        let v = stamp(json!({"T": 1.0}), &json!({"seed": 0}));
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["seed"], 0);
    }
}
