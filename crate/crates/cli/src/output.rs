use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Verified,
    Violated,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Verified => 0,
            Self::Violated => 2,
            Self::Error => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub location: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRecord {
    pub command: String,
    pub status: Status,
    pub metrics: Map<String, Value>,
    pub tolerance: f64,
    pub wall_time: f64,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl VerdictRecord {
    pub fn new(command: &str, tolerance: f64) -> Self {
        Self {
            command: command.into(),
            status: Status::Verified,
            metrics: Map::new(),
            tolerance,
            wall_time: 0.0,
            witnesses: Vec::new(),
            message: None,
        }
    }

    pub fn error(command: &str, message: String) -> Self {
        let mut r = Self::new(command, 0.0);
        r.status = Status::Error;
        r.message = Some(message);
        r
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    /// Real-valued metric; non-finite values become strings so the JSON stays valid.
    pub fn real(&mut self, key: &str, value: f64) {
        let v = if value.is_finite() {
            Value::from(value)
        } else {
            Value::from(value.to_string())
        };
        self.metrics.insert(key.into(), v);
    }

    /// Marks the record violated with a witness.
    pub fn violate(&mut self, location: impl Into<String>, value: f64) {
        self.status = self.status.max(Status::Violated);
        self.witnesses.push(Witness {
            location: location.into(),
            value,
        });
    }
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(contents).map_err(io)?;
        file.sync_all().map_err(io)?;
        drop(file);
        fs::rename(&tmp, &target).map_err(io)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_ordering_and_codes() {
        assert!(Status::Error > Status::Violated && Status::Violated > Status::Verified);
        assert_eq!(Status::Violated.exit_code(), 2);
        let mut r = VerdictRecord::new("x", 1e-6);
        r.real("inf", f64::INFINITY);
        r.violate("t=0", -1.0);
        assert_eq!(r.status, Status::Violated);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["status"], "violated");
        assert_eq!(json["metrics"]["inf"], "inf");
    }

    #[test]
    fn csv_uses_round_trip_floats() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::create(dir.path()).unwrap();
        out.csv("a.csv", &["x", "y"], vec![vec![0.1, 1.0 / 3.0]]).unwrap();
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text, "x,y\n0.1,0.3333333333333333\n");
        let back: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
        assert!(!dir.path().join(".a.csv.tmp").exists());
    }
}
