//! CSV tables and the run manifest.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Everything needed to reproduce a run. `argv` is the full command line
/// after the program name; replaying it with a different `--out` writes
/// the same CSV bytes for the deterministic commands.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub argv: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<PathBuf>, argv: Vec<String>) -> Self {
        let versions = BTreeMap::from([
            ("avgcost-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("avgcost-core".to_string(), avgcost_core::VERSION.to_string()),
        ]);
        Self {
            command: command.to_string(),
            config,
            argv,
            parameters: BTreeMap::new(),
            versions,
            outputs: Vec::new(),
            wall_clock_secs: 0.0,
            exit_code: 0,
            error: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Write `rows` under `header` to `dir/name`.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(std::io::Error::other)?;
    w.write_record(header).map_err(std::io::Error::other)?;
    for row in rows {
        w.write_record(row).map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(path)
}

/// Round-trip float formatting so CSV values are exact.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
