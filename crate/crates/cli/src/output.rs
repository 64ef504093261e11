//! Output files with embedded or sidecar provenance.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(command: &'static str, inputs: &[&Path], config: &RunConfig) -> Self {
        Self {
            tool: "simgrade",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config: config.clone(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".provenance.json");
    PathBuf::from(name)
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

/// Writes through a buffered file, then a `<path>.provenance.json` sidecar.
pub fn write_with_sidecar(
    path: &Path,
    prov: &Provenance,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| Failure::io(path, e))?;
    write_json_value(&sidecar_path(path), &json!({ "provenance": prov }))
}

/// Serializes `value` with a top-level `provenance` key added.
pub fn write_json(path: &Path, value: &impl Serialize, prov: &Provenance) -> Result<(), Failure> {
    let mut v = serde_json::to_value(value).expect("outputs serialize");
    match &mut v {
        Value::Object(map) => {
            map.insert("provenance".into(), serde_json::to_value(prov).unwrap());
        }
        other => {
            v = json!({ "data": other.take(), "provenance": prov });
        }
    }
    write_json_value(path, &v)
}

fn write_json_value(path: &Path, v: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}
