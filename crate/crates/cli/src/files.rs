use std::path::{Path, PathBuf};

use abigx::models::Dataset;
use abigx::numerics::Matrix;
use anyhow::{Context, Result};
use serde::Serialize;

use crate::args::Command;

/// `dir/stem<suffix>` next to `path`, e.g. `data.csv` → `data.roots.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `prefix` with `ext` appended, keeping any dots already in the name.
pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Dataset CSV plus the optional `<stem>.roots.json` sidecar.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let data = Dataset::load_csv(path).with_context(|| format!("cannot read dataset {}", path.display()))?;
    let roots_path = sidecar(path, ".roots.json");
    if !roots_path.exists() {
        return Ok(data);
    }
    let text = std::fs::read_to_string(&roots_path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("cannot parse {}", roots_path.display()))?;
    Ok(data.with_roots(Dataset::parse_roots_json(&value)?)?)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<Vec<PathBuf>> {
    ensure_parent(path)?;
    data.save_csv(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    let mut out = vec![path.to_path_buf()];
    if let Some(roots) = &data.ground_truth_roots {
        let p = sidecar(path, ".roots.json");
        write_json(&p, &Dataset::roots_json(roots))?;
        out.push(p);
    }
    Ok(out)
}

/// Raw normal rows: `--calibration` file if given, else label-0 rows of `data`
/// (all rows when unlabelled).
pub fn normal_rows(data: &Dataset, calibration: Option<&Path>) -> Result<Matrix> {
    match calibration {
        Some(p) => {
            let cal = load_dataset(p)?;
            Ok(if cal.labels.is_some() {
                cal.normal_samples()
            } else {
                cal.samples
            })
        }
        None if data.labels.is_some() => Ok(data.normal_samples()),
        None => Ok(data.samples.clone()),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    summary: serde_json::Value,
}

/// Writes `<stem>.manifest.json` next to `main`, echoing the resolved command.
pub fn write_manifest(
    main: &Path,
    command: &Command,
    outputs: &[PathBuf],
    summary: serde_json::Value,
) -> Result<PathBuf> {
    let path = sidecar(main, ".manifest.json");
    let m = Manifest {
        tool: "abigx",
        version: env!("CARGO_PKG_VERSION"),
        command,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        summary,
    };
    write_json(&path, &m)?;
    Ok(path)
}
