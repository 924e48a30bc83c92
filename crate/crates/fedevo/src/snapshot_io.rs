//! Snapshot files: `ModelSnapshot` values written as `*.fedevo.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use fedevo_core::ModelSnapshot;

/// File extension for serialized snapshots.
pub const SNAPSHOT_EXT: &str = "fedevo.json";

/// Writes a snapshot to `dir/{name}.fedevo.json` and returns the path.
pub fn write_snapshot(dir: &Path, name: &str, snapshot: &ModelSnapshot) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.{SNAPSHOT_EXT}"));
    let json = snapshot
        .to_json()
        .with_context(|| format!("cannot serialize snapshot {name:?}"))?;
    fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Reads and validates a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<ModelSnapshot> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ModelSnapshot::from_json(&text)
        .with_context(|| format!("invalid snapshot {}", path.display()))
}

/// All snapshot files directly under `dir`, sorted by file name.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in
        fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?
    {
        let path = entry?.path();
        if path.is_file()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(&format!(".{SNAPSHOT_EXT}")))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
