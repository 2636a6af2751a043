//! File helpers.

use std::path::{Path, PathBuf};

use serde::Serialize;
use subgoal_core::toyworld::{Episode, Raster, RASTER_SIDE};

use crate::error::{CliError, CliResult};

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    write_file(path, text.as_bytes())
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

pub fn require_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{} does not exist", path.display())))
    }
}

/// Episode files of a directory in name order.
pub fn episode_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::validation(format!("cannot list {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != crate::config::RESOLVED_NAME))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::validation(format!("no episode files in {}", dir.display())));
    }
    Ok(paths)
}

pub fn load_episode(path: &Path) -> CliResult<Episode> {
    Episode::load(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_episodes(dir: &Path) -> CliResult<Vec<(PathBuf, Episode)>> {
    episode_paths(dir)?.into_iter().map(|p| load_episode(&p).map(|e| (p, e))).collect()
}

/// Plain-text PGM whose gray levels are the palette codes.
pub fn pgm(raster: &Raster) -> String {
    let mut out = format!("P2\n{RASTER_SIDE} {RASTER_SIDE}\n63\n");
    for row in raster.cells.chunks(RASTER_SIDE) {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
