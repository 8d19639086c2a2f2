use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ptm_energy::metrics::default_bin_centers;
use ptm_energy::tensor_io::{read_chain_map, read_npy};
use ptm_energy::{ChainMap, PaeLogits};
use serde::Serialize;

use crate::error::CliError;

/// Output files staged in memory and written only once every one of them
/// is ready, each via a temporary file renamed into place.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, contents: impl Into<Vec<u8>>) {
        self.files.push((path, contents.into()));
    }

    pub fn add_json(&mut self, path: PathBuf, value: &impl Serialize) {
        self.add(path, to_json(value) + "\n");
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::with_capacity(self.files.len());
        for (path, contents) in self.files {
            write_atomic(&path, &contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("report types serialise")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn read_logits(path: &Path) -> Result<PaeLogits<f64>, CliError> {
    let array = read_npy(path).map_err(|e| CliError::from(e).at(path))?;
    PaeLogits::from_npy(array).map_err(|e| CliError::from(e).at(path))
}

pub fn read_chains(path: &Path, len: usize) -> Result<ChainMap, CliError> {
    read_chain_map(path, len).map_err(|e| CliError::from(e).at(path))
}

/// Bin centers from a 1-D NPY file, or the default 64-bin grid.
pub fn read_bins(path: Option<&Path>) -> Result<Vec<f64>, CliError> {
    let Some(path) = path else {
        return Ok(default_bin_centers());
    };
    let array = read_npy(path).map_err(|e| CliError::from(e).at(path))?;
    if array.shape.len() != 1 {
        return Err(CliError::validation(
            "BadBinGrid",
            format!("{}: bin grid must be 1-D, got shape {:?}", path.display(), array.shape),
        ));
    }
    Ok(array.data)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let array = read_npy(path).map_err(|e| CliError::from(e).at(path))?;
    if array.shape.len() != 1 {
        return Err(CliError::validation(
            "BadShape",
            format!("{}: expected a 1-D array, got shape {:?}", path.display(), array.shape),
        ));
    }
    Ok(array.data)
}
