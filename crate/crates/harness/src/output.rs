//! Result directory layout:
//!
//! ```text
//! config.json     resolved configuration
//! records.csv     one row per (method, n, seed, metric)
//! aggregate.csv   mean and standard error per (method, n, metric)
//! failures.csv    repetitions whose fit or evaluation failed
//! mesh_*.csv      posterior meshes (four-gaussian, first repetition)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::experiments::ExperimentOutput;
use crate::record::{aggregate, verify_aggregates, write_aggregates, write_failures, write_records};

pub const CONFIG_FILE: &str = "config.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const FAILURES_FILE: &str = "failures.csv";

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| HarnessError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes every output file into `dir` and returns their paths.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::File {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let mut config = out.config.to_json()?.into_bytes();
    config.push(b'\n');
    put(CONFIG_FILE.into(), config)?;

    let mut records = Vec::new();
    write_records(&out.records, &mut records)?;
    let mut agg = Vec::new();
    write_aggregates(&aggregate(&out.records), &mut agg)?;
    verify_aggregates(&records, &agg)?;
    put(RECORDS_FILE.into(), records)?;
    put(AGGREGATE_FILE.into(), agg)?;

    let mut failures = Vec::new();
    write_failures(&out.failures, &mut failures)?;
    put(FAILURES_FILE.into(), failures)?;

    for mesh in &out.meshes {
        let mut bytes = Vec::new();
        mesh.write(&mut bytes)?;
        put(mesh.file_name(), bytes)?;
    }
    Ok(written)
}
