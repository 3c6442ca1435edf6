//! Result persistence: CSV tables with a `#` header block, pretty JSON, and
//! per-path CSV dumps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::path::SamplePath;

/// Provenance lines written at the top of every result table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the compact JSON serialization of `config`.
    pub fn of<C: Serialize>(config: &C, seed: u64) -> Result<Self> {
        let bytes = serde_json::to_vec(config).map_err(std::io::Error::other)?;
        Ok(Provenance {
            config_hash: hex::encode(Sha256::digest(&bytes)),
            seed,
        })
    }
}

/// Writes `# config_hash=…`, `# seed=…`, the column header and the rows.
pub fn write_csv<I, S>(path: &Path, prov: &Provenance, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# config_hash={}", prov.config_hash)?;
    writeln!(out, "# seed={}", prov.seed)?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.as_ref())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::other)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// One `t,value` CSV per path, named `{stem}_{index:05}.csv`. Returns the file names.
pub fn write_paths(dir: &Path, stem: &str, paths: &[SamplePath]) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let name = format!("{stem}_{i:05}.csv");
        write_path(&dir.join(&name), p)?;
        names.push(name);
    }
    Ok(names)
}

pub fn write_path(file: &Path, path: &SamplePath) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(file)?);
    writeln!(out, "t,value")?;
    for (i, v) in path.values.iter().enumerate() {
        writeln!(out, "{},{v}", path.grid.time(i))?;
    }
    out.flush()?;
    Ok(())
}
