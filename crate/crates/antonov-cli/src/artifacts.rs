//! Output directories, schema files, manifests and the result cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Column name and meaning.
pub type Column = (&'static str, &'static str);

#[derive(Serialize)]
struct ColumnDoc {
    name: &'static str,
    description: &'static str,
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a RunConfig,
    versions: BTreeMap<&'static str, String>,
    tolerances: BTreeMap<&'static str, f64>,
    outputs: Vec<OutputEntry>,
}

/// Output directory of one command invocation.
pub struct RunDir {
    pub dir: PathBuf,
    command: &'static str,
    key: String,
    files: Vec<String>,
    schema: BTreeMap<String, Vec<ColumnDoc>>,
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunDir {
    /// Opens `<output_dir>/<command>`; returns `None` when a manifest with the same key and
    /// intact outputs is already present and `force` is off.
    pub fn open(cfg: &RunConfig, command: &'static str, force: bool) -> Result<Option<Self>, CliError> {
        let dir = cfg.output_dir.join(command);
        let key = cfg.run_key(command);
        if !force && cache_valid(&dir, &key) {
            return Ok(None);
        }
        fs::create_dir_all(&dir)?;
        let _ = fs::remove_file(dir.join("manifest.json"));
        Ok(Some(Self {
            dir,
            command,
            key,
            files: Vec::new(),
            schema: BTreeMap::new(),
        }))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes a CSV with the given columns and documents them in the schema.
    pub fn write_csv<I>(&mut self, name: &str, columns: &[Column], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(columns.iter().map(|c| c.0))?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        self.schema.insert(
            name.to_string(),
            columns
                .iter()
                .map(|&(name, description)| ColumnDoc { name, description })
                .collect(),
        );
        Ok(())
    }

    /// Writes schema.json (when CSVs were emitted) and the manifest.
    pub fn finish(mut self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        if !self.schema.is_empty() {
            let schema = std::mem::take(&mut self.schema);
            self.write_json("schema.json", &schema)?;
        }
        let outputs = self
            .files
            .iter()
            .map(|f| {
                let p = self.dir.join(f);
                Ok(OutputEntry {
                    file: f.clone(),
                    bytes: fs::metadata(&p)?.len(),
                    sha256: sha256_file(&p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            command: self.command,
            config_hash: &self.key,
            config: cfg,
            versions: versions(),
            tolerances: tolerances(cfg),
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(self.dir)
    }
}

fn versions() -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("antonov", antonov::VERSION.to_string()),
        ("antonov-cli", env!("CARGO_PKG_VERSION").to_string()),
        ("target", format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS)),
        (
            "build",
            if cfg!(debug_assertions) { "debug" } else { "release" }.to_string(),
        ),
    ])
}

fn tolerances(cfg: &RunConfig) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("tol", cfg.tol),
        ("delta_rel", cfg.delta_rel),
        ("edge_margin_rel", cfg.edge_margin_rel),
        ("r_excl_spacings", cfg.r_excl_spacings),
        ("r_embedded_rel", cfg.r_embedded_rel),
        ("amplification_max", cfg.amplification_max),
        ("scan_threshold", cfg.scan.threshold),
    ])
}

fn cache_valid(dir: &Path, key: &str) -> bool {
    let Ok(text) = fs::read_to_string(dir.join("manifest.json")) else {
        return false;
    };
    let Ok(m) = serde_json::from_str::<serde_json::Value>(&text) else {
        return false;
    };
    if m["config_hash"].as_str() != Some(key) {
        return false;
    }
    m["outputs"].as_array().is_some_and(|outs| {
        outs.iter().all(|o| {
            let (Some(f), Some(h)) = (o["file"].as_str(), o["sha256"].as_str()) else {
                return false;
            };
            sha256_file(&dir.join(f)).is_ok_and(|s| s == h)
        })
    })
}

/// Path of the cached steady state for this configuration.
pub fn steady_cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .join("cache")
        .join(format!("steady-{}.json", &cfg.steady_key()[..16]))
}
