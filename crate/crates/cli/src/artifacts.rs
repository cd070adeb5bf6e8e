//! Artifact files in the output directory, each wrapping its payload with the
//! configuration that produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use shelflife::kg::{load_edges, EdgeStore};
use shelflife::pipeline::PipelineConfig;
use shelflife::synthgen::{load_truth, GroundTruth};

use crate::Failure;

pub const LIFETIMES: &str = "lifetimes.json";
pub const LIFETIMES_CSV: &str = "lifetimes.csv";
pub const CLUSTERS: &str = "clusters.json";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const MODEL: &str = "model.json";
pub const FIT_REPORT: &str = "fit_report.json";
pub const SURVIVAL: &str = "survival.tsv";
pub const BENCHMARK: &str = "benchmark.json";
pub const BENCHMARK_CSV: &str = "benchmark.csv";
pub const SWEEP: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const REPORT: &str = "report.txt";

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config: PipelineConfig,
    pub data: T,
}

pub fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.out_dir.join(name)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

pub type Writer = BufWriter<File>;

pub fn create(path: &Path) -> Result<Writer, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn save<T: Serialize>(cfg: &PipelineConfig, name: &str, data: &T) -> Result<(), Failure> {
    #[derive(Serialize)]
    struct Ref<'a, T> {
        config: &'a PipelineConfig,
        data: &'a T,
    }
    write_json(&out_path(cfg, name), &Ref { config: cfg, data })
}

/// Reads an upstream artifact; a missing file names the command that makes it.
pub fn load<T: DeserializeOwned>(cfg: &PipelineConfig, name: &str, producer: &str) -> Result<T, Failure> {
    let path = out_path(cfg, name);
    if !path.exists() {
        return Err(Failure::Data(format!("{} not found; run `shelflife {producer}` first", path.display())));
    }
    let f = File::open(&path).map_err(|e| io_err(&path, e))?;
    let env: Envelope<T> = serde_json::from_reader(BufReader::new(f)).map_err(|e| io_err(&path, e))?;
    Ok(env.data)
}

pub fn load_optional<T: DeserializeOwned>(cfg: &PipelineConfig, name: &str) -> Result<Option<T>, Failure> {
    if out_path(cfg, name).exists() {
        load(cfg, name, "").map(Some)
    } else {
        Ok(None)
    }
}

pub fn truth(cfg: &PipelineConfig) -> Result<Option<GroundTruth>, Failure> {
    let p = &cfg.paths.truth;
    if p.exists() {
        load_truth(p).map(Some).map_err(|e| io_err(p, e))
    } else {
        Ok(None)
    }
}

/// Loads the edge stream. The observation window comes from the
/// configuration, else from the ground-truth file when present, else from
/// the edge timestamps.
pub fn store(cfg: &PipelineConfig) -> Result<EdgeStore, Failure> {
    let p = &cfg.paths.edges;
    if !p.exists() {
        return Err(Failure::Data(format!(
            "{} not found; run `shelflife generate` first or set paths.edges",
            p.display()
        )));
    }
    let store = load_edges(p).map_err(|e| io_err(p, e))?;
    if cfg.signals.window.is_some() {
        return Ok(cfg.prepare_store(store));
    }
    Ok(match truth(cfg)? {
        Some(t) => store.with_window(t.window.0, t.window.1),
        None => store,
    })
}
