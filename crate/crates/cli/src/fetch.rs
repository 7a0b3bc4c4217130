use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use regbench::pcd::{parse_pcd, parse_xyz, serialize_pcd};
use regbench::problem::SequenceSpec;
use regbench::{PointCloud, Regime, RigidTransform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::manifest::{DatasetManifest, InputFormat, SequenceEntry};

pub const INDEX_FILE: &str = ".fetch-index.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct FileRecord {
    size: u64,
    sha256: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FetchIndex {
    #[serde(default)]
    files: BTreeMap<String, FileRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchError {
    pub sequence: String,
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchReport {
    pub converted: usize,
    pub skipped: usize,
    pub errors: Vec<FetchError>,
    /// Sequences for which no cloud could be produced.
    pub failed_sequences: Vec<String>,
    pub specs: Vec<PathBuf>,
}

impl FetchReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.failed_sequences.is_empty()
    }
}

fn record_of(bytes: &[u8]) -> FileRecord {
    FileRecord {
        size: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

fn is_intact(path: &Path, expected: Option<&FileRecord>) -> bool {
    let Some(expected) = expected else {
        return false;
    };
    match fs::metadata(path) {
        Ok(meta) if meta.len() == expected.size => {}
        _ => return false,
    }
    fs::read(path).is_ok_and(|bytes| record_of(&bytes) == *expected)
}

fn read_source(entry: &SequenceEntry, base_dir: &Path, file: &str) -> Result<Vec<u8>> {
    if entry.is_remote() {
        let url = format!("{}/{}", entry.source.trim_end_matches('/'), file);
        let mut response = ureq::get(&url)
            .call()
            .with_context(|| format!("downloading {url}"))?;
        let mut bytes = Vec::new();
        response
            .body_mut()
            .as_reader()
            .read_to_end(&mut bytes)
            .with_context(|| format!("reading {url}"))?;
        Ok(bytes)
    } else {
        let path = base_dir.join(&entry.source).join(file);
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }
}

fn decode(bytes: &[u8], format: InputFormat) -> Result<PointCloud> {
    let parsed = match format {
        InputFormat::Pcd => parse_pcd(bytes),
        InputFormat::Xyz | InputFormat::Csv => parse_xyz(bytes),
    }
    .map_err(|e| anyhow!("{e}"))?;
    Ok(parsed.cloud)
}

fn convert(entry: &SequenceEntry, base_dir: &Path, i: usize) -> Result<String> {
    let mut cloud = decode(&read_source(entry, base_dir, &entry.files[i])?, entry.format)?;
    if let Some(merge) = &entry.merge {
        let extrinsic = RigidTransform::from_row_major12(&merge.extrinsic)?;
        let second = decode(&read_source(entry, base_dir, &merge.files[i])?, entry.format)?;
        cloud = cloud.concat(&extrinsic.apply(&second));
    }
    Ok(serialize_pcd(&cloud)?)
}

fn fetch_sequence(
    entry: &SequenceEntry,
    base_dir: &Path,
    out_dir: &Path,
    report: &mut FetchReport,
) -> Result<()> {
    let dir = out_dir.join(&entry.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let index_path = dir.join(INDEX_FILE);
    let mut index: FetchIndex = fs::read_to_string(&index_path)
        .ok()
        .and_then(|t| toml::from_str(&t).ok())
        .unwrap_or_default();

    let mut produced = Vec::new();
    let mut dirty = false;
    for i in 0..entry.files.len() {
        let name = entry.output_name(i);
        let path = dir.join(&name);
        if is_intact(&path, index.files.get(&name)) {
            report.skipped += 1;
            produced.push(path);
            continue;
        }
        match convert(entry, base_dir, i) {
            Ok(text) => {
                fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
                index.files.insert(name, record_of(text.as_bytes()));
                dirty = true;
                report.converted += 1;
                produced.push(path);
            }
            Err(e) => report.errors.push(FetchError {
                sequence: entry.name.clone(),
                file: entry.files[i].clone(),
                message: format!("{e:#}"),
            }),
        }
    }
    if produced.is_empty() {
        report.failed_sequences.push(entry.name.clone());
        return Ok(());
    }
    if dirty {
        fs::write(&index_path, toml::to_string(&index)?)?;
    }

    let spec = SequenceSpec {
        name: entry.name.clone(),
        clouds: produced,
        overlap_threshold: entry.overlap_threshold,
        bounds_local: entry.local.to_bounds(Regime::Local),
        bounds_global: entry.global.to_bounds(Regime::Global),
        seed: entry.seed,
    };
    let spec_path = dir.join("sequence.toml");
    let text = spec.render(&dir)?;
    if fs::read_to_string(&spec_path).ok().as_deref() != Some(text.as_str()) {
        fs::write(&spec_path, text)?;
    }
    report.specs.push(spec_path);
    Ok(())
}

/// Download or copy every sequence of `manifest` and convert it to ASCII PCD
/// under `out_dir/<sequence>/`, together with a `sequence.toml`.
///
/// Outputs whose size and SHA-256 match the recorded ones are left untouched.
/// Per-file problems are collected in the report; other sequences proceed.
pub fn cmd_fetch(manifest: &DatasetManifest, out_dir: &Path) -> Result<FetchReport> {
    let mut report = FetchReport::default();
    for entry in &manifest.sequences {
        fetch_sequence(entry, &manifest.base_dir, out_dir, &mut report)?;
    }
    Ok(report)
}
