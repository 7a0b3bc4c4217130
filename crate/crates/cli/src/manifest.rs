use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use regbench::problem::BoundsConfig;
use regbench::{Regime, RigidTransform};
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Pcd,
    Xyz,
    Csv,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pcd" => Ok(Self::Pcd),
            "xyz" => Ok(Self::Xyz),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pcd => "pcd",
            Self::Xyz => "xyz",
            Self::Csv => "csv",
        })
    }
}

/// Second sensor whose clouds are merged into the primary ones, as with a
/// left/right LiDAR rig.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeEntry {
    /// One file per entry of `files`, in the same order.
    pub files: Vec<String>,
    /// Row-major 3×4 transform taking the second sensor into the primary frame.
    #[serde(default = "identity12")]
    pub extrinsic: [f64; 12],
}

fn identity12() -> [f64; 12] {
    RigidTransform::identity().to_row_major12()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub name: String,
    /// Base URL (`http://` or `https://`) or a local directory.
    pub source: String,
    pub format: InputFormat,
    pub files: Vec<String>,
    pub overlap_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    pub local: BoundsConfig,
    pub global: BoundsConfig,
    #[serde(default)]
    pub merge: Option<MergeEntry>,
}

impl SequenceEntry {
    pub fn is_remote(&self) -> bool {
        self.source.starts_with("http://") || self.source.starts_with("https://")
    }

    pub fn output_name(&self, i: usize) -> String {
        let stem = Path::new(&self.files[i])
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("cloud_{i:04}"));
        format!("{stem}.pcd")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(rename = "sequence", default)]
    pub sequences: Vec<SequenceEntry>,
    /// Directory local sources are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: DatasetManifest =
            toml::from_str(text).map_err(|e| UsageError(format!("invalid manifest: {e}")))?;
        m.base_dir = base_dir.to_owned();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for s in &self.sequences {
            let fail = |m: String| -> Result<()> { bail!(UsageError(format!("sequence `{}`: {m}", s.name))) };
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                fail("name must be a non-empty plain file name".into())?;
            }
            if !names.insert(s.name.as_str()) {
                fail("duplicate sequence name".into())?;
            }
            if !(s.overlap_threshold > 0.0) || !s.overlap_threshold.is_finite() {
                fail(format!("overlap threshold must be positive, got {}", s.overlap_threshold))?;
            }
            if s.files.is_empty() {
                fail("no files listed".into())?;
            }
            for regime in [Regime::Local, Regime::Global] {
                let b = match regime {
                    Regime::Local => s.local,
                    Regime::Global => s.global,
                };
                if let Err(e) = b.to_bounds(regime).validate() {
                    fail(format!("{regime} bounds: {e}"))?;
                }
            }
            if let Some(m) = &s.merge {
                if m.files.len() != s.files.len() {
                    fail(format!(
                        "merge lists {} files for {} primary files",
                        m.files.len(),
                        s.files.len()
                    ))?;
                }
                if RigidTransform::from_row_major12(&m.extrinsic).is_err() {
                    fail("merge extrinsic is not a rigid transform".into())?;
                }
            }
        }
        Ok(())
    }
}
