use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1";

/// Pipeline that produced an artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Ridge,
    Lpreg,
    Lvm,
}

/// Serialized coreset: selected sample indices, their weights and, for
/// regression, the regularizer diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetArtifact {
    pub schema_version: String,
    pub pipeline: Pipeline,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_diag: Option<BTreeMap<usize, f64>>,
    pub meta: ArtifactMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    pub kernel_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd_bound: Option<f64>,
    /// Selected data samples, i.e. `indices.len()`.
    pub selected_count: usize,
    /// Selected regularizer rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl CoresetArtifact {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "unsupported artifact schema_version {:?} (expected {SCHEMA_VERSION:?})",
                self.schema_version
            )));
        }
        if self.indices.len() != self.weights.len() {
            return Err(CliError::input(format!(
                "artifact has {} indices but {} weights",
                self.indices.len(),
                self.weights.len()
            )));
        }
        if self.meta.selected_count != self.indices.len() {
            return Err(CliError::input(
                "artifact selected_count does not match its indices",
            ));
        }
        let regression = self.pipeline != Pipeline::Lvm;
        if regression && (self.meta.lambda.is_none() || self.meta.p.is_none()) {
            return Err(CliError::input(
                "regression artifact is missing lambda or p",
            ));
        }
        if !regression && self.meta.k.is_none() {
            return Err(CliError::input("lvm artifact is missing k"));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let a: CoresetArtifact = serde_json::from_slice(bytes)
            .map_err(|e| CliError::input(format!("malformed artifact: {e}")))?;
        a.validate()?;
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_json(&bytes).map_err(|e| match e {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            e => e,
        })
    }
}

/// Pretty JSON whose floats carry 17 significant digits, enough to
/// round-trip every binary64 value.
pub struct ExactFloatFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for ExactFloatFormatter<'_> {
    fn default() -> Self {
        ExactFloatFormatter {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for ExactFloatFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter::default());
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    out.push(b'\n');
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| CliError::Io {
        path: path.into(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CoresetArtifact {
        CoresetArtifact {
            schema_version: SCHEMA_VERSION.into(),
            pipeline: Pipeline::Ridge,
            indices: vec![3, 17],
            weights: vec![0.1, 1.0 / 3.0],
            reg_diag: Some(BTreeMap::from([(10, -2.5), (2, 1e-300)])),
            meta: ArtifactMeta {
                lambda: Some(1.0),
                p: Some(2),
                k: None,
                n: 20,
                d: 2,
                label_column: Some(2),
                layout: Some("sign-tensor".into()),
                clusters: None,
                kernel_rank: 9,
                sd_bound: Some(4.25),
                selected_count: 2,
                regularizer_count: Some(2),
                wall_ms: None,
            },
        }
    }

    #[test]
    fn floats_use_seventeen_digits() {
        let text = String::from_utf8(to_json(&sample())).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(!text.contains("wall_ms"));
        assert!(!text.contains("\"k\""));
        // regularizer positions are ordered numerically
        assert!(text.find("\"2\"").unwrap() < text.find("\"10\"").unwrap());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut a = sample();
        a.weights = vec![f64::MIN_POSITIVE, 0.1 + 0.2, 123456.78901234567, f64::MAX];
        a.indices = vec![0, 1, 2, 3];
        a.meta.selected_count = 4;
        let back = CoresetArtifact::from_json(&to_json(&a)).unwrap();
        assert_eq!(back, a);
        assert_eq!(to_json(&back), to_json(&a));
    }

    #[test]
    fn rejects_bad_artifacts() {
        let mut a = sample();
        a.schema_version = "0".into();
        assert!(CoresetArtifact::from_json(&to_json(&a)).is_err());
        let mut a = sample();
        a.weights.pop();
        assert!(CoresetArtifact::from_json(&to_json(&a)).is_err());
        assert!(CoresetArtifact::from_json(b"{").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
