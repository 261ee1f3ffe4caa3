use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Cursor};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::parse_record_line;
use super::{EmbeddingIndex, LayerStrategy, RunRecord};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub record_count: usize,
    /// Relative to the manifest's directory.
    pub embedding_file: PathBuf,
    /// Relative to the manifest's directory.
    pub records_file: PathBuf,
    pub format_version: u32,
}

/// A manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
}

impl Dataset {
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, root })
    }

    /// Writes `manifest.json` into `root`.
    pub fn write_manifest(root: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<PathBuf> {
        let path = root.as_ref().join("manifest.json");
        let mut text = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join(&self.manifest.records_file)
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.root.join(&self.manifest.embedding_file)
    }

    pub fn read_records(&self) -> Result<Vec<RunRecord>> {
        let file = fs::File::open(self.records_path())?;
        super::read_records(BufReader::new(file))
    }

    /// Loads the whole embedding dump and indexes it.
    pub fn load_embeddings(&self) -> Result<(Vec<u8>, EmbeddingIndex)> {
        let bytes = fs::read(self.embeddings_path())?;
        let index = EmbeddingIndex::build(Cursor::new(&bytes))?;
        Ok((bytes, index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordStatus {
    /// Record id, or `line N` when the line could not be parsed.
    pub record_id: String,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dataset_failures: Vec<String>,
    pub records: Vec<RecordStatus>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failure_count() == 0
    }

    pub fn failure_count(&self) -> usize {
        self.dataset_failures.len() + self.records.iter().map(|r| r.failures.len()).sum::<usize>()
    }

    pub fn failures(&self) -> impl Iterator<Item = String> + '_ {
        self.dataset_failures.iter().cloned().chain(
            self.records
                .iter()
                .flat_map(|r| r.failures.iter().map(move |f| format!("{}: {f}", r.record_id))),
        )
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid, {} records, 0 failures", self.records.len());
        }
        writeln!(f, "invalid, {} failures", self.failure_count())?;
        for failure in self.failures() {
            writeln!(f, "  {failure}")?;
        }
        Ok(())
    }
}

/// Checks a dataset on disk. Never fails: every problem lands in the report.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = &dataset.manifest;
    if manifest.format_version != FORMAT_VERSION {
        report.dataset_failures.push(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        ));
    }

    let mut records: Vec<Option<RunRecord>> = Vec::new();
    match fs::File::open(dataset.records_path()) {
        Err(e) => report
            .dataset_failures
            .push(format!("records file {}: {e}", dataset.records_path().display())),
        Ok(file) => {
            let mut seen = HashSet::new();
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = match line {
                    Ok(l) => l,
                    Err(e) => {
                        report.dataset_failures.push(format!("records file: {e}"));
                        break;
                    }
                };
                if line.trim().is_empty() {
                    continue;
                }
                match parse_record_line(&line, idx + 1) {
                    Err(e) => {
                        report.records.push(RecordStatus {
                            record_id: format!("line {}", idx + 1),
                            failures: vec![e.to_string()],
                        });
                        records.push(None);
                    }
                    Ok(record) => {
                        let mut failures = Vec::new();
                        if let Err(e) = record.validate() {
                            failures.push(e.to_string());
                        }
                        if !seen.insert(record.record_id.clone()) {
                            failures.push("duplicate record_id".into());
                        }
                        report.records.push(RecordStatus {
                            record_id: record.record_id.clone(),
                            failures,
                        });
                        records.push(Some(record));
                    }
                }
            }
            if records.len() != manifest.record_count {
                report.dataset_failures.push(format!(
                    "count mismatch: manifest declares {} records, records file has {}",
                    manifest.record_count,
                    records.len()
                ));
            }
        }
    }

    let embeddings = dataset.load_embeddings();
    let (bytes, index) = match embeddings {
        Ok(pair) => pair,
        Err(e) => {
            report.dataset_failures.push(format!("embedding file: {e}"));
            return report;
        }
    };
    if index.len() != manifest.record_count {
        report.dataset_failures.push(format!(
            "count mismatch: manifest declares {} records, embedding file has {} blocks",
            manifest.record_count,
            index.len()
        ));
    }

    for (status, record) in report.records.iter_mut().zip(&records) {
        let Some(record) = record else { continue };
        match index.load(Cursor::new(&bytes), &record.embedding_ref) {
            Err(e) => status.failures.push(format!("embedding_ref {:?}: {e}", record.embedding_ref)),
            Ok(set) => {
                if set.strategy() != LayerStrategy::Custom && set.m1() != record.samples.len() {
                    status.failures.push(format!(
                        "sample/embedding count mismatch: {} samples, block m1={}",
                        record.samples.len(),
                        set.m1()
                    ));
                }
            }
        }
    }
    report
}
