//! OpenML download client with an on-disk cache.
//!
//! Cache layout: `{cache_dir}/{id}/meta.json` holds the JSON returned by
//! `GET /api/v1/json/data/{id}`, `{cache_dir}/{id}/dataset.arff` the ARFF
//! payload it points at. Files are written to a temporary name in the same
//! directory and renamed into place, so concurrent fetches of the same id
//! never expose a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use md5::{Digest, Md5};
use serde_json::Value;

use super::{parse_arff, ArffOptions, Dataset, PositiveClass};
use crate::error::{Error, Result};

pub const DEFAULT_OPENML_URL: &str = "https://www.openml.org";

#[derive(Clone, Debug)]
pub struct OpenMlClient {
    pub base_url: String,
    /// When set, only the cache is consulted.
    pub offline: bool,
    pub timeout: Duration,
}

impl Default for OpenMlClient {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_OPENML_URL.to_string(),
            offline: false,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Fetches (or loads from cache) an OpenML dataset with the default client;
/// the positive class is the minority class.
pub fn fetch_openml(dataset_id: u64, cache_dir: &Path) -> Result<Dataset> {
    OpenMlClient::default().fetch(dataset_id, cache_dir, &PositiveClass::Minority)
}

struct Description {
    arff_url: Option<String>,
    md5: Option<String>,
    target: Option<String>,
}

fn describe(meta: &Value) -> Description {
    let d = &meta["data_set_description"];
    let text = |key: &str| d[key].as_str().map(str::to_string);
    Description {
        arff_url: text("url"),
        md5: text("md5_checksum"),
        // OpenML may list several comma-separated default targets; the first wins.
        target: text("default_target_attribute")
            .and_then(|t| t.split(',').next().map(|s| s.trim().to_string()))
            .filter(|t| !t.is_empty()),
    }
}

fn md5_hex(bytes: &[u8]) -> String {
    Md5::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

impl OpenMlClient {
    pub fn cache_paths(cache_dir: &Path, dataset_id: u64) -> (PathBuf, PathBuf) {
        let dir = cache_dir.join(dataset_id.to_string());
        (dir.join("meta.json"), dir.join("dataset.arff"))
    }

    pub fn fetch(
        &self,
        dataset_id: u64,
        cache_dir: &Path,
        positive: &PositiveClass,
    ) -> Result<Dataset> {
        if dataset_id == 0 {
            return Err(Error::Precondition("OpenML dataset id must be positive".into()));
        }
        let (meta_path, arff_path) = Self::cache_paths(cache_dir, dataset_id);
        let (meta_bytes, arff_bytes) = if meta_path.is_file() && arff_path.is_file() {
            log::debug!("OpenML {dataset_id}: cache hit in {}", cache_dir.display());
            (fs::read(&meta_path)?, fs::read(&arff_path)?)
        } else if self.offline {
            return Err(Error::Network(format!(
                "dataset {dataset_id} is not cached in {} and network access is disabled",
                cache_dir.display()
            )));
        } else {
            self.download(dataset_id, cache_dir)?
        };

        let meta: Value = serde_json::from_slice(&meta_bytes)?;
        let desc = describe(&meta);
        if let Some(expected) = &desc.md5 {
            let actual = md5_hex(&arff_bytes);
            if !expected.eq_ignore_ascii_case(&actual) {
                return Err(Error::ChecksumMismatch {
                    id: dataset_id,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        parse_arff(
            &arff_bytes,
            &ArffOptions {
                target: desc.target,
                positive: positive.clone(),
            },
        )
    }

    fn download(&self, dataset_id: u64, cache_dir: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Network(e.to_string()))?;
        let get = |url: &str| -> Result<Vec<u8>> {
            let resp = client
                .get(url)
                .send()
                .map_err(|e| Error::Network(format!("GET {url}: {e}")))?;
            if !resp.status().is_success() {
                return Err(Error::Network(format!("GET {url}: HTTP {}", resp.status())));
            }
            resp.bytes()
                .map(|b| b.to_vec())
                .map_err(|e| Error::Network(format!("GET {url}: {e}")))
        };

        let base = self.base_url.trim_end_matches('/');
        let meta_bytes = get(&format!("{base}/api/v1/json/data/{dataset_id}"))?;
        let meta: Value = serde_json::from_slice(&meta_bytes)?;
        let desc = describe(&meta);
        let url = desc.arff_url.ok_or_else(|| {
            Error::Network(format!("metadata for dataset {dataset_id} names no ARFF url"))
        })?;
        let arff_bytes = get(&url)?;
        if let Some(expected) = &desc.md5 {
            let actual = md5_hex(&arff_bytes);
            if !expected.eq_ignore_ascii_case(&actual) {
                return Err(Error::ChecksumMismatch {
                    id: dataset_id,
                    expected: expected.clone(),
                    actual,
                });
            }
        }

        let dir = cache_dir.join(dataset_id.to_string());
        fs::create_dir_all(&dir)?;
        write_atomic(&dir, "dataset.arff", &arff_bytes)?;
        write_atomic(&dir, "meta.json", &meta_bytes)?;
        Ok((meta_bytes, arff_bytes))
    }
}
