//! Dataset manifests (JSON list of `{path, region, split}`) and vocabulary
//! files (one tag per line).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use domtree_core::dataset::Split;
use domtree_core::dom::Page;
use domtree_core::features::TagVocabulary;
use serde::{Deserialize, Serialize};

use crate::snapshot::{read_snapshot, SnapshotError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Snapshot path, relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub region: String,
    #[serde(with = "split_name")]
    pub split: Split,
}

mod split_name {
    use domtree_core::dataset::Split;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(split: &Split, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(split.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Split, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0} is listed more than once")]
    Duplicate(String),
    #[error("page {url} appears in both {first} and {second}")]
    Leak { url: String, first: Split, second: Split },
    #[error("region mismatch for {path}: manifest says {manifest:?}, snapshot says {snapshot:?}")]
    Region {
        path: String,
        manifest: String,
        snapshot: String,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("vocabulary {path}: {reason}")]
    Vocabulary { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    pub base: PathBuf,
}

/// A manifest entry with its parsed snapshot.
#[derive(Clone, Debug)]
pub struct LoadedPage {
    pub entry: ManifestEntry,
    pub page: Page,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = read_text(path)?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|source| ManifestError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(ManifestError::Duplicate(e.path.display().to_string()));
            }
        }
        Ok(Self {
            entries,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(&self.entries).expect("manifest entries always serialise");
        write_text(path, &(text + "\n"))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base.join(&entry.path)
        }
    }

    /// Reads every snapshot of `split` (all splits when `None`), checking
    /// that no page id is shared between splits.
    pub fn load(&self, split: Option<Split>) -> Result<Vec<LoadedPage>, ManifestError> {
        let mut out = Vec::new();
        let mut owner: std::collections::BTreeMap<String, Split> = Default::default();
        for entry in &self.entries {
            let path = self.resolve(entry);
            let page = read_snapshot(&path)?;
            if page.region != entry.region {
                return Err(ManifestError::Region {
                    path: path.display().to_string(),
                    manifest: entry.region.clone(),
                    snapshot: page.region.clone(),
                });
            }
            match owner.get(&page.id) {
                Some(&first) if first != entry.split => {
                    return Err(ManifestError::Leak {
                        url: page.id.clone(),
                        first,
                        second: entry.split,
                    })
                }
                _ => {
                    owner.insert(page.id.clone(), entry.split);
                }
            }
            if split.is_none_or(|s| s == entry.split) {
                out.push(LoadedPage {
                    entry: entry.clone(),
                    page,
                });
            }
        }
        Ok(out)
    }
}

fn read_text(path: &Path) -> Result<String, ManifestError> {
    std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), ManifestError> {
    std::fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_vocabulary(path: &Path) -> Result<TagVocabulary, ManifestError> {
    let text = read_text(path)?;
    let tags = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    TagVocabulary::from_tags(tags).map_err(|e| ManifestError::Vocabulary {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn write_vocabulary(path: &Path, vocab: &TagVocabulary) -> Result<(), ManifestError> {
    let mut text = vocab.tags().join("\n");
    text.push('\n');
    write_text(path, &text)
}
