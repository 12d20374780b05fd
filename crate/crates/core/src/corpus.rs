//! Corpus pairing (`<stem>.bpmn` + `<stem>.png`) and seeded train/dev/test splits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BPMN_EXTENSION: &str = "bpmn";
pub const IMAGE_EXTENSION: &str = "png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train, dev or test)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("'{stem}' has a .{present} file but no .{missing} file")]
    UnpairedFile { stem: String, present: &'static str, missing: &'static str },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub diagram_id: String,
    pub bpmn_path: PathBuf,
    pub image_path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    /// Sorted by split, then id.
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |s| self.entries_in(s).count();
        (n(Split::Train), n(Split::Dev), n(Split::Test))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::BadManifest { path: path.to_path_buf(), reason: e.to_string() })
    }
}

/// Train gets half (rounded down), dev a quarter (rounded down), test the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n / 2;
    let dev = n / 4;
    (train, dev, n - train - dev)
}

/// Shuffles the sorted stems with a ChaCha8 stream seeded by `seed` and cuts them by [`split_sizes`].
pub fn assign_splits(stems: &[String], seed: u64) -> Vec<(String, Split)> {
    let mut order: Vec<String> = stems.to_vec();
    order.sort();
    order.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (train, dev, _) = split_sizes(order.len());
    order
        .into_iter()
        .enumerate()
        .map(|(i, stem)| {
            let split = if i < train {
                Split::Train
            } else if i < train + dev {
                Split::Dev
            } else {
                Split::Test
            };
            (stem, split)
        })
        .collect()
}

/// Pairs the `.bpmn` and `.png` files of `dir` by stem and splits them. Other files are ignored.
pub fn split_corpus(dir: &Path, seed: u64) -> Result<CorpusManifest, CorpusError> {
    let io_err = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut pairs: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else { continue };
        let stem = stem.to_string_lossy().into_owned();
        let slot = pairs.entry(stem).or_default();
        match ext.to_string_lossy().to_ascii_lowercase().as_str() {
            BPMN_EXTENSION => slot.0 = Some(path),
            IMAGE_EXTENSION => slot.1 = Some(path),
            _ => {}
        }
    }
    pairs.retain(|_, (b, i)| b.is_some() || i.is_some());
    for (stem, (bpmn, image)) in &pairs {
        match (bpmn, image) {
            (Some(_), None) => {
                return Err(CorpusError::UnpairedFile { stem: stem.clone(), present: BPMN_EXTENSION, missing: IMAGE_EXTENSION })
            }
            (None, Some(_)) => {
                return Err(CorpusError::UnpairedFile { stem: stem.clone(), present: IMAGE_EXTENSION, missing: BPMN_EXTENSION })
            }
            _ => {}
        }
    }
    let stems: Vec<String> = pairs.keys().cloned().collect();
    let mut entries: Vec<ManifestEntry> = assign_splits(&stems, seed)
        .into_iter()
        .map(|(stem, split)| {
            let (bpmn, image) = pairs.remove(&stem).expect("stem came from pairs");
            ManifestEntry { diagram_id: stem, bpmn_path: bpmn.unwrap(), image_path: image.unwrap(), split }
        })
        .collect();
    entries.sort_by(|a, b| (a.split, &a.diagram_id).cmp(&(b.split, &b.diagram_id)));
    Ok(CorpusManifest { seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn touch_pairs(dir: &Path, n: usize) {
        for i in 0..n {
            std::fs::write(dir.join(format!("process_{i:03}.bpmn")), "").unwrap();
            std::fs::write(dir.join(format!("process_{i:03}.png")), "").unwrap();
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(202), (101, 50, 51));
        assert_eq!(split_sizes(4), (2, 1, 1));
        assert_eq!(split_sizes(0), (0, 0, 0));
        assert_eq!(split_sizes(1), (0, 0, 1));
        assert_eq!(split_sizes(12), (6, 3, 3));
    }

    #[test]
    fn pairs_and_splits_directory() {
        let dir = tempfile::tempdir().unwrap();
        touch_pairs(dir.path(), 4);
        std::fs::write(dir.path().join("notes.txt"), "").unwrap();
        std::fs::write(dir.path().join("process_000.tesseract.tokens.tsv"), "").unwrap();
        let m = split_corpus(dir.path(), 7).unwrap();
        assert_eq!(m.counts(), (2, 1, 1));
        assert_eq!(m.seed, 7);
        for e in &m.entries {
            assert_eq!(e.bpmn_path.file_stem(), e.image_path.file_stem());
            assert_eq!(e.bpmn_path.file_stem().unwrap().to_str().unwrap(), e.diagram_id);
        }
        assert_eq!(split_corpus(dir.path(), 7).unwrap(), m);
    }

    #[test]
    fn unpaired_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        touch_pairs(dir.path(), 2);
        std::fs::write(dir.path().join("lonely.bpmn"), "").unwrap();
        match split_corpus(dir.path(), 1) {
            Err(CorpusError::UnpairedFile { stem, missing, .. }) => {
                assert_eq!(stem, "lonely");
                assert_eq!(missing, "png");
            }
            other => panic!("expected UnpairedFile, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        touch_pairs(dir.path(), 5);
        let m = split_corpus(dir.path(), 3).unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(CorpusManifest::load(&path).unwrap(), m);
    }

    #[test]
    fn split_names() {
        for s in Split::ALL {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("holdout".parse::<Split>().is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_stems(n in 0usize..300, seed in any::<u64>()) {
            let stems: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            let assigned = assign_splits(&stems, seed);
            prop_assert_eq!(assigned.len(), n);
            let mut ids: Vec<&String> = assigned.iter().map(|(s, _)| s).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
            let count = |sp| assigned.iter().filter(|(_, s)| *s == sp).count();
            prop_assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), split_sizes(n));
        }

        #[test]
        fn input_order_does_not_matter(seed in any::<u64>()) {
            let stems: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
            let mut reversed = stems.clone();
            reversed.reverse();
            prop_assert_eq!(assign_splits(&stems, seed), assign_splits(&reversed, seed));
        }
    }
}
