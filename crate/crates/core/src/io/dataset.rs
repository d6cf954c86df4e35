//! Tab-separated triple files: `subject<TAB>relation<TAB>object`, one per
//! line, no header. `\r\n` endings are accepted.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::store::{StoreError, TripleStore};
use crate::vocab::Vocabulary;

use super::sha256_hex;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: {kind} label `{label}` does not occur in the training split")]
    UnseenLabel {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        label: String,
    },
    #[error("{path}: {source}")]
    Store {
        path: PathBuf,
        #[source]
        source: StoreError,
    },
}

/// What to do with validation/test labels absent from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnseenPolicy {
    /// Append them to the vocabulary after all training labels.
    #[default]
    Extend,
    /// Fail on the first one.
    Strict,
    /// Drop the triple and count it.
    Lenient,
}

impl std::str::FromStr for UnseenPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "extend" => Ok(UnseenPolicy::Extend),
            "strict" => Ok(UnseenPolicy::Strict),
            "lenient" => Ok(UnseenPolicy::Lenient),
            _ => Err(format!("unknown unseen-label policy `{s}`")),
        }
    }
}

impl std::fmt::Display for UnseenPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnseenPolicy::Extend => "extend",
            UnseenPolicy::Strict => "strict",
            UnseenPolicy::Lenient => "lenient",
        })
    }
}

/// Splits one line into its three fields.
pub fn parse_line(line: &str) -> Result<(&str, &str, &str), String> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.split('\t');
    let (Some(s), Some(r), Some(o), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
        return Err(format!("expected 3 tab-separated fields, found {}", line.split('\t').count()));
    };
    if s.is_empty() || r.is_empty() || o.is_empty() {
        return Err("empty field".to_owned());
    }
    Ok((s, r, o))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitProvenance {
    pub path: PathBuf,
    /// SHA-256 of the file bytes.
    pub digest: String,
    pub lines: usize,
    pub duplicates: usize,
    pub dropped_unseen: usize,
}

/// Three splits over one shared vocabulary.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
    pub provenance: [SplitProvenance; 3],
    pub policy: UnseenPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub n_entities: usize,
    pub n_relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub train_duplicates: usize,
    pub valid_duplicates: usize,
    pub test_duplicates: usize,
    pub valid_dropped_unseen: usize,
    pub test_dropped_unseen: usize,
    pub train_valid_overlap: usize,
    pub train_test_overlap: usize,
    pub valid_test_overlap: usize,
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("train", self.train),
            ("valid", self.valid),
            ("test", self.test),
            ("train_duplicates", self.train_duplicates),
            ("valid_duplicates", self.valid_duplicates),
            ("test_duplicates", self.test_duplicates),
            ("valid_dropped_unseen", self.valid_dropped_unseen),
            ("test_dropped_unseen", self.test_dropped_unseen),
            ("train_valid_overlap", self.train_valid_overlap),
            ("train_test_overlap", self.train_test_overlap),
            ("valid_test_overlap", self.valid_test_overlap),
        ]
        .iter()
        .map(|(k, v)| format!("{k}: {v}\n"))
        .collect()
    }
}

fn overlap(a: &TripleStore, b: &TripleStore) -> usize {
    a.triples().iter().filter(|t| b.contains_triple(t)).count()
}

impl DatasetBundle {
    /// Union of all splits; the exclusion source for filtered ranking.
    pub fn known(&self) -> TripleStore {
        TripleStore::union(&[&self.train, &self.valid, &self.test]).expect("splits share one id space")
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            n_entities: self.entities.len(),
            n_relations: self.relations.len(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
            train_duplicates: self.provenance[0].duplicates,
            valid_duplicates: self.provenance[1].duplicates,
            test_duplicates: self.provenance[2].duplicates,
            valid_dropped_unseen: self.provenance[1].dropped_unseen,
            test_dropped_unseen: self.provenance[2].dropped_unseen,
            train_valid_overlap: overlap(&self.train, &self.valid),
            train_test_overlap: overlap(&self.train, &self.test),
            valid_test_overlap: overlap(&self.valid, &self.test),
        }
    }
}

struct RawSplit {
    path: PathBuf,
    digest: String,
    lines: usize,
    ids: Vec<(u32, u32, u32)>,
    dropped: usize,
}

fn read_split(
    path: &Path,
    entities: &mut Vocabulary,
    relations: &mut Vocabulary,
    policy: Option<UnseenPolicy>,
) -> Result<RawSplit, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let digest = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        DataError::Malformed {
            path: path.to_owned(),
            line,
            reason: "invalid UTF-8".to_owned(),
        }
    })?;
    let mut ids = Vec::new();
    let mut dropped = 0;
    let mut lines = 0;
    for (i, line) in text.lines().enumerate() {
        lines += 1;
        let (s, r, o) = parse_line(line).map_err(|reason| DataError::Malformed {
            path: path.to_owned(),
            line: i + 1,
            reason,
        })?;
        let triple = match policy {
            // Training split, or extension allowed.
            None | Some(UnseenPolicy::Extend) => Some((
                entities.get_or_insert(s),
                relations.get_or_insert(r),
                entities.get_or_insert(o),
            )),
            Some(p) => {
                let lookup = [("entity", entities.id(s), s), ("relation", relations.id(r), r), ("entity", entities.id(o), o)];
                match lookup.iter().find(|(_, id, _)| id.is_none()) {
                    None => Some((lookup[0].1.unwrap(), lookup[1].1.unwrap(), lookup[2].1.unwrap())),
                    Some(&(kind, _, label)) if p == UnseenPolicy::Strict => {
                        return Err(DataError::UnseenLabel {
                            path: path.to_owned(),
                            line: i + 1,
                            kind,
                            label: label.to_owned(),
                        })
                    }
                    Some(_) => None,
                }
            }
        };
        match triple {
            Some(t) => ids.push(t),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} triples with labels unseen in training", path.display());
    }
    Ok(RawSplit {
        path: path.to_owned(),
        digest,
        lines,
        ids,
        dropped,
    })
}

/// Loads three split files. Ids are assigned in order of first appearance in
/// `train`; validation and test labels not seen there are handled per
/// `policy`.
pub fn load_dataset(train: &Path, valid: &Path, test: &Path, policy: UnseenPolicy) -> Result<DatasetBundle, DataError> {
    let mut entities = Vocabulary::new();
    let mut relations = Vocabulary::new();
    let raw_train = read_split(train, &mut entities, &mut relations, None)?;
    let raw_valid = read_split(valid, &mut entities, &mut relations, Some(policy))?;
    let raw_test = read_split(test, &mut entities, &mut relations, Some(policy))?;
    let (n_e, n_r) = (entities.len(), relations.len());
    let build = |raw: &RawSplit| {
        TripleStore::build(&raw.ids, n_e, n_r).map_err(|source| DataError::Store {
            path: raw.path.clone(),
            source,
        })
    };
    let train_store = build(&raw_train)?;
    let valid_store = build(&raw_valid)?;
    let test_store = build(&raw_test)?;
    let prov = |raw: RawSplit, store: &TripleStore| SplitProvenance {
        path: raw.path,
        digest: raw.digest,
        lines: raw.lines,
        duplicates: store.duplicates_dropped(),
        dropped_unseen: raw.dropped,
    };
    let provenance = [
        prov(raw_train, &train_store),
        prov(raw_valid, &valid_store),
        prov(raw_test, &test_store),
    ];
    Ok(DatasetBundle {
        entities,
        relations,
        train: train_store,
        valid: valid_store,
        test: test_store,
        provenance,
        policy,
    })
}

/// `dir/train.txt`, `dir/valid.txt`, `dir/test.txt`.
pub fn load_dataset_dir(dir: &Path, policy: UnseenPolicy) -> Result<DatasetBundle, DataError> {
    load_dataset(&dir.join("train.txt"), &dir.join("valid.txt"), &dir.join("test.txt"), policy)
}
