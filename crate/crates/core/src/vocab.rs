use indexmap::IndexSet;
use sha2::{Digest, Sha256};

/// Bijective label ↔ dense id map. Ids are assigned in order of first
/// insertion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: IndexSet<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for label in labels {
            let label = label.into();
            if !vocab.labels.insert(label.clone()) {
                return Err(format!("duplicate label `{label}`"));
            }
        }
        Ok(vocab)
    }

    pub fn get_or_insert(&mut self, label: &str) -> u32 {
        if let Some(id) = self.labels.get_index_of(label) {
            return id as u32;
        }
        self.labels.insert(label.to_owned());
        (self.labels.len() - 1) as u32
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.labels.get_index_of(label).map(|i| i as u32)
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get_index(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    /// SHA-256 over the labels joined by `\n`, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}
