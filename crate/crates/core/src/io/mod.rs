//! Dataset ingestion and model artifacts.

mod artifact;
mod dataset;

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use artifact::{
    label_paths, load_labels, load_model, read_header, save_labels, save_model, write_model, ArtifactError, ArtifactHeader,
    LoadedModel, HEADER_LEN, MAGIC, VERSION,
};
pub use dataset::{
    load_dataset, load_dataset_dir, parse_line, DataError, DatasetBundle, DatasetStats, SplitProvenance,
    UnseenPolicy,
};

/// SHA-256 of a byte slice as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's contents as lowercase hex.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
