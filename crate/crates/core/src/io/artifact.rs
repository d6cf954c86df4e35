//! `.kge` model artifact.
//!
//! All integers little-endian. Layout:
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 8    | magic `KGCPEMB\0`                      |
//! | 8      | 4    | format version (u32, currently 1)      |
//! | 12     | 4    | float width in bytes (u32, 4 or 8)     |
//! | 16     | 8    | entity count `n_e` (u64)               |
//! | 24     | 8    | relation count `n_r` (u64)             |
//! | 32     | 8    | rank `R` (u64)                         |
//! | 40     | 8    | training seed (u64)                    |
//! | 48     | 32   | SHA-256 of the canonical config text   |
//! | 80     | …    | entity matrix, `n_e × R`, row-major    |
//! | …      | …    | relation matrix, `n_r × R`, row-major  |
//!
//! Nothing follows the relation matrix. Labels live in two sibling text
//! files, one label per line, line `i` naming id `i`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gcp::FactorModel;
use crate::matrix::Matrix;
use crate::real::Real;
use crate::trainer::TrainConfig;
use crate::vocab::Vocabulary;

use super::{sha256_hex, write_atomic};

pub const MAGIC: [u8; 8] = *b"KGCPEMB\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 80;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model artifact (magic mismatch)")]
    BadMagic,
    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported float width {0}")]
    BadFloatWidth(u32),
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("truncated matrix section `{section}`: expected {expected} bytes, found {found}")]
    TruncatedMatrix {
        section: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("{0} unexpected bytes after the relation matrix")]
    TrailingBytes(u64),
    #[error("matrix dimensions {rows} x {rank} x {width} bytes overflow")]
    DimensionOverflow { rows: u64, rank: u64, width: u64 },
    #[error("artifact stores {file}-byte floats but {requested}-byte floats were requested; enable conversion to load")]
    WidthMismatch { file: usize, requested: usize },
    #[error("{path}:{line}: {reason}")]
    Labels { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub version: u32,
    pub float_width: usize,
    pub n_entities: u64,
    pub n_relations: u64,
    pub rank: u64,
    pub seed: u64,
    pub config_digest: [u8; 32],
}

impl ArtifactHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..8].copy_from_slice(&MAGIC);
        h[8..12].copy_from_slice(&self.version.to_le_bytes());
        h[12..16].copy_from_slice(&(self.float_width as u32).to_le_bytes());
        h[16..24].copy_from_slice(&self.n_entities.to_le_bytes());
        h[24..32].copy_from_slice(&self.n_relations.to_le_bytes());
        h[32..40].copy_from_slice(&self.rank.to_le_bytes());
        h[40..48].copy_from_slice(&self.seed.to_le_bytes());
        h[48..80].copy_from_slice(&self.config_digest);
        h
    }

    fn decode(bytes: &[u8]) -> Result<Self, ArtifactError> {
        if bytes.len() < 8 || bytes[0..8] != MAGIC {
            return Err(ArtifactError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ArtifactError::TruncatedHeader(bytes.len()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(ArtifactError::UnsupportedVersion(version));
        }
        let width = u32_at(12);
        if width != 4 && width != 8 {
            return Err(ArtifactError::BadFloatWidth(width));
        }
        Ok(Self {
            version,
            float_width: width as usize,
            n_entities: u64_at(16),
            n_relations: u64_at(24),
            rank: u64_at(32),
            seed: u64_at(40),
            config_digest: bytes[48..80].try_into().unwrap(),
        })
    }

    pub fn config_digest_hex(&self) -> String {
        hex::encode(self.config_digest)
    }

    fn section_len(&self, rows: u64) -> Result<u64, ArtifactError> {
        let width = self.float_width as u64;
        rows.checked_mul(self.rank)
            .and_then(|v| v.checked_mul(width))
            .filter(|&v| usize::try_from(v).is_ok())
            .ok_or(ArtifactError::DimensionOverflow {
                rows,
                rank: self.rank,
                width,
            })
    }
}

fn encode_model<T: Real>(model: &FactorModel<T>, seed: u64, config_digest: [u8; 32]) -> Vec<u8> {
    let header = ArtifactHeader {
        version: VERSION,
        float_width: T::WIDTH,
        n_entities: model.n_entities() as u64,
        n_relations: model.n_relations() as u64,
        rank: model.rank() as u64,
        seed,
        config_digest,
    };
    let payload = (model.entities.as_slice().len() + model.relations.as_slice().len()) * T::WIDTH;
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(&header.encode());
    for v in model.entities.as_slice().iter().chain(model.relations.as_slice()) {
        v.write_le(&mut out);
    }
    out
}

/// Writes the artifact atomically and returns the SHA-256 of its bytes.
pub fn save_model<T: Real>(model: &FactorModel<T>, config: &TrainConfig, path: &Path) -> Result<String, ArtifactError> {
    write_model(model, config.seed, config.digest(), path)
}

/// [`save_model`] with the provenance fields given directly, e.g. when
/// re-encoding an existing artifact at another float width.
pub fn write_model<T: Real>(
    model: &FactorModel<T>,
    seed: u64,
    config_digest: [u8; 32],
    path: &Path,
) -> Result<String, ArtifactError> {
    let bytes = encode_model(model, seed, config_digest);
    write_atomic(path, &bytes).map_err(|source| ArtifactError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug)]
pub struct LoadedModel<T> {
    pub model: FactorModel<T>,
    pub header: ArtifactHeader,
    /// SHA-256 of the artifact bytes.
    pub digest: String,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ArtifactError> {
    std::fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_header(path: &Path) -> Result<ArtifactHeader, ArtifactError> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    std::fs::File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|source| ArtifactError::Io {
            path: path.to_owned(),
            source,
        })?;
    ArtifactHeader::decode(&buf)
}

fn decode_section<T: Real, S: Real>(bytes: &[u8], rows: usize, rank: usize) -> Matrix<T> {
    let data = bytes
        .chunks_exact(S::WIDTH)
        .map(|c| T::from_f64(S::read_le(c).to_f64()))
        .collect();
    Matrix::from_vec(rows, rank, data)
}

/// Loads an artifact as `T`. A file written with the other float width is
/// refused unless `convert` is set.
pub fn load_model<T: Real>(path: &Path, convert: bool) -> Result<LoadedModel<T>, ArtifactError> {
    let bytes = read_bytes(path)?;
    let header = ArtifactHeader::decode(&bytes)?;
    if header.float_width != T::WIDTH && !convert {
        return Err(ArtifactError::WidthMismatch {
            file: header.float_width,
            requested: T::WIDTH,
        });
    }
    let a_len = header.section_len(header.n_entities)?;
    let b_len = header.section_len(header.n_relations)?;
    let body = (bytes.len() - HEADER_LEN) as u64;
    if body < a_len {
        return Err(ArtifactError::TruncatedMatrix {
            section: "entity",
            expected: a_len,
            found: body,
        });
    }
    if body - a_len < b_len {
        return Err(ArtifactError::TruncatedMatrix {
            section: "relation",
            expected: b_len,
            found: body - a_len,
        });
    }
    if body > a_len + b_len {
        return Err(ArtifactError::TrailingBytes(body - a_len - b_len));
    }
    let (n_e, n_r, rank) = (header.n_entities as usize, header.n_relations as usize, header.rank as usize);
    let a_bytes = &bytes[HEADER_LEN..HEADER_LEN + a_len as usize];
    let b_bytes = &bytes[HEADER_LEN + a_len as usize..];
    let model = match header.float_width {
        4 => FactorModel::from_parts(
            decode_section::<T, f32>(a_bytes, n_e, rank),
            decode_section::<T, f32>(b_bytes, n_r, rank),
        ),
        _ => FactorModel::from_parts(
            decode_section::<T, f64>(a_bytes, n_e, rank),
            decode_section::<T, f64>(b_bytes, n_r, rank),
        ),
    };
    Ok(LoadedModel {
        model,
        header,
        digest: sha256_hex(&bytes),
    })
}

/// `dir/name.kge` → (`dir/name.entities.txt`, `dir/name.relations.txt`).
pub fn label_paths(model_path: &Path) -> (PathBuf, PathBuf) {
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_owned());
    (
        model_path.with_file_name(format!("{stem}.entities.txt")),
        model_path.with_file_name(format!("{stem}.relations.txt")),
    )
}

pub fn save_labels(vocab: &Vocabulary, path: &Path) -> Result<(), ArtifactError> {
    let mut text = String::new();
    for label in vocab.labels() {
        text.push_str(label);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes()).map_err(|source| ArtifactError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_labels(path: &Path) -> Result<Vocabulary, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut vocab = Vocabulary::new();
    for (i, line) in text.lines().enumerate() {
        let label = line.strip_suffix('\r').unwrap_or(line);
        if vocab.id(label).is_some() {
            return Err(ArtifactError::Labels {
                path: path.to_owned(),
                line: i + 1,
                reason: format!("duplicate label `{label}`"),
            });
        }
        vocab.get_or_insert(label);
    }
    Ok(vocab)
}
