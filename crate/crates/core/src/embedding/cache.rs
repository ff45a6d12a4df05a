//! Content-addressed embedding cache backed by an append-only log.
//!
//! Each log record is `key (32 bytes) | dim (u32 LE) | dim × f32 LE`. The key
//! is a SHA-256 over provider id, preset id and the exact provider input, so
//! changing any of them misses the cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::hash::digest_parts;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("embedding cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type CacheKey = [u8; 32];

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Arc<[f32]>>>,
    log: Mutex<Option<(PathBuf, BufWriter<File>)>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn key(provider_id: &str, preset_id: &str, input: &str) -> CacheKey {
        digest_parts(&[provider_id.as_bytes(), preset_id.as_bytes(), input.as_bytes()])
    }

    /// Opens (or creates) a log file and loads its entries. A torn record at
    /// the end of the file, left by an interrupted write, is discarded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let (entries, valid) = decode_log(&bytes);
        if valid < bytes.len() {
            tracing::warn!(
                path = %path.display(),
                dropped = bytes.len() - valid,
                "discarding torn record at end of embedding cache"
            );
            file.set_len(valid as u64).map_err(io_err)?;
            file.seek(SeekFrom::End(0)).map_err(io_err)?;
        }
        Ok(EmbeddingCache {
            entries: RwLock::new(entries),
            log: Mutex::new(Some((path, BufWriter::new(file)))),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<[f32]>> {
        self.entries.read().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().is_empty()
    }

    pub fn insert_many(&self, items: &[(CacheKey, Arc<[f32]>)]) -> Result<(), CacheError> {
        let mut log = self.log.lock();
        if let Some((path, writer)) = log.as_mut() {
            let mut write = || -> io::Result<()> {
                for (key, values) in items {
                    writer.write_all(key)?;
                    writer.write_all(&(values.len() as u32).to_le_bytes())?;
                    for v in values.iter() {
                        writer.write_all(&v.to_le_bytes())?;
                    }
                }
                writer.flush()
            };
            write().map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })?;
        }
        let mut entries = self.entries.write();
        for (key, values) in items {
            entries.insert(*key, values.clone());
        }
        Ok(())
    }
}

/// Decodes complete records; returns them and the byte length they span.
fn decode_log(bytes: &[u8]) -> (HashMap<CacheKey, Arc<[f32]>>, usize) {
    let mut entries = HashMap::new();
    let mut pos = 0;
    loop {
        let header_end = pos + 36;
        if header_end > bytes.len() {
            break;
        }
        let key: CacheKey = bytes[pos..pos + 32].try_into().expect("32 bytes");
        let dim = u32::from_le_bytes(bytes[pos + 32..header_end].try_into().expect("4 bytes")) as usize;
        let end = header_end + dim * 4;
        if end > bytes.len() {
            break;
        }
        let values: Arc<[f32]> = bytes[header_end..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        entries.insert(key, values);
        pos = end;
    }
    (entries, pos)
}
