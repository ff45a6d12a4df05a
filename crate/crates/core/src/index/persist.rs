//! On-disk index format.
//!
//! ```text
//! header:  magic[8] version:u32 dim:u32 m:u32 m0:u32 ef_construction:u32
//!          ef_search:u32 level_lambda:f64 seed:u64 rng_word_pos:u128
//!          node_count:u64 entry:u32 checksum[32]
//! body:    ids       per node: varint byte length, UTF-8 bytes
//!          vectors   node_count × dim × f32
//!          adjacency per node: varint top layer, then per layer a varint
//!                    count followed by varint neighbour indices
//! ```
//!
//! All fixed-width integers and floats are little-endian. The checksum is
//! SHA-256 over the header bytes preceding it and the whole body.

use std::collections::HashMap;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hnsw::{HnswIndex, HnswParams};
use crate::hash::sha256;

pub const MAGIC: &[u8; 8] = b"MSHNSW\r\n";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_PREFIX: usize = 8 + 4 * 6 + 8 + 8 + 16 + 8 + 4;
const HEADER_LEN: usize = HEADER_PREFIX + 32;
const NO_ENTRY: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("index checksum mismatch; the file is corrupted")]
    Checksum,
    #[error("index file is truncated")]
    Truncated,
    #[error("index file is malformed: {0}")]
    Malformed(String),
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.pos.checked_add(n).ok_or(PersistError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(PersistError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], PersistError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn varint(&mut self) -> Result<u64, PersistError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(PersistError::Malformed("varint overflow".into()))
    }

    fn usize_varint(&mut self) -> Result<usize, PersistError> {
        usize::try_from(self.varint()?).map_err(|_| PersistError::Malformed("length overflow".into()))
    }
}

impl HnswIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(self.vectors.len() * 4 + self.ids.len() * 64);
        for id in &self.ids {
            put_varint(&mut body, id.len() as u64);
            body.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors {
            body.extend_from_slice(&v.to_le_bytes());
        }
        for layers in &self.links {
            put_varint(&mut body, (layers.len() - 1) as u64);
            for list in layers {
                put_varint(&mut body, list.len() as u64);
                for &n in list {
                    put_varint(&mut body, u64::from(n));
                }
            }
        }

        let p = &self.params;
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, self.dim as u32, p.m as u32, p.m0 as u32, p.ef_construction as u32, p.ef_search as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.level_lambda.to_le_bytes());
        out.extend_from_slice(&p.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.entry.unwrap_or(NO_ENTRY).to_le_bytes());
        debug_assert_eq!(out.len(), HEADER_PREFIX);
        let mut hashed = out.clone();
        hashed.extend_from_slice(&body);
        out.extend_from_slice(&sha256(&hashed));
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<HnswIndex, PersistError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(PersistError::BadMagic);
        }
        let mut r = Reader { bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(PersistError::Version { found: version });
        }
        if bytes.len() < HEADER_LEN {
            return Err(PersistError::Truncated);
        }
        let stored: [u8; 32] = bytes[HEADER_PREFIX..HEADER_LEN].try_into().expect("32 bytes");
        let mut hashed = bytes[..HEADER_PREFIX].to_vec();
        hashed.extend_from_slice(&bytes[HEADER_LEN..]);
        if sha256(&hashed) != stored {
            return Err(PersistError::Checksum);
        }

        let dim = r.u32()? as usize;
        let params = HnswParams {
            m: r.u32()? as usize,
            m0: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            level_lambda: f64::from_le_bytes(r.array()?),
            seed: r.u64()?,
        };
        let word_pos = u128::from_le_bytes(r.array()?);
        let count = usize::try_from(r.u64()?).map_err(|_| PersistError::Malformed("node count".into()))?;
        let entry = r.u32()?;
        r.pos = HEADER_LEN;

        let mut index = HnswIndex::new(dim, params).map_err(|e| PersistError::Malformed(e.to_string()))?;
        index.rng = ChaCha8Rng::seed_from_u64(params.seed);
        index.rng.set_word_pos(word_pos);

        let mut ids = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let len = r.usize_varint()?;
            let raw = r.take(len)?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| PersistError::Malformed("id is not UTF-8".into()))?
                .to_string();
            ids.push(id);
        }
        let floats = count.checked_mul(dim).ok_or(PersistError::Truncated)?;
        let raw = r.take(floats.checked_mul(4).ok_or(PersistError::Truncated)?)?;
        let vectors: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut links = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let top = r.usize_varint()?;
            if top > 64 {
                return Err(PersistError::Malformed("layer count out of range".into()));
            }
            let mut layers = Vec::with_capacity(top + 1);
            for _ in 0..=top {
                let n = r.usize_varint()?;
                let mut list = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let v = r.varint()?;
                    if v >= count as u64 {
                        return Err(PersistError::Malformed("neighbour index out of range".into()));
                    }
                    list.push(v as u32);
                }
                layers.push(list);
            }
            links.push(layers);
        }
        if r.pos != bytes.len() {
            return Err(PersistError::Malformed("trailing bytes".into()));
        }
        let lookup: HashMap<String, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        if lookup.len() != ids.len() {
            return Err(PersistError::Malformed("duplicate ids".into()));
        }
        index.entry = match entry {
            NO_ENTRY => None,
            e if (e as usize) < count => Some(e),
            _ => return Err(PersistError::Malformed("entry point out of range".into())),
        };
        index.ids = ids;
        index.lookup = lookup;
        index.vectors = vectors;
        index.links = links;
        Ok(index)
    }

    /// Writes atomically: a sibling temp file is renamed over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<HnswIndex, PersistError> {
        HnswIndex::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::normalize;
    use rand::Rng;

    fn build(n: usize, seed: u64) -> HnswIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = HnswIndex::new(8, HnswParams { ef_construction: 32, ..HnswParams::with_m(4) }).unwrap();
        for i in 0..n {
            let raw: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            idx.insert(&format!("doc-{i}"), &normalize(&raw).unwrap()).unwrap();
        }
        idx
    }

    #[test]
    fn empty_round_trip() {
        let idx = HnswIndex::new(4, HnswParams::default()).unwrap();
        let back = HnswIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 4);
        assert_eq!(back.to_bytes(), idx.to_bytes());
    }

    #[test]
    fn round_trip_and_continued_inserts_match() {
        let mut a = build(200, 1);
        let mut b = HnswIndex::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let v = normalize(&[1.0; 8]).unwrap();
        a.insert("extra", &v).unwrap();
        b.insert("extra", &v).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = build(50, 2).to_bytes();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[HEADER_LEN + 100] ^= 0x40;
        assert!(matches!(HnswIndex::from_bytes(&flipped), Err(PersistError::Checksum)));
        flipped = bytes.clone();
        flipped[last] ^= 1;
        assert!(matches!(HnswIndex::from_bytes(&flipped), Err(PersistError::Checksum)));

        assert!(matches!(HnswIndex::from_bytes(&bytes[..20]), Err(PersistError::Truncated)));
        assert!(matches!(HnswIndex::from_bytes(&bytes[..bytes.len() - 3]), Err(PersistError::Checksum)));
        assert!(matches!(HnswIndex::from_bytes(b"garbage!"), Err(PersistError::BadMagic)));

        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            HnswIndex::from_bytes(&wrong_version),
            Err(PersistError::Version { found: 9 })
        ));
    }
}
