//! Binary embedding container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SQEM" | version: u32 = 1 | dim: u32 | count: u64
//! count x ( key_len: u16 | key: UTF-8 | frames: u32 | frames*dim f32 )
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SQEM";
const VERSION: u32 = 1;

/// Keyed embeddings of a fixed dimension. Each entry is a `frames x dim`
/// matrix; sentence-level encoders produce one frame per key.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: IndexMap<String, Array2<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::InvalidInput(format!("embedding dim {dim} out of range")));
        }
        Ok(EmbeddingStore {
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds an entry; rejects duplicate keys, wrong width, empty or
    /// non-finite matrices.
    pub fn insert(&mut self, key: impl Into<String>, frames: Array2<f32>) -> Result<()> {
        let key = key.into();
        if key.len() > u16::MAX as usize {
            return Err(Error::InvalidInput(format!(
                "key of {} bytes exceeds the 65535-byte limit",
                key.len()
            )));
        }
        if frames.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: frames.ncols(),
            });
        }
        if frames.nrows() == 0 || frames.nrows() > u32::MAX as usize {
            return Err(Error::InvalidInput(format!("entry {key:?} has {} frames", frames.nrows())));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("entry {key:?} has non-finite values")));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::InvalidInput(format!("duplicate embedding key {key:?}")));
        }
        self.entries.insert(key, frames.as_standard_layout().into_owned());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<ArrayView2<'_, f32>> {
        self.entries.get(key).map(|a| a.view())
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries in insertion (file) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, ArrayView2<'_, f32>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.view()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Serializes to the container byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|(k, v)| 2 + k.len() + 4 + 4 * v.len())
            .sum();
        let mut buf = Vec::with_capacity(20 + payload);
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (key, frames) in &self.entries {
            buf.extend_from_slice(&(key.len() as u16).to_le_bytes());
            buf.extend_from_slice(key.as_bytes());
            buf.extend_from_slice(&(frames.nrows() as u32).to_le_bytes());
            for v in frames.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    /// Parses and validates the container byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != EMBEDDING_MAGIC {
            return Err(Error::Format("bad magic, not an embedding container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut store = EmbeddingStore::new(dim)?;
        for _ in 0..count {
            let key_len = r.u16()? as usize;
            let key_offset = r.offset();
            let key = std::str::from_utf8(r.take(key_len)?)
                .map_err(|_| Error::Format(format!("key at offset {key_offset} is not UTF-8")))?
                .to_owned();
            let frames = r.u32()? as usize;
            if frames == 0 {
                return Err(Error::Format(format!("entry {key:?} has zero frames")));
            }
            let n = frames
                .checked_mul(dim)
                .ok_or_else(|| Error::Format(format!("entry {key:?} is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let matrix = Array2::from_shape_vec((frames, dim), data).expect("shape matches length");
            store.insert(key, matrix).map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} records at offset {}",
                r.remaining(),
                r.offset()
            )));
        }
        Ok(store)
    }
}

/// Reads an embedding container from disk.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// Writes an embedding container to disk.
pub fn write_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Bounds-checked little-endian cursor shared by both container readers.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                needed: (n - self.remaining()) as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn zero_entry_round_trips_bit_exactly() {
        let mut store = EmbeddingStore::new(4).unwrap();
        store.insert("k1", Array2::zeros((1, 4))).unwrap();
        let bytes = store.to_bytes();
        assert_eq!(&bytes[..4], b"SQEM");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 2 + 2 + 4 + 16);
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn short_record_is_truncation_error() {
        // Header says dim = 4, but the single frame only carries 3 floats.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SQEM");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(b"k1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        match EmbeddingStore::from_bytes(&bytes) {
            Err(Error::Truncated { offset, needed }) => {
                assert_eq!(offset, 28);
                assert_eq!(needed, 4);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn variable_frame_counts_are_preserved() {
        let mut store = EmbeddingStore::new(3).unwrap();
        store.insert("utt", Array2::from_elem((7, 3), 0.25)).unwrap();
        store.insert("sent", array![[1.0, -2.0, 3.5]]).unwrap();
        let back = EmbeddingStore::from_bytes(&store.to_bytes()).unwrap();
        assert_eq!(back.get("utt").unwrap().nrows(), 7);
        assert_eq!(back.get("sent").unwrap().nrows(), 1);
        assert_eq!(back.keys().collect::<Vec<_>>(), ["utt", "sent"]);
    }

    #[test]
    fn rejects_bad_magic_version_and_trailing_bytes() {
        let store = EmbeddingStore::new(2).unwrap();
        let mut bytes = store.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = store.to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes),
            Err(Error::Version { found: 2, .. })
        ));

        let mut bytes = store.to_bytes();
        bytes.push(0);
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_non_finite_and_wrong_width() {
        let mut store = EmbeddingStore::new(2).unwrap();
        assert!(store.insert("a", array![[1.0, f32::NAN]]).is_err());
        assert!(store.insert("a", array![[1.0, 2.0, 3.0]]).is_err());
        assert!(store.insert("a", Array2::zeros((0, 2))).is_err());
        store.insert("a", array![[1.0, 2.0]]).unwrap();
        assert!(store.insert("a", array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn rejects_nan_payload_on_read() {
        let mut store = EmbeddingStore::new(1).unwrap();
        store.insert("a", array![[1.0]]).unwrap();
        let mut bytes = store.to_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(EmbeddingStore::from_bytes(&bytes).is_err());
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        any::<u32>()
            .prop_map(f32::from_bits)
            .prop_filter("finite", |v| v.is_finite())
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dim in 1usize..6,
            entries in prop::collection::vec((1usize..5, prop::collection::vec(finite_f32(), 30)), 0..6),
        ) {
            let mut store = EmbeddingStore::new(dim).unwrap();
            for (i, (frames, pool)) in entries.iter().enumerate() {
                let data: Vec<f32> = pool.iter().cycle().take(frames * dim).copied().collect();
                store.insert(format!("key-{i}"), Array2::from_shape_vec((*frames, dim), data).unwrap()).unwrap();
            }
            let bytes = store.to_bytes();
            let back = EmbeddingStore::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for ((k1, a), (k2, b)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(k1, k2);
                let bits_a: Vec<u32> = a.iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u32> = b.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }
}
