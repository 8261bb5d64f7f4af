//! Binary collection file.
//!
//! Little-endian throughout:
//!
//! ```text
//! header   magic "HCGSVIDX" | version u32 | dimension u32 | count u64
//!          | collection name (u8 length + UTF-8)
//! record   id (u32 length + UTF-8) | dimension × f32
//!          | text digest (u32 length + UTF-8)
//!          | metadata JSON (u32 length + UTF-8, length 0 when absent)
//! trailer  FNV-1a 64 of every preceding byte, u64
//! ```

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{Collection, IndexError, NodeMeta};
use crate::embed::{CollectionKind, EmbeddingRecord, EmbeddingVector};
use crate::util::{fnv1a64, write_atomic};

pub const MAGIC: &[u8; 8] = b"HCGSVIDX";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER: usize = 8 + 4 + 4 + 8;

fn encode(c: &Collection) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER + c.len() * (c.dimension * 4 + 128));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.dimension as u32).to_le_bytes());
    out.extend_from_slice(&(c.records.len() as u64).to_le_bytes());
    let name = c.kind.as_str().as_bytes();
    out.push(name.len() as u8);
    out.extend_from_slice(name);

    let put_str = |out: &mut Vec<u8>, s: &[u8]| {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s);
    };
    for r in &c.records {
        put_str(&mut out, r.node_id.as_bytes());
        for x in r.vector.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        put_str(&mut out, r.text_digest.as_bytes());
        let meta = c
            .metadata
            .get(&r.node_id)
            .map(|m| serde_json::to_vec(m).expect("metadata serializes"))
            .unwrap_or_default();
        put_str(&mut out, &meta);
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::CorruptIndex(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String, IndexError> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| IndexError::CorruptIndex(e.to_string()))
    }
}

fn decode(bytes: &[u8]) -> Result<Collection, IndexError> {
    if bytes.len() < FIXED_HEADER + 8 {
        return Err(IndexError::CorruptIndex(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(IndexError::CorruptIndex("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(IndexError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().unwrap());
    if fnv1a64(body) != stored {
        return Err(IndexError::CorruptIndex("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let dimension = r.u32()? as usize;
    let count = r.u64()?;
    let name_len = r.take(1)?[0] as usize;
    let kind: CollectionKind = r.string(name_len)?.parse().map_err(IndexError::CorruptIndex)?;

    let mut c = Collection::new(kind, dimension);
    for _ in 0..count {
        let id_len = r.u32()? as usize;
        let node_id = r.string(id_len)?;
        let raw = r.take(dimension * 4)?;
        let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let digest_len = r.u32()? as usize;
        let text_digest = r.string(digest_len)?;
        let meta_len = r.u32()? as usize;
        let meta: Option<NodeMeta> = match meta_len {
            0 => None,
            n => Some(serde_json::from_slice(r.take(n)?).map_err(|e| IndexError::CorruptIndex(e.to_string()))?),
        };
        c.upsert(
            EmbeddingRecord {
                node_id,
                collection: kind,
                vector: EmbeddingVector::from_stored(values),
                text_digest,
            },
            meta,
        )?;
    }
    if r.pos != body.len() {
        return Err(IndexError::CorruptIndex("trailing bytes after records".into()));
    }
    if c.len() as u64 != count {
        return Err(IndexError::CorruptIndex("duplicate node ids".into()));
    }
    Ok(c)
}

fn lock_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".lock");
    PathBuf::from(p)
}

impl Collection {
    /// Writes the collection atomically while holding an exclusive lock on
    /// `<path>.lock`.
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let lock = File::create(lock_path(path))?;
        lock.lock()?;
        let result = write_atomic(path, &encode(self));
        lock.unlock()?;
        Ok(result?)
    }

    pub fn load(path: &Path) -> Result<Collection, IndexError> {
        decode(&fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Collection, IndexError> {
        decode(bytes)
    }
}

/// Debug dump of a collection as pretty JSON.
pub fn export_json(c: &Collection) -> serde_json::Value {
    json!({
        "collection": c.kind,
        "dimension": c.dimension,
        "count": c.len(),
        "records": c.records.iter().map(|r| json!({
            "node_id": r.node_id,
            "text_digest": r.text_digest,
            "meta": c.metadata.get(&r.node_id),
            "vector": r.vector.values(),
        })).collect::<Vec<_>>(),
    })
}
