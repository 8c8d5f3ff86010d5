//! Versioned binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   7 bytes  "USTAR01"
//! dtype   1 byte   1 = f32, 2 = f64
//! digest  u32 len + bytes   (config digest, opaque to this module)
//! meta    u32 len + bytes   (model hyperparameters as JSON)
//! count   u32               number of parameter blobs
//! blob*   u32 name len + name bytes
//!         u32 rank + u64 dims...
//!         raw little-endian values
//! ```
//!
//! Round trips are bit-exact: values are written at native width.

use super::nn::Parameters;
use super::scalar::Scalar;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 7] = b"USTAR01";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected USTAR01")]
    BadMagic,
    #[error("dtype {got} does not match expected {want}")]
    DtypeMismatch { got: u8, want: u8 },
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
    #[error("blob {name} has {got} values but dims imply {want}")]
    BlobSize { name: String, got: usize, want: usize },
}

pub struct Checkpoint {
    pub dtype: u8,
    pub digest: Vec<u8>,
    pub meta: String,
    pub blobs: Vec<Blob>,
}

pub struct Blob {
    pub name: String,
    pub dims: Vec<u64>,
    /// Raw little-endian value bytes at the container's dtype width.
    pub data: Vec<u8>,
}

impl Blob {
    pub fn values<T: Scalar>(&self) -> Vec<T> {
        self.data
            .chunks_exact(T::WIDTH)
            .map(|c| T::read_le(c))
            .collect()
    }
}

/// Serialize a parameter store with its config digest and meta JSON.
pub fn save<T: Scalar>(
    path: &Path,
    params: &Parameters<T>,
    digest: &[u8],
    meta: &str,
) -> Result<(), CheckpointError> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE);
    out.extend_from_slice(&(digest.len() as u32).to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, entry) in params.iter() {
        out.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(entry.rows as u64).to_le_bytes());
        out.extend_from_slice(&(entry.cols as u64).to_le_bytes());
        for &v in &entry.value {
            v.write_le(&mut out);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a checkpoint container without interpreting the blobs.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(7, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let dtype = cur.take(1, "dtype")?[0];
    let width = match dtype {
        1 => 4,
        2 => 8,
        _ => return Err(CheckpointError::DtypeMismatch { got: dtype, want: 1 }),
    };
    let dlen = cur.u32("digest len")? as usize;
    let digest = cur.take(dlen, "digest")?.to_vec();
    let mlen = cur.u32("meta len")? as usize;
    let meta = String::from_utf8_lossy(cur.take(mlen, "meta")?).into_owned();
    let count = cur.u32("blob count")?;
    let mut blobs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let nlen = cur.u32("name len")? as usize;
        let name = String::from_utf8_lossy(cur.take(nlen, "name")?).into_owned();
        let rank = cur.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u64("dim")?);
        }
        let n: u64 = dims.iter().product();
        let data = cur.take(n as usize * width, "values")?.to_vec();
        if data.len() != n as usize * width {
            return Err(CheckpointError::BlobSize {
                name,
                got: data.len() / width,
                want: n as usize,
            });
        }
        blobs.push(Blob { name, dims, data });
    }
    Ok(Checkpoint {
        dtype,
        digest,
        meta,
        blobs,
    })
}

/// Overwrite a parameter store's values from a checkpoint, matching by name.
pub fn restore<T: Scalar>(
    params: &mut Parameters<T>,
    ckpt: &Checkpoint,
) -> Result<(), CheckpointError> {
    if ckpt.dtype != T::DTYPE {
        return Err(CheckpointError::DtypeMismatch {
            got: ckpt.dtype,
            want: T::DTYPE,
        });
    }
    for blob in &ckpt.blobs {
        let id = params
            .find(&blob.name)
            .ok_or_else(|| CheckpointError::BlobSize {
                name: blob.name.clone(),
                got: 0,
                want: 0,
            })?;
        let entry = params.entry_mut(id);
        let values: Vec<T> = blob.values();
        if values.len() != entry.value.len() {
            return Err(CheckpointError::BlobSize {
                name: blob.name.clone(),
                got: values.len(),
                want: entry.value.len(),
            });
        }
        entry.value = values;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ustar");
        let mut params = Parameters::<f32>::new();
        params.alloc("a.w", 3, 4, 3, 11);
        params.alloc("a.b", 1, 4, 3, 11);
        save(&path, &params, b"digest-bytes", r#"{"kind":"star"}"#).unwrap();

        let ckpt = load(&path).unwrap();
        assert_eq!(ckpt.digest, b"digest-bytes");
        assert_eq!(ckpt.meta, r#"{"kind":"star"}"#);
        assert_eq!(ckpt.blobs.len(), 2);

        let mut restored = Parameters::<f32>::new();
        restored.alloc("a.w", 3, 4, 3, 999); // different init, overwritten below
        restored.alloc("a.b", 1, 4, 3, 999);
        restore(&mut restored, &ckpt).unwrap();
        for ((_, a), (_, b)) in params.iter().zip(restored.iter()) {
            let ab: Vec<u32> = a.value.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.value.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }

        // Saving the restored store reproduces the file byte for byte.
        let path2 = dir.path().join("model2.ustar");
        save(&path2, &restored, b"digest-bytes", r#"{"kind":"star"}"#).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ustar");
        std::fs::write(&path, b"NOTUSTARxxxxxxxxxxxx").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn dtype_mismatch_rejected_on_restore() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f64.ustar");
        let mut params = Parameters::<f64>::new();
        params.alloc("w", 2, 2, 2, 5);
        save(&path, &params, b"", "{}").unwrap();
        let ckpt = load(&path).unwrap();
        let mut target = Parameters::<f32>::new();
        target.alloc("w", 2, 2, 2, 5);
        assert!(matches!(
            restore(&mut target, &ckpt),
            Err(CheckpointError::DtypeMismatch { .. })
        ));
    }
}
