//! Self-describing binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "LRGCKPT\0"
//! version      u32
//! meta_count   u32
//!   key_len u32, key bytes (UTF-8), value_len u32, value bytes (UTF-8)
//! tensor_count u32
//!   name_len u32, name bytes (UTF-8)
//!   dtype u8            0 = f32, 1 = f64
//!   rank u32, dims u64 × rank
//!   values              product(dims) × dtype size, little-endian
//! digest       32 bytes sha256 of every preceding byte
//! ```
//!
//! Files are written to a sibling temporary file and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"LRGCKPT\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A tensor as stored: dtype, shape, and raw little-endian bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub dtype: DType,
    pub shape: Vec<usize>,
    bytes: Vec<u8>,
}

impl StoredTensor {
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * T::DTYPE.size());
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        Self {
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            bytes,
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::usage(format!(
                "stored dtype {:?} does not match requested {:?}",
                self.dtype,
                T::DTYPE
            )));
        }
        let data = self
            .bytes
            .chunks_exact(self.dtype.size())
            .map(T::read_le)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }
}

/// Metadata plus named tensors, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    tensors: Vec<(String, StoredTensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Add or replace a tensor.
    pub fn insert<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let name = name.into();
        let stored = StoredTensor::from_tensor(t);
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = stored,
            None => self.tensors.push((name, stored)),
        }
    }

    /// Add every tensor under `section/`.
    pub fn insert_section<'a, T: Scalar>(
        &mut self,
        section: &str,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
    ) {
        for (name, t) in tensors {
            self.insert(format!("{section}/{name}"), t);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn stored(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        self.stored(name)
            .ok_or_else(|| Error::usage(format!("checkpoint has no tensor named {name:?}")))?
            .to_tensor()
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}/");
        self.names().any(|n| n.starts_with(&prefix))
    }

    /// Serialise to the documented byte layout, digest included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.push(t.dtype.code());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&t.bytes);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parse and verify. Errors carry a human-readable reason.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err("file is too short".into());
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if !body.starts_with(MAGIC) {
            return Err("bad magic bytes".into());
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err("checksum mismatch".into());
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.metadata.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let dtype = DType::from_code(r.u8()?).ok_or("unknown dtype code")?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| "dimension overflows usize")?);
            }
            let len = shape
                .iter()
                .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
                .ok_or("tensor size overflows")?;
            let bytes = r.take(len)?.to_vec();
            ck.tensors.push((
                name,
                StoredTensor {
                    dtype,
                    shape,
                    bytes,
                },
            ));
        }
        if r.pos != body.len() {
            return Err(format!("{} trailing bytes", body.len() - r.pos));
        }
        Ok(ck)
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ck_err(path, e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|reason| ck_err(path, reason))
    }
}

fn ck_err(path: &Path, reason: String) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    }
}

/// Write `bytes` via a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Hex sha256 over names, shapes, and raw values of the given tensors.
pub fn params_checksum<'a, T: Scalar>(
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> String {
    let mut h = Sha256::new();
    let mut buf = Vec::new();
    for (name, t) in tensors {
        h.update((name.len() as u32).to_le_bytes());
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        buf.clear();
        for &v in t.data() {
            v.write_le(&mut buf);
        }
        h.update(&buf);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::glorot_uniform;

    fn sample() -> Checkpoint {
        let mut rng = RngStream::new(5);
        let mut ck = Checkpoint::new();
        ck.set_meta("epochs", "400");
        ck.set_meta("vocab/source", "source_vocab.tsv");
        ck.insert("encoder/kernel", &glorot_uniform::<f32>(&[3, 8], &mut rng));
        ck.insert("encoder/bias", &Tensor::<f32>::zeros(&[8]));
        ck.insert(
            "probe",
            &Tensor::<f64>::from_f64(&[2], &[0.1, -3.5]).unwrap(),
        );
        ck.insert("scalar", &Tensor::<f32>::scalar(2.5));
        ck
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.get::<f64>("probe").unwrap().data(), &[0.1, -3.5]);
        assert_eq!(back.get::<f32>("scalar").unwrap().data(), &[2.5]);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"LRGCKPT\0");
        assert_eq!(
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            VERSION
        );
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        // first key is "epochs" (BTreeMap order)
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 6);
        assert_eq!(&bytes[20..26], b"epochs");
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert_eq!(
            Checkpoint::from_bytes(&bytes).unwrap_err(),
            "checksum mismatch"
        );
        assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
        assert!(
            Checkpoint::from_bytes(b"garbage garbage garbage garbage garbage garbage").is_err()
        );
    }

    #[test]
    fn dtype_mismatch_is_an_error() {
        assert!(sample().get::<f64>("encoder/bias").is_err());
        assert!(sample().get::<f32>("missing").is_err());
    }

    #[test]
    fn save_load_and_no_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        let entries: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        assert!(matches!(
            Checkpoint::load(&dir.path().join("absent")),
            Err(Error::Checkpoint { .. })
        ));
    }

    #[test]
    fn sections() {
        let ck = sample();
        assert!(ck.has_section("encoder"));
        assert!(!ck.has_section("generator"));
    }

    #[test]
    fn checksum_tracks_values() {
        let a = Tensor::<f32>::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::from_f64(&[2], &[1.0, 2.000001]).unwrap();
        let x = params_checksum([("w", &a)]);
        assert_eq!(x.len(), 64);
        assert_eq!(x, params_checksum([("w", &a.clone())]));
        assert_ne!(x, params_checksum([("w", &b)]));
        assert_ne!(x, params_checksum([("v", &a)]));
    }
}
