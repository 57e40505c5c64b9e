//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"NVLB"
//! version u8 (currently 1)
//! kind    u16 length + UTF-8 bytes (model kind tag, may be empty)
//! count   u32 number of records
//! record  name: u16 length + UTF-8 bytes
//!         rank: u8, dims: u32 each
//!         values: f64 little-endian, product(dims) of them
//! ```
//!
//! Records are ordered; save followed by load is byte-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NVLB";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    BadMagic { path: String },
    #[error("unsupported checkpoint version {found} in {path}")]
    BadVersion { path: String, found: u8 },
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn from_params(kind: &str, params: &[(String, Tensor)]) -> Self {
        let records = params
            .iter()
            .map(|(name, t)| Record {
                name: name.clone(),
                shape: t.shape(),
                data: t.to_vec(),
            })
            .collect();
        Checkpoint { kind: kind.to_string(), records }
    }

    /// Copy record values back into the given tensors, matched by name.
    pub fn restore_into(&self, params: &[(String, Tensor)]) -> Result<(), CheckpointError> {
        for (name, tensor) in params {
            let rec = self
                .records
                .iter()
                .find(|r| &r.name == name)
                .ok_or_else(|| CheckpointError::Corrupt {
                    path: String::new(),
                    reason: format!("missing record {name}"),
                })?;
            if rec.shape != tensor.shape() {
                return Err(CheckpointError::Corrupt {
                    path: String::new(),
                    reason: format!(
                        "record {name} has shape {:?}, expected {:?}",
                        rec.shape,
                        tensor.shape()
                    ),
                });
            }
            tensor.set_data(&rec.data);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let r = (|| {
            w.write_all(MAGIC)?;
            w.write_all(&[VERSION])?;
            write_str(&mut w, &self.kind)?;
            w.write_all(&(self.records.len() as u32).to_le_bytes())?;
            for rec in &self.records {
                write_str(&mut w, &rec.name)?;
                w.write_all(&[rec.shape.len() as u8])?;
                for &d in &rec.shape {
                    w.write_all(&(d as u32).to_le_bytes())?;
                }
                for &v in &rec.data {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()
        })();
        r.map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let p = path.display().to_string();
        let io_err = |source| CheckpointError::Io { path: p.clone(), source };
        let file = File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic { path: p });
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(io_err)?;
        if version[0] != VERSION {
            return Err(CheckpointError::BadVersion { path: p, found: version[0] });
        }
        let kind = read_str(&mut r).map_err(io_err)?;
        let mut count = [0u8; 4];
        r.read_exact(&mut count).map_err(io_err)?;
        let count = u32::from_le_bytes(count) as usize;

        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(&mut r).map_err(io_err)?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).map_err(io_err)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                let mut d = [0u8; 4];
                r.read_exact(&mut d).map_err(io_err)?;
                shape.push(u32::from_le_bytes(d) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf).map_err(io_err)?;
                data.push(f64::from_le_bytes(buf));
            }
            records.push(Record { name, shape, data });
        }
        // Trailing bytes mean the writer and reader disagree.
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(io_err)? != 0 {
            return Err(CheckpointError::Corrupt {
                path: p,
                reason: "trailing bytes after final record".into(),
            });
        }
        Ok(Checkpoint { kind, records })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u16).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let len = u16::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_exact_roundtrip() {
        let dir = std::env::temp_dir().join(format!("navlab-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.bin");

        let params = vec![
            ("w".to_string(), Tensor::new(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-300, 7.0]).unwrap()),
            ("b".to_string(), Tensor::vector(vec![0.5, -0.5])),
        ];
        let ck = Checkpoint::from_params("causal_lm", &params);
        ck.save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ck);

        loaded.save(&path).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = std::env::temp_dir().join(format!("navlab-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::BadMagic { .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
