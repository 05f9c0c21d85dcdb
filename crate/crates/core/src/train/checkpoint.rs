//! Versioned binary checkpoints.
//!
//! Layout, little-endian: magic `DIFNETCK`, `u32` version, `u64` header
//! length, JSON header, `u64` matrix count, then per matrix `u32` name
//! length, UTF-8 name, `u64` rows, `u64` cols and `rows·cols` `f64` values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainConfig, TrainError};
use crate::model::ParamSet;
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"DIFNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub feature_dim: usize,
    pub class_count: usize,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    feature_dim: usize,
    class_count: usize,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TrainError> {
        let header =
            Header { config: self.config.clone(), feature_dim: self.feature_dim, class_count: self.class_count };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mats = self.params.matrices();
        w.write_all(&(mats.len() as u64).to_le_bytes())?;
        for (name, m) in mats {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TrainError> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let len = read_len(&mut r, 1 << 20)?;
        let mut json = vec![0u8; len];
        read_exact(&mut r, &mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
        let mut params = ModelParams::zeros(&header.config, header.feature_dim, header.class_count)?;
        let count = read_len(&mut r, 1 << 20)?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
            if name_len > 1024 {
                return Err(bad("matrix name too long"));
            }
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("matrix name is not UTF-8"))?;
            let rows = read_len(&mut r, 1 << 32)?;
            let cols = read_len(&mut r, 1 << 32)?;
            let n = rows.checked_mul(cols).filter(|&n| n <= 1 << 32).ok_or_else(|| bad("matrix too large"))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(read_array(&mut r)?));
            }
            entries.push((name, Matrix::from_vec(rows, cols, data).expect("length matches")));
        }
        params.load_named(&entries)?;
        Ok(Checkpoint {
            config: header.config,
            feature_dim: header.feature_dim,
            class_count: header.class_count,
            params,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TrainError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TrainError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad("truncated checkpoint"),
        _ => TrainError::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], TrainError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_len<R: Read>(r: &mut R, max: u64) -> Result<usize, TrainError> {
    let v = u64::from_le_bytes(read_array(r)?);
    if v > max {
        return Err(bad(format!("length field {v} exceeds {max}")));
    }
    Ok(v as usize)
}
