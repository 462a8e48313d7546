//! Versioned binary checkpoints.
//!
//! Layout: magic, format version, scalar dtype tag, JSON-encoded config,
//! then every parameter tensor in declaration order with a shape header.
//! Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Real;
use super::{ModelConfig, ModelError, ModelParams};

const MAGIC: &[u8; 8] = b"MMASRCKP";
const VERSION: u32 = 1;

fn ck_err(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn save<F: Real>(params: &ModelParams<F>, path: &Path) -> Result<(), ModelError> {
    let file = File::create(path).map_err(|e| ck_err(path, e.to_string()))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| ck_err(path, e.to_string());

    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&[F::DTYPE]).map_err(io)?;

    let config =
        serde_json::to_vec(params.config()).map_err(|e| ck_err(path, e.to_string()))?;
    w.write_all(&(config.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&config).map_err(io)?;

    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
    for t in tensors {
        w.write_all(&(t.shape.len() as u32).to_le_bytes()).map_err(io)?;
        for &dim in &t.shape {
            w.write_all(&(dim as u64).to_le_bytes()).map_err(io)?;
        }
        for &x in &t.data {
            // f32 and f64 both round-trip exactly through their own width.
            if F::DTYPE == 1 {
                w.write_all(&(x.to_f32().unwrap()).to_le_bytes()).map_err(io)?;
            } else {
                w.write_all(&(x.to_f64().unwrap()).to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn load<F: Real>(path: &Path) -> Result<ModelParams<F>, ModelError> {
    let file = File::open(path).map_err(|e| ck_err(path, e.to_string()))?;
    let mut r = BufReader::new(file);
    let io = |e: std::io::Error| ck_err(path, e.to_string());

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(ck_err(path, "bad magic"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(io)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(ck_err(path, format!("unsupported version {version}")));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype).map_err(io)?;
    if dtype[0] != F::DTYPE {
        return Err(ck_err(
            path,
            format!("dtype tag {} does not match requested precision", dtype[0]),
        ));
    }

    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).map_err(io)?;
    let config_len = u64::from_le_bytes(buf8) as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes).map_err(io)?;
    let config: ModelConfig =
        serde_json::from_slice(&config_bytes).map_err(|e| ck_err(path, e.to_string()))?;

    // Build a skeleton with the right shapes, then overwrite every tensor.
    let mut params = ModelParams::<F>::init(&config, 0)?;
    r.read_exact(&mut buf4).map_err(io)?;
    let n_tensors = u32::from_le_bytes(buf4) as usize;
    let mut tensors = params.tensors_mut();
    if n_tensors != tensors.len() {
        return Err(ck_err(
            path,
            format!("expected {} tensors, found {n_tensors}", tensors.len()),
        ));
    }
    for t in tensors.iter_mut() {
        r.read_exact(&mut buf4).map_err(io)?;
        let ndim = u32::from_le_bytes(buf4) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            r.read_exact(&mut buf8).map_err(io)?;
            shape.push(u64::from_le_bytes(buf8) as usize);
        }
        if shape != t.shape {
            return Err(ck_err(
                path,
                format!("shape mismatch: stored {shape:?}, expected {:?}", t.shape),
            ));
        }
        for slot in t.data.iter_mut() {
            if F::DTYPE == 1 {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(io)?;
                *slot = F::from(f32::from_le_bytes(b)).unwrap();
            } else {
                r.read_exact(&mut buf8).map_err(io)?;
                *slot = F::from(f64::from_le_bytes(buf8)).unwrap();
            }
        }
    }
    Ok(params)
}
