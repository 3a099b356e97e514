//! Model persistence: a versioned little-endian binary format.
//!
//! Layout: magic, version, dims, seed, base tensors, then the head table
//! sorted by user key. Round trips are byte-stable.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{HydraError, Result};
use crate::model::{BaseParams, FactorizedModel, HeadParams, TextEncoderConfig, OUT_DIM};

const MAGIC: &[u8; 8] = b"HYDRAFM\x01";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| HydraError::ModelFile("unexpected end of file".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| HydraError::ModelFile("unexpected end of file".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| HydraError::ModelFile("truncated tensor data".into()))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn array2_from(vec: Vec<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), vec)
        .map_err(|e| HydraError::ModelFile(format!("tensor shape mismatch: {e}")))
}

impl FactorizedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;
        let cfg = self.config();
        write_u32(&mut w, cfg.hash_dim as u32)?;
        write_u32(&mut w, cfg.hidden_dim as u32)?;
        write_u32(&mut w, cfg.ngram_max as u32)?;
        write_u32(&mut w, OUT_DIM as u32)?;
        w.write_all(&self.seed().to_le_bytes())?;

        let base = self.base();
        write_f64s(&mut w, base.embed.iter())?;
        write_f64s(&mut w, base.mix.iter())?;
        write_f64s(&mut w, base.bias.iter())?;

        write_u32(&mut w, self.n_heads() as u32)?;
        for key in self.head_keys() {
            let head = self.head(key).expect("key from iterator");
            let key_bytes = key.as_bytes();
            write_u32(&mut w, key_bytes.len() as u32)?;
            w.write_all(key_bytes)?;
            write_f64s(&mut w, head.w1.iter())?;
            write_f64s(&mut w, head.b1.iter())?;
            write_f64s(&mut w, head.w2.iter())?;
            write_f64s(&mut w, head.b2.iter())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FactorizedModel> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| HydraError::ModelFile("file too short for header".into()))?;
        if &magic != MAGIC {
            return Err(HydraError::ModelFile("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(HydraError::ModelFile(format!(
                "unsupported model version {version}, expected {VERSION}"
            )));
        }
        let hash_dim = read_u32(&mut r)? as usize;
        let hidden_dim = read_u32(&mut r)? as usize;
        let ngram_max = read_u32(&mut r)? as usize;
        let out_dim = read_u32(&mut r)? as usize;
        if out_dim != OUT_DIM {
            return Err(HydraError::ModelFile(format!(
                "model has output dim {out_dim}, expected {OUT_DIM}"
            )));
        }
        let config = TextEncoderConfig {
            hash_dim,
            hidden_dim,
            ngram_max,
        };
        config
            .validate()
            .map_err(|e| HydraError::ModelFile(format!("invalid stored dims: {e}")))?;
        let seed = read_u64(&mut r)?;

        let embed = array2_from(
            read_f64s(&mut r, hash_dim * hidden_dim)?,
            hash_dim,
            hidden_dim,
        )?;
        let mix = array2_from(
            read_f64s(&mut r, hidden_dim * hidden_dim)?,
            hidden_dim,
            hidden_dim,
        )?;
        let bias = Array1::from_vec(read_f64s(&mut r, hidden_dim)?);
        let base = BaseParams { embed, mix, bias };

        let n_heads = read_u32(&mut r)? as usize;
        let mut heads = BTreeMap::new();
        for _ in 0..n_heads {
            let key_len = read_u32(&mut r)? as usize;
            let mut key_bytes = vec![0u8; key_len];
            r.read_exact(&mut key_bytes)
                .map_err(|_| HydraError::ModelFile("truncated head key".into()))?;
            let key = String::from_utf8(key_bytes)
                .map_err(|_| HydraError::ModelFile("head key is not UTF-8".into()))?;
            let head = HeadParams {
                w1: array2_from(
                    read_f64s(&mut r, hidden_dim * hidden_dim)?,
                    hidden_dim,
                    hidden_dim,
                )?,
                b1: Array1::from_vec(read_f64s(&mut r, hidden_dim)?),
                w2: array2_from(
                    read_f64s(&mut r, OUT_DIM * hidden_dim)?,
                    OUT_DIM,
                    hidden_dim,
                )?,
                b2: Array1::from_vec(read_f64s(&mut r, OUT_DIM)?),
            };
            heads.insert(key, head);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(HydraError::ModelFile(
                "trailing bytes after head table".into(),
            ));
        }

        Ok(FactorizedModel::from_parts(config, base, heads, seed))
    }
}
