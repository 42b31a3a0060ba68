//! Binary checkpoints.
//!
//! ```text
//! magic        8 bytes  "GMTCKPT\0"
//! version      u32 LE
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON
//! tensors      for each entry of header.tensors, in order:
//!                rows u32 LE, cols u32 LE, rows·cols f32 LE (row-major)
//! ```
//!
//! The header names every tensor and stores the GCN and aggregation
//! settings. Values are rounded to `f32` on save.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{MatchNet, PARAM_NAMES};
use super::{GcnConfig, Mlp, NetError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GMTCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    use_geometry: bool,
    num_layers: usize,
    aggregation: String,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn write_checkpoint(net: &MatchNet, out: &mut impl Write) -> Result<()> {
    let tensors = net.tensors();
    let header = Header {
        use_geometry: net.gcn.use_geometry,
        num_layers: net.gcn.num_layers,
        aggregation: net.aggregation.to_string(),
        tensors: PARAM_NAMES
            .iter()
            .zip(&tensors)
            .map(|(n, t)| TensorInfo {
                name: (*n).to_string(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for t in &tensors {
        out.write_all(&(t.nrows() as u32).to_le_bytes())?;
        out.write_all(&(t.ncols() as u32).to_le_bytes())?;
        for r in 0..t.nrows() {
            for c in 0..t.ncols() {
                out.write_all(&(t[(r, c)] as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<MatchNet> {
    let bad = |m: String| NetError::Checkpoint(m);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic".into()));
    }
    let version = read_u32(input)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = read_u32(input)? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != PARAM_NAMES {
        return Err(bad(format!("unexpected tensors {names:?}")));
    }
    let mut mats = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let (rows, cols) = (read_u32(input)? as usize, read_u32(input)? as usize);
        if (rows, cols) != (info.rows, info.cols) {
            return Err(bad(format!(
                "{} is {rows}x{cols}, header says {}x{}",
                info.name, info.rows, info.cols
            )));
        }
        let mut buf = vec![0u8; rows * cols * 4];
        input.read_exact(&mut buf)?;
        let vals: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        mats.push(DMatrix::from_row_slice(rows, cols, &vals));
    }
    let mlp = |m: &[DMatrix<f64>]| -> Result<Mlp> {
        let ok = m[1].ncols() == 1
            && m[3].ncols() == 1
            && m[0].nrows() == m[1].nrows()
            && m[2].ncols() == m[0].nrows()
            && m[2].nrows() == m[3].nrows();
        if !ok {
            return Err(NetError::Checkpoint("inconsistent layer shapes".into()));
        }
        Ok(Mlp {
            w1: m[0].clone(),
            b1: m[1].column(0).into_owned(),
            w2: m[2].clone(),
            b2: m[3].column(0).into_owned(),
        })
    };
    let encoder = mlp(&mats[0..4])?;
    let gcn_mlp = mlp(&mats[4..8])?;
    if gcn_mlp.input_dim() != encoder.output_dim() || gcn_mlp.output_dim() != encoder.output_dim() {
        return Err(bad("GCN width does not match the encoder".into()));
    }
    Ok(MatchNet {
        encoder,
        gcn_mlp,
        gcn: GcnConfig {
            use_geometry: header.use_geometry,
            num_layers: header.num_layers,
        },
        aggregation: header.aggregation.parse()?,
    })
}

pub fn save_checkpoint(net: &MatchNet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MatchNet> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}
