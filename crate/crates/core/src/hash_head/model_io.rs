//! BHH1 model files: header, little-endian f64 parameters, then the
//! training configuration as length-prefixed JSON.

use std::path::Path;

use super::{HashHeadParams, TrainConfig};
use crate::bytes::{self, ByteReader};
use crate::error::Result;
use crate::linalg::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"BHH1";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(params: &HashHeadParams, cfg: &TrainConfig) -> Result<Vec<u8>> {
    params.check_shapes()?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    bytes::put_u32(&mut out, MODEL_VERSION);
    bytes::put_u32(&mut out, bytes::u32_field(params.input_dim(), "d")?);
    bytes::put_u32(&mut out, bytes::u32_field(params.code_bits(), "b")?);
    bytes::put_u32(&mut out, bytes::u32_field(params.num_classes(), "K")?);
    for block in params.blocks() {
        bytes::put_f64s(&mut out, block);
    }
    let json = serde_json::to_vec(cfg)?;
    bytes::put_u32(&mut out, bytes::u32_field(json.len(), "config length")?);
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn write_model(path: &Path, params: &HashHeadParams, cfg: &TrainConfig) -> Result<()> {
    bytes::write_file(path, &encode_model(params, cfg)?)
}

pub fn read_model(path: &Path) -> Result<(HashHeadParams, TrainConfig)> {
    let buf = bytes::read_file(path)?;
    decode_model(path, &buf)
}

pub fn decode_model(path: &Path, buf: &[u8]) -> Result<(HashHeadParams, TrainConfig)> {
    let mut r = ByteReader::new(path, buf);
    r.magic(MODEL_MAGIC)?;
    r.version(MODEL_VERSION)?;
    let at = r.offset();
    let d = r.u32("d")? as usize;
    let b = r.u32("b")? as usize;
    let k = r.u32("K")? as usize;
    if d == 0 || b == 0 || k == 0 {
        return Err(r.error_at(at, format!("degenerate shape d={d} b={b} K={k}")));
    }
    let mut read_block = |len: usize, what: &str| -> Result<Vec<f64>> {
        (0..len).map(|_| r.f64_finite(what)).collect()
    };
    let w1 = Matrix::from_raw(b, d, read_block(b * d, "W1")?);
    let b1 = read_block(b, "b1")?;
    let w2 = Matrix::from_raw(k, b, read_block(k * b, "W2")?);
    let b2 = read_block(k, "b2")?;
    let len = r.u32("config length")? as usize;
    let at = r.offset();
    let json = r.take(len, "config json")?;
    let cfg: TrainConfig = serde_json::from_slice(json)
        .map_err(|e| r.error_at(at, format!("bad config json: {e}")))?;
    r.finish()?;
    Ok((HashHeadParams { w1, b1, w2, b2 }, cfg))
}
