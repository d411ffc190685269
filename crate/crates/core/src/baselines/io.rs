//! BLH1 hasher files: kind tag, shape, mean, projection, optional SH mode table.

use std::path::Path;

use super::{HasherKind, LinearHasher, ShMode};
use crate::bytes::{self, ByteReader};
use crate::error::Result;
use crate::linalg::Matrix;

pub const HASHER_MAGIC: &[u8; 4] = b"BLH1";

pub fn encode_hasher(h: &LinearHasher) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(HASHER_MAGIC);
    bytes::put_u32(&mut out, h.kind.tag());
    bytes::put_u32(&mut out, bytes::u32_field(h.input_dim(), "d")?);
    bytes::put_u32(&mut out, bytes::u32_field(h.code_bits(), "b")?);
    bytes::put_f64s(&mut out, &h.mean);
    bytes::put_f64s(&mut out, h.projection.as_slice());
    if let Some(modes) = &h.sh_modes {
        for m in modes {
            bytes::put_u32(&mut out, m.component);
            bytes::put_f64s(&mut out, &[m.frequency, m.min, m.extent]);
        }
    }
    Ok(out)
}

pub fn write_hasher(path: &Path, h: &LinearHasher) -> Result<()> {
    bytes::write_file(path, &encode_hasher(h)?)
}

pub fn read_hasher(path: &Path) -> Result<LinearHasher> {
    let buf = bytes::read_file(path)?;
    decode_hasher(path, &buf)
}

pub fn decode_hasher(path: &Path, buf: &[u8]) -> Result<LinearHasher> {
    let mut r = ByteReader::new(path, buf);
    r.magic(HASHER_MAGIC)?;
    let at = r.offset();
    let tag = r.u32("kind tag")?;
    let kind = HasherKind::from_tag(tag)
        .ok_or_else(|| r.error_at(at, format!("unknown hasher kind {tag}")))?;
    let at = r.offset();
    let d = r.u32("d")? as usize;
    let b = r.u32("b")? as usize;
    if d == 0 || b == 0 {
        return Err(r.error_at(at, format!("degenerate shape d={d} b={b}")));
    }
    let mean = (0..d)
        .map(|_| r.f64_finite("mean"))
        .collect::<Result<Vec<_>>>()?;
    let proj = (0..d * b)
        .map(|_| r.f64_finite("projection"))
        .collect::<Result<Vec<_>>>()?;
    let sh_modes = if kind == HasherKind::Sh {
        let mut modes = Vec::with_capacity(b);
        for _ in 0..b {
            let at = r.offset();
            let component = r.u32("sh component")?;
            let frequency = r.f64_finite("sh frequency")?;
            let min = r.f64_finite("sh min")?;
            let extent = r.f64_finite("sh extent")?;
            if !(extent > 0.0) {
                return Err(r.error_at(at, format!("sh extent {extent} must be > 0")));
            }
            modes.push(ShMode {
                component,
                frequency,
                min,
                extent,
            });
        }
        Some(modes)
    } else {
        None
    };
    r.finish()?;
    Ok(LinearHasher {
        kind,
        mean,
        projection: Matrix::from_raw(d, b, proj),
        sh_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{fit_itq, fit_lsh, fit_sh};
    use crate::linalg::random_gaussian_matrix;
    use crate::rng::Rng;

    #[test]
    fn roundtrip_every_kind() {
        let x = random_gaussian_matrix(&mut Rng::new(1), 30, 6);
        let hashers = [
            fit_lsh(&x, 9, &mut Rng::new(2)).unwrap(),
            fit_itq(&x, 4, 10, &mut Rng::new(2)).unwrap().0,
            fit_sh(&x, 7).unwrap(),
        ];
        for h in hashers {
            let buf = encode_hasher(&h).unwrap();
            assert_eq!(decode_hasher(Path::new("h"), &buf).unwrap(), h);
            let err = decode_hasher(Path::new("h"), &buf[..buf.len() - 3]).unwrap_err();
            assert!(err.to_string().contains("truncated"));
        }
    }
}
