//! Versioned binary checkpoint: fixed header, then every parameter as
//! little-endian f64.
//!
//! Layout: magic `FFDET001`, u32 version, u32 × 4 dims (input, hidden1,
//! hidden2, heads), f64 distance threshold, f64 panorama width, u64 geometry
//! fingerprint, u64 trainable-parameter count, then `w_backsub`, input mean,
//! input scale, W1, b1, W2, b2, W3, b3.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::features::FEATURE_LEN;
use super::model::{DetectorModel, HIDDEN1, HIDDEN2, N_HEADS, N_PARAMS};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FFDET001";
const VERSION: u32 = 1;

fn put_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint(model: &DetectorModel, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [FEATURE_LEN, HIDDEN1, HIDDEN2, N_HEADS] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&model.distance_threshold.to_le_bytes())?;
    w.write_all(&model.width.to_le_bytes())?;
    w.write_all(&model.geometry_hash.to_le_bytes())?;
    w.write_all(&(N_PARAMS as u64).to_le_bytes())?;
    put_f64s(&mut w, [model.w_backsub])?;
    put_f64s(&mut w, model.input_mean.iter().copied())?;
    put_f64s(&mut w, model.input_scale.iter().copied())?;
    put_f64s(&mut w, model.params().into_iter().skip(1))?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_checkpoint(r: impl Read) -> Result<DetectorModel> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
    let expected = [FEATURE_LEN, HIDDEN1, HIDDEN2, N_HEADS].map(|d| d as u32);
    if dims != expected {
        return Err(Error::Checkpoint(format!("dimensions {dims:?}, expected {expected:?}")));
    }
    let distance_threshold = r.f64()?;
    let width = r.f64()?;
    let geometry_hash = r.u64()?;
    let n = r.u64()? as usize;
    if n != N_PARAMS {
        return Err(Error::Checkpoint(format!("{n} parameters, expected {N_PARAMS}")));
    }
    let w_backsub = r.f64()?;
    let input_mean = Array1::from(r.f64s(FEATURE_LEN)?);
    let input_scale = Array1::from(r.f64s(FEATURE_LEN)?);
    let mut model = DetectorModel {
        w_backsub,
        input_mean,
        input_scale,
        w1: Array2::zeros((FEATURE_LEN, HIDDEN1)),
        b1: Array1::zeros(HIDDEN1),
        w2: Array2::zeros((HIDDEN1, HIDDEN2)),
        b2: Array1::zeros(HIDDEN2),
        w3: Array2::zeros((HIDDEN2, N_HEADS)),
        b3: Array1::zeros(N_HEADS),
        distance_threshold,
        width,
        geometry_hash,
    };
    let mut flat = vec![w_backsub];
    flat.extend(r.f64s(N_PARAMS - 1)?);
    model.set_params(&flat)?;
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save(model: &DetectorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<DetectorModel> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
