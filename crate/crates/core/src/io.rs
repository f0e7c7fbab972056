//! Binary tensor and mask files.
//!
//! Layout (all integers little-endian): 4 magic bytes (`TNSR` for real
//! tensors, `MASK` for masks), `u32` version = 1, `u32` order `N`, `N`
//! `u64` mode sizes, then the entries in the canonical linearization as
//! `f64` (tensors) or `u8` in `{0, 1}` (masks).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MaskTensor, Shape};

const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
const MASK_MAGIC: &[u8; 4] = b"MASK";
const VERSION: u32 = 1;

fn write_header(w: &mut impl Write, magic: &[u8; 4], shape: &Shape) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(shape.order() as u32).to_le_bytes())?;
    for &d in shape.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<Shape> {
    let found = read_array::<4>(r)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&found)
        )));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = u32::from_le_bytes(read_array(r)?) as usize;
    if order == 0 || order > 64 {
        return Err(Error::Format(format!("implausible order {order}")));
    }
    let mut dims = Vec::with_capacity(order);
    for _ in 0..order {
        let d = u64::from_le_bytes(read_array(r)?);
        dims.push(
            usize::try_from(d).map_err(|_| Error::Format(format!("mode size {d} too large")))?,
        );
    }
    Shape::new(dims).map_err(|e| Error::Format(e.to_string()))
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &DenseTensor) -> Result<()> {
    write_header(w, TENSOR_MAGIC, t.shape())?;
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<DenseTensor> {
    let shape = read_header(r, TENSOR_MAGIC)?;
    let mut data = Vec::with_capacity(shape.len());
    for _ in 0..shape.len() {
        data.push(f64::from_le_bytes(read_array(r)?));
    }
    expect_eof(r)?;
    DenseTensor::new(shape, data)
}

pub fn write_mask(w: &mut impl Write, m: &MaskTensor) -> Result<()> {
    write_header(w, MASK_MAGIC, m.shape())?;
    let bytes: Vec<u8> = m.bits().iter().map(|&b| u8::from(b)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_mask(r: &mut impl Read) -> Result<MaskTensor> {
    let shape = read_header(r, MASK_MAGIC)?;
    let mut bytes = vec![0u8; shape.len()];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("file is truncated".into()))?;
    expect_eof(r)?;
    let bits = bytes
        .into_iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Format(format!(
                "mask byte {b} at entry {i} is not 0 or 1"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    MaskTensor::new(shape, bits)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}

pub fn save_mask(path: impl AsRef<Path>, m: &MaskTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mask(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskTensor> {
    read_mask(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_and_layout() {
        let t = DenseTensor::new(Shape::new(vec![2, 1]).unwrap(), vec![1.5, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"TNSR");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..20], &2u64.to_le_bytes());
        assert_eq!(buf.len(), 4 + 4 + 4 + 16 + 16);
        assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn mask_round_trip() {
        let m = MaskTensor::from_indices(Shape::new(vec![3, 2]).unwrap(), &[1, 4]).unwrap();
        let mut buf = Vec::new();
        write_mask(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"MASK");
        assert_eq!(read_mask(&mut buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let t = DenseTensor::filled(Shape::new(vec![2]).unwrap(), 1.0);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(matches!(
            read_tensor(&mut &buf[..buf.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_mask(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_tensor(&mut extra.as_slice()).is_err());

        let m = MaskTensor::full(Shape::new(vec![2]).unwrap(), true);
        let mut mb = Vec::new();
        write_mask(&mut mb, &m).unwrap();
        *mb.last_mut().unwrap() = 2;
        assert!(read_mask(&mut mb.as_slice()).is_err());
    }
}
