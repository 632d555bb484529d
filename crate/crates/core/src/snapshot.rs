//! Binary field snapshots.
//!
//! ```text
//! 0   "CHBF"
//! 4   u32 version (1)
//! 8   u32 nx
//! 12  u32 ny
//! 16  f64 lx
//! 24  f64 ly
//! 32  scalar: nx·ny f64, y-outer
//!     vector: u8 bc tag, then (nx+1)·ny f64 (ux), then nx·(ny+1) f64 (uy)
//! ```
//!
//! Everything is little-endian.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{ChbError, Result};
use crate::grid::{GridSpec, MacVector, ScalarBc, ScalarField, VectorBc};

pub const MAGIC: &[u8; 4] = b"CHBF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

fn header(grid: &GridSpec) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.ny() as u32).to_le_bytes());
    out.extend_from_slice(&grid.lx().to_le_bytes());
    out.extend_from_slice(&grid.ly().to_le_bytes());
    out
}

fn push_values(out: &mut Vec<u8>, a: &Array2<f64>) {
    out.reserve(8 * a.len());
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_scalar(f: &ScalarField) -> Vec<u8> {
    let mut out = header(f.grid());
    push_values(&mut out, f.values());
    out
}

pub fn encode_vector(v: &MacVector) -> Vec<u8> {
    let mut out = header(v.grid());
    out.push(v.bc().tag());
    push_values(&mut out, v.ux());
    push_values(&mut out, v.uy());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> ChbError {
        ChbError::Snapshot {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn grid(&mut self) -> Result<GridSpec> {
        if self.take(4)? != MAGIC {
            return Err(self.err("bad magic"));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(self.err(format!("unsupported version {version}")));
        }
        let nx = self.u32()? as usize;
        let ny = self.u32()? as usize;
        let lx = self.f64()?;
        let ly = self.f64()?;
        GridSpec::new(nx, ny, lx, ly).map_err(|e| self.err(e.to_string()))
    }

    fn array(&mut self, shape: (usize, usize)) -> Result<Array2<f64>> {
        let raw = self.take(8 * shape.0 * shape.1)?;
        let vals = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec(shape, vals).expect("shape checked by length"))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_scalar(bytes: &[u8], bc: ScalarBc, path: &Path) -> Result<ScalarField> {
    let mut r = Reader { bytes, pos: 0, path };
    let grid = r.grid()?;
    let values = r.array(grid.cell_shape())?;
    r.finish()?;
    ScalarField::from_values(grid, bc, values).map_err(|e| r.err(e.to_string()))
}

pub fn decode_vector(bytes: &[u8], path: &Path) -> Result<MacVector> {
    let mut r = Reader { bytes, pos: 0, path };
    let grid = r.grid()?;
    let tag = r.take(1)?[0];
    let bc = VectorBc::from_tag(tag).ok_or_else(|| r.err(format!("unknown bc tag {tag}")))?;
    let ux = r.array(grid.ux_shape())?;
    let uy = r.array(grid.uy_shape())?;
    r.finish()?;
    MacVector::from_components(grid, bc, ux, uy).map_err(|e| r.err(e.to_string()))
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    fs::write(path, encode_scalar(f)).map_err(|e| ChbError::io(path, e))
}

pub fn write_vector(path: &Path, v: &MacVector) -> Result<()> {
    fs::write(path, encode_vector(v)).map_err(|e| ChbError::io(path, e))
}

pub fn read_scalar(path: &Path, bc: ScalarBc) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|e| ChbError::io(path, e))?;
    decode_scalar(&bytes, bc, path)
}

pub fn read_vector(path: &Path) -> Result<MacVector> {
    let bytes = fs::read(path).map_err(|e| ChbError::io(path, e))?;
    decode_vector(&bytes, path)
}

pub fn phi_file_name(step: usize) -> String {
    format!("phi_{step:08}.chbf")
}

pub fn u_file_name(step: usize) -> String {
    format!("u_{step:08}.chbf")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = GridSpec::new(4, 5, 1.5, 2.0).unwrap();
        let f = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| x + 10.0 * y);
        let b = encode_scalar(&f);
        assert_eq!(b.len(), HEADER_LEN + 8 * 20);
        assert_eq!(&b[..4], b"CHBF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 5);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 1.5);
        // y-outer: second value is cell (i=1, j=0)
        let v1 = f64::from_le_bytes(b[40..48].try_into().unwrap());
        assert_eq!(v1, f.values()[[0, 1]]);
        let back = decode_scalar(&b, ScalarBc::Neumann, Path::new("mem")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let g = GridSpec::unit_square(4).unwrap();
        let f = ScalarField::zeros(g, ScalarBc::Neumann);
        let mut b = encode_scalar(&f);
        let p = Path::new("mem");
        assert!(decode_scalar(&b[..40], ScalarBc::Neumann, p).is_err());
        b.push(0);
        assert!(decode_scalar(&b, ScalarBc::Neumann, p).is_err());
        b.pop();
        b[0] = b'X';
        assert!(decode_scalar(&b, ScalarBc::Neumann, p).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let g = GridSpec::new(4, 6, 1.0, 1.0).unwrap();
        let mut v = MacVector::zeros(g, VectorBc::NoSlip);
        let ux = Array2::from_shape_fn(g.ux_shape(), |(j, i)| (i * 7 + j) as f64 * 0.1);
        let uy = Array2::from_shape_fn(g.uy_shape(), |(j, i)| (i + 3 * j) as f64 * 0.2);
        v = MacVector::from_raw(g, v.bc(), ux, uy);
        v.enforce_boundary();
        let b = encode_vector(&v);
        assert_eq!(b.len(), HEADER_LEN + 1 + 8 * (5 * 6 + 4 * 7));
        assert_eq!(decode_vector(&b, Path::new("mem")).unwrap(), v);
    }
}
