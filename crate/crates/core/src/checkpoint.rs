//! Binary checkpoints.
//!
//! Layout (little-endian): magic `PKRG`, version `u32`, `n` `u32`, period `f64`,
//! time `f64`, alpha `f64`, then `3 n^3` complex values stored as `(re, im)` pairs
//! of `f64`, component-major, each component in the grid's row-major index order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{SpectralField, Spectrum};
use crate::grid::Grid;

pub const MAGIC: &[u8; 4] = b"PKRG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub time: f64,
    pub alpha: f64,
    pub field: SpectralField,
}

pub fn encode(field: &SpectralField, time: f64, alpha: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 48 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&g.period().to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&alpha.to_le_bytes());
    for c in field.components() {
        for z in c.coeffs() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn take<const K: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; K]> {
    let end = *at + K;
    let s = bytes
        .get(*at..end)
        .ok_or_else(|| Error::Format(format!("truncated at byte {}", *at)))?;
    *at = end;
    Ok(s.try_into().expect("length checked"))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if &take::<4>(bytes, &mut at)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(take(bytes, &mut at)?) as usize;
    let period = f64::from_le_bytes(take(bytes, &mut at)?);
    let time = f64::from_le_bytes(take(bytes, &mut at)?);
    let alpha = f64::from_le_bytes(take(bytes, &mut at)?);
    let grid = Grid::new(n, period)?;
    let expected = HEADER_LEN + 48 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for n = {n}, found {}",
            bytes.len()
        )));
    }
    let mut comps = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut c = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = f64::from_le_bytes(take(bytes, &mut at)?);
            let im = f64::from_le_bytes(take(bytes, &mut at)?);
            c.push(Complex64::new(re, im));
        }
        comps.push(Spectrum::from_coeffs(grid, c)?);
    }
    let [x, y, z]: [Spectrum; 3] = comps.try_into().expect("three components");
    let field = SpectralField::from_components([x, y, z])?;
    field.check_hermitian()?;
    Ok(Checkpoint { time, alpha, field })
}

pub fn write(path: impl AsRef<Path>, field: &SpectralField, time: f64, alpha: f64) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(field, time, alpha))
        .map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
