//! Dense binary matrix layout: magic `ANTM`, u64 rows, u64 cols, u64 kind (1 real, 2 complex),
//! then row-major little-endian f64 values (complex entries as re, im pairs).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ANTM";

fn io_err(e: std::io::Error) -> Error {
    Error::domain(format!("i/o failure: {e}"))
}

fn write_header(w: &mut impl Write, rows: usize, cols: usize, kind: u64) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    for v in [rows as u64, cols as u64, kind] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_real(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_header(&mut w, m.nrows(), m.ncols(), 1)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn write_complex(path: &Path, m: &Mat<C64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_header(&mut w, m.nrows(), m.ncols(), 2)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes()).map_err(io_err)?;
            w.write_all(&m[(i, j)].im.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Dense matrix read back from the binary layout.
#[derive(Debug, Clone)]
pub enum Dense {
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

pub fn read(path: &Path) -> Result<Dense> {
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::domain("not a dense matrix dump"));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut word).map_err(io_err)?;
        Ok(u64::from_le_bytes(word))
    };
    let (rows, cols, kind) = (next(&mut r)? as usize, next(&mut r)? as usize, next(&mut r)?);
    let mut f = |r: &mut BufReader<File>| -> Result<f64> { Ok(f64::from_bits(next(r)?)) };
    match kind {
        1 => {
            let mut m = Mat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = f(&mut r)?;
                }
            }
            Ok(Dense::Real(m))
        }
        2 => {
            let mut m = Mat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    let re = f(&mut r)?;
                    m[(i, j)] = C64::new(re, f(&mut r)?);
                }
            }
            Ok(Dense::Complex(m))
        }
        _ => Err(Error::domain(format!("unknown matrix kind {kind}"))),
    }
}
