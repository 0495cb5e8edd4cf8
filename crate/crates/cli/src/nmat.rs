//! Matrix files.
//!
//! `NMAT` layout (all little-endian):
//!
//! | offset | size | content            |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `b"NMAT"`    |
//! | 4      | 4    | version, `u32` = 1 |
//! | 8      | 8    | rows, `u64`        |
//! | 16     | 8    | cols, `u64`        |
//! | 24     | 8·rows·cols | `f64` values, row-major |
//!
//! Empty matrices (a zero dimension) are rejected both ways. A CSV variant
//! (`rows,cols` on the first line, then one line per row) is accepted for
//! hand-written fixtures.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sis_core::problem::Position;
use sis_core::Mat;

pub const MAGIC: &[u8; 4] = b"NMAT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"NMAT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported NMAT version {0}")]
    Version(u32),
    #[error("empty matrix ({0}x{1}) is not allowed")]
    Empty(u64, u64),
    #[error("matrix of {0}x{1} is too large")]
    TooLarge(u64, u64),
    #[error("truncated file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after matrix payload")]
    Trailing(usize),
    #[error("csv: {0}")]
    Csv(String),
    #[error("unknown matrix file extension for {0} (expected .nmat or .csv)")]
    Extension(String),
}

pub fn encode(mat: &Mat) -> Result<Vec<u8>, FormatError> {
    let (rows, cols) = mat.shape();
    if rows == 0 || cols == 0 {
        return Err(FormatError::Empty(rows as u64, cols as u64));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in mat.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Mat, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if rows == 0 || cols == 0 {
        return Err(FormatError::Empty(rows, cols));
    }
    let expected = usize::try_from(rows)
        .ok()
        .zip(usize::try_from(cols).ok())
        .and_then(|(r, c)| r.checked_mul(c))
        .and_then(|n| n.checked_mul(8))
        .ok_or(FormatError::TooLarge(rows, cols))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(FormatError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(FormatError::Trailing(payload.len() - expected));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Mat::from_vec(rows as usize, cols as usize, data).expect("length checked"))
}

pub fn write_nmat(path: &Path, mat: &Mat) -> Result<(), FormatError> {
    let bytes = encode(mat)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_nmat(path: &Path) -> Result<Mat, FormatError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Parses the CSV matrix variant.
pub fn parse_csv_matrix(text: &str) -> Result<Mat, FormatError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| FormatError::Csv("missing rows,cols header".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| FormatError::Csv(format!("header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(FormatError::Csv(format!("header {header:?} must be rows,cols")));
    };
    if rows == 0 || cols == 0 {
        return Err(FormatError::Empty(rows as u64, cols as u64));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::Csv(format!("row {i}: {e}")))?;
        if vals.len() != cols {
            return Err(FormatError::Csv(format!("row {i} has {} values, expected {cols}", vals.len())));
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(FormatError::Csv(format!("expected {rows} data rows, found {}", data.len() / cols)));
    }
    Ok(Mat::from_vec(rows, cols, data).expect("length checked"))
}

/// Loads `.nmat` or `.csv` by extension.
pub fn load_matrix(path: &Path) -> Result<Mat, FormatError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("nmat") => read_nmat(path),
        Some("csv") => parse_csv_matrix(&std::fs::read_to_string(path)?),
        _ => Err(FormatError::Extension(path.display().to_string())),
    }
}

pub fn write_positions(path: &Path, positions: &[Position]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FormatError::Csv(e.to_string()))?;
    w.write_record(["x_mm", "y_mm", "z_mm"]).map_err(|e| FormatError::Csv(e.to_string()))?;
    for p in positions {
        w.write_record(p.iter().map(|v| v.to_string())).map_err(|e| FormatError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_positions(path: &Path) -> Result<Vec<Position>, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FormatError::Csv(e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::Csv(e.to_string()))?;
        if rec.len() != 3 {
            return Err(FormatError::Csv(format!("position row {i} has {} fields, expected 3", rec.len())));
        }
        let mut p = [0.0; 3];
        for (k, field) in rec.iter().enumerate() {
            p[k] = field.trim().parse().map_err(|e| FormatError::Csv(format!("position row {i}: {e}")))?;
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_bytes() {
        let m = Mat::from_vec(1, 2, vec![1.0, -2.5]).unwrap();
        let expected: Vec<u8> = [
            &b"NMAT"[..],
            &[1, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[2, 0, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f],
            &[0, 0, 0, 0, 0, 0, 0x04, 0xc0],
        ]
        .concat();
        assert_eq!(encode(&m).unwrap(), expected);
        assert_eq!(decode(&expected).unwrap(), m);
    }

    #[test]
    fn rejects_corrupt_input() {
        let good = encode(&Mat::from_vec(2, 2, vec![1., 2., 3., 4.]).unwrap()).unwrap();
        assert!(matches!(decode(&good[..20]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(FormatError::Truncated { .. })));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(FormatError::Trailing(1))));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(FormatError::BadMagic(_))));
        let mut version = good.clone();
        version[4] = 2;
        assert!(matches!(decode(&version), Err(FormatError::Version(2))));
        let mut huge = good;
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&huge), Err(FormatError::TooLarge(..))));
    }

    #[test]
    fn empty_matrices_rejected() {
        assert!(matches!(encode(&Mat::zeros(0, 0)), Err(FormatError::Empty(0, 0))));
        assert!(matches!(encode(&Mat::zeros(3, 0)), Err(FormatError::Empty(3, 0))));
        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&1u32.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        assert!(matches!(decode(&header), Err(FormatError::Empty(0, 0))));
    }

    #[test]
    fn csv_matrix() {
        let m = parse_csv_matrix("2,3\n1,2,3\n4, 5.5 ,-6\n").unwrap();
        assert_eq!(m, Mat::from_vec(2, 3, vec![1., 2., 3., 4., 5.5, -6.]).unwrap());
        assert!(parse_csv_matrix("2,3\n1,2,3\n").is_err());
        assert!(parse_csv_matrix("2,3\n1,2\n3,4\n").is_err());
        assert!(parse_csv_matrix("0,3\n").is_err());
        assert!(parse_csv_matrix("x,3\n").is_err());
    }
}
