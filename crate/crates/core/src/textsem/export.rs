//! Binary export of reduced semantics.
//!
//! Layout (little-endian): `b"LSEH"`, version `u32`, `n: u64`, `k: u64`, then
//! the n×k matrix B as row-major `f64`. Singular values go to a sidecar text
//! file, one per line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::textsem::ReducedSemantics;

pub const SEMANTICS_MAGIC: &[u8; 4] = b"LSEH";
pub const SEMANTICS_VERSION: u32 = 1;

pub fn write_semantics(sem: &ReducedSemantics, path: &Path, sidecar: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let (n, k) = sem.b.dim();
    let mut buf = Vec::with_capacity(24 + 8 * n * k);
    buf.extend_from_slice(SEMANTICS_MAGIC);
    buf.extend_from_slice(&SEMANTICS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    for x in sem.b.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;

    let text: String = sem
        .singular_values
        .iter()
        .map(|s| format!("{s}\n"))
        .collect();
    std::fs::write(sidecar, text).map_err(|e| Error::io(sidecar, e))
}

/// Reads back B and the singular values. V is not part of the export, so the
/// returned `v` is empty (w = 0).
pub fn read_semantics(path: &Path, sidecar: &Path) -> Result<ReducedSemantics> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 24 || &bytes[..4] != SEMANTICS_MAGIC {
        return Err(bad("missing LSEH header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SEMANTICS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let k = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if body.len() != n * k * 8 {
        return Err(bad(format!("expected {} payload bytes, found {}", n * k * 8, body.len())));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let b = Array2::from_shape_vec((n, k), data).expect("length checked");

    let text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let mut singular_values = Vec::with_capacity(k);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v = line.trim().parse::<f64>().map_err(|e| Error::Parse {
            path: sidecar.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        singular_values.push(v);
    }
    if singular_values.len() != k {
        return Err(Error::Format {
            path: sidecar.to_path_buf(),
            message: format!("expected {k} singular values, found {}", singular_values.len()),
        });
    }
    Ok(ReducedSemantics {
        b,
        singular_values,
        v: Array2::zeros((0, k)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn header_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("b.bin");
        let txt = dir.path().join("s.txt");
        let sem = ReducedSemantics {
            b: arr2(&[[1.5, -2.0], [0.25, 3.0], [0.0, 1e-300]]),
            singular_values: vec![3.0, 0.1],
            v: Array2::zeros((0, 2)),
        };
        write_semantics(&sem, &bin, &txt).unwrap();
        let raw = std::fs::read(&bin).unwrap();
        assert_eq!(&raw[..4], b"LSEH");
        assert_eq!(u32::from_le_bytes(raw[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(raw[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(raw[16..24].try_into().unwrap()), 2);
        assert_eq!(raw.len(), 24 + 6 * 8);
        assert_eq!(f64::from_le_bytes(raw[24..32].try_into().unwrap()), 1.5);
        assert_eq!(std::fs::read_to_string(&txt).unwrap(), "3\n0.1\n");
        assert_eq!(read_semantics(&bin, &txt).unwrap(), sem);
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("b.bin");
        let txt = dir.path().join("s.txt");
        std::fs::write(&bin, b"LSEH\x01\x00\x00\x00").unwrap();
        std::fs::write(&txt, "").unwrap();
        assert!(matches!(read_semantics(&bin, &txt), Err(Error::Format { .. })));
    }
}
