//! CSV tables, JSON reports and little-endian binary dumps.
//!
//! Dump layout: the 8-byte magic `DEDUMP01`, a u32 rank r, a u32 flag word
//! (bit 0 set for complex data), r u64 dimensions, then the values as f64 in
//! row-major order (last index fastest), complex values as (re, im) pairs.
//! Every integer and float is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pauli::C64;
use crate::pde::SpinorField;

pub const DUMP_MAGIC: &[u8; 8] = b"DEDUMP01";

/// Writes a header row and numeric rows.
pub fn write_csv<P: AsRef<Path>, R: AsRef<[f64]>>(path: P, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::Invalid(format!("CSV row has {} fields, header has {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV written by [`write_csv`].
pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
    let header = r.headers().map_err(|e| Error::Io(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let row = rec.iter().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("CSV value {s:?}: {e}")))).collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<P: AsRef<Path>, T: Serialize + ?Sized>(path: P, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(w, value).map_err(|e| Error::Io(e.to_string()))
}

/// Values held by a dump.
#[derive(Clone, Debug, PartialEq)]
pub enum DumpData {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl DumpData {
    pub fn len(&self) -> usize {
        match self {
            DumpData::Real(v) => v.len(),
            DumpData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dump {
    pub dims: Vec<u64>,
    pub data: DumpData,
}

pub fn write_dump<P: AsRef<Path>>(path: P, dump: &Dump) -> Result<()> {
    let count: u64 = dump.dims.iter().product();
    if count as usize != dump.data.len() {
        return Err(Error::Invalid(format!("dump dims {:?} hold {count} values, data has {}", dump.dims, dump.data.len())));
    }
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(dump.dims.len() as u32).to_le_bytes())?;
    let flags: u32 = if matches!(dump.data, DumpData::Complex(_)) { 1 } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    for d in &dump.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    match &dump.data {
        DumpData::Real(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        DumpData::Complex(v) => {
            for x in v {
                w.write_all(&x.re.to_le_bytes())?;
                w.write_all(&x.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dump<P: AsRef<Path>>(path: P) -> Result<Dump> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Parse("not a dump file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let complex = u32::from_le_bytes(b4) & 1 == 1;
    let mut b8 = [0u8; 8];
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8));
    }
    let count: u64 = dims.iter().product();
    let mut next = || -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let data = if complex {
        DumpData::Complex((0..count).map(|_| Ok(C64::new(next()?, next()?))).collect::<Result<_>>()?)
    } else {
        DumpData::Real((0..count).map(|_| next()).collect::<Result<_>>()?)
    };
    Ok(Dump { dims, data })
}

/// A spinor field as a complex dump with dims [2, N₂, N₁].
pub fn field_dump(field: &SpinorField) -> Dump {
    let g = &field.grid;
    let mut data = Vec::with_capacity(2 * g.size());
    data.extend_from_slice(&field.psi[0]);
    data.extend_from_slice(&field.psi[1]);
    Dump { dims: vec![2, g.n[1] as u64, g.n[0] as u64], data: DumpData::Complex(data) }
}

/// A table with dims [rows, columns].
pub fn table_dump(rows: &[Vec<f64>]) -> Result<Dump> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid("ragged table".into()));
    }
    Ok(Dump { dims: vec![rows.len() as u64, cols as u64], data: DumpData::Real(rows.iter().flatten().copied().collect()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid2;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("dirac-edge-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_round_trip() {
        let p = tmp("t.csv");
        write_csv(&p, &["t", "x"], vec![vec![0.0, 1.5], vec![0.1, -2.25e-9]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x\n"));
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["t", "x"]);
        assert_eq!(rows[1], vec![0.1, -2.25e-9]);
        assert!(write_csv(&p, &["a"], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn dump_layout_and_round_trip() {
        let g = Grid2::new([4, 8], [1.0, 1.0]).unwrap();
        let f = SpinorField::from_fn(g, 0.1, |x| crate::pauli::Spinor::new(C64::new(x[0], x[1]), C64::new(-x[1], 2.0)));
        let d = field_dump(&f);
        let p = tmp("f.bin");
        write_dump(&p, &d).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], DUMP_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 8);
        assert_eq!(bytes.len(), 16 + 3 * 8 + 64 * 16);
        // first value: Re ψ₁ at grid index 0 = x₁ = −0.5
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), -0.5);
        assert_eq!(read_dump(&p).unwrap(), d);
    }
}
