//! Artifact formats.
//!
//! A field container is little-endian: `n: u64`, `L: f64`, component count
//! `u64` (always 2), then for each component the `n²` coefficients as
//! interleaved `re, im` pairs of `f64`. An ensemble is a concatenation of
//! containers in one `.bin` file with a JSON index next to it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::attractor::{EndpointEnsemble, EndpointMeta};
use crate::error::{Error, Result};
use crate::spectral::{TorusGrid, VelocityField};

const COMPONENTS: u64 = 2;

/// Size in bytes of the container for an `n × n` field.
pub fn container_len(n: usize) -> usize {
    24 + 2 * n * n * 16
}

pub fn write_field<W: Write>(w: &mut W, u: &VelocityField) -> Result<()> {
    let g = u.grid();
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    w.write_all(&g.box_length().to_le_bytes())?;
    w.write_all(&COMPONENTS.to_le_bytes())?;
    for comp in u.coeffs() {
        for c in comp {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads one container. `grid` is reused when its size matches the header.
pub fn read_field<R: Read>(r: &mut R, grid: Option<&TorusGrid>) -> Result<VelocityField> {
    let n = read_u64(r)? as usize;
    let l = read_f64(r)?;
    let comps = read_u64(r)?;
    if comps != COMPONENTS {
        return Err(Error::Format(format!("expected {COMPONENTS} components, found {comps}")));
    }
    if n > 1 << 14 {
        return Err(Error::Format(format!("grid size {n} is implausible")));
    }
    let grid = match grid {
        Some(g) if g.n() == n && g.box_length() == l => g.clone(),
        _ => TorusGrid::new(n, l).map_err(|e| Error::Format(format!("bad header: {e}")))?,
    };
    let mut c = [Vec::with_capacity(n * n), Vec::with_capacity(n * n)];
    for comp in c.iter_mut() {
        for _ in 0..n * n {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            comp.push(Complex64::new(re, im));
        }
    }
    VelocityField::from_coeffs(&grid, c)
}

pub fn save_field(path: &Path, u: &VelocityField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<VelocityField> {
    read_field(&mut BufReader::new(File::open(path)?), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub offset: u64,
    pub bytes: u64,
    pub t: f64,
    pub ic: usize,
    pub delta: Option<f64>,
    pub norm2: f64,
    pub inside: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleIndex {
    pub data_file: String,
    pub n: usize,
    pub box_length: f64,
    pub entries: Vec<EnsembleEntry>,
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn save_ensemble(dir: &Path, stem: &str, ens: &EndpointEnsemble) -> Result<[PathBuf; 2]> {
    let first = ens.states.first().ok_or(Error::EmptyEnsemble)?;
    let grid = first.grid().clone();
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let mut w = BufWriter::new(File::create(&bin)?);
    let bytes = container_len(grid.n()) as u64;
    let mut entries = Vec::with_capacity(ens.len());
    for (i, (u, m)) in ens.states.iter().zip(&ens.meta).enumerate() {
        if u.grid() != &grid {
            return Err(Error::GridMismatch {
                left: format!("{grid:?}"),
                right: format!("{:?}", u.grid()),
            });
        }
        write_field(&mut w, u)?;
        entries.push(EnsembleEntry {
            offset: i as u64 * bytes,
            bytes,
            t: m.t,
            ic: m.ic,
            delta: m.delta,
            norm2: m.norm2,
            inside: m.inside,
        });
    }
    w.flush()?;
    let index = EnsembleIndex {
        data_file: format!("{stem}.bin"),
        n: grid.n(),
        box_length: grid.box_length(),
        entries,
    };
    std::fs::write(&json, serde_json::to_string_pretty(&index)?)?;
    Ok([bin, json])
}

/// Reads an ensemble from its JSON index.
pub fn load_ensemble(index_path: &Path) -> Result<EndpointEnsemble> {
    let index: EnsembleIndex = serde_json::from_str(&std::fs::read_to_string(index_path)?)?;
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let data = std::fs::read(dir.join(&index.data_file))?;
    let grid = TorusGrid::new(index.n, index.box_length)?;
    let mut states = Vec::with_capacity(index.entries.len());
    let mut meta = Vec::with_capacity(index.entries.len());
    for e in &index.entries {
        let (a, b) = (e.offset as usize, (e.offset + e.bytes) as usize);
        let chunk = data
            .get(a..b)
            .ok_or_else(|| Error::Format(format!("entry at {a} runs past the data file")))?;
        states.push(read_field(&mut &chunk[..], Some(&grid))?);
        meta.push(EndpointMeta {
            t: e.t,
            ic: e.ic,
            delta: e.delta,
            norm2: e.norm2,
            inside: e.inside,
        });
    }
    Ok(EndpointEnsemble { states, meta })
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_is_bitwise() {
        let g = TorusGrid::periodic(16).unwrap();
        let u = random_field(&g, &mut ChaCha8Rng::seed_from_u64(1), 1.3, 2.0, false);
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        assert_eq!(buf.len(), container_len(16));
        assert_eq!(&buf[..8], &16u64.to_le_bytes());
        let back = read_field(&mut &buf[..], None).unwrap();
        assert_eq!(back, u);
        let mut bad = buf.clone();
        bad[16] = 3;
        assert!(read_field(&mut &bad[..], None).is_err());
        assert!(read_field(&mut &buf[..100], None).is_err());
    }

    #[test]
    fn ensemble_round_trip() {
        let g = TorusGrid::periodic(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let states: Vec<_> = (0..3).map(|_| random_field(&g, &mut rng, 1.0, 2.0, false)).collect();
        let meta = (0..3)
            .map(|i| EndpointMeta {
                t: i as f64,
                ic: i,
                delta: Some(0.1),
                norm2: states[i].h_norm2(),
                inside: None,
            })
            .collect();
        let ens = EndpointEnsemble { states, meta };
        let dir = tempfile::tempdir().unwrap();
        let [_, json] = save_ensemble(dir.path(), "ens", &ens).unwrap();
        let back = load_ensemble(&json).unwrap();
        assert_eq!(back.states, ens.states);
        assert_eq!(back.meta, ens.meta);
    }
}
