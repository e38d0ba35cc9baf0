//! Field and mask ingestion/emission.
//!
//! Scalar fields travel either as CSV rows `i,j[,k],value` or as a raw
//! little-endian `f64` block next to a JSON sidecar holding the lattice.
//! Node masks are stored as run-length encoded CSV (`start,length` runs of
//! `true` nodes in linear index order).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Lattice, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
    #[serde(default)]
    periodic: Vec<bool>,
}

impl Sidecar {
    fn from_lattice(lat: &Lattice) -> Self {
        Self {
            shape: lat.shape().to_vec(),
            h: lat.h(),
            origin: lat.origin().to_vec(),
            periodic: (0..lat.dim()).map(|a| lat.is_periodic(a)).collect(),
        }
    }

    fn to_lattice(&self) -> Result<Lattice> {
        let mut lat = Lattice::new(&self.shape, self.h, &self.origin)?;
        for (a, &p) in self.periodic.iter().enumerate() {
            lat = lat.with_periodic(a, p)?;
        }
        Ok(lat)
    }
}

/// Path of the JSON sidecar belonging to a raw block.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

pub fn write_raw(field: &ScalarField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sc = Sidecar::from_lattice(field.lattice());
    serde_json::to_writer_pretty(File::create(sidecar_path(path))?, &sc)?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<ScalarField> {
    let sc: Sidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let lat = sc.to_lattice()?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * lat.len() {
        return Err(Error::ShapeMismatch(format!(
            "raw block has {} bytes, lattice needs {}",
            bytes.len(),
            8 * lat.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(lat, values)
}

pub fn write_scalar_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let lat = field.lattice();
    let mut w = csv::Writer::from_path(path)?;
    let axes = ["i", "j", "k"];
    let mut header: Vec<&str> = axes[..lat.dim()].to_vec();
    header.push("value");
    w.write_record(&header)?;
    for (idx, v) in field.values().iter().enumerate() {
        let m = lat.multi_index(idx);
        let mut rec: Vec<String> = m[..lat.dim()].iter().map(|x| x.to_string()).collect();
        rec.push(format!("{v:e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `i,j[,k],value` rows onto `lattice`. Every node must appear once.
pub fn read_scalar_csv(path: &Path, lattice: &Lattice) -> Result<ScalarField> {
    let mut r = csv::Reader::from_path(path)?;
    let n = lattice.dim();
    let mut values = vec![f64::NAN; lattice.len()];
    let mut seen = vec![false; lattice.len()];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} columns, found {}",
                n + 1,
                rec.len()
            )));
        }
        let mut m = [0usize; 3];
        for a in 0..n {
            m[a] = rec[a]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad index `{}`", &rec[a])))?;
            if m[a] >= lattice.extent(a) {
                return Err(Error::ShapeMismatch(format!("index {m:?} outside lattice")));
            }
        }
        let v: f64 = rec[n]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad value `{}`", &rec[n])))?;
        let idx = lattice.index(m);
        values[idx] = v;
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::ShapeMismatch(format!(
            "node {:?} missing from CSV",
            lattice.multi_index(missing)
        )));
    }
    ScalarField::new(lattice.clone(), values)
}

/// Run-length encoding of the `true` entries: `(start, length)` pairs.
pub fn mask_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            runs.push((start, i - start));
        } else {
            i += 1;
        }
    }
    runs
}

pub fn mask_from_runs(len: usize, runs: &[(usize, usize)]) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    for &(s, l) in runs {
        if s + l > len {
            return Err(Error::ShapeMismatch(format!("run {s}+{l} exceeds {len} nodes")));
        }
        mask[s..s + l].iter_mut().for_each(|b| *b = true);
    }
    Ok(mask)
}

pub fn write_mask_rle(mask: &[bool], path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# nodes={}", mask.len())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["start", "length"])?;
    for (s, l) in mask_runs(mask) {
        w.write_record([s.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask_rle(path: &Path) -> Result<Vec<bool>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let first = text
        .lines()
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty mask file".into()))?;
    let len: usize = first
        .trim_start_matches('#')
        .trim()
        .strip_prefix("nodes=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("bad mask header `{first}`")))?;
    let body = &text[first.len()..];
    let mut r = csv::Reader::from_reader(body.trim_start().as_bytes());
    let mut runs = Vec::new();
    for rec in r.deserialize() {
        let (s, l): (usize, usize) = rec?;
        runs.push((s, l));
    }
    mask_from_runs(len, &runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScalarField {
        let lat = Lattice::new(&[4, 3], 0.25, &[-1.0, 0.5]).unwrap();
        ScalarField::from_fn(&lat, |x| x[0] * x[0] + 3.0 * x[1])
    }

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let mut f = sample();
        f.values_mut()[2] = f64::INFINITY;
        write_raw(&f, &p).unwrap();
        let g = read_raw(&p).unwrap();
        assert_eq!(f.lattice(), g.lattice());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let f = sample();
        write_scalar_csv(&f, &p).unwrap();
        let g = read_scalar_csv(&p, f.lattice()).unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn csv_missing_node_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "i,j,value\n0,0,1.0\n").unwrap();
        let lat = Lattice::new(&[2, 2], 1.0, &[0.0, 0.0]).unwrap();
        assert!(read_scalar_csv(&p, &lat).is_err());
    }

    #[test]
    fn rle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mask = vec![true, true, false, false, true, false, true, true, true];
        assert_eq!(mask_runs(&mask), vec![(0, 2), (4, 1), (6, 3)]);
        write_mask_rle(&mask, &p).unwrap();
        assert_eq!(read_mask_rle(&p).unwrap(), mask);
    }
}
