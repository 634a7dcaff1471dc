//! On-disk containers.
//!
//! Field container (shared by J- and H-fields): a single-line JSON header
//! carrying the grids, provenance, and Lipschitz table, a newline, then the
//! values as a row-major (q-major) little-endian f64 block whose byte length
//! is declared in the header.
//!
//! Ensemble dump: magic `SDE1`, m as u32 LE, n as u64 LE, then n*m
//! little-endian f64 endpoints (sample-major). The CSV twin is one row per
//! sample, columns = components.
//!
//! Field snapshot: magic `SPD1`, n as u64 LE, m as u32 LE, then l_dom, t,
//! rho as f64 LE, then m*n*n little-endian f64 values (component-major,
//! row-major within a component).

use crate::decoupling::{DecouplingField, Provenance};
use crate::pde::HField;
use crate::sde::{GridField1, SdeEnsemble};
use crate::spde::SpdeField;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("bad magic: expected {expected}, found {found:?}")]
    Magic { expected: &'static str, found: [u8; 4] },
    #[error("value block length {got} does not match header {expected}")]
    BlockLength { got: usize, expected: usize },
}

pub const FIELD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    /// "J" for root decoupling fields, "H" for PDE fields.
    pub kind: String,
    pub provenance: Provenance,
    pub sigma_label: String,
    pub q_grid: Vec<f64>,
    pub b_min: f64,
    pub b_step: f64,
    pub n_b: usize,
    pub lipschitz_per_q: Vec<f64>,
    pub certified_horizon: f64,
    pub stderr_x: f64,
    pub residual_trajectory: Vec<f64>,
    pub value_bytes: usize,
}

fn write_field_raw(
    path: &Path,
    header: &FieldHeader,
    values: &[f64],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_field_raw(path: &Path) -> Result<(FieldHeader, Vec<f64>), IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    let mut block = Vec::new();
    r.read_to_end(&mut block)?;
    if block.len() != header.value_bytes {
        return Err(IoError::BlockLength {
            got: block.len(),
            expected: header.value_bytes,
        });
    }
    let values: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn write_decoupling_field(path: &Path, field: &DecouplingField) -> Result<(), IoError> {
    let header = FieldHeader {
        format: "decoupler-field".into(),
        version: FIELD_FORMAT_VERSION,
        kind: "J".into(),
        provenance: field.provenance,
        sigma_label: field.sigma_label.clone(),
        q_grid: field.grid.q_grid.clone(),
        b_min: field.grid.b_min,
        b_step: field.grid.b_step,
        n_b: field.grid.n_b,
        lipschitz_per_q: field.lipschitz_per_q.clone(),
        certified_horizon: field.certified_horizon,
        stderr_x: field.stderr_x,
        residual_trajectory: field.residual_trajectory.clone(),
        value_bytes: field.grid.values.len() * 8,
    };
    write_field_raw(path, &header, &field.grid.values)
}

pub fn read_decoupling_field(path: &Path) -> Result<DecouplingField, IoError> {
    let (h, values) = read_field_raw(path)?;
    let grid = GridField1::new(h.q_grid, h.b_min, h.b_step, h.n_b, values);
    Ok(DecouplingField {
        grid,
        provenance: h.provenance,
        lipschitz_per_q: h.lipschitz_per_q,
        certified_horizon: h.certified_horizon,
        sigma_label: h.sigma_label,
        residual_trajectory: h.residual_trajectory,
        stderr_x: h.stderr_x,
    })
}

/// H-fields share the container; the values block stores H instead of J and
/// provenance is `pde`.
pub fn write_h_field(path: &Path, field: &HField, sigma_label: &str) -> Result<(), IoError> {
    let header = FieldHeader {
        format: "decoupler-field".into(),
        version: FIELD_FORMAT_VERSION,
        kind: "H".into(),
        provenance: Provenance::Pde,
        sigma_label: sigma_label.into(),
        q_grid: field.q_levels.clone(),
        b_min: field.b_min,
        b_step: field.h_b,
        n_b: field.n_b,
        lipschitz_per_q: field.sqrt_lipschitz_per_level(),
        certified_horizon: field.horizon(),
        stderr_x: 0.0,
        residual_trajectory: Vec::new(),
        value_bytes: field.slices.len() * 8,
    };
    write_field_raw(path, &header, &field.slices)
}

pub fn read_h_field(path: &Path) -> Result<HField, IoError> {
    let (h, values) = read_field_raw(path)?;
    Ok(HField {
        b_min: h.b_min,
        h_b: h.b_step,
        n_b: h.n_b,
        q_levels: h.q_grid,
        slices: values,
        floor_events: 0,
        min_dq: f64::NAN,
        steps_taken: 0,
    })
}

pub fn write_ensemble_csv(path: &Path, ens: &SdeEnsemble) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..ens.m).map(|c| format!("c{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for p in 0..ens.n_paths {
        let row: Vec<String> = ens.endpoint(p).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_ensemble_binary(path: &Path, ens: &SdeEnsemble) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"SDE1")?;
    w.write_all(&(ens.m as u32).to_le_bytes())?;
    w.write_all(&(ens.n_paths as u64).to_le_bytes())?;
    for v in &ens.endpoints {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_ensemble_binary(path: &Path) -> Result<(usize, usize, Vec<f64>), IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"SDE1" {
        return Err(IoError::Magic {
            expected: "SDE1",
            found: magic,
        });
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut data = vec![0f64; n * m];
    for v in data.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok((m, n, data))
}

pub fn write_snapshot(path: &Path, field: &SpdeField) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"SPD1")?;
    w.write_all(&(field.n as u64).to_le_bytes())?;
    w.write_all(&(field.m as u32).to_le_bytes())?;
    w.write_all(&field.l_dom.to_le_bytes())?;
    w.write_all(&field.t.to_le_bytes())?;
    w.write_all(&field.rho.to_le_bytes())?;
    for v in &field.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<SpdeField, IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"SPD1" {
        return Err(IoError::Magic {
            expected: "SPD1",
            found: magic,
        });
    }
    let mut b8 = [0u8; 8];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    let mut f3 = [0f64; 3];
    for v in f3.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    let mut data = vec![0f64; m * n * n];
    for v in data.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok(SpdeField {
        n,
        m,
        l_dom: f3[0],
        t: f3[1],
        rho: f3[2],
        data,
    })
}

/// Pretty-printed JSON report (full parameter echo plus library version).
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Generic CSV table writer (header + rows).
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoupling::{field_from_oracle, oracle::OracleJ};
    use proptest::prelude::*;

    #[test]
    fn field_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.field");
        let field = field_from_oracle(&OracleJ::Linear { beta: 0.5 }, 1.0, 6, 4.0, 17);
        write_decoupling_field(&path, &field).unwrap();
        let back = read_decoupling_field(&path).unwrap();
        assert_eq!(back.grid.values, field.grid.values);
        assert_eq!(back.grid.q_grid, field.grid.q_grid);
        assert_eq!(back.provenance, field.provenance);
        assert_eq!(back.lipschitz_per_q, field.lipschitz_per_q);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.spd1");
        let mut f = SpdeField::constant(8, 2, 1.5, 1e-2, 0.0);
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = i as f64 * 0.25 - 3.0;
        }
        f.t = 0.625;
        write_snapshot(&path, &f).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.data, f.data);
        assert_eq!(back.n, 8);
        assert_eq!(back.m, 2);
        assert_eq!(back.t, 0.625);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ensemble_binary_round_trip(m in 1usize..4, n in 1usize..40, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::sde::rng::stream_rng(seed, 0);
            let endpoints: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ens = SdeEnsemble {
                m,
                n_paths: n,
                horizon: 1.0,
                steps: 1,
                seed,
                initial: vec![0.0; m],
                endpoints: endpoints.clone(),
                paths: None,
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("e.sde1");
            write_ensemble_binary(&path, &ens).unwrap();
            let (m2, n2, data) = read_ensemble_binary(&path).unwrap();
            prop_assert_eq!(m2, m);
            prop_assert_eq!(n2, n);
            prop_assert_eq!(data, endpoints);
        }
    }
}
