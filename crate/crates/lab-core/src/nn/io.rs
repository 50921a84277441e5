//! Flat binary parameter files: magic `NRLB1`, a little-endian layer-size
//! header, then the f64 parameter array (plus an optional extra tail for
//! parameters outside the MLP, e.g. a policy's log-std vector).
//!
//! Layout: `NRLB1` | u32 size-count | u32 sizes... | u64 value-count |
//! f64 values...

use super::{Mlp, MlpSpec};
use crate::error::LabError;
use crate::Result;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"NRLB1";

pub fn write_mlp(w: &mut impl Write, mlp: &Mlp) -> Result<()> {
    write_mlp_with_extra(w, mlp, &[])
}

pub fn write_mlp_with_extra(w: &mut impl Write, mlp: &Mlp, extra: &[f64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(mlp.spec.sizes.len() as u32).to_le_bytes())?;
    for &s in &mlp.spec.sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    let total = (mlp.params.len() + extra.len()) as u64;
    w.write_all(&total.to_le_bytes())?;
    for v in mlp.params.iter().chain(extra.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mlp(r: &mut impl Read) -> Result<Mlp> {
    let (mlp, extra) = read_mlp_with_extra(r)?;
    if !extra.is_empty() {
        return Err(LabError::Config(format!(
            "parameter file carries {} unexpected extra values",
            extra.len()
        )));
    }
    Ok(mlp)
}

pub fn read_mlp_with_extra(r: &mut impl Read) -> Result<(Mlp, Vec<f64>)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LabError::Config("bad parameter-file magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_sizes = u32::from_le_bytes(u32buf) as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(LabError::Config(format!(
            "implausible layer-size count {n_sizes}"
        )));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        r.read_exact(&mut u32buf)?;
        let s = u32::from_le_bytes(u32buf) as usize;
        if s == 0 {
            return Err(LabError::Config("zero layer size".into()));
        }
        sizes.push(s);
    }
    let spec = MlpSpec::new(&sizes);
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let total = u64::from_le_bytes(u64buf) as usize;
    if total < spec.param_count() {
        return Err(LabError::Config(format!(
            "parameter file holds {total} values, spec needs {}",
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(total);
    let mut f64buf = [0u8; 8];
    for _ in 0..total {
        r.read_exact(&mut f64buf)?;
        values.push(f64::from_le_bytes(f64buf));
    }
    let extra = values.split_off(spec.param_count());
    Ok((Mlp { spec, params: values }, extra))
}

pub fn save_mlp(path: &Path, mlp: &Mlp) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mlp(&mut w, mlp)?;
    w.flush()?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let mut r = BufReader::new(File::open(path)?);
    read_mlp(&mut r)
}

pub fn load_mlp_with_extra(path: &Path) -> Result<(Mlp, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_mlp_with_extra(&mut r)
}
