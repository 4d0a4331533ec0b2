//! Binary checkpoints for restartable runs: a fixed little-endian header
//! (magic, endianness tag, n, L, t, alpha, step count) followed by the
//! row-major physical samples. Reading validates the magic and tag so a
//! truncated or foreign file fails loudly instead of producing a silent
//! garbage state.

use super::SimState;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::GridSpec;
use ndarray::Array2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: [u8; 8] = *b"SQGSTATE";
const ENDIAN_TAG: u32 = 0x0102_0304;

/// A state restored from disk, together with the dissipation exponent the run
/// was using.
#[derive(Debug)]
pub struct Checkpoint {
    pub state: SimState,
    pub alpha: f64,
}

/// Writes `state` (physical representation) and `alpha` to `path`.
pub fn write_checkpoint(path: &Path, state: &SimState, alpha: f64) -> Result<()> {
    let tp = state.theta.to_physical();
    let grid = state.theta.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&ENDIAN_TAG.to_le_bytes())?;
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    w.write_all(&grid.box_length().to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    w.write_all(&alpha.to_le_bytes())?;
    w.write_all(&state.step_count.to_le_bytes())?;
    for v in tp.phys().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by `write_checkpoint`.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let shown = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::config(shown, "not a checkpoint file (bad magic)"));
    }
    let tag = read_u32(&mut r)?;
    if tag != ENDIAN_TAG {
        return Err(Error::config(
            shown,
            format!("endianness tag {tag:#010x} does not match {ENDIAN_TAG:#010x}"),
        ));
    }
    let n = read_u64(&mut r)? as usize;
    let box_length = read_f64(&mut r)?;
    let t = read_f64(&mut r)?;
    let alpha = read_f64(&mut r)?;
    let step_count = read_u64(&mut r)?;
    if !(t.is_finite() && t >= 0.0) || !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::config(
            shown,
            format!("implausible header: t = {t}, alpha = {alpha}"),
        ));
    }
    let grid = GridSpec::new(n, box_length)?;
    let mut vals = vec![0.0f64; n * n];
    for v in vals.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let phys = Array2::from_shape_vec((n, n), vals).expect("length checked");
    Ok(Checkpoint {
        state: SimState {
            t,
            theta: Field::from_phys(grid, phys)?,
            step_count,
        },
        alpha,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{make_initial_data, InitialData};

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = GridSpec::new(32, 7.5).unwrap();
        let theta = make_initial_data(
            &InitialData::RadialGaussian { width: 7.5 / 60.0 },
            0.123,
            grid,
        )
        .unwrap();
        let state = SimState {
            t: 1.25,
            theta,
            step_count: 42,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        write_checkpoint(&path, &state, 0.8).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.alpha, 0.8);
        assert_eq!(back.state.t, 1.25);
        assert_eq!(back.state.step_count, 42);
        assert_eq!(back.state.theta.grid(), state.theta.grid());
        assert_eq!(
            back.state.theta.phys().as_slice(),
            state.theta.phys().as_slice()
        );
    }

    #[test]
    fn foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        match read_checkpoint(&path) {
            Err(Error::Config { .. }) => {}
            other => panic!("expected a config error, got {other:?}"),
        }
        // truncated file: valid magic, nothing else
        std::fs::write(&path, MAGIC).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
