//! Ensemble persistence.
//!
//! Binary layout (little-endian): magic `b"SBPE"`, `u32` version, `u64` paths,
//! `u64` recorded times, then the times, the `Z` matrix and the `Y` matrix as
//! `f64`, each matrix row-major by path.

use std::io::{self, Read, Write};

use ndarray::Array2;

use super::engine::PathEnsemble;
use super::stats::{slice, PairMoments};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SBPE";
pub const VERSION: u32 = 1;

pub fn write_binary(ens: &PathEnsemble, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ens.paths() as u64).to_le_bytes())?;
    w.write_all(&(ens.times.len() as u64).to_le_bytes())?;
    for v in ens.times.iter().chain(ens.z.iter()).chain(ens.y.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Raw contents of a binary dump: `(times, Z, Y)`.
pub fn read_binary(mut r: impl Read) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io(io::Error::new(io::ErrorKind::InvalidData, "bad magic")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != VERSION {
        return Err(Error::Io(io::Error::new(io::ErrorKind::InvalidData, "unsupported version")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let paths = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let nt = u64::from_le_bytes(b8) as usize;
    let mut read = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let times = read(nt)?;
    let z = Array2::from_shape_vec((paths, nt), read(paths * nt)?).map_err(|e| Error::Shape(e.to_string()))?;
    let y = Array2::from_shape_vec((paths, nt), read(paths * nt)?).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((times, z, y))
}

/// One row per path: terminal values, absorption times and actions.
pub fn write_terminal_csv(ens: &PathEnsemble, mut w: impl Write) -> Result<()> {
    writeln!(w, "path,z1,z_end,y_end,absorbed_z,absorbed_y,action_z,action_y")?;
    let last = ens.times.len() - 1;
    for p in 0..ens.paths() {
        writeln!(
            w,
            "{p},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            ens.z1[p], ens.z[[p, last]], ens.y[[p, last]], ens.absorbed_z[p], ens.absorbed_y[p], ens.action_z[p], ens.action_y[p]
        )?;
    }
    Ok(())
}

/// One row per recorded time: sample moments and absorbed fraction of `Z`.
pub fn write_moments_csv(ens: &PathEnsemble, mut w: impl Write) -> Result<()> {
    writeln!(w, "t,n,mean_z,mean_y,var_z,var_y,corr,absorbed_z")?;
    for (j, &t) in ens.times.iter().enumerate() {
        let (z, y) = slice(ens, j);
        let m = PairMoments::of(&z, &y);
        writeln!(
            w,
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            m.n,
            m.mean_z,
            m.mean_y,
            m.var_z,
            m.var_y,
            m.corr(),
            ens.absorption_frequency(t)
        )?;
    }
    Ok(())
}
