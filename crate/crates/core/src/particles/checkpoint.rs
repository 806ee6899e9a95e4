//! Binary particle checkpoints.
//!
//! Layout, all little-endian:
//!
//! | offset | size  | field                               |
//! |--------|-------|-------------------------------------|
//! | 0      | 8     | magic `VMFPPRT1`                    |
//! | 8      | 4     | format version (u32, = 1)           |
//! | 12     | 4     | dimension `d` (u32)                 |
//! | 16     | 8     | particle count `N` (u64)            |
//! | 24     | 8     | time (f64)                          |
//! | 32     | 8     | step (u64)                          |
//! | 40     | 8     | seed (u64)                          |
//! | 48     | 24·N  | positions, three f64 per particle   |
//! | 48+24N | 24·N  | velocities, three f64 per particle  |
//! | 48+48N | 8·N   | weights (f64)                       |
//!
//! Unused coordinates (beyond `d`) are stored as zero.

use std::io::{Read, Write};

use super::ParticleEnsemble;
use crate::error::{Error, Result};

pub const PARTICLE_MAGIC: &[u8; 8] = b"VMFPPRT1";
pub const PARTICLE_VERSION: u32 = 1;

pub fn write_particles<W: Write>(mut out: W, ens: &ParticleEnsemble) -> Result<()> {
    out.write_all(PARTICLE_MAGIC)?;
    out.write_all(&PARTICLE_VERSION.to_le_bytes())?;
    out.write_all(&(ens.dim as u32).to_le_bytes())?;
    out.write_all(&(ens.len() as u64).to_le_bytes())?;
    out.write_all(&ens.time.to_le_bytes())?;
    out.write_all(&ens.step.to_le_bytes())?;
    out.write_all(&ens.seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(56 * ens.len());
    for p in ens.positions.iter().chain(&ens.velocities) {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for w in &ens.weights {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated particle checkpoint: {e}")))?;
    Ok(b)
}

fn f64_at(input: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(take(input)?))
}

pub fn read_particles<R: Read>(mut input: R) -> Result<ParticleEnsemble> {
    if &take::<8>(&mut input)? != PARTICLE_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut input)?);
    if version != PARTICLE_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(&mut input)?) as usize;
    let n = u64::from_le_bytes(take(&mut input)?);
    if n > 1 << 32 {
        return Err(Error::Checkpoint(format!("implausible particle count {n}")));
    }
    let n = n as usize;
    let time = f64_at(&mut input)?;
    let step = u64::from_le_bytes(take(&mut input)?);
    let seed = u64::from_le_bytes(take(&mut input)?);
    let points = |input: &mut R| -> Result<Vec<[f64; 3]>> {
        (0..n)
            .map(|_| Ok([f64_at(input)?, f64_at(input)?, f64_at(input)?]))
            .collect()
    };
    let positions = points(&mut input)?;
    let velocities = points(&mut input)?;
    let weights = (0..n).map(|_| f64_at(&mut input)).collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after particle data".into()));
    }
    let ens = ParticleEnsemble {
        dim,
        positions,
        velocities,
        weights,
        time,
        step,
        seed,
    };
    ens.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::{sample_initial, InitialDataSpec};

    #[test]
    fn round_trip_is_exact() {
        let mut ens = sample_initial(&InitialDataSpec::gaussian(2.0, 1.0, 0.5), 3, 37, 4).unwrap();
        ens.time = 1.25;
        ens.step = 125;
        let mut buf = Vec::new();
        write_particles(&mut buf, &ens).unwrap();
        assert_eq!(buf.len(), 48 + 56 * 37);
        assert_eq!(read_particles(buf.as_slice()).unwrap(), ens);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let ens = sample_initial(&InitialDataSpec::gaussian(1.0, 1.0, 1.0), 2, 5, 1).unwrap();
        let mut buf = Vec::new();
        write_particles(&mut buf, &ens).unwrap();
        assert!(read_particles(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_particles(long.as_slice()).is_err());
        buf[0] = b'X';
        assert!(matches!(read_particles(buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
