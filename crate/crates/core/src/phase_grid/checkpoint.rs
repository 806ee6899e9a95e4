//! Binary grid checkpoints.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `VMFPGRD1`               |
//! | 8      | 4    | format version (u32, = 1)      |
//! | 12     | 4    | dimension `d` (u32)            |
//! | 16     | 8    | `n_x` (u64)                    |
//! | 24     | 8    | `n_v` (u64)                    |
//! | 32     | 8    | `L_x` (f64)                    |
//! | 40     | 8    | `L_v` (f64)                    |
//! | 48     | 8    | time (f64)                     |
//! | 56     | 8    | boundary loss (f64)            |
//! | 64     | 8    | value count `(n_x n_v)^d` (u64) |
//! | 72     | 8·count | values (f64), row-major over `(x₁..x_d, v₁..v_d)` |

use std::io::{Read, Write};

use super::{PhaseGeometry, PhaseGrid};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VMFPGRD1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, grid: &PhaseGrid) -> Result<()> {
    let g = &grid.geometry;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(g.dim as u32).to_le_bytes())?;
    out.write_all(&(g.nx as u64).to_le_bytes())?;
    out.write_all(&(g.nv as u64).to_le_bytes())?;
    for x in [g.lx, g.lv, grid.time, grid.boundary_loss] {
        out.write_all(&x.to_le_bytes())?;
    }
    out.write_all(&(grid.values.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * grid.values.len());
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(b)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<PhaseGrid> {
    if &take::<8>(&mut input)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut input)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(&mut input)?) as usize;
    let nx = u64::from_le_bytes(take(&mut input)?) as usize;
    let nv = u64::from_le_bytes(take(&mut input)?) as usize;
    let lx = f64::from_le_bytes(take(&mut input)?);
    let lv = f64::from_le_bytes(take(&mut input)?);
    let time = f64::from_le_bytes(take(&mut input)?);
    let boundary_loss = f64::from_le_bytes(take(&mut input)?);
    let count = u64::from_le_bytes(take(&mut input)?) as usize;
    let geometry = PhaseGeometry::new(dim, nx, nv, lx, lv).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if count != geometry.len() {
        return Err(Error::Checkpoint(format!("{count} values for a grid of {}", geometry.len())));
    }
    let mut raw = vec![0u8; 8 * count];
    input
        .read_exact(&mut raw)
        .map_err(|e| Error::Checkpoint(format!("truncated values: {e}")))?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let grid = PhaseGrid {
        geometry,
        values,
        time,
        boundary_loss,
    };
    grid.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header_layout() {
        let geometry = PhaseGeometry::new(1, 8, 6, 2.0, 3.0).unwrap();
        let mut g = PhaseGrid::from_fn(geometry, |x, v| (-(x[0] * x[0]) - v[0] * v[0]).exp()).unwrap();
        g.time = 1.25;
        g.boundary_loss = 1e-9;
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &g).unwrap();
        assert_eq!(buf.len(), 72 + 8 * 48);
        assert_eq!(&buf[..8], b"VMFPGRD1");
        assert_eq!(f64::from_le_bytes(buf[48..56].try_into().unwrap()), 1.25);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), g);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let geometry = PhaseGeometry::new(1, 4, 4, 1.0, 1.0).unwrap();
        let g = PhaseGrid::zeros(geometry).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &g).unwrap();
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 1]), Err(Error::Checkpoint(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Checkpoint(_))));
        let mut bad = buf;
        bad[8] = 9;
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Checkpoint(_))));
    }
}
