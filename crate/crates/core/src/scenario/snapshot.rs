//! Binary snapshot files: magic `HKVH`, u32 version, u32 mode (0 continuum,
//! 1 finite-dimensional), u32 rank, u32 dims[rank], then little-endian f64
//! (re, im) pairs in row-major order with the quantum index fastest.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Mode, PhaseGrid};
use crate::liouvillian::HybridWavefunction;

pub const MAGIC: &[u8; 4] = b"HKVH";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mode: Mode,
    pub dims: Vec<usize>,
    pub data: Vec<C64>,
}

impl Snapshot {
    pub fn from_wavefunction(psi: &HybridWavefunction) -> Self {
        Snapshot {
            mode: psi.grid.mode,
            dims: psi.grid.dims().to_vec(),
            data: psi.data.clone(),
        }
    }

    pub fn into_wavefunction(self, grid: &PhaseGrid) -> Result<HybridWavefunction> {
        if self.mode != grid.mode {
            return Err(Error::ModeMismatch(format!(
                "snapshot is {:?}, grid is {:?}",
                self.mode, grid.mode
            )));
        }
        if self.dims != grid.dims() {
            return Err(Error::shape(&grid.dims(), &self.dims));
        }
        HybridWavefunction::new(grid.clone(), self.data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 16 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mode: u32 = match self.mode {
            Mode::Continuum => 0,
            Mode::FiniteDim => 1,
        };
        out.extend_from_slice(&mode.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, detail: String| Error::SnapshotFormat { offset, detail };
        let u32_at = |offset: usize, what: &str| -> Result<u32> {
            bytes
                .get(offset..offset + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| fail(offset, format!("file ends before {what}")))
        };
        if bytes.len() < 4 {
            return Err(fail(bytes.len(), "file ends before the magic bytes".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u32_at(4, "the version")?;
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let mode = match u32_at(8, "the mode")? {
            0 => Mode::Continuum,
            1 => Mode::FiniteDim,
            m => return Err(fail(8, format!("unknown mode {m}"))),
        };
        let rank = u32_at(12, "the rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(fail(12, format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut count: usize = 1;
        for i in 0..rank {
            let offset = 16 + 4 * i;
            let d = u32_at(offset, "the dimensions")? as usize;
            if d == 0 {
                return Err(fail(offset, "zero dimension".into()));
            }
            count = count
                .checked_mul(d)
                .ok_or_else(|| fail(offset, "dimensions overflow".into()))?;
            dims.push(d);
        }
        let start = 16 + 4 * rank;
        let expected = start + 16 * count;
        if bytes.len() != expected {
            return Err(fail(
                bytes.len().min(expected),
                format!(
                    "payload holds {} bytes, dimensions {:?} need {}",
                    bytes.len() - start.min(bytes.len()),
                    dims,
                    16 * count
                ),
            ));
        }
        let data = bytes[start..]
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Snapshot { mode, dims, data })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            mode: Mode::FiniteDim,
            dims: vec![2, 2, 2],
            data: (0..8)
                .map(|k| C64::new(k as f64, -0.5 * k as f64))
                .collect(),
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let s = sample();
        assert_eq!(Snapshot::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn truncation_reports_offset() {
        let b = sample().to_bytes();
        let e = Snapshot::from_bytes(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(e, Error::SnapshotFormat { offset, .. } if offset == b.len() - 3));
        let e = Snapshot::from_bytes(&b[..18]).unwrap_err();
        assert!(matches!(e, Error::SnapshotFormat { offset: 16, .. }));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut b = sample().to_bytes();
        b[0] = b'X';
        assert!(matches!(
            Snapshot::from_bytes(&b),
            Err(Error::SnapshotFormat { offset: 0, .. })
        ));
    }
}
