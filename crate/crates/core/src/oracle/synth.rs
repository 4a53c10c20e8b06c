//! Synthetic leading-eigenvector instances with a prescribed eigengap.
//!
//! `Z = U D V^T` with `U` (d x d) and `V` (n x d) orthonormal, so
//! `A = (1/n) Z Z^T = U (D^2 / n) U^T` has exactly the eigenvalues `D_j^2 / n`.
//! The orthonormal factors depend only on `(d, n, seed)`; a sweep over gaps
//! reuses one [`GapBasis`] and only rebuilds `D`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::oracle::PcaProblem;
use crate::rng::{stream, STREAM_BASIS_LEFT, STREAM_BASIS_RIGHT};

pub const DUMP_MAGIC: [u8; 4] = *b"RSPD";
const HEADER_LEN: usize = 24;

/// Parameters of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n: usize,
    /// Eigengap `lambda_1 - lambda_2` of `A`; `lambda_1 = 1`.
    pub delta: f64,
    pub seed: u64,
    /// Geometric decay of the spectrum below `lambda_2`.
    pub tail: f64,
}

impl SyntheticSpec {
    pub const DEFAULT_TAIL: f64 = 0.9;

    pub fn new(d: usize, n: usize, delta: f64, seed: u64) -> Self {
        SyntheticSpec {
            d,
            n,
            delta,
            seed,
            tail: Self::DEFAULT_TAIL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!("d must be >= 2, got {}", self.d)));
        }
        if self.d > self.n {
            return Err(Error::InvalidConfig(format!(
                "need n >= d, got d = {}, n = {}",
                self.d, self.n
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eigengap must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.tail > 0.0 && self.tail <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tail must lie in (0, 1], got {}",
                self.tail
            )));
        }
        Ok(())
    }

    /// `1, 1 - delta, (1 - delta) tail, (1 - delta) tail^2, ...`
    pub fn spectrum(&self) -> Vec<f64> {
        let second = 1.0 - self.delta;
        (0..self.d)
            .map(|j| match j {
                0 => 1.0,
                _ => second * self.tail.powi(j as i32 - 1),
            })
            .collect()
    }
}

/// Orthonormal factors `U` and `V` shared by every gap of a sweep.
#[derive(Debug, Clone)]
pub struct GapBasis {
    d: usize,
    n: usize,
    seed: u64,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

fn orthonormal_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_column_slice(rows, cols, &g).qr().q()
}

impl GapBasis {
    pub fn new(d: usize, n: usize, seed: u64) -> Result<Self> {
        if d < 2 || d > n {
            return Err(Error::InvalidConfig(format!("need 2 <= d <= n, got d = {d}, n = {n}")));
        }
        let u = orthonormal_columns(d, d, &mut stream(seed, STREAM_BASIS_LEFT));
        let v = orthonormal_columns(n, d, &mut stream(seed, STREAM_BASIS_RIGHT));
        Ok(GapBasis { d, n, seed, u, v })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The instance with eigengap `delta` and tail decay `tail` on this basis.
    pub fn problem(&self, delta: f64, tail: f64) -> Result<PcaProblem> {
        let spec = SyntheticSpec {
            d: self.d,
            n: self.n,
            delta,
            seed: self.seed,
            tail,
        };
        spec.validate()?;
        let spectrum = spec.spectrum();
        let (d, n) = (self.d, self.n);
        // U D, column j scaled by sqrt(n lambda_j)
        let mut ud = self.u.clone();
        for (j, lambda) in spectrum.iter().enumerate() {
            let s = (n as f64 * lambda).sqrt();
            ud.column_mut(j).scale_mut(s);
        }
        // z_i = (U D) v_i, where v_i is row i of V
        let z = &ud * self.v.transpose();
        let data = z.as_slice().to_vec();
        debug_assert_eq!(data.len(), d * n);
        PcaProblem::from_columns(d, n, data)?.with_spectrum(spectrum)
    }
}

/// Generates `Z = U D V^T` for `spec`, with the target spectrum attached.
pub fn generate_gap_matrix(spec: &SyntheticSpec) -> Result<PcaProblem> {
    spec.validate()?;
    GapBasis::new(spec.d, spec.n, spec.seed)?.problem(spec.delta, spec.tail)
}

/// Writes `Z` as: magic `RSPD`, `u32` d, `u32` n, 4 zero bytes, `u64` seed,
/// then `d * n` little-endian `f64` in column-major order.
pub fn write_dump<W: Write>(mut w: W, problem: &PcaProblem, seed: u64) -> Result<()> {
    let d = u32::try_from(problem.dim()).map_err(|_| Error::InvalidConfig("d exceeds u32".into()))?;
    let n = u32::try_from(problem.len()).map_err(|_| Error::InvalidConfig("n exceeds u32".into()))?;
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&DUMP_MAGIC);
    header[4..8].copy_from_slice(&d.to_le_bytes());
    header[8..12].copy_from_slice(&n.to_le_bytes());
    header[16..24].copy_from_slice(&seed.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(problem.data().len() * 8);
    for x in problem.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_dump`]. The spectrum is not stored.
pub fn read_dump<R: Read>(mut r: R) -> Result<(PcaProblem, u64)> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[0..4] != DUMP_MAGIC {
        return Err(Error::Io("not an RSPD dump (bad magic)".into()));
    }
    let word = |lo: usize| u32::from_le_bytes(header[lo..lo + 4].try_into().unwrap()) as usize;
    let (d, n) = (word(4), word(8));
    let seed = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let mut bytes = vec![0u8; d * n * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((PcaProblem::from_columns(d, n, data)?, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Objective;

    #[test]
    fn spectrum_shape() {
        let s = SyntheticSpec::new(4, 10, 0.25, 0).spectrum();
        assert_eq!(s, vec![1.0, 0.75, 0.75 * 0.9, 0.75 * 0.81]);
    }

    #[test]
    fn validation() {
        assert!(SyntheticSpec::new(5, 4, 0.1, 0).validate().is_err());
        assert!(SyntheticSpec::new(1, 4, 0.1, 0).validate().is_err());
        assert!(SyntheticSpec::new(2, 4, 1.0, 0).validate().is_err());
        assert!(SyntheticSpec::new(2, 4, 0.0, 0).validate().is_err());
        assert!(generate_gap_matrix(&SyntheticSpec::new(2, 4, 1.5, 0)).is_err());
    }

    #[test]
    fn same_seed_same_matrix() {
        let spec = SyntheticSpec::new(6, 20, 0.2, 42);
        let a = generate_gap_matrix(&spec).unwrap();
        let b = generate_gap_matrix(&spec).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = generate_gap_matrix(&SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn dump_round_trip() {
        let p = generate_gap_matrix(&SyntheticSpec::new(3, 7, 0.3, 9)).unwrap();
        let mut buf = Vec::new();
        write_dump(&mut buf, &p, 9).unwrap();
        assert_eq!(buf.len(), 24 + 3 * 7 * 8);
        assert_eq!(&buf[0..4], b"RSPD");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(&buf[8..12], &7u32.to_le_bytes());
        assert_eq!(&buf[12..16], &[0, 0, 0, 0]);
        assert_eq!(&buf[16..24], &9u64.to_le_bytes());
        assert_eq!(&buf[24..32], &p.data()[0].to_le_bytes());
        let (q, seed) = read_dump(&buf[..]).unwrap();
        assert_eq!(seed, 9);
        assert_eq!(q.data(), p.data());
        assert_eq!(q.num_components(), 7);

        buf[0] = b'X';
        assert!(read_dump(&buf[..]).is_err());
    }
}
