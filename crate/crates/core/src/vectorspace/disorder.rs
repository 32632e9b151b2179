//! Quenched disorder: an `N x N` matrix of i.i.d. `N(0, 1/N)` entries,
//! diagonal included.
//!
//! # Generator
//!
//! The stream is ChaCha20 (20 rounds) as implemented by `rand_chacha`, keyed
//! with the 32-byte seed `seed.to_le_bytes() || [0u8; 24]`, stream id 0,
//! starting at block 0. Each `u64` draw is the little-endian combination of
//! two consecutive 32-bit output words (low word first). A draw `x` maps to a
//! uniform `u = ((x >> 11) + 0.5) * 2^-53` in `(0, 1)`.
//!
//! Entries are filled in row-major order by Box-Muller pairs: pair `c` draws
//! `u1, u2` and sets entry `2c` to `r cos(2 pi u2)` and entry `2c + 1` to
//! `r sin(2 pi u2)` with `r = sqrt(-2 ln u1)`. When `N^2` is odd the sine of
//! the last pair is discarded. Every value is finally multiplied by
//! `1 / sqrt(N)`.
//!
//! # Binary format
//!
//! Little-endian: the 8 magic bytes `SKLABG01`, `N` as `u64`, the seed as
//! `u64`, then `N^2` `f64` entries in row-major order.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use super::Matrix;
use crate::error::{Error, Result};

/// Magic bytes opening a serialized [`Disorder`].
pub const DISORDER_MAGIC: &[u8; 8] = b"SKLABG01";

/// One quenched sample `g` together with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Disorder {
    n: usize,
    seed: u64,
    g: Matrix,
}

impl Disorder {
    /// Wraps a hand-made square matrix, e.g. for synthetic tests.
    pub fn from_matrix(g: Matrix, seed: u64) -> Result<Self> {
        g.require_square()?;
        if g.rows() == 0 {
            return Err(Error::InvalidParameter("disorder needs N >= 1".into()));
        }
        if let Some(bad) = g.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite disorder entry {bad}")));
        }
        Ok(Self {
            n: g.rows(),
            seed,
            g,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn into_matrix(self) -> Matrix {
        self.g
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DISORDER_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.n * self.n * 8);
        for v in self.g.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != DISORDER_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)
            .map_err(|_| Error::Format("truncated header".into()))?;
        let n = u64::from_le_bytes(word);
        r.read_exact(&mut word)
            .map_err(|_| Error::Format("truncated header".into()))?;
        let seed = u64::from_le_bytes(word);
        let n = usize::try_from(n)
            .ok()
            .filter(|n| (1..=1 << 16).contains(n))
            .ok_or_else(|| Error::Format(format!("implausible size N = {n}")))?;
        let mut payload = vec![0u8; n * n * 8];
        r.read_exact(&mut payload)
            .map_err(|_| Error::Format(format!("payload shorter than {n}x{n} doubles")))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let g = Matrix::from_row_major(n, n, data)?;
        Self::from_matrix(g, seed).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[inline]
fn uniform_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Samples `g` from the documented ChaCha20 / Box-Muller stream.
pub fn sample_disorder(n: usize, seed: u64) -> Result<Disorder> {
    if n == 0 {
        return Err(Error::InvalidParameter("disorder needs N >= 1".into()));
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    let total = n * n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity(total + 1);
    while data.len() < total {
        let u1 = uniform_open(rng.next_u64());
        let u2 = uniform_open(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        data.push(r * c * scale);
        data.push(r * s * scale);
    }
    data.truncate(total);
    Ok(Disorder {
        n,
        seed,
        g: Matrix::from_row_major(n, n, data)?,
    })
}
