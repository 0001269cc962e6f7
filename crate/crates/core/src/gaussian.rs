//! Direct sampling of the cylindrical Gaussian measures `μ_{0,K}`.
//!
//! Sample `i` of a run with seed `s` draws from a ChaCha8 stream keyed by
//! `(s, i)`: `ChaCha8Rng::seed_from_u64(s)` with `set_stream(i)`. Each mode
//! consumes two standard normals (real part first), so an ensemble at cutoff
//! `K` is the coefficient-prefix of any ensemble at a larger cutoff.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{check_cutoff, OneBodyOperator};

const DUMP_MAGIC: &[u8; 4] = b"GFL1";

/// Coordinates `α_1..α_K` of `P_K u = Σ α_j u_j`, with an importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub coeffs: Vec<Complex64>,
    pub weight: f64,
}

impl FieldSample {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        FieldSample { coeffs, weight: 1.0 }
    }

    /// Real coefficients, unit weight.
    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect())
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.len()
    }

    /// `Σ |α_j|²`
    pub fn mass(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    /// First `k` coefficients; the weight is reset to 1.
    pub fn truncated(&self, k: usize) -> FieldSample {
        FieldSample::new(self.coeffs[..k].to_vec())
    }
}

/// A reproducible batch of samples from `μ_{0,K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub operator_id: u64,
    pub cutoff: usize,
    pub seed: u64,
    pub samples: Vec<FieldSample>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Coefficient prefix at a smaller cutoff, weights reset.
    pub fn truncated(&self, k: usize) -> Result<Ensemble> {
        if k == 0 || k > self.cutoff {
            return Err(Error::Usage(format!("cannot truncate a K = {} ensemble to K = {k}", self.cutoff)));
        }
        Ok(Ensemble {
            operator_id: self.operator_id,
            cutoff: k,
            seed: self.seed,
            samples: self.samples.iter().map(|s| s.truncated(k)).collect(),
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    /// Writes the `GFL1` binary dump.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&(self.cutoff as u32).to_le_bytes())?;
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for s in &self.samples {
            for a in &s.coeffs {
                out.write_all(&a.re.to_le_bytes())?;
                out.write_all(&a.im.to_le_bytes())?;
            }
        }
        for s in &self.samples {
            out.write_all(&s.weight.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a `GFL1` dump. The operator fingerprint is not stored and comes back as 0.
    pub fn read_from<R: Read>(mut input: R) -> Result<Ensemble> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("not a GFL1 ensemble dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let cutoff = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut next = |input: &mut R| -> Result<f64> {
            input.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let mut coeffs = Vec::with_capacity(cutoff);
            for _ in 0..cutoff {
                let re = next(&mut input)?;
                let im = next(&mut input)?;
                coeffs.push(Complex64::new(re, im));
            }
            samples.push(FieldSample::new(coeffs));
        }
        for s in samples.iter_mut() {
            s.weight = next(&mut input)?;
        }
        Ok(Ensemble { operator_id: 0, cutoff, seed, samples })
    }
}

/// Draws `n` independent samples of `μ_{0,K}` for the (already shifted) operator.
pub fn sample_gaussian(op: &OneBodyOperator, cutoff: usize, n: usize, seed: u64) -> Result<Ensemble> {
    check_cutoff(op, cutoff)?;
    let scales: Vec<f64> = op.eigenvalues()[..cutoff].iter().map(|l| (0.5 / l).sqrt()).collect();
    let samples = (0..n)
        .into_par_iter()
        .map(|i| draw_one(&scales, seed, i as u64))
        .collect();
    Ok(Ensemble { operator_id: op.fingerprint(), cutoff, seed, samples })
}

fn draw_one(scales: &[f64], seed: u64, index: u64) -> FieldSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let coeffs = scales
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * s, im * s)
        })
        .collect();
    FieldSample::new(coeffs)
}

/// `Σ_j λ_j^t |α_j|²` with the operator's (shifted) eigenvalues.
pub fn sobolev_norm_sq(sample: &FieldSample, op: &OneBodyOperator, t: f64) -> f64 {
    sample
        .coeffs
        .iter()
        .zip(op.eigenvalues())
        .map(|(a, l)| l.powf(t) * a.norm_sqr())
        .sum()
}

/// Pointwise values `u(x) = Σ_j α_j u_j(x)`.
pub fn field_on_grid(sample: &FieldSample, op: &OneBodyOperator) -> Vec<Complex64> {
    let scale = 1.0 / op.grid().cell().sqrt();
    let mut u = vec![Complex64::new(0.0, 0.0); op.grid().len()];
    for (j, a) in sample.coeffs.iter().enumerate() {
        let a = a * scale;
        u.iter_mut().zip(op.mode(j)).for_each(|(x, m)| *x += a * m);
    }
    u
}

/// Pointwise `|P_K u(x)|²`.
pub fn density_on_grid(sample: &FieldSample, op: &OneBodyOperator) -> Vec<f64> {
    field_on_grid(sample, op).iter().map(|z| z.norm_sqr()).collect()
}
