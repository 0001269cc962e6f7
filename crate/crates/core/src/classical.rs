//! The interacting measures `z_r⁻¹ e^{-D} μ₀` by importance reweighting, and
//! their reduced moments.
//!
//! All reductions run over fixed-size chunks whose partial sums are combined
//! in chunk order, so every estimate is bitwise independent of the thread count.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::Ensemble;
use crate::interaction::BatchEvaluator;
use crate::linalg;
use crate::potential::PairPotential;
use crate::spectral::OneBodyOperator;

const CHUNK: usize = 4096;

/// Fraction of `n` below which the effective sample size is flagged.
pub const DEFAULT_ESS_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Energy {
    Bare,
    Renormalized,
}

/// An ensemble carrying weights `e^{-c D}` and their diagnostics.
#[derive(Debug, Clone)]
pub struct Weighted {
    pub ensemble: Ensemble,
    pub energies: Vec<f64>,
    pub energy: Energy,
    pub ess: f64,
    pub low_confidence: bool,
}

/// Attaches weights `exp(-coupling · D)` with `D` bare or Wick-ordered at the ensemble's cutoff.
pub fn reweight(
    ensemble: &Ensemble,
    energy: Energy,
    op: &OneBodyOperator,
    w: &PairPotential,
    coupling: f64,
) -> Result<Weighted> {
    if ensemble.operator_id != 0 && ensemble.operator_id != op.fingerprint() {
        return Err(Error::Usage("ensemble was drawn from a different operator".into()));
    }
    let energies = if coupling == 0.0 {
        vec![0.0; ensemble.len()]
    } else {
        let eval = BatchEvaluator::new(op, w, ensemble.cutoff)?;
        match energy {
            Energy::Bare => eval.bare(&ensemble.samples),
            Energy::Renormalized => eval.renormalized(&ensemble.samples)?,
        }
    };
    Ok(attach(ensemble, energies, energy, coupling, DEFAULT_ESS_FLOOR))
}

/// Attaches weights for precomputed energies.
pub fn attach(ensemble: &Ensemble, energies: Vec<f64>, energy: Energy, coupling: f64, ess_floor: f64) -> Weighted {
    let mut ensemble = ensemble.clone();
    for (s, e) in ensemble.samples.iter_mut().zip(&energies) {
        s.weight = (-coupling * e).exp();
    }
    let weights = ensemble.weights();
    let ess = effective_sample_size(&weights);
    let low_confidence = ess < ess_floor * weights.len() as f64;
    if low_confidence {
        log::warn!("effective sample size {ess:.1} below {:.0}% of {}", ess_floor * 100.0, weights.len());
    }
    Weighted { ensemble, energies, energy, ess, low_confidence }
}

/// `(Σw)² / Σw²`
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let [s1, s2] = chunked_sum(weights.len(), |i| [weights[i], weights[i] * weights[i]]);
    if s2 == 0.0 {
        0.0
    } else {
        s1 * s1 / s2
    }
}

/// Sums `f(i)` over `0..n` in fixed chunks combined in order.
pub(crate) fn chunked_sum<const L: usize>(n: usize, f: impl Fn(usize) -> [f64; L] + Sync) -> [f64; L] {
    let parts: Vec<[f64; L]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; L];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let v = f(i);
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect();
    let mut total = [0.0; L];
    for p in parts {
        total.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    total
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let [s] = chunked_sum(values.len(), |i| [values[i]]);
    let mean = s / n;
    let [ss] = chunked_sum(values.len(), |i| [(values[i] - mean).powi(2)]);
    (mean, (ss / (n - 1.0).max(1.0) / n).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogPartition {
    /// `-log z_r`
    pub value: f64,
    pub stderr: f64,
    pub ess: f64,
    pub low_confidence: bool,
}

/// `-log z_r = -log(mean weight)` with a delta-method standard error.
pub fn estimate_log_zr(weighted: &Weighted) -> LogPartition {
    let (mean, se) = mean_stderr(&weighted.ensemble.weights());
    LogPartition { value: -mean.ln(), stderr: se / mean, ess: weighted.ess, low_confidence: weighted.low_confidence }
}

/// A `k`-body reduced matrix in the mode basis, `k ∈ {1, 2}`.
///
/// `k = 1`: entry `(i, j)`. `k = 2`: entry `(i K + j, k K + l)` over ordered
/// pairs. Classical moments are `E[α_i ᾱ_j]` and `E[α_i α_j ᾱ_k ᾱ_l]`; quantum
/// ones are `⟨a†_j a_i⟩` and `⟨a†_k a†_l a_i a_j⟩`.
#[derive(Debug, Clone)]
pub struct ReducedMatrix {
    pub order: usize,
    pub cutoff: usize,
    pub values: Mat<Complex64>,
    /// entrywise standard errors, row-major; `None` for exact objects
    pub stderr: Option<Vec<f64>>,
}

pub type ReducedMoment = ReducedMatrix;
pub type ReducedDensityMatrix = ReducedMatrix;

impl ReducedMatrix {
    pub fn zeros(order: usize, cutoff: usize) -> Self {
        let d = cutoff.pow(order as u32);
        ReducedMatrix { order, cutoff, values: Mat::zeros(d, d), stderr: None }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.values[(i, i)]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let d = self.dim();
        ReducedMatrix {
            order: self.order,
            cutoff: self.cutoff,
            values: Mat::from_fn(d, d, |i, j| self.values[(i, j)] * factor),
            stderr: self.stderr.as_ref().map(|s| s.iter().map(|x| x * factor.abs()).collect()),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.values)
    }

    pub fn scale(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&linalg::hermitian_part(&self.values))
    }

    /// Largest entrywise standard error, 0 when exact.
    pub fn max_stderr(&self) -> f64 {
        self.stderr.as_ref().map_or(0.0, |s| s.iter().fold(0.0, |m: f64, x| m.max(*x)))
    }

    /// For `k = 2`: largest change under swapping the two row indices or the two column indices.
    pub fn permutation_defect(&self) -> f64 {
        if self.order != 2 {
            return 0.0;
        }
        let n = self.cutoff;
        let swap = |r: usize| (r % n) * n + r / n;
        let mut worst = 0.0_f64;
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                let v = self.values[(r, c)];
                worst = worst.max((v - self.values[(swap(r), c)]).norm());
                worst = worst.max((v - self.values[(r, swap(c))]).norm());
            }
        }
        worst
    }

    /// Moments of the free Gaussian measure with covariance `diag(1/λ_j)`.
    pub fn free_classical(eigenvalues: &[f64], order: usize) -> Self {
        let occupations: Vec<f64> = eigenvalues.iter().map(|l| 1.0 / l).collect();
        Self::product_form(&occupations, order)
    }

    /// Quasi-free moments with one-body occupations `n_j`:
    /// `n_i δ_ij` and `n_i n_j (δ_ik δ_jl + δ_il δ_jk)`.
    pub fn product_form(occupations: &[f64], order: usize) -> Self {
        let n = occupations.len();
        let mut m = Self::zeros(order, n);
        if order == 1 {
            for (i, v) in occupations.iter().enumerate() {
                m.values[(i, i)] = Complex64::new(*v, 0.0);
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    let v = occupations[i] * occupations[j];
                    m.values[(i * n + j, i * n + j)] += Complex64::new(v, 0.0);
                    m.values[(i * n + j, j * n + i)] += Complex64::new(v, 0.0);
                }
            }
        }
        m
    }
}

/// Self-normalized weighted moments of order `k ∈ {1, 2}` with delta-method standard errors.
pub fn reduced_moment(weighted: &Weighted, order: usize) -> Result<ReducedMoment> {
    if !(1..=2).contains(&order) {
        return Err(Error::Usage(format!("reduced moments are available for k = 1, 2 (got {order})")));
    }
    let ens = &weighted.ensemble;
    let k = ens.cutoff;
    let d = k.pow(order as u32);
    let samples = &ens.samples;
    let [wsum] = chunked_sum(samples.len(), |i| [samples[i].weight]);
    if !(wsum > 0.0) {
        return Err(Error::Numerical("all importance weights vanished".into()));
    }
    let vector = |s: &crate::gaussian::FieldSample| -> Vec<Complex64> {
        if order == 1 {
            s.coeffs.clone()
        } else {
            (0..d).map(|r| s.coeffs[r / k] * s.coeffs[r % k]).collect()
        }
    };
    let entries = d * d;
    let mean = chunked_vec(samples.len(), 2 * entries, |i, acc| {
        let s = &samples[i];
        let v = vector(s);
        for r in 0..d {
            for c in 0..d {
                let z = v[r] * v[c].conj() * s.weight;
                acc[2 * (r * d + c)] += z.re;
                acc[2 * (r * d + c) + 1] += z.im;
            }
        }
    });
    let mean: Vec<Complex64> = (0..entries).map(|e| Complex64::new(mean[2 * e], mean[2 * e + 1]) / wsum).collect();
    let var = chunked_vec(samples.len(), entries, |i, acc| {
        let s = &samples[i];
        let v = vector(s);
        let w2 = s.weight * s.weight;
        for r in 0..d {
            for c in 0..d {
                acc[r * d + c] += w2 * (v[r] * v[c].conj() - mean[r * d + c]).norm_sqr();
            }
        }
    });
    let stderr = var.iter().map(|v| v.sqrt() / wsum).collect();
    let mut values = Mat::from_fn(d, d, |r, c| mean[r * d + c]);
    // exact Hermitian symmetrization of the estimator
    for r in 0..d {
        for c in r..d {
            let avg = (values[(r, c)] + values[(c, r)].conj()) * 0.5;
            values[(r, c)] = avg;
            values[(c, r)] = avg.conj();
        }
    }
    Ok(ReducedMatrix { order, cutoff: k, values, stderr: Some(stderr) })
}

/// Weighted `E_μ[α_i α_j]` (no conjugates) with standard errors; zero for phase-invariant measures.
pub fn phase_moment(weighted: &Weighted) -> (Vec<Complex64>, Vec<f64>) {
    let samples = &weighted.ensemble.samples;
    let k = weighted.ensemble.cutoff;
    let [wsum] = chunked_sum(samples.len(), |i| [samples[i].weight]);
    let raw = chunked_vec(samples.len(), 2 * k * k, |i, acc| {
        let s = &samples[i];
        for a in 0..k {
            for b in 0..k {
                let z = s.coeffs[a] * s.coeffs[b] * s.weight;
                acc[2 * (a * k + b)] += z.re;
                acc[2 * (a * k + b) + 1] += z.im;
            }
        }
    });
    let mean: Vec<Complex64> = (0..k * k).map(|e| Complex64::new(raw[2 * e], raw[2 * e + 1]) / wsum).collect();
    let var = chunked_vec(samples.len(), k * k, |i, acc| {
        let s = &samples[i];
        for a in 0..k {
            for b in 0..k {
                acc[a * k + b] += s.weight * s.weight * (s.coeffs[a] * s.coeffs[b] - mean[a * k + b]).norm_sqr();
            }
        }
    });
    (mean, var.iter().map(|v| v.sqrt() / wsum).collect())
}

fn chunked_vec(n: usize, len: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for p in parts {
        total.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    total
}

/// Trace norm of `A - B` (sum of absolute eigenvalues of the Hermitian difference).
pub fn trace_distance(a: &ReducedMatrix, b: &ReducedMatrix) -> Result<f64> {
    if a.order != b.order || a.dim() != b.dim() {
        return Err(Error::Usage(format!(
            "cannot compare a k = {} matrix of size {} with a k = {} matrix of size {}",
            a.order,
            a.dim(),
            b.order,
            b.dim()
        )));
    }
    let d = a.dim();
    let diff = Mat::from_fn(d, d, |i, j| a.values[(i, j)] - b.values[(i, j)]);
    linalg::trace_norm(&diff)
}

/// Exact single-mode (`K = 1`) quantities of `exp(-c D) dμ₀`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SingleMode {
    pub log_zr: f64,
    /// `E_μ[|α|²]`
    pub moment: f64,
    /// `E_{μ₀}[D]` for the chosen energy
    pub mean_energy: f64,
}

/// `K = 1` by quadrature over `X = |α|² ~ Exp(1/λ₁)`, where `D = ½ X² W₁` (bare)
/// or `½ (X - 1/λ₁)² W₁` (renormalized) and `W₁ = W_{1111}`.
pub fn single_mode(lambda1: f64, w1: f64, coupling: f64, energy: Energy) -> Result<SingleMode> {
    if !(lambda1 > 0.0) || !(w1 >= 0.0) || !(coupling >= 0.0) {
        return Err(Error::Domain("single-mode closed form needs λ₁ > 0, W₁ ≥ 0 and c ≥ 0".into()));
    }
    let m = 1.0 / lambda1;
    let d = move |t: f64| {
        let x = m * t;
        match energy {
            Energy::Bare => 0.5 * x * x * w1,
            Energy::Renormalized => 0.5 * (x - m) * (x - m) * w1,
        }
    };
    // X = m t with t ~ Exp(1); the density e^{-t} is negligible past t = 60
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        (0..12)
            .map(|i| quadrature::double_exponential::integrate(|t| f(t) * (-t).exp(), 5.0 * i as f64, 5.0 * (i + 1) as f64, 1e-14).integral)
            .sum()
    };
    let mean_energy = integrate(&d);
    if coupling * w1 == 0.0 {
        return Ok(SingleMode { log_zr: 0.0, moment: m, mean_energy });
    }
    let z = integrate(&|t| (-coupling * d(t)).exp());
    let first = integrate(&|t| m * t * (-coupling * d(t)).exp());
    Ok(SingleMode { log_zr: -z.ln(), moment: first / z, mean_energy })
}
