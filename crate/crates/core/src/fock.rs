//! Grand-canonical quantum statistics on a bosonic Fock space truncated by
//! total particle number.

use std::collections::{BTreeMap, HashMap};

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::ReducedMatrix;
use crate::error::{Error, Result};
use crate::interaction::PairTensor;
use crate::linalg;

/// Largest sector dimension that is diagonalized densely.
pub const MAX_SECTOR_DIM: usize = 10_000;

/// Default trace fraction in the top sector above which a state is flagged.
pub const DEFAULT_SATURATION: f64 = 1e-6;

pub type Occupation = Vec<u16>;

/// Occupation-number basis, sector by sector, each sector in ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct FockBasis {
    modes: usize,
    max_particles: usize,
    sectors: Vec<Vec<Occupation>>,
    index: Vec<HashMap<Occupation, usize>>,
}

impl FockBasis {
    pub fn new(modes: usize, max_particles: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Config("Fock space needs at least one mode".into()));
        }
        let mut sectors = Vec::with_capacity(max_particles + 1);
        for n in 0..=max_particles {
            let mut states = Vec::new();
            let mut current = vec![0u16; modes];
            compositions(n as u16, 0, &mut current, &mut states);
            if states.len() > MAX_SECTOR_DIM {
                return Err(Error::Config(format!(
                    "sector n = {n} has {} states for K = {modes}; the limit is {MAX_SECTOR_DIM}",
                    states.len()
                )));
            }
            sectors.push(states);
        }
        let index = sectors
            .iter()
            .map(|s| s.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect())
            .collect();
        Ok(FockBasis { modes, max_particles, sectors, index })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_particles(&self) -> usize {
        self.max_particles
    }

    pub fn sector(&self, n: usize) -> &[Occupation] {
        &self.sectors[n]
    }

    pub fn sector_dims(&self) -> Vec<usize> {
        self.sectors.iter().map(|s| s.len()).collect()
    }

    pub fn dimension(&self) -> usize {
        self.sectors.iter().map(|s| s.len()).sum()
    }

    pub fn position(&self, occ: &[u16]) -> Option<usize> {
        let n: usize = occ.iter().map(|x| *x as usize).sum();
        self.index.get(n)?.get(occ).copied()
    }
}

// fills states with all (n_pos, ..., n_{K-1}) summing to `remaining`, lexicographically ascending
fn compositions(remaining: u16, pos: usize, current: &mut Vec<u16>, out: &mut Vec<Occupation>) {
    let last = current.len() - 1;
    if pos == last {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        compositions(remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}

#[inline]
fn annihilate(occ: &mut [u16], i: usize) -> Option<f64> {
    if occ[i] == 0 {
        return None;
    }
    let amp = (occ[i] as f64).sqrt();
    occ[i] -= 1;
    Some(amp)
}

#[inline]
fn create(occ: &mut [u16], i: usize) -> f64 {
    occ[i] += 1;
    (occ[i] as f64).sqrt()
}

/// One number-conserving sector of an operator, as sorted `(row, col, value)` triplets.
#[derive(Debug, Clone, Default)]
pub struct SparseBlock {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseBlock {
    fn from_map(dim: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        SparseBlock { dim, entries: map.into_iter().filter(|(_, v)| *v != 0.0).map(|((r, c), v)| (r, c, v)).collect() }
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries.iter().all(|(r, c, _)| r == c)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (r, c, v) in &self.entries {
            if r == c {
                d[*r] += v;
            }
        }
        d
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (r, c, v) in &self.entries {
            m[(*r, *c)] += v;
        }
        m
    }
}

/// Block-diagonal (number-conserving) real operator on a `FockBasis`.
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub blocks: Vec<SparseBlock>,
}

impl FockOperator {
    pub fn zero(basis: &FockBasis) -> Self {
        FockOperator { blocks: basis.sector_dims().into_iter().map(|dim| SparseBlock { dim, entries: Vec::new() }).collect() }
    }

    /// `self + factor · other`
    pub fn add_scaled(&self, other: &FockOperator, factor: f64) -> Result<FockOperator> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::Usage("operators live on different Fock bases".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let mut map = BTreeMap::new();
                for (r, c, v) in &a.entries {
                    *map.entry((*r, *c)).or_insert(0.0) += v;
                }
                for (r, c, v) in &b.entries {
                    *map.entry((*r, *c)).or_insert(0.0) += factor * v;
                }
                SparseBlock::from_map(a.dim, map)
            })
            .collect();
        Ok(FockOperator { blocks })
    }

    /// Largest `|A_rc - A_cr|` over all blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let m = b.to_dense();
                let mut worst = 0.0_f64;
                for r in 0..b.dim {
                    for c in r..b.dim {
                        worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    /// `⟨r|A|c⟩` in sector `n`.
    pub fn element(&self, n: usize, r: usize, c: usize) -> f64 {
        self.blocks[n].entries.iter().filter(|(a, b, _)| *a == r && *b == c).map(|e| e.2).sum()
    }
}

/// `Σ_j ε_j n_j`, diagonal in the occupation basis.
pub fn second_quantize_one_body(basis: &FockBasis, energies: &[f64]) -> Result<FockOperator> {
    if energies.len() < basis.modes() {
        return Err(Error::Usage(format!("{} one-body energies for {} modes", energies.len(), basis.modes())));
    }
    let blocks = basis
        .sectors
        .iter()
        .map(|states| SparseBlock {
            dim: states.len(),
            entries: states
                .iter()
                .enumerate()
                .map(|(i, occ)| (i, i, occ.iter().zip(energies).map(|(n, e)| *n as f64 * e).sum()))
                .filter(|e| e.2 != 0.0)
                .collect(),
        })
        .collect();
    Ok(FockOperator { blocks })
}

/// `Σ_ij h_ij a†_i a_j` for a real symmetric `K × K` matrix `h` (row-major).
pub fn second_quantize_matrix(basis: &FockBasis, h: &[f64]) -> Result<FockOperator> {
    let k = basis.modes();
    if h.len() != k * k {
        return Err(Error::Usage(format!("one-body matrix needs {} entries, got {}", k * k, h.len())));
    }
    let blocks = basis
        .sectors
        .par_iter()
        .enumerate()
        .map(|(n, states)| {
            let mut map = BTreeMap::new();
            for (c, occ) in states.iter().enumerate() {
                for j in 0..k {
                    let mut o = occ.clone();
                    let Some(a) = annihilate(&mut o, j) else { continue };
                    for i in 0..k {
                        if h[i * k + j] == 0.0 {
                            continue;
                        }
                        let mut o2 = o.clone();
                        let b = create(&mut o2, i);
                        let r = basis.index[n][&o2];
                        *map.entry((r, c)).or_insert(0.0) += h[i * k + j] * a * b;
                    }
                }
            }
            SparseBlock::from_map(states.len(), map)
        })
        .collect();
    Ok(FockOperator { blocks })
}

/// `𝒩` as an operator.
pub fn number_operator(basis: &FockBasis) -> FockOperator {
    second_quantize_one_body(basis, &vec![1.0; basis.modes()]).expect("one energy per mode")
}

/// `½ Σ_{ijkl} W_{ijkl} a†_i a†_j a_k a_l`.
pub fn second_quantize_pair(basis: &FockBasis, tensor: &PairTensor) -> Result<FockOperator> {
    let k = basis.modes();
    if tensor.cutoff() != k {
        return Err(Error::Usage(format!("pair tensor has K = {} but the basis has {k} modes", tensor.cutoff())));
    }
    let blocks = basis
        .sectors
        .par_iter()
        .enumerate()
        .map(|(n, states)| {
            let mut map = BTreeMap::new();
            if n >= 2 {
                for (c, occ) in states.iter().enumerate() {
                    for l in 0..k {
                        let mut o1 = occ.clone();
                        let Some(a1) = annihilate(&mut o1, l) else { continue };
                        for kk in 0..k {
                            let mut o2 = o1.clone();
                            let Some(a2) = annihilate(&mut o2, kk) else { continue };
                            for j in 0..k {
                                let mut o3 = o2.clone();
                                let c1 = create(&mut o3, j);
                                for i in 0..k {
                                    let wv = tensor.get(i, j, kk, l);
                                    if wv == 0.0 {
                                        continue;
                                    }
                                    let mut o4 = o3.clone();
                                    let c2 = create(&mut o4, i);
                                    let r = basis.index[n][&o4];
                                    *map.entry((r, c)).or_insert(0.0) += 0.5 * wv * a1 * a2 * c1 * c2;
                                }
                            }
                        }
                    }
                }
            }
            SparseBlock::from_map(states.len(), map)
        })
        .collect();
    Ok(FockOperator { blocks })
}

/// `Σ_j ε_j n_j + coupling · ½ Σ W_{ijkl} a†_i a†_j a_k a_l`.
pub fn hamiltonian(basis: &FockBasis, energies: &[f64], tensor: Option<&PairTensor>, coupling: f64) -> Result<FockOperator> {
    let one = second_quantize_one_body(basis, energies)?;
    match tensor {
        Some(t) if coupling != 0.0 => one.add_scaled(&second_quantize_pair(basis, t)?, coupling),
        _ => Ok(one),
    }
}

/// One sector of a block-diagonal density operator.
#[derive(Debug, Clone)]
pub enum StateBlock {
    /// diagonal in the occupation basis
    Diagonal(Vec<f64>),
    Dense(Mat<Complex64>),
}

impl StateBlock {
    pub fn trace(&self) -> f64 {
        match self {
            StateBlock::Diagonal(d) => d.iter().sum(),
            StateBlock::Dense(m) => (0..m.nrows()).map(|i| m[(i, i)].re).sum(),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match self {
            StateBlock::Diagonal(d) => {
                let mut v = d.clone();
                v.sort_by(f64::total_cmp);
                Ok(v)
            }
            StateBlock::Dense(m) => linalg::hermitian_eigenvalues(&linalg::hermitian_part(m)),
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> Complex64 {
        match self {
            StateBlock::Diagonal(d) => {
                if r == c {
                    Complex64::new(d[r], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            StateBlock::Dense(m) => m[(r, c)],
        }
    }

    fn dim(&self) -> usize {
        match self {
            StateBlock::Diagonal(d) => d.len(),
            StateBlock::Dense(m) => m.nrows(),
        }
    }

    fn to_dense(&self) -> Mat<Complex64> {
        let d = self.dim();
        Mat::from_fn(d, d, |r, c| self.at(r, c))
    }
}

/// Block-diagonal density operator `Γ = Γ_0 ⊕ Γ_1 ⊕ …`.
#[derive(Debug, Clone)]
pub struct FockState {
    pub blocks: Vec<StateBlock>,
}

impl FockState {
    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// `tr Γ_n` for each sector.
    pub fn sector_weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.trace()).collect()
    }

    pub fn mean_number(&self) -> f64 {
        self.sector_weights().iter().enumerate().map(|(n, w)| n as f64 * w).sum()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for b in &self.blocks {
            if let Some(v) = b.eigenvalues()?.first() {
                lo = lo.min(*v);
            }
        }
        Ok(lo)
    }

    /// Frobenius distance, block by block.
    pub fn frobenius_distance(&self, other: &FockState) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            for r in 0..a.dim() {
                for c in 0..a.dim() {
                    acc += (a.at(r, c) - b.at(r, c)).norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    /// `(1-t) Γ + t Γ'`
    pub fn mix(&self, other: &FockState, t: f64) -> FockState {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| match (a, b) {
                (StateBlock::Diagonal(x), StateBlock::Diagonal(y)) => {
                    StateBlock::Diagonal(x.iter().zip(y).map(|(p, q)| (1.0 - t) * p + t * q).collect())
                }
                _ => {
                    let d = a.dim();
                    StateBlock::Dense(Mat::from_fn(d, d, |r, c| a.at(r, c) * (1.0 - t) + b.at(r, c) * t))
                }
            })
            .collect();
        FockState { blocks }
    }

    /// Pure occupation-basis state.
    pub fn basis_state(basis: &FockBasis, occ: &[u16]) -> Result<FockState> {
        let idx = basis.position(occ).ok_or_else(|| Error::Usage(format!("{occ:?} is not in the basis")))?;
        let n: usize = occ.iter().map(|x| *x as usize).sum();
        let blocks = basis
            .sector_dims()
            .into_iter()
            .enumerate()
            .map(|(m, d)| StateBlock::Diagonal((0..d).map(|i| if m == n && i == idx { 1.0 } else { 0.0 }).collect()))
            .collect();
        Ok(FockState { blocks })
    }

    /// Pure state `|ψ⟩⟨ψ|` for a vector living in a single sector.
    pub fn pure_in_sector(basis: &FockBasis, n: usize, psi: &[Complex64]) -> Result<FockState> {
        let dims = basis.sector_dims();
        if n >= dims.len() || psi.len() != dims[n] {
            return Err(Error::Usage(format!("vector of length {} does not fit sector {n}", psi.len())));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let blocks = dims
            .iter()
            .enumerate()
            .map(|(m, &d)| {
                if m == n {
                    StateBlock::Dense(Mat::from_fn(d, d, |r, c| psi[r] * psi[c].conj() / norm))
                } else {
                    StateBlock::Diagonal(vec![0.0; d])
                }
            })
            .collect();
        Ok(FockState { blocks })
    }
}

/// Output of `gibbs_state`.
#[derive(Debug, Clone)]
pub struct Gibbs {
    pub state: FockState,
    pub log_z: f64,
    /// `F = -T log Z`
    pub free_energy: f64,
    pub mean_number: f64,
    /// trace carried by the top sector
    pub top_sector_weight: f64,
    pub cutoff_unsafe: bool,
}

/// Gibbs state of `H - ν𝒩 + E₀` at temperature `T`.
pub fn gibbs_state(h: &FockOperator, temperature: f64, nu: f64, e0: f64, saturation: f64) -> Result<Gibbs> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive (got {temperature})")));
    }
    let spectra: Vec<(Vec<f64>, Option<Mat<f64>>)> = h
        .blocks
        .par_iter()
        .enumerate()
        .map(|(n, b)| -> Result<(Vec<f64>, Option<Mat<f64>>)> {
            let shift = e0 - nu * n as f64;
            if b.is_diagonal() {
                Ok((b.diagonal().iter().map(|e| e + shift).collect(), None))
            } else {
                let (vals, vecs) = linalg::symmetric_eigen(&b.to_dense())?;
                let u = Mat::from_fn(b.dim, b.dim, |r, c| vecs[c][r]);
                Ok((vals.iter().map(|e| e + shift).collect(), Some(u)))
            }
        })
        .collect::<Result<_>>()?;
    let e_min = spectra.iter().flat_map(|(v, _)| v.iter().copied()).fold(f64::INFINITY, f64::min);
    let boltz: Vec<Vec<f64>> = spectra
        .iter()
        .map(|(v, _)| v.iter().map(|e| (-(e - e_min) / temperature).exp()).collect())
        .collect();
    let z_rel: f64 = boltz.iter().map(|b| b.iter().sum::<f64>()).sum();
    let log_z = -e_min / temperature + z_rel.ln();
    let blocks: Vec<StateBlock> = spectra
        .par_iter()
        .zip(&boltz)
        .map(|((_, u), b)| {
            let p: Vec<f64> = b.iter().map(|x| x / z_rel).collect();
            match u {
                None => StateBlock::Diagonal(p),
                Some(u) => {
                    let d = p.len();
                    let scaled = Mat::from_fn(d, d, |r, c| u[(r, c)] * p[c]);
                    let g = &scaled * u.transpose();
                    StateBlock::Dense(Mat::from_fn(d, d, |r, c| Complex64::new(g[(r, c)], 0.0)))
                }
            }
        })
        .collect();
    let state = FockState { blocks };
    let weights = state.sector_weights();
    let top = *weights.last().unwrap_or(&0.0);
    let cutoff_unsafe = top > saturation;
    if cutoff_unsafe {
        log::warn!("top Fock sector carries {top:.3e} of the trace");
    }
    Ok(Gibbs {
        mean_number: state.mean_number(),
        state,
        log_z,
        free_energy: -temperature * log_z,
        top_sector_weight: top,
        cutoff_unsafe,
    })
}

/// `Γ^(1)_{ij} = ⟨a†_j a_i⟩` or `Γ^(2)_{(i,j),(k,l)} = ⟨a†_k a†_l a_i a_j⟩`.
pub fn reduced_density(state: &FockState, basis: &FockBasis, order: usize) -> Result<ReducedMatrix> {
    if !(1..=2).contains(&order) {
        return Err(Error::Usage(format!("reduced density matrices are available for k = 1, 2 (got {order})")));
    }
    if state.blocks.len() != basis.max_particles() + 1 {
        return Err(Error::Usage("state and basis have different particle cutoffs".into()));
    }
    let k = basis.modes();
    let d = k.pow(order as u32);
    let parts: Vec<Vec<Complex64>> = state
        .blocks
        .par_iter()
        .enumerate()
        .map(|(n, block)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); d * d];
            let states = &basis.sectors[n];
            match block {
                StateBlock::Diagonal(p) => {
                    for (occ, &w) in states.iter().zip(p) {
                        if w == 0.0 {
                            continue;
                        }
                        accumulate_diagonal(occ, w, order, &mut acc);
                    }
                }
                StateBlock::Dense(g) => {
                    for (c, occ) in states.iter().enumerate() {
                        for_each_transition(occ, order, |row, col, target, amp| {
                            let r = basis.index[n][target];
                            acc[row * d + col] += g[(c, r)] * amp;
                        });
                    }
                }
            }
            acc
        })
        .collect();
    let mut m = ReducedMatrix::zeros(order, k);
    for part in parts {
        for (e, v) in part.into_iter().enumerate() {
            m.values[(e / d, e % d)] += v;
        }
    }
    Ok(m)
}

fn accumulate_diagonal(occ: &[u16], w: f64, order: usize, acc: &mut [Complex64]) {
    let k = occ.len();
    if order == 1 {
        for i in 0..k {
            acc[i * k + i] += w * occ[i] as f64;
        }
        return;
    }
    let d = k * k;
    for i in 0..k {
        for j in 0..k {
            let v = if i == j {
                occ[i] as f64 * (occ[i] as f64 - 1.0)
            } else {
                occ[i] as f64 * occ[j] as f64
            };
            if v == 0.0 {
                continue;
            }
            let row = i * k + j;
            acc[row * d + row] += w * v;
            if i != j {
                acc[row * d + j * k + i] += w * v;
            }
        }
    }
}

// For each (row, col) pair index, the image of `occ` under the ladder string
// a†_j a_i (k = 1, row i, col j) or a†_k a†_l a_i a_j (k = 2, row (i,j), col (k,l)).
fn for_each_transition(occ: &[u16], order: usize, mut f: impl FnMut(usize, usize, &Occupation, f64)) {
    let k = occ.len();
    let mut o = occ.to_vec();
    if order == 1 {
        for i in 0..k {
            let Some(a) = annihilate(&mut o, i) else { continue };
            for j in 0..k {
                let mut t = o.clone();
                let c = create(&mut t, j);
                f(i, j, &t, a * c);
            }
            o[i] += 1;
        }
        return;
    }
    for i in 0..k {
        for j in 0..k {
            let mut o1 = occ.to_vec();
            let Some(a1) = annihilate(&mut o1, j) else { continue };
            let Some(a2) = annihilate(&mut o1, i) else { continue };
            for kk in 0..k {
                for l in 0..k {
                    let mut t = o1.clone();
                    let c1 = create(&mut t, l);
                    let c2 = create(&mut t, kk);
                    f(i * k + j, kk * k + l, &t, a1 * a2 * c1 * c2);
                }
            }
        }
    }
}

/// Coherent state with report on its truncation.
#[derive(Debug, Clone)]
pub struct Coherent {
    /// Number-dephased state `⊕_n P_n |ξ⟩⟨ξ| P_n`; it has the same reduced
    /// density matrices and sector weights as the pure coherent vector.
    pub state: FockState,
    /// Squared norm of the truncated vector times `e^{-‖v‖²}`; 1 without truncation.
    pub retained_norm: f64,
    pub truncation_warning: bool,
}

/// Truncated coherent state with components `Π_j v_j^{n_j} / √(n_j!)`, renormalized.
pub fn coherent_state(v: &[Complex64], basis: &FockBasis) -> Result<Coherent> {
    if v.len() != basis.modes() {
        return Err(Error::Usage(format!("coherent vector has {} entries for {} modes", v.len(), basis.modes())));
    }
    let mass: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let sector_vectors: Vec<Vec<Complex64>> = basis
        .sectors
        .iter()
        .map(|states| {
            states
                .iter()
                .map(|occ| {
                    occ.iter()
                        .zip(v)
                        .map(|(&n, z)| z.powu(n as u32) / factorial_sqrt(n))
                        .product()
                })
                .collect()
        })
        .collect();
    let norm: f64 = sector_vectors.iter().flat_map(|s| s.iter().map(|z| z.norm_sqr())).sum();
    let blocks = sector_vectors
        .iter()
        .map(|psi| {
            let d = psi.len();
            StateBlock::Dense(Mat::from_fn(d, d, |r, c| psi[r] * psi[c].conj() / norm))
        })
        .collect();
    let truncation_warning = mass > basis.max_particles() as f64 / 2.0;
    if truncation_warning {
        log::warn!("coherent state with ‖v‖² = {mass:.3} is truncated at N_max = {}", basis.max_particles());
    }
    Ok(Coherent { state: FockState { blocks }, retained_norm: norm * (-mass).exp(), truncation_warning })
}

fn factorial_sqrt(n: u16) -> f64 {
    (1..=n).map(|k| (k as f64).sqrt()).product()
}

/// `tr((H - ν𝒩 + E₀) Γ) + T tr(Γ log Γ)` with `0 log 0 = 0`.
pub fn free_energy_functional(state: &FockState, h: &FockOperator, temperature: f64, nu: f64, e0: f64) -> Result<f64> {
    let mut energy = 0.0;
    for (block, op) in state.blocks.iter().zip(&h.blocks) {
        for (r, c, v) in &op.entries {
            energy += v * block.at(*c, *r).re;
        }
    }
    energy += e0 * state.trace() - nu * state.mean_number();
    let mut entropy = 0.0;
    for block in &state.blocks {
        for p in block.eigenvalues()? {
            if p > 0.0 {
                entropy += p * p.ln();
            }
        }
    }
    Ok(energy + temperature * entropy)
}

/// `(1-t) Γ + t ⊕_n q_n 𝟙/d_n` with random `t ∈ (0,1)` and random sector weights `q_n`.
pub fn random_mixture<R: Rng>(gibbs: &FockState, rng: &mut R) -> FockState {
    let t: f64 = rng.random_range(0.01..0.99);
    let raw: Vec<f64> = gibbs.blocks.iter().map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let blocks = gibbs
        .blocks
        .iter()
        .zip(&raw)
        .map(|(b, q)| StateBlock::Diagonal(vec![q / total / b.dim() as f64; b.dim()]))
        .collect();
    let mixed = FockState { blocks };
    let dense_gibbs = FockState {
        blocks: gibbs
            .blocks
            .iter()
            .map(|b| match b {
                StateBlock::Diagonal(_) => b.clone(),
                StateBlock::Dense(_) => StateBlock::Dense(b.to_dense()),
            })
            .collect(),
    };
    dense_gibbs.mix(&mixed, t)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditRow {
    pub max_particles: usize,
    pub free_energy: f64,
    pub mean_number: f64,
    /// `F(N_max) - F(previous N_max)`; NaN for the first row
    pub delta_free_energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffAudit {
    pub rows: Vec<AuditRow>,
    pub tolerance: f64,
    pub converged: bool,
}

/// Free energy and mean number along an increasing `N_max` schedule.
pub fn cutoff_audit(
    energies: &[f64],
    tensor: Option<&PairTensor>,
    coupling: f64,
    temperature: f64,
    nu: f64,
    schedule: &[usize],
    tolerance: Option<f64>,
) -> Result<CutoffAudit> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule.is_empty() {
        return Err(Error::Config("N_max schedule must be nonempty and strictly increasing".into()));
    }
    let modes = tensor.map_or(energies.len(), |t| t.cutoff());
    let tolerance = tolerance.unwrap_or(1e-6 * temperature);
    let mut rows: Vec<AuditRow> = Vec::new();
    for &n_max in schedule {
        let basis = FockBasis::new(modes, n_max)?;
        let h = hamiltonian(&basis, &energies[..modes], tensor, coupling)?;
        let g = gibbs_state(&h, temperature, nu, 0.0, 1.0)?;
        let delta = rows.last().map_or(f64::NAN, |r| g.free_energy - r.free_energy);
        rows.push(AuditRow { max_particles: n_max, free_energy: g.free_energy, mean_number: g.mean_number, delta_free_energy: delta });
    }
    let converged = rows.last().is_some_and(|r| r.delta_free_energy.abs() < tolerance);
    Ok(CutoffAudit { rows, tolerance, converged })
}
