//! One-body Schrödinger operators `h = -Δ + V` on a hard-wall grid.
//!
//! The Laplacian is the second-order central difference with Dirichlet
//! walls at `±L`. Eigenvectors are stored with the quadrature weight
//! `Δx^{d/2}` folded in, so plain dot products are L² inner products.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Upper bound on the number of grid points (dense diagonalization).
pub const MAX_GRID_POINTS: usize = 4096;

/// Relative tolerance used when deciding a Schatten sum is divergent. The
/// least-squares growth exponent of a degenerate staircase spectrum is only
/// accurate to a few percent, so borderline cases count as divergent.
pub const DIVERGENCE_MARGIN: f64 = 0.05;

/// Uniform grid with hard walls at `±half_width` on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!("grid half_width must be positive, got {half_width}")));
        }
        if points < 8 {
            return Err(Error::Config(format!("grid points per axis must be >= 8, got {points}")));
        }
        let total = points.pow(dim as u32);
        if total > MAX_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid has {total} points, above the cap of {MAX_GRID_POINTS}"
            )));
        }
        Ok(Self { dim, half_width, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Interior points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points as f64 + 1.0)
    }

    /// Volume element `Δx^d`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points).map(|i| -self.half_width + h * (i as f64 + 1.0)).collect()
    }

    /// Per-axis indices of a flat index (row-major, x slowest).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let [i, j] = self.unflatten(idx);
        let x = -self.half_width + h * (i as f64 + 1.0);
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, -self.half_width + h * (j as f64 + 1.0)]
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let [x, y] = self.coords(idx);
        x.hypot(y)
    }

    /// Index of the point mirrored through the origin.
    pub fn reflect(&self, idx: usize) -> usize {
        let m = self.points;
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            m - 1 - i
        } else {
            (m - 1 - i) * m + (m - 1 - j)
        }
    }

    /// Applies the Dirichlet finite-difference `-Δ` to grid values.
    pub fn neg_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let m = self.points;
        let inv = 1.0 / (self.spacing() * self.spacing());
        let mut out = vec![0.0; f.len()];
        for idx in 0..f.len() {
            let [i, j] = self.unflatten(idx);
            let mut acc = 2.0 * self.dim as f64 * f[idx];
            if i > 0 {
                acc -= f[idx - if self.dim == 1 { 1 } else { m }];
            }
            if i + 1 < m {
                acc -= f[idx + if self.dim == 1 { 1 } else { m }];
            }
            if self.dim == 2 {
                if j > 0 {
                    acc -= f[idx - 1];
                }
                if j + 1 < m {
                    acc -= f[idx + 1];
                }
            }
            out[idx] = acc * inv;
        }
        out
    }
}

/// Confining potential `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trap {
    /// `V(x) = |x|^s`, `s > 1`.
    Power { exponent: f64 },
    /// `V ≡ 0` inside the walls (the `s = ∞` convention).
    Box,
}

impl Trap {
    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::Config(format!("trap exponent must be > 1, got {exponent}")));
        }
        Ok(Trap::Power { exponent })
    }

    pub fn sample(&self, grid: &GridSpec) -> Vec<f64> {
        match *self {
            Trap::Power { exponent } => (0..grid.len()).map(|i| grid.radius(i).powf(exponent)).collect(),
            Trap::Box => vec![0.0; grid.len()],
        }
    }
}

/// Lowest eigenpairs of `h - ν` on a grid.
#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    grid: GridSpec,
    trap: Option<Trap>,
    potential: Vec<f64>,
    /// `λ_j - ν`
    eigenvalues: Vec<f64>,
    modes: Vec<Vec<f64>>,
    shift: f64,
}

impl OneBodyOperator {
    /// Diagonalizes `-Δ + V` for a trap and keeps the `num_eigs` lowest pairs.
    pub fn build(grid: GridSpec, trap: Trap, num_eigs: usize) -> Result<Self> {
        let potential = trap.sample(&grid);
        let mut op = Self::from_potential(grid, potential, num_eigs)?;
        op.trap = Some(trap);
        Ok(op)
    }

    /// Diagonalizes `-Δ + V` for arbitrary grid potential values.
    pub fn from_potential(grid: GridSpec, potential: Vec<f64>, num_eigs: usize) -> Result<Self> {
        let n = grid.len();
        if potential.len() != n {
            return Err(Error::Usage(format!(
                "potential has {} values for a grid of {n} points",
                potential.len()
            )));
        }
        if num_eigs == 0 || num_eigs > n {
            return Err(Error::Config(format!(
                "num_eigs = {num_eigs} must lie in 1..={n} (grid points)"
            )));
        }
        let matrix = hamiltonian_matrix(&grid, &potential);
        let (mut values, mut vectors) = linalg::symmetric_eigen(&matrix)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue from the grid Hamiltonian".into()));
        }
        values.truncate(num_eigs);
        vectors.truncate(num_eigs);
        Ok(Self { grid, trap: None, potential, eigenvalues: values, modes: vectors, shift: 0.0 })
    }

    /// Copy with every eigenvalue replaced by `λ_j - ν`.
    pub fn shifted(&self, nu: f64) -> Result<Self> {
        let lowest = self.eigenvalues[0];
        if nu >= lowest {
            return Err(Error::Domain(format!(
                "shift ν = {nu} is not below the lowest eigenvalue {lowest}: measure would be undefined"
            )));
        }
        let mut out = self.clone();
        out.eigenvalues.iter_mut().for_each(|l| *l -= nu);
        out.shift += nu;
        Ok(out)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn trap(&self) -> Option<Trap> {
        self.trap
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Eigenvalues of the shifted operator.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvalues of the unshifted `h`.
    pub fn bare_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l + self.shift).collect()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Weighted eigenvector `u_j · Δx^{d/2}` (0-based `j`).
    pub fn mode(&self, j: usize) -> &[f64] {
        &self.modes[j]
    }

    /// Pointwise eigenfunction values `u_j(x)`.
    pub fn mode_values(&self, j: usize) -> Vec<f64> {
        let s = 1.0 / self.grid.cell().sqrt();
        self.modes[j].iter().map(|v| v * s).collect()
    }

    /// Applies the unshifted `h` to weighted grid values.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.grid.neg_laplacian(f);
        out.iter_mut().zip(f).zip(&self.potential).for_each(|((o, x), v)| *o += v * x);
        out
    }

    /// Largest `|⟨u_i, u_j⟩ - δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.num_modes() {
            for j in i..self.num_modes() {
                let dot: f64 = self.modes[i].iter().zip(&self.modes[j]).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Largest `‖h u_j − λ_j u_j‖ / λ_j` with unshifted eigenvalues.
    pub fn rayleigh_residual(&self) -> f64 {
        let bare = self.bare_eigenvalues();
        let mut worst = 0.0_f64;
        for (j, u) in self.modes.iter().enumerate() {
            let hu = self.apply(u);
            let r: f64 = hu.iter().zip(u).map(|(a, b)| (a - bare[j] * b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(r / bare[j].abs().max(f64::MIN_POSITIVE));
        }
        worst
    }

    /// Stable 64-bit fingerprint of the grid, potential, spectrum and shift.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.grid.dim as u64);
        h.write_u64(self.grid.points as u64);
        h.write_f64(self.grid.half_width);
        h.write_f64(self.shift);
        for v in &self.potential {
            h.write_f64(*v);
        }
        for l in &self.eigenvalues {
            h.write_f64(*l);
        }
        h.finish()
    }

    pub fn schatten_trace(&self, p: f64) -> Result<SchattenTrace> {
        schatten_trace(self, p)
    }

    pub fn green_kernel(&self, cutoff: usize) -> Result<GreenKernel> {
        green_kernel(self, cutoff)
    }
}

fn hamiltonian_matrix(grid: &GridSpec, potential: &[f64]) -> Mat<f64> {
    let n = grid.len();
    let m = grid.points();
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    let mut mat = Mat::<f64>::zeros(n, n);
    for idx in 0..n {
        mat[(idx, idx)] = 2.0 * grid.dim() as f64 * inv + potential[idx];
        let [i, j] = grid.unflatten(idx);
        let stride = if grid.dim() == 1 { 1 } else { m };
        if i + 1 < m {
            mat[(idx, idx + stride)] = -inv;
            mat[(idx + stride, idx)] = -inv;
        }
        if grid.dim() == 2 && j + 1 < m {
            mat[(idx, idx + 1)] = -inv;
            mat[(idx + 1, idx)] = -inv;
        }
    }
    mat
}

/// Partial Schatten sum with a Weyl-type tail estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SchattenTrace {
    pub p: f64,
    /// `Σ_{j ≤ J} λ_j^{-p}`
    pub partial_sum: f64,
    /// Estimated `Σ_{j > J} λ_j^{-p}`; infinite when flagged divergent.
    pub tail_estimate: f64,
    /// Fitted `a` in `λ_j ≈ C j^a` over the top quartile.
    pub growth_exponent: f64,
    pub likely_divergent: bool,
}

pub fn schatten_trace(op: &OneBodyOperator, p: f64) -> Result<SchattenTrace> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("Schatten exponent must be positive, got {p}")));
    }
    let lam = op.eigenvalues();
    if lam[0] <= 0.0 {
        return Err(Error::Domain("Schatten trace needs a positive operator".into()));
    }
    let partial_sum: f64 = lam.iter().map(|l| l.powf(-p)).sum();
    let count = lam.len();
    let start = (3 * count) / 4;
    if count - start < 2 {
        return Ok(SchattenTrace {
            p,
            partial_sum,
            tail_estimate: f64::NAN,
            growth_exponent: f64::NAN,
            likely_divergent: false,
        });
    }
    // least squares of log λ_j against log j on the top quartile
    let pts: Vec<(f64, f64)> =
        (start..count).map(|i| (((i + 1) as f64).ln(), lam[i].ln())).collect();
    let nf = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let a = sxy / sxx;
    let log_c = my - a * mx;
    let likely_divergent = a * p <= 1.0 + DIVERGENCE_MARGIN;
    let tail_estimate = if likely_divergent {
        f64::INFINITY
    } else {
        // ∫_J^∞ (C x^a)^{-p} dx
        let j = count as f64;
        (-p * log_c).exp() * j.powf(1.0 - a * p) / (a * p - 1.0)
    };
    Ok(SchattenTrace { p, partial_sum, tail_estimate, growth_exponent: a, likely_divergent })
}

/// Truncated resolvent kernel `G_K(x,y) = Σ_{j≤K} u_j(x) u_j(y) / λ_j`.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    cutoff: usize,
    size: usize,
    values: Vec<f64>,
    diagonal: Vec<f64>,
}

impl GreenKernel {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.size + y]
    }

    /// Matter density `ρ_K(x) = G_K(x,x)`.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

pub fn green_kernel(op: &OneBodyOperator, cutoff: usize) -> Result<GreenKernel> {
    check_cutoff(op, cutoff)?;
    let n = op.grid().len();
    let mut values = vec![0.0; n * n];
    for j in 0..cutoff {
        let u = op.mode_values(j);
        let inv = 1.0 / op.eigenvalues()[j];
        for x in 0..n {
            let ux = u[x] * inv;
            if ux == 0.0 {
                continue;
            }
            let row = &mut values[x * n..(x + 1) * n];
            row.iter_mut().zip(&u).for_each(|(g, uy)| *g += ux * uy);
        }
    }
    let diagonal = (0..n).map(|x| values[x * n + x]).collect();
    Ok(GreenKernel { cutoff, size: n, values, diagonal })
}

/// `ρ_K(x) = Σ_{j≤K} |u_j(x)|² / λ_j` without forming the full kernel.
pub fn counterterm_density(op: &OneBodyOperator, cutoff: usize) -> Result<Vec<f64>> {
    check_cutoff(op, cutoff)?;
    let n = op.grid().len();
    let inv_cell = 1.0 / op.grid().cell();
    let mut rho = vec![0.0; n];
    for j in 0..cutoff {
        let w = inv_cell / op.eigenvalues()[j];
        rho.iter_mut().zip(op.mode(j)).for_each(|(r, u)| *r += w * u * u);
    }
    Ok(rho)
}

pub(crate) fn check_cutoff(op: &OneBodyOperator, cutoff: usize) -> Result<()> {
    if cutoff == 0 || cutoff > op.num_modes() {
        return Err(Error::Usage(format!(
            "mode cutoff {cutoff} must lie in 1..={} (computed eigenpairs)",
            op.num_modes()
        )));
    }
    if op.eigenvalues()[0] <= 0.0 {
        return Err(Error::Domain(format!(
            "operator is not positive: lowest eigenvalue {}",
            op.eigenvalues()[0]
        )));
    }
    Ok(())
}

/// FNV-1a, used for reproducible fingerprints.
pub(crate) struct Fnv64(u64);

impl Fnv64 {
    pub(crate) fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_bytes(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub(crate) fn write_f64(&mut self, v: f64) {
        self.write_bytes(&v.to_bits().to_le_bytes());
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}
