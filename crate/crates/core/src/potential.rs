//! Pair potentials on the grid and their convolutions.
//!
//! `w ⋆ f` is an exact discrete linear convolution over the grid: the kernel
//! lives on the difference grid `(2M-1)^d`, both operands are zero-padded to
//! `(2M)^d` and multiplied in Fourier space, so there is no wrap-around.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::GridSpec;

/// Shape of the interaction `w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairKind {
    /// `w(x) = a exp(-|x|²/(2σ²))`
    GaussianBump { amplitude: f64, width: f64 },
    /// `c δ_0`, realized as `c / Δx` on the zero offset (1D only).
    GridDelta { strength: f64 },
    /// Radial profile `w(|x|)` by linear interpolation; zero past the table.
    Tabulated { offsets: Vec<f64>, values: Vec<f64> },
}

impl PairKind {
    /// Reads a two-column text table `offset value`; `#` starts a comment.
    pub fn tabulated_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Format(format!(
                    "{}:{}: expected two columns, found {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
                })
            };
            offsets.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::tabulated(offsets, values)
    }

    pub fn tabulated(offsets: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if offsets.len() < 2 || offsets.len() != values.len() {
            return Err(Error::Format("tabulated potential needs at least two (offset, value) rows".into()));
        }
        if offsets.windows(2).any(|w| w[1] <= w[0]) || offsets[0] < 0.0 {
            return Err(Error::Format("tabulated offsets must be nonnegative and strictly increasing".into()));
        }
        Ok(PairKind::Tabulated { offsets, values })
    }

    fn radial(&self, r: f64, grid: &GridSpec) -> f64 {
        match self {
            PairKind::GaussianBump { amplitude, width } => amplitude * (-r * r / (2.0 * width * width)).exp(),
            PairKind::GridDelta { strength } => {
                if r == 0.0 {
                    strength / grid.cell()
                } else {
                    0.0
                }
            }
            PairKind::Tabulated { offsets, values } => {
                if r < offsets[0] {
                    return values[0];
                }
                let last = offsets.len() - 1;
                if r > offsets[last] {
                    return 0.0;
                }
                let k = offsets.partition_point(|o| *o <= r).clamp(1, last);
                let t = (r - offsets[k - 1]) / (offsets[k] - offsets[k - 1]);
                values[k - 1] * (1.0 - t) + values[k] * t
            }
        }
    }
}

/// A pair potential bound to a grid, with its convolution machinery.
#[derive(Clone)]
pub struct PairPotential {
    kind: PairKind,
    grid: GridSpec,
    /// kernel on the difference grid, offsets `-(M-1)..=(M-1)` per axis
    kernel: Vec<f64>,
    padded: usize,
    spectrum: Vec<Complex64>,
    /// `spectrum` in column-major order (2D only)
    spectrum_t: Vec<Complex64>,
    scratch_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    w_hat_zero: f64,
}

impl fmt::Debug for PairPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairPotential")
            .field("kind", &self.kind)
            .field("grid", &self.grid)
            .field("w_hat_zero", &self.w_hat_zero)
            .finish()
    }
}

impl PairPotential {
    pub fn new(kind: PairKind, grid: GridSpec) -> Result<Self> {
        match &kind {
            PairKind::GaussianBump { amplitude, width } => {
                if !(*width > 0.0) || !amplitude.is_finite() {
                    return Err(Error::Config(format!(
                        "gaussian-bump needs width > 0 and finite amplitude (got a={amplitude}, σ={width})"
                    )));
                }
            }
            PairKind::GridDelta { strength } => {
                if grid.dim() != 1 {
                    return Err(Error::Config("grid-delta potential is only available in d = 1".into()));
                }
                if !strength.is_finite() {
                    return Err(Error::Config("grid-delta strength must be finite".into()));
                }
            }
            PairKind::Tabulated { .. } => {}
        }
        let m = grid.points();
        let span = 2 * m - 1;
        let d = grid.dim();
        let h = grid.spacing();
        let kernel_len = span.pow(d as u32);
        let mut kernel = vec![0.0; kernel_len];
        for (k, slot) in kernel.iter_mut().enumerate() {
            let (a, b) = if d == 1 { (k, m - 1) } else { (k / span, k % span) };
            let dx = (a as f64 - (m - 1) as f64) * h;
            let dy = (b as f64 - (m - 1) as f64) * h;
            *slot = kind.radial(dx.hypot(dy), &grid);
        }
        let w_hat_zero = kernel.iter().sum::<f64>() * grid.cell();

        let padded = 2 * m;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);
        let mut pot = PairPotential {
            kind,
            grid,
            kernel,
            padded,
            spectrum: Vec::new(),
            spectrum_t: Vec::new(),
            scratch_len: forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len()),
            forward,
            inverse,
            w_hat_zero,
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); padded.pow(d as u32)];
        for (k, w) in pot.kernel.iter().enumerate() {
            let (a, b) = if d == 1 { (k, m - 1) } else { (k / span, k % span) };
            let pa = (a + padded - (m - 1)) % padded;
            let pb = (b + padded - (m - 1)) % padded;
            let idx = if d == 1 { pa } else { pa * padded + pb };
            buf[idx] = Complex64::new(*w, 0.0);
        }
        pot.transform(&mut buf, false);
        if d == 2 {
            pot.spectrum_t = transposed(&buf, padded);
        }
        pot.spectrum = buf;
        Ok(pot)
    }

    pub fn kind(&self) -> &PairKind {
        &self.kind
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `ŵ(0)` as integrated by the grid: `Σ w(offset) Δx^d`.
    pub fn w_hat_zero(&self) -> f64 {
        self.w_hat_zero
    }

    /// Real part of `ŵ` on the dual grid (`Δx^d`-scaled DFT of the padded kernel).
    pub fn fourier(&self) -> Vec<f64> {
        let cell = self.grid.cell();
        self.spectrum.iter().map(|c| c.re * cell).collect()
    }

    pub fn min_fourier(&self) -> f64 {
        self.fourier().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `ŵ ≥ 0` up to `1e-10`.
    pub fn is_positive_type(&self) -> bool {
        self.min_fourier() >= -1e-10
    }

    /// `w(x_a - x_b)` for two flat grid indices.
    pub fn between(&self, a: usize, b: usize) -> f64 {
        let m = self.grid.points();
        let span = 2 * m - 1;
        let [ia, ja] = self.grid.unflatten(a);
        let [ib, jb] = self.grid.unflatten(b);
        let oa = ia + m - 1 - ib;
        if self.grid.dim() == 1 {
            self.kernel[oa]
        } else {
            self.kernel[oa * span + (ja + m - 1 - jb)]
        }
    }

    /// `(w ⋆ f)(x) = Σ_y w(x - y) f(y) Δx^d`.
    pub fn convolve(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.len(), "convolve: operand does not live on the grid");
        let m = self.grid.points();
        let p = self.padded;
        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![zero; self.scratch_len];
        if self.grid.dim() == 1 {
            let norm = self.grid.cell() / p as f64;
            let mut buf = vec![zero; p];
            buf.iter_mut().zip(f).for_each(|(b, v)| b.re = *v);
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            buf.iter_mut().zip(&self.spectrum).for_each(|(b, s)| *b *= s);
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            return buf[..m].iter().map(|b| b.re * norm).collect();
        }
        // rows beyond m are zero padding going in and discarded coming out,
        // so the row passes touch only the first m rows
        let norm = self.grid.cell() / (p * p) as f64;
        let mut buf = vec![zero; p * p];
        for (row, src) in buf.chunks_mut(p).zip(f.chunks(m)) {
            row.iter_mut().zip(src).for_each(|(b, v)| b.re = *v);
        }
        self.forward.process_with_scratch(&mut buf[..m * p], &mut scratch);
        let mut cols = vec![zero; p * p];
        for r in 0..m {
            for c in 0..p {
                cols[c * p + r] = buf[r * p + c];
            }
        }
        self.forward.process_with_scratch(&mut cols, &mut scratch);
        cols.iter_mut().zip(&self.spectrum_t).for_each(|(b, s)| *b *= s);
        self.inverse.process_with_scratch(&mut cols, &mut scratch);
        for r in 0..m {
            for c in 0..p {
                buf[r * p + c] = cols[c * p + r];
            }
        }
        self.inverse.process_with_scratch(&mut buf[..m * p], &mut scratch);
        buf.chunks(p).take(m).flat_map(|row| row[..m].iter().map(|b| b.re * norm)).collect()
    }

    /// `Σ_x f(x) (w ⋆ g)(x) Δx^d`.
    pub fn pair_energy(&self, f: &[f64], g: &[f64]) -> f64 {
        let wg = self.convolve(g);
        f.iter().zip(&wg).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell()
    }

    /// O(N²) evaluation of `pair_energy` used as an independent check.
    pub fn pair_energy_direct(&self, f: &[f64], g: &[f64]) -> f64 {
        let n = self.grid.len();
        let mut acc = 0.0;
        for x in 0..n {
            if f[x] == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for y in 0..n {
                inner += self.between(x, y) * g[y];
            }
            acc += f[x] * inner;
        }
        acc * self.grid.cell() * self.grid.cell()
    }

    /// Grid versions of `∫ŵ(k)(1+|k|^{1/2}) dk` and `∫|w| V²`, and whether both
    /// are finite with `ŵ ≥ 0`.
    pub fn regularity(&self, trap_values: &[f64]) -> Regularity {
        let d = self.grid.dim();
        let p = self.padded;
        let dk = 2.0 * std::f64::consts::PI / (p as f64 * self.grid.spacing());
        let fourier = self.fourier();
        let mut fourier_weight = 0.0;
        for (idx, w) in fourier.iter().enumerate() {
            let (a, b) = if d == 1 { (idx, 0) } else { (idx / p, idx % p) };
            let wrap = |i: usize| if i < p / 2 { i as f64 } else { i as f64 - p as f64 };
            let k = (wrap(a) * dk).hypot(if d == 1 { 0.0 } else { wrap(b) * dk });
            fourier_weight += w * (1.0 + k.sqrt());
        }
        fourier_weight *= dk.powi(d as i32);
        let mut potential_moment = 0.0;
        let m = self.grid.points();
        let span = 2 * m - 1;
        for (k, w) in self.kernel.iter().enumerate() {
            // V evaluated at the offset vector when it lands on the grid
            let (a, b) = if d == 1 { (k, m - 1) } else { (k / span, k % span) };
            let ia = a as isize - (m as isize - 1) + (m as isize - 1) / 2;
            let ib = b as isize - (m as isize - 1) + (m as isize - 1) / 2;
            let inside = |i: isize| i >= 0 && (i as usize) < m;
            if inside(ia) && (d == 1 || inside(ib)) {
                let idx = if d == 1 { ia as usize } else { ia as usize * m + ib as usize };
                potential_moment += w.abs() * trap_values[idx].powi(2);
            }
        }
        potential_moment *= self.grid.cell();
        let positive = self.is_positive_type();
        Regularity {
            fourier_weight,
            potential_moment,
            positive,
            passes: positive && fourier_weight.is_finite() && potential_moment.is_finite(),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let p = self.padded;
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(buf, &mut scratch);
        if self.grid.dim() == 1 {
            return;
        }
        let mut cols = transposed(buf, p);
        plan.process_with_scratch(&mut cols, &mut scratch);
        buf.copy_from_slice(&transposed(&cols, p));
    }
}

fn transposed(buf: &[Complex64], p: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); p * p];
    for r in 0..p {
        for c in 0..p {
            out[c * p + r] = buf[r * p + c];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regularity {
    pub fourier_weight: f64,
    pub potential_moment: f64,
    pub positive: bool,
    pub passes: bool,
}
