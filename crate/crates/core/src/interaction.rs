//! Interaction functionals on field samples and their exact Gaussian means.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{density_on_grid, FieldSample};
use crate::linalg;
use crate::potential::PairPotential;
use crate::spectral::{check_cutoff, counterterm_density, OneBodyOperator};

/// Largest cutoff for which the dense four-index tensor is built.
pub const MAX_TENSOR_MODES: usize = 12;

/// `D[|u|²] = ½ ∬ |u(x)|² w(x-y) |u(y)|²`.
pub fn bare_interaction(sample: &FieldSample, op: &OneBodyOperator, w: &PairPotential) -> f64 {
    if sample.coeffs.iter().all(|a| a.norm_sqr() == 0.0) {
        return 0.0;
    }
    let rho = density_on_grid(sample, op);
    0.5 * w.pair_energy(&rho, &rho)
}

/// Wick-ordered `D^R_K` with the counterterm `ρ_K` recomputed from `op`.
pub fn renormalized_interaction(
    sample: &FieldSample,
    op: &OneBodyOperator,
    w: &PairPotential,
    cutoff: usize,
) -> Result<f64> {
    check_sample_cutoff(sample, cutoff)?;
    let counterterm = counterterm_density(op, cutoff)?;
    renormalized_with(sample, op, w, &counterterm)
}

/// `D^R_K` for a precomputed counterterm `ρ_K`.
pub fn renormalized_with(
    sample: &FieldSample,
    op: &OneBodyOperator,
    w: &PairPotential,
    counterterm: &[f64],
) -> Result<f64> {
    if counterterm.len() != op.grid().len() {
        return Err(Error::Usage("counterterm does not live on the operator's grid".into()));
    }
    let mut rho = density_on_grid(sample, op);
    rho.iter_mut().zip(counterterm).for_each(|(r, c)| *r -= c);
    Ok(0.5 * w.pair_energy(&rho, &rho))
}

/// Checks that a sample was drawn at cutoff `K`.
pub fn check_sample_cutoff(sample: &FieldSample, cutoff: usize) -> Result<()> {
    if sample.cutoff() != cutoff {
        return Err(Error::Usage(format!(
            "sample has cutoff {} but the counterterm was built for K = {cutoff}",
            sample.cutoff()
        )));
    }
    Ok(())
}

/// Interaction energies of a sample batch, in input order.
#[derive(Debug, Clone)]
pub struct BatchEvaluator<'a> {
    op: &'a OneBodyOperator,
    w: &'a PairPotential,
    cutoff: usize,
    counterterm: Vec<f64>,
}

impl<'a> BatchEvaluator<'a> {
    pub fn new(op: &'a OneBodyOperator, w: &'a PairPotential, cutoff: usize) -> Result<Self> {
        Ok(BatchEvaluator { op, w, cutoff, counterterm: counterterm_density(op, cutoff)? })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn bare(&self, samples: &[FieldSample]) -> Vec<f64> {
        samples.par_iter().map(|s| bare_interaction(s, self.op, self.w)).collect()
    }

    pub fn renormalized(&self, samples: &[FieldSample]) -> Result<Vec<f64>> {
        for s in samples {
            check_sample_cutoff(s, self.cutoff)?;
        }
        samples
            .par_iter()
            .map(|s| renormalized_with(s, self.op, self.w, &self.counterterm))
            .collect()
    }
}

/// Bare and Wick-ordered energies of one sample at several nested cutoffs.
///
/// Uses `D^R_K = D_K - ⟨w⋆ρ_K, |P_K u|²⟩ + ½⟨ρ_K, w⋆ρ_K⟩`, so each cutoff costs
/// one convolution, and synthesizes all fields in a single pass over the modes.
#[derive(Debug, Clone)]
pub struct CutoffLadder<'a> {
    op: &'a OneBodyOperator,
    w: &'a PairPotential,
    cutoffs: Vec<usize>,
    smeared: Vec<Vec<f64>>,
    constants: Vec<f64>,
}

impl<'a> CutoffLadder<'a> {
    pub fn new(op: &'a OneBodyOperator, w: &'a PairPotential, cutoffs: &[usize]) -> Result<Self> {
        if cutoffs.is_empty() || cutoffs.windows(2).any(|c| c[1] <= c[0]) {
            return Err(Error::Config("cutoff ladder must be nonempty and strictly increasing".into()));
        }
        let mut smeared = Vec::new();
        let mut constants = Vec::new();
        for &k in cutoffs {
            let rho = counterterm_density(op, k)?;
            let wr = w.convolve(&rho);
            constants.push(0.5 * rho.iter().zip(&wr).map(|(a, b)| a * b).sum::<f64>() * op.grid().cell());
            smeared.push(wr);
        }
        Ok(CutoffLadder { op, w, cutoffs: cutoffs.to_vec(), smeared, constants })
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    /// `[D_K, D^R_K]` for every cutoff; the sample must reach the largest one.
    pub fn evaluate(&self, sample: &FieldSample) -> Result<Vec<[f64; 2]>> {
        let top = *self.cutoffs.last().expect("nonempty ladder");
        if sample.cutoff() < top {
            return Err(Error::Usage(format!("sample has cutoff {} but the ladder reaches K = {top}", sample.cutoff())));
        }
        let cell = self.op.grid().cell();
        let scale = 1.0 / cell.sqrt();
        let mut field = vec![num_complex::Complex64::new(0.0, 0.0); self.op.grid().len()];
        let mut out = Vec::with_capacity(self.cutoffs.len());
        let mut done = 0;
        for (step, &k) in self.cutoffs.iter().enumerate() {
            for j in done..k {
                let a = sample.coeffs[j] * scale;
                field.iter_mut().zip(self.op.mode(j)).for_each(|(x, m)| *x += a * m);
            }
            done = k;
            let rho: Vec<f64> = field.iter().map(|z| z.norm_sqr()).collect();
            let bare = 0.5 * self.w.pair_energy(&rho, &rho);
            let cross: f64 = rho.iter().zip(&self.smeared[step]).map(|(a, b)| a * b).sum::<f64>() * cell;
            out.push([bare, bare - cross + self.constants[step]]);
        }
        Ok(out)
    }

    /// `evaluate` over a batch, in input order.
    pub fn evaluate_batch(&self, samples: &[FieldSample]) -> Result<Vec<Vec<[f64; 2]>>> {
        samples.par_iter().map(|s| self.evaluate(s)).collect()
    }
}

fn products(op: &OneBodyOperator, cutoff: usize) -> Vec<Vec<Vec<f64>>> {
    let values: Vec<Vec<f64>> = (0..cutoff).map(|j| op.mode_values(j)).collect();
    (0..cutoff)
        .map(|i| {
            (0..=i)
                .map(|j| values[i].iter().zip(&values[j]).map(|(a, b)| a * b).collect())
                .collect()
        })
        .collect()
}

/// `½ ∬ |G_K(x,y)|² w(x-y)`, one convolution per mode pair.
pub fn exchange_term(op: &OneBodyOperator, w: &PairPotential, cutoff: usize) -> Result<f64> {
    check_cutoff(op, cutoff)?;
    let lam = op.eigenvalues();
    let prods = products(op, cutoff);
    let pairs: Vec<(usize, usize)> = (0..cutoff).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let terms: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let f = &prods[i][j];
            let mult = if i == j { 1.0 } else { 2.0 };
            mult * w.pair_energy(f, f) / (lam[i] * lam[j])
        })
        .collect();
    Ok(0.5 * terms.iter().sum::<f64>())
}

/// Exchange term from the dense Green kernel, `O(N²)`; an independent check.
pub fn exchange_term_dense(op: &OneBodyOperator, w: &PairPotential, cutoff: usize) -> Result<f64> {
    let g = op.green_kernel(cutoff)?;
    let n = g.size();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let v = g.at(x, y);
            acc += v * v * w.between(x, y);
        }
    }
    let cell = op.grid().cell();
    Ok(0.5 * acc * cell * cell)
}

/// `½ ∬ ρ_K(x) w(x-y) ρ_K(y)`.
pub fn direct_term(op: &OneBodyOperator, w: &PairPotential, cutoff: usize) -> Result<f64> {
    let rho = counterterm_density(op, cutoff)?;
    Ok(0.5 * w.pair_energy(&rho, &rho))
}

/// Exact `μ_{0,K}` mean of the bare interaction: direct plus exchange.
pub fn wick_expectation_bare(op: &OneBodyOperator, w: &PairPotential, cutoff: usize) -> Result<f64> {
    Ok(direct_term(op, w, cutoff)? + exchange_term(op, w, cutoff)?)
}

/// `⟨u, h u⟩ + g D[|u|²]` with the unshifted `h`.
pub fn mf_energy(sample: &FieldSample, op: &OneBodyOperator, w: &PairPotential, coupling: f64) -> f64 {
    let bare = op.bare_eigenvalues();
    let kinetic: f64 = sample.coeffs.iter().zip(&bare).map(|(a, l)| l * a.norm_sqr()).sum();
    if coupling == 0.0 {
        return kinetic;
    }
    kinetic + coupling * bare_interaction(sample, op, w)
}

/// Dense `W_{ijkl} = ∬ u_i(x) u_j(y) w(x-y) u_l(x) u_k(y)` for real modes.
#[derive(Debug, Clone)]
pub struct PairTensor {
    cutoff: usize,
    values: Vec<f64>,
    /// largest deviation removed by symmetrization
    pub symmetry_defect: f64,
}

impl PairTensor {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.cutoff;
        self.values[((i * n + j) * n + k) * n + l]
    }

    /// Tensor from explicit values, index order `((i K + j) K + k) K + l`.
    pub fn from_values(cutoff: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != cutoff.pow(4) {
            return Err(Error::Usage(format!("pair tensor needs {} values, got {}", cutoff.pow(4), values.len())));
        }
        Ok(PairTensor { cutoff, values, symmetry_defect: 0.0 })
    }

    /// Smallest eigenvalue of the matrix `M_{(il),(jk)} = W_{ijkl}`.
    pub fn min_pair_eigenvalue(&self) -> Result<f64> {
        let n = self.cutoff;
        let m = Mat::from_fn(n * n, n * n, |r, c| {
            let (i, l) = (r / n, r % n);
            let (j, k) = (c / n, c % n);
            self.get(i, j, k, l)
        });
        Ok(linalg::symmetric_eigenvalues(&m)?[0])
    }

    /// Largest violation of `W_{ijkl} = W_{jilk}` and `W_{ijkl} = W_{lkji}`.
    pub fn symmetry_violation(&self) -> f64 {
        let n = self.cutoff;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        worst = worst.max((v - self.get(j, i, l, k)).abs());
                        worst = worst.max((v - self.get(l, k, j, i)).abs());
                    }
                }
            }
        }
        worst
    }
}

pub fn build_pair_tensor(op: &OneBodyOperator, w: &PairPotential, cutoff: usize) -> Result<PairTensor> {
    check_cutoff(op, cutoff)?;
    if cutoff > MAX_TENSOR_MODES {
        return Err(Error::Config(format!(
            "pair tensor requested for K = {cutoff}; at most {MAX_TENSOR_MODES} modes are supported"
        )));
    }
    let n = cutoff;
    let prods = products(op, n);
    let prod = |a: usize, b: usize| if a >= b { &prods[a][b] } else { &prods[b][a] };
    let cell = op.grid().cell();
    let convs: Vec<Vec<f64>> = (0..n * n).into_par_iter().map(|r| w.convolve(prod(r / n, r % n))).collect();
    let mut raw = vec![0.0; n.pow(4)];
    for i in 0..n {
        for l in 0..n {
            let f = prod(i, l);
            for j in 0..n {
                for k in 0..n {
                    let g = &convs[j * n + k];
                    let v: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * cell;
                    raw[((i * n + j) * n + k) * n + l] = v;
                }
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut values = vec![0.0; n.pow(4)];
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut images = [raw[idx(i, j, k, l)], raw[idx(j, i, l, k)], raw[idx(l, k, j, i)], raw[idx(k, l, i, j)]];
                    // sorted so every member of an orbit gets the bitwise same mean
                    images.sort_by(f64::total_cmp);
                    let mean = images.iter().sum::<f64>() / 4.0;
                    defect = images.iter().fold(defect, |d, v| d.max((v - mean).abs()));
                    values[idx(i, j, k, l)] = mean;
                }
            }
        }
    }
    Ok(PairTensor { cutoff, values, symmetry_defect: defect })
}

/// Direct and exchange terms contracted from the tensor.
pub fn tensor_direct_exchange(tensor: &PairTensor, eigenvalues: &[f64]) -> (f64, f64) {
    let n = tensor.cutoff();
    let (mut direct, mut exchange) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let inv = 1.0 / (eigenvalues[i] * eigenvalues[j]);
            direct += tensor.get(i, j, j, i) * inv;
            exchange += tensor.get(i, i, j, j) * inv;
        }
    }
    (0.5 * direct, 0.5 * exchange)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PairKind;
    use crate::spectral::{GridSpec, Trap};
    use num_complex::Complex64;

    fn model_1d() -> (OneBodyOperator, PairPotential) {
        let grid = GridSpec::new(1, 6.0, 120).unwrap();
        let op = OneBodyOperator::build(grid, Trap::power(4.0).unwrap(), 10).unwrap();
        let w = PairPotential::new(PairKind::GaussianBump { amplitude: 1.0, width: 0.5 }, grid).unwrap();
        (op, w)
    }

    fn model_2d() -> (OneBodyOperator, PairPotential) {
        let grid = GridSpec::new(2, 4.0, 14).unwrap();
        let op = OneBodyOperator::build(grid, Trap::power(2.0).unwrap(), 8).unwrap();
        let w = PairPotential::new(PairKind::GaussianBump { amplitude: 1.0, width: 0.5 }, grid).unwrap();
        (op, w)
    }

    fn single_mode_w1(op: &OneBodyOperator, w: &PairPotential) -> f64 {
        let u = op.mode_values(0);
        let rho: Vec<f64> = u.iter().map(|x| x * x).collect();
        w.pair_energy_direct(&rho, &rho)
    }

    #[test]
    fn bare_basics() {
        let (op, w) = model_1d();
        assert_eq!(bare_interaction(&FieldSample::from_real(&[0.0; 3]), &op, &w), 0.0);
        let s = FieldSample::new(vec![Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.5)]);
        let d = bare_interaction(&s, &op, &w);
        let s2 = FieldSample::new(s.coeffs.iter().map(|a| a * 2.0).collect());
        assert!((bare_interaction(&s2, &op, &w) - 16.0 * d).abs() < 1e-12 * d);
        let phase = Complex64::from_polar(1.0, 0.7);
        let s3 = FieldSample::new(s.coeffs.iter().map(|a| a * phase).collect());
        assert!((bare_interaction(&s3, &op, &w) - d).abs() < 1e-13 * d);
    }

    #[test]
    fn grid_delta_gives_quartic_integral() {
        let grid = GridSpec::new(1, 6.0, 120).unwrap();
        let op = OneBodyOperator::build(grid, Trap::power(4.0).unwrap(), 3).unwrap();
        let w = PairPotential::new(PairKind::GridDelta { strength: 1.0 }, grid).unwrap();
        let u = op.mode_values(0);
        let oracle = 0.5 * u.iter().map(|x| x.powi(4)).sum::<f64>() * grid.cell();
        let got = bare_interaction(&FieldSample::from_real(&[1.0]), &op, &w);
        assert!((got - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn single_mode_closed_forms() {
        let (op, w) = model_1d();
        let w1 = single_mode_w1(&op, &w);
        let lam = op.eigenvalues()[0];
        for a in [0.0, 0.4, 1.3] {
            let s = FieldSample::from_real(&[a]);
            let got = renormalized_interaction(&s, &op, &w, 1).unwrap();
            let want = 0.5 * (a * a - 1.0 / lam).powi(2) * w1;
            assert!((got - want).abs() < 1e-12 * w1, "{got} vs {want}");
        }
        let centred = FieldSample::from_real(&[1.0 / lam.sqrt()]);
        assert!(renormalized_interaction(&centred, &op, &w, 1).unwrap().abs() < 1e-14 * w1);
        let ex = exchange_term(&op, &w, 1).unwrap();
        let di = direct_term(&op, &w, 1).unwrap();
        assert!((ex - 0.5 * w1 / (lam * lam)).abs() < 1e-12 * ex);
        assert!((di - ex).abs() < 1e-12 * ex);
    }

    #[test]
    fn exchange_paths_agree() {
        for (op, w) in [model_1d(), model_2d()] {
            for k in [1, 3, 6] {
                let fast = exchange_term(&op, &w, k).unwrap();
                let dense = exchange_term_dense(&op, &w, k).unwrap();
                let t = build_pair_tensor(&op, &w, k).unwrap();
                let (direct, exchange) = tensor_direct_exchange(&t, op.eigenvalues());
                assert!((fast - dense).abs() < 1e-10 * fast);
                assert!((fast - exchange).abs() < 1e-10 * fast);
                let d = direct_term(&op, &w, k).unwrap();
                assert!((d - direct).abs() < 1e-10 * d);
            }
        }
    }

    #[test]
    fn tensor_symmetries_and_positivity() {
        let (op, w) = model_2d();
        let t = build_pair_tensor(&op, &w, 5).unwrap();
        assert!(t.symmetry_defect < 1e-12);
        assert!(t.symmetry_violation() == 0.0);
        assert!(t.min_pair_eigenvalue().unwrap() > -1e-10);
        let s = FieldSample::from_real(&[1.0]);
        assert!((t.get(0, 0, 0, 0) - 2.0 * bare_interaction(&s, &op, &w)).abs() < 1e-12);
        assert!(matches!(build_pair_tensor(&op, &w, 13), Err(_)));
    }

    #[test]
    fn constant_potential_factorizes() {
        let grid = GridSpec::new(1, 1.0, 40).unwrap();
        let op = OneBodyOperator::build(grid, Trap::Box, 4).unwrap();
        let w = PairPotential::new(PairKind::GaussianBump { amplitude: 2.0, width: 1e4 }, grid).unwrap();
        let t = build_pair_tensor(&op, &w, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let want = if i == l && j == k { 2.0 } else { 0.0 };
                        assert!((t.get(i, j, k, l) - want).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn mean_field_energy() {
        let (op, w) = model_1d();
        let e1 = FieldSample::from_real(&[1.0]);
        let lam = op.bare_eigenvalues()[0];
        assert!((mf_energy(&e1, &op, &w, 0.0) - lam).abs() < 1e-14);
        let want = lam + 0.5 * single_mode_w1(&op, &w);
        assert!((mf_energy(&e1, &op, &w, 1.0) - want).abs() < 1e-12);
        assert_eq!(mf_energy(&FieldSample::from_real(&[0.0, 0.0]), &op, &w, 1.0), 0.0);
    }

    #[test]
    fn ladder_matches_single_evaluations() {
        let (op, w) = model_2d();
        let ladder = CutoffLadder::new(&op, &w, &[2, 5, 8]).unwrap();
        let s = FieldSample::new((0..8).map(|j| Complex64::new(0.3 - 0.05 * j as f64, 0.1 * j as f64)).collect());
        let got = ladder.evaluate(&s).unwrap();
        for (row, k) in got.iter().zip([2, 5, 8]) {
            let t = s.truncated(k);
            let bare = bare_interaction(&t, &op, &w);
            let ren = renormalized_interaction(&t, &op, &w, k).unwrap();
            assert!((row[0] - bare).abs() < 1e-12 * bare);
            assert!((row[1] - ren).abs() < 1e-11 * bare.max(ren));
        }
        assert!(ladder.evaluate(&s.truncated(5)).is_err());
        assert!(CutoffLadder::new(&op, &w, &[4, 4]).is_err());
    }

    #[test]
    fn batch_rejects_wrong_cutoff() {
        let (op, w) = model_1d();
        let eval = BatchEvaluator::new(&op, &w, 3).unwrap();
        let bad = vec![FieldSample::from_real(&[1.0, 0.0])];
        assert!(matches!(eval.renormalized(&bad), Err(Error::Usage(_))));
    }
}
