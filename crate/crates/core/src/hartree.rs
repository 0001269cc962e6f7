//! Counterterm chemical potential and the reduced Hartree (rHF) fixed point.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::potential::PairPotential;
use crate::spectral::{GridSpec, OneBodyOperator};

/// Convention for the momentum integral in the counterterm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumMeasure {
    /// `dk / (2π)^d`, the density of a free gas with L²-normalized modes
    Physical,
    /// plain `dk`
    Unit,
}

impl MomentumMeasure {
    pub fn factor(self, dim: usize) -> f64 {
        match self {
            MomentumMeasure::Physical => (2.0 * std::f64::consts::PI).powi(-(dim as i32)),
            MomentumMeasure::Unit => 1.0,
        }
    }
}

/// `ϱ₀^κ = ∫_{ℝ^d} dk / (e^{(|k|²+κ)/T} - 1)` (plain `dk`).
pub fn rho0_kappa(temperature: f64, kappa: f64, dim: usize) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("κ must be positive (got {kappa})")));
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive (got {temperature})")));
    }
    match dim {
        2 => Ok(std::f64::consts::PI * temperature * -(-(-kappa / temperature).exp()).ln_1p()),
        1 => {
            // integrand is negligible once (k² + κ)/T > 60
            let reach = (60.0 * temperature).sqrt().max(1.0);
            let f = |k: f64| 1.0 / ((k * k + kappa) / temperature).exp_m1();
            let pieces = 16;
            let step = reach / pieces as f64;
            let total: f64 = (0..pieces)
                .map(|i| quadrature::double_exponential::integrate(f, i as f64 * step, (i + 1) as f64 * step, 1e-14).integral)
                .sum();
            Ok(2.0 * total)
        }
        _ => Err(Error::Domain(format!("ϱ₀^κ is available for d = 1, 2 (got {dim})"))),
    }
}

/// `ν = λ ŵ(0) m ϱ₀^κ(T) - κ` with `m` the momentum-measure factor.
pub fn chemical_potential(
    temperature: f64,
    coupling: f64,
    kappa: f64,
    w: &PairPotential,
    measure: MomentumMeasure,
) -> Result<f64> {
    let dim = w.grid().dim();
    let rho0 = rho0_kappa(temperature, kappa, dim)?;
    Ok(coupling * w.w_hat_zero() * measure.factor(dim) * rho0 - kappa)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhfSettings {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// eigenpairs kept on the returned state
    pub keep_modes: usize,
}

impl Default for RhfSettings {
    fn default() -> Self {
        RhfSettings { damping: 0.3, tolerance: 1e-8, max_iter: 500, keep_modes: 64 }
    }
}

/// Self-consistent quasi-free state of `-Δ + V_T`.
#[derive(Debug, Clone)]
pub struct RhfState {
    /// `V_T` on the grid
    pub potential: Vec<f64>,
    /// full spectrum `ε_j` of `-Δ + V_T`
    pub energies: Vec<f64>,
    /// `1 / (e^{ε_j/T} - 1)`
    pub occupations: Vec<f64>,
    /// weighted eigenvectors for the lowest `keep_modes` levels
    pub modes: Vec<Vec<f64>>,
    /// `ρ(x) = Σ_j |ψ_j(x)|² / (e^{ε_j/T} - 1)`
    pub density: Vec<f64>,
    pub free_energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub temperature: f64,
}

struct Evaluated {
    op: OneBodyOperator,
    occupations: Vec<f64>,
    density: Vec<f64>,
    free_energy: f64,
}

/// Quasi-free state generated by `-Δ + U` and its rHF free energy.
fn evaluate(
    grid: &GridSpec,
    trap: &[f64],
    u: &[f64],
    w: &PairPotential,
    temperature: f64,
    coupling: f64,
    nu: f64,
) -> Result<Evaluated> {
    let op = OneBodyOperator::from_potential(*grid, u.to_vec(), grid.len())?;
    let eps = op.eigenvalues();
    if eps[0] <= 0.0 {
        return Err(Error::Numerical(format!(
            "chemical potential too large: effective gap closed (ε_1 = {:.6e})",
            eps[0]
        )));
    }
    let occupations: Vec<f64> = eps.iter().map(|e| 1.0 / (e / temperature).exp_m1()).collect();
    let inv_cell = 1.0 / grid.cell();
    let mut density = vec![0.0; grid.len()];
    for (j, g) in occupations.iter().enumerate() {
        let c = g * inv_cell;
        density.iter_mut().zip(op.mode(j)).for_each(|(r, m)| *r += c * m * m);
    }
    // Tr[(-Δ + V - ν) γ] = Σ g ε - ∫ (U - V + ν) ρ
    let band: f64 = occupations.iter().zip(eps).map(|(g, e)| g * e).sum();
    let correction: f64 =
        u.iter().zip(trap).zip(&density).map(|((u, v), r)| (u - v + nu) * r).sum::<f64>() * grid.cell();
    let interaction = if coupling == 0.0 { 0.0 } else { 0.5 * coupling * w.pair_energy(&density, &density) };
    let entropy: f64 = occupations.iter().map(|g| (1.0 + g) * g.ln_1p() - if *g > 0.0 { g * g.ln() } else { 0.0 }).sum();
    let free_energy = band - correction + interaction - temperature * entropy;
    Ok(Evaluated { op, occupations, density, free_energy })
}

fn fixed_point_map(trap: &[f64], w: &PairPotential, density: &[f64], coupling: f64, nu: f64) -> Vec<f64> {
    if coupling == 0.0 {
        return trap.iter().map(|v| v - nu).collect();
    }
    let conv = w.convolve(density);
    trap.iter().zip(&conv).map(|(v, c)| v - nu + coupling * c).collect()
}

fn residual(a: &[f64], b: &[f64], trap: &[f64]) -> f64 {
    a.iter().zip(b).zip(trap).map(|((x, y), v)| (x - y).abs() / (1.0 + v.abs())).fold(0.0, f64::max)
}

/// Damped self-consistent iteration `U ← (1-θ) U + θ (V - ν + λ w⋆ρ[U])`,
/// halving `θ` whenever the rHF free energy would increase.
pub fn solve_rhf(
    grid: &GridSpec,
    trap: &[f64],
    w: &PairPotential,
    temperature: f64,
    coupling: f64,
    nu: f64,
    settings: RhfSettings,
) -> Result<RhfState> {
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(Error::Config(format!("damping θ must lie in (0, 1] (got {})", settings.damping)));
    }
    if !(settings.tolerance > 0.0) {
        return Err(Error::Config("rHF tolerance must be positive".into()));
    }
    let mut u: Vec<f64> = trap.iter().map(|v| v - nu).collect();
    let mut current = evaluate(grid, trap, &u, w, temperature, coupling, nu)?;
    let mut iterations = 0;
    let mut res;
    loop {
        let target = fixed_point_map(trap, w, &current.density, coupling, nu);
        res = residual(&target, &u, trap);
        if res < settings.tolerance || iterations >= settings.max_iter {
            break;
        }
        iterations += 1;
        let mut theta = settings.damping;
        loop {
            let trial: Vec<f64> = u.iter().zip(&target).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
            let next = match evaluate(grid, trap, &trial, w, temperature, coupling, nu) {
                Ok(e) => Some(e),
                Err(Error::Numerical(msg)) if theta > 1e-3 => {
                    log::debug!("rHF step rejected: {msg}");
                    None
                }
                Err(e) => return Err(e),
            };
            if let Some(next) = next {
                let slack = 1e-12 * current.free_energy.abs().max(1.0);
                if next.free_energy <= current.free_energy + slack || theta <= 1e-3 {
                    u = trial;
                    current = next;
                    break;
                }
            }
            theta *= 0.5;
        }
    }
    let converged = res < settings.tolerance;
    if !converged {
        log::warn!("rHF iteration stopped after {iterations} steps with residual {res:.3e}");
    }
    let keep = settings.keep_modes.min(grid.len());
    Ok(RhfState {
        modes: (0..keep).map(|j| current.op.mode(j).to_vec()).collect(),
        energies: current.op.eigenvalues().to_vec(),
        occupations: current.occupations,
        density: current.density,
        free_energy: current.free_energy,
        potential: u,
        residual: res,
        iterations,
        converged,
        temperature,
    })
}

/// Re-applies the fixed-point map to a returned state.
pub fn post_hoc_residual(
    state: &RhfState,
    grid: &GridSpec,
    trap: &[f64],
    w: &PairPotential,
    coupling: f64,
    nu: f64,
) -> Result<f64> {
    let e = evaluate(grid, trap, &state.potential, w, state.temperature, coupling, nu)?;
    Ok(residual(&fixed_point_map(trap, w, &e.density, coupling, nu), &state.potential, trap))
}

/// rHF free energy of the quasi-free state generated by an arbitrary `-Δ + U`.
pub fn rhf_free_energy_at(
    grid: &GridSpec,
    trap: &[f64],
    u: &[f64],
    w: &PairPotential,
    temperature: f64,
    coupling: f64,
    nu: f64,
) -> Result<f64> {
    Ok(evaluate(grid, trap, u, w, temperature, coupling, nu)?.free_energy)
}

/// `E₀ = (λ/2) ∬ ρ(x) w(x-y) ρ(y)`.
pub fn reference_energy(state: &RhfState, w: &PairPotential, coupling: f64) -> f64 {
    if coupling == 0.0 {
        return 0.0;
    }
    0.5 * coupling * w.pair_energy(&state.density, &state.density)
}

/// `Tr |A⁻¹ - B⁻¹|^p` with each inverse truncated to its lowest `cutoff` modes.
pub fn schatten_inverse_distance(a: &RhfState, b: &RhfState, cutoff: usize, p: f64) -> Result<f64> {
    if cutoff > a.modes.len() || cutoff > b.modes.len() {
        return Err(Error::Usage(format!("only {} eigenpairs were kept", a.modes.len().min(b.modes.len()))));
    }
    let n = a.modes[0].len();
    let mut diff = Mat::<f64>::zeros(n, n);
    for (state, sign) in [(a, 1.0), (b, -1.0)] {
        for j in 0..cutoff {
            let m = &state.modes[j];
            let s = sign / state.energies[j];
            for r in 0..n {
                let mr = m[r] * s;
                if mr == 0.0 {
                    continue;
                }
                for c in 0..n {
                    diff[(r, c)] += mr * m[c];
                }
            }
        }
    }
    Ok(linalg::symmetric_eigenvalues(&diff)?.iter().map(|x| x.abs().powf(p)).sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationRow {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub lambda: f64,
    pub nu: f64,
    pub iterations: usize,
    pub residual: f64,
    #[serde(rename = "F_rH")]
    pub free_energy: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub delta_inf: f64,
    pub schatten_p_dist: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stabilization {
    pub rows: Vec<StabilizationRow>,
    pub kappa: f64,
    pub schatten_p: f64,
    pub shared_modes: usize,
    /// every rHF solve reached the tolerance
    pub converged: bool,
    /// `δ_∞` decreases at every step before the anchor
    pub delta_decreasing: bool,
    pub schatten_decreasing: bool,
    /// `V/2 ≤ V_proxy - κ ≤ 3V/2` wherever `V > 1`
    pub sandwich_holds: bool,
    /// extreme ratios `(V_proxy - κ)/V` over the region `V > 1`
    pub sandwich_range: [f64; 2],
    /// `V_T` for every schedule point
    #[serde(skip)]
    pub potentials: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct StabilizationSettings {
    pub kappa: f64,
    /// `λ = coupling_constant / T`
    pub coupling_constant: f64,
    pub measure: MomentumMeasure,
    pub shared_modes: usize,
    pub schatten_p: f64,
    pub rhf: RhfSettings,
}

/// rHF solves along a temperature schedule, compared against the largest-T solution.
pub fn counterterm_stabilization(
    grid: &GridSpec,
    trap: &[f64],
    w: &PairPotential,
    schedule: &[f64],
    settings: StabilizationSettings,
) -> Result<Stabilization> {
    if schedule.len() < 2 || schedule.windows(2).any(|t| t[1] <= t[0]) {
        return Err(Error::Config("hartree T schedule must have two or more strictly increasing entries".into()));
    }
    let mut rhf = settings.rhf;
    rhf.keep_modes = rhf.keep_modes.max(settings.shared_modes);
    let solved: Vec<(f64, f64, RhfState)> = schedule
        .par_iter()
        .map(|&t| -> Result<(f64, f64, RhfState)> {
            let lambda = settings.coupling_constant / t;
            let nu = chemical_potential(t, lambda, settings.kappa, w, settings.measure)?;
            Ok((lambda, nu, solve_rhf(grid, trap, w, t, lambda, nu, rhf)?))
        })
        .collect::<Result<_>>()?;
    let proxy = &solved.last().expect("nonempty schedule").2;
    let mut rows = Vec::with_capacity(solved.len());
    for (t, (lambda, nu, state)) in schedule.iter().zip(&solved) {
        let delta = residual(&state.potential, &proxy.potential, trap);
        let dist = schatten_inverse_distance(state, proxy, settings.shared_modes, settings.schatten_p)?;
        rows.push(StabilizationRow {
            temperature: *t,
            lambda: *lambda,
            nu: *nu,
            iterations: state.iterations,
            residual: state.residual,
            free_energy: state.free_energy,
            e0: reference_energy(state, w, *lambda),
            delta_inf: delta,
            schatten_p_dist: dist,
        });
    }
    let trend = |f: fn(&StabilizationRow) -> f64| {
        let body = &rows[..rows.len() - 1];
        body.windows(2).all(|r| f(&r[1]) < f(&r[0]))
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, vp) in trap.iter().zip(&proxy.potential) {
        if *v > 1.0 {
            let ratio = (vp - settings.kappa) / v;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok(Stabilization {
        converged: solved.iter().all(|s| s.2.converged),
        delta_decreasing: trend(|r| r.delta_inf),
        schatten_decreasing: trend(|r| r.schatten_p_dist),
        sandwich_holds: lo >= 0.5 && hi <= 1.5,
        sandwich_range: [lo, hi],
        potentials: solved.into_iter().map(|s| s.2.potential).collect(),
        rows,
        kappa: settings.kappa,
        schatten_p: settings.schatten_p,
        shared_modes: settings.shared_modes,
    })
}
