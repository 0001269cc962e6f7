//! Convergence studies: the 1D semiclassical limit at desk scale and the 2D
//! renormalization diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{
    attach, effective_sample_size, estimate_log_zr, mean_stderr, reduced_moment, reweight, trace_distance, Energy,
    LogPartition, ReducedMatrix,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fock::{cutoff_audit, gibbs_state, hamiltonian, reduced_density, CutoffAudit, FockBasis};
use crate::gaussian::sample_gaussian;
use crate::hartree::{counterterm_stabilization, Stabilization};
use crate::interaction::{build_pair_tensor, direct_term, exchange_term, BatchEvaluator, CutoffLadder};
use crate::potential::PairPotential;
use crate::spectral::{OneBodyOperator, SchattenTrace};

#[derive(Debug, Clone, Serialize)]
pub struct StudyPoint {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub lambda: f64,
    #[serde(rename = "F_lambda")]
    pub free_energy: f64,
    #[serde(rename = "F_0")]
    pub free_energy_free: f64,
    /// `(F_λ - F_0) / T`
    pub relative_free_energy: f64,
    /// `|(F_λ - F_0)/T + log z_r|`
    pub discrepancy: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub mean_number: f64,
    pub top_sector_weight: f64,
    pub cutoff_unsafe: bool,
    pub audit_converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub modes: usize,
    pub max_particles: usize,
    pub coupling: f64,
    pub nu: f64,
    pub samples: usize,
    pub seed: u64,
    pub trace_class: SchattenTrace,
    pub log_zr: LogPartition,
    /// the classical side is the free Gaussian measure, evaluated in closed form
    pub classical_exact: bool,
    pub points: Vec<StudyPoint>,
    pub audits: Vec<CutoffAudit>,
    pub discrepancy_decreasing: bool,
    pub delta_1_decreasing: bool,
    pub delta_2_decreasing: bool,
    /// `max(0.05, 5 stderr)`
    pub final_tolerance: f64,
    pub final_within_tolerance: bool,
    pub cutoff_unsafe: bool,
    pub low_confidence: bool,
}

impl ConvergenceReport {
    /// Every trend holds and the final discrepancy is within tolerance.
    pub fn converged(&self) -> bool {
        self.discrepancy_decreasing && self.delta_1_decreasing && self.delta_2_decreasing && self.final_within_tolerance
    }
}

fn decreasing(values: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.into_iter().collect();
    v.windows(2).all(|w| w[1] < w[0])
}

/// Quantum free energies and reduced matrices along the temperature schedule,
/// set against the classical measure `exp(-c D) dμ₀`, with `λ = c/T`.
pub fn run_study_1d(cfg: &RunConfig) -> Result<ConvergenceReport> {
    if cfg.model.dim != 1 {
        return Err(Error::Config("study-1d requires [model] dim = 1".into()));
    }
    cfg.validate_quantum()?;
    let k = cfg.model.modes;
    let nu = cfg.model.nu;
    let c = cfg.quantum.coupling;
    let op = cfg.operator()?;
    let w = cfg.pair_potential()?;
    let shifted = op.shifted(nu)?;
    let trace_class = shifted.schatten_trace(1.0)?;
    if trace_class.likely_divergent {
        return Err(Error::Domain("study-1d needs a trace-class h^{-1}; the Schatten-1 sum looks divergent".into()));
    }

    let (log_zr, moments, classical_exact) = if c == 0.0 {
        let exact = LogPartition { value: 0.0, stderr: 0.0, ess: cfg.classical.samples as f64, low_confidence: false };
        let eigs = &shifted.eigenvalues()[..k];
        (exact, [ReducedMatrix::free_classical(eigs, 1), ReducedMatrix::free_classical(eigs, 2)], true)
    } else {
        let ensemble = sample_gaussian(&shifted, k, cfg.classical.samples, cfg.classical.seed)?;
        let energies = BatchEvaluator::new(&shifted, &w, k)?.bare(&ensemble.samples);
        let weighted = attach(&ensemble, energies, Energy::Bare, c, cfg.classical.ess_floor);
        if weighted.low_confidence {
            log::warn!("classical reweighting has ESS {:.0} of {}", weighted.ess, ensemble.len());
        }
        let moments = [reduced_moment(&weighted, 1)?, reduced_moment(&weighted, 2)?];
        (estimate_log_zr(&weighted), moments, false)
    };

    let energies = &op.eigenvalues()[..k];
    let tensor = if c == 0.0 { None } else { Some(build_pair_tensor(&op, &w, k)?) };
    let basis = FockBasis::new(k, cfg.quantum.max_particles)?;
    let h0 = hamiltonian(&basis, energies, None, 0.0)?;
    let rows: Vec<(StudyPoint, CutoffAudit)> = cfg
        .quantum
        .temperatures
        .par_iter()
        .map(|&t| -> Result<(StudyPoint, CutoffAudit)> {
            let lambda = c / t;
            let h = hamiltonian(&basis, energies, tensor.as_ref(), lambda)?;
            let g = gibbs_state(&h, t, nu, 0.0, cfg.quantum.saturation)?;
            let g0 = gibbs_state(&h0, t, nu, 0.0, cfg.quantum.saturation)?;
            let gamma1 = reduced_density(&g.state, &basis, 1)?.scaled(1.0 / t);
            let gamma2 = reduced_density(&g.state, &basis, 2)?.scaled(1.0 / (t * t));
            let audit = cutoff_audit(energies, tensor.as_ref(), lambda, t, nu, &cfg.quantum.audit_schedule, None)?;
            let relative = (g.free_energy - g0.free_energy) / t;
            let point = StudyPoint {
                temperature: t,
                lambda,
                free_energy: g.free_energy,
                free_energy_free: g0.free_energy,
                relative_free_energy: relative,
                discrepancy: (relative - log_zr.value).abs(),
                delta_1: trace_distance(&gamma1, &moments[0])?,
                delta_2: trace_distance(&gamma2, &moments[1])?,
                mean_number: g.mean_number,
                top_sector_weight: g.top_sector_weight,
                cutoff_unsafe: g.cutoff_unsafe || g0.cutoff_unsafe,
                audit_converged: audit.converged,
            };
            Ok((point, audit))
        })
        .collect::<Result<_>>()?;
    let (points, audits): (Vec<_>, Vec<_>) = rows.into_iter().unzip();

    let final_tolerance = 0.05f64.max(5.0 * log_zr.stderr);
    Ok(ConvergenceReport {
        modes: k,
        max_particles: cfg.quantum.max_particles,
        coupling: c,
        nu,
        samples: cfg.classical.samples,
        seed: cfg.classical.seed,
        trace_class,
        log_zr,
        classical_exact,
        discrepancy_decreasing: decreasing(points.iter().map(|p| p.discrepancy)),
        delta_1_decreasing: decreasing(points.iter().map(|p| p.delta_1)),
        delta_2_decreasing: decreasing(points.iter().map(|p| p.delta_2)),
        final_tolerance,
        final_within_tolerance: points.last().is_some_and(|p| p.discrepancy < final_tolerance),
        cutoff_unsafe: points.iter().any(|p| p.cutoff_unsafe),
        low_confidence: log_zr.low_confidence,
        points,
        audits,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UvRow {
    #[serde(rename = "K")]
    pub cutoff: usize,
    pub direct: f64,
    pub exchange: f64,
    /// change since the previous cutoff; NaN on the first row
    pub direct_increment: f64,
    pub exchange_increment: f64,
    /// `-log z_r` of the renormalized measure; NaN when not estimated
    pub log_zr: f64,
    pub log_zr_stderr: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UvDichotomy {
    pub rows: Vec<UvRow>,
    pub stall_threshold: f64,
    /// every increment of the direct term exceeds `stall_threshold · |direct|`
    pub direct_diverging: bool,
    /// the exchange increments shrink at every step
    pub exchange_stabilizing: bool,
    /// relative change over the last doubling
    pub final_direct_change: f64,
    pub final_exchange_change: f64,
}

/// Direct and exchange terms of `μ₀` over an increasing cutoff schedule.
pub fn uv_dichotomy(op: &OneBodyOperator, w: &PairPotential, cutoffs: &[usize], stall_threshold: f64) -> Result<UvDichotomy> {
    if cutoffs.len() < 2 || cutoffs.windows(2).any(|c| c[1] <= c[0]) {
        return Err(Error::Config("UV schedule must have two or more strictly increasing cutoffs".into()));
    }
    let mut rows: Vec<UvRow> = Vec::with_capacity(cutoffs.len());
    for &k in cutoffs {
        let direct = direct_term(op, w, k)?;
        let exchange = exchange_term(op, w, k)?;
        let (di, ei) = rows.last().map_or((f64::NAN, f64::NAN), |r| (direct - r.direct, exchange - r.exchange));
        rows.push(UvRow {
            cutoff: k,
            direct,
            exchange,
            direct_increment: di,
            exchange_increment: ei,
            log_zr: f64::NAN,
            log_zr_stderr: f64::NAN,
            ess: f64::NAN,
        });
    }
    let body = &rows[1..];
    let last = rows.last().expect("nonempty");
    Ok(UvDichotomy {
        direct_diverging: body.iter().all(|r| r.direct_increment > stall_threshold * r.direct.abs()),
        exchange_stabilizing: body.windows(2).all(|r| r[1].exchange_increment.abs() < r[0].exchange_increment.abs()),
        final_direct_change: (last.direct_increment / last.direct).abs(),
        final_exchange_change: (last.exchange_increment / last.exchange).abs(),
        stall_threshold,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WickRow {
    #[serde(rename = "K")]
    pub cutoff: usize,
    pub bare_mean: f64,
    pub bare_stderr: f64,
    /// direct plus exchange
    pub bare_expected: f64,
    pub bare_z: f64,
    pub renormalized_mean: f64,
    pub renormalized_stderr: f64,
    /// exchange alone
    pub renormalized_expected: f64,
    pub renormalized_z: f64,
}

/// Monte Carlo means of `D_K` and `D^R_K` under `μ₀` against their exact values.
///
/// One ensemble at the largest cutoff serves every `K`; smaller cutoffs are its prefixes.
pub fn wick_check(op: &OneBodyOperator, w: &PairPotential, cutoffs: &[usize], samples: usize, seed: u64) -> Result<Vec<WickRow>> {
    let ladder = CutoffLadder::new(op, w, cutoffs)?;
    let top = *cutoffs.last().expect("nonempty ladder");
    let ensemble = sample_gaussian(op, top, samples, seed)?;
    let values = ladder.evaluate_batch(&ensemble.samples)?;
    cutoffs
        .iter()
        .enumerate()
        .map(|(s, &k)| {
            let (bm, bs) = mean_stderr(&values.iter().map(|v| v[s][0]).collect::<Vec<_>>());
            let (rm, rs) = mean_stderr(&values.iter().map(|v| v[s][1]).collect::<Vec<_>>());
            let exchange = exchange_term(op, w, k)?;
            let expected = direct_term(op, w, k)? + exchange;
            Ok(WickRow {
                cutoff: k,
                bare_mean: bm,
                bare_stderr: bs,
                bare_expected: expected,
                bare_z: (bm - expected) / bs,
                renormalized_mean: rm,
                renormalized_stderr: rs,
                renormalized_expected: exchange,
                renormalized_z: (rm - exchange) / rs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyRow {
    #[serde(rename = "K")]
    pub cutoff: usize,
    /// `E|D^R_{2K} - D^R_K|`
    pub renormalized_gap: f64,
    pub renormalized_stderr: f64,
    /// `E|D_{2K} - D_K|`
    pub bare_gap: f64,
    pub bare_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyDiagnostic {
    pub rows: Vec<CauchyRow>,
    /// each step decreases by more than twice the combined standard error
    pub decreasing: bool,
    pub log_zr: Vec<(usize, LogPartition)>,
}

/// Cauchy gaps `E|D^R_{2K} - D^R_K|` plus `-log z_r` of `exp(-c D^R_K) dμ₀` at
/// every cutoff in `zr_cutoffs`, all from one ensemble.
pub fn cauchy_diagnostic(
    op: &OneBodyOperator,
    w: &PairPotential,
    cutoffs: &[usize],
    zr_cutoffs: &[usize],
    coupling: f64,
    samples: usize,
    seed: u64,
    ess_floor: f64,
) -> Result<CauchyDiagnostic> {
    if cutoffs.is_empty() || cutoffs.windows(2).any(|c| c[1] <= c[0]) {
        return Err(Error::Config("Cauchy cutoffs must be nonempty and strictly increasing".into()));
    }
    let mut ladder_cutoffs: Vec<usize> =
        cutoffs.iter().flat_map(|&k| [k, 2 * k]).chain(zr_cutoffs.iter().copied()).collect();
    ladder_cutoffs.sort_unstable();
    ladder_cutoffs.dedup();
    let at = |k: usize| ladder_cutoffs.binary_search(&k).expect("cutoff on the ladder");
    let ladder = CutoffLadder::new(op, w, &ladder_cutoffs)?;
    let ensemble = sample_gaussian(op, *ladder_cutoffs.last().expect("nonempty"), samples, seed)?;
    let values = ladder.evaluate_batch(&ensemble.samples)?;

    let rows: Vec<CauchyRow> = cutoffs
        .iter()
        .map(|&k| {
            let (a, b) = (at(k), at(2 * k));
            let (rg, rs) = mean_stderr(&values.iter().map(|v| (v[b][1] - v[a][1]).abs()).collect::<Vec<_>>());
            let (bg, bs) = mean_stderr(&values.iter().map(|v| (v[b][0] - v[a][0]).abs()).collect::<Vec<_>>());
            CauchyRow { cutoff: k, renormalized_gap: rg, renormalized_stderr: rs, bare_gap: bg, bare_stderr: bs }
        })
        .collect();
    let decreasing = rows.windows(2).all(|r| {
        let se = (r[0].renormalized_stderr.powi(2) + r[1].renormalized_stderr.powi(2)).sqrt();
        r[0].renormalized_gap - r[1].renormalized_gap > 2.0 * se
    });
    let log_zr = zr_cutoffs
        .iter()
        .map(|&k| {
            let s = at(k);
            let weights: Vec<f64> = values.iter().map(|v| (-coupling * v[s][1]).exp()).collect();
            let (mean, se) = mean_stderr(&weights);
            let ess = effective_sample_size(&weights);
            let lp = LogPartition {
                value: -mean.ln(),
                stderr: se / mean,
                ess,
                low_confidence: ess < ess_floor * samples as f64,
            };
            (k, lp)
        })
        .collect();
    Ok(CauchyDiagnostic { rows, decreasing, log_zr })
}

#[derive(Debug, Clone, Serialize)]
pub struct RelativeOneBody {
    pub modes: usize,
    /// trace norm of `∫|u⟩⟨u| dμ - ∫|u⟩⟨u| dμ₀`
    pub trace_norm: f64,
    pub diagonal: Vec<f64>,
    pub diagonal_stderr: Vec<f64>,
    pub ess: f64,
    pub low_confidence: bool,
}

/// Classical one-body difference between the renormalized measure and `μ₀`, both
/// built from `-Δ + V_proxy`.
pub fn relative_one_body(
    reference: &OneBodyOperator,
    w: &PairPotential,
    cutoff: usize,
    coupling: f64,
    samples: usize,
    seed: u64,
) -> Result<RelativeOneBody> {
    let ensemble = sample_gaussian(reference, cutoff, samples, seed)?;
    let weighted = reweight(&ensemble, Energy::Renormalized, reference, w, coupling)?;
    let mu = reduced_moment(&weighted, 1)?;
    let mu0 = ReducedMatrix::free_classical(&reference.eigenvalues()[..cutoff], 1);
    let stderr = mu.stderr.clone().unwrap_or_default();
    Ok(RelativeOneBody {
        modes: cutoff,
        trace_norm: trace_distance(&mu, &mu0)?,
        diagonal: (0..cutoff).map(|j| mu.values[(j, j)].re - mu0.values[(j, j)].re).collect(),
        diagonal_stderr: (0..cutoff).map(|j| stderr.get(j * cutoff + j).copied().unwrap_or(f64::NAN)).collect(),
        ess: weighted.ess,
        low_confidence: weighted.low_confidence,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormalizationReport {
    pub uv: UvDichotomy,
    pub wick: Vec<WickRow>,
    pub wick_samples: usize,
    pub cauchy: CauchyDiagnostic,
    pub cauchy_samples: usize,
    pub hartree: Stabilization,
    pub relative_one_body: RelativeOneBody,
}

/// The 2D classical renormalization study plus the rHF counterterm table.
pub fn run_study_2d_classical(cfg: &RunConfig) -> Result<RenormalizationReport> {
    if cfg.model.dim != 2 {
        return Err(Error::Config("study-2d-classical requires [model] dim = 2".into()));
    }
    cfg.validate_study2d()?;
    let s = &cfg.study2d;
    let op = cfg.operator()?.shifted(cfg.model.nu)?;
    let w = cfg.pair_potential()?;
    let seed = cfg.classical.seed;
    let coupling = cfg.quantum.coupling;

    let mut uv = uv_dichotomy(&op, &w, &s.cutoffs, s.stall_threshold)?;
    let wick = wick_check(&op, &w, &s.wick_cutoffs, cfg.classical.samples, seed)?;
    let cauchy = cauchy_diagnostic(&op, &w, &s.cauchy_cutoffs, &s.cutoffs, coupling, s.samples, seed, cfg.classical.ess_floor)?;
    for (row, (_, lp)) in uv.rows.iter_mut().zip(&cauchy.log_zr) {
        row.log_zr = lp.value;
        row.log_zr_stderr = lp.stderr;
        row.ess = lp.ess;
    }

    let grid = cfg.grid()?;
    let trap = cfg.model.trap.sample(&grid);
    let hartree = counterterm_stabilization(&grid, &trap, &w, &cfg.hartree.temperatures, cfg.stabilization_settings())?;
    let proxy = hartree.potentials.last().expect("nonempty schedule").clone();
    let reference = OneBodyOperator::from_potential(grid, proxy, cfg.model.modes)?;
    let relative = relative_one_body(&reference, &w, cfg.model.modes, coupling, s.samples, seed)?;

    Ok(RenormalizationReport {
        uv,
        wick,
        wick_samples: cfg.classical.samples,
        cauchy,
        cauchy_samples: s.samples,
        hartree,
        relative_one_body: relative,
    })
}
