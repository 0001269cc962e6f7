//! Single-module runs: one artifact per subcommand.

use std::path::Path;

use gibbslab::classical::{estimate_log_zr, phase_moment, reduced_moment, reweight, Energy, LogPartition};
use gibbslab::fock::{cutoff_audit, gibbs_state, hamiltonian, reduced_density, CutoffAudit, FockBasis};
use gibbslab::gaussian::{sample_gaussian, Ensemble};
use gibbslab::hartree::{counterterm_stabilization, Stabilization};
use gibbslab::interaction::build_pair_tensor;
use gibbslab::output::write_matrix_file;
use gibbslab::potential::Regularity;
use gibbslab::spectral::SchattenTrace;
use gibbslab::{Result, RunConfig};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct EigenRow {
    pub j: usize,
    pub eigenvalue: f64,
}

#[derive(Debug, Serialize)]
pub struct SpectrumReport {
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
    pub fingerprint: String,
    pub orthonormality_defect: f64,
    pub rayleigh_residual: f64,
    pub schatten_1: SchattenTrace,
    pub schatten_2: SchattenTrace,
    pub w_hat_zero: f64,
    pub regularity: Regularity,
    pub eigenvalues: Vec<EigenRow>,
}

pub fn spectrum(cfg: &RunConfig) -> Result<SpectrumReport> {
    let op = cfg.operator()?;
    let w = cfg.pair_potential()?;
    let grid = cfg.grid()?;
    Ok(SpectrumReport {
        dim: grid.dim(),
        points: grid.points(),
        half_width: grid.half_width(),
        fingerprint: format!("{:016x}", op.fingerprint()),
        orthonormality_defect: op.orthonormality_defect(),
        rayleigh_residual: op.rayleigh_residual(),
        schatten_1: op.schatten_trace(1.0)?,
        schatten_2: op.schatten_trace(2.0)?,
        w_hat_zero: w.w_hat_zero(),
        regularity: w.regularity(&cfg.model.trap.sample(&grid)),
        eigenvalues: op.eigenvalues().iter().enumerate().map(|(j, &eigenvalue)| EigenRow { j, eigenvalue }).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct SampleReport {
    pub cutoff: usize,
    pub samples: usize,
    pub seed: u64,
    pub nu: f64,
    /// empirical mean of `Σ|α_j|²`
    pub mean_mass: f64,
    /// `Σ_{j ≤ K} 1/(λ_j - ν)`
    pub expected_mass: f64,
    pub file: String,
}

pub fn sample(cfg: &RunConfig, out: &Path) -> Result<SampleReport> {
    let op = cfg.operator()?.shifted(cfg.model.nu)?;
    let k = cfg.model.modes;
    let ensemble = sample_gaussian(&op, k, cfg.classical.samples, cfg.classical.seed)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("sample-gaussian.gfl1");
    ensemble.write_to(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    Ok(SampleReport {
        cutoff: k,
        samples: ensemble.len(),
        seed: cfg.classical.seed,
        nu: cfg.model.nu,
        mean_mass: mean_mass(&ensemble),
        expected_mass: op.eigenvalues()[..k].iter().map(|l| 1.0 / l).sum(),
        file: path.file_name().expect("file name").to_string_lossy().into_owned(),
    })
}

fn mean_mass(e: &Ensemble) -> f64 {
    e.samples.iter().map(|s| s.mass()).sum::<f64>() / e.len() as f64
}

#[derive(Debug, Serialize)]
pub struct MomentSummary {
    pub order: usize,
    pub trace: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub max_stderr: f64,
    pub file: String,
}

#[derive(Debug, Serialize)]
pub struct ClassicalReport {
    pub cutoff: usize,
    pub energy: Energy,
    pub coupling: f64,
    pub log_zr: LogPartition,
    /// largest `|E[α_i α_j]| / stderr`; the measure is phase invariant
    pub phase_max_z: f64,
    pub moments: Vec<MomentSummary>,
}

pub fn classical(cfg: &RunConfig, out: &Path) -> Result<ClassicalReport> {
    let op = cfg.operator()?.shifted(cfg.model.nu)?;
    let w = cfg.pair_potential()?;
    let k = cfg.model.modes;
    let energy = if cfg.interaction.renormalized { Energy::Renormalized } else { Energy::Bare };
    let ensemble = sample_gaussian(&op, k, cfg.classical.samples, cfg.classical.seed)?;
    let weighted = reweight(&ensemble, energy, &op, &w, cfg.quantum.coupling)?;
    let (phase, phase_se) = phase_moment(&weighted);
    let phase_max_z = phase.iter().zip(&phase_se).map(|(m, s)| m.norm() / s).fold(0.0, f64::max);
    let mut moments = Vec::new();
    for order in [1, 2] {
        let m = reduced_moment(&weighted, order)?;
        let name = format!("classical-moment-k{order}.gflm");
        write_matrix_file(&out.join(&name), &m.values)?;
        moments.push(MomentSummary {
            order,
            trace: m.trace().re,
            hermiticity_defect: m.hermiticity_defect(),
            min_eigenvalue: m.eigenvalues()?.first().copied().unwrap_or(f64::NAN),
            max_stderr: m.max_stderr(),
            file: name,
        });
    }
    Ok(ClassicalReport {
        cutoff: k,
        energy,
        coupling: cfg.quantum.coupling,
        log_zr: estimate_log_zr(&weighted),
        phase_max_z,
        moments,
    })
}

#[derive(Debug, Serialize)]
pub struct QuantumRow {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub lambda: f64,
    pub free_energy: f64,
    pub log_z: f64,
    pub mean_number: f64,
    pub top_sector_weight: f64,
    pub cutoff_unsafe: bool,
    pub audit_converged: bool,
}

#[derive(Debug, Serialize)]
pub struct QuantumReport {
    pub modes: usize,
    pub max_particles: usize,
    pub dimension: usize,
    pub rows: Vec<QuantumRow>,
    pub audits: Vec<CutoffAudit>,
}

impl QuantumReport {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| r.cutoff_unsafe || !r.audit_converged)
    }
}

pub fn quantum(cfg: &RunConfig, out: &Path) -> Result<QuantumReport> {
    cfg.validate_quantum()?;
    let op = cfg.operator()?;
    let w = cfg.pair_potential()?;
    let k = cfg.model.modes;
    let energies = &op.eigenvalues()[..k];
    let tensor = if cfg.quantum.coupling == 0.0 { None } else { Some(build_pair_tensor(&op, &w, k)?) };
    let basis = FockBasis::new(k, cfg.quantum.max_particles)?;
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    for &t in &cfg.quantum.temperatures {
        let lambda = cfg.quantum.coupling / t;
        let h = hamiltonian(&basis, energies, tensor.as_ref(), lambda)?;
        let g = gibbs_state(&h, t, cfg.model.nu, 0.0, cfg.quantum.saturation)?;
        let gamma = reduced_density(&g.state, &basis, 1)?;
        write_matrix_file(&out.join(format!("gamma1-T{t}.gflm")), &gamma.values)?;
        let audit = cutoff_audit(energies, tensor.as_ref(), lambda, t, cfg.model.nu, &cfg.quantum.audit_schedule, None)?;
        rows.push(QuantumRow {
            temperature: t,
            lambda,
            free_energy: g.free_energy,
            log_z: g.log_z,
            mean_number: g.mean_number,
            top_sector_weight: g.top_sector_weight,
            cutoff_unsafe: g.cutoff_unsafe,
            audit_converged: audit.converged,
        });
        audits.push(audit);
    }
    Ok(QuantumReport { modes: k, max_particles: cfg.quantum.max_particles, dimension: basis.dimension(), rows, audits })
}

pub fn hartree(cfg: &RunConfig) -> Result<Stabilization> {
    let grid = cfg.grid()?;
    let trap = cfg.model.trap.sample(&grid);
    let w = cfg.pair_potential()?;
    counterterm_stabilization(&grid, &trap, &w, &cfg.hartree.temperatures, cfg.stabilization_settings())
}
