//! Experiment configuration: a sectioned INI file with validated defaults.
//!
//! Every key is optional. Unknown sections or keys are rejected so typos do
//! not silently fall back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::DEFAULT_SATURATION;
use crate::hartree::{MomentumMeasure, RhfSettings, StabilizationSettings};
use crate::interaction::MAX_TENSOR_MODES;
use crate::output::Format;
use crate::potential::{PairKind, PairPotential};
use crate::spectral::{GridSpec, OneBodyOperator, Trap};

#[derive(Debug, Clone, Serialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub trap: Trap,
    pub half_width: f64,
    pub points: usize,
    /// the cutoff `K`
    pub modes: usize,
    pub nu: f64,
    /// eigenpairs computed; at least every cutoff any study needs
    pub num_eigs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionConfig {
    pub kind: PairKind,
    pub table: Option<PathBuf>,
    pub renormalized: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalConfig {
    pub samples: usize,
    pub seed: u64,
    pub ess_floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantumConfig {
    pub max_particles: usize,
    pub temperatures: Vec<f64>,
    /// `λ = coupling / T`
    pub coupling: f64,
    pub audit_schedule: Vec<usize>,
    pub saturation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HartreeConfig {
    pub kappa: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub temperatures: Vec<f64>,
    pub coupling: f64,
    pub momentum_measure: MomentumMeasure,
    pub shared_modes: usize,
    pub schatten_p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Study2dConfig {
    pub cutoffs: Vec<usize>,
    pub wick_cutoffs: Vec<usize>,
    pub samples: usize,
    pub cauchy_cutoffs: Vec<usize>,
    pub stall_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(serialize_with = "format_name")]
    pub format: Format,
}

fn format_name<S: serde::Serializer>(f: &Format, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match f {
        Format::Json => "json",
        Format::Csv => "csv",
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub interaction: InteractionConfig,
    pub classical: ClassicalConfig,
    pub quantum: QuantumConfig,
    pub hartree: HartreeConfig,
    pub study2d: Study2dConfig,
    pub output: OutputConfig,
}

const KEYS: &[(&str, &[&str])] = &[
    ("model", &["dim", "trap", "exponent", "half_width", "points", "modes", "nu", "num_eigs"]),
    ("interaction", &["kind", "amplitude", "width", "strength", "table", "renormalized"]),
    ("classical", &["samples", "seed", "ess_floor"]),
    ("quantum", &["max_particles", "temperatures", "coupling", "audit_schedule", "saturation"]),
    (
        "hartree",
        &[
            "kappa",
            "damping",
            "tolerance",
            "max_iter",
            "temperatures",
            "coupling",
            "momentum_measure",
            "shared_modes",
            "schatten_p",
        ],
    ),
    ("study2d", &["cutoffs", "wick_cutoffs", "samples", "cauchy_cutoffs", "stall_threshold"]),
    ("output", &["dir", "format"]),
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, v)),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| self.bad(key, v)))
                .collect(),
        }
    }

    fn bad(&self, key: &str, value: &str) -> Error {
        Error::Config(format!("[{}] {key}: cannot parse '{value}'", self.name))
    }
}

fn increasing<T: PartialOrd>(section: &str, key: &str, values: &[T]) -> Result<()> {
    if values.is_empty() || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("[{section}] {key}: schedule must be nonempty and strictly increasing")));
    }
    Ok(())
}

impl RunConfig {
    /// Reads a config file; a relative `[interaction] table` is resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// All defaults: the 1D model `s = 4, L = 8, M = 512, K = 4, ν = 0`.
    pub fn default_1d() -> Self {
        Self::from_str("").expect("defaults are valid")
    }

    /// Defaults for the 2D harmonic model `s = 2, L = 5, M = 32`.
    pub fn default_2d() -> Self {
        Self::from_str("[model]\ndim = 2\nexponent = 2\n").expect("defaults are valid")
    }

    fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key '{k}' appears before any section")));
                }
                continue;
            };
            let Some((_, keys)) = KEYS.iter().find(|(s, _)| *s == name) else {
                return Err(Error::Config(format!("unknown section [{name}]")));
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(Error::Config(format!("[{name}] unknown key '{k}'")));
                }
            }
        }
        let sec = |name: &'static str| Section { name, props: ini.section(Some(name)) };

        let m = sec("model");
        let dim: usize = m.get("dim", 1)?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("[model] dim: must be 1 or 2, got {dim}")));
        }
        let trap = match m.raw("trap").unwrap_or("power") {
            "power" => Trap::power(m.get("exponent", 4.0)?)
                .map_err(|e| Error::Config(format!("[model] exponent: {e}")))?,
            "box" => {
                if m.raw("exponent").is_some() {
                    return Err(Error::Config("[model] exponent is meaningless with [model] trap = box".into()));
                }
                Trap::Box
            }
            other => return Err(m.bad("trap", other)),
        };
        let (default_l, default_m) = if dim == 1 { (8.0, 512) } else { (5.0, 32) };
        let half_width: f64 = m.get("half_width", default_l)?;
        let points = m.get("points", default_m)?;
        let modes: usize = m.get("modes", 4)?;
        let nu: f64 = m.get("nu", 0.0)?;
        if modes == 0 {
            return Err(Error::Config("[model] modes: the cutoff K must be at least 1".into()));
        }
        if !nu.is_finite() {
            return Err(Error::Config("[model] nu must be finite".into()));
        }
        GridSpec::new(dim, half_width, points)
            .map_err(|e| Error::Config(format!("[model] half_width/points: {e}")))?;

        let it = sec("interaction");
        let table = it.raw("table").map(|t| match base {
            Some(dir) if Path::new(t).is_relative() => dir.join(t),
            _ => PathBuf::from(t),
        });
        let kind = match it.raw("kind").unwrap_or("gaussian-bump") {
            "gaussian-bump" => {
                PairKind::GaussianBump { amplitude: it.get("amplitude", 1.0)?, width: it.get("width", 0.5)? }
            }
            "grid-delta" => PairKind::GridDelta { strength: it.get("strength", 1.0)? },
            "tabulated" => match &table {
                None => return Err(Error::Config("[interaction] kind = tabulated requires [interaction] table".into())),
                Some(p) => PairKind::tabulated_from_file(p)
                    .map_err(|e| Error::Config(format!("[interaction] table {}: {e}", p.display())))?,
            },
            other => return Err(it.bad("kind", other)),
        };
        if let PairKind::GaussianBump { width, .. } = kind {
            if !(width > 0.0) {
                return Err(Error::Config("[interaction] width must be positive".into()));
            }
        }
        let renormalized = it.get("renormalized", dim == 2)?;
        if dim == 2 && renormalized && matches!(kind, PairKind::GridDelta { .. }) {
            return Err(Error::Config(
                "[interaction] kind = grid-delta with [interaction] renormalized = true is not allowed for [model] dim = 2"
                    .into(),
            ));
        }

        let c = sec("classical");
        let classical =
            ClassicalConfig { samples: c.get("samples", 100_000)?, seed: c.get("seed", 0)?, ess_floor: c.get("ess_floor", 0.05)? };
        if classical.samples < 2 {
            return Err(Error::Config("[classical] samples must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&classical.ess_floor) {
            return Err(Error::Config("[classical] ess_floor must lie in [0, 1]".into()));
        }

        let q = sec("quantum");
        let max_particles = q.get("max_particles", 14)?;
        let quantum = QuantumConfig {
            max_particles,
            temperatures: q.list("temperatures", &[2.0, 4.0, 8.0, 16.0])?,
            coupling: q.get("coupling", 1.0)?,
            audit_schedule: q.list("audit_schedule", &[max_particles.saturating_sub(4).max(1), max_particles.saturating_sub(2).max(1), max_particles])?,
            saturation: q.get("saturation", DEFAULT_SATURATION)?,
        };
        increasing("quantum", "temperatures", &quantum.temperatures)?;
        let mut audit = quantum.audit_schedule.clone();
        audit.dedup();
        let quantum = QuantumConfig { audit_schedule: audit, ..quantum };
        increasing("quantum", "audit_schedule", &quantum.audit_schedule)?;
        if quantum.temperatures[0] <= 0.0 {
            return Err(Error::Config("[quantum] temperatures must be positive".into()));
        }

        let h = sec("hartree");
        let default_p = match trap {
            Trap::Power { exponent } => 1.0 + 2.0 / exponent,
            Trap::Box => 2.0,
        };
        let hartree = HartreeConfig {
            kappa: h.get("kappa", 4.0)?,
            damping: h.get("damping", 0.3)?,
            tolerance: h.get("tolerance", 1e-8)?,
            max_iter: h.get("max_iter", 500)?,
            temperatures: h.list("temperatures", &[4.0, 8.0, 16.0, 32.0])?,
            coupling: h.get("coupling", 1.0)?,
            momentum_measure: match h.raw("momentum_measure").unwrap_or("physical") {
                "physical" => MomentumMeasure::Physical,
                "unit" => MomentumMeasure::Unit,
                other => return Err(h.bad("momentum_measure", other)),
            },
            shared_modes: h.get("shared_modes", 64)?,
            schatten_p: h.get("schatten_p", default_p)?,
        };
        increasing("hartree", "temperatures", &hartree.temperatures)?;
        if !(hartree.kappa > 0.0) {
            return Err(Error::Config("[hartree] kappa must be positive".into()));
        }
        if !(hartree.damping > 0.0 && hartree.damping <= 1.0) {
            return Err(Error::Config("[hartree] damping must lie in (0, 1]".into()));
        }
        if hartree.temperatures[0] <= 0.0 {
            return Err(Error::Config("[hartree] temperatures must be positive".into()));
        }
        if !(hartree.schatten_p >= 1.0) {
            return Err(Error::Config("[hartree] schatten_p must be at least 1".into()));
        }

        let s = sec("study2d");
        let study2d = Study2dConfig {
            cutoffs: s.list("cutoffs", &[8, 16, 32, 64])?,
            wick_cutoffs: s.list("wick_cutoffs", &[1, 4, 8])?,
            samples: s.get("samples", 20_000)?,
            cauchy_cutoffs: s.list("cauchy_cutoffs", &[8, 16, 32])?,
            stall_threshold: s.get("stall_threshold", 1e-3)?,
        };
        increasing("study2d", "cutoffs", &study2d.cutoffs)?;
        increasing("study2d", "wick_cutoffs", &study2d.wick_cutoffs)?;
        increasing("study2d", "cauchy_cutoffs", &study2d.cauchy_cutoffs)?;
        if study2d.cutoffs[0] == 0 || study2d.wick_cutoffs[0] == 0 || study2d.cauchy_cutoffs[0] == 0 {
            return Err(Error::Config("[study2d] cutoffs must be positive".into()));
        }

        let o = sec("output");
        let output = OutputConfig { dir: PathBuf::from(o.raw("dir").unwrap_or("out")), format: o.get("format", Format::Json)? };

        let needed = [
            modes,
            *study2d.cutoffs.last().expect("nonempty"),
            *study2d.wick_cutoffs.last().expect("nonempty"),
            2 * study2d.cauchy_cutoffs.last().expect("nonempty"),
        ]
        .into_iter()
        .max()
        .expect("nonempty");
        let num_eigs = m.get("num_eigs", needed)?;
        if num_eigs < modes {
            return Err(Error::Config(format!("[model] num_eigs = {num_eigs} is below [model] modes = {modes}")));
        }
        if num_eigs > GridSpec::new(dim, half_width, points)?.len() {
            return Err(Error::Config("[model] num_eigs exceeds the number of grid points".into()));
        }

        Ok(RunConfig {
            model: ModelConfig { dim, trap, half_width, points, modes, nu, num_eigs },
            interaction: InteractionConfig { kind, table, renormalized },
            classical,
            quantum,
            hartree,
            study2d,
            output,
        })
    }

    /// Extra checks for anything that builds a Fock space.
    pub fn validate_quantum(&self) -> Result<()> {
        if self.model.modes > MAX_TENSOR_MODES {
            return Err(Error::Config(format!(
                "[model] modes = {} exceeds {MAX_TENSOR_MODES}, the largest cutoff for quantum runs",
                self.model.modes
            )));
        }
        if self.quantum.max_particles == 0 {
            return Err(Error::Config("[quantum] max_particles must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks that every schedule cutoff fits in `[model] num_eigs`.
    pub fn validate_study2d(&self) -> Result<()> {
        let s = &self.study2d;
        let top = [*s.cutoffs.last().unwrap(), *s.wick_cutoffs.last().unwrap(), 2 * s.cauchy_cutoffs.last().unwrap()];
        if top.iter().any(|&k| k > self.model.num_eigs) {
            return Err(Error::Config(format!(
                "[study2d] cutoffs need up to {} modes but [model] num_eigs = {}",
                top.iter().max().unwrap(),
                self.model.num_eigs
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.model.dim, self.model.half_width, self.model.points)
    }

    /// `-Δ + V` with `[model] num_eigs` eigenpairs, unshifted.
    pub fn operator(&self) -> Result<OneBodyOperator> {
        OneBodyOperator::build(self.grid()?, self.model.trap, self.model.num_eigs)
    }

    pub fn pair_potential(&self) -> Result<PairPotential> {
        PairPotential::new(self.interaction.kind.clone(), self.grid()?)
    }

    pub fn rhf_settings(&self) -> RhfSettings {
        RhfSettings {
            damping: self.hartree.damping,
            tolerance: self.hartree.tolerance,
            max_iter: self.hartree.max_iter,
            ..RhfSettings::default()
        }
    }

    pub fn stabilization_settings(&self) -> StabilizationSettings {
        StabilizationSettings {
            kappa: self.hartree.kappa,
            coupling_constant: self.hartree.coupling,
            measure: self.hartree.momentum_measure,
            shared_modes: self.hartree.shared_modes,
            schatten_p: self.hartree.schatten_p,
            rhf: self.rhf_settings(),
        }
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }
}
