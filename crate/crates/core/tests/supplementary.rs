//! Companions to the acceptance criteria: the same diagnostics in regimes where
//! they are expected to hold.

use std::str::FromStr;

use gibbslab::study::{cauchy_diagnostic, run_study_1d, uv_dichotomy};
use gibbslab::RunConfig;

#[test]
fn two_mode_semiclassical_limit_without_truncation() {
    // K = 2 leaves room for N_max = 200, so the Fock cutoff never binds up to T = 16
    let cfg = RunConfig::from_str(
        "[model]\nmodes = 2\n[classical]\nsamples = 200000\nseed = 1\n\
         [quantum]\nmax_particles = 200\naudit_schedule = 180, 190, 200\n",
    )
    .unwrap();
    let r = run_study_1d(&cfg).unwrap();
    assert!(!r.cutoff_unsafe);
    assert!(r.points.iter().all(|p| p.audit_converged));
    assert!(r.converged(), "{:?}", r.points);
    // the discrepancy decays roughly like 1/T
    let d: Vec<f64> = r.points.iter().map(|p| p.discrepancy).collect();
    for w in d.windows(2) {
        assert!(w[1] / w[0] > 0.4 && w[1] / w[0] < 0.7, "{d:?}");
    }
}

#[test]
fn quartic_2d_trap_renormalizes() {
    let cfg = RunConfig::from_str("[model]\ndim = 2\nexponent = 4\n").unwrap();
    let op = cfg.operator().unwrap();
    let w = cfg.pair_potential().unwrap();
    let uv = uv_dichotomy(&op, &w, &[8, 16, 32, 64], 1e-3).unwrap();
    assert!(uv.direct_diverging, "{:?}", uv.rows);
    assert!(uv.exchange_stabilizing, "{:?}", uv.rows);
    let c = cauchy_diagnostic(&op, &w, &[8, 16, 32], &[], 1.0, 30_000, 21, 0.05).unwrap();
    assert!(c.decreasing, "{:?}", c.rows);
    // the bare differences grow with K while the renormalized ones shrink
    assert!(c.rows.windows(2).all(|r| r[1].bare_gap > r[0].bare_gap));
}

#[test]
fn harmonic_2d_schatten_flags() {
    let op = RunConfig::default_2d().operator().unwrap();
    assert!(op.schatten_trace(1.0).unwrap().likely_divergent);
    assert!(op.schatten_trace(2.0).unwrap().likely_divergent);
    assert!(!op.schatten_trace(2.5).unwrap().likely_divergent);
    let one = RunConfig::default_1d().operator().unwrap();
    assert!(!one.schatten_trace(1.0).unwrap().likely_divergent);
}
