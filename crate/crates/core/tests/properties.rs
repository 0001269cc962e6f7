//! Randomized checks of structural invariants.

use std::str::FromStr;

use approx::assert_relative_eq;
use gibbslab::classical::{trace_distance, ReducedMatrix};
use gibbslab::fock::{free_energy_functional, gibbs_state, hamiltonian, random_mixture, FockBasis};
use gibbslab::gaussian::sample_gaussian;
use gibbslab::hartree::{rho0_kappa, solve_rhf, RhfSettings};
use gibbslab::interaction::PairTensor;
use gibbslab::potential::{PairKind, PairPotential};
use gibbslab::spectral::{GridSpec, OneBodyOperator, Trap};
use gibbslab::RunConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_operator() -> OneBodyOperator {
    OneBodyOperator::build(GridSpec::new(1, 6.0, 96).unwrap(), Trap::power(4.0).unwrap(), 8).unwrap()
}

/// Gram-form tensor `Σ_m f_m(i,l) f_m(j,k)`: symmetric and positive.
fn gram_tensor(k: usize, coeffs: &[f64]) -> PairTensor {
    let f = |m: usize, a: usize, b: usize| coeffs[m] * (1.0 + (a + b) as f64 * 0.3 + (a * b) as f64 * coeffs[m]).cos();
    let mut v = vec![0.0; k.pow(4)];
    for i in 0..k {
        for j in 0..k {
            for kk in 0..k {
                for l in 0..k {
                    v[((i * k + j) * k + kk) * k + l] = (0..coeffs.len()).map(|m| f(m, i, l) * f(m, j, kk)).sum();
                }
            }
        }
    }
    PairTensor::from_values(k, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn pair_energy_is_symmetric_and_matches_direct_sum(
        f in prop::collection::vec(-1.0f64..1.0, 64),
        g in prop::collection::vec(-1.0f64..1.0, 64),
        dim2 in any::<bool>(),
    ) {
        let grid = if dim2 { GridSpec::new(2, 3.0, 8).unwrap() } else { GridSpec::new(1, 3.0, 64).unwrap() };
        let w = PairPotential::new(PairKind::GaussianBump { amplitude: 1.3, width: 0.7 }, grid).unwrap();
        let fg = w.pair_energy(&f, &g);
        assert_relative_eq!(fg, w.pair_energy(&g, &f), epsilon = 1e-12, max_relative = 1e-10);
        assert_relative_eq!(fg, w.pair_energy_direct(&f, &g), epsilon = 1e-12, max_relative = 1e-10);
        // a Gaussian bump is of positive type
        prop_assert!(w.pair_energy(&f, &f) >= -1e-12);
    }

    #[test]
    fn smaller_cutoffs_are_prefixes(seed in any::<u64>(), k in 1usize..6) {
        let op = small_operator();
        let small = sample_gaussian(&op, k, 16, seed).unwrap();
        let large = sample_gaussian(&op, 8, 16, seed).unwrap();
        prop_assert_eq!(small, large.truncated(k).unwrap());
    }

    #[test]
    fn trace_distance_is_a_metric(
        a in prop::collection::vec(0.0f64..2.0, 3),
        b in prop::collection::vec(0.0f64..2.0, 3),
        c in prop::collection::vec(0.0f64..2.0, 3),
        order in 1usize..3,
    ) {
        let (ma, mb, mc) = (
            ReducedMatrix::product_form(&a, order),
            ReducedMatrix::product_form(&b, order),
            ReducedMatrix::product_form(&c, order),
        );
        let ab = trace_distance(&ma, &mb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!(trace_distance(&ma, &ma).unwrap() < 1e-12);
        assert_relative_eq!(ab, trace_distance(&mb, &ma).unwrap(), epsilon = 1e-12);
        prop_assert!(ab <= trace_distance(&ma, &mc).unwrap() + trace_distance(&mc, &mb).unwrap() + 1e-10);
        prop_assert!(ma.permutation_defect() < 1e-14);
    }

    #[test]
    fn gibbs_state_minimizes_the_free_energy(
        energies in prop::collection::vec(0.5f64..4.0, 3),
        coeffs in prop::collection::vec(0.1f64..1.0, 2),
        t in 0.5f64..6.0,
        coupling in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let tensor = gram_tensor(3, &coeffs);
        let basis = FockBasis::new(3, 6).unwrap();
        let h = hamiltonian(&basis, &energies, Some(&tensor), coupling).unwrap();
        let g = gibbs_state(&h, t, 0.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(free_energy_functional(&g.state, &h, t, 0.0, 0.0).unwrap(), g.free_energy, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let test = random_mixture(&g.state, &mut rng);
            prop_assert!(free_energy_functional(&test, &h, t, 0.0, 0.0).unwrap() >= g.free_energy - 1e-9);
        }
    }

    #[test]
    fn gibbs_state_ignores_constant_shifts(
        energies in prop::collection::vec(0.5f64..4.0, 3),
        e0 in -5.0f64..5.0,
        c in -0.4f64..3.0,
        t in 0.5f64..6.0,
    ) {
        let tensor = gram_tensor(3, &[0.4, 0.7]);
        let basis = FockBasis::new(3, 5).unwrap();
        let h = hamiltonian(&basis, &energies, Some(&tensor), 0.3).unwrap();
        let g = gibbs_state(&h, t, 0.0, 0.0, 1.0).unwrap();
        let g_e0 = gibbs_state(&h, t, 0.0, e0, 1.0).unwrap();
        prop_assert!(g.state.frobenius_distance(&g_e0.state) < 1e-12);
        assert_relative_eq!(g_e0.free_energy, g.free_energy + e0, epsilon = 1e-10, max_relative = 1e-12);
        let shifted: Vec<f64> = energies.iter().map(|e| e + c).collect();
        let hs = hamiltonian(&basis, &shifted, Some(&tensor), 0.3).unwrap();
        let gs = gibbs_state(&hs, t, c, 0.0, 1.0).unwrap();
        prop_assert!(g.state.frobenius_distance(&gs.state) < 1e-10);
    }

    #[test]
    fn rho0_scales_linearly_in_2d(t in 0.2f64..20.0, kappa in 0.1f64..10.0, a in 0.1f64..10.0) {
        let base = rho0_kappa(t, kappa, 2).unwrap();
        assert_relative_eq!(rho0_kappa(a * t, a * kappa, 2).unwrap(), a * base, max_relative = 1e-12);
        prop_assert!(rho0_kappa(t, kappa * 1.5, 2).unwrap() < base);
    }

    #[test]
    fn increasing_schedules_are_accepted(steps in prop::collection::vec(0.1f64..5.0, 1..6)) {
        let mut t = 0.0;
        let schedule: Vec<f64> = steps.iter().map(|s| { t += s; t }).collect();
        let text = schedule.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let cfg = RunConfig::from_str(&format!("[quantum]\ntemperatures = {text}\n")).unwrap();
        prop_assert_eq!(cfg.quantum.temperatures, schedule.clone());
        if schedule.len() > 1 {
            let reversed = schedule.iter().rev().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
            let parsed = RunConfig::from_str(&format!("[hartree]\ntemperatures = {reversed}\n"));
            prop_assert!(parsed.is_err());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn rhf_density_is_invariant_under_joint_shift(c in -0.5f64..2.0, t in 1.0f64..6.0) {
        let grid = GridSpec::new(1, 5.0, 48).unwrap();
        let trap = Trap::power(4.0).unwrap().sample(&grid);
        let w = PairPotential::new(PairKind::GaussianBump { amplitude: 1.0, width: 0.5 }, grid).unwrap();
        let settings = RhfSettings { tolerance: 1e-11, ..RhfSettings::default() };
        let a = solve_rhf(&grid, &trap, &w, t, 0.2, 0.0, settings).unwrap();
        let lifted: Vec<f64> = trap.iter().map(|v| v + c).collect();
        let b = solve_rhf(&grid, &lifted, &w, t, 0.2, c, settings).unwrap();
        prop_assert!(a.converged && b.converged);
        let dens = a.density.iter().zip(&b.density).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let occ = a.occupations.iter().zip(&b.occupations).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dens < 1e-8 && occ < 1e-8, "density {} occupations {}", dens, occ);
    }
}
