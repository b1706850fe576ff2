//! Randomized invariants of the capacity functions and the reduced solver.

use proptest::prelude::*;
use trapdiff::potential::*;
use trapdiff::quadrature::QuadratureConfig;
use trapdiff::solver_full::GaussianIC;
use trapdiff::solver_multiscale::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn well_depth_round_trips(phi in 0.5f64..14.0, cutoff in 1.0f64..5.0, eps in 1e-4f64..1e-1) {
        let q = QuadratureConfig::default();
        let i = trap_capacity_i(phi, cutoff, &q).unwrap();
        // Shallow wells hold less than a flat potential; the inverse is defined above that.
        prop_assume!(i > cutoff + 1.0);
        let m = eps * i;
        let back = solve_phi_for_m(m, eps, cutoff, 1e-12, &q).unwrap();
        prop_assert!((back - phi).abs() < 1e-8 * phi.max(1.0), "{phi} -> {back}");
    }

    #[test]
    fn saturated_capacity_is_bounded(phi in 0.5f64..12.0, cutoff in 1.0f64..4.0, c in 1e-6f64..0.999) {
        let q = QuadratureConfig::default();
        let linear = trap_capacity_i(phi, cutoff, &q).unwrap();
        let sat = saturated_capacity_i(phi, cutoff, c, &q).unwrap();
        prop_assert!(sat > 0.0);
        prop_assert!(sat <= linear * (1.0 + 1e-12));
        prop_assert!(c * sat <= (cutoff + 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn reduced_model_conserves_mass(m in 0.0f64..10.0, x_m in 0.2f64..0.8, sigma in 0.05f64..0.3) {
        let ic = GaussianIC { v0: 1e-6, sigma, x_m, y_m: 0.0 };
        let mut s = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m }, 1e-2, 0.2, ic)).unwrap();
        let m0 = s.total_mass();
        s.run(|_| {}).unwrap();
        prop_assert!(((s.total_mass() - m0) / m0).abs() < 1e-12);
        prop_assert!(s.concentration().iter().all(|&v| v >= -1e-18));
    }
}
