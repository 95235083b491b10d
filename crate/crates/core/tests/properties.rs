use lohe_core::correlation::{integrate, zeta_norm_rhs, macro_rhs, CorrelationState, IntegrateOptions, OdeSystem};
use lohe_core::diagnostics::{compute_record, default_window, fit_rate};
use lohe_core::grid::inner_product;
use lohe_core::initial::{random_ensemble, random_gram, RandomEnsembleSpec};
use lohe_core::model::{lohe_rhs, lohe_rhs_pairwise, order_parameter, LoheParams, ModelConfig, Potential};
use lohe_core::oracles::{classify_two, z_exact};
use lohe_core::GridSpec;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::line(128, 30.0).unwrap()
}

fn frequencies(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn order_parameter_identity(n in 2usize..7, seed in any::<u64>()) {
        let state = random_ensemble(&grid(), &RandomEnsembleSpec::new(n), seed).unwrap();
        let op = order_parameter(&state);
        let nf = n as f64;
        let mut sum = 0.0;
        for a in state.fields() {
            for b in state.fields() {
                let d: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
                sum += d * grid().cell_volume();
            }
        }
        prop_assert!((1.0 - op.norm * op.norm - sum / (2.0 * nf * nf)).abs() <= 1e-12);
        let mean_r: f64 = op.overlaps.iter().map(|c| c.re).sum::<f64>() / nf;
        let mean_s: f64 = op.overlaps.iter().map(|c| c.im).sum::<f64>() / nf;
        prop_assert!((mean_r - op.norm * op.norm).abs() <= 1e-13);
        prop_assert!(mean_s.abs() <= 1e-13);
    }

    #[test]
    fn rhs_forms_agree_and_conserve_mass(omega in frequencies(4), k in 0.0f64..3.0, seed in any::<u64>(), amp in 0.0f64..2.0) {
        let params = LoheParams::new(k, omega).unwrap().centered();
        prop_assert!(params.is_centered());
        let cfg = ModelConfig::new(params, grid(), &Potential::CosineWell { amplitude: amp }).unwrap();
        let state = random_ensemble(&grid(), &RandomEnsembleSpec::new(4), seed).unwrap();
        let a = lohe_rhs(&state, &cfg).unwrap();
        let b = lohe_rhs_pairwise(&state, &cfg).unwrap();
        for ((fa, fb), psi) in a.iter().zip(&b).zip(state.fields()) {
            let diff = fa.values().iter().zip(fb.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-13);
            prop_assert!(inner_product(psi, fa).unwrap().re.abs() <= 1e-12);
        }
    }

    #[test]
    fn centering_is_idempotent_and_keeps_differences(omega in frequencies(5)) {
        let once = LoheParams::new(1.0, omega.clone()).unwrap().centered();
        let twice = once.centered();
        let scale = omega.iter().fold(1.0f64, |m, w| m.max(w.abs()));
        for (a, b) in once.frequencies().iter().zip(twice.frequencies()) {
            prop_assert!((a - b).abs() <= 1e-15 * scale);
        }
        for j in 0..5 {
            for k in 0..5 {
                let before = omega[j] - omega[k];
                let after = once.frequencies()[j] - once.frequencies()[k];
                prop_assert!((before - after).abs() <= 4.0 * f64::EPSILON * scale);
            }
        }
        prop_assert!((once.centering_shift() - omega.iter().sum::<f64>() / 5.0).abs() <= 1e-15);
    }

    #[test]
    fn gauge_phase_leaves_correlations_unchanged(seed in any::<u64>(), phase in -10.0f64..10.0) {
        let state = random_ensemble(&grid(), &RandomEnsembleSpec::new(3), seed).unwrap();
        let rotated = lohe_core::EnsembleState::new(
            0.0,
            state.fields().iter().map(|f| f.scaled(Complex64::from_polar(1.0, -phase))).collect(),
        ).unwrap();
        let d = CorrelationState::from_ensemble(&state).max_difference(&CorrelationState::from_ensemble(&rotated));
        prop_assert!(d <= 1e-15);
    }

    #[test]
    fn zeta_rate_is_the_average_macro_rate(n in 2usize..6, seed in any::<u64>(), omega in frequencies(6)) {
        let state = random_gram(n, 3, seed).unwrap();
        let params = LoheParams::new(0.7, omega[..n].to_vec()).unwrap().centered();
        let rates = macro_rhs(&state, &params).unwrap();
        let avg = rates.dr_tilde.iter().sum::<f64>() / n as f64;
        prop_assert!((avg - zeta_norm_rhs(&state, &params).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn gram_trajectories_stay_in_the_unit_polydisc(n in 2usize..6, seed in any::<u64>(), omega in frequencies(6), k in 0.1f64..2.0) {
        let initial = random_gram(n, 2, seed).unwrap();
        let params = LoheParams::new(k, omega[..n].to_vec()).unwrap().centered();
        let series = integrate(OdeSystem::Full, &initial, &params, IntegrateOptions::new(1e-2, 10.0).with_stride(10)).unwrap();
        for s in &series.states {
            prop_assert!(s.max_modulus() <= 1.0 + 1e-9);
            // the flow approaches rank one, so PSD holds up to the RK4 truncation error
            prop_assert!(s.is_positive_semidefinite(1e-7));
        }
    }

    #[test]
    fn closed_form_solves_the_two_oscillator_equation(k in 0.2f64..3.0, ratio in 0.0f64..0.95, re in -0.9f64..0.9, im in -0.4f64..0.4, t in 0.0f64..5.0) {
        let omega = 0.5 * ratio * k;
        let regime = classify_two(k, omega).unwrap();
        let z0 = Complex64::new(re, im);
        prop_assume!((z0 - regime.unstable_point.unwrap()).norm() > 0.2);
        let h = 1e-5;
        let fd = (z_exact(z0, t + h, &regime).unwrap() - z_exact(z0, t - h, &regime).unwrap()) / (2.0 * h);
        let rhs = lohe_core::correlation::two_rhs(z_exact(z0, t, &regime).unwrap(), omega, k);
        prop_assert!((fd - rhs).norm() <= 1e-8);
    }

    #[test]
    fn distance_identity(seed in any::<u64>(), phi in 0.0f64..1.5) {
        let state = random_ensemble(&grid(), &RandomEnsembleSpec::new(2), seed).unwrap();
        let (a, b) = (&state.fields()[0], &state.fields()[1]);
        let phase = Complex64::from_polar(1.0, phi);
        let direct: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (phase * x - y).norm_sqr()).sum::<f64>()
            * grid().cell_volume();
        let z = inner_product(a, b).unwrap();
        prop_assert!((direct - 2.0 * (1.0 - (phase.conj() * z).re)).abs() <= 1e-12);
    }
}

#[test]
fn closed_form_converges_at_the_advertised_rate() {
    for (k, omega) in [(1.0, 0.375), (2.0, 0.5), (1.0, 0.0)] {
        let regime = classify_two(k, omega).unwrap();
        let gamma = regime.rate.unwrap();
        let stable = regime.stable_point.unwrap();
        for z0 in [Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.6), Complex64::new(-0.2, 0.1)] {
            let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
            let gaps: Vec<f64> = times.iter().map(|t| (z_exact(z0, *t, &regime).unwrap() - stable).norm()).collect();
            let fit = fit_rate(&times, &gaps, default_window(&times)).unwrap();
            assert!((fit.rate - gamma).abs() <= 0.02 * gamma, "{k} {omega} {z0}: {}", fit.rate);
        }
    }
}

#[test]
fn squared_gap_decays_at_twice_the_rate() {
    let regime = classify_two(1.0, 0.375).unwrap();
    let stable = regime.stable_point.unwrap();
    let times: Vec<f64> = (0..=800).map(|i| i as f64 * 0.05).collect();
    let sq: Vec<f64> = times
        .iter()
        .map(|t| (z_exact(Complex64::new(0.0, 0.0), *t, &regime).unwrap() - stable).norm_sqr())
        .collect();
    let fit = fit_rate(&times, &sq, default_window(&times)).unwrap();
    let expect = 2.0 * regime.rate.unwrap();
    assert!((fit.rate - expect).abs() <= 0.02 * expect, "{}", fit.rate);
}

#[test]
fn critical_gap_decays_like_inverse_time() {
    let regime = classify_two(2.0, 1.0).unwrap();
    let times: Vec<f64> = (1..=4000).map(|i| i as f64 * 0.01).collect();
    let gaps: Vec<f64> = times
        .iter()
        .map(|t| (z_exact(Complex64::new(0.0, 0.0), *t, &regime).unwrap() - Complex64::i()).norm())
        .collect();
    let fit = lohe_core::diagnostics::fit_power_law(&times, &gaps, (5.0, 40.0)).unwrap();
    assert!((fit.exponent + 1.0).abs() <= 0.03, "{}", fit.exponent);
}

#[test]
fn records_from_pde_states_are_consistent() {
    let g = grid();
    let cfg = ModelConfig::new(LoheParams::identical(1.0, 3).unwrap(), g, &Potential::Zero).unwrap();
    let state = random_ensemble(&g, &RandomEnsembleSpec::new(3), 77).unwrap();
    let rec = compute_record(&state, &cfg);
    assert!(rec.zeta_norm <= 1.0 + 1e-12);
    for j in 0..3 {
        assert_eq!(rec.pair_distance(j, j), 0.0);
    }
}
