//! Transient solver: circuit bounds, step convergence, superposition order
//! and the inductive reset.

use proptest::prelude::*;
use snspd_pnr::electrothermal::{
    delayed_current_fraction, fit_rise_exponent, rise_times, simulate_transient,
    simulate_transient_fixed_step, ElectrothermalParams, TransientResult,
};

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn check_circuit(p: &ElectrothermalParams, r: &TransientResult) {
    let ib = p.bias_current_amperes;
    assert_eq!(r.times.len(), r.current.len());
    assert_eq!(r.times.len(), r.voltage.len());
    assert_eq!(r.current[0], ib);
    for (&i, &v) in r.current.iter().zip(&r.voltage) {
        assert!((0.0..=ib).contains(&i), "current {i} outside [0, {ib}]");
        assert_eq!(v, (ib - i) * p.load_resistance_ohms);
    }
}

#[test]
fn simultaneous_absorptions_respect_circuit_bounds() {
    let p = ElectrothermalParams::default();
    for n in 1..=8 {
        check_circuit(&p, &simulate_transient(&p, &vec![0.0; n]).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn delayed_absorptions_respect_circuit_bounds(delays in prop::collection::vec(0.0f64..8e-9, 1..5)) {
        let p = ElectrothermalParams::default();
        let mut times = delays;
        times.sort_by(f64::total_cmp);
        check_circuit(&p, &simulate_transient_fixed_step(&p, &times).unwrap());
    }
}

#[test]
fn halving_the_step_moves_rise_and_lifetime_below_one_percent() {
    let p = ElectrothermalParams::default();
    let fine = ElectrothermalParams { time_step_seconds: 0.5 * p.time_step_seconds, ..p };
    for n in 1..=7 {
        let a = simulate_transient_fixed_step(&p, &vec![0.0; n]).unwrap();
        let b = simulate_transient_fixed_step(&fine, &vec![0.0; n]).unwrap();
        let (ra, rb) = (a.rise_time().unwrap(), b.rise_time().unwrap());
        assert!(relative(ra, rb) < 0.01, "n={n}: rise {ra} vs {rb}");
        let (la, lb) = (a.domain_lifetime.unwrap(), b.domain_lifetime.unwrap());
        assert!(relative(la, lb) < 0.01, "n={n}: lifetime {la} vs {lb}");
    }
}

#[test]
fn more_simultaneous_photons_never_rise_slower() {
    let t = rise_times(&ElectrothermalParams::default(), 8).unwrap();
    for w in t.windows(2) {
        assert!(w[1].1 <= w[0].1, "{w:?}");
    }
    assert!(t.windows(2).all(|w| w[1].1 < w[0].1), "strictly decreasing: {t:?}");
}

#[test]
fn rise_time_follows_a_negative_power_law() {
    let p = fit_rise_exponent(&ElectrothermalParams::default(), 7).unwrap();
    assert!((-0.45..=-0.15).contains(&p), "exponent {p}");
}

#[test]
fn current_resets_with_inductive_time_constant() {
    let p = ElectrothermalParams::default();
    let r = simulate_transient(&p, &[0.0]).unwrap();
    let collapse = r.domain_lifetime.expect("domain collapses");
    let tau = p.kinetic_inductance_henries / p.load_resistance_ohms;
    let ib = p.bias_current_amperes;
    let deficit = |t: f64| ib - r.current_at(t);
    let (t1, t2) = (collapse + 0.5 * tau, collapse + 2.5 * tau);
    let fitted = (t2 - t1) / (deficit(t1) / deficit(t2)).ln();
    assert!(relative(fitted, tau) < 0.05, "tau {fitted} vs {tau}");
    let end = *r.times.last().unwrap();
    assert!(deficit(end) < 0.01 * ib, "not recovered by {end}");
    let recovered = r
        .times
        .iter()
        .zip(&r.current)
        .find(|(&t, &i)| t > collapse && ib - i < 0.01 * ib)
        .map(|(&t, _)| t - collapse)
        .unwrap();
    // Recovery from a partial deficit takes at most ln(100) time constants.
    assert!(recovered <= 100f64.ln() * tau * 1.05, "{recovered}");
}

#[test]
fn delayed_photon_sees_about_half_the_current_at_a_third_of_the_lifetime() {
    let p = ElectrothermalParams::default();
    let lifetime = simulate_transient(&p, &[0.0]).unwrap().domain_lifetime.unwrap();
    let f = delayed_current_fraction(&p, lifetime / 3.0).unwrap();
    assert!((0.3..=0.7).contains(&f), "fraction {f}");
    assert_eq!(delayed_current_fraction(&p, 0.0).unwrap(), 1.0);
}
