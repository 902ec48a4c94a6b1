use std::f64::consts::PI;

use mclab_core::inference::{mle_speed, quartic_energy};
use mclab_core::model::{MCParams, SpeedProfile};
use mclab_core::synth::{analytic_spectrum, band_relative_l2, periodogram, synth_ar, synth_spectral, GridSpec};

fn params(u: f64) -> MCParams {
    MCParams::new([u, 0.0], PI / 2.0, PI / 12.0, 1.79, 0.63, 3.0).unwrap()
}

// Speed only enters through the transport phase, so one seed gives the
// same realization in a moving frame. The finite-difference operators make
// dû/du = 1 − O((uΔ)²): about 4% at 5 °/s and 400 fps, 1% at 800 fps.
#[test]
fn mle_is_translation_covariant() {
    for (fps, base) in [(400.0, 0.0), (400.0, 2.0), (800.0, 5.0)] {
        let g = GridSpec::new(64, 64, 8.0, fps);
        for seed in 0..3 {
            let at = |u: f64| mle_speed(&synth_ar(&params(u), &g, 128, seed).unwrap(), &params(u)).unwrap().u_hat;
            let shift = at(base + 1.0) - at(base);
            assert!((shift - 1.0).abs() < 0.02, "fps {fps}, u {base}, seed {seed}: shift {shift}");
        }
    }
}

#[test]
fn mle_minimum_is_global_on_a_dense_grid() {
    let g = GridSpec::new(32, 32, 8.0, 400.0);
    for seed in 0..5 {
        let p = params(2.0 + seed as f64);
        let r = mle_speed(&synth_ar(&p, &g, 32, seed).unwrap(), &p).unwrap();
        for i in 0..=4000 {
            let u = r.u_bound * (i as f64 / 2000.0 - 1.0);
            assert!(r.energy <= quartic_energy(&r.coeffs, u) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn recursion_and_fourier_slice_agree_at_small_scale() {
    let p = params(1.0);
    let g = GridSpec::new(16, 16, 4.0, 50.0).with_delta(0.005);
    let nt = 32;
    let ar: Vec<_> = (0..300).map(|s| synth_ar(&p, &g, nt, s).unwrap()).collect();
    let sp: Vec<_> = (0..300).map(|s| synth_spectral(&p, &g, nt, 10_000 + s).unwrap()).collect();
    let analytic = analytic_spectrum(&p, &g, nt, SpeedProfile::SpdeExact);
    let (pa, ps) = (periodogram(&ar).unwrap(), periodogram(&sp).unwrap());
    // 300 exponential draws per bin: ≈ 6% noise each
    assert!(band_relative_l2(&ps, &analytic, 0.01) < 0.1);
    assert!(band_relative_l2(&pa, &analytic, 0.01) < 0.15);
}
