//! Bayesian observer: Gaussian measurement in log-speed, Laplacian prior,
//! MAP read-out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::special::norm_cdf;

/// Offset of the log-speed coordinate, °/s.
pub const U0: f64 = 0.3;
/// Default prior cutoff, °/s.
pub const DEFAULT_U_MAX: f64 = 20.0;

/// Sigmoid of the psychometric curves: the standard normal CDF.
pub fn psi(t: f64) -> f64 {
    norm_cdf(t)
}

/// `ln(1 + u/u0)`.
pub fn log_speed(u: f64) -> Result<f64> {
    if !(u > -U0) {
        return domain(format!("speed must exceed -{U0} °/s, got {u}"));
    }
    Ok((u / U0).ln_1p())
}

pub fn inv_log_speed(l: f64) -> f64 {
    U0 * l.exp_m1()
}

/// Likelihood width and prior slope at one spatial frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZLevel {
    pub z: f64,
    pub sigma: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverModel {
    pub levels: Vec<ZLevel>,
    pub u_max: f64,
    pub u0: f64,
}

const Z_MATCH: f64 = 1e-9;

impl ObserverModel {
    pub fn new(levels: Vec<ZLevel>, u_max: f64) -> Result<Self> {
        if !(u_max > 0.0) {
            return config(format!("u_max must be positive, got {u_max}"));
        }
        for l in &levels {
            if !(l.sigma > 0.0) || !l.a.is_finite() || !(l.z > 0.0) {
                return config(format!("invalid level at z = {}: sigma = {}, a = {}", l.z, l.sigma, l.a));
            }
        }
        Ok(Self {
            levels,
            u_max,
            u0: U0,
        })
    }

    pub fn level(&self, z: f64) -> Result<&ZLevel> {
        self.levels
            .iter()
            .find(|l| (l.z - z).abs() <= Z_MATCH * z.abs().max(1.0))
            .ok_or_else(|| crate::Error::Domain(format!("observer model has no level at z = {z}")))
    }

    pub fn log_u_max(&self) -> f64 {
        (self.u_max / self.u0).ln_1p()
    }
}

/// Closed-form MAP read-out `m − a σ²`, clamped to the prior support.
pub fn map_estimate(m: f64, z: f64, model: &ObserverModel) -> Result<f64> {
    let l = model.level(z)?;
    Ok((m - l.a * l.sigma * l.sigma).clamp(0.0, model.log_u_max()))
}

/// Probability that the stimulus moving at `u` with frequency `z_star` is
/// judged faster than the one moving at `u_star` with frequency `z`.
pub fn psychometric_theoretical(
    u: f64,
    z: f64,
    u_star: f64,
    z_star: f64,
    model: &ObserverModel,
) -> Result<f64> {
    let lz = model.level(z)?;
    let ls = model.level(z_star)?;
    let (s2z, s2s) = (lz.sigma * lz.sigma, ls.sigma * ls.sigma);
    let shift = log_speed(u)? - log_speed(u_star)? - ls.a * s2s + lz.a * s2z;
    Ok(psi(shift / (s2s + s2z).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

/// Speed (°/s) and spatial frequency (c/°) of each interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub first: (f64, f64),
    pub second: (f64, f64),
}

/// Draws `M ~ N(ũ, σ_z²)` per interval and reports the interval with the
/// larger MAP estimate.
pub fn simulate_observer(schedule: &[TrialSpec], model: &ObserverModel, seed: u64) -> Result<Vec<Choice>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(schedule.len());
    for t in schedule {
        let mut est = [0.0; 2];
        for (slot, &(u, z)) in est.iter_mut().zip([t.first, t.second].iter()) {
            let level = model.level(z)?;
            let m = Normal::new(log_speed(u)?, level.sigma)
                .map_err(|e| crate::Error::Domain(e.to_string()))?
                .sample(&mut rng);
            *slot = map_estimate(m, z, model)?;
        }
        let choice = if est[0] > est[1] {
            Choice::First
        } else if est[1] > est[0] {
            Choice::Second
        } else if rng.gen::<bool>() {
            Choice::First
        } else {
            Choice::Second
        };
        out.push(choice);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(u_max: f64) -> ObserverModel {
        ObserverModel::new(
            vec![
                ZLevel { z: 1.0, sigma: 0.25, a: -1.5 },
                ZLevel { z: 2.0, sigma: 0.35, a: -0.5 },
            ],
            u_max,
        )
        .unwrap()
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.0), 0.5);
        // Oracle: trapezoid integral of the density from −12 to 1.6449.
        let n = 200_000;
        let (a, b) = (-12.0, 1.6449f64);
        let h = (b - a) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        assert!((psi(1.6449) - s * h).abs() < 1e-8);
        assert!((psi(1.6449) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn log_speed_values() {
        assert_eq!(log_speed(0.0).unwrap(), 0.0);
        assert!((log_speed(0.3).unwrap() - 2f64.ln()).abs() < 1e-15);
        for u in [1.0, 5.0, 10.0] {
            assert!((inv_log_speed(log_speed(u).unwrap()) - u).abs() < 1e-12);
        }
        assert!(log_speed(-0.3).is_err());
    }

    #[test]
    fn map_examples() {
        let flat = ObserverModel::new(vec![ZLevel { z: 1.0, sigma: 0.4, a: 0.0 }], 20.0).unwrap();
        assert_eq!(map_estimate(1.7, 1.0, &flat).unwrap(), 1.7);
        let wide = ObserverModel::new(vec![ZLevel { z: 1.0, sigma: 0.2f64.sqrt(), a: -1.0 }], 1e4).unwrap();
        assert!((map_estimate(5.0, 1.0, &wide).unwrap() - 5.2).abs() < 1e-12);
        let tight = ObserverModel::new(vec![ZLevel { z: 1.0, sigma: 0.2f64.sqrt(), a: -1.0 }], 20.0).unwrap();
        assert_eq!(map_estimate(5.0, 1.0, &tight).unwrap(), log_speed(20.0).unwrap());
        assert_eq!(map_estimate(-1.0, 1.0, &tight).unwrap(), 0.0);
        assert!(map_estimate(1.0, 3.0, &tight).is_err());
    }

    #[test]
    fn theoretical_special_cases() {
        let m = model(20.0);
        assert_eq!(psychometric_theoretical(5.0, 1.0, 5.0, 1.0, &m).unwrap(), 0.5);
        let same = ObserverModel::new(
            vec![ZLevel { z: 1.0, sigma: 0.3, a: -1.0 }, ZLevel { z: 2.0, sigma: 0.3, a: -1.0 }],
            20.0,
        )
        .unwrap();
        for u in [3.0, 5.0, 7.0] {
            let p = psychometric_theoretical(u, 2.0, 5.0, 1.0, &same).unwrap();
            let d = log_speed(u).unwrap() - log_speed(5.0).unwrap();
            assert!((p - psi(d / (2f64.sqrt() * 0.3))).abs() < 1e-15);
        }
    }

    #[test]
    fn simulation_matches_closed_form() {
        // Speeds well inside the prior support so clamping is negligible.
        let m = model(1e4);
        let n = 100_000;
        for (u, z) in [(3.0, 2.0), (4.0, 1.0), (5.0, 2.0), (6.0, 1.0), (7.0, 2.0)] {
            let spec = vec![TrialSpec { first: (u, 1.0), second: (5.0, z) }; n];
            let r = simulate_observer(&spec, &m, 17).unwrap();
            let rate = r.iter().filter(|c| **c == Choice::First).count() as f64 / n as f64;
            let p = psychometric_theoretical(u, z, 5.0, 1.0, &m).unwrap();
            assert!((rate - p).abs() < 0.01, "u={u} z={z}: {rate} vs {p}");
        }
    }

    #[test]
    fn noiseless_observer_picks_faster() {
        let m = ObserverModel::new(
            vec![ZLevel { z: 1.0, sigma: 1e-9, a: -1.0 }, ZLevel { z: 2.0, sigma: 1e-9, a: -1.0 }],
            20.0,
        )
        .unwrap();
        let spec: Vec<_> = (0..50)
            .map(|i| {
                let u = 3.0 + 0.1 * i as f64;
                if i % 2 == 0 {
                    TrialSpec { first: (u, 1.0), second: (5.05, 2.0) }
                } else {
                    TrialSpec { first: (5.05, 2.0), second: (u, 1.0) }
                }
            })
            .collect();
        let r = simulate_observer(&spec, &m, 1).unwrap();
        for (t, c) in spec.iter().zip(&r) {
            let faster = if t.first.0 > t.second.0 { Choice::First } else { Choice::Second };
            assert_eq!(*c, faster);
        }
        assert_eq!(r, simulate_observer(&spec, &m, 1).unwrap());
    }

    proptest! {
        #[test]
        fn psi_symmetry(t in -40.0f64..40.0) {
            prop_assert!((psi(t) + psi(-t) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn theoretical_monotone_in_u(u in 0.0f64..30.0, du in 1e-3f64..5.0) {
            let m = model(20.0);
            let a = psychometric_theoretical(u, 2.0, 5.0, 1.0, &m).unwrap();
            let b = psychometric_theoretical(u + du, 2.0, 5.0, 1.0, &m).unwrap();
            prop_assert!(b >= a && a > 0.0 && b < 1.0);
        }
    }
}
