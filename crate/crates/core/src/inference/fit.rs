//! Probit fits of 2AFC data in log-speed and the algebraic recovery of
//! likelihood widths and prior slopes.

use serde::{Deserialize, Serialize};

use super::observer::{ObserverModel, ZLevel, DEFAULT_U_MAX};
use crate::error::{Error, Result};
use crate::special::{inv_mills, log_norm_cdf};

pub const LAM_FLOOR: f64 = 1e-3;
pub const LAM_CEIL: f64 = 10.0;

/// Responses at one log-speed offset `x = ũ − ũ★`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub n_yes: u32,
    pub n: u32,
}

/// Identifies one psychometric curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub z: f64,
    pub z_star: f64,
    pub u_star: f64,
    pub t_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricFit {
    pub condition: Condition,
    pub mu: f64,
    pub lam: f64,
    pub se_mu: f64,
    pub se_lam: f64,
    pub n_trials: u32,
    pub log_likelihood: f64,
    pub deviance: f64,
    /// Width pinned at [`LAM_FLOOR`]; the data are (nearly) separable.
    pub lam_at_floor: bool,
}

/// Bernoulli log-likelihood of `p = Φ((x − μ)/λ)`.
pub fn log_likelihood(obs: &[Observation], mu: f64, lam: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let eta = (o.x - mu) / lam;
            let yes = f64::from(o.n_yes);
            let no = f64::from(o.n - o.n_yes);
            let mut s = 0.0;
            if yes > 0.0 {
                s += yes * log_norm_cdf(eta);
            }
            if no > 0.0 {
                s += no * log_norm_cdf(-eta);
            }
            s
        })
        .sum()
}

// First and second derivatives of the log-likelihood in the linear predictor.
fn eta_derivs(o: &Observation, eta: f64) -> (f64, f64) {
    let yes = f64::from(o.n_yes);
    let no = f64::from(o.n - o.n_yes);
    let mp = inv_mills(eta);
    let mn = inv_mills(-eta);
    let d1 = yes * mp - no * mn;
    let d2 = -yes * mp * (eta + mp) - no * mn * (mn - eta);
    (d1, d2)
}

fn best_mu(obs: &[Observation], lam: f64, start: f64) -> f64 {
    let mut mu = start;
    let mut ll = log_likelihood(obs, mu, lam);
    for _ in 0..200 {
        let (mut g, mut h) = (0.0, 0.0);
        for o in obs {
            let (d1, d2) = eta_derivs(o, (o.x - mu) / lam);
            g -= d1 / lam;
            h += d2 / (lam * lam);
        }
        if h >= 0.0 || !h.is_finite() {
            break;
        }
        let mut step = -g / h;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = mu + step;
            let cand_ll = log_likelihood(obs, cand, lam);
            if cand_ll >= ll {
                mu = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-13 * (1.0 + mu.abs()) {
            break;
        }
    }
    mu
}

/// Maximum-likelihood `(μ, λ)` for the probit curve `Φ((x − μ)/λ)`.
///
/// λ is searched in `[LAM_FLOOR, LAM_CEIL]` by a log-spaced scan followed by
/// golden-section refinement; μ is profiled out by safeguarded Newton.
pub fn fit_psychometric(condition: Condition, obs: &[Observation]) -> Result<PsychometricFit> {
    let n: u32 = obs.iter().map(|o| o.n).sum();
    let yes: u32 = obs.iter().map(|o| o.n_yes).sum();
    if n == 0 {
        return Err(Error::Fit("no trials to fit".into()));
    }
    if obs.iter().any(|o| o.n_yes > o.n) {
        return Err(Error::Fit("an observation has more positive responses than trials".into()));
    }
    if yes == 0 || yes == n {
        return Err(Error::Fit(format!(
            "degenerate data: all {n} responses are {}",
            if yes == 0 { "negative" } else { "positive" }
        )));
    }
    let mut xs: Vec<f64> = obs.iter().filter(|o| o.n > 0).map(|o| o.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(Error::Fit("need at least two distinct stimulus offsets".into()));
    }
    let start = obs.iter().map(|o| o.x * f64::from(o.n)).sum::<f64>() / f64::from(n);

    let profile = |ln_lam: f64| {
        let lam = ln_lam.exp();
        let mu = best_mu(obs, lam, start);
        (log_likelihood(obs, mu, lam), mu)
    };
    let (lo, hi) = (LAM_FLOOR.ln(), LAM_CEIL.ln());
    let n_scan = 80;
    let grid: Vec<f64> = (0..=n_scan).map(|i| lo + (hi - lo) * i as f64 / n_scan as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&g| profile(g).0).collect();
    let best = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n_scan)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (profile(c).0, profile(d).0);
    while (b - a).abs() > 1e-9 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(d).0;
        }
    }
    let mut ln_lam = 0.5 * (a + b);
    if vals[best] > profile(ln_lam).0 {
        ln_lam = grid[best];
    }
    // Separable data: the likelihood keeps rising towards λ → 0 and is flat
    // to rounding near the floor; report the floor rather than a random point.
    let at_floor = profile(lo).0;
    let here = profile(ln_lam).0;
    if at_floor >= here - 1e-12 * (1.0 + here.abs()) {
        ln_lam = lo;
    }
    let (ll, mu) = profile(ln_lam);
    let lam = ln_lam.exp();
    let lam_at_floor = lam <= LAM_FLOOR * (1.0 + 1e-6);

    // Observed information in (μ, λ).
    let (mut hmm, mut hml, mut hll) = (0.0, 0.0, 0.0);
    for o in obs {
        let eta = (o.x - mu) / lam;
        let (d1, d2) = eta_derivs(o, eta);
        hmm += d2 / (lam * lam);
        hml += (d2 * eta + d1) / (lam * lam);
        hll += (d2 * eta * eta + 2.0 * d1 * eta) / (lam * lam);
    }
    let det = hmm * hll - hml * hml;
    let (se_mu, se_lam) = if det > 0.0 && hmm < 0.0 {
        ((-hll / det).sqrt(), (-hmm / det).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    let deviance = 2.0
        * obs
            .iter()
            .map(|o| {
                let p = crate::special::norm_cdf((o.x - mu) / lam);
                let k = f64::from(o.n_yes);
                let m = f64::from(o.n - o.n_yes);
                let nn = f64::from(o.n);
                let t1 = if k > 0.0 { k * (k / (nn * p)).ln() } else { 0.0 };
                let t2 = if m > 0.0 { m * (m / (nn * (1.0 - p))).ln() } else { 0.0 };
                t1 + t2
            })
            .sum::<f64>();

    Ok(PsychometricFit {
        condition,
        mu,
        lam,
        se_mu,
        se_lam,
        n_trials: n,
        log_likelihood: ll,
        deviance,
        lam_at_floor,
    })
}

/// How the reference prior slope was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum AStar {
    /// Minimize `Σ a_z²` over the one-parameter family of solutions.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidCondition {
    pub z: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub model: ObserverModel,
    pub a_star: f64,
    pub a_star_source: AStar,
    pub invalid: Vec<InvalidCondition>,
}

/// Inverts the fitted `(μ, λ)` at a fixed reference into per-`z` likelihood
/// widths and prior slopes. The fits must include the reference condition.
pub fn recover_prior_likelihood(fits: &[PsychometricFit], a_star: AStar) -> Result<Recovery> {
    let z_star = match fits.first() {
        Some(f) => f.condition.z_star,
        None => return Err(Error::Fit("no fits to invert".into())),
    };
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
    if fits.iter().any(|f| !same(f.condition.z_star, z_star)) {
        return Err(Error::Fit("fits mix different reference frequencies".into()));
    }
    let reference = fits
        .iter()
        .find(|f| same(f.condition.z, z_star))
        .ok_or_else(|| Error::Fit(format!("missing reference condition z = z★ = {z_star}")))?;
    let s2_star = 0.5 * reference.lam * reference.lam;

    let mut invalid = Vec::new();
    let mut rows = Vec::new();
    for f in fits {
        if same(f.condition.z, z_star) {
            continue;
        }
        let s2 = f.lam * f.lam - s2_star;
        if s2 <= 0.0 {
            invalid.push(InvalidCondition {
                z: f.condition.z,
                reason: format!(
                    "λ = {:.4} is below λ★/√2 = {:.4}; implied σ² = {s2:.3e} is not positive",
                    f.lam,
                    s2_star.sqrt()
                ),
            });
            continue;
        }
        rows.push((f.condition.z, s2, f.mu));
    }
    // a_z = a★·r − m with r = σ★²/σ_z², m = μ/σ_z²; the reference has r = 1, m = 0.
    let a = match a_star {
        AStar::Value(v) => v,
        AStar::Auto => {
            let mut num = 0.0;
            let mut den = 1.0;
            for &(_, s2, mu) in &rows {
                let r = s2_star / s2;
                num += r * mu / s2;
                den += r * r;
            }
            num / den
        }
    };
    let mut levels = vec![ZLevel {
        z: z_star,
        sigma: s2_star.sqrt(),
        a,
    }];
    for &(z, s2, mu) in &rows {
        levels.push(ZLevel {
            z,
            sigma: s2.sqrt(),
            a: (a * s2_star - mu) / s2,
        });
    }
    levels.sort_by(|x, y| x.z.total_cmp(&y.z));
    Ok(Recovery {
        model: ObserverModel::new(levels, DEFAULT_U_MAX)?,
        a_star: a,
        a_star_source: a_star,
        invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{psi, psychometric_theoretical};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cond(z: f64) -> Condition {
        Condition { z, z_star: 1.28, u_star: 5.0, t_star: 0.1 }
    }

    fn simulate(mu: f64, lam: f64, xs: &[f64], n: u32, seed: u64) -> Vec<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        xs.iter()
            .map(|&x| {
                let p = psi((x - mu) / lam);
                let n_yes = (0..n).filter(|_| rng.gen::<f64>() < p).count() as u32;
                Observation { x, n_yes, n }
            })
            .collect()
    }

    const XS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];

    #[test]
    fn recovers_generator() {
        let obs = simulate(0.1, 0.3, &XS, 10_000, 3);
        let f = fit_psychometric(cond(1.28), &obs).unwrap();
        assert!((f.mu / 0.1 - 1.0).abs() < 0.05, "{f:?}");
        assert!((f.lam / 0.3 - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.se_mu > 0.0 && f.se_mu < 0.01);
        assert!(!f.lam_at_floor);
    }

    #[test]
    fn grid_certificate() {
        let obs = simulate(-0.05, 0.2, &XS, 40, 8);
        let f = fit_psychometric(cond(1.28), &obs).unwrap();
        for i in 0..100 {
            for j in 0..100 {
                let mu = -1.0 + 2.0 * i as f64 / 99.0;
                let lam = (LAM_FLOOR.ln() + (LAM_CEIL / LAM_FLOOR).ln() * j as f64 / 99.0).exp();
                assert!(f.log_likelihood >= log_likelihood(&obs, mu, lam) - 1e-9);
            }
        }
    }

    #[test]
    fn balanced_responses_center() {
        let obs: Vec<_> = XS.iter().map(|&x| Observation { x, n_yes: 5000, n: 10_000 }).collect();
        let f = fit_psychometric(cond(1.28), &obs).unwrap();
        assert!(f.mu.abs() < 3.0 * f.se_mu.max(1e-6), "{f:?}");
    }

    #[test]
    fn separable_data_hits_floor() {
        let obs: Vec<_> = XS
            .iter()
            .map(|&x| Observation { x, n_yes: if x > 0.1 { 10 } else { 0 }, n: 10 })
            .collect();
        let f = fit_psychometric(cond(1.28), &obs).unwrap();
        assert!(f.lam_at_floor);
        assert!(f.mu > 0.0 && f.mu < 0.25);
    }

    #[test]
    fn degenerate_inputs() {
        let all_yes: Vec<_> = XS.iter().map(|&x| Observation { x, n_yes: 4, n: 4 }).collect();
        let err = fit_psychometric(cond(1.28), &all_yes).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
        let one_x = [Observation { x: 0.1, n_yes: 3, n: 6 }];
        assert!(fit_psychometric(cond(1.28), &one_x).is_err());
    }

    fn forward_fits(model: &ObserverModel, z_star: f64) -> Vec<PsychometricFit> {
        // Exact (μ, λ) implied by the closed-form curve.
        let ls = model.level(z_star).unwrap();
        model
            .levels
            .iter()
            .map(|l| {
                let mu = ls.a * ls.sigma * ls.sigma - l.a * l.sigma * l.sigma;
                let lam = (ls.sigma * ls.sigma + l.sigma * l.sigma).sqrt();
                PsychometricFit {
                    condition: Condition { z: l.z, z_star, u_star: 5.0, t_star: 0.1 },
                    mu,
                    lam,
                    se_mu: 0.0,
                    se_lam: 0.0,
                    n_trials: 0,
                    log_likelihood: 0.0,
                    deviance: 0.0,
                    lam_at_floor: false,
                }
            })
            .collect()
    }

    fn truth() -> ObserverModel {
        ObserverModel::new(
            vec![
                ZLevel { z: 0.8, sigma: 0.31, a: -2.4 },
                ZLevel { z: 1.28, sigma: 0.28, a: -2.0 },
                ZLevel { z: 1.6, sigma: 0.33, a: -1.7 },
                ZLevel { z: 2.1, sigma: 0.26, a: -1.5 },
            ],
            20.0,
        )
        .unwrap()
    }

    #[test]
    fn forward_fits_match_closed_form_curve() {
        let m = truth();
        for f in forward_fits(&m, 1.28) {
            for u in [4.0, 5.0, 6.5] {
                let x = crate::inference::log_speed(u).unwrap() - crate::inference::log_speed(5.0).unwrap();
                let p = psychometric_theoretical(u, f.condition.z, 5.0, 1.28, &m).unwrap();
                assert!((psi((x - f.mu) / f.lam) - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_inversion() {
        let m = truth();
        let r = recover_prior_likelihood(&forward_fits(&m, 1.28), AStar::Value(-2.0)).unwrap();
        for (a, b) in r.model.levels.iter().zip(&m.levels) {
            assert!((a.sigma - b.sigma).abs() < 1e-10 && (a.a - b.a).abs() < 1e-10, "{a:?} {b:?}");
        }
        assert!(r.invalid.is_empty());
    }

    #[test]
    fn reference_self_consistency() {
        let m = truth();
        let fits = forward_fits(&m, 1.28);
        let r = recover_prior_likelihood(&fits[1..2], AStar::Value(-0.7)).unwrap();
        assert_eq!(r.model.levels.len(), 1);
        assert!((r.model.levels[0].sigma.powi(2) - fits[1].lam.powi(2) / 2.0).abs() < 1e-15);
        assert_eq!(r.model.levels[0].a, -0.7);
    }

    #[test]
    fn auto_minimizes_slope_norm() {
        let fits = forward_fits(&truth(), 1.28);
        let r = recover_prior_likelihood(&fits, AStar::Auto).unwrap();
        let norm = |a: f64| {
            recover_prior_likelihood(&fits, AStar::Value(a))
                .unwrap()
                .model
                .levels
                .iter()
                .map(|l| l.a * l.a)
                .sum::<f64>()
        };
        let best = norm(r.a_star);
        for d in [-0.1, -1e-3, 1e-3, 0.1] {
            assert!(norm(r.a_star + d) > best);
        }
        // AUTO and explicit choices share widths.
        let explicit = recover_prior_likelihood(&fits, AStar::Value(-1.0)).unwrap();
        for (a, b) in r.model.levels.iter().zip(&explicit.model.levels) {
            assert_eq!(a.sigma, b.sigma);
        }
    }

    #[test]
    fn narrow_condition_is_flagged() {
        let mut fits = forward_fits(&truth(), 1.28);
        fits[3].lam = fits[1].lam / 2f64.sqrt() * 0.9;
        let r = recover_prior_likelihood(&fits, AStar::Auto).unwrap();
        assert_eq!(r.invalid.len(), 1);
        assert_eq!(r.invalid[0].z, 2.1);
        assert_eq!(r.model.levels.len(), 3);
        assert!(recover_prior_likelihood(&fits[2..], AStar::Auto).is_err());
    }
}
