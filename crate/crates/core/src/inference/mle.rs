//! Speed estimation by minimizing the recursion residual of the unwarped
//! sequence, expanded to second order in the hypothesized speed.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MCParams, MotionCloud};
use crate::synth::{ArCoeffs, FftNd, FrameStack};

pub const DEFAULT_U_BOUND: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    InteriorRoot,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    /// Estimated horizontal speed, °/s.
    pub u_hat: f64,
    /// `E(u) = Σ coeffs[k] u^k`.
    pub coeffs: [f64; 5],
    pub provenance: Provenance,
    pub u_bound: f64,
    pub energy: f64,
}

pub fn quartic_energy(coeffs: &[f64; 5], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// Coefficients of the residual energy in `u`. With `curvature = false` the
/// second-order term is dropped and the energy is quadratic.
pub fn quartic_coefficients(stack: &FrameStack, params: &MCParams, curvature: bool) -> Result<[f64; 5]> {
    let g = stack.grid;
    if stack.n_frames < 3 {
        return Err(Error::Config(format!(
            "speed estimation needs at least 3 frames, got {}",
            stack.n_frames
        )));
    }
    if stack.data.iter().all(|v| *v == 0.0) {
        return Err(Error::Numerical("degenerate input: the stack is identically zero".into()));
    }
    let n = g.n_pixels();
    let mut fft = FftNd::new(&[g.ny, g.nx]);
    let spectra: Vec<Vec<Complex64>> = stack
        .frames()
        .map(|f| {
            let mut b: Vec<Complex64> = f.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            fft.forward(&mut b);
            b
        })
        .collect();
    let cloud = MotionCloud::new(*params);
    let dt = g.dt();
    let mut e = [0.0; 5];
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            if !g.is_active(iy, ix) {
                continue;
            }
            let xi = g.xi(iy, ix);
            let c = cloud.spde_coeffs(xi)?;
            if !(c.sigma_w_hat > 0.0) {
                continue;
            }
            let w = 1.0 / (c.sigma_w_hat * c.sigma_w_hat);
            if !w.is_finite() {
                continue;
            }
            let ar = ArCoeffs::new(dt, c.nu_hat);
            let s = Complex64::new(0.0, 2.0 * PI * xi[0]);
            let k = iy * g.nx + ix;
            for l in 1..stack.n_frames - 1 {
                let (ip, i0, im) = (spectra[l + 1][k], spectra[l][k], spectra[l - 1][k]);
                let a = (ip - ar.a1 * i0 - ar.a2 * im) / (dt * dt);
                let b = s * ((ip - im) / dt + c.alpha_hat * im);
                let cc = if curvature {
                    s * s * 0.5 * (ip + im - c.alpha_hat * dt * im)
                } else {
                    Complex64::default()
                };
                e[0] += w * a.norm_sqr();
                e[1] += w * 2.0 * (a * b.conj()).re;
                e[2] += w * (b.norm_sqr() + 2.0 * (a * cc.conj()).re);
                e[3] += w * 2.0 * (b * cc.conj()).re;
                e[4] += w * cc.norm_sqr();
            }
        }
    }
    let scale = 1.0 / (n as f64 * stack.n_frames as f64);
    for v in &mut e {
        *v *= scale;
    }
    Ok(e)
}

/// Real roots of `c3 x³ + c2 x² + c1 x + c0`.
pub fn real_cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let big = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if big == 0.0 {
        return Vec::new();
    }
    let mut roots = if c3.abs() <= 1e-14 * big {
        if c2.abs() <= 1e-14 * big {
            if c1 == 0.0 {
                Vec::new()
            } else {
                vec![-c0 / c1]
            }
        } else {
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 {
                Vec::new()
            } else {
                let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
                let mut r = vec![q / c2];
                if q != 0.0 {
                    r.push(c0 / q);
                }
                r
            }
        }
    } else {
        let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
        let q = (a * a - 3.0 * b) / 9.0;
        let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
        if r * r < q * q * q {
            let th = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
            let m = -2.0 * q.sqrt();
            vec![
                m * (th / 3.0).cos() - a / 3.0,
                m * ((th + 2.0 * PI) / 3.0).cos() - a / 3.0,
                m * ((th - 2.0 * PI) / 3.0).cos() - a / 3.0,
            ]
        } else {
            let big_a = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
            let big_b = if big_a == 0.0 { 0.0 } else { q / big_a };
            vec![big_a + big_b - a / 3.0]
        }
    };
    // Newton polish against the original coefficients.
    for x in &mut roots {
        for _ in 0..4 {
            let f = ((c3 * *x + c2) * *x + c1) * *x + c0;
            let d = (3.0 * c3 * *x + 2.0 * c2) * *x + c1;
            if d == 0.0 {
                break;
            }
            let nx = *x - f / d;
            if !nx.is_finite() {
                break;
            }
            *x = nx;
        }
    }
    roots
}

/// Global minimizer of the quartic on `[-bound, bound]` among the real
/// stationary points and the two endpoints.
pub fn minimize_quartic(coeffs: &[f64; 5], bound: f64) -> (f64, Provenance) {
    let [_, e1, e2, e3, e4] = *coeffs;
    let mut best = (bound, quartic_energy(coeffs, bound), Provenance::Boundary);
    let lo = quartic_energy(coeffs, -bound);
    if lo < best.1 {
        best = (-bound, lo, Provenance::Boundary);
    }
    for r in real_cubic_roots(4.0 * e4, 3.0 * e3, 2.0 * e2, e1) {
        if r.abs() < bound {
            let v = quartic_energy(coeffs, r);
            if v < best.1 {
                best = (r, v, Provenance::InteriorRoot);
            }
        }
    }
    (best.0, best.2)
}

pub fn mle_speed(stack: &FrameStack, params: &MCParams) -> Result<MleReport> {
    mle_speed_with(stack, params, DEFAULT_U_BOUND, true)
}

pub fn mle_speed_with(stack: &FrameStack, params: &MCParams, u_bound: f64, curvature: bool) -> Result<MleReport> {
    let coeffs = quartic_coefficients(stack, params, curvature)?;
    let (u_hat, provenance) = minimize_quartic(&coeffs, u_bound);
    Ok(MleReport {
        u_hat,
        coeffs,
        provenance,
        u_bound,
        energy: quartic_energy(&coeffs, u_hat),
    })
}
