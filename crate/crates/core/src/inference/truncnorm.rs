//! Exact draws from univariate and bivariate normals restricted to boxes.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use std::f64::consts::SQRT_2;

/// Upper tail probability of the standard normal.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn upper_tail_inv(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Standard normal truncated to `[alpha, beta]` with `alpha >= 0`.
fn std_upper(alpha: f64, beta: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    let qa = upper_tail(alpha);
    let qb = upper_tail(beta);
    if qa > 1e-300 && qa - qb > qa * 1e-12 {
        let q = qa - rng.random::<f64>() * (qa - qb);
        return upper_tail_inv(q).clamp(alpha, beta);
    }
    // Far tail: exponential proposal (Robert, 1995).
    let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    loop {
        let z = alpha - rng.random::<f64>().ln() / rate;
        if z > beta {
            continue;
        }
        if rng.random::<f64>().ln() <= -0.5 * (z - rate).powi(2) {
            return z;
        }
    }
}

/// Standard normal truncated to `[alpha, beta]`.
fn std_truncated(alpha: f64, beta: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    if alpha >= 0.0 {
        std_upper(alpha, beta, rng)
    } else if beta <= 0.0 {
        -std_upper(-beta, -alpha, rng)
    } else {
        // Straddles zero. An interval wider than one unit holds at least a
        // third of the mass, so plain rejection is cheap there.
        if beta - alpha > 1.0 {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z >= alpha && z <= beta {
                    return z;
                }
            }
        }
        let pa = upper_tail(-alpha); // Phi(alpha)
        let pb = upper_tail(-beta);
        let p = pa + rng.random::<f64>() * (pb - pa);
        (-upper_tail_inv(p)).clamp(alpha, beta)
    }
}

/// Draws from `N(mean, sd^2)` restricted to `[lo, hi]`.
pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    debug_assert!(lo < hi && sd > 0.0);
    if !sd.is_finite() {
        return lo + (hi - lo) * rng.random::<f64>();
    }
    let z = std_truncated((lo - mean) / sd, (hi - mean) / sd, rng);
    (mean + sd * z).clamp(lo, hi)
}

/// A bivariate normal given by mean and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Normal2 {
    fn cholesky(&self) -> Option<(f64, f64, f64)> {
        let l11 = self.cov[0][0].sqrt();
        if !(l11 > 0.0) {
            return None;
        }
        let l21 = self.cov[1][0] / l11;
        let d = self.cov[1][1] - l21 * l21;
        if !(d > 0.0) {
            return None;
        }
        Some((l11, l21, d.sqrt()))
    }

    /// Conditional of coordinate `k` given the other one at `other`.
    fn conditional(&self, k: usize, other: f64) -> (f64, f64) {
        let j = 1 - k;
        let m = self.mean[k] + self.cov[k][j] / self.cov[j][j] * (other - self.mean[j]);
        let v = self.cov[k][k] - self.cov[k][j] * self.cov[k][j] / self.cov[j][j];
        (m, v.max(0.0).sqrt())
    }

    /// Samples the distribution restricted to `[lo[0], hi[0]] x [lo[1], hi[1]]`.
    ///
    /// Tries up to `max_tries` unrestricted draws and keeps the first inside
    /// the box. If all fall outside, performs one systematic-scan Gibbs sweep
    /// from `current` instead; both moves leave the truncated law invariant.
    pub fn sample_in_box(
        &self,
        lo: [f64; 2],
        hi: [f64; 2],
        current: [f64; 2],
        max_tries: usize,
        rng: &mut (impl Rng + ?Sized),
    ) -> [f64; 2] {
        if let Some((l11, l21, l22)) = self.cholesky() {
            for _ in 0..max_tries {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let x = [self.mean[0] + l11 * z1, self.mean[1] + l21 * z1 + l22 * z2];
                if x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1] {
                    return x;
                }
            }
        }
        let mut x = current;
        for k in 0..2 {
            let (m, s) = self.conditional(k, x[1 - k]);
            x[k] = if s > 0.0 {
                truncated_normal(m, s, lo[k], hi[k], rng)
            } else {
                m.clamp(lo[k], hi[k])
            };
        }
        x
    }
}
