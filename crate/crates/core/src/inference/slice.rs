//! Univariate slice sampling with stepping out and shrinkage (Neal, 2003),
//! restricted to a closed interval.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct SliceSampler {
    width: f64,
    max_steps: usize,
    adapting: bool,
    jump_sum: f64,
    jump_count: u64,
}

impl SliceSampler {
    pub fn new(width: f64) -> Self {
        SliceSampler {
            width,
            max_steps: 32,
            adapting: true,
            jump_sum: 0.0,
            jump_count: 0,
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Stops width adaptation; called at the end of warmup.
    pub fn freeze(&mut self) {
        self.adapting = false;
    }

    /// Draws the next state given the current `x0` inside `[lo, hi]`.
    /// `log_density` may return `-inf`; it must be finite at `x0`.
    pub fn step<F, R>(&mut self, x0: f64, lo: f64, hi: f64, log_density: F, rng: &mut R) -> f64
    where
        F: Fn(f64) -> f64,
        R: Rng + ?Sized,
    {
        debug_assert!(lo <= x0 && x0 <= hi);
        let level = log_density(x0) + rng.random::<f64>().ln();

        // Randomly positioned initial interval, then step out.
        let w = self.width;
        let mut left = x0 - w * rng.random::<f64>();
        let mut right = left + w;
        let mut j = (self.max_steps as f64 * rng.random::<f64>()) as usize;
        let mut k = self.max_steps - 1 - j;
        while j > 0 && left > lo && log_density(left) > level {
            left -= w;
            j -= 1;
        }
        while k > 0 && right < hi && log_density(right) > level {
            right += w;
            k -= 1;
        }
        left = left.max(lo);
        right = right.min(hi);

        let x1 = loop {
            let x = left + (right - left) * rng.random::<f64>();
            if log_density(x) > level {
                break x;
            }
            if x < x0 {
                left = x;
            } else {
                right = x;
            }
            // The interval can only collapse onto x0 through rounding.
            if right - left <= f64::EPSILON * x0.abs().max(1.0) {
                break x0;
            }
        };

        if self.adapting {
            self.jump_sum += (x1 - x0).abs();
            self.jump_count += 1;
            if self.jump_count >= 10 {
                let mean_jump = self.jump_sum / self.jump_count as f64;
                if mean_jump > 0.0 {
                    self.width = 3.0 * mean_jump;
                }
            }
        }
        x1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn samples_truncated_standard_normal() {
        let mut rng = stream(3, "slice-test", 0);
        let mut s = SliceSampler::new(0.5);
        let mut x = 0.3;
        let n = 40_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            x = s.step(x, 0.0, 10.0, |v| -0.5 * v * v, &mut rng);
            assert!((0.0..=10.0).contains(&x));
            if i == 1000 {
                s.freeze();
            }
            sum += x;
            sumsq += x * x;
        }
        // Half-normal: mean sqrt(2/pi), second moment 1.
        let mean = sum / n as f64;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02, "{mean}");
        assert!((sumsq / n as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn triangle_density_mean() {
        let mut rng = stream(5, "slice-test", 1);
        let mut s = SliceSampler::new(1.0);
        let mut x = 0.5;
        let n = 40_000;
        let mut sum = 0.0;
        for _ in 0..n {
            x = s.step(x, 0.0, 1.0, |v: f64| v.ln(), &mut rng);
            sum += x;
        }
        assert!((sum / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }
}
