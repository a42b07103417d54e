//! Split-chain potential scale reduction and effective sample size.
//!
//! Both follow the multi-chain definitions used by Stan: every chain is cut
//! in half (dropping the middle draw for odd lengths) so that drift within a
//! chain shows up as between-chain variance. ESS combines the chains'
//! autocorrelations through the marginal variance estimate and truncates the
//! sum with Geyer's initial positive (monotone) sequence.

use crate::error::{Error, Result};

struct SplitChains {
    halves: Vec<Vec<f64>>,
    n: usize,
    means: Vec<f64>,
    /// Within-chain variance `W` (mean of `n - 1` normalized variances).
    within: f64,
    /// Between-chain variance `B`.
    between: f64,
}

impl SplitChains {
    fn new(chains: &[&[f64]]) -> Result<Self> {
        if chains.len() < 2 {
            return Err(Error::invalid("convergence diagnostics need at least 2 chains"));
        }
        let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
        if len < 4 {
            return Err(Error::invalid("convergence diagnostics need at least 4 draws per chain"));
        }
        if chains.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("chains must have equal length"));
        }
        let n = len / 2;
        let halves: Vec<Vec<f64>> = chains
            .iter()
            .flat_map(|c| [c[..n].to_vec(), c[len - n..].to_vec()])
            .collect();
        let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n as f64).collect();
        let m = halves.len() as f64;
        let grand = means.iter().sum::<f64>() / m;
        let between = n as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
        let within = halves
            .iter()
            .zip(&means)
            .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
            .sum::<f64>()
            / m;
        Ok(SplitChains {
            halves,
            n,
            means,
            within,
            between,
        })
    }

    fn var_plus(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) / n * self.within + self.between / n
    }

    fn total(&self) -> usize {
        self.n * self.halves.len()
    }

    /// Mean over chains of the biased autocovariance at `lag`.
    fn mean_autocov(&self, lag: usize) -> f64 {
        let n = self.n;
        let sum: f64 = self
            .halves
            .iter()
            .zip(&self.means)
            .map(|(h, mu)| {
                (0..n - lag).map(|i| (h[i] - mu) * (h[i + lag] - mu)).sum::<f64>() / n as f64
            })
            .sum();
        sum / self.halves.len() as f64
    }
}

/// Split potential scale reduction factor of one parameter.
///
/// Chains with no variance at all give exactly 1; constant chains that
/// disagree with each other give infinity.
pub fn rhat(chains: &[&[f64]]) -> Result<f64> {
    let s = SplitChains::new(chains)?;
    if s.within <= 0.0 {
        return Ok(if s.between <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((s.var_plus() / s.within).sqrt())
}

/// Effective sample size of one parameter, capped at the number of draws.
pub fn ess(chains: &[&[f64]]) -> Result<f64> {
    let s = SplitChains::new(chains)?;
    let total = s.total() as f64;
    if s.within <= 0.0 {
        return Ok(if s.between <= 0.0 { total } else { s.halves.len() as f64 });
    }
    let var_plus = s.var_plus();
    let rho = |lag: usize| 1.0 - (s.within - s.mean_autocov(lag)) / var_plus;

    // Sum of autocorrelation pairs (rho_{2k} + rho_{2k+1}) while positive,
    // forced to be non-increasing.
    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < s.n {
        let r0 = if lag == 0 { 1.0 } else { rho(lag) };
        let pair = r0 + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (2.0 * tau_sum - 1.0).max(f64::MIN_POSITIVE);
    Ok((total / tau).min(total))
}
