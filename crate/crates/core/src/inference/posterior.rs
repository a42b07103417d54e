use serde::{Deserialize, Serialize};

use super::convergence::{ess, rhat};
use super::model::{ship_param_names, HyperParameters, HYPER_NAMES};
use super::sampler::SamplerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Hierarchical,
    Independent,
}

/// Post-warmup MCMC draws, stored chain-major as
/// `draws[(chain * iterations + t) * n_params + p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChains {
    pub param_names: Vec<String>,
    pub chains: usize,
    pub iterations: usize,
    pub draws: Vec<f64>,
    pub seed: Option<u64>,
    pub sampler_config: Option<SamplerConfig>,
    pub mode: Option<FitMode>,
    /// Ill-conditioning and identifiability notes gathered during the fit.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub param_names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Always zero for the Gibbs sampler.
    pub divergent_count: usize,
}

impl ChainDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl PosteriorChains {
    pub fn new(param_names: Vec<String>, chains: usize, iterations: usize, draws: Vec<f64>) -> Result<Self> {
        if draws.len() != chains * iterations * param_names.len() {
            return Err(Error::invalid(format!(
                "{} draws do not fill {chains} chains x {iterations} iterations x {} parameters",
                draws.len(),
                param_names.len()
            )));
        }
        Ok(PosteriorChains {
            param_names,
            chains,
            iterations,
            draws,
            seed: None,
            sampler_config: None,
            mode: None,
            warnings: Vec::new(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.iterations
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    #[inline]
    pub fn get(&self, chain: usize, t: usize, p: usize) -> f64 {
        self.draws[(chain * self.iterations + t) * self.n_params() + p]
    }

    pub fn chain_draws(&self, chain: usize, p: usize) -> Vec<f64> {
        (0..self.iterations).map(|t| self.get(chain, t, p)).collect()
    }

    /// All draws of parameter `p`, chains concatenated in order.
    pub fn flat_draws(&self, p: usize) -> Vec<f64> {
        (0..self.chains).flat_map(|c| self.chain_draws(c, p)).collect()
    }

    pub fn draws_of(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.flat_draws(self.param_index(name)?))
    }

    pub fn mean_of(&self, name: &str) -> Result<f64> {
        let d = self.draws_of(name)?;
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Ship ids in parameter order, taken from the `a[...]` names.
    pub fn ship_ids(&self) -> Vec<String> {
        self.param_names
            .iter()
            .filter_map(|n| n.strip_prefix("a[").and_then(|r| r.strip_suffix(']')))
            .map(str::to_string)
            .collect()
    }

    /// `(a, b)` draws of one ship, flattened over chains.
    pub fn ship_coefficients(&self, ship_id: &str) -> Result<Vec<(f64, f64)>> {
        let [a_name, b_name, _] = ship_param_names(ship_id);
        let ia = self
            .param_index(&a_name)
            .map_err(|_| Error::UnknownShip(ship_id.to_string()))?;
        let ib = self
            .param_index(&b_name)
            .map_err(|_| Error::UnknownShip(ship_id.to_string()))?;
        Ok(self.flat_draws(ia).into_iter().zip(self.flat_draws(ib)).collect())
    }

    /// Hyper-parameter draws, flattened over chains.
    pub fn hyper_draws(&self) -> Result<Vec<HyperParameters>> {
        let idx: Vec<usize> = HYPER_NAMES
            .iter()
            .map(|n| self.param_index(n))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.total_draws());
        for c in 0..self.chains {
            for t in 0..self.iterations {
                let v = |k: usize| self.get(c, t, idx[k]);
                out.push(HyperParameters {
                    lambda1: v(0),
                    lambda2: v(1),
                    lambda3: v(2),
                    lambda4: v(3),
                    sigma_a: v(4),
                    sigma_b: v(5),
                });
            }
        }
        Ok(out)
    }

    /// Split R-hat and ESS for every parameter.
    pub fn diagnostics(&self) -> Result<ChainDiagnostics> {
        let mut r = Vec::with_capacity(self.n_params());
        let mut e = Vec::with_capacity(self.n_params());
        for p in 0..self.n_params() {
            let per_chain: Vec<Vec<f64>> = (0..self.chains).map(|c| self.chain_draws(c, p)).collect();
            let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
            r.push(rhat(&refs)?);
            e.push(ess(&refs)?);
        }
        Ok(ChainDiagnostics {
            param_names: self.param_names.clone(),
            rhat: r,
            ess: e,
            divergent_count: 0,
        })
    }

    /// Keeps only the named parameters, in the given order.
    pub fn select(&self, names: &[String]) -> Result<PosteriorChains> {
        let idx: Vec<usize> = names.iter().map(|n| self.param_index(n)).collect::<Result<_>>()?;
        let mut draws = Vec::with_capacity(self.total_draws() * idx.len());
        for c in 0..self.chains {
            for t in 0..self.iterations {
                draws.extend(idx.iter().map(|&p| self.get(c, t, p)));
            }
        }
        Ok(PosteriorChains {
            param_names: names.to_vec(),
            draws,
            warnings: self.warnings.clone(),
            ..self.clone()
        })
    }
}
