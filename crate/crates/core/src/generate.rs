//! Seeded random instances for tests, benches and the CLI.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::divergence::FiniteDist;
use crate::dmof::{ExplicitDmof, ExplicitModel, ScoredDmof, ScoredModel};
use crate::error::{Error, Result};

/// A draw from the flat Dirichlet on `n` points.
pub fn flat_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<FiniteDist> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    FiniteDist::new(w)
}

pub fn policy_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("pi{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplicitGen {
    pub n_models: usize,
    pub n_policies: usize,
    pub n_obs: usize,
    pub bound: f64,
}

impl Default for ExplicitGen {
    fn default() -> Self {
        Self { n_models: 4, n_policies: 3, n_obs: 5, bound: 1.0 }
    }
}

/// Losses uniform on `[0, B]`, data laws flat-Dirichlet, real model 0.
pub fn random_explicit<R: Rng + ?Sized>(gen: &ExplicitGen, rng: &mut R) -> Result<ExplicitDmof> {
    let models = (0..gen.n_models)
        .map(|_| {
            let obs_dist = flat_dirichlet(gen.n_obs, rng)?;
            let loss_row = (0..gen.n_policies).map(|_| rng.random::<f64>() * gen.bound).collect();
            Ok(ExplicitModel { obs_dist, loss_row })
        })
        .collect::<Result<Vec<_>>>()?;
    ExplicitDmof::new(gen.n_obs, models, policy_labels(gen.n_policies), gen.bound, Some(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoredGen {
    pub n_models: usize,
    pub n_policies: usize,
    pub bound: f64,
    /// Relative log-likelihoods are uniform on `[-log_lik_spread, 0]`.
    pub log_lik_spread: f64,
}

impl Default for ScoredGen {
    fn default() -> Self {
        Self { n_models: 5, n_policies: 4, bound: 1.0, log_lik_spread: 5.0 }
    }
}

/// Losses uniform on `[0, B]`, real model chosen uniformly.
pub fn random_scored<R: Rng + ?Sized>(gen: &ScoredGen, rng: &mut R) -> Result<ScoredDmof> {
    if gen.n_models == 0 {
        return Err(Error::Empty);
    }
    let models = (0..gen.n_models)
        .map(|_| ScoredModel {
            loss_row: (0..gen.n_policies).map(|_| rng.random::<f64>() * gen.bound).collect(),
            rel_log_lik: -rng.random::<f64>() * gen.log_lik_spread,
        })
        .collect();
    let star = rng.random_range(0..gen.n_models);
    ScoredDmof::new(models, policy_labels(gen.n_policies), gen.bound, Some(star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;

    #[test]
    fn generated_instances_validate_and_repeat() {
        let a = random_explicit(&ExplicitGen::default(), &mut stream_rng(3, &[])).unwrap();
        let b = random_explicit(&ExplicitGen::default(), &mut stream_rng(3, &[])).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let s = random_scored(&ScoredGen::default(), &mut stream_rng(3, &[])).unwrap();
        s.validate().unwrap();
        assert!(s.models.iter().all(|m| m.rel_log_lik <= 0.0 && m.rel_log_lik >= -5.0));
    }
}
