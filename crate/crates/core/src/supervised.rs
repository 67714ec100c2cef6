//! Supervised learning as a DMOF: i.i.d. samples from `Φ(M)` over a finite
//! sample space `X`, hypotheses as decisions, and `L(M, h) = E_{x∼Φ(M)} ℓ(x, h)`.
//!
//! `X` is a single index set; encoding input/label pairs into it is up to
//! the instance author.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::FiniteDist;
use crate::dmof::{edd, eoec, lambda_fast_sl, EddOutcome, EoecOutcome, ScoredDmof, ScoredModel};
use crate::error::{Error, Result};
use crate::generate::{flat_dirichlet, policy_labels};
use crate::sequential::{RateRow, RateSummary};
use crate::stats::{stream_rng, FrequencyCheck};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlInstance {
    pub n_x: usize,
    pub hypotheses: Vec<String>,
    /// `pointwise_loss[x][h]`, in `[0, B]`.
    pub pointwise_loss: Vec<Vec<f64>>,
    pub model_dists: Vec<FiniteDist>,
    /// Default sample count.
    pub n: usize,
    pub bound: f64,
    pub star: usize,
}

impl SlInstance {
    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.hypotheses.is_empty() || self.model_dists.is_empty() {
            return Err(Error::Empty);
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::NonPositiveArgument { name: "bound", value: self.bound });
        }
        if self.pointwise_loss.len() != self.n_x {
            return Err(Error::LengthMismatch { expected: self.n_x, got: self.pointwise_loss.len() });
        }
        for row in &self.pointwise_loss {
            if row.len() != self.hypotheses.len() {
                return Err(Error::LengthMismatch { expected: self.hypotheses.len(), got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=self.bound).contains(*v)) {
                return Err(Error::RangeViolation { value: *v, bound: self.bound });
            }
        }
        if let Some(d) = self.model_dists.iter().find(|d| d.len() != self.n_x) {
            return Err(Error::LengthMismatch { expected: self.n_x, got: d.len() });
        }
        if self.star >= self.model_dists.len() {
            return Err(Error::IndexOutOfRange { what: "models", index: self.star, len: self.model_dists.len() });
        }
        Ok(())
    }

    pub fn n_models(&self) -> usize {
        self.model_dists.len()
    }

    pub fn n_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn sl_loss(&self, m: usize, h: usize) -> Result<f64> {
        let d = self
            .model_dists
            .get(m)
            .ok_or(Error::IndexOutOfRange { what: "models", index: m, len: self.n_models() })?;
        if h >= self.n_hypotheses() {
            return Err(Error::IndexOutOfRange { what: "hypotheses", index: h, len: self.n_hypotheses() });
        }
        let v: f64 = d.weights().iter().zip(&self.pointwise_loss).map(|(p, row)| p * row[h]).sum();
        Ok(v.clamp(0.0, self.bound))
    }

    /// `loss[m][h]`; the centered form subtracts each row's minimum.
    pub fn loss_matrix(&self, centered: bool) -> Result<Vec<Vec<f64>>> {
        (0..self.n_models())
            .map(|m| {
                let mut row = (0..self.n_hypotheses()).map(|h| self.sl_loss(m, h)).collect::<Result<Vec<_>>>()?;
                if centered {
                    let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                    row.iter_mut().for_each(|v| *v -= lo);
                }
                Ok(row)
            })
            .collect()
    }

    pub fn sample_sl_dataset(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        self.sample_with(n, &mut stream_rng(seed, &[]))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::NonPositiveArgument { name: "n", value: 0.0 });
        }
        let d = &self.model_dists[self.star];
        Ok((0..n).map(|_| d.sample(rng)).collect())
    }

    /// `Σ_i ln Φ(m)(x_i)`, `-inf` if some sample is impossible under `m`.
    pub fn rel_log_likelihood(&self, m: usize, data: &[usize]) -> Result<f64> {
        let counts = self.counts(data)?;
        Ok(self.log_lik_from_counts(m, &counts))
    }

    fn counts(&self, data: &[usize]) -> Result<Vec<u64>> {
        let mut c = vec![0u64; self.n_x];
        for &x in data {
            *c.get_mut(x).ok_or(Error::IndexOutOfRange { what: "samples", index: x, len: self.n_x })? += 1;
        }
        Ok(c)
    }

    fn log_lik_from_counts(&self, m: usize, counts: &[u64]) -> f64 {
        let d = &self.model_dists[m];
        let mut total = 0.0;
        for (x, &k) in counts.iter().enumerate().filter(|(_, &k)| k > 0) {
            let p = d.get(x);
            if p == 0.0 {
                return f64::NEG_INFINITY;
            }
            total += k as f64 * p.ln();
        }
        total
    }

    pub fn scored(&self, data: &[usize], centered: bool) -> Result<ScoredDmof> {
        self.scored_with_losses(&self.loss_matrix(centered)?, data)
    }

    fn scored_with_losses(&self, losses: &[Vec<f64>], data: &[usize]) -> Result<ScoredDmof> {
        let counts = self.counts(data)?;
        let models = losses
            .iter()
            .enumerate()
            .map(|(m, row)| ScoredModel { loss_row: row.clone(), rel_log_lik: self.log_lik_from_counts(m, &counts) })
            .collect();
        ScoredDmof::new(models, self.hypotheses.clone(), self.bound, Some(self.star))
    }
}

/// EDD with `λ = 4B/N` on the plain loss.
pub fn edd_sl(inst: &SlInstance, data: &[usize], eps: f64) -> Result<EddOutcome> {
    edd_sl_with(inst, data, eps, false)
}

/// EDD with `λ = 4B/N`, optionally on the centered loss.
pub fn edd_sl_with(inst: &SlInstance, data: &[usize], eps: f64, centered: bool) -> Result<EddOutcome> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let lambda = lambda_fast_sl(inst.bound, data.len())?;
    edd(&inst.scored(data, centered)?, lambda, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastSlReport {
    pub n: usize,
    pub centered: bool,
    pub lambda: f64,
    /// Uncentered: `3 min_h L(M*, h) + (8B/N) ln(|M|/δ)`; centered: `(8B/N) ln(|M|/δ)`.
    pub bound: f64,
    /// Per trial: `L(M*, p̂)`, or the regret `L(M*, p̂) − min_h L(M*, h)` when centered.
    pub rows: Vec<RateRow>,
    /// Violations of the bound by EDD's loss (or regret).
    pub check: FrequencyCheck,
    /// Violations of the bound by EOEC on the same datasets.
    pub eoec_check: FrequencyCheck,
}

/// Monte Carlo check of the supervised fast rate at the instance's `N`.
pub fn check_fast_sl(
    inst: &SlInstance,
    delta: f64,
    trials: usize,
    seed: u64,
    centered: bool,
    eps: f64,
) -> Result<FastSlReport> {
    fast_sl_at(inst, inst.n, delta, trials, seed, centered, eps, &|_, _, _| Ok(()))
}

/// Per-trial view of a supervised run: the row, the EDD solution and the EOEC solution.
pub type SlInspect<'a> = &'a (dyn Fn(&RateRow, &EddOutcome, &EoecOutcome) -> Result<()> + Sync);

/// [`check_fast_sl`], handing every trial to `inspect`.
pub fn check_fast_sl_inspect(
    inst: &SlInstance,
    delta: f64,
    trials: usize,
    seed: u64,
    centered: bool,
    eps: f64,
    inspect: SlInspect,
) -> Result<FastSlReport> {
    fast_sl_at(inst, inst.n, delta, trials, seed, centered, eps, inspect)
}

#[allow(clippy::too_many_arguments)]
fn fast_sl_at(
    inst: &SlInstance,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
    centered: bool,
    eps: f64,
    inspect: SlInspect,
) -> Result<FastSlReport> {
    inst.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::NonPositiveArgument { name: "delta", value: delta });
    }
    let lambda = lambda_fast_sl(inst.bound, n)?;
    let raw = inst.loss_matrix(false)?;
    let losses = if centered { inst.loss_matrix(true)? } else { raw.clone() };
    let best = raw[inst.star].iter().cloned().fold(f64::INFINITY, f64::min);
    let rate = 8.0 * inst.bound / n as f64 * (inst.n_models() as f64 / delta).ln();
    let bound = if centered { rate } else { 3.0 * best + rate };
    let cells = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, &[n as u64, trial as u64]);
            let data = inst.sample_with(n, &mut rng)?;
            let scored = inst.scored_with_losses(&losses, &data)?;
            let out = edd(&scored, lambda, eps)?;
            let e = eoec(&scored, lambda, eps)?;
            let certified = out.solved.solution.verify(&out.solved.game, eps, 1e-12)?.holds
                && e.solved.solution.verify(&e.solved.game, eps, 1e-12)?.holds;
            let loss = out.mixture.dist.expect(&raw[inst.star])?;
            let value = if centered { loss - best } else { loss };
            let row = RateRow { n, trial, lambda, edd_loss: value, bound, violated: value > bound, certified };
            inspect(&row, &out, &e)?;
            Ok((row, e.value > bound))
        })
        .collect::<Result<Vec<_>>>()?;
    let eoec_violations = cells.iter().filter(|c| c.1).count();
    let rows: Vec<RateRow> = cells.into_iter().map(|c| c.0).collect();
    Ok(FastSlReport {
        n,
        centered,
        lambda,
        bound,
        check: FrequencyCheck::new(trials, rows.iter().filter(|r| r.violated).count(), delta),
        eoec_check: FrequencyCheck::new(trials, eoec_violations, delta),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlSweep {
    pub centered: bool,
    pub rows: Vec<RateRow>,
    pub summary: RateSummary,
    pub eoec_violations: usize,
}

/// [`check_fast_sl`] over a grid of sample sizes.
#[allow(clippy::too_many_arguments)]
pub fn sl_sweep(
    inst: &SlInstance,
    grid: &[usize],
    delta: f64,
    trials: usize,
    seed: u64,
    centered: bool,
    eps: f64,
) -> Result<SlSweep> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(grid.len() * trials);
    let mut eoec_violations = 0;
    for &n in grid {
        let r = fast_sl_at(inst, n, delta, trials, seed, centered, eps, &|_, _, _| Ok(()))?;
        eoec_violations += r.eoec_check.violations;
        rows.extend(r.rows);
    }
    let summary = RateSummary::from_rows(&rows, grid, delta);
    Ok(SlSweep { centered, rows, summary, eoec_violations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlGen {
    pub n_x: usize,
    pub n_hypotheses: usize,
    pub n_models: usize,
    pub n: usize,
    pub bound: f64,
}

impl Default for SlGen {
    fn default() -> Self {
        Self { n_x: 6, n_hypotheses: 4, n_models: 5, n: 200, bound: 1.0 }
    }
}

/// Pointwise losses uniform on `[0, B]`, flat-Dirichlet sample laws, real model 0.
pub fn random_sl<R: Rng + ?Sized>(gen: &SlGen, rng: &mut R) -> Result<SlInstance> {
    let pointwise_loss = (0..gen.n_x)
        .map(|_| (0..gen.n_hypotheses).map(|_| rng.random::<f64>() * gen.bound).collect())
        .collect();
    let model_dists = (0..gen.n_models).map(|_| flat_dirichlet(gen.n_x, rng)).collect::<Result<Vec<_>>>()?;
    let inst = SlInstance {
        n_x: gen.n_x,
        hypotheses: policy_labels(gen.n_hypotheses),
        pointwise_loss,
        model_dists,
        n: gen.n,
        bound: gen.bound,
        star: 0,
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::best_response_row;

    fn inst(seed: u64) -> SlInstance {
        random_sl(&SlGen::default(), &mut stream_rng(seed, &[])).unwrap()
    }

    #[test]
    fn sl_loss_cases() {
        let mut i = inst(1);
        let zero = SlInstance { pointwise_loss: vec![vec![0.0; 4]; 6], ..i.clone() };
        assert_eq!(zero.sl_loss(2, 1).unwrap(), 0.0);
        i.model_dists[1] = FiniteDist::point_mass(6, 3).unwrap();
        assert_eq!(i.sl_loss(1, 2).unwrap(), i.pointwise_loss[3][2]);
        assert!(i.sl_loss(9, 0).is_err());
    }

    #[test]
    fn sl_loss_matches_monte_carlo() {
        let i = inst(2);
        let n = 1_000_000;
        let data = i.sample_sl_dataset(n, 5).unwrap();
        for h in 0..i.n_hypotheses() {
            let vals: Vec<f64> = data.iter().map(|&x| i.pointwise_loss[x][h]).collect();
            let mu = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mu - i.sl_loss(0, h).unwrap()).abs() <= 3.0 * (var / n as f64).sqrt());
        }
    }

    #[test]
    fn sampling_cases() {
        let mut i = inst(3);
        i.model_dists[0] = FiniteDist::point_mass(6, 4).unwrap();
        assert!(i.sample_sl_dataset(50, 1).unwrap().iter().all(|&x| x == 4));
        i.model_dists[0] = FiniteDist::uniform(6).unwrap();
        let one = i.sample_sl_dataset(1, 2).unwrap();
        assert!(one.len() == 1 && one[0] < 6);
        let n = 100_000;
        let data = i.sample_sl_dataset(n, 3).unwrap();
        for x in 0..6 {
            let f = data.iter().filter(|&&d| d == x).count() as f64 / n as f64;
            assert!((f - 1.0 / 6.0).abs() <= 3.0 * ((5.0 / 36.0) / n as f64).sqrt());
        }
        assert!(i.sample_sl_dataset(0, 1).is_err());
    }

    /// Simplex-grid brute force of the EDD game value.
    fn grid_value(rows: &[Vec<f64>], step: usize) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..=step {
            for b in 0..=step - a {
                for c in 0..=step - a - b {
                    let p = [a, b, c, step - a - b - c].map(|k| k as f64 / step as f64);
                    let v = rows
                        .iter()
                        .map(|r| r.iter().zip(&p).map(|(x, y)| x * y).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max);
                    best = best.min(v);
                }
            }
        }
        best
    }

    #[test]
    fn edd_sl_cases() {
        let mut single = inst(4);
        single.model_dists.truncate(1);
        let data = single.sample_sl_dataset(20, 1).unwrap();
        let out = edd_sl(&single, &data, 1e-9).unwrap();
        let losses: Vec<f64> = (0..4).map(|h| single.sl_loss(0, h).unwrap()).collect();
        let argmin = (0..4).min_by(|&a, &b| losses[a].total_cmp(&losses[b])).unwrap();
        assert!((out.mixture.weights()[argmin] - 1.0).abs() < 1e-9);

        let mut twins = inst(5);
        twins.model_dists[1] = twins.model_dists[0].clone();
        twins.model_dists.truncate(2);
        let data = twins.sample_sl_dataset(30, 1).unwrap();
        let out = edd_sl(&twins, &data, 1e-9).unwrap();
        let ll = twins.rel_log_likelihood(0, &data).unwrap();
        let plain = crate::games::solve_zero_sum(
            &crate::games::PayoffMatrix::new(twins.loss_matrix(false).unwrap()).unwrap(),
            1e-9,
        )
        .unwrap();
        assert!((out.value - (plain.value + 4.0 / 30.0 * ll)).abs() < 1e-8);

        for seed in 0..5 {
            let i = SlInstance { model_dists: inst(10 + seed).model_dists[..4].to_vec(), ..inst(10 + seed) };
            let data = i.sample_sl_dataset(40, seed).unwrap();
            let lambda = 4.0 / 40.0;
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|m| {
                    let ll = i.rel_log_likelihood(m, &data).unwrap();
                    (0..4).map(|h| i.sl_loss(m, h).unwrap() + lambda * ll).collect()
                })
                .collect();
            let v = edd_sl(&i, &data, 1e-9).unwrap().value;
            let g = grid_value(&rows, 60);
            assert!(v <= g + 1e-9 && g - v < 1e-3, "{v} vs {g}");
        }
    }

    #[test]
    fn edd_sl_relabeling_invariance() {
        let i = inst(6);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let relabeled = SlInstance {
            pointwise_loss: (0..6).map(|y| i.pointwise_loss[perm.iter().position(|&p| p == y).unwrap()].clone()).collect(),
            model_dists: i
                .model_dists
                .iter()
                .map(|d| FiniteDist::new((0..6).map(|y| d.get(perm.iter().position(|&p| p == y).unwrap())).collect()).unwrap())
                .collect(),
            ..i.clone()
        };
        let data = i.sample_sl_dataset(60, 2).unwrap();
        let mapped: Vec<usize> = data.iter().map(|&x| perm[x]).collect();
        let a = edd_sl(&i, &data, 1e-9).unwrap();
        let b = edd_sl(&relabeled, &mapped, 1e-9).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
        let (_, up) = best_response_row(&b.solved.game, &a.mixture.dist).unwrap();
        assert!(up <= b.value + 2e-9);
    }

    #[test]
    fn centered_losses_have_zero_per_row() {
        for seed in 0..20 {
            let l = inst(seed).loss_matrix(true).unwrap();
            for row in l {
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(row.contains(&0.0));
            }
        }
    }

    #[test]
    fn fast_sl_trivial_cases() {
        let mut single = inst(7);
        single.model_dists.truncate(1);
        for centered in [false, true] {
            let r = check_fast_sl(&single, 0.1, 50, 1, centered, 1e-9).unwrap();
            assert_eq!(r.check.violations, 0);
            assert_eq!(r.eoec_check.violations, 0);
        }
        let zero = SlInstance { pointwise_loss: vec![vec![0.0; 4]; 6], ..inst(8) };
        let r = check_fast_sl(&zero, 0.1, 50, 1, false, 1e-9).unwrap();
        assert!(r.rows.iter().all(|row| row.edd_loss == 0.0 && !row.violated));
    }

    #[test]
    fn fast_sl_frequency() {
        let i = inst(9);
        for centered in [false, true] {
            let r = check_fast_sl(&i, 0.1, 500, 3, centered, 1e-9).unwrap();
            assert!(r.check.passed && r.eoec_check.passed);
            assert!(r.rows.iter().all(|row| row.certified));
        }
    }
}
