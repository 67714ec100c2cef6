//! Tabular Markovian sequential problems and offline RL on top of them.
//!
//! Layers are indexed `h = 0..=H`: a decision is taken in layers `0..H` and
//! the step-`h` kernel moves from `S_h × A_h` to `S_{h+1}`, so there are `H`
//! kernels and `H + 1` state layers. All models share the initial
//! distribution and the rewards; only the kernels differ, which makes the
//! behaviour and initial-state factors of a dataset likelihood cancel across
//! models.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{hellinger_sq, FiniteDist, DEFAULT_ENUMERATION_CAP};
use crate::dmof::{edd, lambda_fast_sq, EddOutcome, ScoredDmof, ScoredModel};
use crate::error::{Error, Result};
use crate::generate::{flat_dirichlet, policy_labels};
use crate::stats::{log_log_slope, mean, quantile, stream_rng, FrequencyCheck};

/// One step of a trajectory: `(s_h, a_h, s'_h)`.
pub type Transition = (usize, usize, usize);

/// A Markov policy: `probs[h][s]` is the action law in state `s` of layer `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub probs: Vec<Vec<FiniteDist>>,
}

impl MarkovPolicy {
    pub fn deterministic(actions: &[Vec<usize>], action_sizes: &[usize]) -> Result<Self> {
        let probs = actions
            .iter()
            .zip(action_sizes)
            .map(|(layer, &n)| layer.iter().map(|&a| FiniteDist::point_mass(n, a)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(Self { probs })
    }

    pub fn action_dist(&self, h: usize, s: usize) -> &FiniteDist {
        &self.probs[h][s]
    }
}

/// Every deterministic Markov policy, in mixed-radix order where the action
/// at `(h = 0, s = 0)` varies slowest.
pub fn all_deterministic_policies(
    state_sizes: &[usize],
    action_sizes: &[usize],
    cap: usize,
) -> Result<Vec<MarkovPolicy>> {
    let slots: Vec<(usize, usize)> = action_sizes
        .iter()
        .enumerate()
        .flat_map(|(h, _)| (0..state_sizes[h]).map(move |s| (h, s)))
        .collect();
    let mut size: u128 = 1;
    for &(h, _) in &slots {
        size = size.saturating_mul(action_sizes[h] as u128);
        if size > cap as u128 {
            return Err(Error::EnumerationCapExceeded { size, cap });
        }
    }
    let mut out = Vec::with_capacity(size as usize);
    for idx in 0..size as usize {
        let mut actions: Vec<Vec<usize>> = action_sizes.iter().enumerate().map(|(h, _)| vec![0; state_sizes[h]]).collect();
        let mut r = idx;
        for &(h, s) in slots.iter().rev() {
            actions[h][s] = r % action_sizes[h];
            r /= action_sizes[h];
        }
        out.push(MarkovPolicy::deterministic(&actions, action_sizes)?);
    }
    Ok(out)
}

/// A trajectory loss `ℓ(τ, policy index)` supplied in code.
#[derive(Clone)]
pub struct TrajectoryLoss(pub Arc<dyn Fn(&[Transition], usize) -> f64 + Send + Sync>);

impl fmt::Debug for TrajectoryLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TrajectoryLoss(..)")
    }
}

impl PartialEq for TrajectoryLoss {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EpisodicLoss {
    /// `L(M, π) = J*_M − J_M(π)` for deterministic rewards `rewards[h][s][a] ≥ 0`.
    Rl { rewards: Vec<Vec<Vec<f64>>> },
    /// `L(M, π) = E_{τ∼T(M,π)} ℓ(τ, π)`; not serializable.
    #[serde(skip)]
    Custom(TrajectoryLoss),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMsp {
    pub horizon: usize,
    /// `H + 1` layer sizes.
    pub state_sizes: Vec<usize>,
    /// `H` layer sizes.
    pub action_sizes: Vec<usize>,
    pub init_dist: FiniteDist,
    /// `transitions[m][h][s][a]`, a law over `S_{h+1}`.
    pub transitions: Vec<Vec<Vec<Vec<FiniteDist>>>>,
    pub loss: EpisodicLoss,
    pub policies: Vec<MarkovPolicy>,
    pub bound: f64,
    pub star: usize,
}

/// Reference to a policy by index or given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyRef {
    Index(usize),
    Explicit(MarkovPolicy),
}

/// How the `(s_h, a_h)` pairs of a dataset are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorSpec {
    /// Roll out the behaviour policy under the real model, `s_{h+1} = s'_h`.
    Trajectory(PolicyRef),
    /// Draw `(s_h, a_h) ∼ d_h` independently per layer; `d_h` is flattened
    /// as `s * |A_h| + a`.
    Independent(Vec<FiniteDist>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub sequences: Vec<Vec<Transition>>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

fn idx_err(what: &'static str, index: usize, len: usize) -> Error {
    Error::IndexOutOfRange { what, index, len }
}

impl TabularMsp {
    pub fn validate(&self) -> Result<()> {
        let h = self.horizon;
        if h == 0 || self.policies.is_empty() || self.transitions.is_empty() {
            return Err(Error::Empty);
        }
        if self.state_sizes.len() != h + 1 {
            return Err(Error::LengthMismatch { expected: h + 1, got: self.state_sizes.len() });
        }
        if self.action_sizes.len() != h {
            return Err(Error::LengthMismatch { expected: h, got: self.action_sizes.len() });
        }
        if self.state_sizes.iter().chain(&self.action_sizes).any(|&n| n == 0) {
            return Err(Error::InvalidInstance("layer sizes must be at least 1".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::NonPositiveArgument { name: "bound", value: self.bound });
        }
        if self.init_dist.len() != self.state_sizes[0] {
            return Err(Error::LengthMismatch { expected: self.state_sizes[0], got: self.init_dist.len() });
        }
        if self.star >= self.transitions.len() {
            return Err(idx_err("models", self.star, self.transitions.len()));
        }
        for model in &self.transitions {
            self.check_layers(model, |layer, step| {
                if layer.len() != self.state_sizes[step + 1] {
                    return Err(Error::LengthMismatch { expected: self.state_sizes[step + 1], got: layer.len() });
                }
                Ok(())
            })?;
        }
        for p in &self.policies {
            self.check_policy(p)?;
        }
        match &self.loss {
            EpisodicLoss::Rl { rewards } => {
                self.check_layers(rewards, |&r, _| {
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(Error::InvalidInstance(format!("reward {r} must be finite and non-negative")));
                    }
                    Ok(())
                })?;
                for m in 0..self.n_models() {
                    let (j_star, _) = self.optimal_value(m)?;
                    if j_star > self.bound * (1.0 + 1e-12) {
                        return Err(Error::RangeViolation { value: j_star, bound: self.bound });
                    }
                }
            }
            EpisodicLoss::Custom(_) => {
                if self.trajectory_space_size() <= DEFAULT_ENUMERATION_CAP as u128 {
                    let scan = self.scan_loss_range(0, 0)?;
                    if scan.violations > 0 {
                        return Err(Error::RangeViolation { value: scan.worst, bound: self.bound });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_layers<T>(&self, layers: &[Vec<Vec<T>>], mut leaf: impl FnMut(&T, usize) -> Result<()>) -> Result<()> {
        if layers.len() != self.horizon {
            return Err(Error::LengthMismatch { expected: self.horizon, got: layers.len() });
        }
        for (h, layer) in layers.iter().enumerate() {
            if layer.len() != self.state_sizes[h] {
                return Err(Error::LengthMismatch { expected: self.state_sizes[h], got: layer.len() });
            }
            for row in layer {
                if row.len() != self.action_sizes[h] {
                    return Err(Error::LengthMismatch { expected: self.action_sizes[h], got: row.len() });
                }
                for x in row {
                    leaf(x, h)?;
                }
            }
        }
        Ok(())
    }

    fn check_policy(&self, p: &MarkovPolicy) -> Result<()> {
        if p.probs.len() != self.horizon {
            return Err(Error::LengthMismatch { expected: self.horizon, got: p.probs.len() });
        }
        for (h, layer) in p.probs.iter().enumerate() {
            if layer.len() != self.state_sizes[h] {
                return Err(Error::LengthMismatch { expected: self.state_sizes[h], got: layer.len() });
            }
            if let Some(d) = layer.iter().find(|d| d.len() != self.action_sizes[h]) {
                return Err(Error::LengthMismatch { expected: self.action_sizes[h], got: d.len() });
            }
        }
        Ok(())
    }

    pub fn n_models(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_policies(&self) -> usize {
        self.policies.len()
    }

    pub fn kernel(&self, m: usize, h: usize, s: usize, a: usize) -> &FiniteDist {
        &self.transitions[m][h][s][a]
    }

    fn model(&self, m: usize) -> Result<()> {
        if m < self.n_models() {
            Ok(())
        } else {
            Err(idx_err("models", m, self.n_models()))
        }
    }

    pub fn resolve<'a>(&'a self, p: &'a PolicyRef) -> Result<&'a MarkovPolicy> {
        match p {
            PolicyRef::Index(i) => self.policies.get(*i).ok_or_else(|| idx_err("policies", *i, self.n_policies())),
            PolicyRef::Explicit(pol) => {
                self.check_policy(pol)?;
                Ok(pol)
            }
        }
    }

    fn policy(&self, pi: usize) -> Result<&MarkovPolicy> {
        self.policies.get(pi).ok_or_else(|| idx_err("policies", pi, self.n_policies()))
    }

    fn rewards(&self) -> Result<&Vec<Vec<Vec<f64>>>> {
        match &self.loss {
            EpisodicLoss::Rl { rewards } => Ok(rewards),
            EpisodicLoss::Custom(_) => Err(Error::NonDecomposableLoss),
        }
    }

    /// Number of `(s_0, a_0, …, s_H)` sequences.
    pub fn trajectory_space_size(&self) -> u128 {
        let mut size = self.state_sizes[self.horizon] as u128;
        for h in 0..self.horizon {
            size = size.saturating_mul((self.state_sizes[h] * self.action_sizes[h]) as u128);
        }
        size
    }

    /// Every trajectory with positive probability under `(m, policy)`.
    pub fn trajectories(&self, m: usize, policy: &MarkovPolicy) -> Result<Vec<(Vec<Transition>, f64)>> {
        self.model(m)?;
        let size = self.trajectory_space_size();
        if size > DEFAULT_ENUMERATION_CAP as u128 {
            return Err(Error::EnumerationCapExceeded { size, cap: DEFAULT_ENUMERATION_CAP });
        }
        let mut out = Vec::new();
        let mut path = Vec::with_capacity(self.horizon);
        for s in self.init_dist.support() {
            self.extend(m, policy, s, self.init_dist.get(s), &mut path, &mut out);
        }
        Ok(out)
    }

    fn extend(
        &self,
        m: usize,
        policy: &MarkovPolicy,
        s: usize,
        prob: f64,
        path: &mut Vec<Transition>,
        out: &mut Vec<(Vec<Transition>, f64)>,
    ) {
        let h = path.len();
        let pa = policy.action_dist(h, s);
        for a in pa.support() {
            let k = self.kernel(m, h, s, a);
            for next in k.support() {
                let p = prob * pa.get(a) * k.get(next);
                path.push((s, a, next));
                if h + 1 == self.horizon {
                    out.push((path.clone(), p));
                } else {
                    self.extend(m, policy, next, p, path, out);
                }
                path.pop();
            }
        }
    }

    /// `J_M(π)` (expected return) for the RL loss; `E ℓ` for a custom loss.
    pub fn evaluate_policy(&self, m: usize, pi: usize) -> Result<f64> {
        self.model(m)?;
        let policy = self.policy(pi)?;
        match &self.loss {
            EpisodicLoss::Rl { .. } => self.expected_return(m, policy),
            EpisodicLoss::Custom(f) => {
                Ok(self.trajectories(m, policy)?.iter().map(|(t, p)| p * (f.0)(t, pi)).sum())
            }
        }
    }

    /// Expected return by backward induction.
    pub fn expected_return(&self, m: usize, policy: &MarkovPolicy) -> Result<f64> {
        let rewards = self.rewards()?;
        let mut v = vec![0.0; self.state_sizes[self.horizon]];
        for h in (0..self.horizon).rev() {
            v = (0..self.state_sizes[h])
                .map(|s| {
                    let pa = policy.action_dist(h, s);
                    pa.support()
                        .map(|a| pa.get(a) * (rewards[h][s][a] + self.kernel(m, h, s, a).expect(&v).unwrap_or(0.0)))
                        .sum()
                })
                .collect();
        }
        self.init_dist.expect(&v)
    }

    /// `J*_M` and a deterministic optimal Markov policy (ties to the lowest action).
    pub fn optimal_value(&self, m: usize) -> Result<(f64, MarkovPolicy)> {
        self.model(m)?;
        let rewards = self.rewards()?;
        let mut v = vec![0.0; self.state_sizes[self.horizon]];
        let mut actions = vec![Vec::new(); self.horizon];
        for h in (0..self.horizon).rev() {
            let mut next_v = Vec::with_capacity(self.state_sizes[h]);
            for s in 0..self.state_sizes[h] {
                let mut best = (0, f64::NEG_INFINITY);
                for a in 0..self.action_sizes[h] {
                    let q = rewards[h][s][a] + self.kernel(m, h, s, a).expect(&v)?;
                    if q > best.1 {
                        best = (a, q);
                    }
                }
                actions[h].push(best.0);
                next_v.push(best.1);
            }
            v = next_v;
        }
        let policy = MarkovPolicy::deterministic(&actions, &self.action_sizes)?;
        Ok((self.init_dist.expect(&v)?, policy))
    }

    /// `J*_M − J_M(π)`.
    pub fn rl_loss(&self, m: usize, pi: usize) -> Result<f64> {
        let (j_star, _) = self.optimal_value(m)?;
        let j = self.expected_return(m, self.policy(pi)?)?;
        self.clamp_loss(j_star - j)
    }

    fn clamp_loss(&self, v: f64) -> Result<f64> {
        let tol = 1e-9 * self.bound;
        if v > self.bound + tol || v < -tol || v.is_nan() {
            return Err(Error::RangeViolation { value: v, bound: self.bound });
        }
        Ok(v.clamp(0.0, self.bound))
    }

    /// The decision loss `L(M, π)`: `rl_loss` or the expected custom loss.
    pub fn model_loss(&self, m: usize, pi: usize) -> Result<f64> {
        match &self.loss {
            EpisodicLoss::Rl { .. } => self.rl_loss(m, pi),
            EpisodicLoss::Custom(_) => {
                let v = self.evaluate_policy(m, pi)?;
                self.clamp_loss(v)
            }
        }
    }

    /// `loss[m][π]` for every model and listed policy.
    pub fn loss_matrix(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.n_models())
            .into_par_iter()
            .map(|m| match &self.loss {
                EpisodicLoss::Rl { .. } => {
                    let (j_star, _) = self.optimal_value(m)?;
                    self.policies
                        .iter()
                        .map(|p| self.clamp_loss(j_star - self.expected_return(m, p)?))
                        .collect()
                }
                EpisodicLoss::Custom(_) => (0..self.n_policies()).map(|pi| self.model_loss(m, pi)).collect(),
            })
            .collect()
    }

    /// State-action margins `T(·|M, π, h)`, flattened as `s * |A_h| + a`.
    pub fn occupancy(&self, m: usize, policy: &MarkovPolicy) -> Result<Vec<FiniteDist>> {
        self.model(m)?;
        self.check_policy(policy)?;
        let mut states = self.init_dist.weights().to_vec();
        let mut out = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let na = self.action_sizes[h];
            let mut margin = vec![0.0; self.state_sizes[h] * na];
            let mut next = vec![0.0; self.state_sizes[h + 1]];
            for (s, &ps) in states.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                let pa = policy.action_dist(h, s);
                for a in pa.support() {
                    let w = ps * pa.get(a);
                    margin[s * na + a] += w;
                    for (n, &pn) in self.kernel(m, h, s, a).weights().iter().enumerate() {
                        next[n] += w * pn;
                    }
                }
            }
            out.push(FiniteDist::new(margin)?);
            states = next;
        }
        Ok(out)
    }

    fn data_margins(&self, spec: &BehaviorSpec) -> Result<Vec<FiniteDist>> {
        match spec {
            BehaviorSpec::Trajectory(p) => self.occupancy(self.star, self.resolve(p)?),
            BehaviorSpec::Independent(d) => {
                if d.len() != self.horizon {
                    return Err(Error::LengthMismatch { expected: self.horizon, got: d.len() });
                }
                for (h, dh) in d.iter().enumerate() {
                    let n = self.state_sizes[h] * self.action_sizes[h];
                    if dh.len() != n {
                        return Err(Error::LengthMismatch { expected: n, got: dh.len() });
                    }
                }
                Ok(d.clone())
            }
        }
    }

    /// `C = max_h max_{(s,a)} T(s, a | M*, π̄, h) / d_h(s, a)`; infinite when
    /// the occupancy charges a pair the data never shows.
    pub fn coverage_coefficient(&self, target: &PolicyRef, spec: &BehaviorSpec) -> Result<f64> {
        let occ = self.occupancy(self.star, self.resolve(target)?)?;
        let data = self.data_margins(spec)?;
        let mut c: f64 = 0.0;
        for (o, d) in occ.iter().zip(&data) {
            for i in o.support() {
                let di = d.get(i);
                c = c.max(if di == 0.0 { f64::INFINITY } else { o.get(i) / di });
            }
        }
        Ok(c)
    }

    pub fn sample_dataset(&self, spec: &BehaviorSpec, n: usize, seed: u64) -> Result<TrajectoryDataset> {
        self.sample_dataset_with(spec, n, &mut stream_rng(seed, &[]))
    }

    pub fn sample_dataset_with<R: Rng + ?Sized>(
        &self,
        spec: &BehaviorSpec,
        n: usize,
        rng: &mut R,
    ) -> Result<TrajectoryDataset> {
        if n == 0 {
            return Err(Error::NonPositiveArgument { name: "n", value: 0.0 });
        }
        let star = self.star;
        let sequences = match spec {
            BehaviorSpec::Trajectory(p) => {
                let policy = self.resolve(p)?;
                (0..n)
                    .map(|_| {
                        let mut s = self.init_dist.sample(rng);
                        (0..self.horizon)
                            .map(|h| {
                                let a = policy.action_dist(h, s).sample(rng);
                                let next = self.kernel(star, h, s, a).sample(rng);
                                let t = (s, a, next);
                                s = next;
                                t
                            })
                            .collect()
                    })
                    .collect()
            }
            BehaviorSpec::Independent(_) => {
                let d = self.data_margins(spec)?;
                (0..n)
                    .map(|_| {
                        (0..self.horizon)
                            .map(|h| {
                                let i = d[h].sample(rng);
                                let (s, a) = (i / self.action_sizes[h], i % self.action_sizes[h]);
                                (s, a, self.kernel(star, h, s, a).sample(rng))
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        Ok(TrajectoryDataset { sequences })
    }

    /// Transition counts `counts[h][(s * |A_h| + a) * |S_{h+1}| + s']`.
    pub fn transition_counts(&self, data: &TrajectoryDataset) -> Result<Vec<Vec<u64>>> {
        let mut counts: Vec<Vec<u64>> = (0..self.horizon)
            .map(|h| vec![0; self.state_sizes[h] * self.action_sizes[h] * self.state_sizes[h + 1]])
            .collect();
        for seq in &data.sequences {
            if seq.len() != self.horizon {
                return Err(Error::LengthMismatch { expected: self.horizon, got: seq.len() });
            }
            for (h, &(s, a, n)) in seq.iter().enumerate() {
                if s >= self.state_sizes[h] || a >= self.action_sizes[h] || n >= self.state_sizes[h + 1] {
                    return Err(Error::InvalidInstance(format!("transition {:?} out of range at step {h}", (s, a, n))));
                }
                counts[h][(s * self.action_sizes[h] + a) * self.state_sizes[h + 1] + n] += 1;
            }
        }
        Ok(counts)
    }

    /// `Σ_{n,h} ln P_M(s'_{n,h} | s_{n,h}, a_{n,h})`, or `-inf` if some
    /// observed transition is impossible under `m`.
    pub fn rel_log_likelihood(&self, m: usize, data: &TrajectoryDataset) -> Result<f64> {
        self.model(m)?;
        let counts = self.transition_counts(data)?;
        Ok(self.log_lik_from_counts(m, &counts))
    }

    fn log_lik_from_counts(&self, m: usize, counts: &[Vec<u64>]) -> f64 {
        let mut total = 0.0;
        for (h, c) in counts.iter().enumerate() {
            let ns = self.state_sizes[h + 1];
            for (i, &k) in c.iter().enumerate().filter(|(_, &k)| k > 0) {
                let sa = i / ns;
                let p = self.kernel(m, h, sa / self.action_sizes[h], sa % self.action_sizes[h]).get(i % ns);
                if p == 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += k as f64 * p.ln();
            }
        }
        total
    }

    pub fn build_scored_dmof(&self, data: &TrajectoryDataset) -> Result<ScoredDmof> {
        self.scored_with_losses(&self.loss_matrix()?, data)
    }

    /// As [`Self::build_scored_dmof`] with a precomputed loss matrix.
    pub fn scored_with_losses(&self, losses: &[Vec<f64>], data: &TrajectoryDataset) -> Result<ScoredDmof> {
        let counts = self.transition_counts(data)?;
        let models = losses
            .iter()
            .enumerate()
            .map(|(m, row)| ScoredModel { loss_row: row.clone(), rel_log_lik: self.log_lik_from_counts(m, &counts) })
            .collect();
        ScoredDmof::new(models, policy_labels(self.n_policies()), self.bound, Some(self.star))
    }

    /// Off-policy evaluation as a decision problem over a value grid:
    /// `loss[m][r] = min(|J_M(π_eval) − r|, B)`.
    pub fn ope_loss(&self, eval: &PolicyRef, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let policy = self.resolve(eval)?;
        (0..self.n_models())
            .map(|m| {
                let j = self.expected_return(m, policy)?;
                Ok(grid.iter().map(|r| (j - r).abs().min(self.bound)).collect())
            })
            .collect()
    }

    /// Trajectory loss used by the simulation check: `B − return` for RL,
    /// the custom loss otherwise.
    fn trajectory_loss(&self, traj: &[Transition], pi: usize) -> Result<f64> {
        match &self.loss {
            EpisodicLoss::Rl { rewards } => {
                Ok(self.bound - traj.iter().enumerate().map(|(h, &(s, a, _))| rewards[h][s][a]).sum::<f64>())
            }
            EpisodicLoss::Custom(f) => Ok((f.0)(traj, pi)),
        }
    }

    /// Checks `L(M, π) ≤ 3 L(M', π) + 400 B ln(2H) E_{T(M,π)} Σ_h H²(P_M(·|s_h,a_h), P_M'(·|s_h,a_h))`
    /// with `L(M, π) = E_{T(M,π)} ℓ(τ)` for the model-free trajectory loss.
    pub fn check_refined_simulation(&self, m: usize, m2: usize, pi: usize) -> Result<RefinedSimReport> {
        self.model(m2)?;
        let policy = self.policy(pi)?;
        let loss_under = |model: usize| -> Result<f64> {
            let mut total = 0.0;
            for (t, p) in self.trajectories(model, policy)? {
                let l = self.trajectory_loss(&t, pi)?;
                if !(-1e-12..=self.bound + 1e-12).contains(&l) {
                    return Err(Error::RangeViolation { value: l, bound: self.bound });
                }
                total += p * l;
            }
            Ok(total)
        };
        let lhs = loss_under(m)?;
        let other = loss_under(m2)?;
        let occ = self.occupancy(m, policy)?;
        let mut divergence = 0.0;
        for (h, o) in occ.iter().enumerate() {
            let na = self.action_sizes[h];
            for i in o.support() {
                let (s, a) = (i / na, i % na);
                divergence += o.get(i) * hellinger_sq(self.kernel(m, h, s, a), self.kernel(m2, h, s, a))?;
            }
        }
        let coef = 4.0 * self.bound * 100.0 * (2.0 * self.horizon as f64).ln();
        let rhs = 3.0 * other + coef * divergence;
        let slack = rhs - lhs;
        Ok(RefinedSimReport {
            lhs,
            other_loss: other,
            divergence,
            rhs,
            slack,
            ratio: if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 },
            holds: slack >= -1e-12,
        })
    }

    /// Scans the custom loss range, exhaustively when the trajectory space
    /// fits the enumeration cap, else over `samples` uniformly drawn
    /// trajectories. Violations are reported, not rejected.
    pub fn scan_loss_range(&self, samples: usize, seed: u64) -> Result<LossRangeScan> {
        let EpisodicLoss::Custom(f) = &self.loss else {
            return Ok(LossRangeScan { exhaustive: true, checked: 0, violations: 0, worst: 0.0 });
        };
        let mut scan = LossRangeScan { exhaustive: true, checked: 0, violations: 0, worst: 0.0 };
        let mut record = |v: f64| {
            scan.checked += 1;
            if !(0.0..=self.bound).contains(&v) {
                scan.violations += 1;
                if (v - self.bound / 2.0).abs() > (scan.worst - self.bound / 2.0).abs() {
                    scan.worst = v;
                }
            }
        };
        let uniform_traj = |rng: &mut dyn FnMut(usize) -> usize| -> Vec<Transition> {
            (0..self.horizon)
                .map(|h| (rng(self.state_sizes[h]), rng(self.action_sizes[h]), rng(self.state_sizes[h + 1])))
                .collect()
        };
        if self.trajectory_space_size() <= DEFAULT_ENUMERATION_CAP as u128 {
            let total = self.trajectory_space_size() as usize;
            for idx in 0..total {
                let mut r = idx;
                let t = uniform_traj(&mut |n| {
                    let d = r % n;
                    r /= n;
                    d
                });
                for pi in 0..self.n_policies() {
                    record((f.0)(&t, pi));
                }
            }
        } else {
            let mut rng = stream_rng(seed, &[]);
            for _ in 0..samples {
                let t = uniform_traj(&mut |n| rng.random_range(0..n));
                let pi = rng.random_range(0..self.n_policies());
                record((f.0)(&t, pi));
            }
            scan.exhaustive = false;
        }
        Ok(scan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRangeScan {
    pub exhaustive: bool,
    pub checked: usize,
    pub violations: usize,
    pub worst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedSimReport {
    pub lhs: f64,
    pub other_loss: f64,
    pub divergence: f64,
    pub rhs: f64,
    pub slack: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// One `(N, trial)` cell of a rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub trial: usize,
    pub lambda: f64,
    pub edd_loss: f64,
    pub bound: f64,
    pub violated: bool,
    /// The EDD game solution passed an independent best-response re-check.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_loss: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub bound: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub points: Vec<RatePoint>,
    pub check: FrequencyCheck,
    /// Least-squares slope of ln(mean loss) on ln N over the whole grid.
    pub slope: Option<f64>,
    /// The same over the upper half of the grid.
    pub slope_upper_half: Option<f64>,
    pub all_certified: bool,
}

impl RateSummary {
    pub fn from_rows(rows: &[RateRow], grid: &[usize], delta: f64) -> Self {
        let points: Vec<RatePoint> = grid
            .iter()
            .map(|&n| {
                let cell: Vec<&RateRow> = rows.iter().filter(|r| r.n == n).collect();
                let losses: Vec<f64> = cell.iter().map(|r| r.edd_loss).collect();
                RatePoint {
                    n,
                    mean_loss: mean(&losses),
                    q10: quantile(&losses, 0.1),
                    q50: quantile(&losses, 0.5),
                    q90: quantile(&losses, 0.9),
                    bound: cell.first().map_or(f64::NAN, |r| r.bound),
                    violations: cell.iter().filter(|r| r.violated).count(),
                }
            })
            .collect();
        let means: Vec<f64> = points.iter().map(|p| p.mean_loss).collect();
        let half = grid.len() / 2;
        Self {
            check: FrequencyCheck::new(rows.len(), rows.iter().filter(|r| r.violated).count(), delta),
            slope: log_log_slope(grid, &means),
            slope_upper_half: log_log_slope(&grid[half..], &means[half..]),
            all_certified: rows.iter().all(|r| r.certified),
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub coverage: f64,
    pub rows: Vec<RateRow>,
    pub summary: RateSummary,
}

/// For every `N` in the grid and every trial: sample a dataset, run EDD with
/// `λ = 400 B C ln(2H) / N`, and record `L(M*, p̂)` against
/// `3 L(M*, π̄) + (1200 B C ln(2H) / N) ln(3H|M|/δ)`.
#[allow(clippy::too_many_arguments)]
pub fn rate_sweep(
    msp: &TabularMsp,
    spec: &BehaviorSpec,
    target: &PolicyRef,
    grid: &[usize],
    delta: f64,
    trials: usize,
    seed: u64,
    eps: f64,
) -> Result<RateSweep> {
    rate_sweep_inspect(msp, spec, target, grid, delta, trials, seed, eps, |_, _| Ok(()))
}

/// [`rate_sweep`], handing every row and its EDD solution to `inspect`.
#[allow(clippy::too_many_arguments)]
pub fn rate_sweep_inspect(
    msp: &TabularMsp,
    spec: &BehaviorSpec,
    target: &PolicyRef,
    grid: &[usize],
    delta: f64,
    trials: usize,
    seed: u64,
    eps: f64,
    inspect: impl Fn(&RateRow, &EddOutcome) -> Result<()> + Sync,
) -> Result<RateSweep> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::NonPositiveArgument { name: "delta", value: delta });
    }
    let coverage = msp.coverage_coefficient(target, spec)?;
    if !coverage.is_finite() {
        return Err(Error::InvalidInstance("coverage coefficient is infinite".into()));
    }
    let losses = msp.loss_matrix()?;
    let target_loss = match target {
        PolicyRef::Index(i) => losses[msp.star][*i],
        PolicyRef::Explicit(p) => {
            let (j_star, _) = msp.optimal_value(msp.star)?;
            msp.clamp_loss(j_star - msp.expected_return(msp.star, p)?)?
        }
    };
    let h = msp.horizon as f64;
    let log_term = (3.0 * h * msp.n_models() as f64 / delta).ln();
    let cells: Vec<(usize, usize)> = grid.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let rows = cells
        .par_iter()
        .map(|&(n, trial)| {
            let mut rng = stream_rng(seed, &[n as u64, trial as u64]);
            let data = msp.sample_dataset_with(spec, n, &mut rng)?;
            let scored = msp.scored_with_losses(&losses, &data)?;
            let lambda = lambda_fast_sq(msp.bound, coverage, msp.horizon, n)?;
            let out = edd(&scored, lambda, eps)?;
            let certified = out.solved.solution.verify(&out.solved.game, eps, 1e-12)?.holds;
            let edd_loss = scored.loss_of(msp.star, &out.mixture)?;
            let bound = 3.0 * target_loss
                + (1200.0 * msp.bound * coverage * (2.0 * h).ln() / n as f64) * log_term;
            let row = RateRow { n, trial, lambda, edd_loss, bound, violated: edd_loss > bound, certified };
            inspect(&row, &out)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = RateSummary::from_rows(&rows, grid, delta);
    Ok(RateSweep { coverage, rows, summary })
}

/// Shape of a seeded random tabular problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqGen {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_models: usize,
    /// When non-empty, model `k ≥ 1` mixes the real model's kernels with
    /// fresh random kernels at weight `mix[k - 1]` (cycled), so the class
    /// holds models at several distances from the real one. Empty means
    /// every model draws independent kernels.
    pub mix: Vec<f64>,
}

impl Default for SeqGen {
    fn default() -> Self {
        Self { horizon: 3, n_states: 3, n_actions: 2, n_models: 8, mix: Vec::new() }
    }
}

/// The generated problem plus the behaviour and target policy it is used with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqTestbed {
    pub msp: TabularMsp,
    /// Index of the real model's optimal policy in the policy list.
    pub optimal_policy: usize,
    pub behavior: BehaviorSpec,
}

/// Random kernels (flat Dirichlet), rewards uniform on `[0, 1]`, the policy
/// class of all deterministic Markov policies, `B = H`, real model 0, and
/// behaviour equal to the real model's optimal policy (so `C = 1`).
pub fn random_testbed<R: Rng + ?Sized>(gen: &SeqGen, rng: &mut R) -> Result<SeqTestbed> {
    if gen.horizon == 0 || gen.n_states == 0 || gen.n_actions == 0 || gen.n_models == 0 {
        return Err(Error::Empty);
    }
    let (h, ns, na) = (gen.horizon, gen.n_states, gen.n_actions);
    let random_kernels = |rng: &mut R| -> Result<Vec<Vec<Vec<FiniteDist>>>> {
        (0..h)
            .map(|_| (0..ns).map(|_| (0..na).map(|_| flat_dirichlet(ns, rng)).collect()).collect())
            .collect()
    };
    let star = random_kernels(rng)?;
    let mut transitions = vec![star.clone()];
    for k in 1..gen.n_models {
        let fresh = random_kernels(rng)?;
        let t = if gen.mix.is_empty() { 1.0 } else { gen.mix[(k - 1) % gen.mix.len()] };
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInstance(format!("mix weight {t} outside [0, 1]")));
        }
        let model = star
            .iter()
            .zip(&fresh)
            .map(|(ls, lf)| {
                ls.iter()
                    .zip(lf)
                    .map(|(rs, rf)| {
                        rs.iter()
                            .zip(rf)
                            .map(|(a, b)| {
                                FiniteDist::new(
                                    a.weights().iter().zip(b.weights()).map(|(x, y)| (1.0 - t) * x + t * y).collect(),
                                )
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<Vec<_>>>>>()?;
        transitions.push(model);
    }
    let rewards = (0..h)
        .map(|_| (0..ns).map(|_| (0..na).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    let state_sizes = vec![ns; h + 1];
    let action_sizes = vec![na; h];
    let policies = all_deterministic_policies(&state_sizes, &action_sizes, DEFAULT_ENUMERATION_CAP)?;
    let msp = TabularMsp {
        horizon: h,
        state_sizes,
        action_sizes,
        init_dist: flat_dirichlet(ns, rng)?,
        transitions,
        loss: EpisodicLoss::Rl { rewards },
        policies,
        bound: h as f64,
        star: 0,
    };
    msp.validate()?;
    let (_, pi_star) = msp.optimal_value(0)?;
    let optimal_policy = msp
        .policies
        .iter()
        .position(|p| *p == pi_star)
        .ok_or_else(|| Error::InvalidInstance("optimal policy missing from the class".into()))?;
    Ok(SeqTestbed { msp, optimal_policy, behavior: BehaviorSpec::Trajectory(PolicyRef::Index(optimal_policy)) })
}
