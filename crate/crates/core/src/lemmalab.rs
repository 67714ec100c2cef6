//! Executable checks for the change-of-measure inequalities, Hellinger
//! subadditivity, the likelihood union bounds and the Donsker–Varadhan
//! formula, plus seeded corpora that run each check many times.
//!
//! Deterministic checks compare both sides exactly (up to `TOL` of float
//! round-off). Likelihood bounds hold with probability `1 − δ`, so their
//! corpora count violations and compare the frequency with `δ + 3σ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::{hellinger_sq, kl, tv, FiniteDist, DEFAULT_ENUMERATION_CAP};
use crate::dmof::DivergenceSpec;
use crate::error::{Error, Result};
use crate::generate::flat_dirichlet;
use crate::sequential::{random_testbed, SeqGen};
use crate::stats::{stream_rng, FrequencyCheck};

/// Absolute slack granted to float round-off in exact inequalities.
pub const TOL: f64 = 1e-12;

/// One evaluated inequality `lhs ≤ rhs` (or `lhs ≥ rhs` for lower bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Distance to violation; negative means violated.
    pub slack: f64,
    /// `lhs / rhs` for upper bounds, `rhs / lhs` for lower bounds; how much
    /// of the allowance is used.
    pub ratio: f64,
    pub holds: bool,
}

impl InequalityReport {
    fn upper(lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Self { lhs, rhs, slack, ratio: ratio(lhs, rhs), holds: slack >= -TOL || rhs == f64::INFINITY }
    }

    fn lower(lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        Self { lhs, rhs, slack, ratio: ratio(rhs, lhs), holds: slack >= -TOL || rhs == f64::NEG_INFINITY }
    }

    /// Converts a violation into [`Error::AssertionFailed`] with the inputs.
    pub fn ensure(&self, check: &'static str, inputs: &impl Serialize) -> Result<()> {
        if self.holds {
            return Ok(());
        }
        Err(Error::AssertionFailed {
            check,
            detail: format!(
                "lhs={} rhs={} inputs={}",
                self.lhs,
                self.rhs,
                serde_json::to_string(inputs).unwrap_or_default()
            ),
        })
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 && b.is_finite() {
        a / b
    } else if a <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn check_range(values: &[f64], bound: f64, len: usize) -> Result<()> {
    if values.len() != len {
        return Err(Error::LengthMismatch { expected: len, got: values.len() });
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::NonPositiveArgument { name: "bound", value: bound });
    }
    match values.iter().find(|v| !(0.0..=bound).contains(*v)) {
        Some(v) => Err(Error::RangeViolation { value: *v, bound }),
        None => Ok(()),
    }
}

/// `|E_P f − E_Q f| ≤ 2β TV(P, Q)` for `f ∈ [0, β]`.
pub fn check_tv_com(p: &FiniteDist, q: &FiniteDist, f: &[f64], beta: f64) -> Result<InequalityReport> {
    check_range(f, beta, p.len())?;
    let lhs = (p.expect(f)? - q.expect(f)?).abs();
    Ok(InequalityReport::upper(lhs, 2.0 * beta * tv(p, q)?))
}

/// `E_P g ≤ 3 E_Q g + 4B H²(P, Q)` for `g ∈ [0, B]`.
pub fn check_h2_com(p: &FiniteDist, q: &FiniteDist, g: &[f64], bound: f64) -> Result<InequalityReport> {
    check_range(g, bound, p.len())?;
    let rhs = 3.0 * q.expect(g)? + 4.0 * bound * hellinger_sq(p, q)?;
    Ok(InequalityReport::upper(p.expect(g)?, rhs))
}

/// `E_P g ≥ γ1 (E_Q g − γ2 B D(P, Q))` for `g ∈ [0, B]`; vacuous when the
/// divergence is infinite.
pub fn check_refined_com(
    spec: DivergenceSpec,
    p: &FiniteDist,
    q: &FiniteDist,
    g: &[f64],
    bound: f64,
) -> Result<InequalityReport> {
    check_range(g, bound, p.len())?;
    let d = spec.kind.eval(p, q)?;
    let rhs = if d.is_finite() { spec.gamma1 * (q.expect(g)? - spec.gamma2 * bound * d) } else { f64::NEG_INFINITY };
    Ok(InequalityReport::lower(p.expect(g)?, rhs))
}

/// Two laws on `X_1 × … × X_n` given by per-factor kernels conditioned on
/// the full prefix. `p_kernels[i]` has one row per prefix of length `i`, the
/// prefix being encoded in mixed radix with the first symbol most
/// significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainPair {
    pub alphabets: Vec<usize>,
    pub p_kernels: Vec<Vec<FiniteDist>>,
    pub q_kernels: Vec<Vec<FiniteDist>>,
}

impl MarkovChainPair {
    pub fn validate(&self) -> Result<()> {
        let n = self.alphabets.len();
        if n < 2 {
            return Err(Error::InvalidInstance("a chain pair needs at least two factors".into()));
        }
        let mut size: u128 = 1;
        for kernels in [&self.p_kernels, &self.q_kernels] {
            if kernels.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: kernels.len() });
            }
        }
        for i in 0..n {
            for kernels in [&self.p_kernels, &self.q_kernels] {
                if kernels[i].len() as u128 != size {
                    return Err(Error::LengthMismatch { expected: size as usize, got: kernels[i].len() });
                }
                if let Some(d) = kernels[i].iter().find(|d| d.len() != self.alphabets[i]) {
                    return Err(Error::LengthMismatch { expected: self.alphabets[i], got: d.len() });
                }
            }
            size = size.saturating_mul(self.alphabets[i] as u128);
            if size > DEFAULT_ENUMERATION_CAP as u128 {
                return Err(Error::EnumerationCapExceeded { size, cap: DEFAULT_ENUMERATION_CAP });
            }
        }
        Ok(())
    }

    /// Prefix laws of every length `0..=n`; the last is the joint law.
    fn prefix_laws(&self, kernels: &[Vec<FiniteDist>]) -> Vec<Vec<f64>> {
        let mut laws = vec![vec![1.0]];
        for (i, k) in kernels.iter().enumerate() {
            let prev = &laws[i];
            let a = self.alphabets[i];
            let mut next = vec![0.0; prev.len() * a];
            for (prefix, &w) in prev.iter().enumerate() {
                for (x, &px) in k[prefix].weights().iter().enumerate() {
                    next[prefix * a + x] = w * px;
                }
            }
            laws.push(next);
        }
        laws
    }

    pub fn joint_p(&self) -> Result<FiniteDist> {
        FiniteDist::new(self.prefix_laws(&self.p_kernels).pop().unwrap_or_default())
    }

    pub fn joint_q(&self) -> Result<FiniteDist> {
        FiniteDist::new(self.prefix_laws(&self.q_kernels).pop().unwrap_or_default())
    }
}

/// `H²(P, Q) ≤ 100 ln(n) E_P Σ_i H²(P_i(·|X_{<i}), Q_i(·|X_{<i}))`.
pub fn check_subadditivity(pair: &MarkovChainPair) -> Result<InequalityReport> {
    pair.validate()?;
    let laws = pair.prefix_laws(&pair.p_kernels);
    let lhs = hellinger_sq(&pair.joint_p()?, &pair.joint_q()?)?;
    let mut expected = 0.0;
    for i in 0..pair.alphabets.len() {
        for (prefix, &w) in laws[i].iter().enumerate() {
            if w > 0.0 {
                expected += w * hellinger_sq(&pair.p_kernels[i][prefix], &pair.q_kernels[i][prefix])?;
            }
        }
    }
    let rhs = 100.0 * (pair.alphabets.len() as f64).ln() * expected;
    Ok(InequalityReport::upper(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvReport {
    /// Largest `E_ρ h − ln E_π e^h − KL(ρ‖π)` over the tested `ρ` (≤ 0 when the inequality holds).
    pub worst_excess: f64,
    pub violations: usize,
    /// `|E_ρ h − ln E_π e^h − KL(ρ‖π)|` at the Gibbs measure `ρ ∝ π e^h`.
    pub gibbs_gap: f64,
    pub holds: bool,
}

/// Tolerance for equality at the Gibbs measure.
pub const GIBBS_TOL: f64 = 1e-9;

/// Donsker–Varadhan: `E_ρ h − ln E_π e^h ≤ KL(ρ‖π)` for every tested `ρ`,
/// with equality at the Gibbs measure.
pub fn check_donsker_varadhan(pi: &FiniteDist, h: &[f64], rhos: &[FiniteDist]) -> Result<DvReport> {
    if h.len() != pi.len() {
        return Err(Error::LengthMismatch { expected: pi.len(), got: h.len() });
    }
    if pi.weights().contains(&0.0) {
        return Err(Error::InvalidInstance("reference measure must have full support".into()));
    }
    if let Some(i) = h.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: i });
    }
    let shift = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tilted: Vec<f64> = pi.weights().iter().zip(h).map(|(p, v)| p * (v - shift).exp()).collect();
    let log_mgf = shift + tilted.iter().sum::<f64>().ln();
    let excess = |rho: &FiniteDist| -> Result<f64> {
        if rho.len() != pi.len() {
            return Err(Error::LengthMismatch { expected: pi.len(), got: rho.len() });
        }
        Ok(rho.expect(h)? - log_mgf - kl(rho, pi)?)
    };
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for rho in rhos {
        let e = excess(rho)?;
        worst = worst.max(e);
        violations += usize::from(e > TOL);
    }
    let gibbs_gap = excess(&FiniteDist::new(tilted)?)?.abs();
    Ok(DvReport { worst_excess: worst, violations, gibbs_gap, holds: violations == 0 && gibbs_gap <= GIBBS_TOL })
}

/// Outcome of a "with probability ≥ 1 − δ, for every member" bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    /// `2 ln(|P| / δ)`
    pub threshold: f64,
    pub check: FrequencyCheck,
    /// Smallest `threshold − max_p lhs(p)` seen over the trials.
    pub worst_slack: f64,
}

fn validate_class(class: &[FiniteDist], star: usize, delta: f64) -> Result<()> {
    if class.is_empty() {
        return Err(Error::Empty);
    }
    if star >= class.len() {
        return Err(Error::IndexOutOfRange { what: "class", index: star, len: class.len() });
    }
    if let Some(d) = class.iter().find(|d| d.len() != class[0].len()) {
        return Err(Error::LengthMismatch { expected: class[0].len(), got: d.len() });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::NonPositiveArgument { name: "delta", value: delta });
    }
    Ok(())
}

fn ln_ratio(num: f64, den: f64) -> f64 {
    // ln(num / den) with the conventions ln(0/x) = −inf, ln(x/0) = +inf.
    match (num == 0.0, den == 0.0) {
        (true, true) => 0.0,
        (true, false) => f64::NEG_INFINITY,
        (false, true) => f64::INFINITY,
        _ => num.ln() - den.ln(),
    }
}

fn run_trials(
    trials: usize,
    seed: u64,
    delta: f64,
    threshold: f64,
    worst_lhs: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
) -> LikelihoodReport {
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| worst_lhs(&mut stream_rng(seed, &[t as u64])))
        .collect();
    let violations = values.iter().filter(|&&v| v > threshold).count();
    let worst_slack = values.iter().map(|v| threshold - v).fold(f64::INFINITY, f64::min);
    LikelihoodReport { threshold, check: FrequencyCheck::new(trials, violations, delta), worst_slack }
}

/// One draw `x ∼ p*`; for all `p`: `−ln(p*(x)/p(x)) + H²(p*, p) ≤ 2 ln(|P|/δ)`.
pub fn check_ll_bound(class: &[FiniteDist], star: usize, delta: f64, trials: usize, seed: u64) -> Result<LikelihoodReport> {
    check_ll_iid(class, star, 1, delta, trials, seed)
}

/// `N` i.i.d. draws from `p`; for all `p'`:
/// `Σ_i −ln(p(X_i)/p'(X_i)) + N·H²(p, p') ≤ 2 ln(|P|/δ)`.
pub fn check_ll_iid(
    class: &[FiniteDist],
    star: usize,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<LikelihoodReport> {
    validate_class(class, star, delta)?;
    if n == 0 {
        return Err(Error::NonPositiveArgument { name: "n", value: 0.0 });
    }
    let p = &class[star];
    let h2 = class.iter().map(|q| hellinger_sq(p, q)).collect::<Result<Vec<_>>>()?;
    let threshold = 2.0 * (class.len() as f64 / delta).ln();
    Ok(run_trials(trials, seed, delta, threshold, |rng| {
        let mut counts = vec![0u64; p.len()];
        for _ in 0..n {
            counts[p.sample(rng)] += 1;
        }
        class
            .iter()
            .zip(&h2)
            .map(|(q, h)| {
                let log_term: f64 = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(x, &k)| -(k as f64) * ln_ratio(p.get(x), q.get(x)))
                    .sum();
                log_term + n as f64 * h
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Which `X_1` marginal weights the conditional Hellinger term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningMarginal {
    /// `X_1 ∼ p'`, the member being compared against.
    #[default]
    Compared,
    /// `X_1 ∼ p`, the law that generated the data.
    Sampling,
}

/// A law on `X_1 × X_2` flattened as `x1 * n2 + x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointClass {
    pub n1: usize,
    pub n2: usize,
    pub joints: Vec<FiniteDist>,
}

impl JointClass {
    fn marginal(&self, m: usize) -> Vec<f64> {
        (0..self.n1).map(|a| (0..self.n2).map(|b| self.joints[m].get(a * self.n2 + b)).sum()).collect()
    }

    /// `p_m(·|x1)`, or `None` when `x1` has zero marginal mass.
    fn conditional(&self, m: usize, x1: usize) -> Result<Option<FiniteDist>> {
        let row: Vec<f64> = (0..self.n2).map(|b| self.joints[m].get(x1 * self.n2 + b)).collect();
        if row.iter().sum::<f64>() == 0.0 {
            return Ok(None);
        }
        FiniteDist::new(row).map(Some)
    }
}

/// `N` i.i.d. pairs from `p`; for all `p'`:
/// `Σ_n −ln(p(X2|X1)/p'(X2|X1)) + N·E_{X1∼μ}[H²(p(·|X1), p'(·|X1))] ≤ 2 ln(|P|/δ)`
/// with `μ` chosen by `marginal`. Cells where either conditional is
/// undefined contribute nothing.
#[allow(clippy::too_many_arguments)]
pub fn check_ll_iid_cond(
    class: &JointClass,
    star: usize,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
    marginal: ConditioningMarginal,
) -> Result<LikelihoodReport> {
    if class.n1 == 0 || class.n2 == 0 {
        return Err(Error::Empty);
    }
    validate_class(&class.joints, star, delta)?;
    if class.joints[0].len() != class.n1 * class.n2 {
        return Err(Error::LengthMismatch { expected: class.n1 * class.n2, got: class.joints[0].len() });
    }
    if n == 0 {
        return Err(Error::NonPositiveArgument { name: "n", value: 0.0 });
    }
    let k = class.joints.len();
    let cond: Vec<Vec<Option<FiniteDist>>> = (0..k)
        .map(|m| (0..class.n1).map(|a| class.conditional(m, a)).collect())
        .collect::<Result<_>>()?;
    let star_marginal = class.marginal(star);
    let expected_h2 = (0..k)
        .map(|m| {
            let mu = match marginal {
                ConditioningMarginal::Compared => class.marginal(m),
                ConditioningMarginal::Sampling => star_marginal.clone(),
            };
            let mut total = 0.0;
            for (a, w) in mu.iter().enumerate() {
                if let (Some(p), Some(q)) = (&cond[star][a], &cond[m][a]) {
                    total += w * hellinger_sq(p, q)?;
                }
            }
            Ok(total)
        })
        .collect::<Result<Vec<_>>>()?;
    let threshold = 2.0 * (k as f64 / delta).ln();
    let p = &class.joints[star];
    Ok(run_trials(trials, seed, delta, threshold, |rng| {
        let mut counts = vec![0u64; p.len()];
        for _ in 0..n {
            counts[p.sample(rng)] += 1;
        }
        (0..k)
            .map(|m| {
                let mut log_term = 0.0;
                for (i, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                    let (a, b) = (i / class.n2, i % class.n2);
                    if let (Some(pc), Some(qc)) = (&cond[star][a], &cond[m][a]) {
                        log_term -= c as f64 * ln_ratio(pc.get(b), qc.get(b));
                    }
                }
                log_term + n as f64 * expected_h2[m]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Summary of a seeded corpus of deterministic checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub name: String,
    /// SHA-256 of the corpus parameters (name, cases, seed).
    pub inputs_digest: String,
    pub cases: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub worst_ratio: f64,
}

impl CorpusReport {
    fn from_reports(name: &str, seed: u64, reports: &[InequalityReport]) -> Self {
        Self {
            name: name.to_string(),
            inputs_digest: digest(&(name, reports.len(), seed)),
            cases: reports.len(),
            violations: reports.iter().filter(|r| !r.holds).count(),
            worst_slack: reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min),
            worst_ratio: reports.iter().map(|r| r.ratio).fold(0.0, f64::max),
        }
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn digest(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A random law on `n` points; with probability 1/4 one entry is zeroed to
/// exercise support mismatches.
fn random_law<R: Rng + ?Sized>(n: usize, rng: &mut R) -> FiniteDist {
    let d = flat_dirichlet(n, rng).expect("n >= 1");
    if n > 1 && rng.random::<f64>() < 0.25 {
        let mut w = d.into_weights();
        w[rng.random_range(0..n)] = 0.0;
        return FiniteDist::new(w).expect("n - 1 positive weights remain");
    }
    d
}

fn random_com_case<R: Rng + ?Sized>(rng: &mut R) -> (FiniteDist, FiniteDist, Vec<f64>, f64) {
    let n = rng.random_range(2..=6);
    let bound = 0.1 + 4.9 * rng.random::<f64>();
    let g = (0..n).map(|_| bound * rng.random::<f64>()).collect();
    (random_law(n, rng), random_law(n, rng), g, bound)
}

fn corpus(
    name: &str,
    cases: usize,
    seed: u64,
    run: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Result<InequalityReport> + Sync,
) -> Result<CorpusReport> {
    let reports = (0..cases)
        .into_par_iter()
        .map(|c| run(&mut stream_rng(seed, &[c as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusReport::from_reports(name, seed, &reports))
}

pub fn tv_corpus(cases: usize, seed: u64) -> Result<CorpusReport> {
    corpus("tv_com", cases, seed, |rng| {
        let (p, q, f, beta) = random_com_case(rng);
        check_tv_com(&p, &q, &f, beta)
    })
}

pub fn h2_corpus(cases: usize, seed: u64) -> Result<CorpusReport> {
    corpus("h2_com", cases, seed, |rng| {
        let (p, q, g, b) = random_com_case(rng);
        check_h2_com(&p, &q, &g, b)
    })
}

pub fn refined_corpus(spec: DivergenceSpec, cases: usize, seed: u64) -> Result<CorpusReport> {
    let name = format!("refined_com_{}", serde_json::to_string(&spec.kind).unwrap_or_default().trim_matches('"'));
    corpus(&name, cases, seed, |rng| {
        let (p, q, g, b) = random_com_case(rng);
        check_refined_com(spec, &p, &q, &g, b)
    })
}

/// Number of shared-seed cases where the refined H² check and the
/// Hellinger change-of-measure check (with `P` and `Q` swapped) disagree.
/// The two are the same inequality multiplied by 3.
pub fn h2_cross_validation(cases: usize, seed: u64) -> Result<usize> {
    let mismatches = (0..cases)
        .into_par_iter()
        .map(|c| {
            let (p, q, g, b) = random_com_case(&mut stream_rng(seed, &[c as u64]));
            let refined = check_refined_com(DivergenceSpec::hellinger(), &p, &q, &g, b)?;
            let direct = check_h2_com(&q, &p, &g, b)?;
            let scale = 1.0 + direct.rhs.abs();
            Ok(usize::from(
                refined.holds != direct.holds || (3.0 * refined.slack - direct.slack).abs() > 1e-12 * scale,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mismatches.iter().sum())
}

/// A random chain pair with `n` factors; Q's kernels are either fresh or a
/// mixture with P's, so small and large divergences both occur.
pub fn random_chain_pair<R: Rng + ?Sized>(n: usize, max_alphabet: usize, rng: &mut R) -> Result<MarkovChainPair> {
    let alphabets: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_alphabet)).collect();
    let mut p_kernels = Vec::with_capacity(n);
    let mut q_kernels = Vec::with_capacity(n);
    let mut prefixes = 1usize;
    let t = rng.random::<f64>();
    for &a in &alphabets {
        let mut pk = Vec::with_capacity(prefixes);
        let mut qk = Vec::with_capacity(prefixes);
        for _ in 0..prefixes {
            let p = random_law(a, rng);
            let fresh = random_law(a, rng);
            let q = FiniteDist::new(p.weights().iter().zip(fresh.weights()).map(|(x, y)| (1.0 - t) * x + t * y).collect())?;
            pk.push(p);
            qk.push(q);
        }
        p_kernels.push(pk);
        q_kernels.push(qk);
        prefixes *= a;
    }
    Ok(MarkovChainPair { alphabets, p_kernels, q_kernels })
}

pub fn subadditivity_corpus(cases: usize, seed: u64) -> Result<CorpusReport> {
    corpus("subadditivity", cases, seed, |rng| {
        let n = rng.random_range(2..=6);
        check_subadditivity(&random_chain_pair(n, 3, rng)?)
    })
}

pub fn refined_simulation_corpus(cases: usize, seed: u64) -> Result<CorpusReport> {
    corpus("refined_simulation", cases, seed, |rng| {
        let gen = SeqGen {
            horizon: rng.random_range(2..=3),
            n_states: rng.random_range(1..=3),
            n_actions: rng.random_range(1..=3),
            n_models: 2,
            mix: vec![rng.random::<f64>()],
        };
        let msp = random_testbed(&gen, rng)?.msp;
        let pi = rng.random_range(0..msp.n_policies());
        let (m, m2) = if rng.random::<bool>() { (0, 1) } else { (1, 0) };
        let r = msp.check_refined_simulation(m, m2, pi)?;
        Ok(InequalityReport { lhs: r.lhs, rhs: r.rhs, slack: r.slack, ratio: r.ratio, holds: r.holds })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvCorpusReport {
    pub inputs_digest: String,
    pub cases: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub worst_gibbs_gap: f64,
}

/// Random `(π, h)` pairs, each tested against a handful of random `ρ` and the Gibbs measure.
pub fn donsker_varadhan_corpus(cases: usize, seed: u64) -> Result<DvCorpusReport> {
    let reports = (0..cases)
        .into_par_iter()
        .map(|c| {
            let rng = &mut stream_rng(seed, &[c as u64]);
            let n = rng.random_range(2..=6);
            let pi = flat_dirichlet(n, rng)?;
            let h: Vec<f64> = (0..n).map(|_| 10.0 * rng.random::<f64>() - 5.0).collect();
            let rhos: Vec<FiniteDist> = (0..5).map(|_| random_law(n, rng)).collect();
            check_donsker_varadhan(&pi, &h, &rhos)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DvCorpusReport {
        inputs_digest: digest(&("donsker_varadhan", cases, seed)),
        cases,
        violations: reports.iter().filter(|r| !r.holds).count(),
        worst_excess: reports.iter().map(|r| r.worst_excess).fold(f64::NEG_INFINITY, f64::max),
        worst_gibbs_gap: reports.iter().map(|r| r.gibbs_gap).fold(0.0, f64::max),
    })
}

/// Corpus sizes and seeds for the whole suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaSuiteConfig {
    pub seed: u64,
    pub com_cases: usize,
    pub subadditivity_cases: usize,
    pub simulation_cases: usize,
    pub dv_cases: usize,
    pub delta: f64,
    pub ll_trials: usize,
    pub ll_class_size: usize,
    pub ll_alphabet: usize,
    pub ll_samples: usize,
    pub cond_alphabets: (usize, usize),
    pub cond_class_size: usize,
    pub marginal: ConditioningMarginal,
}

impl Default for LemmaSuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            com_cases: 10_000,
            subadditivity_cases: 500,
            simulation_cases: 500,
            dv_cases: 1_000,
            delta: 0.05,
            ll_trials: 5_000,
            ll_class_size: 5,
            ll_alphabet: 4,
            ll_samples: 20,
            cond_alphabets: (3, 3),
            cond_class_size: 4,
            marginal: ConditioningMarginal::Compared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalReport {
    pub name: String,
    pub inputs_digest: String,
    pub report: LikelihoodReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: LemmaSuiteConfig,
    pub deterministic: Vec<CorpusReport>,
    pub donsker_varadhan: DvCorpusReport,
    pub h2_cross_validation_mismatches: usize,
    pub statistical: Vec<StatisticalReport>,
    pub deterministic_violations: usize,
    pub passed: bool,
}

/// Runs every corpus with the configured sizes.
pub fn run_lemma_suite(cfg: &LemmaSuiteConfig) -> Result<SuiteReport> {
    let s = cfg.seed;
    let mut deterministic = vec![tv_corpus(cfg.com_cases, s)?, h2_corpus(cfg.com_cases, s)?];
    for spec in DivergenceSpec::all() {
        deterministic.push(refined_corpus(spec, cfg.com_cases, s)?);
    }
    deterministic.push(subadditivity_corpus(cfg.subadditivity_cases, s)?);
    deterministic.push(refined_simulation_corpus(cfg.simulation_cases, s)?);
    let dv = donsker_varadhan_corpus(cfg.dv_cases, s)?;
    let cross = h2_cross_validation(cfg.com_cases, s)?;

    let rng = &mut stream_rng(s, &[u64::MAX]);
    let class: Vec<FiniteDist> = (0..cfg.ll_class_size)
        .map(|_| flat_dirichlet(cfg.ll_alphabet, rng))
        .collect::<Result<_>>()?;
    let joints = JointClass {
        n1: cfg.cond_alphabets.0,
        n2: cfg.cond_alphabets.1,
        joints: (0..cfg.cond_class_size)
            .map(|_| flat_dirichlet(cfg.cond_alphabets.0 * cfg.cond_alphabets.1, rng))
            .collect::<Result<_>>()?,
    };
    let stat = |name: &str, report: LikelihoodReport| StatisticalReport {
        name: name.to_string(),
        inputs_digest: digest(&(name, cfg)),
        report,
    };
    let statistical = vec![
        stat("ll_bound", check_ll_bound(&class, 0, cfg.delta, cfg.ll_trials, s)?),
        stat("ll_iid", check_ll_iid(&class, 0, cfg.ll_samples, cfg.delta, cfg.ll_trials, s)?),
        stat(
            "ll_iid_cond",
            check_ll_iid_cond(&joints, 0, cfg.ll_samples, cfg.delta, cfg.ll_trials, s, cfg.marginal)?,
        ),
    ];
    let deterministic_violations =
        deterministic.iter().map(|c| c.violations).sum::<usize>() + dv.violations + cross;
    let passed = deterministic_violations == 0 && statistical.iter().all(|r| r.report.check.passed);
    Ok(SuiteReport {
        config: cfg.clone(),
        deterministic,
        donsker_varadhan: dv,
        h2_cross_validation_mismatches: cross,
        statistical,
        deterministic_violations,
        passed,
    })
}
