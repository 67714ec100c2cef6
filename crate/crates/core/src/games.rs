//! Certified solver for finite zero-sum games.
//!
//! Convention: the minimizer mixes over columns (decisions), the adversary
//! picks rows (models). Every solve returns both mixtures, and the reported
//! value and gap are recomputed from them against the original payoffs, so
//! the certificate never depends on solver internals.

use serde::{Deserialize, Serialize};

use crate::divergence::FiniteDist;
use crate::error::{Error, Result};

/// Dense row-major payoff matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::Empty);
        }
        let n_cols = rows[0].len();
        if n_cols == 0 {
            return Err(Error::Empty);
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::LengthMismatch { expected: n_cols, got: row.len() });
            }
            data.extend(row);
        }
        let m = Self { rows: n_rows, cols: n_cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite { row: i / self.cols, col: i % self.cols }),
            None => Ok(()),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Payoff of every row against a column mixture.
    pub fn row_payoffs(&self, p: &FiniteDist) -> Result<Vec<f64>> {
        if p.len() != self.cols {
            return Err(Error::LengthMismatch { expected: self.cols, got: p.len() });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(p.weights()).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Payoff of every column against a row mixture.
    pub fn col_payoffs(&self, q: &FiniteDist) -> Result<Vec<f64>> {
        if q.len() != self.rows {
            return Err(Error::LengthMismatch { expected: self.rows, got: q.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &w) in q.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    fn range(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Primal/dual pair with a duality-gap certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub col_mixture: FiniteDist,
    pub row_mixture: FiniteDist,
    pub value: f64,
    pub gap: f64,
}

/// Result of re-validating a [`GameSolution`] by best-response scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `max_row (row · col_mixture)`
    pub upper: f64,
    /// `min_col (row_mixture · col)`
    pub lower: f64,
    pub holds: bool,
}

impl GameSolution {
    fn from_mixtures(g: &PayoffMatrix, p: FiniteDist, q: FiniteDist) -> Result<Self> {
        let (_, upper) = best_response_row(g, &p)?;
        let (_, lower) = best_response_col(g, &q)?;
        let gap = ((upper - lower) * 0.5).max(0.0);
        Ok(Self { col_mixture: p, row_mixture: q, value: 0.5 * (upper + lower), gap })
    }

    /// Recomputes both bounds with independent scans and checks them against
    /// `value ± gap` (with `slack` for rounding) and `gap ≤ eps`.
    pub fn verify(&self, g: &PayoffMatrix, eps: f64, slack: f64) -> Result<Certificate> {
        let (_, upper) = best_response_row(g, &self.col_mixture)?;
        let (_, lower) = best_response_col(g, &self.row_mixture)?;
        let holds = upper <= self.value + self.gap + slack
            && lower >= self.value - self.gap - slack
            && self.gap <= eps;
        Ok(Certificate { upper, lower, holds })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Maximum number of simplex pivots.
    pub max_pivots: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_pivots: 10_000_000 }
    }
}

/// Highest-payoff row against `p`; ties go to the lowest index.
pub fn best_response_row(g: &PayoffMatrix, p: &FiniteDist) -> Result<(usize, f64)> {
    let payoffs = g.row_payoffs(p)?;
    Ok(argbest(&payoffs, |a, b| a > b))
}

/// Lowest-payoff column against `q`; ties go to the lowest index.
pub fn best_response_col(g: &PayoffMatrix, q: &FiniteDist) -> Result<(usize, f64)> {
    let payoffs = g.col_payoffs(q)?;
    Ok(argbest(&payoffs, |a, b| a < b))
}

fn argbest(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

pub fn solve_zero_sum(g: &PayoffMatrix, eps: f64) -> Result<GameSolution> {
    solve_zero_sum_with(g, eps, &SolverConfig::default())
}

/// Solves `min_p max_row` exactly by the simplex method and certifies the
/// result to within `eps`.
pub fn solve_zero_sum_with(g: &PayoffMatrix, eps: f64, cfg: &SolverConfig) -> Result<GameSolution> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveArgument { name: "eps", value: eps });
    }
    g.check_finite()?;
    let (lo, hi) = g.range();
    if hi - lo == 0.0 {
        // Constant game: any pair is optimal.
        return GameSolution::from_mixtures(
            g,
            FiniteDist::point_mass(g.cols, 0)?,
            FiniteDist::point_mass(g.rows, 0)?,
        );
    }
    let (p, q) = Simplex::new(g, lo).run(cfg.max_pivots)?;
    let sol = GameSolution::from_mixtures(g, p, q)?;
    if sol.gap > eps {
        return Err(Error::Uncertified { gap: sol.gap, eps });
    }
    Ok(sol)
}

/// Tableau for `max Σx  s.t.  G'x ≤ 1, x ≥ 0` with `G' = (G − lo)/(hi − lo) + 1`.
///
/// The origin is feasible, so a single phase suffices. Bland's rule makes the
/// pivot sequence deterministic and cycle-free.
struct Simplex {
    m: usize,
    n: usize,
    /// `m` constraint rows of width `n + m + 1` (last entry is the rhs).
    t: Vec<f64>,
    /// Reduced costs for the `n + m` columns.
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Simplex {
    fn new(g: &PayoffMatrix, lo: f64) -> Self {
        let (m, n) = (g.rows, g.cols);
        let (_, hi) = g.range();
        let scale = hi - lo;
        let w = n + m + 1;
        let mut t = vec![0.0; m * w];
        for r in 0..m {
            for c in 0..n {
                t[r * w + c] = (g.get(r, c) - lo) / scale + 1.0;
            }
            t[r * w + n + r] = 1.0;
            t[r * w + n + m] = 1.0;
        }
        let mut obj = vec![0.0; n + m];
        obj[..n].fill(1.0);
        Self { m, n, t, obj, basis: (n..n + m).collect() }
    }

    fn width(&self) -> usize {
        self.n + self.m + 1
    }

    fn run(mut self, max_pivots: usize) -> Result<(FiniteDist, FiniteDist)> {
        const TOL: f64 = 1e-12;
        let w = self.width();
        let mut pivots = 0usize;
        loop {
            let Some(enter) = self.obj.iter().position(|&c| c > TOL) else {
                break;
            };
            if pivots >= max_pivots {
                return Err(Error::Timeout { cap: max_pivots });
            }
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.t[r * w + enter];
                if a <= TOL {
                    continue;
                }
                let ratio = self.t[r * w + w - 1] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - TOL
                            || (ratio <= lratio + TOL && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            // The feasible region is bounded since every coefficient is ≥ 1.
            let (row, _) = leave.expect("bounded LP always has a leaving row");
            self.pivot(row, enter);
            pivots += 1;
        }

        let mut x = vec![0.0; self.n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.t[r * w + w - 1].max(0.0);
            }
        }
        let y: Vec<f64> = (0..self.m).map(|i| (-self.obj[self.n + i]).max(0.0)).collect();
        Ok((FiniteDist::new(x)?, FiniteDist::new(y)?))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.t[row * w + col];
        for v in &mut self.t[row * w..(row + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let f = self.t[r * w + col];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.t[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.t[r * w + col] = 0.0;
        }
        let f = self.obj[col];
        for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        self.obj[col] = 0.0;
        self.basis[row] = col;
    }
}
