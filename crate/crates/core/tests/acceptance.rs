//! Acceptance criteria 1–9, one status line each.
//!
//! Runs as a plain binary (no libtest harness) so the report reads top to
//! bottom. Exits non-zero when any line fails.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use dmof_core::dmof::{
    check_up1, check_up2, eoec, lambda_fast_sl, lambda_fast_sq, lower_bound_against, minimax_algorithm_value, oec,
    DivergenceSpec, ExplicitDmof, MinimaxOutcome, RefDistSet, SolvedGame,
};
use dmof_core::generate::{flat_dirichlet, random_explicit, random_scored, ExplicitGen, ScoredGen};
use dmof_core::games::{GameSolution, PayoffMatrix};
use dmof_core::lemmalab::{
    check_ll_bound, check_ll_iid, check_ll_iid_cond, donsker_varadhan_corpus, h2_corpus, h2_cross_validation,
    refined_corpus, refined_simulation_corpus, subadditivity_corpus, tv_corpus, ConditioningMarginal, JointClass,
};
use dmof_core::sequential::{random_testbed, rate_sweep_inspect, PolicyRef, SeqGen};
use dmof_core::stats::stream_rng;
use dmof_core::supervised::{check_fast_sl_inspect, random_sl, sl_sweep, SlGen};
use dmof_core::FiniteDist;
use rand::Rng;

const SEED: u64 = 20_240_501;
const ROUNDOFF: f64 = 1e-12;

/// Certificate tallies for criterion 9, filled by criteria 1–6.
#[derive(Default)]
struct Certificates {
    checked: AtomicUsize,
    failed: AtomicUsize,
    worst_gap: std::sync::Mutex<f64>,
}

impl Certificates {
    fn record(&self, ok: bool, gap: f64) {
        self.checked.fetch_add(1, Ordering::Relaxed);
        if !ok {
            self.failed.fetch_add(1, Ordering::Relaxed);
        }
        let mut w = self.worst_gap.lock().unwrap();
        *w = w.max(gap);
    }

    /// Best responses against both mixtures, computed from the raw matrix.
    fn game(&self, game: &PayoffMatrix, sol: &GameSolution, eps: f64) {
        let (rows, cols) = (game.n_rows(), game.n_cols());
        let mixtures_ok = is_simplex(&sol.col_mixture, cols) && is_simplex(&sol.row_mixture, rows);
        if !mixtures_ok {
            self.record(false, f64::INFINITY);
            return;
        }
        let upper = (0..rows)
            .map(|r| (0..cols).map(|c| game.get(r, c) * sol.col_mixture.get(c)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let lower = (0..cols)
            .map(|c| (0..rows).map(|r| sol.row_mixture.get(r) * game.get(r, c)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let gap = upper - lower;
        let ok = gap <= eps + ROUNDOFF && sol.value >= lower - ROUNDOFF && sol.value <= upper + ROUNDOFF;
        self.record(ok, gap);
    }

    fn solved(&self, s: &SolvedGame, eps: f64) {
        self.game(&s.game, &s.solution, eps);
    }

    /// The minimax kernel's worst-case loss against the adversary's Bayes risk.
    fn minimax(&self, p: &ExplicitDmof, out: &MinimaxOutcome, eps: f64) {
        let (m, pi, o) = (p.n_models(), p.n_policies(), p.n_obs);
        if out.kernel.len() != o || !is_simplex(&out.adversary, m) || out.kernel.iter().any(|k| !is_simplex(&k.dist, pi)) {
            self.record(false, f64::INFINITY);
            return;
        }
        let loss = |i: usize, a: usize| p.models[i].loss_row[a];
        let upper = (0..m)
            .map(|i| {
                (0..o)
                    .map(|x| p.models[i].obs_dist.get(x) * (0..pi).map(|a| out.kernel[x].dist.get(a) * loss(i, a)).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let lower: f64 = (0..o)
            .map(|x| {
                (0..pi)
                    .map(|a| (0..m).map(|i| out.adversary.get(i) * p.models[i].obs_dist.get(x) * loss(i, a)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let gap = upper - lower;
        let ok = gap <= eps + ROUNDOFF && out.value >= lower - ROUNDOFF && out.value <= upper + ROUNDOFF;
        self.record(ok, gap);
    }
}

fn is_simplex(d: &FiniteDist, len: usize) -> bool {
    d.len() == len && d.weights().iter().all(|&w| w >= 0.0) && (d.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

struct Line {
    label: String,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn run(label: &str, limit: Option<u64>, body: impl FnOnce() -> (bool, String)) -> Line {
    let start = Instant::now();
    let (pass, detail) = body();
    let elapsed = start.elapsed();
    let limit = limit.map(Duration::from_secs);
    let in_time = limit.is_none_or(|l| elapsed < l);
    let line = Line { label: label.to_string(), pass: pass && in_time, detail, elapsed, limit };
    print_line(&line);
    line
}

fn print_line(l: &Line) {
    let status = if l.pass { "PASS" } else { "FAIL" };
    let budget = match l.limit {
        Some(lim) => format!("{:.2}s of {}s", l.elapsed.as_secs_f64(), lim.as_secs()),
        None => format!("{:.2}s", l.elapsed.as_secs_f64()),
    };
    println!("{status} {}: {} [{budget}]", l.label, l.detail);
}

fn criterion_1(certs: &Certificates) -> (bool, String) {
    let eps = 1e-7;
    let mut checks = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for case in 0..200u64 {
        let rng = &mut stream_rng(SEED, &[1, case]);
        let gen = ScoredGen {
            n_models: rng.random_range(1..=8),
            n_policies: rng.random_range(1..=6),
            bound: 1.0,
            ..Default::default()
        };
        let p = random_scored(&gen, rng).unwrap();
        for lambda in [0.0, 0.1, 1.0] {
            let r = check_up1(&p, lambda, eps).unwrap();
            // independent restatement of the inequality
            let holds = r.edd_loss <= r.eoec + 2.0 * eps;
            checks += 1;
            violations += usize::from(!holds || !r.holds);
            worst = worst.min(r.eoec + 2.0 * eps - r.edd_loss);
            certs.solved(&r.edd.solved, eps);
            certs.solved(&r.eoec_game, eps);
        }
    }
    (violations == 0, format!("L(M*, edd) <= EOEC + 2eps on {checks} (instance, lambda) pairs, {violations} violations, min slack {worst:.3e}"))
}

fn criterion_2(certs: &Certificates) -> (bool, String) {
    let eps = 1e-6;
    let mut checks = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for case in 0..300u64 {
        let rng = &mut stream_rng(SEED, &[2, case]);
        let gen = ExplicitGen {
            n_models: rng.random_range(1..=4),
            n_policies: rng.random_range(1..=3),
            n_obs: rng.random_range(1..=5),
            bound: 1.0,
        };
        let p = random_explicit(&gen, rng).unwrap();
        let refs = p.model_laws();
        let mm = minimax_algorithm_value(&p, eps).unwrap();
        certs.minimax(&p, &mm, eps);
        for spec in DivergenceSpec::all() {
            let o = oec(&p, &refs, spec, spec.gamma2 * p.bound, eps).unwrap();
            for g in o.games.iter().flatten() {
                certs.solved(g, eps);
            }
            let report = lower_bound_against(&p, &refs, spec, eps, mm.value).unwrap();
            let slack = mm.value - (spec.gamma1 * o.value - 2.0 * eps);
            checks += 1;
            violations += usize::from(slack < 0.0 || !report.holds || report.oec != o.value);
            worst = worst.min(slack);
        }
    }
    (violations == 0, format!("minimax >= g1 * OEC_(g2 B) - 2e-6 on {checks} (instance, divergence) pairs, {violations} violations, min slack {worst:.3e}"))
}

fn criterion_3(certs: &Certificates) -> (bool, String) {
    let eps = 1e-7;
    let (lambda, delta, trials) = (0.5, 0.1, 2000);
    let p = random_explicit(&ExplicitGen::default(), &mut stream_rng(SEED, &[3])).unwrap();
    let star = p.star.unwrap();
    let r = check_up2(&p, star, lambda, delta, trials, SEED, eps).unwrap();
    let refs = RefDistSet(vec![p.models[star].obs_dist.clone()]);
    let o = oec(&p, &refs, DivergenceSpec::hellinger(), lambda, eps).unwrap();
    for g in o.games.iter().flatten() {
        certs.solved(g, eps);
    }
    for obs in p.models[star].obs_dist.support() {
        certs.solved(&eoec(&p.scored_for_observation(obs).unwrap(), lambda, eps).unwrap().solved, eps);
    }
    let penalty = 2.0 * lambda * (p.n_models() as f64 / delta).ln();
    let consistent = (r.oec - o.value).abs() <= ROUNDOFF && (r.penalty - penalty).abs() <= ROUNDOFF;
    let sigma = (delta * (1.0 - delta) / trials as f64).sqrt();
    let pass = consistent && r.check.frequency <= delta + 3.0 * sigma;
    (
        pass,
        format!(
            "EOEC > OEC + 2 lambda ln(|M|/delta) in {}/{} draws, frequency {:.4} vs {:.4}",
            r.check.violations,
            trials,
            r.check.frequency,
            delta + 3.0 * sigma
        ),
    )
}

struct RateOutcome {
    means: Vec<(usize, f64)>,
    slope: Option<f64>,
    slope_upper_half: Option<f64>,
}

fn criterion_4(certs: &Certificates, rate: &mut Option<RateOutcome>) -> (bool, String) {
    let eps = 1e-7;
    let delta = 0.1;
    let grid: Vec<usize> = (6..=13).map(|k| 1usize << k).collect();
    let tb = random_testbed(&SeqGen::default(), &mut stream_rng(SEED, &[4])).unwrap();
    let msp = &tb.msp;
    let target = PolicyRef::Index(tb.optimal_policy);
    let coverage = msp.coverage_coefficient(&target, &tb.behavior).unwrap();
    let bad_lambda = AtomicUsize::new(0);
    let sweep = rate_sweep_inspect(msp, &tb.behavior, &target, &grid, delta, 50, SEED, eps, |row, out| {
        let expected = 400.0 * msp.bound * (2.0 * msp.horizon as f64).ln() / row.n as f64;
        let scheduled = lambda_fast_sq(msp.bound, 1.0, msp.horizon, row.n)?;
        if (row.lambda - expected).abs() > 1e-12 * expected || row.lambda != scheduled {
            bad_lambda.fetch_add(1, Ordering::Relaxed);
        }
        certs.solved(&out.solved, eps);
        Ok(())
    })
    .unwrap();
    let s = &sweep.summary;
    *rate = Some(RateOutcome {
        means: s.points.iter().map(|p| (p.n, p.mean_loss)).collect(),
        slope: s.slope,
        slope_upper_half: s.slope_upper_half,
    });
    let sigma = (delta * (1.0 - delta) / s.check.trials as f64).sqrt();
    let pass = coverage == 1.0
        && bad_lambda.load(Ordering::Relaxed) == 0
        && s.check.trials == grid.len() * 50
        && s.check.frequency <= delta + 3.0 * sigma;
    (
        pass,
        format!(
            "C = {coverage}, bound violated in {}/{} (N, trial) cells, frequency {:.4} vs {:.4}",
            s.check.violations,
            s.check.trials,
            s.check.frequency,
            delta + 3.0 * sigma
        ),
    )
}

fn describe_means(means: &[(usize, f64)]) -> String {
    let parts: Vec<String> = means.iter().map(|(n, m)| format!("{n}:{m:.3e}")).collect();
    parts.join(" ")
}

fn slope_text(s: Option<f64>) -> String {
    match s {
        Some(v) => format!("{v:.3}"),
        None => "undefined (some mean loss is not positive)".into(),
    }
}

fn criterion_5(rate: &RateOutcome) -> (bool, String) {
    let pass = rate.slope_upper_half.is_some_and(|s| s <= -0.8);
    (pass, format!("upper-half log-log slope {} (need <= -0.8); mean loss by N {}", slope_text(rate.slope_upper_half), describe_means(&rate.means)))
}

fn invariant_sequential_slope(rate: &RateOutcome) -> (bool, String) {
    let pass = rate.slope.is_some_and(|s| s <= -0.8);
    (pass, format!("full-grid log-log slope {} (need <= -0.8)", slope_text(rate.slope)))
}

fn sl_testbed() -> dmof_core::SlInstance {
    random_sl(&SlGen::default(), &mut stream_rng(SEED, &[6])).unwrap()
}

fn criterion_6(certs: &Certificates) -> (bool, String) {
    let eps = 1e-7;
    let (delta, trials) = (0.1, 500);
    let inst = sl_testbed();
    let sigma = (delta * (1.0 - delta) / trials as f64).sqrt();
    let threshold = delta + 3.0 * sigma;
    let mut pass = true;
    let mut parts = Vec::new();
    for centered in [false, true] {
        let bad_lambda = AtomicUsize::new(0);
        let inspect = |row: &dmof_core::RateRow, out: &dmof_core::dmof::EddOutcome, e: &dmof_core::dmof::EoecOutcome| {
            if row.lambda != 4.0 * inst.bound / inst.n as f64 || row.lambda != lambda_fast_sl(inst.bound, inst.n)? {
                bad_lambda.fetch_add(1, Ordering::Relaxed);
            }
            certs.solved(&out.solved, eps);
            certs.solved(&e.solved, eps);
            Ok(())
        };
        let r = check_fast_sl_inspect(&inst, delta, trials, SEED + u64::from(centered), centered, eps, &inspect).unwrap();
        let rate = 8.0 * inst.bound / inst.n as f64 * (inst.n_models() as f64 / delta).ln();
        let expected_bound = if centered {
            rate
        } else {
            let best = (0..inst.n_hypotheses()).map(|h| inst.sl_loss(inst.star, h).unwrap()).fold(f64::INFINITY, f64::min);
            3.0 * best + rate
        };
        let ok = (r.bound - expected_bound).abs() <= ROUNDOFF
            && bad_lambda.load(Ordering::Relaxed) == 0
            && r.check.frequency <= threshold;
        pass &= ok;
        parts.push(format!(
            "{} bound {:.4}: {}/{} violations",
            if centered { "centered regret" } else { "loss" },
            r.bound,
            r.check.violations,
            trials
        ));
    }
    (pass, format!("N = 200, lambda = 4B/N; {}; threshold frequency {threshold:.4}", parts.join("; ")))
}

fn invariant_sl_slope() -> (bool, String) {
    let inst = sl_testbed();
    let grid: Vec<usize> = (5..=12).map(|k| 1usize << k).collect();
    let sweep = sl_sweep(&inst, &grid, 0.1, 100, SEED, true, 1e-7).unwrap();
    let s = &sweep.summary;
    let means: Vec<(usize, f64)> = s.points.iter().map(|p| (p.n, p.mean_loss)).collect();
    let pass = s.slope.is_some_and(|v| v <= -0.8);
    (pass, format!("centered regret log-log slope {} (need <= -0.8); mean regret by N {}", slope_text(s.slope), describe_means(&means)))
}

fn criterion_7() -> (bool, String) {
    let mut reports = vec![tv_corpus(10_000, SEED).unwrap(), h2_corpus(10_000, SEED).unwrap()];
    for spec in DivergenceSpec::all() {
        reports.push(refined_corpus(spec, 10_000, SEED).unwrap());
    }
    reports.push(subadditivity_corpus(500, SEED).unwrap());
    reports.push(refined_simulation_corpus(500, SEED).unwrap());
    let dv = donsker_varadhan_corpus(1_000, SEED).unwrap();
    let cross = h2_cross_validation(10_000, SEED).unwrap();
    let total: usize = reports.iter().map(|r| r.violations).sum::<usize>() + dv.violations;
    let cases: usize = reports.iter().map(|r| r.cases).sum::<usize>() + dv.cases;
    let worst_ratio = reports
        .iter()
        .map(|r| format!("{} {:.3}", r.name, r.worst_ratio))
        .collect::<Vec<_>>()
        .join(", ");
    (
        total == 0 && cross == 0,
        format!(
            "{total} violations over {cases} cases, {cross} refined-H2 cross-check mismatches, Gibbs gap {:.1e}; worst ratios: {worst_ratio}",
            dv.worst_gibbs_gap
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let (delta, trials, n) = (0.05, 5000, 20);
    let rng = &mut stream_rng(SEED, &[8]);
    let class: Vec<FiniteDist> = (0..5).map(|_| flat_dirichlet(4, rng).unwrap()).collect();
    let joints = JointClass { n1: 3, n2: 3, joints: (0..4).map(|_| flat_dirichlet(9, rng).unwrap()).collect() };
    let runs = [
        ("ll", check_ll_bound(&class, 0, delta, trials, SEED).unwrap()),
        ("ll-iid", check_ll_iid(&class, 0, n, delta, trials, SEED).unwrap()),
        ("ll-iid-cond", check_ll_iid_cond(&joints, 0, n, delta, trials, SEED, ConditioningMarginal::Compared).unwrap()),
    ];
    let sigma = (delta * (1.0 - delta) / trials as f64).sqrt();
    let threshold = delta + 3.0 * sigma;
    let pass = runs.iter().all(|(_, r)| r.check.trials == trials && r.check.frequency <= threshold);
    let parts: Vec<String> = runs.iter().map(|(name, r)| format!("{name} {}/{trials}", r.check.violations)).collect();
    (pass, format!("violations {}; threshold frequency {threshold:.4}", parts.join(", ")))
}

fn criterion_9(certs: &Certificates) -> (bool, String) {
    let checked = certs.checked.load(Ordering::Relaxed);
    let failed = certs.failed.load(Ordering::Relaxed);
    let worst = *certs.worst_gap.lock().unwrap();
    (checked > 0 && failed == 0, format!("{checked} solutions re-scanned, {failed} failed, worst duality gap {worst:.3e}"))
}

fn main() {
    // libtest-style flags (e.g. from `cargo test -- --nocapture`) are accepted and ignored.
    let certs = Certificates::default();
    let mut rate = None;
    let mut lines = vec![
        run("criterion 1 (EDD loss <= EOEC)", Some(30), || criterion_1(&certs)),
        run("criterion 2 (minimax lower bound)", Some(300), || criterion_2(&certs)),
        run("criterion 3 (EOEC <= OEC + penalty w.h.p.)", Some(60), || criterion_3(&certs)),
        run("criterion 4 (sequential fast-rate bound)", Some(300), || criterion_4(&certs, &mut rate)),
    ];
    let rate = rate.expect("criterion 4 ran");
    lines.push(run("criterion 5 (fast rate slope)", None, || criterion_5(&rate)));
    lines.push(run("criterion 6 (supervised fast-rate bound)", Some(60), || criterion_6(&certs)));
    lines.push(run("criterion 7 (deterministic lemma corpora)", Some(120), criterion_7));
    lines.push(run("criterion 8 (likelihood union bounds)", Some(120), criterion_8));
    lines.push(run("criterion 9 (solver certificates)", None, || criterion_9(&certs)));
    lines.push(run("invariant (sequential slope, full grid)", None, || invariant_sequential_slope(&rate)));
    lines.push(run("invariant (supervised centered slope)", None, invariant_sl_slope));

    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.label.as_str()).collect();
    println!("{} of {} lines passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
