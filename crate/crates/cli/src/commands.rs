use std::path::Path;

use dmof_core::dmof::{
    check_lower_bound, check_up1, check_up2, eoec_sweep, oec, DivergenceSpec, ScoredDmof,
};
use dmof_core::generate::{random_explicit, random_scored};
use dmof_core::io::{rate_rows_csv, Instance};
use dmof_core::lemmalab::run_lemma_suite;
use dmof_core::sequential::{rate_sweep, random_testbed, BehaviorSpec, PolicyRef, RateSummary, TabularMsp};
use dmof_core::stats::stream_rng;
use dmof_core::supervised::{random_sl, sl_sweep, SlInstance};
use dmof_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::{DataConfig, DivergenceChoice, ExperimentConfig, InstanceKind};
use crate::svg::rate_plot;
use crate::{CliError, Command};

// Stream indices that keep generation, observation draws and trials apart.
const GEN_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;

pub fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let out = Outputs::new(&cfg.out_dir)?;
    match cmd {
        Command::Gen { .. } => gen(cfg, &out),
        Command::Edd { .. } => edd(cfg, &out),
        Command::Eoec { .. } => eoec(cfg, &out),
        Command::Oec { .. } => oec_cmd(cfg, &out),
        Command::LowerBound { .. } => lower_bound(cfg, &out),
        Command::RateSweep { .. } => rate(cfg, &out),
        Command::SlSweep { .. } => sl(cfg, &out),
        Command::Lemmas => lemmas(cfg, &out),
    }
}

struct Outputs<'a> {
    dir: &'a Path,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn failed(check: &'static str, detail: String) -> CliError {
    CliError::Core(Error::AssertionFailed { check, detail })
}

fn generate(cfg: &ExperimentConfig, kind: InstanceKind) -> Result<Instance, CliError> {
    let rng = &mut stream_rng(cfg.seed, &[GEN_STREAM]);
    let g = &cfg.gen;
    Ok(match kind {
        InstanceKind::Explicit => random_explicit(&g.explicit, rng)?.into(),
        InstanceKind::Scored => random_scored(&g.scored, rng)?.into(),
        InstanceKind::Sequential => random_testbed(&g.sequential, rng)?.msp.into(),
        InstanceKind::Supervised => random_sl(&g.supervised, rng)?.into(),
    })
}

fn instance(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
    match &cfg.instance {
        Some(path) => Ok(Instance::load(path)?),
        None => generate(cfg, cfg.gen.kind),
    }
}

fn source(cfg: &ExperimentConfig) -> String {
    match &cfg.instance {
        Some(p) => p.display().to_string(),
        None => "generated".into(),
    }
}

/// The real model's optimal policy, used as both target and behaviour.
fn optimal_target(msp: &TabularMsp) -> Result<PolicyRef, CliError> {
    let (_, policy) = msp.optimal_value(msp.star)?;
    Ok(PolicyRef::Explicit(policy))
}

/// Turns any instance into a scored problem by drawing the data it needs.
fn scored(cfg: &ExperimentConfig, inst: &Instance, data: &DataConfig) -> Result<(ScoredDmof, serde_json::Value), CliError> {
    let rng = &mut stream_rng(cfg.seed, &[DATA_STREAM]);
    Ok(match inst {
        Instance::Scored(p) => (p.clone(), json!({})),
        Instance::Explicit(p) => {
            let star = p.star.ok_or(Error::MissingStar)?;
            let obs = match data.observation {
                Some(o) => o,
                None => p.models[star].obs_dist.sample(rng),
            };
            (p.scored_for_observation(obs)?, json!({ "observation": obs }))
        }
        Instance::Supervised(p) => {
            let sample = p.sample_with(p.n, rng)?;
            (p.scored(&sample, false)?, json!({ "samples": p.n }))
        }
        Instance::Sequential(p) => {
            let behavior = BehaviorSpec::Trajectory(optimal_target(p)?);
            let sample = p.sample_dataset_with(&behavior, data.samples, rng)?;
            (p.build_scored_dmof(&sample)?, json!({ "samples": data.samples }))
        }
    })
}

fn specs(choice: DivergenceChoice) -> Vec<DivergenceSpec> {
    match choice {
        DivergenceChoice::All => DivergenceSpec::all().to_vec(),
        DivergenceChoice::Tv => vec![DivergenceSpec::total_variation()],
        DivergenceChoice::H2 => vec![DivergenceSpec::hellinger()],
        DivergenceChoice::Kl => vec![DivergenceSpec::kl()],
    }
}

fn gen(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let inst = generate(cfg, cfg.gen.kind)?;
    out.write(&cfg.gen.output, &inst.to_toml()?)?;
    out.json("gen.json", &json!({ "kind": inst.kind(), "seed": cfg.seed, "file": cfg.gen.output }))
}

fn edd(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let (problem, data) = scored(cfg, &inst, &cfg.edd.data)?;
    let report = check_up1(&problem, cfg.edd.lambda, cfg.eps)?;
    out.json(
        "edd.json",
        &json!({
            "instance": source(cfg),
            "kind": inst.kind(),
            "data": data,
            "lambda": cfg.edd.lambda,
            "mixture": report.edd.mixture,
            "value": report.edd.value,
            "loss": report.edd_loss,
            "eoec": report.eoec,
            "slack": report.slack,
            "holds": report.holds,
        }),
    )?;
    report.ensure(&problem)?;
    Ok(())
}

fn eoec(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let (problem, data) = scored(cfg, &inst, &cfg.eoec.data)?;
    let (values, best) = eoec_sweep(&problem, &cfg.eoec.lambdas, cfg.eps)?;
    out.json(
        "eoec.json",
        &json!({
            "instance": source(cfg),
            "kind": inst.kind(),
            "data": data,
            "lambdas": cfg.eoec.lambdas,
            "values": values,
            "best_lambda": cfg.eoec.lambdas[best],
        }),
    )
}

fn explicit(cfg: &ExperimentConfig) -> Result<dmof_core::ExplicitDmof, CliError> {
    let inst = match &cfg.instance {
        Some(path) => Instance::load(path)?,
        None => generate(cfg, InstanceKind::Explicit)?,
    };
    match inst {
        Instance::Explicit(p) => Ok(p),
        other => Err(Error::InvalidInstance(format!("expected an explicit instance, got {}", other.kind())).into()),
    }
}

fn oec_cmd(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = explicit(cfg)?;
    let refs = problem.model_laws();
    let c = &cfg.oec;
    let mut per_spec = Vec::new();
    for spec in specs(c.divergence) {
        let o = oec(&problem, &refs, spec, c.lambda, cfg.eps)?;
        per_spec.push(json!({
            "spec": spec,
            "value": o.value,
            "per_reference": o.per_reference,
            "empty_references": o.empty_references,
            "argmax": o.argmax,
        }));
    }
    let up2 = match problem.star {
        Some(star) if c.trials > 0 => Some(check_up2(&problem, star, c.lambda, c.delta, c.trials, cfg.seed, cfg.eps)?),
        _ => None,
    };
    out.json("oec.json", &json!({ "instance": source(cfg), "lambda": c.lambda, "oec": per_spec, "up2": up2 }))?;
    if let Some(r) = up2.filter(|r| !r.check.passed) {
        return Err(failed(
            "eoec_high_probability",
            format!("frequency {} above threshold {}", r.check.frequency, r.check.threshold),
        ));
    }
    Ok(())
}

fn lower_bound(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = explicit(cfg)?;
    let refs = problem.model_laws();
    let reports = specs(cfg.lower_bound.divergence)
        .into_iter()
        .map(|spec| check_lower_bound(&problem, &refs, spec, cfg.eps))
        .collect::<Result<Vec<_>, _>>()?;
    out.json("lower_bound.json", &json!({ "instance": source(cfg), "eps": cfg.eps, "reports": reports }))?;
    for r in &reports {
        r.ensure(&problem)?;
    }
    Ok(())
}

fn sweep_outputs(
    out: &Outputs,
    stem: &str,
    title: &str,
    csv: String,
    summary: &RateSummary,
    extra: serde_json::Value,
    svg: bool,
) -> Result<(), CliError> {
    out.write(&format!("{stem}.csv"), &csv)?;
    out.json(&format!("{stem}.json"), &json!({ "run": extra, "summary": summary }))?;
    if svg {
        out.write(&format!("{stem}.svg"), &rate_plot(title, &summary.points))?;
    }
    Ok(())
}

fn check_summary(check: &'static str, summary: &RateSummary) -> Result<(), CliError> {
    if !summary.all_certified {
        return Err(failed(check, "a game solution failed its certificate re-check".into()));
    }
    if !summary.check.passed {
        return Err(failed(
            check,
            format!("violation frequency {} above threshold {}", summary.check.frequency, summary.check.threshold),
        ));
    }
    Ok(())
}

fn rate(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let c = &cfg.rate_sweep;
    let (msp, behavior, target) = match &cfg.instance {
        Some(path) => match Instance::load(path)? {
            Instance::Sequential(msp) => {
                let target = optimal_target(&msp)?;
                (msp, BehaviorSpec::Trajectory(target.clone()), target)
            }
            other => return Err(Error::InvalidInstance(format!("expected a sequential instance, got {}", other.kind())).into()),
        },
        None => {
            let tb = random_testbed(&c.testbed, &mut stream_rng(cfg.seed, &[GEN_STREAM]))?;
            (tb.msp, tb.behavior, PolicyRef::Index(tb.optimal_policy))
        }
    };
    let sweep = rate_sweep(&msp, &behavior, &target, &c.grid, c.delta, c.trials, cfg.seed, cfg.eps)?;
    let extra = json!({
        "instance": source(cfg),
        "seed": cfg.seed,
        "delta": c.delta,
        "trials": c.trials,
        "grid": c.grid,
        "coverage": sweep.coverage,
    });
    sweep_outputs(out, "rate_sweep", "EDD loss vs N (sequential)", rate_rows_csv(&sweep.rows), &sweep.summary, extra, c.svg)?;
    check_summary("rate_sweep", &sweep.summary)
}

fn sl(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let c = &cfg.sl_sweep;
    let inst: SlInstance = match &cfg.instance {
        Some(path) => match Instance::load(path)? {
            Instance::Supervised(p) => p,
            other => return Err(Error::InvalidInstance(format!("expected a supervised instance, got {}", other.kind())).into()),
        },
        None => random_sl(&c.testbed, &mut stream_rng(cfg.seed, &[GEN_STREAM]))?,
    };
    let sweep = sl_sweep(&inst, &c.grid, c.delta, c.trials, cfg.seed, c.centered, cfg.eps)?;
    let extra = json!({
        "instance": source(cfg),
        "seed": cfg.seed,
        "delta": c.delta,
        "trials": c.trials,
        "grid": c.grid,
        "centered": c.centered,
        "eoec_violations": sweep.eoec_violations,
    });
    let title = if c.centered { "EDD regret vs N (supervised)" } else { "EDD loss vs N (supervised)" };
    sweep_outputs(out, "sl_sweep", title, rate_rows_csv(&sweep.rows), &sweep.summary, extra, c.svg)?;
    check_summary("sl_sweep", &sweep.summary)
}

fn lemmas(cfg: &ExperimentConfig, out: &Outputs) -> Result<(), CliError> {
    let report = run_lemma_suite(&cfg.lemmas)?;
    out.json("lemmas.json", &report)?;
    if !report.passed {
        return Err(failed(
            "lemma_suite",
            format!("{} deterministic violations; see lemmas.json", report.deterministic_violations),
        ));
    }
    Ok(())
}
