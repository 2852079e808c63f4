//! One function per subcommand. Each reads its typed config, writes its
//! outputs into the run directory and reports whether the run passed.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use csl_core::branchlab::isolation_run;
use csl_core::constraints::check_all;
use csl_core::counterexample::{born_requires_dependence_report, run_no_go, NoGoVerdict};
use csl_core::ensemble::{
    born_test, compare_schemes, hook_catalog, martingale_test, mean_decay_slope, run_trajectories,
    scaling_study, summarize, timing_point, write_trajectories_csv, EnsembleReport, ScalingPoint,
};
use csl_core::rng::derive_seed;
use csl_core::{two_branch_delta_scenario, RunConfig, Scenario, Scheme};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    from_value, parse_json, BranchlabConfig, ConstraintsConfig, EnsembleConfig, NogoConfig, Overrides, TimingConfig,
};
use crate::manifest::write_json;
use crate::CliError;

pub const COMMANDS: [&str; 7] = ["born", "martingale", "equivalence", "timing", "nogo", "branchlab", "constraints"];

pub struct RunOptions<'a> {
    pub out: &'a Path,
    pub overrides: Overrides,
    pub emit_trajectories: bool,
}

/// Result of a command that ran to completion.
pub struct Outcome {
    pub pass: bool,
    /// Effective config after overrides.
    pub config: Value,
    pub scenario: Option<Scenario>,
    pub master_seed: Option<u64>,
    pub outputs: Vec<String>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

impl Outcome {
    fn new(config: impl Serialize) -> Self {
        Outcome {
            pass: false,
            config: serde_json::to_value(config).expect("configs serialize"),
            scenario: None,
            master_seed: None,
            outputs: Vec::new(),
            summary: String::new(),
        }
    }

    fn json(&mut self, dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        write_json(&dir.join(name), value)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn text(&mut self, dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

pub fn execute(command: &str, config: Value, opts: &RunOptions) -> Result<Outcome, CliError> {
    let origin = format!("{command} config");
    match command {
        "born" => born(from_value(config, &origin)?, opts),
        "martingale" => martingale(from_value(config, &origin)?, opts),
        "equivalence" => equivalence(from_value(config, &origin)?, opts),
        "timing" => timing(from_value(config, &origin)?, opts),
        "nogo" => nogo(from_value(config, &origin)?, opts),
        "branchlab" => branchlab(from_value(config, &origin)?, opts),
        "constraints" => constraints(from_value(config, &origin)?, opts),
        other => Err(CliError::Usage(format!(
            "unknown command `{other}` (expected one of: {})",
            COMMANDS.join(", ")
        ))),
    }
}

/// Parses `text` as the config of `command`, so type errors are reported
/// with their line and column.
pub fn parse_config(command: &str, text: &str, origin: &str) -> Result<Value, CliError> {
    fn check<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<(), CliError> {
        parse_json::<T>(text, origin).map(|_| ())
    }
    match command {
        "born" | "martingale" | "equivalence" => check::<EnsembleConfig>(text, origin)?,
        "timing" => check::<TimingConfig>(text, origin)?,
        "nogo" => check::<NogoConfig>(text, origin)?,
        "branchlab" => check::<BranchlabConfig>(text, origin)?,
        "constraints" => check::<ConstraintsConfig>(text, origin)?,
        _ => {}
    }
    parse_json(text, origin)
}

fn write_trajectories(
    out: &mut Outcome,
    dir: &Path,
    name: &str,
    trajectories: &[csl_core::engine::Trajectory],
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_trajectories_csv(trajectories, BufWriter::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    out.outputs.push(name.into());
    Ok(())
}

/// Runs an ensemble, writing its trajectories when asked.
fn ensemble(
    scenario: &Scenario,
    run: &RunConfig,
    opts: &RunOptions,
    out: &mut Outcome,
    csv_name: &str,
) -> Result<EnsembleReport, CliError> {
    let trajectories = run_trajectories(scenario, run)?;
    if opts.emit_trajectories {
        write_trajectories(out, opts.out, csv_name, &trajectories)?;
    }
    Ok(summarize(scenario, run, &trajectories))
}

fn fmt_vec(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("({})", parts.join(", "))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn born(mut cfg: EnsembleConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.apply(opts.overrides);
    let scenario = cfg.scenario.build()?;
    let mut out = Outcome::new(&cfg);
    let report = ensemble(&scenario, &cfg.run, opts, &mut out, "trajectories.csv")?;
    let expected = cfg.expected.clone().unwrap_or_else(|| report.initial_probabilities.clone());
    let born = born_test(&report, &expected)?;

    out.line(format!("scenario     {} ({} scheme, {} trials)", scenario.name, report.scheme, report.trials));
    out.line(format!("frequencies  {}", fmt_vec(&born.frequencies, 4)));
    out.line(format!("expected     {}", fmt_vec(&born.expected, 4)));
    out.line(format!("z            {}", fmt_vec(&born.z, 2)));
    if report.weighted {
        out.line(format!("ess          {:.1}{}", report.ess, if report.ess_warning { " (low)" } else { "" }));
    }
    if born.insufficient_statistics {
        out.line("insufficient statistics: fewer than 100 trials, no verdict issued");
    }
    out.line(format!("born test    {}", verdict(born.pass)));
    out.pass = born.pass;
    out.json(opts.out, "report.json", &json!({ "ensemble": report, "born": born }))?;
    out.master_seed = Some(cfg.run.master_seed);
    out.scenario = Some(scenario);
    Ok(out)
}

fn martingale(mut cfg: EnsembleConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.apply(opts.overrides);
    let scenario = cfg.scenario.build()?;
    let mut out = Outcome::new(&cfg);
    let report = ensemble(&scenario, &cfg.run, opts, &mut out, "trajectories.csv")?;
    let test = martingale_test(&report);
    out.line(format!("scenario   {} ({} scheme, {} trials)", scenario.name, report.scheme, report.trials));
    for c in &test.checks {
        out.line(format!(
            "t = {:<8.4} {:<8} {:.6} vs {:.6}  z = {:+.2}",
            c.t, c.quantity, c.value, c.target, c.z
        ));
    }
    out.line(format!("max |z| {:.2} (limit 5): {}", test.max_abs_z, verdict(test.pass)));
    out.pass = test.pass;
    out.json(opts.out, "report.json", &json!({ "ensemble": report, "martingale": test }))?;
    out.master_seed = Some(cfg.run.master_seed);
    out.scenario = Some(scenario);
    Ok(out)
}

/// Raw-weighted against physical-drift on the same scenario. The raw run
/// uses the configured seed, the drift run a seed derived from it.
fn equivalence(mut cfg: EnsembleConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.apply(opts.overrides);
    let scenario = cfg.scenario.build()?;
    let mut out = Outcome::new(&cfg);
    let raw_cfg = cfg.run.clone().with_scheme(Scheme::RawWeighted);
    let drift_cfg = cfg.run.clone().with_scheme(Scheme::PhysicalDrift).with_seed(derive_seed(cfg.run.master_seed, 1));
    let raw = ensemble(&scenario, &raw_cfg, opts, &mut out, "trajectories_raw.csv")?;
    let drift = ensemble(&scenario, &drift_cfg, opts, &mut out, "trajectories_drift.csv")?;
    let cmp = compare_schemes(&raw, &drift, 0)?;

    out.line(format!("scenario       {} ({} trials per scheme)", scenario.name, cfg.run.trials));
    for (i, t) in cmp.times.iter().enumerate() {
        out.line(format!(
            "t = {t:<8.4} raw {:.5} ± {:.5}   drift {:.5} ± {:.5}   z = {:+.2}",
            raw.mean_p[i][0], raw.se_p[i][0], drift.mean_p[i][0], drift.se_p[i][0], cmp.z[i]
        ));
    }
    out.line(format!("agreement      max |z| {:.2} (limit 5): {}", cmp.max_abs_z, verdict(cmp.agree)));
    out.line(format!(
        "raw ESS        {:.1} = {:.4} of trials (need 0.1): {}",
        raw.ess,
        cmp.ess_fraction,
        verdict(cmp.ess_ok)
    ));
    out.pass = cmp.agree && cmp.ess_ok;
    out.json(opts.out, "report.json", &json!({ "raw": raw, "drift": drift, "comparison": cmp }))?;
    out.master_seed = Some(cfg.run.master_seed);
    out.scenario = Some(scenario);
    Ok(out)
}

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    target: String,
    pass: bool,
}

fn timing(mut cfg: TimingConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.apply(opts.overrides);
    let mut out = Outcome::new(&cfg);
    let mut distinct = cfg.delta_ns.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut checks = Vec::new();

    let (points, fit, notice): (Vec<ScalingPoint>, Option<Value>, Option<String>) = if distinct.len() >= 3 {
        let fit = scaling_study(cfg.params, &distinct, cfg.a1_squared, &cfg.run)?;
        checks.push(Check {
            name: "scaling slope".into(),
            value: fit.slope,
            target: format!("-2 ± {}", cfg.slope_tolerance),
            pass: (fit.slope + 2.0).abs() <= cfg.slope_tolerance,
        });
        let summary = json!({
            "slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual, "monotone": fit.monotone
        });
        (fit.points, Some(summary), None)
    } else if distinct.is_empty() {
        (Vec::new(), None, Some("no ΔN values given: catalog only".to_string()))
    } else {
        let pts = distinct
            .iter()
            .enumerate()
            .map(|(i, &dn)| timing_point(cfg.params, dn, cfg.a1_squared, &cfg.run, distinct[0], i as u64))
            .collect::<csl_core::Result<Vec<_>>>()?;
        (pts, None, Some("fit skipped: need ≥ 3 distinct values of ΔN".to_string()))
    };
    for p in &points {
        let ratio = p.median / p.predicted;
        checks.push(Check {
            name: format!("median collapse time, ΔN = {}", p.delta_n),
            value: p.median,
            target: format!("{} within a factor {}", p.predicted, cfg.median_factor),
            pass: ratio <= cfg.median_factor && ratio >= 1.0 / cfg.median_factor,
        });
    }

    let decay = match &cfg.decay {
        Some(d) => {
            let scenario = two_branch_delta_scenario(cfg.params, d.delta_n, d.a1_squared)?;
            let trajectories = run_trajectories(&scenario, &d.run)?;
            let s = mean_decay_slope(&trajectories)?;
            let target = -cfg.params.lambda * (d.delta_n as f64).powi(2);
            checks.push(Check {
                name: format!("mean decay slope, ΔN = {}", d.delta_n),
                value: s.mean,
                target: format!("{target} within {}%", cfg.decay_tolerance * 100.0),
                pass: ((s.mean - target) / target).abs() <= cfg.decay_tolerance,
            });
            Some(json!({ "delta_n": d.delta_n, "target": target, "summary": s }))
        }
        None => None,
    };

    let hooks = hook_catalog(&cfg.hook_params, &cfg.hooks);
    out.line(format!("{:>8}  {:>12}  {:>12}  {:>12}", "ΔN", "median", "predicted", "collapsed"));
    for p in &points {
        out.line(format!("{:>8}  {:>12.5e}  {:>12.5e}  {:>12}", p.delta_n, p.median, p.predicted, p.collapsed));
    }
    if let Some(n) = &notice {
        out.line(n);
    }
    out.line(format!("hooks at λ = {:e} /s", cfg.hook_params.lambda));
    for h in &hooks {
        let t = h.t_collapse.map_or("never".to_string(), |t| format!("{t:.3e} s"));
        out.line(format!("  {:<12} ΔN = {:<12} {:<14} {:?}", h.name, h.delta_n, t, h.verdict));
    }
    for c in &checks {
        out.line(format!("{}: {:.5} (target {}) {}", c.name, c.value, c.target, verdict(c.pass)));
    }
    out.pass = checks.iter().all(|c| c.pass);
    let report = json!({
        "points": points, "fit": fit, "notice": notice, "decay": decay,
        "hooks": hooks, "checks": checks, "pass": out.pass
    });
    out.json(opts.out, "report.json", &report)?;
    out.master_seed = Some(cfg.run.master_seed);
    Ok(out)
}

fn nogo(mut cfg: NogoConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.apply(opts.overrides);
    let mut out = Outcome::new(&cfg);
    let seeds = cfg.seeds.max(1);
    let mut tables = Vec::with_capacity(seeds);
    for i in 0..seeds {
        let mut t = cfg.table.clone();
        if i > 0 {
            t.master_seed = derive_seed(cfg.table.master_seed, 1000 + i as u64);
        }
        tables.push(born_requires_dependence_report(&t)?);
    }
    let holding = tables.iter().filter(|t| t.pattern_holds).count();
    let required = (cfg.stability_fraction * seeds as f64).ceil() as usize;
    let stable = holding >= required;

    let text = tables[0].render_text();
    out.text(opts.out, "table.txt", &text)?;
    out.summary.push_str(&text);
    if seeds > 1 {
        out.line(format!("pattern held on {holding} of {seeds} seeds (need {required}): {}", verdict(stable)));
    }
    let mut pass = tables[0].pattern_holds && stable;

    let pair = match &cfg.pair {
        Some(p) => {
            let a = two_branch_delta_scenario(p.params, p.delta_n, p.first_a1_squared)?;
            let b = two_branch_delta_scenario(p.params, p.delta_n, p.second_a1_squared)?;
            let r = run_no_go(&a, &b, &p.run)?;
            let max_born = r.runs.iter().map(|x| x.born.max_abs_z).fold(0.0f64, f64::max);
            let ok = r.verdict == NoGoVerdict::CounterexampleConfirmed && max_born > p.born_violation_z;
            let mut line = String::new();
            let _ = write!(
                line,
                "amplitude pair {} vs {}: frequencies {} vs {}, agreement max |z| {:.2}, Born max |z| {:.1}: {:?} {}",
                p.first_a1_squared,
                p.second_a1_squared,
                fmt_vec(&r.runs[0].report.outcome_frequencies, 4),
                fmt_vec(&r.runs[1].report.outcome_frequencies, 4),
                r.max_agreement_z,
                max_born,
                r.verdict,
                verdict(ok)
            );
            out.line(line);
            pass &= ok;
            Some(r)
        }
        None => None,
    };
    out.pass = pass;
    let report = json!({
        "tables": tables,
        "stability": { "seeds": seeds, "holding": holding, "required": required, "pass": stable },
        "pair": pair,
        "pass": pass
    });
    out.json(opts.out, "report.json", &report)?;
    out.master_seed = Some(cfg.table.master_seed);
    Ok(out)
}

fn branchlab(cfg: BranchlabConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(&cfg);
    let (report, wave) = isolation_run(&cfg.setup, cfg.dt, cfg.steps)?;
    let path = opts.out.join("snapshot.csv");
    let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    wave.write_csv(BufWriter::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    out.outputs.push("snapshot.csv".into());

    out.line(format!("{} sites, dt = {}, {} of {} steps", report.grid_size, report.dt, report.steps_completed, report.steps_requested));
    for c in &report.checks {
        out.line(format!("{:<24} {:.3e}  (limit {:.0e})  {}", c.name, c.value, c.limit, verdict(c.pass)));
    }
    if let Some(step) = report.collision_step {
        out.line(format!("regions collided at step {step}; evolution halted"));
    }
    out.line(format!(
        "plus packet moved {:.3} (lattice group velocity predicts {:.3})",
        report.plus_center_drift, report.plus_center_predicted
    ));
    out.pass = report.pass;
    out.json(opts.out, "report.json", &report)?;
    Ok(out)
}

fn constraints(cfg: ConstraintsConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let mut out = Outcome::new(&cfg);
    let v = check_all(&cfg);
    out.summary.push_str(&v.render_text());
    out.pass = v.pass;
    out.json(opts.out, "report.json", &v)?;
    Ok(out)
}
