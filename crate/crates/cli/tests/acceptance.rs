//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs with `harness = false` so every criterion is reported even when an
//! earlier one fails. `cargo test --test acceptance -- C4 C9` runs a subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use csl_core::branchlab::{isolation_suite, TwoPacketSetup};
use csl_core::constraints::{check_all, CouplingSet};
use csl_core::counterexample::{
    born_requires_dependence_report, reference_config, reference_params, run_no_go, DependenceConfig, NoGoVerdict,
    REFERENCE_DELTA_N, REFERENCE_SEED,
};
use csl_core::ensemble::{
    born_test, compare_schemes, default_hooks, hook_catalog, martingale_test, mean_decay_slope, run_ensemble,
    run_trajectories, scaling_study, timing_point,
};
use csl_core::rng::derive_seed;
use csl_core::{scenario_from_probabilities, two_branch_delta_scenario, ModelParams, RunConfig, Scheme};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c01_born_cat() -> Outcome {
    let scenario = two_branch_delta_scenario(ModelParams::unit(), 4, 2.0 / 3.0).map_err(err)?;
    let cfg = RunConfig::new(1e-3, 5.0, 10_000, Scheme::PhysicalDrift, 1);
    let (report, elapsed) = {
        let start = Instant::now();
        let r = run_ensemble(&scenario, &cfg).map_err(err)?;
        (r, start.elapsed())
    };
    let f1 = report.outcome_frequencies[0];
    let born = born_test(&report, &report.initial_probabilities).map_err(err)?;
    let pass = (f1 - 2.0 / 3.0).abs() <= 0.015 && born.pass && elapsed < Duration::from_secs(60);
    Ok((pass, format!("f1 = {f1:.4} (2/3 ± 0.015), z = {:.2}, {:.1} s (< 60 s)", born.z[0], elapsed.as_secs_f64())))
}

fn c02_born_k3() -> Outcome {
    let scenario =
        scenario_from_probabilities("three-branch", ModelParams::unit(), &[0.5, 0.3, 0.2], vec![vec![0], vec![4], vec![8]])
            .map_err(err)?;
    let cfg = RunConfig::new(1e-3, 5.0, 10_000, Scheme::PhysicalDrift, 2);
    let report = run_ensemble(&scenario, &cfg).map_err(err)?;
    let born = born_test(&report, &[0.5, 0.3, 0.2]).map_err(err)?;
    let f = &born.frequencies;
    Ok((born.pass, format!("f = ({:.4}, {:.4}, {:.4}), max |z| = {:.2} (≤ 3)", f[0], f[1], f[2], born.max_abs_z)))
}

fn c03_martingale() -> Outcome {
    let drift_scenario = two_branch_delta_scenario(ModelParams::unit(), 4, 2.0 / 3.0).map_err(err)?;
    let mut drift = RunConfig::new(1e-3, 5.0, 10_000, Scheme::PhysicalDrift, 3);
    drift.sample_times = vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
    let d = martingale_test(&run_ensemble(&drift_scenario, &drift).map_err(err)?);

    // λΔN²t = 1 at the horizon
    let raw_scenario = two_branch_delta_scenario(ModelParams::unit(), 1, 2.0 / 3.0).map_err(err)?;
    let raw = RunConfig::new(1e-3, 1.0, 10_000, Scheme::RawWeighted, 4).with_uniform_samples(10);
    let r = martingale_test(&run_ensemble(&raw_scenario, &raw).map_err(err)?);
    Ok((
        d.pass && r.pass,
        format!("drift mean p_k max |z| = {:.2}, raw mean ‖Ψ‖² max |z| = {:.2} (≤ 5)", d.max_abs_z, r.max_abs_z),
    ))
}

fn c04_equivalence() -> Outcome {
    let scenario = two_branch_delta_scenario(ModelParams::unit(), 2, 2.0 / 3.0).map_err(err)?;
    let raw = RunConfig::new(1e-3, 1.0, 10_000, Scheme::RawWeighted, 5).with_uniform_samples(10);
    let drift = raw.clone().with_scheme(Scheme::PhysicalDrift).with_seed(derive_seed(5, 1));
    let a = run_ensemble(&scenario, &raw).map_err(err)?;
    let b = run_ensemble(&scenario, &drift).map_err(err)?;
    let c = compare_schemes(&a, &b, 0).map_err(err)?;
    Ok((
        c.agree && c.ess_ok,
        format!(
            "max |z| = {:.2} (≤ 5), raw ESS = {:.1} = {:.4} of trials (≥ 0.1)",
            c.max_abs_z, a.ess, c.ess_fraction
        ),
    ))
}

fn c05_collapse_time() -> Outcome {
    let hooks = hook_catalog(&ModelParams::standard(), &default_hooks());
    let pointer = hooks.iter().find(|h| h.delta_n == 30_000_000_000).ok_or("pointer hook missing")?;
    let t = pointer.t_collapse.ok_or("pointer hook has no collapse time")?;
    let hook_ok = (t - 1.0 / 30_000.0).abs() <= 1e-15 && pointer.detectable;
    let cfg = RunConfig::new(0.01, 40.0, 2_000, Scheme::PhysicalDrift, 6);
    let p = timing_point(ModelParams::unit(), 1, 0.5, &cfg, 1, 0).map_err(err)?;
    let ratio = p.median / p.predicted;
    let median_ok = (0.5..=2.0).contains(&ratio);
    Ok((
        hook_ok && median_ok,
        format!("pointer t = {t:.3e} s (3.33e-5), median = {:.3} vs predicted {:.0} (within ×2)", p.median, p.predicted),
    ))
}

fn c06_scaling() -> Outcome {
    let cfg = RunConfig::new(0.01, 40.0, 2_000, Scheme::PhysicalDrift, 7);
    let fit = scaling_study(ModelParams::unit(), &[1, 2, 4, 8, 16], 0.5, &cfg).map_err(err)?;
    let slope_ok = (fit.slope + 2.0).abs() <= 0.2;

    let delta_n = 4u64;
    let scenario = two_branch_delta_scenario(ModelParams::unit(), delta_n, 0.5).map_err(err)?;
    let run = RunConfig::new(1e-3, 5.0, 1_000, Scheme::PhysicalDrift, 8).with_uniform_samples(20);
    let decay = mean_decay_slope(&run_trajectories(&scenario, &run).map_err(err)?).map_err(err)?;
    let target = -((delta_n * delta_n) as f64);
    let decay_ok = ((decay.mean - target) / target).abs() <= 0.1;
    Ok((
        slope_ok && decay_ok,
        format!("slope = {:.3} (−2 ± 0.2), decay = {:.2} (−16 ± 10%)", fit.slope, decay.mean),
    ))
}

fn c07_no_go() -> Outcome {
    let first = two_branch_delta_scenario(reference_params(), REFERENCE_DELTA_N, 0.7).map_err(err)?;
    let second = two_branch_delta_scenario(reference_params(), REFERENCE_DELTA_N, 0.3).map_err(err)?;
    let pair = run_no_go(&first, &second, &reference_config()).map_err(err)?;
    let born_z = pair.runs.iter().map(|r| r.born.max_abs_z).fold(0.0, f64::max);
    let pair_ok = pair.verdict == NoGoVerdict::CounterexampleConfirmed && pair.frequencies_agree && born_z > 5.0;

    let seeds = 10u64;
    let mut held = 0;
    for i in 0..seeds {
        let seed = if i == 0 { REFERENCE_SEED } else { derive_seed(REFERENCE_SEED, 1000 + i) };
        let table = born_requires_dependence_report(&DependenceConfig { master_seed: seed, ..Default::default() })
            .map_err(err)?;
        held += usize::from(table.pattern_holds);
    }
    Ok((
        pair_ok && held >= 9,
        format!(
            "agreement |z| = {:.2} (≤ 3), Born |z| = {born_z:.1} (> 5), pass/pass/fail on {held}/{seeds} seeds (≥ 9)",
            pair.max_agreement_z
        ),
    ))
}

fn c08_constraints() -> Outcome {
    let mass = check_all(&CouplingSet::mass_proportional());
    let equal = check_all(&CouplingSet::equal_coupling());
    let lambda = check_all(&CouplingSet { lambda: 1e-5, ..CouplingSet::mass_proportional() });
    let pass = mass.pass
        && !equal.items[0].pass
        && equal.items[1].pass
        && equal.items[2].pass
        && lambda.items[0].pass
        && lambda.items[1].pass
        && !lambda.items[2].pass;
    Ok((
        pass,
        format!(
            "mass-proportional {}; equal coupling: electron/nucleon {}; λ = 1e-5: interference bound {}",
            verdict(mass.pass),
            verdict(equal.items[0].pass),
            verdict(lambda.items[2].pass)
        ),
    ))
}

fn verdict(pass: bool) -> &'static str {
    if pass { "passes" } else { "FAILS" }
}

fn c09_isolation() -> Outcome {
    let start = Instant::now();
    let r = isolation_suite(&TwoPacketSetup::default(), 0.05, 1_000).map_err(err)?;
    let elapsed = start.elapsed();
    let pass = r.pass
        && r.steps_completed == 1_000
        && r.final_gap >= 2
        && r.final_cross_element_abs == 0.0
        && r.max_norm_drift_per_step <= 1e-12
        && r.max_region_norm_change <= 1e-10
        && r.linearity_residual <= 1e-12
        && elapsed < Duration::from_secs(30);
    Ok((
        pass,
        format!(
            "drift/step = {:.1e}, region change = {:.1e}, cross = {}, linearity = {:.1e}, gap = {}, {:.1} s (< 30 s)",
            r.max_norm_drift_per_step,
            r.max_region_norm_change,
            r.final_cross_element_abs,
            r.linearity_residual,
            r.final_gap,
            elapsed.as_secs_f64()
        ),
    ))
}

fn read_outputs(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if name != "manifest.json" {
            files.insert(name, std::fs::read(&path).map_err(err)?);
        }
    }
    Ok(files)
}

fn rerun(manifest: &Path, out: &Path, threads: &str) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_csl-lab"))
        .arg("rerun")
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .env("CSL_LAB_THREADS", threads)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(err)?;
    status.code().ok_or_else(|| "csl-lab terminated by a signal".to_string())
}

fn c10_determinism() -> Outcome {
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for stem in ["c08_constraints_mass", "c09_branchlab", "c10_determinism"] {
        let first = tmp.path().join(stem).join("first");
        let second = tmp.path().join(stem).join("second");
        let a = rerun(&recipes.join(format!("{stem}.json")), &first, "1")?;
        let b = rerun(&first.join("manifest.json"), &second, "3")?;
        let (fa, fb) = (read_outputs(&first)?, read_outputs(&second)?);
        compared += fa.len();
        if a != b || fa.is_empty() || fa != fb {
            mismatched.push(stem);
        }
    }
    Ok((
        mismatched.is_empty(),
        format!("{compared} output files bit-identical after rerun from manifest on 1 vs 3 threads; mismatches: {mismatched:?}"),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1", "Born rule, cat state", c01_born_cat),
        ("C2", "Born rule, K = 3", c02_born_k3),
        ("C3", "martingale identities", c03_martingale),
        ("C4", "raw-weighted vs physical-drift", c04_equivalence),
        ("C5", "collapse-time formula", c05_collapse_time),
        ("C6", "scaling exponent and decay", c06_scaling),
        ("C7", "amplitude-blind noise no-go", c07_no_go),
        ("C8", "coupling constraints", c08_constraints),
        ("C9", "branch isolation", c09_isolation),
        ("C10", "determinism from manifests", c10_determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        ran += 1;
        let (outcome, elapsed) = timed(run);
        let (pass, detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:<3} {name}: {detail} [{:.1} s]", elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
