//! Collapse driven by noise that ignores the amplitudes cannot produce
//! amplitude-dependent outcome frequencies, and unitary evolution never
//! collapses at all.
//!
//! The argument is made statistically: two scenarios that differ only in
//! their amplitudes are run under the coefficient-independent scheme and
//! their outcome distributions compared.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::StepRule;
use crate::ensemble::{
    born_test, run_ensemble, run_ensemble_with_rule, run_trajectories_with_rule, BornTest,
    EnsembleReport, BORN_Z_LIMIT, MIN_TRIALS_FOR_STATISTICS,
};
use crate::error::{Error, Result};
use crate::model::{ModelParams, RunConfig, Scenario, Scheme};
use crate::rng::derive_seed;
use crate::scenario::scenario_from_probabilities;
use crate::stats::two_proportion_z;

/// Occupation difference of the reference configuration.
pub const REFERENCE_DELTA_N: u64 = 4;
pub const REFERENCE_LAMBDA: f64 = 1.0;
pub const REFERENCE_T_MAX: f64 = 5.0;
pub const REFERENCE_DT: f64 = 2e-3;
pub const REFERENCE_TRIALS: usize = 10_000;
pub const REFERENCE_SEED: u64 = 20_260_417;

/// `λ·max_k Σ_n N_nk²·t` used for the raw-weighted row. Longer horizons
/// leave the squared-norm weights too degenerate for a usable ESS.
pub const RAW_HORIZON_EXPONENT: f64 = 0.25;

/// The reference run: ΔN = 4, λ = 1, t_max = 5, 10⁴ trials, coefficient-independent.
pub fn reference_config() -> RunConfig {
    RunConfig::new(
        REFERENCE_DT,
        REFERENCE_T_MAX,
        REFERENCE_TRIALS,
        Scheme::CoefficientIndependent,
        REFERENCE_SEED,
    )
}

pub fn reference_params() -> ModelParams {
    ModelParams { lambda: REFERENCE_LAMBDA, cell_volume: 1.0, density: 1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoGoVerdict {
    /// Frequencies agree across amplitude settings and Born fails in at least one run.
    CounterexampleConfirmed,
    /// One of the two conditions did not hold.
    NotDemonstrated,
    /// The branches cannot be told apart (identical occupations) or nothing collapsed.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoGoRun {
    pub report: EnsembleReport,
    pub born: BornTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoGoReport {
    pub runs: Vec<NoGoRun>,
    /// Two-proportion z per branch between the two runs.
    pub agreement_z: Vec<f64>,
    pub max_agreement_z: f64,
    pub frequencies_agree: bool,
    pub born_violated: bool,
    pub verdict: NoGoVerdict,
}

/// Runs both scenarios under the coefficient-independent scheme (the second
/// with a seed derived from the first) and compares their frequencies.
pub fn run_no_go(first: &Scenario, second: &Scenario, config: &RunConfig) -> Result<NoGoReport> {
    let (a, b) = (&first.initial, &second.initial);
    if a.len() != b.len()
        || a.cell_count != b.cell_count
        || a.branches.iter().zip(&b.branches).any(|(x, y)| x.occupation != y.occupation)
    {
        return Err(Error::arg("scenarios must share occupations"));
    }
    if first.params != second.params {
        return Err(Error::arg("scenarios must share model parameters"));
    }
    let cfg = config.clone().with_scheme(Scheme::CoefficientIndependent);
    let cfg_b = cfg.clone().with_seed(derive_seed(cfg.master_seed, 1));

    let mut runs = Vec::with_capacity(2);
    for (s, c) in [(first, &cfg), (second, &cfg_b)] {
        let report = run_ensemble(s, c)?;
        let born = born_test(&report, &report.initial_probabilities)?;
        runs.push(NoGoRun { report, born });
    }

    let (ra, rb) = (&runs[0].report, &runs[1].report);
    let agreement_z: Vec<f64> = ra
        .outcome_frequencies
        .iter()
        .zip(&rb.outcome_frequencies)
        .map(|(&fa, &fb)| two_proportion_z(fa, ra.effective_trials, fb, rb.effective_trials))
        .collect();
    let max_agreement_z = agreement_z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let frequencies_agree = max_agreement_z <= BORN_Z_LIMIT;
    let born_violated = runs.iter().any(|r| r.born.max_abs_z > BORN_Z_LIMIT);

    let degenerate = a.is_occupation_degenerate() || runs.iter().all(|r| r.report.collapsed == 0);
    let verdict = if degenerate {
        NoGoVerdict::Degenerate
    } else if frequencies_agree && born_violated {
        NoGoVerdict::CounterexampleConfirmed
    } else {
        NoGoVerdict::NotDemonstrated
    };
    Ok(NoGoReport { runs, agreement_z, max_agreement_z, frequencies_agree, born_violated, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeCheck {
    /// `max |p_k(t) − p_k(0)|` over trials, samples and branches.
    pub max_deviation: f64,
    pub pass: bool,
}

pub fn unitary_freeze_check(scenario: &Scenario, config: &RunConfig) -> Result<FreezeCheck> {
    unitary_freeze_check_with_rule(scenario, config, &StepRule::for_scheme(Scheme::Unitary))
}

/// Freeze check with an explicit step rule, for fixtures that switch noise on.
pub fn unitary_freeze_check_with_rule(
    scenario: &Scenario,
    config: &RunConfig,
    rule: &StepRule,
) -> Result<FreezeCheck> {
    if config.scheme != Scheme::Unitary {
        return Err(Error::arg(format!("freeze check needs the unitary scheme, got {}", config.scheme)));
    }
    let p0 = scenario.initial.initial_probabilities();
    let mut max_deviation = 0.0f64;
    for t in run_trajectories_with_rule(scenario, config, rule)? {
        for p in &t.probs {
            for (x, y) in p.iter().zip(&p0) {
                let d = (x - y).abs();
                max_deviation = if d.is_nan() { f64::INFINITY } else { max_deviation.max(d) };
            }
        }
    }
    Ok(FreezeCheck { max_deviation, pass: max_deviation <= 1e-12 })
}

/// Inputs for the three-way comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceConfig {
    pub probabilities: Vec<f64>,
    pub occupations: Vec<Vec<u64>>,
    pub lambda: f64,
    pub dt: f64,
    pub t_max: f64,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_raw_horizon")]
    pub raw_horizon_exponent: f64,
}

fn default_raw_horizon() -> f64 {
    RAW_HORIZON_EXPONENT
}

impl Default for DependenceConfig {
    /// Cat scenario `|a|² = (2/3, 1/3)` at the reference configuration.
    fn default() -> Self {
        DependenceConfig {
            probabilities: vec![2.0 / 3.0, 1.0 / 3.0],
            occupations: vec![vec![REFERENCE_DELTA_N], vec![0]],
            lambda: REFERENCE_LAMBDA,
            dt: REFERENCE_DT,
            t_max: REFERENCE_T_MAX,
            trials: REFERENCE_TRIALS,
            master_seed: REFERENCE_SEED,
            raw_horizon_exponent: RAW_HORIZON_EXPONENT,
        }
    }
}

impl DependenceConfig {
    /// `a² = (0.5, 0.3, 0.2)` with occupations 0, 4, 8.
    pub fn three_branch() -> Self {
        DependenceConfig {
            probabilities: vec![0.5, 0.3, 0.2],
            occupations: vec![vec![0], vec![REFERENCE_DELTA_N], vec![2 * REFERENCE_DELTA_N]],
            ..Self::default()
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let params = ModelParams { lambda: self.lambda, cell_volume: 1.0, density: 1.0 };
        scenario_from_probabilities("dependence", params, &self.probabilities, self.occupations.clone())
    }

    /// Horizon of the raw-weighted row.
    pub fn raw_horizon(&self) -> f64 {
        let max_sq = self
            .occupations
            .iter()
            .map(|o| o.iter().map(|&n| (n as f64).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        if max_sq > 0.0 {
            (self.raw_horizon_exponent / (self.lambda * max_sq)).min(self.t_max)
        } else {
            self.t_max
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub scheme: Scheme,
    pub t_max: f64,
    pub dt: f64,
    pub trials: usize,
    pub effective_trials: f64,
    pub frequencies: Vec<f64>,
    pub max_abs_z: f64,
    pub born_pass: bool,
    pub expected_pass: bool,
}

impl DependenceRow {
    pub fn as_expected(&self) -> bool {
        self.born_pass == self.expected_pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceTable {
    pub expected: Vec<f64>,
    pub rows: Vec<DependenceRow>,
    pub insufficient_statistics: bool,
    /// Physical drift and raw weighted pass, coefficient independent fails.
    pub pattern_holds: bool,
}

/// Born test under each scheme on the same scenario. Only noise laws that
/// depend on the amplitudes are expected to pass.
pub fn born_requires_dependence_report(config: &DependenceConfig) -> Result<DependenceTable> {
    let scenario = config.scenario()?;
    let expected = scenario.initial.initial_probabilities();
    let raw_t = config.raw_horizon();
    let raw_dt = config.dt.min(raw_t / 100.0);
    let plan = [
        (Scheme::PhysicalDrift, config.dt, config.t_max, true),
        (Scheme::RawWeighted, raw_dt, raw_t, true),
        (Scheme::CoefficientIndependent, config.dt, config.t_max, false),
    ];
    let mut rows = Vec::with_capacity(plan.len());
    for (i, (scheme, dt, t_max, expected_pass)) in plan.into_iter().enumerate() {
        let seed = derive_seed(config.master_seed, i as u64);
        let run = RunConfig::new(dt, t_max, config.trials, scheme, seed);
        let report = run_ensemble_with_rule(&scenario, &run, &StepRule::for_scheme(scheme))?;
        let born = born_test(&report, &expected)?;
        rows.push(DependenceRow {
            scheme,
            t_max,
            dt,
            trials: config.trials,
            effective_trials: born.effective_trials,
            frequencies: born.frequencies,
            max_abs_z: born.max_abs_z,
            born_pass: born.pass,
            expected_pass,
        });
    }
    let insufficient = config.trials < MIN_TRIALS_FOR_STATISTICS;
    let pattern_holds = !insufficient && rows.iter().all(DependenceRow::as_expected);
    Ok(DependenceTable { expected, rows, insufficient_statistics: insufficient, pattern_holds })
}

impl DependenceTable {
    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let k = self.expected.len();
        let freq_head: Vec<String> = (1..=k).map(|i| format!("f_{i}")).collect();
        let mut header = vec!["scheme".to_string(), "t_max".into(), "n_eff".into()];
        header.extend(freq_head);
        header.extend(["max|z|".into(), "born".into(), "expected".into()]);

        let mut lines: Vec<Vec<String>> = vec![header];
        let mut target = vec!["|a|^2".to_string(), String::new(), String::new()];
        target.extend(self.expected.iter().map(|e| format!("{e:.4}")));
        target.extend([String::new(), String::new(), String::new()]);
        lines.push(target);
        for r in &self.rows {
            let mut l = vec![r.scheme.label().to_string(), format!("{}", r.t_max), format!("{:.0}", r.effective_trials)];
            l.extend(r.frequencies.iter().map(|f| format!("{f:.4}")));
            l.push(format!("{:.2}", r.max_abs_z));
            l.push(pass_word(r.born_pass).into());
            l.push(pass_word(r.expected_pass).into());
            lines.push(l);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if self.insufficient_statistics {
            let _ = writeln!(out, "insufficient statistics: fewer than {MIN_TRIALS_FOR_STATISTICS} trials");
        }
        let _ = writeln!(out, "pattern {}", if self.pattern_holds { "holds" } else { "does not hold" });
        out
    }
}

fn pass_word(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::two_branch_delta_scenario;

    fn cat(delta_n: u64, a1: f64) -> Scenario {
        two_branch_delta_scenario(reference_params(), delta_n, a1).unwrap()
    }

    fn small(trials: usize) -> RunConfig {
        RunConfig::new(5e-3, REFERENCE_T_MAX, trials, Scheme::CoefficientIndependent, 3)
    }

    #[test]
    fn differing_occupations_rejected() {
        let err = run_no_go(&cat(4, 0.7), &cat(2, 0.3), &small(10)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn swapped_amplitudes_confirm_counterexample() {
        let r = run_no_go(&cat(4, 0.7), &cat(4, 0.3), &small(500)).unwrap();
        assert!(r.frequencies_agree, "{:?}", r.agreement_z);
        assert!(r.born_violated);
        assert_eq!(r.verdict, NoGoVerdict::CounterexampleConfirmed);
        assert_ne!(r.runs[0].report.master_seed, r.runs[1].report.master_seed);
    }

    #[test]
    fn identical_inputs_agree() {
        let cfg = RunConfig::new(5e-3, 0.3, 400, Scheme::PhysicalDrift, 3);
        let r = run_no_go(&cat(4, 0.5), &cat(4, 0.5), &cfg).unwrap();
        assert!(r.frequencies_agree);
        assert_eq!(r.runs[0].report.scheme, Scheme::CoefficientIndependent);
    }

    #[test]
    fn zero_delta_is_degenerate() {
        let r = run_no_go(&cat(0, 0.5), &cat(0, 0.5), &small(100)).unwrap();
        assert_eq!(r.verdict, NoGoVerdict::Degenerate);
        assert_eq!(r.runs[0].report.collapsed, 0);
    }

    #[test]
    fn unitary_freezes_probabilities() {
        let cfg = RunConfig::new(0.01, 1.0, 3, Scheme::Unitary, 1).with_uniform_samples(10);
        let c = unitary_freeze_check(&cat(4, 2.0 / 3.0), &cfg).unwrap();
        assert!(c.pass);
        assert_eq!(c.max_deviation, 0.0);

        let probs = [0.1, 0.35, 0.05, 0.2, 0.3];
        let occ = (0..5).map(|i| vec![i * 3, 7 - i]).collect();
        let s = scenario_from_probabilities("k5", reference_params(), &probs, occ).unwrap();
        assert!(unitary_freeze_check(&s, &cfg).unwrap().pass);
    }

    #[test]
    fn freeze_check_catches_noise() {
        let cfg = RunConfig::new(0.01, 1.0, 3, Scheme::Unitary, 1).with_uniform_samples(10);
        let rule = StepRule { noise: true, ..StepRule::for_scheme(Scheme::Unitary) };
        let c = unitary_freeze_check_with_rule(&cat(4, 2.0 / 3.0), &cfg, &rule).unwrap();
        assert!(!c.pass && c.max_deviation > 1e-3);
        assert!(unitary_freeze_check(&cat(1, 0.5), &cfg.with_scheme(Scheme::PhysicalDrift)).is_err());
    }

    #[test]
    fn table_flags_small_trial_counts() {
        let cfg = DependenceConfig { trials: 10, dt: 0.01, ..DependenceConfig::default() };
        let t = born_requires_dependence_report(&cfg).unwrap();
        assert!(t.insufficient_statistics && !t.pattern_holds);
        assert_eq!(t.rows.len(), 3);
        assert!(t.render_text().contains("insufficient statistics"));
    }

    #[test]
    fn table_pattern_small_run() {
        let cfg = DependenceConfig { trials: 1000, dt: 5e-3, ..DependenceConfig::default() };
        let t = born_requires_dependence_report(&cfg).unwrap();
        assert!(t.pattern_holds, "{}", t.render_text());
        assert!((t.rows[1].t_max - 0.25 / 16.0).abs() < 1e-15);
        let text = t.render_text();
        assert!(text.contains("physical-drift") && text.contains("pattern holds"));
    }

    #[test]
    fn reference_config_is_consistent() {
        let c = reference_config();
        assert_eq!(c.step_count(), 2500);
        assert!(c.validate().is_ok());
        assert_eq!(DependenceConfig::three_branch().scenario().unwrap().initial.len(), 3);
    }
}
