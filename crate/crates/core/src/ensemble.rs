//! Monte Carlo ensembles over independent trajectories: outcome statistics,
//! martingale checks, collapse-time distributions and the ΔN scaling law.
//!
//! Per-trial results are collected in trial order and reduced serially, so
//! a report is bit-identical for any thread count.
//!
//! Outcome frequencies use the decided winner of each trial. A trial that
//! has not reached `decision_level` by the horizon contributes its final
//! branch probabilities instead; under the norm-weighted measure `p_k(t)`
//! is the conditional probability that branch `k` eventually wins, so this
//! completion leaves the expected frequencies unchanged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{evolve_with_rule, StepRule, Trajectory};
use crate::error::{Error, Result};
use crate::model::{validate, ModelParams, RunConfig, Scenario, Scheme, DEFAULT_COLLAPSE_LEVEL};
use crate::rng::derive_seed;
use crate::scenario::two_branch_delta_scenario;
use crate::stats::{
    effective_sample_size, fit_line, mean_se, proportion_z, quantile, weighted_mean_se,
    weighted_quantile, weights_from_logs, z_score, Estimate,
};

/// Below this many trials a statistical verdict is not issued.
pub const MIN_TRIALS_FOR_STATISTICS: usize = 100;
/// Minimum number of trials that must reach the collapse level before
/// collapse-time quantiles are reported.
pub const MIN_COLLAPSED_FOR_TIMING: usize = 100;
/// Raw-weighted ensembles with ESS below this fraction of the trials are flagged.
pub const ESS_WARNING_FRACTION: f64 = 0.1;
/// More failed trajectories than this fraction marks a report unhealthy.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
pub const BORN_Z_LIMIT: f64 = 3.0;
pub const MARTINGALE_Z_LIMIT: f64 = 5.0;
/// Collapse must complete faster than this to go unnoticed by an observer.
pub const PERCEPTION_THRESHOLD_SECONDS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseQuantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub scenario: String,
    pub scheme: Scheme,
    pub trials: usize,
    pub master_seed: u64,
    pub config: RunConfig,
    /// `|a_k|²` of the initial state.
    pub initial_probabilities: Vec<f64>,
    /// True when trial statistics carry squared-norm weights.
    pub weighted: bool,
    /// Decided winners per branch, weighted and scaled to the number of
    /// successful trials for the raw-weighted scheme.
    pub outcome_counts: Vec<f64>,
    /// Trials (or weight) without a decided winner.
    pub undecided: f64,
    /// Winner frequencies, with undecided trials completed by their final probabilities.
    pub outcome_frequencies: Vec<f64>,
    /// Sample size backing the frequencies: successful trials, or ESS when weighted.
    pub effective_trials: f64,
    pub ess: f64,
    pub ess_warning: bool,
    pub sample_times: Vec<f64>,
    /// `mean_p[i][k]`: (weighted) mean of `p_k` at sample `i`.
    pub mean_p: Vec<Vec<f64>>,
    pub se_p: Vec<Vec<f64>>,
    /// Unweighted mean of `‖Ψ‖²` at each sample.
    pub mean_sq_norm: Vec<f64>,
    pub se_sq_norm: Vec<f64>,
    pub collapse_level: f64,
    /// Trials that reached the collapse level.
    pub collapsed: usize,
    pub collapse_times: Option<CollapseQuantiles>,
    pub failures: usize,
    pub healthy: bool,
}

pub fn run_trajectories(scenario: &Scenario, config: &RunConfig) -> Result<Vec<Trajectory>> {
    run_trajectories_with_rule(scenario, config, &StepRule::for_scheme(config.scheme))
}

pub fn run_trajectories_with_rule(
    scenario: &Scenario,
    config: &RunConfig,
    rule: &StepRule,
) -> Result<Vec<Trajectory>> {
    if let Err(v) = validate(scenario) {
        return Err(Error::Invalid(v));
    }
    config.validate()?;
    Ok((0..config.trials as u64)
        .into_par_iter()
        .map(|i| evolve_with_rule(scenario, config, rule, i))
        .collect())
}

pub fn run_ensemble(scenario: &Scenario, config: &RunConfig) -> Result<EnsembleReport> {
    let trajectories = run_trajectories(scenario, config)?;
    Ok(summarize(scenario, config, &trajectories))
}

pub fn run_ensemble_with_rule(
    scenario: &Scenario,
    config: &RunConfig,
    rule: &StepRule,
) -> Result<EnsembleReport> {
    let trajectories = run_trajectories_with_rule(scenario, config, rule)?;
    Ok(summarize(scenario, config, &trajectories))
}

/// Aggregates trajectories (in trial order) into a report.
pub fn summarize(scenario: &Scenario, config: &RunConfig, trajectories: &[Trajectory]) -> EnsembleReport {
    let k = scenario.initial.len();
    let ok: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.failed()).collect();
    let failures = trajectories.len() - ok.len();
    let weighted = config.scheme.is_weighted();
    let weights: Vec<f64> = if weighted {
        weights_from_logs(&ok.iter().map(|t| t.log_weight).collect::<Vec<_>>())
    } else {
        vec![1.0; ok.len()]
    };
    let total_w: f64 = weights.iter().sum();
    let ess = if weighted { effective_sample_size(&weights) } else { ok.len() as f64 };
    let scale = if total_w > 0.0 { ok.len() as f64 / total_w } else { 0.0 };

    let mut outcome_counts = vec![0.0; k];
    let mut undecided = 0.0;
    let mut soft = vec![0.0; k];
    for (t, &w) in ok.iter().zip(&weights) {
        match t.winner {
            Some(win) => {
                outcome_counts[win] += w * scale;
                soft[win] += w;
            }
            None => {
                undecided += w * scale;
                for (s, p) in soft.iter_mut().zip(&t.final_probs) {
                    *s += w * p;
                }
            }
        }
    }
    let outcome_frequencies: Vec<f64> = if total_w > 0.0 {
        soft.iter().map(|s| s / total_w).collect()
    } else {
        vec![f64::NAN; k]
    };

    let sample_times = ok.first().map(|t| t.times.clone()).unwrap_or_default();
    let n_samples = sample_times.len();
    let mut mean_p = Vec::with_capacity(n_samples);
    let mut se_p = Vec::with_capacity(n_samples);
    let mut mean_sq_norm = Vec::with_capacity(n_samples);
    let mut se_sq_norm = Vec::with_capacity(n_samples);
    let mut column = vec![0.0; ok.len()];
    for i in 0..n_samples {
        let mut m = Vec::with_capacity(k);
        let mut s = Vec::with_capacity(k);
        for branch in 0..k {
            for (c, t) in column.iter_mut().zip(&ok) {
                *c = t.probs[i][branch];
            }
            let e = if weighted { weighted_mean_se(&column, &weights) } else { mean_se(&column) };
            m.push(e.mean);
            s.push(e.se);
        }
        mean_p.push(m);
        se_p.push(s);
        for (c, t) in column.iter_mut().zip(&ok) {
            *c = t.log_sq_norm[i].exp();
        }
        let e = mean_se(&column);
        mean_sq_norm.push(e.mean);
        se_sq_norm.push(e.se);
    }

    let (times, tw): (Vec<f64>, Vec<f64>) = ok
        .iter()
        .zip(&weights)
        .filter_map(|(t, &w)| t.t_level.map(|x| (x, w)))
        .unzip();
    let collapsed = times.len();
    let collapse_times = (collapsed > 0).then(|| {
        if weighted {
            CollapseQuantiles {
                q25: weighted_quantile(&times, &tw, 0.25),
                median: weighted_quantile(&times, &tw, 0.5),
                q75: weighted_quantile(&times, &tw, 0.75),
            }
        } else {
            CollapseQuantiles {
                q25: quantile(&times, 0.25),
                median: quantile(&times, 0.5),
                q75: quantile(&times, 0.75),
            }
        }
    });

    EnsembleReport {
        scenario: scenario.name.clone(),
        scheme: config.scheme,
        trials: trajectories.len(),
        master_seed: config.master_seed,
        config: config.clone(),
        initial_probabilities: scenario.initial.initial_probabilities(),
        weighted,
        outcome_counts,
        undecided,
        outcome_frequencies,
        effective_trials: ess,
        ess,
        ess_warning: weighted && ess < ESS_WARNING_FRACTION * trajectories.len() as f64,
        sample_times,
        mean_p,
        se_p,
        mean_sq_norm,
        se_sq_norm,
        collapse_level: config.collapse_level,
        collapsed,
        collapse_times,
        failures,
        healthy: (failures as f64) <= MAX_FAILURE_FRACTION * trajectories.len() as f64,
    }
}

/// Rows `trial,t,p_1..p_K,log_sq_norm` for every trajectory.
pub fn write_trajectories_csv<W: std::io::Write>(trajectories: &[Trajectory], mut w: W) -> std::io::Result<()> {
    let k = trajectories.first().map_or(0, Trajectory::branch_count);
    write!(w, "trial,t")?;
    for i in 1..=k {
        write!(w, ",p_{i}")?;
    }
    writeln!(w, ",log_sq_norm")?;
    for traj in trajectories {
        for ((t, p), n) in traj.times.iter().zip(&traj.probs).zip(&traj.log_sq_norm) {
            write!(w, "{},{t}", traj.trial_index)?;
            for x in p {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{n}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornTest {
    pub frequencies: Vec<f64>,
    pub expected: Vec<f64>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    pub effective_trials: f64,
    pub insufficient_statistics: bool,
    pub pass: bool,
}

/// Compares outcome frequencies with `expected` using binomial standard
/// errors under the hypothesis; passes when every `|z| ≤ 3`.
pub fn born_test(report: &EnsembleReport, expected: &[f64]) -> Result<BornTest> {
    if expected.len() != report.outcome_frequencies.len() {
        return Err(Error::arg(format!(
            "expected has {} entries, report has {} branches",
            expected.len(),
            report.outcome_frequencies.len()
        )));
    }
    let sum: f64 = expected.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || expected.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::arg(format!("expected probabilities must sum to 1, got {sum}")));
    }
    let n = report.effective_trials;
    if !(n > 0.0) || report.outcome_frequencies.iter().any(|f| !f.is_finite()) {
        return Err(Error::stats("degenerate report: no usable trials"));
    }
    let z: Vec<f64> = report
        .outcome_frequencies
        .iter()
        .zip(expected)
        .map(|(&f, &e)| proportion_z(f, e, n))
        .collect();
    let max_abs_z = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let insufficient = report.trials < MIN_TRIALS_FOR_STATISTICS;
    Ok(BornTest {
        frequencies: report.outcome_frequencies.clone(),
        expected: expected.to_vec(),
        z,
        max_abs_z,
        effective_trials: n,
        insufficient_statistics: insufficient,
        pass: !insufficient && max_abs_z <= BORN_Z_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub t: f64,
    /// `"sq_norm"` or `"p_<k>"` (1-based).
    pub quantity: String,
    pub value: f64,
    pub target: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTest {
    pub scheme: Scheme,
    pub checks: Vec<MartingaleCheck>,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Raw schemes: mean `‖Ψ(t)‖²` is 1 at every sample. Physical drift: mean
/// `p_k(t)` equals `|a_k|²` at every sample. Unitary: both. Tolerance 5 SE.
pub fn martingale_test(report: &EnsembleReport) -> MartingaleTest {
    let scheme = report.scheme;
    let norm = matches!(scheme, Scheme::RawWeighted | Scheme::CoefficientIndependent | Scheme::Unitary);
    let probs = matches!(scheme, Scheme::PhysicalDrift | Scheme::Unitary);
    let mut checks = Vec::new();
    for (i, &t) in report.sample_times.iter().enumerate() {
        if norm {
            let e = Estimate { mean: report.mean_sq_norm[i], se: report.se_sq_norm[i] };
            checks.push(MartingaleCheck {
                t,
                quantity: "sq_norm".into(),
                value: e.mean,
                target: 1.0,
                se: e.se,
                z: e.z_against(1.0),
            });
        }
        if probs {
            for (k, &target) in report.initial_probabilities.iter().enumerate() {
                let e = Estimate { mean: report.mean_p[i][k], se: report.se_p[i][k] };
                checks.push(MartingaleCheck {
                    t,
                    quantity: format!("p_{}", k + 1),
                    value: e.mean,
                    target,
                    se: e.se,
                    z: e.z_against(target),
                });
            }
        }
    }
    let max_abs_z = checks.iter().fold(0.0f64, |m, c| m.max(c.z.abs()));
    let pass = !checks.is_empty() && checks.iter().all(|c| c.z.abs() <= MARTINGALE_Z_LIMIT);
    MartingaleTest { scheme, checks, max_abs_z, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub branch: usize,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    /// ESS fraction of the weighted report (1 if neither is weighted).
    pub ess_fraction: f64,
    pub ess_ok: bool,
    pub agree: bool,
}

/// Compares the mean of `p_branch(t)` of two reports sample by sample,
/// using the combined standard error. Agreement means every `|z| ≤ 5`.
pub fn compare_schemes(a: &EnsembleReport, b: &EnsembleReport, branch: usize) -> Result<SchemeComparison> {
    if a.sample_times.len() != b.sample_times.len()
        || a.sample_times.iter().zip(&b.sample_times).any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(Error::arg("reports have different sample times"));
    }
    let z: Vec<f64> = (0..a.sample_times.len())
        .map(|i| {
            let se = (a.se_p[i][branch].powi(2) + b.se_p[i][branch].powi(2)).sqrt();
            z_score(a.mean_p[i][branch] - b.mean_p[i][branch], se)
        })
        .collect();
    let max_abs_z = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ess_fraction = [a, b]
        .iter()
        .filter(|r| r.weighted)
        .map(|r| r.ess / r.trials as f64)
        .fold(1.0f64, f64::min);
    Ok(SchemeComparison {
        branch,
        times: a.sample_times.clone(),
        z,
        max_abs_z,
        ess_fraction,
        ess_ok: ess_fraction >= ESS_WARNING_FRACTION,
        agree: max_abs_z <= MARTINGALE_Z_LIMIT,
    })
}

/// Collapse-time quartiles, refusing to answer on fewer than 100 collapsed trials.
pub fn collapse_time_summary(report: &EnsembleReport) -> Result<CollapseQuantiles> {
    match (report.collapsed, report.collapse_times) {
        (0, _) => Err(Error::stats("no trials collapsed")),
        (n, Some(q)) if n >= MIN_COLLAPSED_FOR_TIMING => Ok(q),
        (n, _) => Err(Error::stats(format!(
            "too few collapsed trials: {n} (need at least {MIN_COLLAPSED_FOR_TIMING})"
        ))),
    }
}

/// Predicted collapse time `collapse_level/(λ·ΔN²)`.
pub fn predicted_collapse_time(lambda: f64, delta_n: f64, collapse_level: f64) -> f64 {
    collapse_level / (lambda * delta_n * delta_n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub delta_n: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub predicted: f64,
    pub collapsed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<ScalingPoint>,
    /// Slope of ln(median t_level) against ln ΔN.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Medians never increase with ΔN.
    pub monotone: bool,
}

/// Median collapse time over a list of ΔN values, fitted on a log-log scale.
///
/// `config` is written for the smallest ΔN. For every other point `dt`,
/// `t_max` and the sample times are scaled by `(ΔN_min/ΔN)²`, which keeps
/// the number of steps per collapse time fixed. Each point runs on its own
/// seed derived from `config.master_seed`.
pub fn scaling_study(
    params: ModelParams,
    delta_ns: &[u64],
    a1_squared: f64,
    config: &RunConfig,
) -> Result<ScalingFit> {
    let mut distinct = delta_ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::arg("need ≥ 3 distinct values of ΔN"));
    }
    let reference = distinct[0];
    let points = distinct
        .iter()
        .enumerate()
        .map(|(i, &dn)| timing_point(params, dn, a1_squared, config, reference, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| (p.delta_n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median.ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::stats("scaling fit is singular"))?;
    let monotone = points.windows(2).all(|w| w[1].median <= w[0].median);
    Ok(ScalingFit { points, slope: fit.slope, intercept: fit.intercept, residual: fit.residual, monotone })
}

/// Collapse-time quartiles of the cat scenario with occupation difference
/// `delta_n`. `config` is written for `reference_delta_n`; `dt`, `t_max` and
/// the sample times are scaled by `(reference/ΔN)²` and the seed is
/// `derive_seed(config.master_seed, index)`.
pub fn timing_point(
    params: ModelParams,
    delta_n: u64,
    a1_squared: f64,
    config: &RunConfig,
    reference_delta_n: u64,
    index: u64,
) -> Result<ScalingPoint> {
    let scenario = two_branch_delta_scenario(params, delta_n, a1_squared)?;
    let factor = (reference_delta_n.max(1) as f64 / delta_n.max(1) as f64).powi(2);
    let mut cfg = config.clone();
    cfg.dt *= factor;
    cfg.t_max *= factor;
    cfg.sample_times.iter_mut().for_each(|t| *t *= factor);
    cfg.master_seed = derive_seed(config.master_seed, index);
    let report = run_ensemble(&scenario, &cfg)?;
    let q = collapse_time_summary(&report).map_err(|e| Error::stats(format!("ΔN = {delta_n}: {e}")))?;
    Ok(ScalingPoint {
        delta_n,
        median: q.median,
        q25: q.q25,
        q75: q.q75,
        predicted: predicted_collapse_time(params.lambda, delta_n as f64, config.collapse_level),
        collapsed: report.collapsed,
    })
}

/// Least-squares slope of `ln|α_loser| − ln|α_winner|` against time, over
/// the samples at or after the decision time. The loser at each sample is
/// the largest branch other than `winner`.
pub fn decay_slope(trajectory: &Trajectory, winner: usize) -> Result<f64> {
    if winner >= trajectory.branch_count() || trajectory.branch_count() < 2 {
        return Err(Error::arg("winner index out of range or no losing branch"));
    }
    let start = trajectory.t_decision.unwrap_or(0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = trajectory
        .times
        .iter()
        .zip(&trajectory.log_magnitudes)
        .filter(|(&t, _)| t >= start)
        .map(|(&t, mags)| {
            let loser = mags
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != winner)
                .map(|(_, &m)| m)
                .fold(f64::NEG_INFINITY, f64::max);
            (t, loser - mags[winner])
        })
        .unzip();
    if xs.len() < 3 {
        return Err(Error::stats(format!(
            "decay window too short: {} samples after the decision",
            xs.len()
        )));
    }
    fit_line(&xs, &ys)
        .map(|f| f.slope)
        .ok_or_else(|| Error::stats("decay window too short: zero time span"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub mean: f64,
    pub se: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Mean decay slope over all trajectories with a decided winner and a
/// usable post-decision window.
pub fn mean_decay_slope(trajectories: &[Trajectory]) -> Result<DecaySummary> {
    let mut slopes = Vec::new();
    let mut skipped = 0;
    for t in trajectories.iter().filter(|t| !t.failed()) {
        match t.winner.map(|w| decay_slope(t, w)) {
            Some(Ok(s)) => slopes.push(s),
            _ => skipped += 1,
        }
    }
    if slopes.is_empty() {
        return Err(Error::stats("no trajectory has a usable decay window"));
    }
    let e = mean_se(&slopes);
    Ok(DecaySummary { mean: e.mean, se: e.se, used: slopes.len(), skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookVerdict {
    /// Collapse completes before an observer could notice.
    Adequate,
    UnacceptablyLong,
    NeverCollapses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookEntry {
    pub name: String,
    pub delta_n: u64,
    /// `3/(λ·ΔN²)` seconds; absent when ΔN = 0.
    pub t_collapse: Option<f64>,
    /// True when `t_collapse` is strictly below the 10⁻³ s perception threshold.
    pub detectable: bool,
    pub verdict: HookVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HookInput {
    pub name: String,
    pub delta_n: u64,
}

/// Illustrative particle-number changes for common read-out devices. Only
/// the pointer figure reflects a physical estimate (a filled versus empty
/// 10⁻¹⁵ cm³ cube); the others stand in for "virtually no change".
pub fn default_hooks() -> Vec<HookInput> {
    [("pointer", 30_000_000_000u64), ("lcd-like", 1_000), ("film-grain", 100), ("eye-brain", 10)]
        .into_iter()
        .map(|(n, d)| HookInput { name: n.into(), delta_n: d })
        .collect()
}

/// Collapse time of each hook at rate `params.lambda`.
pub fn hook_catalog(params: &ModelParams, entries: &[HookInput]) -> Vec<HookEntry> {
    entries
        .iter()
        .map(|e| {
            if e.delta_n == 0 {
                return HookEntry {
                    name: e.name.clone(),
                    delta_n: 0,
                    t_collapse: None,
                    detectable: false,
                    verdict: HookVerdict::NeverCollapses,
                };
            }
            let t = predicted_collapse_time(params.lambda, e.delta_n as f64, DEFAULT_COLLAPSE_LEVEL);
            let detectable = t < PERCEPTION_THRESHOLD_SECONDS;
            HookEntry {
                name: e.name.clone(),
                delta_n: e.delta_n,
                t_collapse: Some(t),
                detectable,
                verdict: if detectable { HookVerdict::Adequate } else { HookVerdict::UnacceptablyLong },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::scenario_from_probabilities;

    fn cat(delta_n: u64, a1: f64) -> Scenario {
        two_branch_delta_scenario(ModelParams::unit(), delta_n, a1).unwrap()
    }

    #[test]
    fn single_branch_report() {
        let s = scenario_from_probabilities("one", ModelParams::unit(), &[1.0], vec![vec![3]]).unwrap();
        let cfg = RunConfig::new(0.01, 1.0, 200, Scheme::PhysicalDrift, 1);
        let r = run_ensemble(&s, &cfg).unwrap();
        assert_eq!(r.outcome_frequencies, vec![1.0]);
        assert_eq!(r.collapsed, 0);
        assert!(r.collapse_times.is_none());
        assert!(collapse_time_summary(&r).is_err());
    }

    #[test]
    fn frequencies_sum_to_one_and_ess_bounded() {
        for scheme in [Scheme::RawWeighted, Scheme::PhysicalDrift, Scheme::CoefficientIndependent] {
            let cfg = RunConfig::new(0.01, 0.5, 300, scheme, 2).with_uniform_samples(5);
            let r = run_ensemble(&cat(2, 0.6), &cfg).unwrap();
            let sum: f64 = r.outcome_frequencies.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "{scheme}: {sum}");
            assert!(r.ess <= r.trials as f64 + 1e-9);
            assert!(r.healthy);
            let counted: f64 = r.outcome_counts.iter().sum::<f64>() + r.undecided;
            assert!((counted - r.trials as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn unitary_martingale_is_trivial() {
        let cfg = RunConfig::new(0.05, 1.0, 100, Scheme::Unitary, 3).with_uniform_samples(4);
        let r = run_ensemble(&cat(4, 2.0 / 3.0), &cfg).unwrap();
        let m = martingale_test(&r);
        assert!(m.pass);
        assert_eq!(m.max_abs_z, 0.0);
    }

    #[test]
    fn raw_martingale_holds_and_mis_scaled_noise_fails() {
        let s = cat(1, 2.0 / 3.0);
        let cfg = RunConfig::new(0.01, 1.0, 4000, Scheme::RawWeighted, 4).with_uniform_samples(4);
        let good = martingale_test(&run_ensemble(&s, &cfg).unwrap());
        assert!(good.pass, "max z {}", good.max_abs_z);

        let rule = StepRule { noise_variance_factor: 2.0, ..StepRule::for_scheme(Scheme::RawWeighted) };
        let bad = martingale_test(&run_ensemble_with_rule(&s, &cfg, &rule).unwrap());
        assert!(!bad.pass, "max z {}", bad.max_abs_z);
    }

    #[test]
    fn born_test_symmetric_case_passes() {
        let cfg = RunConfig::new(2e-3, 3.0, 2000, Scheme::PhysicalDrift, 5);
        let r = run_ensemble(&cat(4, 0.5), &cfg).unwrap();
        let b = born_test(&r, &[0.5, 0.5]).unwrap();
        assert!(b.pass, "{b:?}");
    }

    #[test]
    fn born_test_argument_errors() {
        let cfg = RunConfig::new(0.01, 0.1, 10, Scheme::PhysicalDrift, 5);
        let r = run_ensemble(&cat(1, 0.5), &cfg).unwrap();
        assert!(born_test(&r, &[0.5, 0.4]).is_err());
        assert!(born_test(&r, &[1.0]).is_err());
        let b = born_test(&r, &[0.5, 0.5]).unwrap();
        assert!(b.insufficient_statistics && !b.pass);
        let mut empty = r.clone();
        empty.effective_trials = 0.0;
        assert!(born_test(&empty, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn coefficient_independent_ignores_amplitudes() {
        let cfg = RunConfig::new(5e-3, 5.0, 500, Scheme::CoefficientIndependent, 6);
        let a = run_ensemble(&cat(4, 0.7), &cfg).unwrap();
        let b = run_ensemble(&cat(4, 0.3), &cfg.clone().with_seed(60)).unwrap();
        for k in 0..2 {
            let z = crate::stats::two_proportion_z(
                a.outcome_frequencies[k],
                a.effective_trials,
                b.outcome_frequencies[k],
                b.effective_trials,
            );
            assert!(z.abs() <= 3.0, "branch {k}: z = {z}");
        }
        assert!(born_test(&a, &[0.7, 0.3]).unwrap().max_abs_z > 5.0);
    }

    #[test]
    fn winner_freeze() {
        // λ·ΔN²·t_max = 16 · 1.5 = 24
        let cfg = RunConfig::new(1e-3, 1.5, 1000, Scheme::PhysicalDrift, 7);
        let t = run_trajectories(&cat(4, 0.6), &cfg).unwrap();
        let decided: Vec<_> = t.iter().filter(|t| t.winner.is_some()).collect();
        let held = decided.iter().filter(|t| t.winner_held).count();
        assert!(held as f64 >= 0.99 * decided.len() as f64, "{held}/{}", decided.len());
    }

    #[test]
    fn collapse_summary_errors() {
        let cfg = RunConfig::new(0.01, 1.0, 150, Scheme::PhysicalDrift, 8);
        let r = run_ensemble(&cat(0, 0.5), &cfg).unwrap();
        assert_eq!(collapse_time_summary(&r).unwrap_err().to_string(), "no trials collapsed");
        let cfg = RunConfig::new(0.01, 1.0, 50, Scheme::PhysicalDrift, 8);
        let r = run_ensemble(&cat(4, 0.5), &cfg).unwrap();
        assert!(collapse_time_summary(&r).unwrap_err().to_string().contains("too few collapsed trials: 50"));
    }

    #[test]
    fn timing_for_unit_hook() {
        let cfg = RunConfig::new(5e-3, 30.0, 600, Scheme::PhysicalDrift, 9);
        let r = run_ensemble(&cat(1, 2.0 / 3.0), &cfg).unwrap();
        let q = collapse_time_summary(&r).unwrap();
        assert!(q.median > 1.5 && q.median < 6.0, "{q:?}");
        assert!(q.q25 <= q.median && q.median <= q.q75);
    }

    #[test]
    fn timing_for_pointer_hook() {
        // λ = 1e-16 /s, ΔN = 3e10: predicted 3/(λΔN²) = 3.33e-5 s.
        let s = two_branch_delta_scenario(ModelParams::standard(), 30_000_000_000, 0.5).unwrap();
        let predicted = predicted_collapse_time(1e-16, 3e10, 3.0);
        let cfg = RunConfig::new(predicted / 200.0, predicted * 8.0, 400, Scheme::PhysicalDrift, 10);
        let q = collapse_time_summary(&run_ensemble(&s, &cfg).unwrap()).unwrap();
        assert!(q.median > predicted / 2.0 && q.median < predicted * 2.0, "{q:?}");
    }

    #[test]
    fn scaling_needs_three_values() {
        let cfg = RunConfig::new(0.01, 1.0, 10, Scheme::PhysicalDrift, 1);
        let err = scaling_study(ModelParams::unit(), &[2, 2, 4], 0.5, &cfg).unwrap_err();
        assert_eq!(err.to_string(), "need ≥ 3 distinct values of ΔN");
    }

    #[test]
    fn scaling_slope_small_run() {
        let cfg = RunConfig::new(0.01, 20.0, 300, Scheme::PhysicalDrift, 11);
        let fit = scaling_study(ModelParams::unit(), &[1, 2, 4], 0.5, &cfg).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.3, "{fit:?}");
        assert!(fit.monotone);
        for p in &fit.points {
            assert!(p.median > p.predicted / 2.0 && p.median < 2.0 * p.predicted, "{p:?}");
        }
    }

    #[test]
    fn decay_slope_cases() {
        let cfg = RunConfig::new(1e-3, 2.0, 1, Scheme::Unitary, 1).with_uniform_samples(10);
        let traj = crate::engine::evolve(&cat(4, 0.6), &cfg, 0);
        assert_eq!(decay_slope(&traj, 0).unwrap(), 0.0);

        let short = RunConfig::new(1e-3, 2.0, 1, Scheme::PhysicalDrift, 1);
        let traj = crate::engine::evolve(&cat(4, 0.6), &short, 0);
        let w = traj.winner.unwrap();
        assert!(decay_slope(&traj, w).unwrap_err().to_string().contains("window too short"));

        let dense = short.with_uniform_samples(100);
        let traj = crate::engine::evolve(&cat(4, 0.6), &dense, 0);
        let slope = decay_slope(&traj, traj.winner.unwrap()).unwrap();
        assert!(slope < -8.0 && slope > -24.0, "{slope}");
    }

    #[test]
    fn hook_catalog_examples() {
        let params = ModelParams::standard();
        let hooks = hook_catalog(
            &params,
            &[
                HookInput { name: "pointer".into(), delta_n: 30_000_000_000 },
                HookInput { name: "lcd-like".into(), delta_n: 1000 },
                HookInput { name: "none".into(), delta_n: 0 },
            ],
        );
        let t = hooks[0].t_collapse.unwrap();
        assert!((t - 3.0 / (1e-16 * 9e20)).abs() < 1e-18);
        assert!((t - 3.333e-5).abs() < 1e-8);
        assert!(hooks[0].detectable);
        assert_eq!(hooks[0].verdict, HookVerdict::Adequate);
        assert!((hooks[1].t_collapse.unwrap() - 3e10).abs() < 1.0);
        assert_eq!(hooks[1].verdict, HookVerdict::UnacceptablyLong);
        assert_eq!(hooks[2].verdict, HookVerdict::NeverCollapses);

        // λ chosen so that ΔN = 1 gives exactly 3/λ = 1e-3 s.
        let boundary = ModelParams { lambda: 3000.0, ..ModelParams::unit() };
        let h = hook_catalog(&boundary, &[HookInput { name: "edge".into(), delta_n: 1 }]);
        assert_eq!(h[0].t_collapse, Some(1e-3));
        assert!(!h[0].detectable);
    }

    #[test]
    fn reports_are_independent_of_thread_count() {
        let cfg = RunConfig::new(0.01, 1.0, 64, Scheme::RawWeighted, 12).with_uniform_samples(3);
        let s = cat(2, 0.4);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_ensemble(&s, &cfg).unwrap());
        let b = four.install(|| run_ensemble(&s, &cfg).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let cfg = RunConfig::new(-1.0, 1.0, 10, Scheme::PhysicalDrift, 1);
        assert!(matches!(run_ensemble(&cat(1, 0.5), &cfg), Err(Error::Invalid(_))));
        let mut s = cat(1, 0.5);
        s.initial.branches[0].occupation = vec![1, 2].into();
        let cfg = RunConfig::new(0.1, 1.0, 10, Scheme::PhysicalDrift, 1);
        assert!(run_ensemble(&s, &cfg).is_err());
    }

    #[test]
    fn trajectory_csv_has_all_rows() {
        let cfg = RunConfig::new(0.1, 0.2, 3, Scheme::Unitary, 1).with_uniform_samples(2);
        let t = run_trajectories(&cat(1, 0.5), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectories_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        assert!(text.starts_with("trial,t,p_1,p_2,log_sq_norm\n0,0,0.5"));
    }
}
