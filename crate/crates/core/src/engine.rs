//! Single-trajectory evolution of a [`SuperposedState`] under the collapse
//! equation with no Hamiltonian term.
//!
//! With `H = 0` each branch is an eigenstate of every cell number operator,
//! so for a given noise realization the equation integrates exactly:
//!
//! ```text
//! ln|α_k(t)| = ln|a_k| + Σ_n N_nk·B_n(t) − λ·t·Σ_n N_nk²
//! ```
//!
//! The step update is the same expression applied to increments, so stepping
//! introduces no discretization error of its own; only the drift of the
//! physical-drift scheme is frozen over a step.
//!
//! Raw increments have variance `λ·dt`. That is the scale for which
//! `E[‖Ψ(t)‖²] = 1` under the exact solution, i.e. the squared norm is a
//! martingale and can serve as a probability weight.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{log_sum_exp, softmax_into, top_two};
use crate::model::{RunConfig, Scenario, Scheme, SuperposedState};
use crate::rng::trial_rng;

/// Brownian increments ΔB_n for one step, one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseIncrement {
    pub db: Vec<f64>,
}

/// Which terms of the update are active. Derived from a [`Scheme`];
/// constructing one by hand is how test fixtures break a scheme on purpose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub noise: bool,
    /// Multiplies the raw increment variance `λ·dt`.
    pub noise_variance_factor: f64,
    pub damping: bool,
    pub drift: bool,
}

impl StepRule {
    pub fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::RawWeighted | Scheme::CoefficientIndependent => {
                StepRule { noise: true, noise_variance_factor: 1.0, damping: true, drift: false }
            }
            Scheme::PhysicalDrift => {
                StepRule { noise: true, noise_variance_factor: 1.0, damping: true, drift: true }
            }
            Scheme::Unitary => {
                StepRule { noise: false, noise_variance_factor: 1.0, damping: false, drift: false }
            }
        }
    }
}

/// Draws `cell_count` independent N(0, λ·dt) increments.
pub fn sample_raw_increments<R: Rng + ?Sized>(
    rng: &mut R,
    dt: f64,
    cell_count: usize,
    lambda: f64,
) -> Result<NoiseIncrement> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::arg("lambda must be positive"));
    }
    let sigma = (lambda * dt).sqrt();
    let db = (0..cell_count)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(NoiseIncrement { db })
}

/// Occupations as a dense `K × N` matrix of floats plus `Σ_n N_nk²` per branch.
#[derive(Debug, Clone)]
struct Kernel {
    branches: usize,
    cells: usize,
    occ: Vec<f64>,
    sq: Vec<f64>,
}

impl Kernel {
    fn new(state: &SuperposedState) -> Self {
        let cells = state.cell_count;
        let mut occ = Vec::with_capacity(state.len() * cells);
        let mut sq = Vec::with_capacity(state.len());
        for b in &state.branches {
            let mut s = 0.0;
            for &c in b.occupation.counts() {
                let c = c as f64;
                occ.push(c);
                s += c * c;
            }
            sq.push(s);
        }
        Kernel { branches: state.len(), cells, occ, sq }
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.occ[k * self.cells..(k + 1) * self.cells]
    }

    /// `log_mag_k += Σ_n N_nk·db_n − λ·dt·Σ_n N_nk²`.
    /// Returns the first branch that became non-finite.
    fn advance(&self, log_mag: &mut [f64], db: Option<&[f64]>, damping: f64) -> Option<usize> {
        let mut bad = None;
        for (k, lm) in log_mag.iter_mut().enumerate() {
            let mut delta = 0.0;
            if let Some(db) = db {
                for (&n, &b) in self.row(k).iter().zip(db) {
                    delta += n * b;
                }
            }
            *lm += delta - damping * self.sq[k];
            if bad.is_none() && !lm.is_finite() {
                bad = Some(k);
            }
        }
        bad
    }

    /// Adds `scale · Σ_k p_k N_nk` to each cell.
    fn add_mean_occupation(&self, probs: &[f64], scale: f64, out: &mut [f64]) {
        for (k, &p) in probs.iter().enumerate().take(self.branches) {
            let w = scale * p;
            if w == 0.0 {
                continue;
            }
            for (o, &n) in out.iter_mut().zip(self.row(k)) {
                *o += w * n;
            }
        }
    }
}

/// Applies one exact step of the collapse update to every branch.
pub fn apply_step(
    state: &SuperposedState,
    increment: &NoiseIncrement,
    dt: f64,
    lambda: f64,
) -> Result<SuperposedState> {
    if increment.db.len() != state.cell_count {
        return Err(Error::arg(format!(
            "increment has {} cells, state has {}",
            increment.db.len(),
            state.cell_count
        )));
    }
    if increment.db.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("increment entries must be finite"));
    }
    let kernel = Kernel::new(state);
    let mut log_mag = state.log_magnitudes();
    if let Some(branch) = kernel.advance(&mut log_mag, Some(&increment.db), lambda * dt) {
        return Err(Error::AmplitudeOverflow { branch });
    }
    let mut next = state.clone();
    for (b, lm) in next.branches.iter_mut().zip(log_mag) {
        b.log_magnitude = lm;
    }
    Ok(next)
}

/// Branch log-magnitudes at time `t` for accumulated Brownian values `b_total`.
pub fn closed_form(scenario: &Scenario, b_total: &[f64], t: f64) -> Result<Vec<f64>> {
    let state = &scenario.initial;
    if b_total.len() != state.cell_count {
        return Err(Error::arg(format!(
            "b_total has {} cells, state has {}",
            b_total.len(),
            state.cell_count
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::arg("t must be non-negative"));
    }
    let kernel = Kernel::new(state);
    Ok(state
        .branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let linear: f64 = kernel.row(k).iter().zip(b_total).map(|(n, x)| n * x).sum();
            b.log_magnitude + linear - scenario.params.lambda * t * kernel.sq[k]
        })
        .collect())
}

/// `ln Σ_k |α_k|²`.
pub fn squared_norm(state: &SuperposedState) -> f64 {
    let twice: Vec<f64> = state.branches.iter().map(|b| 2.0 * b.log_magnitude).collect();
    log_sum_exp(&twice)
}

/// `p_k = |α_k|² / Σ_j |α_j|²`, computed in log space.
pub fn branch_probabilities(state: &SuperposedState) -> Vec<f64> {
    let twice: Vec<f64> = state.branches.iter().map(|b| 2.0 * b.log_magnitude).collect();
    let mut out = vec![0.0; twice.len()];
    softmax_into(&twice, &mut out);
    out
}

/// Drift added to raw increments so that trajectories are distributed by
/// the norm-weighted measure: `2·λ·⟨η_n⟩·dt` with `⟨η_n⟩ = Σ_k p_k N_nk`.
pub fn physical_drift(state: &SuperposedState, dt: f64, lambda: f64) -> Result<Vec<f64>> {
    let probs = branch_probabilities(state);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::StateDegenerate);
    }
    let kernel = Kernel::new(state);
    let mut drift = vec![0.0; state.cell_count];
    kernel.add_mean_occupation(&probs, 2.0 * lambda * dt, &mut drift);
    Ok(drift)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub time: f64,
    pub branch: usize,
}

/// One evolved trajectory, sampled at the configured times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trial_index: u64,
    pub times: Vec<f64>,
    /// Branch probabilities `p_k(t)` per sample.
    pub probs: Vec<Vec<f64>>,
    /// `ln Σ_k |α_k|²` per sample.
    pub log_sq_norm: Vec<f64>,
    /// `ln|α_k|` per sample; ratios stay finite after probabilities underflow.
    pub log_magnitudes: Vec<Vec<f64>>,
    /// Branch that first reached `decision_level`.
    pub winner: Option<usize>,
    pub t_decision: Option<f64>,
    /// First time the best loser's log amplitude ratio to the leader fell
    /// to `−collapse_level`.
    pub t_level: Option<f64>,
    /// False if the leading branch ever changed after the decision.
    pub winner_held: bool,
    /// Probabilities at the last completed step.
    pub final_probs: Vec<f64>,
    /// Final `ln‖Ψ‖²` for the raw schemes, 0 otherwise.
    pub log_weight: f64,
    pub failure: Option<Failure>,
}

/// Summary line that follows a trajectory's CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrailer {
    pub winner: Option<usize>,
    pub t_decision: Option<f64>,
    pub t_level: Option<f64>,
    pub log_weight: f64,
    pub failure: Option<Failure>,
}

impl Trajectory {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn branch_count(&self) -> usize {
        self.final_probs.len()
    }

    /// Rows `t, p_1..p_K, log_sq_norm` with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.branch_count();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=k).map(|i| format!("p_{i}")))
            .chain(std::iter::once("log_sq_norm".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for ((t, p), n) in self.times.iter().zip(&self.probs).zip(&self.log_sq_norm) {
            write!(w, "{t}")?;
            for x in p {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{n}")?;
        }
        Ok(())
    }

    pub fn trailer(&self) -> TrajectoryTrailer {
        TrajectoryTrailer {
            winner: self.winner,
            t_decision: self.t_decision,
            t_level: self.t_level,
            log_weight: self.log_weight,
            failure: self.failure,
        }
    }
}

/// Evolves trial `trial_index` of `scenario` under `config.scheme`.
///
/// Deterministic in `(config.master_seed, trial_index)`. Inputs are assumed
/// valid; [`crate::ensemble::run_ensemble`] validates before calling.
pub fn evolve(scenario: &Scenario, config: &RunConfig, trial_index: u64) -> Trajectory {
    evolve_with_rule(scenario, config, &StepRule::for_scheme(config.scheme), trial_index)
}

pub fn evolve_with_rule(
    scenario: &Scenario,
    config: &RunConfig,
    rule: &StepRule,
    trial_index: u64,
) -> Trajectory {
    let state = &scenario.initial;
    let lambda = scenario.params.lambda;
    let dt = config.dt;
    let k = state.len();
    let kernel = Kernel::new(state);
    let steps = config.step_count();

    let mut order: Vec<(usize, usize)> =
        config.sample_steps().into_iter().enumerate().map(|(slot, s)| (s, slot)).collect();
    order.sort_unstable();
    let n_samples = order.len();
    let mut times = vec![0.0; n_samples];
    let mut probs_out = vec![Vec::new(); n_samples];
    let mut norm_out = vec![0.0; n_samples];
    let mut mags_out = vec![Vec::new(); n_samples];
    let mut next_sample = 0;

    let degenerate = k >= 2 && state.is_occupation_degenerate();
    let mut rng = trial_rng(config.master_seed, trial_index);
    let sigma = (lambda * dt * rule.noise_variance_factor).sqrt();
    let damping = if rule.damping { lambda * dt } else { 0.0 };

    let mut log_mag = state.log_magnitudes();
    let mut twice = vec![0.0; k];
    let mut probs = vec![0.0; k];
    let mut db = vec![0.0; state.cell_count];

    let refresh = |log_mag: &[f64], twice: &mut [f64], probs: &mut [f64]| -> f64 {
        for (t2, &l) in twice.iter_mut().zip(log_mag) {
            *t2 = 2.0 * l;
        }
        softmax_into(twice, probs)
    };
    let mut lse = refresh(&log_mag, &mut twice, &mut probs);

    let mut winner = None;
    let mut t_decision = None;
    let mut t_level = None;
    let mut winner_held = true;
    let mut failure = None;

    for i in 0..=steps {
        let t = i as f64 * dt;
        let (leader, first, second) = top_two(&log_mag);
        if !degenerate {
            if winner.is_none() && probs[leader] >= config.decision_level {
                winner = Some(leader);
                t_decision = Some(t);
            }
            if k >= 2 && t_level.is_none() && first - second >= config.collapse_level {
                t_level = Some(t);
            }
        }
        if let Some(w) = winner {
            if w != leader && log_mag[w] < first {
                winner_held = false;
            }
        }
        while next_sample < n_samples && order[next_sample].0 == i {
            let slot = order[next_sample].1;
            times[slot] = t;
            probs_out[slot] = probs.clone();
            norm_out[slot] = lse;
            mags_out[slot] = log_mag.clone();
            next_sample += 1;
        }
        if i == steps {
            break;
        }

        if rule.noise {
            for x in db.iter_mut() {
                *x = sigma * rng.sample::<f64, _>(StandardNormal);
            }
        } else {
            db.iter_mut().for_each(|x| *x = 0.0);
        }
        if rule.drift {
            kernel.add_mean_occupation(&probs, 2.0 * lambda * dt, &mut db);
        }
        let active = rule.noise || rule.drift;
        if let Some(branch) = kernel.advance(&mut log_mag, active.then_some(&db[..]), damping) {
            failure = Some(Failure { time: (i + 1) as f64 * dt, branch });
            break;
        }
        lse = refresh(&log_mag, &mut twice, &mut probs);
    }

    let (times, probs_out, norm_out, mags_out) = if failure.is_some() {
        keep_recorded(&order, next_sample, times, probs_out, norm_out, mags_out)
    } else {
        (times, probs_out, norm_out, mags_out)
    };

    let log_weight = match config.scheme {
        Scheme::RawWeighted | Scheme::CoefficientIndependent => lse,
        _ => 0.0,
    };
    Trajectory {
        trial_index,
        times,
        probs: probs_out,
        log_sq_norm: norm_out,
        log_magnitudes: mags_out,
        winner,
        t_decision,
        t_level,
        winner_held,
        final_probs: probs,
        log_weight,
        failure,
    }
}

/// Keeps only the samples recorded before a failure, in time order.
#[allow(clippy::type_complexity)]
fn keep_recorded(
    order: &[(usize, usize)],
    recorded: usize,
    times: Vec<f64>,
    probs: Vec<Vec<f64>>,
    norms: Vec<f64>,
    mags: Vec<Vec<f64>>,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let slots: Vec<usize> = order[..recorded].iter().map(|&(_, slot)| slot).collect();
    (
        slots.iter().map(|&s| times[s]).collect(),
        slots.iter().map(|&s| probs[s].clone()).collect(),
        slots.iter().map(|&s| norms[s]).collect(),
        slots.iter().map(|&s| mags[s].clone()).collect(),
    )
}
