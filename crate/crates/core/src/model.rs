//! Domain types: model parameters, superposed number-eigenstate branches,
//! scenarios and run configuration.
//!
//! Amplitudes are stored as `(log_magnitude, phase)` pairs. Occupation
//! counts reach 3×10¹⁰ per cell in realistic scenarios, and the collapse
//! factor `exp(N·B − λN²t)` overflows any linear representation almost
//! immediately; in log space the update is a sum.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;

/// Counts above this are not exactly representable once converted to `f64`.
pub const MAX_EXACT_COUNT: u64 = 1 << 53;

/// Tolerance on `Σ|a_k|² = 1` for freshly constructed states.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Default first-passage threshold on the log amplitude ratio (`λt(ΔN)² ≅ 3`).
pub const DEFAULT_COLLAPSE_LEVEL: f64 = 3.0;

/// Default probability at which a branch is declared the winner.
pub const DEFAULT_DECISION_LEVEL: f64 = 1.0 - 1e-6;

/// A single invariant violation. `validate` returns every one it finds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositive { field: String },
    Negative { field: String },
    NonFinite { field: String },
    NoBranches,
    OccupationLengthMismatch { branch: usize, expected: usize, found: usize },
    CountTooLarge { branch: usize, cell: usize, count: u64 },
    NonFiniteLogMagnitude { branch: usize },
    NonFinitePhase { branch: usize },
    InitialNormNotUnit { squared_norm: f64 },
    OutOfRange { field: String, value: f64, range: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive { field } => write!(f, "{field} must be positive"),
            Violation::Negative { field } => write!(f, "{field} must be non-negative"),
            Violation::NonFinite { field } => write!(f, "{field} must be finite"),
            Violation::NoBranches => write!(f, "state has no branches"),
            Violation::OccupationLengthMismatch { branch, expected, found } => write!(
                f,
                "occupation length mismatch: branch {branch} has {found} cells, state has {expected}"
            ),
            Violation::CountTooLarge { branch, cell, count } => write!(
                f,
                "occupation count {count} in branch {branch}, cell {cell} exceeds 2^53"
            ),
            Violation::NonFiniteLogMagnitude { branch } => {
                write!(f, "branch {branch} has a non-finite log magnitude (underflowed)")
            }
            Violation::NonFinitePhase { branch } => write!(f, "branch {branch} has a non-finite phase"),
            Violation::InitialNormNotUnit { squared_norm } => {
                write!(f, "initial norm ≠ 1 (Σ|a|² = {squared_norm})")
            }
            Violation::OutOfRange { field, value, range } => {
                write!(f, "{field} = {value} is outside {range}")
            }
        }
    }
}

fn positive(field: &str, value: f64, out: &mut Vec<Violation>) {
    if !value.is_finite() {
        out.push(Violation::NonFinite { field: field.into() });
    } else if value <= 0.0 {
        out.push(Violation::NonPositive { field: field.into() });
    }
}

/// Collapse rate and cell geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Collapse rate in 1/s.
    pub lambda: f64,
    /// Cell volume in cm³.
    pub cell_volume: f64,
    /// Particles per cm³.
    pub density: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, cell_volume: f64, density: f64) -> Result<Self> {
        let params = ModelParams { lambda, cell_volume, density };
        match params.violations().into_iter().next() {
            None => Ok(params),
            Some(v) => Err(Error::arg(v.to_string())),
        }
    }

    /// Dimensionless mode: λ = 1, unit cells, one particle per cell.
    pub fn unit() -> Self {
        ModelParams { lambda: 1.0, cell_volume: 1.0, density: 1.0 }
    }

    /// λ = 10⁻¹⁶ /s on 10⁻¹⁵ cm³ cells. The density 3×10²⁵ /cm³ is
    /// back-derived from a per-cell count of 3×10¹⁰ for ordinary matter.
    pub fn standard() -> Self {
        ModelParams { lambda: 1e-16, cell_volume: 1e-15, density: 3e25 }
    }

    /// Expected particle count in one fully occupied cell.
    pub fn particles_per_cell(&self) -> f64 {
        self.density * self.cell_volume
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        positive("lambda", self.lambda, &mut out);
        positive("cell_volume", self.cell_volume, &mut out);
        if !self.density.is_finite() {
            out.push(Violation::NonFinite { field: "density".into() });
        } else if self.density < 0.0 {
            out.push(Violation::Negative { field: "density".into() });
        }
        out
    }
}

/// Validated constructor for [`ModelParams`].
pub fn make_params(lambda: f64, cell_volume: f64, density: f64) -> Result<ModelParams> {
    ModelParams::new(lambda, cell_volume, density)
}

/// Particle counts per cell for one branch (eigenvalues of the cell number operators).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationVector(pub Vec<u64>);

impl OccupationVector {
    pub fn new(counts: Vec<u64>) -> Self {
        OccupationVector(counts)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }
}

impl From<Vec<u64>> for OccupationVector {
    fn from(v: Vec<u64>) -> Self {
        OccupationVector(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Natural log of |α_k|.
    pub log_magnitude: f64,
    /// Radians. Constant under collapse-only evolution.
    pub phase: f64,
    pub occupation: OccupationVector,
}

impl Branch {
    /// Branch with `|a|² = probability` and zero phase.
    pub fn with_probability(probability: f64, occupation: impl Into<OccupationVector>) -> Self {
        Branch { log_magnitude: 0.5 * probability.ln(), phase: 0.0, occupation: occupation.into() }
    }
}

/// `Σ_k α_k |k⟩` with every `|k⟩` an eigenstate of all cell number operators.
///
/// The squared norm is 1 at construction only; collapse evolution changes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperposedState {
    pub branches: Vec<Branch>,
    pub cell_count: usize,
}

impl SuperposedState {
    /// Builds a state, rejecting it with every violation if any invariant fails.
    pub fn new(branches: Vec<Branch>, cell_count: usize) -> Result<Self> {
        let state = SuperposedState { branches, cell_count };
        let v = state.violations();
        if v.is_empty() {
            Ok(state)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn log_magnitudes(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.log_magnitude).collect()
    }

    /// `|α_k|²` for each branch; may underflow to zero for tiny branches.
    pub fn initial_probabilities(&self) -> Vec<f64> {
        let twice: Vec<f64> = self.branches.iter().map(|b| 2.0 * b.log_magnitude).collect();
        let total = log_sum_exp(&twice);
        twice.iter().map(|x| (x - total).exp()).collect()
    }

    /// True when every branch has the same occupation vector, so no
    /// collapse dynamics can ever separate them.
    pub fn is_occupation_degenerate(&self) -> bool {
        self.branches.windows(2).all(|w| w[0].occupation == w[1].occupation)
    }

    /// Structural invariants plus the unit-norm condition.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = self.structural_violations();
        if !self.branches.is_empty()
            && self.branches.iter().all(|b| b.log_magnitude.is_finite())
        {
            let sq: f64 = self.branches.iter().map(|b| (2.0 * b.log_magnitude).exp()).sum();
            if (sq - 1.0).abs() > NORM_TOLERANCE {
                out.push(Violation::InitialNormNotUnit { squared_norm: sq });
            }
        }
        out
    }

    /// Invariants that must hold at every time, not only at construction.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.branches.is_empty() {
            out.push(Violation::NoBranches);
        }
        for (k, b) in self.branches.iter().enumerate() {
            if b.occupation.len() != self.cell_count {
                out.push(Violation::OccupationLengthMismatch {
                    branch: k,
                    expected: self.cell_count,
                    found: b.occupation.len(),
                });
            }
            for (n, &c) in b.occupation.counts().iter().enumerate() {
                if c > MAX_EXACT_COUNT {
                    out.push(Violation::CountTooLarge { branch: k, cell: n, count: c });
                }
            }
            if !b.log_magnitude.is_finite() {
                out.push(Violation::NonFiniteLogMagnitude { branch: k });
            }
            if !b.phase.is_finite() {
                out.push(Violation::NonFinitePhase { branch: k });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    pub initial: SuperposedState,
}

/// Checks every invariant of a scenario and returns all violations.
pub fn validate(scenario: &Scenario) -> std::result::Result<(), Vec<Violation>> {
    let mut v = scenario.params.violations();
    v.extend(scenario.initial.violations());
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// How the noise is drawn and whether trajectories carry weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Raw white noise; each trajectory is weighted by its final squared norm.
    RawWeighted,
    /// Noise with the norm-favouring drift, so trajectories are unweighted.
    PhysicalDrift,
    /// Raw white noise, never weighted: a noise law blind to the amplitudes.
    CoefficientIndependent,
    /// No noise and no damping.
    Unitary,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::RawWeighted => "raw-weighted",
            Scheme::PhysicalDrift => "physical-drift",
            Scheme::CoefficientIndependent => "coefficient-independent",
            Scheme::Unitary => "unitary",
        }
    }

    /// Whether ensemble statistics apply the squared-norm weight.
    pub fn is_weighted(self) -> bool {
        matches!(self, Scheme::RawWeighted)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn default_collapse_level() -> f64 {
    DEFAULT_COLLAPSE_LEVEL
}

fn default_decision_level() -> f64 {
    DEFAULT_DECISION_LEVEL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_max: f64,
    pub trials: usize,
    #[serde(default = "default_collapse_level")]
    pub collapse_level: f64,
    #[serde(default = "default_decision_level")]
    pub decision_level: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    /// Times at which probabilities and norms are recorded. Each is snapped
    /// to the nearest step. Empty means `[0, t_max]`.
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

impl RunConfig {
    pub fn new(dt: f64, t_max: f64, trials: usize, scheme: Scheme, master_seed: u64) -> Self {
        RunConfig {
            dt,
            t_max,
            trials,
            collapse_level: DEFAULT_COLLAPSE_LEVEL,
            decision_level: DEFAULT_DECISION_LEVEL,
            scheme,
            master_seed,
            sample_times: Vec::new(),
        }
    }

    /// Replaces the sample times with `count + 1` evenly spaced points on `[0, t_max]`.
    pub fn with_uniform_samples(mut self, count: usize) -> Self {
        let count = count.max(1);
        self.sample_times = (0..=count).map(|i| self.t_max * i as f64 / count as f64).collect();
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn step_count(&self) -> usize {
        ((self.t_max / self.dt).round() as usize).max(1)
    }

    /// Step indices at which samples are recorded, in the configured order.
    pub fn sample_steps(&self) -> Vec<usize> {
        let steps = self.step_count();
        if self.sample_times.is_empty() {
            return vec![0, steps];
        }
        self.sample_times
            .iter()
            .map(|&t| ((t / self.dt).round().max(0.0) as usize).min(steps))
            .collect()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        positive("dt", self.dt, &mut out);
        if !self.t_max.is_finite() {
            out.push(Violation::NonFinite { field: "t_max".into() });
        } else if self.dt.is_finite() && self.t_max < self.dt {
            out.push(Violation::OutOfRange {
                field: "t_max".into(),
                value: self.t_max,
                range: format!("[dt = {}, ∞)", self.dt),
            });
        }
        if self.trials == 0 {
            out.push(Violation::NonPositive { field: "trials".into() });
        }
        positive("collapse_level", self.collapse_level, &mut out);
        if !(self.decision_level > 0.5 && self.decision_level < 1.0) {
            out.push(Violation::OutOfRange {
                field: "decision_level".into(),
                value: self.decision_level,
                range: "(0.5, 1)".into(),
            });
        }
        for &t in &self.sample_times {
            if !t.is_finite() || t < 0.0 || t > self.t_max * (1.0 + 1e-12) {
                out.push(Violation::OutOfRange {
                    field: "sample_times".into(),
                    value: t,
                    range: format!("[0, {}]", self.t_max),
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}
