//! JSON configuration files, one shape per command.

use std::path::Path;

use csl_core::branchlab::TwoPacketSetup;
use csl_core::constraints::CouplingSet;
use csl_core::counterexample::DependenceConfig;
use csl_core::ensemble::{default_hooks, HookInput};
use csl_core::scenario::{pointer_scenario_with_cap, DEFAULT_CELL_CAP};
use csl_core::{
    scenario_from_probabilities, two_branch_delta_scenario, ModelParams, RunConfig, Scenario,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{origin}: {e}")))
}

pub fn from_value<T: DeserializeOwned>(value: serde_json::Value, origin: &str) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{origin}: {e}")))
}

fn unit_params() -> ModelParams {
    ModelParams::unit()
}

fn standard_params() -> ModelParams {
    ModelParams::standard()
}

/// How to build the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    TwoBranchDelta {
        #[serde(default = "unit_params")]
        params: ModelParams,
        delta_n: u64,
        a1_squared: f64,
    },
    Pointer {
        #[serde(default = "standard_params")]
        params: ModelParams,
        occupied_cells: u64,
        a1_squared: f64,
        #[serde(default)]
        cell_cap: Option<u64>,
    },
    Explicit {
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "unit_params")]
        params: ModelParams,
        probabilities: Vec<f64>,
        occupations: Vec<Vec<u64>>,
    },
}

impl ScenarioSpec {
    pub fn build(&self) -> csl_core::Result<Scenario> {
        match self {
            ScenarioSpec::TwoBranchDelta { params, delta_n, a1_squared } => {
                two_branch_delta_scenario(*params, *delta_n, *a1_squared)
            }
            ScenarioSpec::Pointer { params, occupied_cells, a1_squared, cell_cap } => pointer_scenario_with_cap(
                *params,
                *occupied_cells,
                *a1_squared,
                cell_cap.unwrap_or(DEFAULT_CELL_CAP),
            ),
            ScenarioSpec::Explicit { name, params, probabilities, occupations } => scenario_from_probabilities(
                name.clone().unwrap_or_else(|| "explicit".into()),
                *params,
                probabilities,
                occupations.clone(),
            ),
        }
    }
}

/// Trial-count and seed overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn run(&self, run: &mut RunConfig) {
        if let Some(n) = self.trials {
            run.trials = n;
        }
        if let Some(s) = self.seed {
            run.master_seed = s;
        }
    }
}

/// `born`, `martingale` and `equivalence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub scenario: ScenarioSpec,
    pub run: RunConfig,
    /// Target frequencies; the initial `|a_k|²` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Vec<f64>>,
}

impl EnsembleConfig {
    pub fn apply(&mut self, o: Overrides) {
        o.run(&mut self.run);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub delta_n: u64,
    #[serde(default = "half")]
    pub a1_squared: f64,
    pub run: RunConfig,
}

fn half() -> f64 {
    0.5
}

fn median_factor() -> f64 {
    2.0
}

fn slope_tolerance() -> f64 {
    0.2
}

fn decay_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "unit_params")]
    pub params: ModelParams,
    pub delta_ns: Vec<u64>,
    #[serde(default = "half")]
    pub a1_squared: f64,
    /// Run settings for the smallest ΔN; other points are rescaled.
    pub run: RunConfig,
    /// Medians must lie within this factor of `3/(λΔN²)`.
    #[serde(default = "median_factor")]
    pub median_factor: f64,
    /// Allowed deviation of the fitted slope from −2.
    #[serde(default = "slope_tolerance")]
    pub slope_tolerance: f64,
    #[serde(default = "standard_params")]
    pub hook_params: ModelParams,
    #[serde(default = "default_hooks")]
    pub hooks: Vec<HookInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConfig>,
    /// Relative tolerance of the mean decay slope against −λΔN².
    #[serde(default = "decay_tolerance")]
    pub decay_tolerance: f64,
}

impl TimingConfig {
    pub fn apply(&mut self, o: Overrides) {
        o.run(&mut self.run);
        if let Some(d) = &mut self.decay {
            o.run(&mut d.run);
        }
    }
}

/// Two amplitude settings on one cat scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    #[serde(default = "unit_params")]
    pub params: ModelParams,
    pub delta_n: u64,
    pub first_a1_squared: f64,
    pub second_a1_squared: f64,
    pub run: RunConfig,
    /// `|z|` the Born test must exceed in at least one run.
    #[serde(default = "born_violation_z")]
    pub born_violation_z: f64,
}

fn born_violation_z() -> f64 {
    5.0
}

fn one() -> usize {
    1
}

fn stability_fraction() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NogoConfig {
    #[serde(default)]
    pub table: DependenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairConfig>,
    /// Number of independent seeds the table is repeated on.
    #[serde(default = "one")]
    pub seeds: usize,
    /// Fraction of seeds on which the pattern must hold.
    #[serde(default = "stability_fraction")]
    pub stability_fraction: f64,
}

impl NogoConfig {
    pub fn apply(&mut self, o: Overrides) {
        if let Some(n) = o.trials {
            self.table.trials = n;
        }
        if let Some(s) = o.seed {
            self.table.master_seed = s;
        }
        if let Some(p) = &mut self.pair {
            o.run(&mut p.run);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchlabConfig {
    #[serde(default)]
    pub setup: TwoPacketSetup,
    pub dt: f64,
    pub steps: usize,
}

/// Constraint files are a bare [`CouplingSet`].
pub type ConstraintsConfig = CouplingSet;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_spec_variants() {
        let s: ScenarioSpec =
            parse_json(r#"{"kind":"two_branch_delta","delta_n":4,"a1_squared":0.5}"#, "t").unwrap();
        assert_eq!(s.build().unwrap().initial.len(), 2);
        let s: ScenarioSpec = parse_json(r#"{"kind":"pointer","occupied_cells":2,"a1_squared":0.5}"#, "t").unwrap();
        assert_eq!(s.build().unwrap().initial.cell_count, 4);
        let s: ScenarioSpec = parse_json(
            r#"{"kind":"explicit","probabilities":[0.5,0.3,0.2],"occupations":[[0],[4],[8]]}"#,
            "t",
        )
        .unwrap();
        assert_eq!(s.build().unwrap().name, "explicit");
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let text = "{\n  \"scenario\": {\"kind\": \"two_branch_delta\", \"delta_n\": 1, \"a1_squared\": 0.5},\n  \"runs\": {}\n}";
        let err = parse_json::<EnsembleConfig>(text, "cfg.json").unwrap_err().to_string();
        assert!(err.starts_with("cfg.json: unknown field `runs`"), "{err}");
        assert!(err.contains("line 3"), "{err}");
        // tagged scenarios still name the offending field
        let err = parse_json::<ScenarioSpec>(r#"{"kind":"two_branch_delta","dn":4}"#, "s").unwrap_err().to_string();
        assert!(err.contains("unknown field `dn`"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let mut c: EnsembleConfig = parse_json(
            r#"{"scenario":{"kind":"two_branch_delta","delta_n":1,"a1_squared":0.5},
                "run":{"dt":0.01,"t_max":1,"trials":5,"scheme":"physical-drift","master_seed":1}}"#,
            "t",
        )
        .unwrap();
        c.apply(Overrides { trials: Some(7), seed: Some(9) });
        assert_eq!((c.run.trials, c.run.master_seed), (7, 9));
    }
}
