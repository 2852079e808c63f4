//! Scenario builders. All builders are pure and produce normalized states.

use crate::error::{Error, Result};
use crate::model::{Branch, ModelParams, Scenario, SuperposedState, MAX_EXACT_COUNT};

/// Default upper bound on the number of simulated cells.
///
/// Only cells whose counts differ between branches influence the relative
/// dynamics, so physical detector volumes (~10¹² cells) are represented by a
/// subsample.
pub const DEFAULT_CELL_CAP: u64 = 1_000_000;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie strictly between 0 and 1, got {p}")))
    }
}

/// One cell; branch 1 holds `delta_n` particles there, branch 2 holds none.
pub fn two_branch_delta_scenario(params: ModelParams, delta_n: u64, a1_squared: f64) -> Result<Scenario> {
    check_probability("a1_squared", a1_squared)?;
    let initial = SuperposedState::new(
        vec![
            Branch::with_probability(a1_squared, vec![delta_n]),
            Branch::with_probability(1.0 - a1_squared, vec![0]),
        ],
        1,
    )?;
    Ok(Scenario { name: format!("two-branch-dn{delta_n}"), params, initial })
}

/// A pointer displaced by `occupied_cells` cells: branch 1 fills the first
/// half of `2·occupied_cells` cells, branch 2 the second half.
pub fn pointer_scenario(params: ModelParams, occupied_cells: u64, a1_squared: f64) -> Result<Scenario> {
    pointer_scenario_with_cap(params, occupied_cells, a1_squared, DEFAULT_CELL_CAP)
}

pub fn pointer_scenario_with_cap(
    params: ModelParams,
    occupied_cells: u64,
    a1_squared: f64,
    cell_cap: u64,
) -> Result<Scenario> {
    check_probability("a1_squared", a1_squared)?;
    if occupied_cells == 0 {
        return Err(Error::arg("occupied_cells must be at least 1"));
    }
    let cells = occupied_cells
        .checked_mul(2)
        .filter(|&c| c <= cell_cap)
        .ok_or_else(|| Error::arg(format!("cell count exceeds cap ({cell_cap})")))?;
    let per_cell = params.particles_per_cell().round();
    if !per_cell.is_finite() || per_cell < 0.0 || per_cell > MAX_EXACT_COUNT as f64 {
        return Err(Error::arg(format!(
            "per-cell count {per_cell} is outside the exactly representable range [0, 2^53]"
        )));
    }
    let per_cell = per_cell as u64;
    let m = occupied_cells as usize;
    let cells = cells as usize;
    let first: Vec<u64> = (0..cells).map(|i| if i < m { per_cell } else { 0 }).collect();
    let second: Vec<u64> = (0..cells).map(|i| if i < m { 0 } else { per_cell }).collect();
    let initial = SuperposedState::new(
        vec![
            Branch::with_probability(a1_squared, first),
            Branch::with_probability(1.0 - a1_squared, second),
        ],
        cells,
    )?;
    Ok(Scenario { name: format!("pointer-{occupied_cells}"), params, initial })
}

/// General K-branch scenario from `|a_k|²` and occupation vectors.
///
/// The probabilities must already sum to one.
pub fn scenario_from_probabilities(
    name: impl Into<String>,
    params: ModelParams,
    probabilities: &[f64],
    occupations: Vec<Vec<u64>>,
) -> Result<Scenario> {
    if probabilities.len() != occupations.len() {
        return Err(Error::arg(format!(
            "{} probabilities for {} occupation vectors",
            probabilities.len(),
            occupations.len()
        )));
    }
    for &p in probabilities {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::arg(format!("branch probability {p} must be positive")));
        }
    }
    let cells = occupations.first().map_or(0, Vec::len);
    let branches = probabilities
        .iter()
        .zip(occupations)
        .map(|(&p, occ)| Branch::with_probability(p, occ))
        .collect();
    let initial = SuperposedState::new(branches, cells)?;
    Ok(Scenario { name: name.into(), params, initial })
}
