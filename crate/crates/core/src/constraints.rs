//! Experimental bounds on collapse-model couplings.
//!
//! Bounds follow the published inequalities literally: the electron/nucleon
//! and neutron/proton bounds are closed, the rate bound is strict. Closed
//! bounds allow a few ulps so that a value written as exactly the boundary
//! (`m_n/m_p + 4e-3`, `13/2000`) lands inside despite binary rounding.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_M_ELEC_OVER_NUC: f64 = 1.0 / 2000.0;
/// Standard neutron/proton mass ratio.
pub const DEFAULT_M_N_OVER_P: f64 = 1.0014;
/// Coupling ratio bound in units of the mass ratio.
pub const ELECTRON_NUCLEON_FACTOR: f64 = 13.0;
pub const NEUTRON_PROTON_TOLERANCE: f64 = 4e-3;
/// Collapse rates at or above this (1/s) would have spoiled interference experiments.
pub const LAMBDA_BOUND: f64 = 1e-6;

/// Rounding allowance for closed bounds.
fn slack(a: f64, b: f64) -> f64 {
    4.0 * f64::EPSILON * a.abs().max(b.abs())
}

fn default_m_elec() -> f64 {
    DEFAULT_M_ELEC_OVER_NUC
}

fn default_m_np() -> f64 {
    DEFAULT_M_N_OVER_P
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSet {
    pub alpha_elec_over_nuc: f64,
    pub alpha_n_over_p: f64,
    /// 1/s.
    pub lambda: f64,
    #[serde(default = "default_m_elec")]
    pub m_elec_over_nuc: f64,
    #[serde(default = "default_m_np")]
    pub m_n_over_p: f64,
}

impl CouplingSet {
    /// Couplings proportional to mass, with `λ = 1e-16 /s`.
    pub fn mass_proportional() -> Self {
        CouplingSet {
            alpha_elec_over_nuc: DEFAULT_M_ELEC_OVER_NUC,
            alpha_n_over_p: DEFAULT_M_N_OVER_P,
            lambda: 1e-16,
            m_elec_over_nuc: DEFAULT_M_ELEC_OVER_NUC,
            m_n_over_p: DEFAULT_M_N_OVER_P,
        }
    }

    /// Mass-proportional except that electrons couple as strongly as nucleons.
    pub fn equal_coupling() -> Self {
        CouplingSet { alpha_elec_over_nuc: 1.0, ..Self::mass_proportional() }
    }

    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("alpha_elec_over_nuc", self.alpha_elec_over_nuc),
            ("alpha_n_over_p", self.alpha_n_over_p),
            ("m_elec_over_nuc", self.m_elec_over_nuc),
            ("m_n_over_p", self.m_n_over_p),
        ];
        for (name, v) in ratios {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::arg(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::arg(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintItem {
    pub name: String,
    pub bound: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub items: Vec<ConstraintItem>,
    pub pass: bool,
}

/// `0 ≤ α_e/α_nuc ≤ 13·m_e/m_nuc`.
pub fn check_electron_nucleon(c: &CouplingSet) -> ConstraintItem {
    let limit = ELECTRON_NUCLEON_FACTOR * c.m_elec_over_nuc;
    let v = c.alpha_elec_over_nuc;
    ConstraintItem {
        name: "electron/nucleon coupling".into(),
        bound: format!("0 <= alpha_e/alpha_nuc <= 13 * m_e/m_nuc = {}", short(limit)),
        value: v,
        pass: v >= 0.0 && v <= limit + slack(v, limit),
    }
}

/// `|α_n/α_p − m_n/m_p| ≤ 4e-3`.
pub fn check_neutron_proton(c: &CouplingSet) -> ConstraintItem {
    let v = c.alpha_n_over_p;
    ConstraintItem {
        name: "neutron/proton coupling".into(),
        bound: format!("|alpha_n/alpha_p - {}| <= 4e-3", short(c.m_n_over_p)),
        value: v,
        pass: (v - c.m_n_over_p).abs() <= NEUTRON_PROTON_TOLERANCE + slack(v, c.m_n_over_p),
    }
}

/// `λ < 1e-6 /s`.
pub fn check_interference_bound(c: &CouplingSet) -> ConstraintItem {
    ConstraintItem {
        name: "interference bound".into(),
        bound: "lambda < 1e-6 /s".into(),
        value: c.lambda,
        pass: c.lambda < LAMBDA_BOUND,
    }
}

pub fn check_all(c: &CouplingSet) -> ConstraintVerdict {
    let items = vec![check_electron_nucleon(c), check_neutron_proton(c), check_interference_bound(c)];
    let pass = items.iter().all(|i| i.pass);
    ConstraintVerdict { items, pass }
}

impl ConstraintVerdict {
    pub fn render_text(&self) -> String {
        let w_name = self.items.iter().map(|i| i.name.len()).max().unwrap_or(0);
        let values: Vec<String> = self.items.iter().map(|i| short(i.value)).collect();
        let w_val = values.iter().map(String::len).max().unwrap_or(0);
        let mut out = String::new();
        for (i, v) in self.items.iter().zip(&values) {
            let verdict = if i.pass { "pass" } else { "FAIL" };
            let _ = writeln!(out, "{:<w_name$}  {:>w_val$}  {verdict}  {}", i.name, v, i.bound);
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "pass" } else { "FAIL" });
        out
    }
}

/// Plain notation for moderate magnitudes, scientific otherwise; at most
/// six significant digits.
fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e4).contains(&x.abs()) {
        let s = format!("{x:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        let s = format!("{x:.5e}");
        let (m, e) = s.split_once('e').unwrap();
        format!("{}e{e}", m.trim_end_matches('0').trim_end_matches('.'))
    }
}
