//! A 1D lattice surrogate for branch isolation under linear, local dynamics.
//!
//! Each branch is a wave packet in one spatial coordinate; detector
//! coordinates are not represented. The Hamiltonian is the second-difference
//! kinetic term plus a diagonal potential (`ħ = m = 1`), with Dirichlet
//! boundaries, so its stencil reaches one site. Two packets whose supports
//! are at least two sites apart therefore have an exactly vanishing cross
//! matrix element, and under Crank–Nicolson evolution each keeps its norm.
//!
//! Supports are tracked as index intervals that grow by one site per step.
//! Crank–Nicolson is implicit, so strictly every site is touched after one
//! step; the tails it creates decay geometrically with distance, and the
//! `pad` sites around each interval keep them far below roundoff.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Packets are set to exactly zero beyond this many widths from their center.
pub const TRUNCATION_WIDTHS: f64 = 6.0;

/// Inclusive site interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub lo: usize,
    pub hi: usize,
}

impl Region {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.lo <= i && i <= self.hi
    }

    /// Index distance between the nearest sites of two disjoint intervals;
    /// 1 means adjacent, 0 or less means overlapping.
    pub fn gap(&self, other: &Region) -> i64 {
        if self.hi < other.lo {
            other.lo as i64 - self.hi as i64
        } else if other.hi < self.lo {
            self.lo as i64 - other.hi as i64
        } else {
            -((self.hi.min(other.hi) - self.lo.max(other.lo)) as i64)
        }
    }

    fn grown(&self, by: usize, size: usize) -> Region {
        Region { lo: self.lo.saturating_sub(by), hi: (self.hi + by).min(size - 1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeWave {
    pub values: Vec<Complex64>,
    pub dx: f64,
    pub potential: Vec<f64>,
    pub region_plus: Region,
    pub region_minus: Region,
    pub pad: usize,
}

/// A Gaussian packet `exp(−(x−c)²/(4w²) + i·k·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPacketSetup {
    pub grid_size: usize,
    pub dx: f64,
    pub plus: Packet,
    pub minus: Packet,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    #[serde(default = "default_pad")]
    pub pad: usize,
    /// Zero when absent.
    #[serde(default)]
    pub potential: Option<Vec<f64>>,
}

fn default_pad() -> usize {
    8
}

impl Default for TwoPacketSetup {
    /// 4096 sites, packets of width 4 at sites 900 and 3196, `a₊² = 2/3`.
    fn default() -> Self {
        TwoPacketSetup {
            grid_size: 4096,
            dx: 1.0,
            plus: Packet { center: 900.0, width: 4.0, momentum: 0.3 },
            minus: Packet { center: 3196.0, width: 4.0, momentum: -0.3 },
            a_plus: Complex64::new((2.0f64 / 3.0).sqrt(), 0.0),
            a_minus: Complex64::new((1.0f64 / 3.0).sqrt(), 0.0),
            pad: default_pad(),
            potential: None,
        }
    }
}

impl LatticeWave {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, site: usize) -> f64 {
        site as f64 * self.dx
    }

    /// `Σ|ψ|²·dx`.
    pub fn norm(&self) -> f64 {
        sq_norm(&self.values) * self.dx
    }

    pub fn region_norm(&self, region: Region) -> f64 {
        sq_norm(&self.values[region.lo..=region.hi]) * self.dx
    }

    /// Norms of the plus and minus regions.
    pub fn region_norms(&self) -> (f64, f64) {
        (self.region_norm(self.region_plus), self.region_norm(self.region_minus))
    }

    /// `⟨x⟩` restricted to `region`.
    pub fn mean_position(&self, region: Region) -> f64 {
        let (mut m, mut w) = (0.0, 0.0);
        for i in region.lo..=region.hi {
            let p = self.values[i].norm_sqr();
            m += p * self.x(i);
            w += p;
        }
        m / w
    }

    /// Largest `|ψ|` outside both regions widened by `pad`.
    pub fn leak(&self) -> f64 {
        let a = self.region_plus.grown(self.pad, self.len());
        let b = self.region_minus.grown(self.pad, self.len());
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !a.contains(*i) && !b.contains(*i))
            .fold(0.0f64, |m, (_, v)| m.max(v.norm()))
    }

    /// Same lattice and regions with the amplitudes replaced.
    pub fn with_values(&self, values: Vec<Complex64>) -> LatticeWave {
        LatticeWave { values, ..self.clone() }
    }

    /// Rows `site,x,re,im,abs2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "site,x,re,im,abs2")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{},{},{},{}", self.x(i), v.re, v.im, v.norm_sqr())?;
        }
        Ok(())
    }
}

fn sq_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Truncated, normalized packet values and the sites they occupy.
fn packet(p: &Packet, grid_size: usize, dx: f64) -> Result<(Vec<Complex64>, Region)> {
    if !(p.width > 0.0 && p.width.is_finite()) || !p.center.is_finite() || !p.momentum.is_finite() {
        return Err(Error::arg("packet center, width and momentum must be finite with width > 0"));
    }
    let reach = TRUNCATION_WIDTHS * p.width;
    let lo = ((p.center - reach) / dx).ceil();
    let hi = ((p.center + reach) / dx).floor();
    if lo < 1.0 || hi > (grid_size as f64 - 2.0) {
        return Err(Error::arg(format!(
            "packet at {} with width {} does not fit inside the grid",
            p.center, p.width
        )));
    }
    let region = Region { lo: lo as usize, hi: hi as usize };
    let mut values = vec![Complex64::new(0.0, 0.0); grid_size];
    for (i, v) in values.iter_mut().enumerate().take(region.hi + 1).skip(region.lo) {
        let x = i as f64 * dx;
        let env = (-(x - p.center).powi(2) / (4.0 * p.width * p.width)).exp();
        *v = Complex64::from_polar(env, p.momentum * x);
    }
    let n = (sq_norm(&values) * dx).sqrt();
    values.iter_mut().for_each(|v| *v /= n);
    Ok((values, region))
}

/// Two truncated Gaussian packets `a₊φ₊ + a₋φ₋`, each `φ` normalized.
pub fn init_two_packets(setup: &TwoPacketSetup) -> Result<LatticeWave> {
    let TwoPacketSetup { grid_size, dx, a_plus, a_minus, pad, .. } = *setup;
    if grid_size < 3 || !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::arg("grid needs at least 3 sites and dx > 0"));
    }
    let total = a_plus.norm_sqr() + a_minus.norm_sqr();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::arg(format!("|a₊|² + |a₋|² must be 1, got {total}")));
    }
    let potential = match &setup.potential {
        Some(v) if v.len() != grid_size => {
            return Err(Error::arg(format!("potential has {} sites, grid has {grid_size}", v.len())))
        }
        Some(v) if v.iter().any(|x| !x.is_finite()) => return Err(Error::arg("potential must be finite")),
        Some(v) => v.clone(),
        None => vec![0.0; grid_size],
    };
    let (plus, region_plus) = packet(&setup.plus, grid_size, dx)?;
    let (minus, region_minus) = packet(&setup.minus, grid_size, dx)?;
    let gap = region_plus.gap(&region_minus);
    let need = (2 * pad).max(2) as i64;
    if gap < need {
        return Err(Error::BranchesNotDisjoint(format!(
            "supports {region_plus:?} and {region_minus:?} are {gap} sites apart, need at least {need}"
        )));
    }
    let values = plus.iter().zip(&minus).map(|(p, m)| a_plus * p + a_minus * m).collect();
    Ok(LatticeWave { values, dx, potential, region_plus, region_minus, pad })
}

/// `Hψ` with `H = −Δ/(2dx²) + V` and zero amplitude beyond both ends.
pub fn hamiltonian_apply(wave: &LatticeWave) -> Vec<Complex64> {
    apply_h(&wave.values, &wave.potential, wave.dx)
}

fn apply_h(psi: &[Complex64], potential: &[f64], dx: f64) -> Vec<Complex64> {
    let c = 1.0 / (2.0 * dx * dx);
    let m = psi.len();
    let zero = Complex64::new(0.0, 0.0);
    (0..m)
        .map(|i| {
            let left = if i > 0 { psi[i - 1] } else { zero };
            let right = if i + 1 < m { psi[i + 1] } else { zero };
            -(left + right - 2.0 * psi[i]) * c + potential[i] * psi[i]
        })
        .collect()
}

/// Crank–Nicolson propagator `(1 + iHdt/2)⁻¹(1 − iHdt/2)` solved with the
/// Thomas algorithm. Unconditionally stable and unitary for any `dt > 0`;
/// accuracy needs `dt·max|E| ≲ 1`, i.e. `dt ≲ dx²` for the kinetic term.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    dx: f64,
    dt: f64,
    potential: Vec<f64>,
    /// Adds `g·|ψ|²` to the potential. Nonzero only in test fixtures.
    nonlinearity: f64,
    scratch: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl CrankNicolson {
    pub fn new(dx: f64, potential: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg("dt must be positive"));
        }
        let m = potential.len();
        Ok(CrankNicolson {
            dx,
            dt,
            potential,
            nonlinearity: 0.0,
            scratch: vec![Complex64::new(0.0, 0.0); m],
            rhs: vec![Complex64::new(0.0, 0.0); m],
        })
    }

    pub fn for_wave(wave: &LatticeWave, dt: f64) -> Result<Self> {
        CrankNicolson::new(wave.dx, wave.potential.clone(), dt)
    }

    pub fn with_nonlinearity(mut self, g: f64) -> Self {
        self.nonlinearity = g;
        self
    }

    pub fn step(&mut self, psi: &mut [Complex64]) {
        let m = psi.len();
        let half = Complex64::new(0.0, 0.5 * self.dt);
        let off = -1.0 / (2.0 * self.dx * self.dx);
        let diag_k = 1.0 / (self.dx * self.dx);
        let v = |i: usize, psi: &[Complex64]| {
            self.potential[i] + self.nonlinearity * psi[i].norm_sqr()
        };

        // rhs = (1 − iHdt/2)ψ
        for i in 0..m {
            let left = if i > 0 { psi[i - 1] } else { Complex64::new(0.0, 0.0) };
            let right = if i + 1 < m { psi[i + 1] } else { Complex64::new(0.0, 0.0) };
            let h = off * (left + right) + (diag_k + v(i, psi)) * psi[i];
            self.rhs[i] = psi[i] - half * h;
        }
        // Thomas solve of (1 + iHdt/2)ψ' = rhs; both off-diagonals equal `a`.
        let a = half * off;
        let one = Complex64::new(1.0, 0.0);
        let mut prev = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let upper = if i > 0 { self.scratch[i - 1] } else { Complex64::new(0.0, 0.0) };
            let d = one + half * (diag_k + v(i, psi)) - a * upper;
            self.scratch[i] = a / d;
            prev = (self.rhs[i] - a * prev) / d;
            self.rhs[i] = prev;
        }
        psi[m - 1] = self.rhs[m - 1];
        for i in (0..m - 1).rev() {
            psi[i] = self.rhs[i] - self.scratch[i] * psi[i + 1];
        }
    }
}

/// Result of [`evolve_unitary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub wave: LatticeWave,
    pub steps_completed: usize,
    /// Step at which the grown regions would have come closer than `2·pad`.
    pub collision_step: Option<usize>,
    /// Largest `|norm(n+1) − norm(n)|` over the steps taken.
    pub max_norm_drift: f64,
}

impl Evolution {
    pub fn collided(&self) -> bool {
        self.collision_step.is_some()
    }
}

/// Crank–Nicolson evolution for `steps` steps, growing both regions by one
/// site per step. Stops early, with `collision_step` set, if the regions
/// would come within `2·pad` sites of each other.
pub fn evolve_unitary(wave: &LatticeWave, dt: f64, steps: usize) -> Result<Evolution> {
    evolve_with(wave, CrankNicolson::for_wave(wave, dt)?, steps)
}

fn evolve_with(wave: &LatticeWave, mut cn: CrankNicolson, steps: usize) -> Result<Evolution> {
    let mut w = wave.clone();
    let size = w.len();
    let need = (2 * w.pad).max(2) as i64;
    let mut norm = w.norm();
    let mut max_norm_drift = 0.0f64;
    let mut collision_step = None;
    let mut done = 0;
    for step in 0..steps {
        let plus = w.region_plus.grown(1, size);
        let minus = w.region_minus.grown(1, size);
        if plus.gap(&minus) < need {
            collision_step = Some(step);
            break;
        }
        cn.step(&mut w.values);
        w.region_plus = plus;
        w.region_minus = minus;
        let n = w.norm();
        max_norm_drift = max_norm_drift.max((n - norm).abs());
        norm = n;
        done += 1;
    }
    Ok(Evolution { wave: w, steps_completed: done, collision_step, max_norm_drift })
}

fn nonzero_support(v: &[Complex64]) -> Option<Region> {
    let lo = v.iter().position(|z| *z != Complex64::new(0.0, 0.0))?;
    let hi = v.iter().rposition(|z| *z != Complex64::new(0.0, 0.0))?;
    Some(Region { lo, hi })
}

/// `⟨Ψ₋|H|Ψ₊⟩·dx` for inputs whose exact nonzero supports are at least two
/// sites apart. For such inputs the result is exactly zero.
pub fn cross_element(plus_only: &LatticeWave, minus_only: &LatticeWave) -> Result<Complex64> {
    if let (Some(a), Some(b)) = (nonzero_support(&plus_only.values), nonzero_support(&minus_only.values)) {
        let gap = a.gap(&b);
        if gap < 2 {
            return Err(Error::StencilReachViolated { gap });
        }
    }
    Ok(cross_element_raw(plus_only, minus_only))
}

/// [`cross_element`] without the support check.
pub fn cross_element_raw(plus_only: &LatticeWave, minus_only: &LatticeWave) -> Complex64 {
    let h = hamiltonian_apply(plus_only);
    minus_only.values.iter().zip(&h).map(|(m, h)| m.conj() * h).sum::<Complex64>() * plus_only.dx
}

/// Max-norm residual of superposition through `steps` Crank–Nicolson steps.
pub fn linearity_residual(
    wave_a: &LatticeWave,
    wave_b: &LatticeWave,
    a_plus: Complex64,
    a_minus: Complex64,
    dt: f64,
    steps: usize,
) -> Result<f64> {
    linearity_residual_with(wave_a, wave_b, a_plus, a_minus, &CrankNicolson::for_wave(wave_a, dt)?, steps)
}

/// [`linearity_residual`] with a caller-supplied propagator.
pub fn linearity_residual_with(
    wave_a: &LatticeWave,
    wave_b: &LatticeWave,
    a_plus: Complex64,
    a_minus: Complex64,
    cn: &CrankNicolson,
    steps: usize,
) -> Result<f64> {
    if wave_a.len() != wave_b.len() || wave_a.dx != wave_b.dx {
        return Err(Error::arg("waves must share a grid"));
    }
    let run = |mut v: Vec<Complex64>| {
        let mut c = cn.clone();
        for _ in 0..steps {
            c.step(&mut v);
        }
        v
    };
    let mixed: Vec<Complex64> =
        wave_a.values.iter().zip(&wave_b.values).map(|(a, b)| a_plus * a + a_minus * b).collect();
    let whole = run(mixed);
    let ea = run(wave_a.values.clone());
    let eb = run(wave_b.values.clone());
    Ok(whole
        .iter()
        .zip(ea.iter().zip(&eb))
        .map(|(w, (a, b))| (w - (a_plus * a + a_minus * b)).norm())
        .fold(0.0, f64::max))
}

/// Tolerances of the isolation suite.
pub const NORM_DRIFT_PER_STEP_LIMIT: f64 = 1e-12;
pub const REGION_NORM_LIMIT: f64 = 1e-10;
pub const CROSS_ELEMENT_LIMIT: f64 = 1e-12;
pub const LINEARITY_LIMIT: f64 = 1e-12;
pub const LEAK_LIMIT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub grid_size: usize,
    pub dt: f64,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub collision_step: Option<usize>,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub max_norm_drift_per_step: f64,
    pub initial_region_norms: [f64; 2],
    pub final_region_norms: [f64; 2],
    pub max_region_norm_change: f64,
    /// Region gap at the end, in sites.
    pub final_gap: i64,
    /// Structural cross element of the freshly built branches.
    pub initial_cross_element: [f64; 2],
    /// `|⟨Ψ₋(t)|H|Ψ₊(t)⟩|` after evolution.
    pub final_cross_element_abs: f64,
    pub linearity_residual: f64,
    /// Largest amplitude outside the padded regions.
    pub leak: f64,
    /// Mean position of the plus packet against `x₀ + v·t`, lattice group velocity.
    pub plus_center_drift: f64,
    pub plus_center_predicted: f64,
    pub checks: Vec<IsolationCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Builds the two packets, evolves the full wave and each branch alone, and
/// checks norms, cross element, linearity and support tracking.
pub fn isolation_suite(setup: &TwoPacketSetup, dt: f64, steps: usize) -> Result<IsolationReport> {
    isolation_run(setup, dt, steps).map(|(report, _)| report)
}

/// [`isolation_suite`] that also returns the evolved full wave.
pub fn isolation_run(setup: &TwoPacketSetup, dt: f64, steps: usize) -> Result<(IsolationReport, LatticeWave)> {
    let wave = init_two_packets(setup)?;
    let zero = Complex64::new(0.0, 0.0);
    let plus_only = init_two_packets(&TwoPacketSetup { a_plus: Complex64::new(1.0, 0.0), a_minus: zero, ..setup.clone() })?;
    let minus_only = init_two_packets(&TwoPacketSetup { a_plus: zero, a_minus: Complex64::new(1.0, 0.0), ..setup.clone() })?;

    let c0 = cross_element(&plus_only, &minus_only)?;
    let full = evolve_unitary(&wave, dt, steps)?;
    let taken = full.steps_completed;
    let ep = evolve_unitary(&plus_only, dt, taken)?;
    let em = evolve_unitary(&minus_only, dt, taken)?;
    let c1 = cross_element_raw(&ep.wave, &em.wave).norm();
    let residual = full
        .wave
        .values
        .iter()
        .zip(ep.wave.values.iter().zip(&em.wave.values))
        .map(|(w, (a, b))| (w - (setup.a_plus * a + setup.a_minus * b)).norm())
        .fold(0.0, f64::max);

    let r0 = wave.region_norms();
    let r1 = full.wave.region_norms();
    let region_change = (r1.0 - r0.0).abs().max((r1.1 - r0.1).abs());
    let t = taken as f64 * dt;
    let k = setup.plus.momentum;
    let predicted = setup.plus.center + (k * setup.dx).sin() / setup.dx * t;
    let center = ep.wave.mean_position(ep.wave.region_plus);
    let leak = full.wave.leak();

    let mut checks = vec![
        check("norm drift per step", full.max_norm_drift, NORM_DRIFT_PER_STEP_LIMIT),
        check("region norm change", region_change, REGION_NORM_LIMIT),
        check("initial cross element", c0.norm(), 0.0),
        check("final cross element", c1, CROSS_ELEMENT_LIMIT),
        check("linearity residual", residual, LINEARITY_LIMIT),
        check("leak outside regions", leak, LEAK_LIMIT),
    ];
    if full.collided() {
        checks.push(IsolationCheck {
            name: "regions stay disjoint".into(),
            value: full.collision_step.unwrap() as f64,
            limit: steps as f64,
            pass: false,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = IsolationReport {
        grid_size: setup.grid_size,
        dt,
        steps_requested: steps,
        steps_completed: taken,
        collision_step: full.collision_step,
        initial_norm: wave.norm(),
        final_norm: full.wave.norm(),
        max_norm_drift_per_step: full.max_norm_drift,
        initial_region_norms: [r0.0, r0.1],
        final_region_norms: [r1.0, r1.1],
        max_region_norm_change: region_change,
        final_gap: full.wave.region_plus.gap(&full.wave.region_minus),
        initial_cross_element: [c0.re, c0.im],
        final_cross_element_abs: c1,
        linearity_residual: residual,
        leak,
        plus_center_drift: center - setup.plus.center,
        plus_center_predicted: predicted - setup.plus.center,
        checks,
        pass,
    };
    Ok((report, full.wave))
}

fn check(name: &str, value: f64, limit: f64) -> IsolationCheck {
    IsolationCheck { name: name.into(), value, limit, pass: value <= limit }
}
