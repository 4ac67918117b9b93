//! Gujer-matrix kinetics: processes with (partly unknown) stoichiometry,
//! conservation-based completion, the ASM1 process bank and aeration.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::components::{asm1, Basis, Component, ComponentSet, CompositeParams, Conserved, Phase, DINITROGEN_COD};
use crate::error::{Error, Result};

/// Pivot magnitude below which a conservation system is singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Known(f64),
    Unknown,
}

/// Rate law ρ(state) in g·m⁻³·d⁻¹ of the reference component's basis.
pub type RateLaw = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Conservation weights: quantity → component id → weight.
pub type Weights = BTreeMap<Conserved, BTreeMap<String, f64>>;

#[derive(Clone)]
pub struct KineticProcess {
    pub id: String,
    /// Component id → coefficient, in declaration order.
    pub stoichiometry: Vec<(String, Coefficient)>,
    pub conserved_for: Vec<Conserved>,
    pub rate: RateLaw,
}

impl fmt::Debug for KineticProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KineticProcess")
            .field("id", &self.id)
            .field("stoichiometry", &self.stoichiometry)
            .field("conserved_for", &self.conserved_for)
            .finish_non_exhaustive()
    }
}

impl KineticProcess {
    pub fn new(id: &str, rate: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            id: id.to_string(),
            stoichiometry: Vec::new(),
            conserved_for: Vec::new(),
            rate: Arc::new(rate),
        }
    }

    pub fn known(mut self, component: &str, value: f64) -> Self {
        self.stoichiometry.push((component.to_string(), Coefficient::Known(value)));
        self
    }

    pub fn unknown(mut self, component: &str) -> Self {
        self.stoichiometry.push((component.to_string(), Coefficient::Unknown));
        self
    }

    pub fn conserving(mut self, quantities: &[Conserved]) -> Self {
        self.conserved_for = quantities.to_vec();
        self
    }

    pub fn coefficient(&self, component: &str) -> Option<Coefficient> {
        self.stoichiometry
            .iter()
            .find(|(id, _)| id == component)
            .map(|(_, c)| *c)
    }

    /// Value of a resolved coefficient; 0 for components the process does not touch.
    pub fn value(&self, component: &str) -> f64 {
        match self.coefficient(component) {
            Some(Coefficient::Known(v)) => v,
            _ => 0.0,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.stoichiometry
            .iter()
            .all(|(_, c)| matches!(c, Coefficient::Known(_)))
    }

    /// Σ ν·w over the declared stoichiometry (unknowns count as 0).
    pub fn residual(&self, quantity: Conserved, weights: &Weights) -> f64 {
        let w = weights.get(&quantity);
        self.stoichiometry
            .iter()
            .map(|(id, c)| match c {
                Coefficient::Known(v) => v * w.and_then(|w| w.get(id)).copied().unwrap_or(0.0),
                Coefficient::Unknown => 0.0,
            })
            .sum()
    }
}

/// Conservation weights from component contents.
pub fn weights_of<'a>(components: impl IntoIterator<Item = &'a Component>) -> Weights {
    let mut w = Weights::new();
    for c in components {
        for (&q, &v) in &c.content {
            w.entry(q).or_default().insert(c.id.clone(), v);
        }
    }
    w
}

/// Resolves every UNKNOWN coefficient so that each declared conservation
/// equation Σ ν·w = 0 holds.
pub fn complete_stoichiometry(process: &KineticProcess, weights: &Weights) -> Result<KineticProcess> {
    let unknowns: Vec<usize> = process
        .stoichiometry
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c == Coefficient::Unknown)
        .map(|(i, _)| i)
        .collect();
    let equations = &process.conserved_for;
    if unknowns.len() != equations.len() {
        return Err(Error::IllPosedStoichiometry {
            process: process.id.clone(),
            unknowns: unknowns.len(),
            equations: equations.len(),
        });
    }
    if unknowns.is_empty() {
        return Ok(process.clone());
    }

    let n = unknowns.len();
    let weight = |q: &Conserved, id: &str| weights.get(q).and_then(|w| w.get(id)).copied().unwrap_or(0.0);
    // a[e][u] x_u = b[e]
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (e, q) in equations.iter().enumerate() {
        for (u, &k) in unknowns.iter().enumerate() {
            a[e][u] = weight(q, &process.stoichiometry[k].0);
        }
        b[e] = -process.residual(*q, weights);
    }

    let x = if n == 1 {
        if a[0][0].abs() < SINGULAR_PIVOT {
            return Err(Error::SingularStoichiometry(process.id.clone()));
        }
        vec![b[0] / a[0][0]]
    } else {
        solve_dense(a, b).ok_or_else(|| Error::SingularStoichiometry(process.id.clone()))?
    };

    let mut out = process.clone();
    for (&k, v) in unknowns.iter().zip(x) {
        out.stoichiometry[k].1 = Coefficient::Known(v);
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < SINGULAR_PIVOT {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Resolved stoichiometric matrix paired with rate laws.
#[derive(Debug, Clone)]
pub struct GujerMatrix {
    components: Arc<ComponentSet>,
    /// Species that take part in conservation but are not part of the state (e.g. N2 gas).
    untracked: Vec<Component>,
    processes: Vec<KineticProcess>,
    /// Sparse rows of ν over tracked components: (component index, coefficient).
    rows: Vec<Vec<(usize, f64)>>,
    weights: Weights,
}

impl GujerMatrix {
    pub fn new(components: Arc<ComponentSet>, untracked: Vec<Component>, processes: Vec<KineticProcess>) -> Result<Self> {
        let weights = weights_of(components.components().iter().chain(&untracked));
        Self::with_weights(components, untracked, processes, weights)
    }

    /// As [`GujerMatrix::new`] with explicit conservation weights, for contents
    /// that depend on kinetic parameters (e.g. biomass nitrogen).
    pub fn with_weights(
        components: Arc<ComponentSet>,
        untracked: Vec<Component>,
        processes: Vec<KineticProcess>,
        weights: Weights,
    ) -> Result<Self> {
        let mut resolved = Vec::with_capacity(processes.len());
        let mut rows = Vec::with_capacity(processes.len());
        for p in &processes {
            let p = complete_stoichiometry(p, &weights)?;
            let mut row = Vec::new();
            for (id, c) in &p.stoichiometry {
                let Coefficient::Known(v) = *c else { unreachable!() };
                if let Some(i) = components.index_of(id) {
                    row.push((i, v));
                } else if !untracked.iter().any(|u| &u.id == id) {
                    return Err(Error::ComponentSetMismatch(format!(
                        "process `{}` references unknown component `{id}`",
                        p.id
                    )));
                }
            }
            rows.push(row);
            resolved.push(p);
        }
        Ok(Self {
            components,
            untracked,
            processes: resolved,
            rows,
            weights,
        })
    }

    pub fn components(&self) -> &Arc<ComponentSet> {
        &self.components
    }

    pub fn processes(&self) -> &[KineticProcess] {
        &self.processes
    }

    pub fn process(&self, id: &str) -> Option<&KineticProcess> {
        self.processes.iter().find(|p| p.id == id)
    }

    /// Dense ν (processes × tracked components).
    pub fn coefficients(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut r = vec![0.0; self.components.len()];
                for &(i, v) in row {
                    r[i] = v;
                }
                r
            })
            .collect()
    }

    /// Conservation weights including untracked species.
    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Σ ν·w for process `j`; `tracked_only` drops untracked species.
    pub fn conservation_residual(&self, j: usize, quantity: Conserved, tracked_only: bool) -> f64 {
        if !tracked_only {
            return self.processes[j].residual(quantity, &self.weights);
        }
        let mut weights = self.weights.clone();
        for w in weights.values_mut() {
            w.retain(|id, _| !self.untracked.iter().any(|u| &u.id == id));
        }
        self.processes[j].residual(quantity, &weights)
    }

    /// Process rates ρ for a non-negative state.
    pub fn rates(&self, state: &[f64]) -> Vec<f64> {
        self.processes.iter().map(|p| (p.rate)(state)).collect()
    }

    /// r = νᵀ·ρ(state)
    pub fn production_rates(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.components.len() {
            return Err(Error::Dimension {
                expected: self.components.len(),
                got: state.len(),
            });
        }
        let mut out = vec![0.0; state.len()];
        self.add_production_rates(state, &mut out);
        Ok(out)
    }

    /// r = νᵀ·ρ for given rates.
    pub fn production_from_rates(&self, rates: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        for (row, rho) in self.rows.iter().zip(rates) {
            for &(i, v) in row {
                out[i] += v * rho;
            }
        }
        out
    }

    /// Adds νᵀ·ρ(state) into `out`.
    pub fn add_production_rates(&self, state: &[f64], out: &mut [f64]) {
        for (p, row) in self.processes.iter().zip(&self.rows) {
            let rho = (p.rate)(state);
            if rho != 0.0 {
                for &(i, v) in row {
                    out[i] += v * rho;
                }
            }
        }
    }
}

/// ASM1 stoichiometric and kinetic parameters, keyed by their conventional symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Asm1Params {
    #[serde(rename = "Y_H")]
    pub y_h: f64,
    #[serde(rename = "Y_A")]
    pub y_a: f64,
    #[serde(rename = "f_Pobs")]
    pub f_p_obs: f64,
    #[serde(rename = "i_XB")]
    pub i_xb: f64,
    #[serde(rename = "i_XP")]
    pub i_xp: f64,
    #[serde(rename = "f_SS_COD")]
    pub f_ss_cod: f64,
    #[serde(rename = "mu_H")]
    pub mu_h: f64,
    #[serde(rename = "K_S")]
    pub k_s: f64,
    #[serde(rename = "K_OH")]
    pub k_oh: f64,
    #[serde(rename = "K_NO")]
    pub k_no: f64,
    #[serde(rename = "b_H")]
    pub b_h: f64,
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    #[serde(rename = "K_NH")]
    pub k_nh: f64,
    #[serde(rename = "K_OA")]
    pub k_oa: f64,
    #[serde(rename = "b_A")]
    pub b_a: f64,
    #[serde(rename = "eta_g")]
    pub eta_g: f64,
    #[serde(rename = "k_a")]
    pub k_a: f64,
    #[serde(rename = "k_h")]
    pub k_h: f64,
    #[serde(rename = "K_X")]
    pub k_x: f64,
    #[serde(rename = "eta_h")]
    pub eta_h: f64,
}

impl Default for Asm1Params {
    fn default() -> Self {
        Self {
            y_h: 0.67,
            y_a: 0.24,
            f_p_obs: 0.21,
            i_xb: 0.08,
            i_xp: 0.06,
            f_ss_cod: 0.75,
            mu_h: 4.0,
            k_s: 10.0,
            k_oh: 0.2,
            k_no: 0.5,
            b_h: 0.3,
            mu_a: 0.5,
            k_nh: 1.0,
            k_oa: 0.4,
            b_a: 0.05,
            eta_g: 0.8,
            k_a: 0.05,
            k_h: 3.0,
            k_x: 0.1,
            eta_h: 0.8,
        }
    }
}

impl Asm1Params {
    pub const NAMES: [&'static str; 20] = [
        "Y_H", "Y_A", "f_Pobs", "i_XB", "i_XP", "f_SS_COD", "mu_H", "K_S", "K_OH", "K_NO", "b_H", "mu_A",
        "K_NH", "K_OA", "b_A", "eta_g", "k_a", "k_h", "K_X", "eta_h",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "Y_H" => &mut self.y_h,
            "Y_A" => &mut self.y_a,
            "f_Pobs" => &mut self.f_p_obs,
            "i_XB" => &mut self.i_xb,
            "i_XP" => &mut self.i_xp,
            "f_SS_COD" => &mut self.f_ss_cod,
            "mu_H" => &mut self.mu_h,
            "K_S" => &mut self.k_s,
            "K_OH" => &mut self.k_oh,
            "K_NO" => &mut self.k_no,
            "b_H" => &mut self.b_h,
            "mu_A" => &mut self.mu_a,
            "K_NH" => &mut self.k_nh,
            "K_OA" => &mut self.k_oa,
            "b_A" => &mut self.b_a,
            "eta_g" => &mut self.eta_g,
            "k_a" => &mut self.k_a,
            "k_h" => &mut self.k_h,
            "K_X" => &mut self.k_x,
            "eta_h" => &mut self.eta_h,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut copy = *self;
        copy.slot(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = self
            .slot(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        *slot = value;
        Ok(())
    }

    /// Inert fraction of decayed biomass in the death-regeneration matrix,
    /// mapped from the observed fraction: f_P = f_Pobs(1−Y_H)/(1−Y_H·f_Pobs).
    pub fn f_p(&self) -> f64 {
        self.f_p_obs * (1.0 - self.y_h) / (1.0 - self.y_h * self.f_p_obs)
    }

    pub fn composite_params(&self) -> CompositeParams {
        CompositeParams {
            f_ss_cod: self.f_ss_cod,
            i_xb: self.i_xb,
            i_xp: self.i_xp,
            f_p: self.f_p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in Self::NAMES {
            let v = self.get(name)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        for (name, v) in [
            ("Y_H", self.y_h),
            ("Y_A", self.y_a),
            ("f_Pobs", self.f_p_obs),
            ("eta_g", self.eta_g),
            ("eta_h", self.eta_h),
            ("K_X", self.k_x),
        ] {
            if v > 1.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be <= 1")));
            }
        }
        let f_p = self.f_p();
        if !(f_p > 0.0 && f_p < 1.0) {
            return Err(Error::InvalidParameter(format!("derived f_P = {f_p} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Dissolved nitrogen gas: takes part in conservation, not in the state.
pub fn dinitrogen() -> Component {
    Component::new("S_N2", "Dissolved nitrogen gas", Basis::Nitrogen, Phase::Soluble)
        .with(Conserved::Cod, DINITROGEN_COD)
        .with(Conserved::Nitrogen, 1.0)
}

fn monod(s: f64, k: f64) -> f64 {
    s / (k + s)
}

fn inhibit(s: f64, k: f64) -> f64 {
    k / (k + s)
}

/// The eight ASM1 biokinetic processes.
///
/// S_O in the growth processes and S_NO (with the N2 release) in anoxic growth
/// are left unknown and completed from COD and N conservation.
pub fn asm1_matrix(params: &Asm1Params) -> Result<GujerMatrix> {
    use asm1::*;
    use Conserved::{Cod, Nitrogen};
    params.validate()?;
    let p = *params;
    let f_p = p.f_p();

    let growth_aerobic = KineticProcess::new("aero_growth_hetero", move |c: &[f64]| {
        p.mu_h * monod(c[S_S], p.k_s) * monod(c[S_O], p.k_oh) * c[X_BH]
    })
    .known("S_S", -1.0 / p.y_h)
    .known("X_BH", 1.0)
    .unknown("S_O")
    .known("S_NH", -p.i_xb)
    .known("S_ALK", -p.i_xb / 14.0)
    .conserving(&[Cod]);

    let growth_anoxic = KineticProcess::new("anox_growth_hetero", move |c: &[f64]| {
        p.mu_h * monod(c[S_S], p.k_s) * inhibit(c[S_O], p.k_oh) * monod(c[S_NO], p.k_no) * p.eta_g * c[X_BH]
    })
    .known("S_S", -1.0 / p.y_h)
    .known("X_BH", 1.0)
    .unknown("S_NO")
    .unknown("S_N2")
    .known("S_NH", -p.i_xb)
    .known("S_ALK", (1.0 - p.y_h) / (14.0 * 2.86 * p.y_h) - p.i_xb / 14.0)
    .conserving(&[Cod, Nitrogen]);

    let growth_auto = KineticProcess::new("aero_growth_auto", move |c: &[f64]| {
        p.mu_a * monod(c[S_NH], p.k_nh) * monod(c[S_O], p.k_oa) * c[X_BA]
    })
    .known("X_BA", 1.0)
    .unknown("S_O")
    .known("S_NO", 1.0 / p.y_a)
    .known("S_NH", -p.i_xb - 1.0 / p.y_a)
    .known("S_ALK", -p.i_xb / 14.0 - 1.0 / (7.0 * p.y_a))
    .conserving(&[Cod]);

    let decay = |id: &str, biomass: &str, rate: f64, index: usize| {
        KineticProcess::new(id, move |c: &[f64]| rate * c[index])
            .known(biomass, -1.0)
            .known("X_P", f_p)
            .known("X_S", 1.0 - f_p)
            .known("X_ND", p.i_xb - f_p * p.i_xp)
    };

    let ammonification = KineticProcess::new("ammonification", move |c: &[f64]| p.k_a * c[S_ND] * c[X_BH])
        .known("S_ND", -1.0)
        .known("S_NH", 1.0)
        .known("S_ALK", 1.0 / 14.0);

    let hydrolysis = KineticProcess::new("hydrolysis", move |c: &[f64]| hydrolysis_rate(&p, c))
        .known("X_S", -1.0)
        .known("S_S", 1.0);

    let hydrolysis_n = KineticProcess::new("hydrolysis_N", move |c: &[f64]| {
        if c[X_S] > 0.0 {
            hydrolysis_rate(&p, c) * c[X_ND] / c[X_S]
        } else {
            0.0
        }
    })
    .known("X_ND", -1.0)
    .known("S_ND", 1.0);

    let set = ComponentSet::asm1();
    let untracked = vec![dinitrogen()];
    let mut weights = weights_of(set.components().iter().chain(&untracked));
    let n = weights.entry(Nitrogen).or_default();
    for (id, v) in [("X_BH", p.i_xb), ("X_BA", p.i_xb), ("X_P", p.i_xp), ("X_I", p.i_xp)] {
        n.insert(id.to_string(), v);
    }
    GujerMatrix::with_weights(
        set,
        untracked,
        vec![
            growth_aerobic,
            growth_anoxic,
            growth_auto,
            decay("decay_hetero", "X_BH", p.b_h, X_BH),
            decay("decay_auto", "X_BA", p.b_a, X_BA),
            ammonification,
            hydrolysis,
            hydrolysis_n,
        ],
        weights,
    )
}

/// ρ₇ written as k_h·X_S·X_BH/(K_X·X_BH + X_S)·[...], which is the published
/// form with the X_BH = 0 singularity removed.
fn hydrolysis_rate(p: &Asm1Params, c: &[f64]) -> f64 {
    use asm1::*;
    let (xs, xbh) = (c[X_S], c[X_BH]);
    if xbh <= 0.0 || xs <= 0.0 {
        return 0.0;
    }
    let electron = monod(c[S_O], p.k_oh) + p.eta_h * inhibit(c[S_O], p.k_oh) * monod(c[S_NO], p.k_no);
    p.k_h * xs * xbh / (p.k_x * xbh + xs) * electron
}

/// Diffused aeration acting on S_O only: ρ = K_La·(DO_sat − S_O).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AerationProcess {
    /// d⁻¹
    pub k_la: f64,
    /// g-O₂·m⁻³
    pub do_sat: f64,
}

impl AerationProcess {
    pub fn new(k_la: f64, do_sat: f64) -> Result<Self> {
        if !(k_la >= 0.0) || !(do_sat > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "aeration needs K_La >= 0 and DO_sat > 0 (got {k_la}, {do_sat})"
            )));
        }
        Ok(Self { k_la, do_sat })
    }

    pub fn rate(&self, s_o: f64) -> f64 {
        self.k_la * (self.do_sat - s_o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_rate(_: &[f64]) -> f64 {
        0.0
    }

    fn cod_weights(entries: &[(&str, f64)]) -> Weights {
        let mut w = Weights::new();
        w.insert(Conserved::Cod, entries.iter().map(|(k, v)| (k.to_string(), *v)).collect());
        w
    }

    #[test]
    fn aerobic_growth_oxygen_demand() {
        let y_h = 0.67;
        let p = KineticProcess::new("growth", zero_rate)
            .known("S_S", -1.0 / y_h)
            .known("X_BH", 1.0)
            .unknown("S_O")
            .conserving(&[Conserved::Cod]);
        let w = cod_weights(&[("S_S", 1.0), ("X_BH", 1.0), ("S_O", -1.0)]);
        let done = complete_stoichiometry(&p, &w).unwrap();
        assert_relative_eq!(done.value("S_O"), -(1.0 - y_h) / y_h, epsilon = 1e-15);
        assert_relative_eq!(done.value("S_O"), -0.49254, epsilon = 1e-5);
        assert_eq!(done.value("S_S"), -1.0 / y_h);
        assert!(done.residual(Conserved::Cod, &w).abs() <= 1e-12);
    }

    #[test]
    fn anoxic_growth_nitrate_demand() {
        let y_h = 0.67;
        let p = KineticProcess::new("anoxic", zero_rate)
            .known("S_S", -1.0 / y_h)
            .known("X_BH", 1.0)
            .unknown("S_NO")
            .conserving(&[Conserved::Cod]);
        let w = cod_weights(&[("S_S", 1.0), ("X_BH", 1.0), ("S_NO", -2.86)]);
        let done = complete_stoichiometry(&p, &w).unwrap();
        assert_relative_eq!(done.value("S_NO"), -(1.0 - y_h) / (2.86 * y_h), epsilon = 1e-15);
        assert_relative_eq!(done.value("S_NO"), -0.17222, epsilon = 1e-5);
    }

    #[test]
    fn fully_known_process_is_unchanged() {
        let p = KineticProcess::new("x", zero_rate).known("S_S", 1.0);
        let done = complete_stoichiometry(&p, &Weights::new()).unwrap();
        assert_eq!(done.stoichiometry, p.stoichiometry);
    }

    #[test]
    fn ill_posed_and_singular() {
        let w = cod_weights(&[("S_S", 1.0), ("X_BH", 1.0)]);
        let under = KineticProcess::new("u", zero_rate).unknown("S_S").unknown("X_BH").conserving(&[Conserved::Cod]);
        assert!(matches!(complete_stoichiometry(&under, &w), Err(Error::IllPosedStoichiometry { .. })));
        let over = KineticProcess::new("o", zero_rate)
            .known("S_S", 1.0)
            .conserving(&[Conserved::Cod]);
        assert!(matches!(complete_stoichiometry(&over, &w), Err(Error::IllPosedStoichiometry { .. })));
        let singular = KineticProcess::new("s", zero_rate)
            .known("S_S", 1.0)
            .unknown("S_NH")
            .conserving(&[Conserved::Cod]);
        assert!(matches!(complete_stoichiometry(&singular, &w), Err(Error::SingularStoichiometry(_))));

        let mut w2 = w.clone();
        w2.insert(Conserved::Nitrogen, [("S_S".to_string(), 2.0), ("X_BH".to_string(), 2.0)].into());
        let coupled_singular = KineticProcess::new("c", zero_rate)
            .known("S_I", 1.0)
            .unknown("S_S")
            .unknown("X_BH")
            .conserving(&[Conserved::Cod, Conserved::Nitrogen]);
        assert!(matches!(
            complete_stoichiometry(&coupled_singular, &w2),
            Err(Error::SingularStoichiometry(_))
        ));
    }

    #[test]
    fn coupled_completion() {
        // anoxic growth with nitrate and N2 both unknown
        let m = asm1_matrix(&Asm1Params::default()).unwrap();
        let anoxic = &m.processes()[1];
        let y_h = 0.67;
        assert_relative_eq!(anoxic.value("S_NO"), -(1.0 - y_h) / (2.86 * y_h), epsilon = 1e-12);
        assert_relative_eq!(anoxic.value("S_N2"), (1.0 - y_h) / (2.86 * y_h), epsilon = 1e-12);
    }

    #[test]
    fn asm1_coefficients() {
        let p = Asm1Params::default();
        let m = asm1_matrix(&p).unwrap();
        assert_relative_eq!(m.processes()[0].value("S_O"), -(1.0 - 0.67) / 0.67, epsilon = 1e-12);
        assert_relative_eq!(m.processes()[2].value("S_O"), -(4.57 - 0.24) / 0.24, epsilon = 1e-12);
        assert_relative_eq!(m.processes()[2].value("S_O"), -18.0417, epsilon = 1e-4);
        assert_relative_eq!(p.f_p(), 0.0806, epsilon = 1e-4);
        assert_relative_eq!(m.processes()[3].value("X_ND"), 0.08 - p.f_p() * 0.06, epsilon = 1e-15);
        assert_relative_eq!(m.processes()[3].value("X_ND"), 0.07516, epsilon = 1e-5);
    }

    #[test]
    fn asm1_conservation() {
        let p = Asm1Params::default();
        let m = asm1_matrix(&p).unwrap();
        for j in 0..8 {
            for q in [Conserved::Cod, Conserved::Nitrogen, Conserved::Charge] {
                let r = m.conservation_residual(j, q, false);
                assert!(r.abs() <= 1e-10, "process {j} {q}: {r}");
            }
            if j != 1 {
                assert!(m.conservation_residual(j, Conserved::Nitrogen, true).abs() <= 1e-10);
            }
        }
        let lost = -m.conservation_residual(1, Conserved::Nitrogen, true);
        assert_relative_eq!(lost, m.processes()[1].value("S_N2"), epsilon = 1e-15);
        assert_relative_eq!(lost, (1.0 - p.y_h) / (2.86 * p.y_h), epsilon = 1e-15);
    }

    #[test]
    fn zero_biomass_gives_zero_rates() {
        let m = asm1_matrix(&Asm1Params::default()).unwrap();
        let mut c = [5.0; 13];
        c[asm1::X_BH] = 0.0;
        c[asm1::X_BA] = 0.0;
        assert!(m.rates(&c).iter().all(|&r| r == 0.0));
        assert!(m.production_rates(&c).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn ammonification_rate() {
        let m = asm1_matrix(&Asm1Params::default()).unwrap();
        let mut c = [0.0; 13];
        c[asm1::S_ND] = 1.0;
        c[asm1::X_BH] = 500.0;
        assert_relative_eq!(m.rates(&c)[5], 25.0, epsilon = 1e-12);
    }

    #[test]
    fn hydrolysis_guards() {
        let m = asm1_matrix(&Asm1Params::default()).unwrap();
        let mut c = [1.0; 13];
        c[asm1::X_S] = 0.0;
        let r = m.rates(&c);
        assert_eq!(r[6], 0.0);
        assert_eq!(r[7], 0.0);
        let mut c = [1.0; 13];
        c[asm1::X_BH] = 0.0;
        assert_eq!(m.rates(&c)[6], 0.0);
        // matches the published form away from the guards
        let p = Asm1Params::default();
        let c = [2.0, 3.0, 40.0, 60.0, 500.0, 30.0, 80.0, 1.5, 6.0, 2.0, 0.7, 3.0, 5.0];
        let ratio = c[asm1::X_S] / c[asm1::X_BH];
        let o = c[asm1::S_O];
        let expected = p.k_h * ratio / (p.k_x + ratio)
            * (o / (p.k_oh + o) + p.eta_h * p.k_oh / (p.k_oh + o) * c[asm1::S_NO] / (p.k_no + c[asm1::S_NO]))
            * c[asm1::X_BH];
        assert_relative_eq!(m.rates(&c)[6], expected, max_relative = 1e-13);
        assert_relative_eq!(m.rates(&c)[7], expected * 3.0 / 60.0, max_relative = 1e-13);
    }

    #[test]
    fn aeration() {
        let a = AerationProcess::new(240.0, 8.0).unwrap();
        assert_eq!(a.rate(2.0), 1440.0);
        assert!(a.rate(9.0) < 0.0);
        assert!(AerationProcess::new(-1.0, 8.0).is_err());
        assert!(AerationProcess::new(1.0, 0.0).is_err());
    }

    #[test]
    fn production_dimension() {
        let m = asm1_matrix(&Asm1Params::default()).unwrap();
        assert!(matches!(m.production_rates(&[0.0; 5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn parameter_access() {
        let mut p = Asm1Params::default();
        p.set("K_OH", 0.25).unwrap();
        assert_eq!(p.get("K_OH").unwrap(), 0.25);
        assert!(p.set("K_XX", 1.0).is_err());
        p.set("Y_H", 1.5).unwrap();
        assert!(p.validate().is_err());
        for name in Asm1Params::NAMES {
            assert!(Asm1Params::default().get(name).unwrap() > 0.0);
        }
    }
}
