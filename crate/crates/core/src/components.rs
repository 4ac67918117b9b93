//! Component schema, waste streams and composite bulk properties.
//!
//! Every state vector in the crate is laid out in the order of a
//! [`ComponentSet`]; the default set is the 13 ASM1 state variables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round-off tolerance for negative concentrations produced by the integrator.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Quantities tracked by conservation checks and stoichiometry completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Conserved {
    #[serde(rename = "COD")]
    Cod,
    #[serde(rename = "N")]
    Nitrogen,
    #[serde(rename = "charge")]
    Charge,
}

impl fmt::Display for Conserved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conserved::Cod => "COD",
            Conserved::Nitrogen => "N",
            Conserved::Charge => "charge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Soluble,
    Particulate,
}

/// Measurement basis of a state variable (all per m³).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "g-COD")]
    Cod,
    #[serde(rename = "g-N")]
    Nitrogen,
    #[serde(rename = "g-O2")]
    Oxygen,
    #[serde(rename = "mol")]
    Mole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub basis: Basis,
    pub phase: Phase,
    /// Amount of each conserved quantity per unit of the state variable.
    #[serde(default)]
    pub content: BTreeMap<Conserved, f64>,
}

impl Component {
    pub fn new(id: &str, description: &str, basis: Basis, phase: Phase) -> Self {
        Self {
            id: id.to_string(),
            description: description.to_string(),
            basis,
            phase,
            content: BTreeMap::new(),
        }
    }

    pub fn with(mut self, quantity: Conserved, weight: f64) -> Self {
        self.content.insert(quantity, weight);
        self
    }

    pub fn weight(&self, quantity: Conserved) -> f64 {
        self.content.get(&quantity).copied().unwrap_or(0.0)
    }

    pub fn is_particulate(&self) -> bool {
        self.phase == Phase::Particulate
    }
}

/// Ordered component schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentSet {
    components: Vec<Component>,
}

impl ComponentSet {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("component set"));
        }
        for (i, c) in components.iter().enumerate() {
            if components[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::ComponentSetMismatch(format!(
                    "duplicate component id `{}`",
                    c.id
                )));
            }
            if c.content.values().any(|w| !w.is_finite()) {
                return Err(Error::ComponentSetMismatch(format!(
                    "non-finite content weight on `{}`",
                    c.id
                )));
            }
            if c.basis == Basis::Cod && c.weight(Conserved::Cod) != 1.0 {
                return Err(Error::ComponentSetMismatch(format!(
                    "COD-basis component `{}` must carry COD weight 1",
                    c.id
                )));
            }
        }
        Ok(Self { components })
    }

    /// The 13 ASM1 state variables in their fixed order.
    pub fn asm1() -> Arc<ComponentSet> {
        static SET: OnceLock<Arc<ComponentSet>> = OnceLock::new();
        SET.get_or_init(|| Arc::new(asm1_components())).clone()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn get(&self, index: usize) -> &Component {
        &self.components[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.components.iter().map(|c| c.id.as_str())
    }

    /// Weight vector of a conserved quantity aligned to the set.
    pub fn weights(&self, quantity: Conserved) -> Vec<f64> {
        self.components.iter().map(|c| c.weight(quantity)).collect()
    }

    /// Same ids in the same order.
    pub fn same_layout(&self, other: &ComponentSet) -> bool {
        self.len() == other.len() && self.ids().zip(other.ids()).all(|(a, b)| a == b)
    }

    pub fn is_asm1(&self) -> bool {
        self.same_layout(&ComponentSet::asm1())
    }
}

/// Indices into the default ASM1 layout.
pub mod asm1 {
    pub const S_I: usize = 0;
    pub const S_S: usize = 1;
    pub const X_I: usize = 2;
    pub const X_S: usize = 3;
    pub const X_BH: usize = 4;
    pub const X_BA: usize = 5;
    pub const X_P: usize = 6;
    pub const S_O: usize = 7;
    pub const S_NO: usize = 8;
    pub const S_NH: usize = 9;
    pub const S_ND: usize = 10;
    pub const X_ND: usize = 11;
    pub const S_ALK: usize = 12;
    pub const N: usize = 13;

    pub const IDS: [&str; N] = [
        "S_I", "S_S", "X_I", "X_S", "X_BH", "X_BA", "X_P", "S_O", "S_NO", "S_NH", "S_ND", "X_ND",
        "S_ALK",
    ];
}

/// Oxygen equivalent of nitrate relative to ammonium, g-COD per g-N.
pub const NITRATE_COD: f64 = -4.57;
/// Oxygen equivalent of N2 relative to ammonium; nitrate to N2 then frees 2.86.
pub const DINITROGEN_COD: f64 = -1.71;

fn asm1_components() -> ComponentSet {
    use Basis::{Mole, Nitrogen, Oxygen};
    use Conserved::Charge;
    use Phase::*;
    let cod = |id, d, p| Component::new(id, d, Basis::Cod, p).with(Conserved::Cod, 1.0);
    let components = vec![
        cod("S_I", "Soluble inert organic matter", Soluble),
        cod("S_S", "Readily biodegradable substrate", Soluble),
        cod("X_I", "Particulate inert organic matter", Particulate),
        cod("X_S", "Slowly biodegradable substrate", Particulate),
        cod("X_BH", "Active heterotrophic biomass", Particulate),
        cod("X_BA", "Active autotrophic biomass", Particulate),
        cod("X_P", "Particulate products arising from biomass decay", Particulate),
        Component::new("S_O", "Dissolved oxygen", Oxygen, Soluble).with(Conserved::Cod, -1.0),
        Component::new("S_NO", "Nitrate and nitrite nitrogen", Nitrogen, Soluble)
            .with(Conserved::Cod, NITRATE_COD)
            .with(Conserved::Nitrogen, 1.0)
            .with(Charge, -1.0 / 14.0),
        Component::new("S_NH", "Ammonium nitrogen", Nitrogen, Soluble)
            .with(Conserved::Nitrogen, 1.0)
            .with(Charge, 1.0 / 14.0),
        Component::new("S_ND", "Soluble biodegradable organic nitrogen", Nitrogen, Soluble)
            .with(Conserved::Nitrogen, 1.0),
        Component::new("X_ND", "Particulate biodegradable organic nitrogen", Nitrogen, Particulate)
            .with(Conserved::Nitrogen, 1.0),
        Component::new("S_ALK", "Alkalinity, assumed to be bicarbonate", Mole, Soluble)
            .with(Charge, -1.0),
    ];
    ComponentSet::new(components).expect("ASM1 component set is valid")
}

/// Composite-variable parameters. Defaults follow the ASM1 baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub f_ss_cod: f64,
    pub i_xb: f64,
    pub i_xp: f64,
    pub f_p: f64,
}

impl Default for CompositeParams {
    fn default() -> Self {
        Self {
            f_ss_cod: 0.75,
            i_xb: 0.08,
            i_xp: 0.06,
            f_p: 0.21 * (1.0 - 0.67) / (1.0 - 0.67 * 0.21),
        }
    }
}

impl CompositeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_SS_COD", self.f_ss_cod),
            ("i_XB", self.i_xb),
            ("i_XP", self.i_xp),
            ("f_P", self.f_p),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Composite {
    #[serde(rename = "COD")]
    Cod,
    #[serde(rename = "BOD5")]
    Bod5,
    #[serde(rename = "TKN")]
    Tkn,
    #[serde(rename = "TN")]
    Tn,
    #[serde(rename = "TSS")]
    Tss,
}

impl Composite {
    pub const ALL: [Composite; 5] = [
        Composite::Cod,
        Composite::Bod5,
        Composite::Tkn,
        Composite::Tn,
        Composite::Tss,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Composite::Cod => "COD",
            Composite::Bod5 => "BOD5",
            Composite::Tkn => "TKN",
            Composite::Tn => "TN",
            Composite::Tss => "TSS",
        }
    }
}

impl FromStr for Composite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Composite::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownComposite(s.to_string()))
    }
}

/// Composite of a concentration vector in the ASM1 layout (no layout check).
pub fn composite_of(c: &[f64], which: Composite, p: &CompositeParams) -> f64 {
    use asm1::*;
    match which {
        Composite::Cod => c[S_S] + c[S_I] + c[X_S] + c[X_I] + c[X_BH] + c[X_BA] + c[X_P],
        Composite::Bod5 => 0.25 * (c[S_S] + c[X_S] + (1.0 - p.f_p) * (c[X_BH] + c[X_BA])),
        Composite::Tss => p.f_ss_cod * (c[X_I] + c[X_S] + c[X_BH] + c[X_BA] + c[X_P]),
        Composite::Tkn => {
            c[S_NH] + c[S_ND] + c[X_ND] + p.i_xb * (c[X_BH] + c[X_BA]) + p.i_xp * (c[X_P] + c[X_I])
        }
        Composite::Tn => composite_of(c, Composite::Tkn, p) + c[S_NO],
    }
}

/// A waste stream: concentrations aligned to its component set plus flow.
#[derive(Debug, Clone, PartialEq)]
pub struct WasteStream {
    components: Arc<ComponentSet>,
    concentrations: Vec<f64>,
    /// m³·d⁻¹
    pub flow: f64,
    /// K
    pub temperature: f64,
    /// Pa
    pub pressure: f64,
}

pub const STANDARD_TEMPERATURE: f64 = 293.15;
pub const STANDARD_PRESSURE: f64 = 101_325.0;

impl WasteStream {
    /// Builds a stream, zeroing round-off negatives in `[-1e-9, 0)`.
    pub fn new(components: Arc<ComponentSet>, mut concentrations: Vec<f64>, flow: f64) -> Result<Self> {
        if concentrations.len() != components.len() {
            return Err(Error::Dimension {
                expected: components.len(),
                got: concentrations.len(),
            });
        }
        if !(flow >= 0.0) || !flow.is_finite() {
            return Err(Error::InvalidStream(format!("flow {flow} must be finite and >= 0")));
        }
        clamp_round_off(&components, &mut concentrations)?;
        Ok(Self {
            components,
            concentrations,
            flow,
            temperature: STANDARD_TEMPERATURE,
            pressure: STANDARD_PRESSURE,
        })
    }

    pub fn zeros(components: Arc<ComponentSet>, flow: f64) -> Result<Self> {
        let n = components.len();
        Self::new(components, vec![0.0; n], flow)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn components(&self) -> &Arc<ComponentSet> {
        &self.components
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }

    pub fn concentration(&self, id: &str) -> Option<f64> {
        self.components.index_of(id).map(|i| self.concentrations[i])
    }

    pub fn set_concentration(&mut self, id: &str, value: f64) -> Result<()> {
        let i = self
            .components
            .index_of(id)
            .ok_or_else(|| Error::ComponentSetMismatch(format!("no component `{id}`")))?;
        if value < -NEGATIVE_TOLERANCE || !value.is_finite() {
            return Err(Error::NegativeConcentration {
                component: id.to_string(),
                value,
            });
        }
        self.concentrations[i] = value.max(0.0);
        Ok(())
    }

    pub fn composite(&self, which: Composite, params: &CompositeParams) -> Result<f64> {
        composite(self, which, params)
    }

    /// Mass flow of one component, kg·d⁻¹.
    pub fn mass_flow(&self, id: &str) -> Result<f64> {
        let c = self
            .concentration(id)
            .ok_or_else(|| Error::ComponentSetMismatch(format!("no component `{id}`")))?;
        Ok(mass_flow(c, self.flow))
    }

    /// Mass flows of every component, kg·d⁻¹.
    pub fn mass_flows(&self) -> Vec<f64> {
        self.concentrations
            .iter()
            .map(|&c| mass_flow(c, self.flow))
            .collect()
    }

    pub fn composite_mass_flow(&self, which: Composite, params: &CompositeParams) -> Result<f64> {
        Ok(mass_flow(self.composite(which, params)?, self.flow))
    }
}

/// Values in `[-1e-9, 0)` become 0; anything lower is an error.
pub fn clamp_round_off(components: &ComponentSet, c: &mut [f64]) -> Result<()> {
    for (i, v) in c.iter_mut().enumerate() {
        if !v.is_finite() || *v < -NEGATIVE_TOLERANCE {
            return Err(Error::NegativeConcentration {
                component: components.get(i).id.clone(),
                value: *v,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Composite bulk property of an ASM1 stream.
pub fn composite(stream: &WasteStream, which: Composite, params: &CompositeParams) -> Result<f64> {
    if !stream.components.is_asm1() {
        return Err(Error::ComponentSetMismatch(
            "composites are defined on the ASM1 component set".into(),
        ));
    }
    Ok(composite_of(&stream.concentrations, which, params))
}

/// concentration (g·m⁻³) × flow (m³·d⁻¹) → kg·d⁻¹
pub fn mass_flow(concentration: f64, flow: f64) -> f64 {
    concentration * flow / 1000.0
}

/// Flow-weighted mixing of streams on the same component set.
pub fn mix(streams: &[WasteStream]) -> Result<WasteStream> {
    let first = streams.first().ok_or(Error::Empty("mix needs at least one stream"))?;
    if streams.len() == 1 {
        return Ok(first.clone());
    }
    let set = first.components.clone();
    let n = set.len();
    let mut total = 0.0;
    let mut loads = vec![0.0; n];
    let mut heat = 0.0;
    let mut pressure = f64::INFINITY;
    for s in streams {
        if !Arc::ptr_eq(&s.components, &set) && !s.components.same_layout(&set) {
            return Err(Error::ComponentSetMismatch("cannot mix streams on different component sets".into()));
        }
        total += s.flow;
        heat += s.flow * s.temperature;
        pressure = pressure.min(s.pressure);
        for (l, c) in loads.iter_mut().zip(&s.concentrations) {
            *l += s.flow * c;
        }
    }
    let (concentrations, temperature) = if total > 0.0 {
        (loads.iter().map(|l| l / total).collect(), heat / total)
    } else {
        let m = streams.len() as f64;
        let mut c = vec![0.0; n];
        for s in streams {
            for (a, b) in c.iter_mut().zip(&s.concentrations) {
                *a += b / m;
            }
        }
        (c, streams.iter().map(|s| s.temperature).sum::<f64>() / m)
    };
    Ok(WasteStream {
        components: set,
        concentrations,
        flow: total,
        temperature,
        pressure,
    })
}

/// Flow-weighted mean into `out` from `(flow, concentrations)` pairs.
pub(crate) fn mix_into<'a>(inputs: impl Iterator<Item = (f64, &'a [f64])>, out: &mut [f64]) -> f64 {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut total = 0.0;
    for (q, c) in inputs {
        total += q;
        for (o, v) in out.iter_mut().zip(c) {
            *o += q * v;
        }
    }
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn table_s1_influent() -> WasteStream {
        let mut c = vec![0.0; asm1::N];
        c[asm1::S_I] = 30.0;
        c[asm1::S_S] = 69.5;
        c[asm1::X_I] = 51.2;
        c[asm1::X_S] = 202.32;
        c[asm1::X_BH] = 28.17;
        c[asm1::S_NH] = 31.56;
        c[asm1::S_ND] = 6.95;
        c[asm1::X_ND] = 10.59;
        c[asm1::S_ALK] = 7.0;
        WasteStream::new(ComponentSet::asm1(), c, 18446.0).unwrap()
    }

    #[test]
    fn asm1_layout() {
        let set = ComponentSet::asm1();
        assert_eq!(set.ids().collect::<Vec<_>>(), asm1::IDS.to_vec());
        assert!(set.components()[..7]
            .iter()
            .all(|c| c.basis != Basis::Cod || c.weight(Conserved::Cod) == 1.0));
        let tss: Vec<_> = set.components().iter().filter(|c| c.is_particulate()).map(|c| c.id.as_str()).collect();
        assert_eq!(tss, ["X_I", "X_S", "X_BH", "X_BA", "X_P", "X_ND"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let c = Component::new("A", "", Basis::Mole, Phase::Soluble);
        assert!(ComponentSet::new(vec![c.clone(), c]).is_err());
        let bad = Component::new("B", "", Basis::Cod, Phase::Soluble);
        assert!(ComponentSet::new(vec![bad]).is_err());
    }

    #[test]
    fn influent_composites() {
        let inf = table_s1_influent();
        let p = CompositeParams::default();
        assert_relative_eq!(inf.composite(Composite::Cod, &p).unwrap(), 381.19, epsilon = 1e-9);
        assert_relative_eq!(inf.composite(Composite::Tkn, &p).unwrap(), 54.4256, epsilon = 1e-9);
        assert_relative_eq!(inf.composite(Composite::Tss, &p).unwrap(), 211.2675, epsilon = 1e-9);
        assert_relative_eq!(inf.composite(Composite::Tn, &p).unwrap(), 54.4256, epsilon = 1e-9);
    }

    #[test]
    fn zero_stream_composites() {
        let s = WasteStream::zeros(ComponentSet::asm1(), 10.0).unwrap();
        for which in Composite::ALL {
            assert_eq!(s.composite(which, &CompositeParams::default()).unwrap(), 0.0);
        }
    }

    #[test]
    fn composite_names() {
        assert_eq!("tkn".parse::<Composite>().unwrap(), Composite::Tkn);
        assert!(matches!("VSS".parse::<Composite>(), Err(Error::UnknownComposite(_))));
    }

    #[test]
    fn composite_needs_asm1() {
        let set = Arc::new(ComponentSet::new(vec![Component::new("A", "", Basis::Mole, Phase::Soluble)]).unwrap());
        let s = WasteStream::new(set, vec![1.0], 1.0).unwrap();
        assert!(matches!(
            s.composite(Composite::Cod, &CompositeParams::default()),
            Err(Error::ComponentSetMismatch(_))
        ));
    }

    #[test]
    fn mass_flows() {
        let inf = table_s1_influent();
        let p = CompositeParams::default();
        assert_relative_eq!(inf.composite_mass_flow(Composite::Cod, &p).unwrap(), 7031.43074, epsilon = 1e-6);
        assert_relative_eq!(inf.mass_flow("S_NH").unwrap(), 582.15576, epsilon = 1e-9);
        let mut dry = inf.clone();
        dry.flow = 0.0;
        assert_eq!(dry.mass_flow("S_NH").unwrap(), 0.0);
    }

    #[test]
    fn mixing() {
        let inf = table_s1_influent();
        assert_eq!(mix(std::slice::from_ref(&inf)).unwrap(), inf);

        let set = ComponentSet::asm1();
        let a = WasteStream::zeros(set.clone(), 5.0).unwrap();
        let mut b = a.clone();
        b.set_concentration("S_S", 10.0).unwrap();
        let m = mix(&[a, b]).unwrap();
        assert_eq!(m.concentration("S_S").unwrap(), 5.0);
        assert_eq!(m.flow, 10.0);

        let rww = WasteStream::zeros(set, 55338.0).unwrap();
        let m = mix(&[inf, rww]).unwrap();
        assert_relative_eq!(m.concentration("S_NH").unwrap(), 18446.0 * 31.56 / 73784.0, epsilon = 1e-12);
        assert_relative_eq!(m.concentration("S_NH").unwrap(), 7.89, epsilon = 1e-12);
        assert!(mix(&[]).is_err());
    }

    #[test]
    fn mixing_rejects_other_sets() {
        let set = Arc::new(ComponentSet::new(vec![Component::new("A", "", Basis::Mole, Phase::Soluble)]).unwrap());
        let a = WasteStream::new(set, vec![1.0], 1.0).unwrap();
        assert!(mix(&[a, table_s1_influent()]).is_err());
    }

    #[test]
    fn negative_concentrations() {
        let set = ComponentSet::asm1();
        let mut c = vec![0.0; 13];
        c[3] = -5e-10;
        let s = WasteStream::new(set.clone(), c.clone(), 1.0).unwrap();
        assert_eq!(s.concentrations()[3], 0.0);
        c[3] = -1e-6;
        assert!(matches!(
            WasteStream::new(set.clone(), c, 1.0),
            Err(Error::NegativeConcentration { .. })
        ));
        assert!(WasteStream::zeros(set, -1.0).is_err());
    }
}
