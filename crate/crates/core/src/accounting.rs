//! Life-cycle impact totals and annualized cost.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowsheet::{Bsm1, Bsm1Settings, Metrics, SteadyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactIndicator {
    pub id: String,
    pub unit: String,
}

/// Something consumed or emitted, with characterization factors per
/// functional unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactItem {
    pub id: String,
    pub functional_unit: String,
    pub cf: BTreeMap<String, f64>,
    /// Offsets (credits) may carry negative quantities.
    #[serde(default)]
    pub offset: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Per {
    Day,
    Lifetime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Stream,
    Unit,
    #[default]
    Standalone,
}

/// What a linked quantity is computed from.
#[derive(Debug, Clone, Copy)]
pub struct LinkContext<'a> {
    pub settings: &'a Bsm1Settings,
    pub metrics: &'a Metrics,
}

pub type Link = Arc<dyn Fn(&LinkContext) -> f64 + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryEntry {
    pub item: String,
    pub quantity: f64,
    pub per: Per,
    /// Unit of `quantity`; must equal the item's functional unit.
    pub unit: String,
    #[serde(default)]
    pub source: SourceTag,
    /// Recomputes `quantity` from a simulation result.
    #[serde(skip)]
    pub link: Option<Link>,
}

impl fmt::Debug for InventoryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InventoryEntry")
            .field("item", &self.item)
            .field("quantity", &self.quantity)
            .field("per", &self.per)
            .field("unit", &self.unit)
            .field("source", &self.source)
            .field("linked", &self.link.is_some())
            .finish()
    }
}

impl InventoryEntry {
    pub fn fixed(item: &str, quantity: f64, per: Per, unit: &str) -> Self {
        Self {
            item: item.to_string(),
            quantity,
            per,
            unit: unit.to_string(),
            source: SourceTag::Standalone,
            link: None,
        }
    }

    pub fn linked(item: &str, per: Per, unit: &str, source: SourceTag, link: Link) -> Self {
        Self {
            item: item.to_string(),
            quantity: 0.0,
            per,
            unit: unit.to_string(),
            source,
            link: Some(link),
        }
    }

    /// Quantity over a horizon of `years`.
    pub fn over_horizon(&self, years: f64) -> f64 {
        match self.per {
            Per::Day => self.quantity * 365.0 * years,
            Per::Lifetime => self.quantity,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Inventory {
    pub entries: Vec<InventoryEntry>,
}

impl Inventory {
    pub fn new(entries: Vec<InventoryEntry>) -> Self {
        Self { entries }
    }

    /// Re-evaluates every linked quantity from a simulation result.
    pub fn refresh(&mut self, ctx: &LinkContext) {
        for e in &mut self.entries {
            if let Some(link) = &e.link {
                e.quantity = link(ctx);
            }
        }
    }

    pub fn extend(&mut self, other: Inventory) {
        self.entries.extend(other.entries);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcaResult {
    pub indicators: Vec<String>,
    /// Per indicator, aligned with `indicators`.
    pub totals: Vec<f64>,
    /// Per inventory entry: item id and its contribution to each indicator.
    pub breakdown: Vec<(String, Vec<f64>)>,
}

impl LcaResult {
    pub fn total(&self, indicator: &str) -> Option<f64> {
        self.indicators.iter().position(|i| i == indicator).map(|k| self.totals[k])
    }
}

/// Σ quantity over the horizon × characterization factor, per indicator.
/// The totals are the sums of the breakdown rows in inventory order.
pub fn lca_total(inventory: &Inventory, items: &[ImpactItem], indicators: &[ImpactIndicator], years: f64) -> Result<LcaResult> {
    if !(years.is_finite() && years > 0.0) {
        return Err(Error::Accounting(format!("horizon {years} yr must be > 0")));
    }
    let mut ids = HashSet::new();
    for ind in indicators {
        if !ids.insert(ind.id.as_str()) {
            return Err(Error::Accounting(format!("duplicate indicator `{}`", ind.id)));
        }
    }
    let mut totals = vec![0.0; indicators.len()];
    let mut breakdown = Vec::with_capacity(inventory.entries.len());
    for e in &inventory.entries {
        let item = items
            .iter()
            .find(|i| i.id == e.item)
            .ok_or_else(|| Error::Accounting(format!("unknown impact item `{}`", e.item)))?;
        if e.unit != item.functional_unit {
            return Err(Error::Accounting(format!(
                "`{}` quantity in {} but functional unit is {}",
                e.item, e.unit, item.functional_unit
            )));
        }
        if !e.quantity.is_finite() || (e.quantity < 0.0 && !item.offset) {
            return Err(Error::Accounting(format!(
                "`{}` quantity {} must be finite and >= 0 unless the item is an offset",
                e.item, e.quantity
            )));
        }
        let q = e.over_horizon(years);
        let mut row = Vec::with_capacity(indicators.len());
        for (k, ind) in indicators.iter().enumerate() {
            let cf = item.cf.get(&ind.id).copied().ok_or_else(|| {
                Error::Accounting(format!("`{}` has no characterization factor for `{}`", item.id, ind.id))
            })?;
            if !cf.is_finite() {
                return Err(Error::Accounting(format!("`{}` factor for `{}` is not finite", item.id, ind.id)));
            }
            let v = q * cf;
            totals[k] += v;
            row.push(v);
        }
        breakdown.push((e.item.clone(), row));
    }
    Ok(LcaResult {
        indicators: indicators.iter().map(|i| i.id.clone()).collect(),
        totals,
        breakdown,
    })
}

/// Capital recovery factor r(1+r)ⁿ/((1+r)ⁿ − 1), written with `expm1` so it
/// tends smoothly to 1/n as r → 0.
pub fn crf(r: f64, n: f64) -> f64 {
    if r == 0.0 {
        return 1.0 / n;
    }
    let g = (n * r.ln_1p()).exp_m1();
    r * (1.0 + g) / g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapitalItem {
    pub id: String,
    pub cost: f64,
    /// yr
    pub lifetime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeaInputs {
    pub capital: Vec<CapitalItem>,
    pub opex_per_day: f64,
    pub revenue_per_day: f64,
    /// Discount rate per year.
    pub r: f64,
    /// Analysis horizon, yr.
    pub n: f64,
    /// Tax rate on positive net income.
    pub income_tax: f64,
    pub population: Option<f64>,
}

impl Default for TeaInputs {
    fn default() -> Self {
        Self {
            capital: Vec::new(),
            opex_per_day: 0.0,
            revenue_per_day: 0.0,
            r: 0.05,
            n: 20.0,
            income_tax: 0.0,
            population: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeaResult {
    pub annualized_capital: f64,
    pub annual_opex: f64,
    pub annual_revenue: f64,
    pub tax: f64,
    pub net_annual_cost: f64,
    pub per_capita: Option<f64>,
    /// Annualized cost of each capital item.
    pub breakdown: Vec<(String, f64)>,
}

pub fn tea_annualize(inputs: &TeaInputs) -> Result<TeaResult> {
    let t = inputs;
    if !(t.r.is_finite() && t.r >= 0.0) {
        return Err(Error::Accounting(format!("discount rate {} must be >= 0", t.r)));
    }
    if !(t.n >= 1.0) {
        return Err(Error::Accounting(format!("horizon {} yr must be >= 1", t.n)));
    }
    if !(0.0..=1.0).contains(&t.income_tax) {
        return Err(Error::Accounting(format!("income tax {} outside [0, 1]", t.income_tax)));
    }
    if let Some(p) = t.population {
        if !(p > 0.0) {
            return Err(Error::Accounting(format!("population {p} must be > 0")));
        }
    }
    let mut breakdown = Vec::with_capacity(t.capital.len());
    for c in &t.capital {
        if !(c.lifetime > 0.0) {
            return Err(Error::Accounting(format!("`{}` lifetime {} yr must be > 0", c.id, c.lifetime)));
        }
        breakdown.push((c.id.clone(), c.cost * crf(t.r, c.lifetime)));
    }
    let annualized_capital = breakdown.iter().fold(0.0, |a, b| a + b.1);
    let annual_opex = 365.0 * t.opex_per_day;
    let annual_revenue = 365.0 * t.revenue_per_day;
    let taxable = annual_revenue - annual_opex - annualized_capital;
    let tax = if taxable > 0.0 { t.income_tax * taxable } else { 0.0 };
    let net_annual_cost = annualized_capital + annual_opex - annual_revenue + tax;
    Ok(TeaResult {
        annualized_capital,
        annual_opex,
        annual_revenue,
        tax,
        net_annual_cost,
        per_capita: t.population.map(|p| net_annual_cost / p),
        breakdown,
    })
}

/// Aeration electricity, kWh·d⁻¹, as a function of the plant settings.
pub type AerationEnergy = fn(&Bsm1Settings) -> f64;

/// (DO_sat/1800)·Σ V·K_La over the aerated tanks.
pub fn bsm1_aeration_energy(s: &Bsm1Settings) -> f64 {
    s.do_sat / 1800.0 * (s.v_o * s.k_la1 * 2.0 + s.v_o * s.k_la2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingPrices {
    /// per kWh
    pub electricity: f64,
    /// per kg TSS
    pub sludge_disposal: f64,
}

impl Default for OperatingPrices {
    fn default() -> Self {
        Self {
            electricity: 0.0,
            sludge_disposal: 0.0,
        }
    }
}

pub const AERATION_ITEM: &str = "aeration_electricity";
pub const SLUDGE_ITEM: &str = "sludge_disposal";

#[derive(Debug, Clone)]
pub struct OperatingBindings {
    pub inventory: Inventory,
    pub opex_per_day: f64,
}

/// Linked inventory entries for aeration electricity and sludge disposal,
/// evaluated at `ctx`, and the daily operating cost they imply.
pub fn bsm1_operating_bindings(ctx: &LinkContext, prices: &OperatingPrices, aeration: AerationEnergy) -> OperatingBindings {
    let ae: Link = Arc::new(move |c: &LinkContext| aeration(c.settings));
    let sludge: Link = Arc::new(|c: &LinkContext| c.metrics.sludge_production);
    let mut inventory = Inventory::new(vec![
        InventoryEntry::linked(AERATION_ITEM, Per::Day, "kWh", SourceTag::Unit, ae),
        InventoryEntry::linked(SLUDGE_ITEM, Per::Day, "kg", SourceTag::Stream, sludge),
    ]);
    inventory.refresh(ctx);
    let opex_per_day = prices.electricity * inventory.entries[0].quantity + prices.sludge_disposal * inventory.entries[1].quantity;
    OperatingBindings { inventory, opex_per_day }
}

/// Bindings at a steady state of `plant`; rejects a state whose scaled
/// derivative exceeds `tol`.
pub fn bsm1_bindings_at_steady(
    plant: &Bsm1,
    steady: &SteadyState,
    tol: f64,
    prices: &OperatingPrices,
    aeration: AerationEnergy,
) -> Result<OperatingBindings> {
    if !(steady.residual <= tol) {
        return Err(Error::NotConverged {
            t_max: steady.t,
            residual: steady.residual,
            tol,
        });
    }
    let metrics = plant.metrics(&steady.state)?;
    let ctx = LinkContext {
        settings: &plant.settings,
        metrics: &metrics,
    };
    Ok(bsm1_operating_bindings(&ctx, prices, aeration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gwp() -> ImpactIndicator {
        ImpactIndicator {
            id: "GWP".into(),
            unit: "kg CO2eq".into(),
        }
    }

    fn item(id: &str, cf: f64, offset: bool) -> ImpactItem {
        ImpactItem {
            id: id.into(),
            functional_unit: "u".into(),
            cf: [("GWP".to_string(), cf)].into(),
            offset,
        }
    }

    fn lifetime(item: &str, q: f64) -> InventoryEntry {
        InventoryEntry::fixed(item, q, Per::Lifetime, "u")
    }

    #[test]
    fn lca_examples() {
        let e = ImpactItem {
            functional_unit: "kWh".into(),
            ..item("e", 0.5, false)
        };
        let inv = Inventory::new(vec![InventoryEntry::fixed("e", 2.0, Per::Lifetime, "kWh")]);
        assert_eq!(lca_total(&inv, &[e], &[gwp()], 1.0).unwrap().totals, vec![1.0]);

        let empty = lca_total(&Inventory::default(), &[], &[gwp()], 1.0).unwrap();
        assert_eq!(empty.totals, vec![0.0]);

        let items = [item("a", 2.0, false), item("b", -0.5, true)];
        let inv = Inventory::new(vec![lifetime("a", 3.0), lifetime("b", 4.0)]);
        let r = lca_total(&inv, &items, &[gwp()], 1.0).unwrap();
        assert_eq!(r.totals, vec![4.0]);
        assert_eq!(r.breakdown, vec![("a".into(), vec![6.0]), ("b".into(), vec![-2.0])]);
    }

    #[test]
    fn daily_quantities_scale_with_horizon() {
        let inv = Inventory::new(vec![InventoryEntry::fixed("a", 1.0, Per::Day, "u")]);
        let r = lca_total(&inv, &[item("a", 2.0, false)], &[gwp()], 2.0).unwrap();
        assert_eq!(r.totals, vec![1460.0]);
    }

    #[test]
    fn lca_errors() {
        let other = ImpactIndicator {
            id: "EP".into(),
            unit: "kg N".into(),
        };
        let inv = Inventory::new(vec![lifetime("a", 1.0)]);
        assert!(lca_total(&inv, &[item("a", 1.0, false)], &[gwp(), other], 1.0).is_err());
        let wrong_unit = Inventory::new(vec![InventoryEntry::fixed("a", 1.0, Per::Day, "kg")]);
        assert!(lca_total(&wrong_unit, &[item("a", 1.0, false)], &[gwp()], 1.0).is_err());
        let negative = Inventory::new(vec![lifetime("a", -1.0)]);
        assert!(lca_total(&negative, &[item("a", 1.0, false)], &[gwp()], 1.0).is_err());
        assert!(lca_total(&inv, &[], &[gwp()], 1.0).is_err());
    }

    #[test]
    fn crf_examples() {
        assert_eq!(crf(0.0, 10.0), 0.1);
        assert_relative_eq!(crf(0.05, 10.0), 0.129_504_574_965_457_5, max_relative = 1e-12);
        assert!((crf(1e-12, 10.0) - 0.1).abs() <= 1e-9);
        // textbook form away from zero
        let (r, n) = (0.07f64, 15.0);
        let direct = r * (1.0 + r).powf(n) / ((1.0 + r).powf(n) - 1.0);
        assert_relative_eq!(crf(r, n), direct, max_relative = 1e-12);
    }

    fn capital(cost: f64, lifetime: f64) -> TeaInputs {
        TeaInputs {
            capital: vec![CapitalItem {
                id: "tank".into(),
                cost,
                lifetime,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn tea_examples() {
        let r = tea_annualize(&TeaInputs { r: 0.0, ..capital(100.0, 10.0) }).unwrap();
        assert_eq!(r.annualized_capital, 10.0);
        let r = tea_annualize(&TeaInputs { r: 0.05, ..capital(100.0, 10.0) }).unwrap();
        assert_relative_eq!(r.annualized_capital, 12.95, epsilon = 0.005);
        let r = tea_annualize(&TeaInputs {
            opex_per_day: 10.0,
            revenue_per_day: 10.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.net_annual_cost, 0.0);
        assert!(tea_annualize(&capital(100.0, 0.0)).is_err());
        assert!(tea_annualize(&TeaInputs { n: 0.5, ..Default::default() }).is_err());
        assert!(tea_annualize(&TeaInputs { r: -0.1, ..Default::default() }).is_err());
    }

    #[test]
    fn income_tax_only_on_positive_income() {
        let profitable = TeaInputs {
            revenue_per_day: 2.0,
            opex_per_day: 1.0,
            income_tax: 0.25,
            population: Some(73.0),
            ..Default::default()
        };
        let r = tea_annualize(&profitable).unwrap();
        assert_eq!(r.tax, 0.25 * 365.0);
        assert_eq!(r.net_annual_cost, -365.0 + 0.25 * 365.0);
        assert_eq!(r.per_capita, Some(r.net_annual_cost / 73.0));
        let losing = TeaInputs {
            revenue_per_day: 1.0,
            opex_per_day: 2.0,
            ..profitable
        };
        assert_eq!(tea_annualize(&losing).unwrap().tax, 0.0);
    }

    fn metrics(sludge: f64) -> Metrics {
        Metrics {
            cod: 0.0,
            bod5: 0.0,
            tss: 0.0,
            tn: 0.0,
            tkn: 0.0,
            sludge_production: sludge,
            srt: 0.0,
        }
    }

    #[test]
    fn aeration_energy_examples() {
        let s = Bsm1Settings::default();
        let expected = 8.0 / 1800.0 * (1333.0 * 240.0 + 1333.0 * 240.0 + 1333.0 * 84.0);
        assert_relative_eq!(bsm1_aeration_energy(&s), expected, max_relative = 1e-15);
        assert!((bsm1_aeration_energy(&s) - 3341.39).abs() < 0.01);
        let off = Bsm1Settings {
            k_la1: 0.0,
            k_la2: 0.0,
            ..Default::default()
        };
        assert_eq!(bsm1_aeration_energy(&off), 0.0);
        let half = Bsm1Settings {
            k_la1: 120.0,
            k_la2: 42.0,
            ..Default::default()
        };
        assert_relative_eq!(bsm1_aeration_energy(&half), 0.5 * bsm1_aeration_energy(&s), max_relative = 1e-15);
    }

    #[test]
    fn linked_items_follow_their_sources() {
        let mut s = Bsm1Settings::default();
        let m = metrics(2400.0);
        let prices = OperatingPrices {
            electricity: 0.1,
            sludge_disposal: 0.05,
        };
        let b = bsm1_operating_bindings(&LinkContext { settings: &s, metrics: &m }, &prices, bsm1_aeration_energy);
        assert_relative_eq!(b.opex_per_day, 0.1 * bsm1_aeration_energy(&s) + 0.05 * 2400.0, max_relative = 1e-15);
        let mut inv = b.inventory.clone();
        let before: Vec<f64> = inv.entries.iter().map(|e| e.quantity).collect();
        // a setting neither quantity depends on
        s.q_intr *= 1.1;
        inv.refresh(&LinkContext { settings: &s, metrics: &m });
        assert_eq!(inv.entries.iter().map(|e| e.quantity).collect::<Vec<_>>(), before);
        s.k_la2 = 100.0;
        let m2 = metrics(2500.0);
        inv.refresh(&LinkContext { settings: &s, metrics: &m2 });
        assert_ne!(inv.entries[0].quantity, before[0]);
        assert_eq!(inv.entries[1].quantity, 2500.0);
    }

    #[test]
    fn config_sections_parse() {
        let items: Vec<ImpactItem> = serde_json::from_str(
            r#"[{"id": "electricity", "functional_unit": "kWh", "cf": {"GWP": 0.4}}]"#,
        )
        .unwrap();
        assert_eq!(items[0].cf["GWP"], 0.4);
        let t: TeaInputs = serde_json::from_str(r#"{"r": 0.03, "capital": [{"id": "a", "cost": 5, "lifetime": 4}]}"#).unwrap();
        assert_eq!((t.r, t.n), (0.03, 20.0));
        assert!(serde_json::from_str::<TeaInputs>(r#"{"rate": 0.03}"#).is_err());
    }

    proptest! {
        #[test]
        fn breakdown_sums_to_total(q in prop::collection::vec(0.0f64..1e6, 0..30), cf in prop::collection::vec(-10.0f64..10.0, 30)) {
            let items: Vec<ImpactItem> = (0..q.len()).map(|i| item(&format!("i{i}"), cf[i], true)).collect();
            let inv = Inventory::new(q.iter().enumerate().map(|(i, &v)| lifetime(&format!("i{i}"), v)).collect());
            let r = lca_total(&inv, &items, &[gwp()], 1.0).unwrap();
            let sum: f64 = r.breakdown.iter().map(|b| b.1[0]).sum();
            let scale = r.breakdown.iter().map(|b| b.1[0].abs()).sum::<f64>().max(1e-300);
            prop_assert!((sum - r.totals[0]).abs() <= 1e-12 * scale);
        }

        #[test]
        fn lca_linear(q in 0.0f64..1e4, cf in -5.0f64..5.0, k in 0.0f64..10.0) {
            let run = |q: f64, cf: f64| lca_total(&Inventory::new(vec![lifetime("a", q)]), &[item("a", cf, true)], &[gwp()], 1.0).unwrap().totals[0];
            prop_assert!((run(k * q, cf) - k * run(q, cf)).abs() <= 1e-9 * (1.0 + run(k * q, cf).abs()));
            prop_assert!((run(q, k * cf) - k * run(q, cf)).abs() <= 1e-9 * (1.0 + run(q, k * cf).abs()));
        }

        #[test]
        fn crf_continuous_at_zero(n in 1.0f64..100.0, r in 0.0f64..1e-9) {
            prop_assert!((crf(r, n) - 1.0 / n).abs() <= 1e-9);
        }
    }
}
