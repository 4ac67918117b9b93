use crate::components::{mix, ComponentSet, WasteStream};
use crate::error::{Error, Result};

/// One reaction of a conversion reactor: a fraction of `reactant` is converted
/// into `products` with the given mass ratios (product per unit reactant).
#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub reactant: String,
    pub conversion: f64,
    pub products: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticUnit {
    Mixer,
    Splitter(Vec<f64>),
    ConversionReactor(Vec<Conversion>),
}

impl StaticUnit {
    pub fn validate(&self) -> Result<()> {
        match self {
            StaticUnit::Mixer => Ok(()),
            StaticUnit::Splitter(f) => {
                if f.is_empty() || f.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidUnit {
                        unit: "splitter".into(),
                        reason: format!("fractions {f:?} must lie in [0, 1]"),
                    });
                }
                let s: f64 = f.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidUnit {
                        unit: "splitter".into(),
                        reason: format!("fractions sum to {s}, not 1"),
                    });
                }
                Ok(())
            }
            StaticUnit::ConversionReactor(rx) => {
                for r in rx {
                    if !(0.0..=1.0).contains(&r.conversion) {
                        return Err(Error::InvalidUnit {
                            unit: "conversion reactor".into(),
                            reason: format!("conversion {} of `{}` outside [0, 1]", r.conversion, r.reactant),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn n_outlets(&self) -> usize {
        match self {
            StaticUnit::Splitter(f) => f.len(),
            _ => 1,
        }
    }

    /// Applies the unit's concentration transform to a single mixed inlet.
    pub(crate) fn transform(&self, components: &ComponentSet, c: &mut [f64]) {
        if let StaticUnit::ConversionReactor(rx) = self {
            for r in rx {
                let Some(i) = components.index_of(&r.reactant) else { continue };
                let converted = c[i] * r.conversion;
                c[i] -= converted;
                for (p, ratio) in &r.products {
                    if let Some(j) = components.index_of(p) {
                        c[j] += converted * ratio;
                    }
                }
            }
        }
    }
}

/// Equilibrium-mode evaluation of a static unit.
pub fn static_convert(unit: &StaticUnit, inlets: &[WasteStream]) -> Result<Vec<WasteStream>> {
    unit.validate()?;
    let mixed = mix(inlets)?;
    match unit {
        StaticUnit::Mixer => Ok(vec![mixed]),
        StaticUnit::Splitter(f) => Ok(f
            .iter()
            .map(|&x| {
                let mut s = mixed.clone();
                s.flow = mixed.flow * x;
                s
            })
            .collect()),
        StaticUnit::ConversionReactor(_) => {
            let set = mixed.components().clone();
            let mut c = mixed.concentrations().to_vec();
            unit.transform(&set, &mut c);
            Ok(vec![WasteStream::new(set, c, mixed.flow)?.with_temperature(mixed.temperature)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::asm1;
    use approx::assert_relative_eq;

    fn stream(q: f64) -> WasteStream {
        let mut c = vec![0.0; 13];
        c[asm1::S_S] = 69.5;
        c[asm1::S_I] = 30.0;
        c[asm1::S_NH] = 31.56;
        WasteStream::new(ComponentSet::asm1(), c, q).unwrap()
    }

    #[test]
    fn splitter_fractions() {
        let out = static_convert(&StaticUnit::Splitter(vec![0.6, 0.4]), &[stream(73784.0)]).unwrap();
        assert_relative_eq!(out[0].flow, 44270.4, max_relative = 1e-12);
        assert_relative_eq!(out[1].flow, 29513.6, max_relative = 1e-12);
        assert_eq!(out[0].concentrations(), stream(1.0).concentrations());
        assert_eq!(out[1].concentrations(), stream(1.0).concentrations());
    }

    #[test]
    fn splitter_must_sum_to_one() {
        assert!(static_convert(&StaticUnit::Splitter(vec![0.6, 0.5]), &[stream(1.0)]).is_err());
        assert!(static_convert(&StaticUnit::Splitter(vec![0.6, 0.4 + 5e-10]), &[stream(1.0)]).is_ok());
    }

    #[test]
    fn conversions() {
        let none = StaticUnit::ConversionReactor(vec![Conversion {
            reactant: "S_S".into(),
            conversion: 0.0,
            products: vec![("S_I".into(), 1.0)],
        }]);
        let out = static_convert(&none, &[stream(10.0)]).unwrap();
        assert_eq!(out[0].concentrations(), stream(10.0).concentrations());

        let full = StaticUnit::ConversionReactor(vec![Conversion {
            reactant: "S_S".into(),
            conversion: 1.0,
            products: vec![("S_I".into(), 1.0)],
        }]);
        let out = static_convert(&full, &[stream(10.0)]).unwrap();
        assert_eq!(out[0].concentration("S_S").unwrap(), 0.0);
        assert_relative_eq!(out[0].concentration("S_I").unwrap(), 99.5, max_relative = 1e-14);

        let absent = StaticUnit::ConversionReactor(vec![Conversion {
            reactant: "S_CH4".into(),
            conversion: 1.0,
            products: vec![],
        }]);
        let out = static_convert(&absent, &[stream(10.0)]).unwrap();
        assert_eq!(out[0].concentrations(), stream(10.0).concentrations());

        let bad = StaticUnit::ConversionReactor(vec![Conversion {
            reactant: "S_S".into(),
            conversion: 1.5,
            products: vec![],
        }]);
        assert!(static_convert(&bad, &[stream(10.0)]).is_err());
    }

    #[test]
    fn mixer_then_unit_splitter_is_identity() {
        let s = stream(123.0);
        let m = static_convert(&StaticUnit::Mixer, &[s.clone()]).unwrap();
        let out = static_convert(&StaticUnit::Splitter(vec![1.0]), &m).unwrap();
        assert_eq!(out[0].concentrations(), s.concentrations());
        assert_eq!(out[0].flow, s.flow);
    }
}
