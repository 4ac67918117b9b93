use std::sync::Arc;

use crate::components::{ComponentSet, WasteStream};
use crate::error::{Error, Result};
use crate::kinetics::{AerationProcess, GujerMatrix};

/// Constant-volume continuous stirred tank reactor.
#[derive(Debug, Clone)]
pub struct Cstr {
    /// m³
    pub volume: f64,
    pub kinetics: Option<Arc<GujerMatrix>>,
    aeration: Option<(AerationProcess, usize)>,
}

impl Cstr {
    pub fn new(volume: f64) -> Result<Self> {
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidUnit {
                unit: "CSTR".into(),
                reason: format!("volume {volume} must be > 0"),
            });
        }
        Ok(Self {
            volume,
            kinetics: None,
            aeration: None,
        })
    }

    pub fn with_kinetics(mut self, matrix: Arc<GujerMatrix>) -> Self {
        self.kinetics = Some(matrix);
        self
    }

    /// Attaches aeration on the component `S_O` of `components`.
    pub fn with_aeration(mut self, aeration: AerationProcess, components: &ComponentSet) -> Result<Self> {
        let i = components.index_of("S_O").ok_or_else(|| Error::InvalidUnit {
            unit: "CSTR".into(),
            reason: "aeration needs an S_O component".into(),
        })?;
        self.aeration = Some((aeration, i));
        Ok(self)
    }

    pub fn aeration(&self) -> Option<&AerationProcess> {
        self.aeration.as_ref().map(|(a, _)| a)
    }

    /// dC/dt = (Q/V)(C_in − C) + r(C) + aeration on S_O.
    pub fn derivative(&self, inflow: &WasteStream, state: &[f64]) -> Result<Vec<f64>> {
        let n = inflow.concentrations().len();
        if state.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: state.len(),
            });
        }
        if let Some(m) = &self.kinetics {
            if !m.components().same_layout(inflow.components()) {
                return Err(Error::ComponentSetMismatch("CSTR kinetics and inflow differ".into()));
            }
        }
        let mut out = vec![0.0; n];
        let mut scratch = Vec::with_capacity(n);
        self.derivative_into(inflow.flow, inflow.concentrations(), state, &mut scratch, &mut out);
        Ok(out)
    }

    pub(crate) fn derivative_into(&self, q: f64, c_in: &[f64], state: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let d = q / self.volume;
        for ((o, ci), c) in out.iter_mut().zip(c_in).zip(state) {
            *o = d * (ci - c);
        }
        if let Some(m) = &self.kinetics {
            scratch.clear();
            scratch.extend(state.iter().map(|&c| c.max(0.0)));
            m.add_production_rates(scratch, out);
        }
        if let Some((a, i)) = &self.aeration {
            out[*i] += a.rate(state[*i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::asm1;
    use crate::kinetics::{asm1_matrix, Asm1Params};

    #[test]
    fn equilibrium_without_kinetics() {
        let set = ComponentSet::asm1();
        let c: Vec<f64> = (0..13).map(|i| i as f64 + 0.5).collect();
        let inflow = WasteStream::new(set, c.clone(), 100.0).unwrap();
        let r = Cstr::new(50.0).unwrap();
        assert!(r.derivative(&inflow, &c).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn dilution_rate() {
        let set = ComponentSet::asm1();
        let mut c = vec![0.0; 13];
        c[asm1::S_I] = 10.0;
        let inflow = WasteStream::new(set, c, 100.0).unwrap();
        let r = Cstr::new(100.0).unwrap();
        let d = r.derivative(&inflow, &[0.0; 13]).unwrap();
        assert_eq!(d[asm1::S_I], 10.0);
    }

    #[test]
    fn anoxic_tank_has_no_oxygen_transfer() {
        let set = ComponentSet::asm1();
        let m = Arc::new(asm1_matrix(&Asm1Params::default()).unwrap());
        let state = [30.0, 5.0, 1000.0, 100.0, 500.0, 100.0, 100.0, 2.0, 20.0, 2.0, 1.0, 1.0, 7.0];
        let inflow = WasteStream::new(set.clone(), state.to_vec(), 1000.0).unwrap();
        let anoxic = Cstr::new(1000.0).unwrap().with_kinetics(m.clone());
        let aerated = anoxic
            .clone()
            .with_aeration(AerationProcess::new(240.0, 8.0).unwrap(), &set)
            .unwrap();
        let a = anoxic.derivative(&inflow, &state).unwrap();
        let b = aerated.derivative(&inflow, &state).unwrap();
        assert_eq!(b[asm1::S_O] - a[asm1::S_O], 240.0 * 6.0);
        let r = m.production_rates(&state).unwrap();
        assert_eq!(a[asm1::S_O], r[asm1::S_O]);
    }

    #[test]
    fn zero_volume_rejected() {
        assert!(Cstr::new(0.0).is_err());
    }
}
