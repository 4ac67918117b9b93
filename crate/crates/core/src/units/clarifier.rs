use serde::{Deserialize, Serialize};

use crate::components::{Basis, ComponentSet, Phase};
use crate::error::{Error, Result};

/// Double-exponential settling parameters. Defaults are the BSM1 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettlingParams {
    /// Maximum theoretical settling velocity, m·d⁻¹.
    pub v0: f64,
    /// Maximum practical settling velocity, m·d⁻¹.
    pub v0_prime: f64,
    /// Hindered-zone parameter, m³·g⁻¹.
    pub r_h: f64,
    /// Flocculant-zone parameter, m³·g⁻¹.
    pub r_p: f64,
    /// Non-settleable fraction of the feed TSS.
    pub f_ns: f64,
    /// Threshold TSS for flux limitation in the clarification zone, g·m⁻³.
    pub x_t: f64,
}

impl Default for SettlingParams {
    fn default() -> Self {
        Self {
            v0: 474.0,
            v0_prime: 250.0,
            r_h: 5.76e-4,
            r_p: 2.86e-3,
            f_ns: 2.28e-3,
            x_t: 3000.0,
        }
    }
}

impl SettlingParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.v0, self.v0_prime, self.r_h, self.r_p, self.f_ns, self.x_t];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("settling parameters must be finite and >= 0".into()));
        }
        if self.v0_prime > self.v0 {
            return Err(Error::InvalidParameter("v0_prime must not exceed v0".into()));
        }
        if self.f_ns >= 1.0 {
            return Err(Error::InvalidParameter("f_ns must be < 1".into()));
        }
        Ok(())
    }
}

/// v_s = max(0, min(v0', v0·(e^{−r_h·X*} − e^{−r_p·X*}))), X* = max(0, X − f_ns·X_feed).
pub fn settling_velocity(x: f64, x_feed: f64, p: &SettlingParams) -> f64 {
    let x_star = (x - p.f_ns * x_feed).max(0.0);
    let v = p.v0 * ((-p.r_h * x_star).exp() - (-p.r_p * x_star).exp());
    v.min(p.v0_prime).max(0.0)
}

/// Initial layer TSS (top to bottom), g·m⁻³.
pub const BASELINE_LAYER_TSS: [f64; 10] = [10.0, 20.0, 40.0, 70.0, 200.0, 300.0, 350.0, 350.0, 2000.0, 4000.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarifierFlows {
    pub feed: f64,
    pub underflow: f64,
    pub effluent: f64,
}

impl ClarifierFlows {
    pub fn new(feed: f64, underflow: f64) -> Self {
        Self {
            feed,
            underflow,
            effluent: feed - underflow,
        }
    }
}

/// Non-reactive secondary clarifier: a one-dimensional layered TSS model
/// with solubles held as a single well-mixed volume.
///
/// State layout: `[TSS_1 (top) .. TSS_n (bottom), solubles in component order]`.
#[derive(Debug, Clone)]
pub struct Clarifier {
    /// m
    pub height: f64,
    /// m²
    pub area: f64,
    pub n_layers: usize,
    /// 1-based layer index counted from the top.
    pub feed_layer: usize,
    pub settling: SettlingParams,
    /// Underflow (RAS + WAS), m³·d⁻¹.
    pub underflow: f64,
    soluble: Vec<usize>,
    particulate: Vec<usize>,
    /// g TSS per unit of each component.
    tss_weights: Vec<f64>,
}

impl Clarifier {
    pub fn new(
        components: &ComponentSet,
        height: f64,
        area: f64,
        feed_layer: usize,
        settling: SettlingParams,
        f_ss_cod: f64,
        underflow: f64,
    ) -> Result<Self> {
        let n_layers = 10;
        let bad = |reason: String| Error::InvalidUnit {
            unit: "clarifier".into(),
            reason,
        };
        if !(height > 0.0 && area > 0.0) {
            return Err(bad(format!("height {height} and area {area} must be > 0")));
        }
        if feed_layer < 1 || feed_layer > n_layers {
            return Err(bad(format!("feed layer {feed_layer} outside [1, {n_layers}]")));
        }
        if !(underflow >= 0.0) {
            return Err(bad(format!("underflow {underflow} must be >= 0")));
        }
        settling.validate()?;
        let mut soluble = Vec::new();
        let mut particulate = Vec::new();
        let mut tss_weights = vec![0.0; components.len()];
        for (i, c) in components.components().iter().enumerate() {
            match c.phase {
                Phase::Soluble => soluble.push(i),
                Phase::Particulate => {
                    particulate.push(i);
                    if c.basis == Basis::Cod {
                        tss_weights[i] = f_ss_cod;
                    }
                }
            }
        }
        Ok(Self {
            height,
            area,
            n_layers,
            feed_layer,
            settling,
            underflow,
            soluble,
            particulate,
            tss_weights,
        })
    }

    pub fn state_len(&self) -> usize {
        self.n_layers + self.soluble.len()
    }

    pub fn soluble_indices(&self) -> &[usize] {
        &self.soluble
    }

    pub fn layer_height(&self) -> f64 {
        self.height / self.n_layers as f64
    }

    pub fn volume(&self) -> f64 {
        self.area * self.height
    }

    pub fn tss(&self, c: &[f64]) -> f64 {
        self.tss_weights.iter().zip(c).map(|(w, v)| w * v).sum()
    }

    /// State with the given layer profile and solubles taken from `feed`.
    pub fn initial_state(&self, layers: &[f64], feed: &[f64]) -> Result<Vec<f64>> {
        if layers.len() != self.n_layers {
            return Err(Error::Dimension {
                expected: self.n_layers,
                got: layers.len(),
            });
        }
        let mut s = layers.to_vec();
        s.extend(self.soluble.iter().map(|&i| feed[i]));
        Ok(s)
    }

    /// Layer profile proportional to the feed TSS, scaled by the baseline profile
    /// normalised with `reference_feed_tss`.
    pub fn proportional_layers(feed_tss: f64, reference_feed_tss: f64) -> [f64; 10] {
        BASELINE_LAYER_TSS.map(|x| x * feed_tss / reference_feed_tss)
    }

    /// Outlet concentrations `(effluent, underflow)`: solubles from the state,
    /// particulates with the feed's composition scaled to the top/bottom layer TSS.
    pub fn outlets(&self, feed: &[f64], state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut eff = vec![0.0; feed.len()];
        let mut under = vec![0.0; feed.len()];
        self.outlets_into(feed, state, &mut eff, &mut under);
        (eff, under)
    }

    pub(crate) fn outlets_into(&self, feed: &[f64], state: &[f64], eff: &mut [f64], under: &mut [f64]) {
        let n = self.n_layers;
        for (k, &i) in self.soluble.iter().enumerate() {
            eff[i] = state[n + k];
            under[i] = state[n + k];
        }
        let feed_tss = self.tss(feed);
        let (top, bottom) = (state[0].max(0.0), state[n - 1].max(0.0));
        for &i in &self.particulate {
            if feed_tss > 0.0 {
                let ratio = feed[i] / feed_tss;
                eff[i] = ratio * top;
                under[i] = ratio * bottom;
            } else {
                eff[i] = 0.0;
                under[i] = 0.0;
            }
        }
    }

    /// Time derivative of the clarifier state for a given feed.
    pub fn derivative(&self, flows: ClarifierFlows, feed: &[f64], state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_len() {
            return Err(Error::Dimension {
                expected: self.state_len(),
                got: state.len(),
            });
        }
        if !(flows.underflow >= 0.0 && flows.effluent >= 0.0)
            || (flows.underflow + flows.effluent - flows.feed).abs() > 1e-9 * flows.feed.max(1.0)
        {
            return Err(Error::Flow(format!(
                "clarifier outlets {} + {} do not match feed {}",
                flows.underflow, flows.effluent, flows.feed
            )));
        }
        let solids: f64 = state[..self.n_layers].iter().sum();
        if flows.underflow == 0.0 && (solids > 0.0 || self.tss(feed) > 0.0) {
            return Err(Error::Flow("zero clarifier underflow with a nonzero solids inventory".into()));
        }
        let mut out = vec![0.0; state.len()];
        self.derivative_into(flows, feed, state, &mut out);
        Ok(out)
    }

    pub(crate) fn derivative_into(&self, flows: ClarifierFlows, feed: &[f64], state: &[f64], out: &mut [f64]) {
        let n = self.n_layers;
        let m = self.feed_layer - 1;
        let h = self.layer_height();
        let v_up = flows.effluent / self.area;
        let v_dn = flows.underflow / self.area;
        let x_feed = self.tss(feed);
        let p = &self.settling;

        let x = &state[..n];
        let mut js = [0.0; 10];
        for j in 0..n {
            let xj = x[j].max(0.0);
            js[j] = settling_velocity(xj, x_feed, p) * xj;
        }
        // settling flux from layer j into j + 1
        let mut down = [0.0; 10];
        for j in 0..n - 1 {
            down[j] = if j >= m || x[j + 1] > p.x_t {
                js[j].min(js[j + 1])
            } else {
                js[j]
            };
        }
        for j in 0..n {
            let from_above = if j > 0 { down[j - 1] } else { 0.0 };
            let dx = if j < m {
                v_up * (x[j + 1] - x[j]) + from_above - down[j]
            } else if j == m {
                flows.feed * x_feed / self.area + from_above - (v_up + v_dn) * x[j] - down[j]
            } else {
                v_dn * (x[j - 1] - x[j]) + from_above - down[j]
            };
            out[j] = dx / h;
        }
        let d = flows.feed / self.volume();
        for (k, &i) in self.soluble.iter().enumerate() {
            out[n + k] = d * (feed[i] - state[n + k]);
        }
    }
}
