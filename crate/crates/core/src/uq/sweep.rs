use super::model::{evaluate_all, Model};
use crate::error::{Error, Result};

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub x_name: String,
    pub y_name: String,
    pub metric_names: Vec<String>,
    /// `(x, y)` of each point, x-major.
    pub points: Vec<(f64, f64)>,
    /// Metrics per point; `None` where the model failed.
    pub values: Vec<Option<Vec<f64>>>,
    /// Index and error message of each failed point.
    pub failures: Vec<(usize, String)>,
}

impl GridResult {
    pub fn value(&self, point: usize, metric: &str) -> Option<f64> {
        let j = self.metric_names.iter().position(|m| m == metric)?;
        self.values[point].as_ref().map(|v| v[j])
    }
}

/// Evaluates the model over `xs × ys` with every other parameter at its
/// baseline. A failed point is recorded as missing.
pub fn grid_sweep<M: Model + ?Sized>(
    model: &M,
    x_name: &str,
    xs: &[f64],
    y_name: &str,
    ys: &[f64],
    workers: Option<usize>,
) -> Result<GridResult> {
    let names = model.parameter_names();
    let find = |n: &str| {
        names
            .iter()
            .position(|p| p == n)
            .ok_or_else(|| Error::UnknownParameter(n.to_string()))
    };
    let (ix, iy) = (find(x_name)?, find(y_name)?);
    if ix == iy {
        return Err(Error::InvalidParameter(format!("sweep variables must differ, got `{x_name}` twice")));
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let base = model.baseline();
    let mut points = Vec::with_capacity(xs.len() * ys.len());
    let mut inputs = Vec::with_capacity(points.capacity());
    for &x in xs {
        for &y in ys {
            let mut v = base.clone();
            v[ix] = x;
            v[iy] = y;
            points.push((x, y));
            inputs.push(v);
        }
    }
    let mut failures = Vec::new();
    let values = evaluate_all(model, &inputs, workers)
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| failures.push((i, e.to_string()))).ok())
        .collect();
    Ok(GridResult {
        x_name: x_name.to_string(),
        y_name: y_name.to_string(),
        metric_names: model.metric_names(),
        points,
        values,
        failures,
    })
}
