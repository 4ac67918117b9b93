//! Variable-order (1–5) backward differentiation formula integrator in the
//! quasi-constant step-size NDF form, with a finite-difference Jacobian and
//! continuous output.

use nalgebra::DMatrix;
use thiserror::Error;

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
/// Relative change of `h/alpha` up to which a factorisation is reused.
const LU_REUSE: f64 = 0.3;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("step size collapsed at t = {t} d")]
    StepSizeTooSmall { t: f64, state: Vec<f64> },
    #[error("step limit {max_steps} reached at t = {t} d")]
    TooManySteps { t: f64, max_steps: usize, state: Vec<f64> },
    #[error("invalid solver input: {0}")]
    Input(String),
}

impl SolverError {
    pub fn time(&self) -> Option<f64> {
        match self {
            SolverError::StepSizeTooSmall { t, .. }
            | SolverError::TooManySteps { t, .. } => Some(*t),
            SolverError::Input(_) => None,
        }
    }

    pub fn state(&self) -> Option<&[f64]> {
        match self {
            SolverError::StepSizeTooSmall { state, .. }
            | SolverError::TooManySteps { state, .. } => Some(state),
            SolverError::Input(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_step: f64::INFINITY,
            first_step: None,
            max_steps: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub steps: usize,
    pub rhs_evals: usize,
    pub jac_evals: usize,
    pub lu_decomps: usize,
    pub newton_failures: usize,
    pub error_rejections: usize,
}

fn rms(x: impl Iterator<Item = f64>, n: usize) -> f64 {
    (x.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

fn compute_r(order: usize, factor: f64) -> DMatrix<f64> {
    let n = order + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = 1.0;
    }
    for i in 1..n {
        for j in 1..n {
            m[(i, j)] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    for i in 1..n {
        for j in 0..n {
            m[(i, j)] *= m[(i - 1, j)];
        }
    }
    m
}

fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let ru = compute_r(order, factor) * compute_r(order, 1.0);
    let n = d[0].len();
    let mut next = vec![vec![0.0; n]; order + 1];
    for (i, row) in next.iter_mut().enumerate() {
        for (k, dk) in d.iter().enumerate().take(order + 1) {
            let w = ru[(k, i)];
            if w != 0.0 {
                for (r, v) in row.iter_mut().zip(dk) {
                    *r += w * v;
                }
            }
        }
    }
    for (i, row) in next.into_iter().enumerate() {
        d[i] = row;
    }
}

/// Stiff integrator state. `F` evaluates `dy = f(t, y)`.
pub struct Bdf<F> {
    f: F,
    n: usize,
    pub t: f64,
    pub y: Vec<f64>,
    t_old: f64,
    t_bound: f64,
    opts: OdeOptions,
    h_abs: f64,
    newton_tol: f64,
    d: Vec<Vec<f64>>,
    order: usize,
    n_equal_steps: usize,
    jac: Vec<f64>,
    lu: Option<DenseLu>,
    /// `c` the current factorisation was built with.
    lu_c: f64,
    /// Nonzero rows per Jacobian column, and columns that can be perturbed together.
    pattern: Option<(Vec<Vec<usize>>, Vec<Vec<usize>>)>,
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 1],
    pub stats: Stats,
    scratch: Vec<f64>,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Bdf<F> {
    pub fn new(f: F, t0: f64, y0: &[f64], t_bound: f64, opts: OdeOptions) -> Result<Self, SolverError> {
        if !(t_bound >= t0) {
            return Err(SolverError::Input(format!("t_bound {t_bound} < t0 {t0}")));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Input("initial state is not finite".into()));
        }
        if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
            return Err(SolverError::Input("tolerances must be positive".into()));
        }
        let mut opts = opts;
        opts.rtol = opts.rtol.max(100.0 * f64::EPSILON);
        let n = y0.len();
        let mut gamma = [0.0; MAX_ORDER + 1];
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        for k in 0..=MAX_ORDER {
            alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
            error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k + 1) as f64;
        }
        let mut s = Self {
            f,
            n,
            t: t0,
            y: y0.to_vec(),
            t_old: t0,
            t_bound,
            opts,
            h_abs: 0.0,
            newton_tol: (10.0 * f64::EPSILON / opts.rtol).max(0.03f64.min(opts.rtol.sqrt())),
            d: vec![vec![0.0; n]; MAX_ORDER + 3],
            order: 1,
            n_equal_steps: 0,
            jac: vec![0.0; n * n],
            lu: None,
            lu_c: 0.0,
            pattern: None,
            gamma,
            alpha,
            error_const,
            stats: Stats::default(),
            scratch: vec![0.0; n],
        };
        let mut f0 = vec![0.0; n];
        s.eval(t0, y0.to_vec().as_slice(), &mut f0);
        s.h_abs = match opts.first_step {
            Some(h) if h > 0.0 => h.min(t_bound - t0),
            Some(h) => return Err(SolverError::Input(format!("first step {h} must be > 0"))),
            None => s.initial_step(&f0),
        };
        s.d[0] = y0.to_vec();
        s.d[1] = f0.iter().map(|v| v * s.h_abs).collect();
        s.jac = s.jacobian(t0, y0.to_vec().as_slice(), &f0);
        Ok(s)
    }

    fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) {
        self.stats.rhs_evals += 1;
        (self.f)(t, y, out);
    }

    fn initial_step(&mut self, f0: &[f64]) -> f64 {
        let interval = self.t_bound - self.t;
        if self.n == 0 {
            return f64::INFINITY;
        }
        if interval == 0.0 {
            return 0.0;
        }
        let (rtol, atol) = (self.opts.rtol, self.opts.atol);
        let y0 = self.y.clone();
        let scale: Vec<f64> = y0.iter().map(|v| atol + v.abs() * rtol).collect();
        let d0 = rms(y0.iter().zip(&scale).map(|(y, s)| y / s), self.n);
        let d1 = rms(f0.iter().zip(&scale).map(|(f, s)| f / s), self.n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; self.n];
        self.eval(self.t + h0, &y1, &mut f1);
        let d2 = rms(f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s), self.n) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).sqrt()
        };
        (100.0 * h0).min(h1).min(interval).min(self.opts.max_step)
    }

    fn perturbation(&self, y: f64) -> f64 {
        let scale = y.abs().max(self.opts.atol / self.opts.rtol).max(1e-8);
        (y + f64::EPSILON.sqrt() * scale) - y
    }

    /// Declares which rows of `f` each state can influence (`rows[c]` for
    /// column `c`). Columns that share no row are then perturbed together when
    /// the Jacobian is rebuilt. The pattern must be structural: an entry left
    /// out is treated as exactly zero.
    pub fn with_sparsity(mut self, rows: Vec<Vec<usize>>) -> Result<Self, SolverError> {
        let n = self.n;
        if rows.len() != n || rows.iter().flatten().any(|&r| r >= n) {
            return Err(SolverError::Input("sparsity pattern does not match the state".into()));
        }
        let rows: Vec<Vec<usize>> = rows
            .into_iter()
            .enumerate()
            .map(|(c, mut rs)| {
                rs.push(c);
                rs.sort_unstable();
                rs.dedup();
                rs
            })
            .collect();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut used: Vec<Vec<bool>> = Vec::new();
        for (c, rs) in rows.iter().enumerate() {
            let g = match used.iter().position(|u| rs.iter().all(|&r| !u[r])) {
                Some(g) => g,
                None => {
                    groups.push(Vec::new());
                    used.push(vec![false; n]);
                    groups.len() - 1
                }
            };
            groups[g].push(c);
            for &r in rs {
                used[g][r] = true;
            }
        }
        self.pattern = Some((rows, groups));
        Ok(self)
    }

    /// Finite-difference Jacobian, row-major.
    fn jacobian(&mut self, t: f64, y: &[f64], f0: &[f64]) -> Vec<f64> {
        let Some((rows, groups)) = self.pattern.take() else {
            return self.dense_jacobian(t, y, f0);
        };
        self.stats.jac_evals += 1;
        let n = self.n;
        let mut j = vec![0.0; n * n];
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for g in &groups {
            for &c in g {
                yp[c] = y[c] + self.perturbation(y[c]);
            }
            self.eval(t, &yp, &mut fp);
            for &c in g {
                let dh = yp[c] - y[c];
                for &r in &rows[c] {
                    j[r * n + c] = (fp[r] - f0[r]) / dh;
                }
                yp[c] = y[c];
            }
        }
        self.pattern = Some((rows, groups));
        j
    }

    fn dense_jacobian(&mut self, t: f64, y: &[f64], f0: &[f64]) -> Vec<f64> {
        self.stats.jac_evals += 1;
        let n = self.n;
        let mut j = vec![0.0; n * n];
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for c in 0..n {
            let dh = self.perturbation(y[c]);
            yp[c] = y[c] + dh;
            self.eval(t, &yp, &mut fp);
            for r in 0..n {
                j[r * n + c] = (fp[r] - f0[r]) / dh;
            }
            yp[c] = y[c];
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn t_bound(&self) -> f64 {
        self.t_bound
    }

    /// Interpolated state at `t` within the last step `[t_old, t]`.
    pub fn dense(&self, t: f64) -> Vec<f64> {
        let h = self.h_abs;
        let mut y = self.d[0].clone();
        let mut p = 1.0;
        for k in 0..self.order {
            let shift = self.t - h * k as f64;
            let denom = h * (k + 1) as f64;
            p *= (t - shift) / denom;
            for (v, dk) in y.iter_mut().zip(&self.d[k + 1]) {
                *v += dk * p;
            }
        }
        y
    }

    pub fn t_old(&self) -> f64 {
        self.t_old
    }

    fn solve_system(
        &mut self,
        t_new: f64,
        y_predict: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
    ) -> (bool, usize, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut y = y_predict.to_vec();
        let mut d = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut iters = 0;
        for k in 0..NEWTON_MAXITER {
            iters = k + 1;
            self.eval(t_new, &y, &mut f);
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
            let mut rhs: Vec<f64> = (0..n).map(|i| c * f[i] - psi[i] - d[i]).collect();
            self.lu.as_ref().expect("factorised").solve(&mut rhs);
            if c != self.lu_c {
                let w = 2.0 / (1.0 + c / self.lu_c);
                rhs.iter_mut().for_each(|v| *v *= w);
            }
            if rhs.iter().any(|v| !v.is_finite()) {
                break;
            }
            let dy_norm = rms(rhs.iter().zip(scale).map(|(v, s)| v / s), n);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(r) = rate {
                if r >= 1.0 || r.powi((NEWTON_MAXITER - k) as i32) / (1.0 - r) * dy_norm > self.newton_tol {
                    break;
                }
            }
            for i in 0..n {
                y[i] += rhs[i];
                d[i] += rhs[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < self.newton_tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
        }
        (converged, iters, y, d)
    }

    fn factorise(&mut self, c: f64) {
        self.stats.lu_decomps += 1;
        let n = self.n;
        let mut m: Vec<f64> = self.jac.iter().map(|v| -c * v).collect();
        for i in 0..n {
            m[i * n + i] += 1.0;
        }
        self.lu = Some(DenseLu::new(m, n));
        self.lu_c = c;
    }

    /// Advances one accepted step. Returns `Ok(false)` once `t_bound` is reached.
    pub fn step(&mut self) -> Result<bool, SolverError> {
        if self.t >= self.t_bound {
            return Ok(false);
        }
        if self.n == 0 {
            self.t_old = self.t;
            self.t = self.t_bound;
            return Ok(true);
        }
        if self.stats.steps >= self.opts.max_steps {
            return Err(SolverError::TooManySteps {
                t: self.t,
                max_steps: self.opts.max_steps,
                state: self.y.clone(),
            });
        }
        let t = self.t;
        let min_step = 10.0 * (next_up(t) - t).abs();
        let mut h_abs = self.h_abs;
        if h_abs > self.opts.max_step {
            h_abs = self.opts.max_step;
            change_d(&mut self.d, self.order, h_abs / self.h_abs);
            self.n_equal_steps = 0;
        } else if h_abs < min_step {
            h_abs = min_step;
            change_d(&mut self.d, self.order, min_step / self.h_abs);
            self.n_equal_steps = 0;
        }
        let order = self.order;
        let (rtol, atol) = (self.opts.rtol, self.opts.atol);
        let mut current_jac = false;

        let (t_new, y_new, d, error_norm, safety, scale) = loop {
            if h_abs < min_step {
                return Err(SolverError::StepSizeTooSmall {
                    t,
                    state: self.y.clone(),
                });
            }
            let mut t_new = t + h_abs;
            if t_new > self.t_bound {
                t_new = self.t_bound;
                change_d(&mut self.d, order, (t_new - t) / h_abs);
                self.n_equal_steps = 0;
            }
            let h = t_new - t;
            h_abs = h;

            let n = self.n;
            let mut y_predict = vec![0.0; n];
            for dk in self.d.iter().take(order + 1) {
                for (p, v) in y_predict.iter_mut().zip(dk) {
                    *p += v;
                }
            }
            let scale: Vec<f64> = y_predict.iter().map(|v| atol + rtol * v.abs()).collect();
            let mut psi = vec![0.0; n];
            for k in 1..=order {
                for (p, v) in psi.iter_mut().zip(&self.d[k]) {
                    *p += v * self.gamma[k];
                }
            }
            for p in psi.iter_mut() {
                *p /= self.alpha[order];
            }
            let c = h / self.alpha[order];

            let mut result;
            loop {
                if self.lu.is_none() || (c / self.lu_c - 1.0).abs() > LU_REUSE {
                    self.factorise(c);
                }
                result = self.solve_system(t_new, &y_predict, c, &psi, &scale);
                if result.0 || current_jac {
                    break;
                }
                let mut fp = vec![0.0; n];
                self.eval(t_new, &y_predict, &mut fp);
                self.jac = self.jacobian(t_new, &y_predict, &fp);
                self.lu = None;
                current_jac = true;
            }
            let (converged, n_iter, y_new, d) = result;
            if !converged {
                self.stats.newton_failures += 1;
                h_abs *= 0.5;
                change_d(&mut self.d, order, 0.5);
                self.n_equal_steps = 0;
                continue;
            }
            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale: Vec<f64> = y_new.iter().map(|v| atol + rtol * v.abs()).collect();
            let ec = self.error_const[order];
            let error_norm = rms(d.iter().zip(&scale).map(|(v, s)| ec * v / s), n);
            if error_norm > 1.0 {
                self.stats.error_rejections += 1;
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
            } else {
                break (t_new, y_new, d, error_norm, safety, scale);
            }
        };

        self.stats.steps += 1;
        self.n_equal_steps += 1;
        self.t_old = t;
        self.t = t_new;
        self.y = y_new;
        self.h_abs = h_abs;

        let n = self.n;
        for i in 0..n {
            self.scratch[i] = d[i] - self.d[order + 1][i];
        }
        std::mem::swap(&mut self.d[order + 2], &mut self.scratch);
        self.d[order + 1].copy_from_slice(&d);
        for i in (0..=order).rev() {
            let (lo, hi) = self.d.split_at_mut(i + 1);
            for (a, b) in lo[i].iter_mut().zip(&hi[0]) {
                *a += b;
            }
        }

        if self.n_equal_steps < order + 1 {
            return Ok(true);
        }

        let error_m_norm = if order > 1 {
            let ec = self.error_const[order - 1];
            rms(self.d[order].iter().zip(&scale).map(|(v, s)| ec * v / s), n)
        } else {
            f64::INFINITY
        };
        let error_p_norm = if order < MAX_ORDER {
            let ec = self.error_const[order + 1];
            rms(self.d[order + 2].iter().zip(&scale).map(|(v, s)| ec * v / s), n)
        } else {
            f64::INFINITY
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = 0;
        let mut best_factor = f64::NEG_INFINITY;
        for (i, e) in norms.iter().enumerate() {
            let factor = e.powf(-1.0 / (order + i) as f64);
            if factor > best_factor {
                best_factor = factor;
                best = i;
            }
        }
        let new_order = order + best - 1;
        self.order = new_order;
        let factor = MAX_FACTOR.min(safety * best_factor);
        self.h_abs *= factor;
        change_d(&mut self.d, new_order, factor);
        self.n_equal_steps = 0;
        Ok(true)
    }
}

/// Row-major LU with partial pivoting. Zero multipliers are skipped, which
/// keeps block-sparse Newton matrices cheap without a sparse format.
struct DenseLu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn new(mut a: Vec<f64>, n: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            if pivot == 0.0 {
                continue;
            }
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let row_k = &top[k * n + k + 1..(k + 1) * n];
            for row in bottom.chunks_exact_mut(n) {
                if row[k] == 0.0 {
                    continue;
                }
                let l = row[k] / pivot;
                row[k] = l;
                for (x, u) in row[k + 1..].iter_mut().zip(row_k) {
                    *x -= l * u;
                }
            }
        }
        Self { n, a, perm }
    }

    /// Solves in place; a singular factor yields non-finite entries.
    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.a[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.a[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Dense solution sampled at `t_eval` (which must be sorted and within `[t0, t_end]`).
#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: Stats,
}

pub fn solve<F: FnMut(f64, &[f64], &mut [f64])>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_eval: &[f64],
    opts: OdeOptions,
) -> Result<Solution, SolverError> {
    solve_sparse(f, t0, y0, t_eval, opts, None)
}

/// [`solve`] with an optional Jacobian pattern, see [`Bdf::with_sparsity`].
pub fn solve_sparse<F: FnMut(f64, &[f64], &mut [f64])>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_eval: &[f64],
    opts: OdeOptions,
    pattern: Option<Vec<Vec<usize>>>,
) -> Result<Solution, SolverError> {
    let t_end = t_eval.last().copied().unwrap_or(t0);
    if t_eval.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SolverError::Input("output times must be strictly increasing".into()));
    }
    if t_eval.first().is_some_and(|&t| t < t0) {
        return Err(SolverError::Input("output time before t0".into()));
    }
    let mut bdf = Bdf::new(f, t0, y0, t_end, opts)?;
    if let Some(p) = pattern {
        bdf = bdf.with_sparsity(p)?;
    }
    let mut out_t = Vec::with_capacity(t_eval.len());
    let mut out_y = Vec::with_capacity(t_eval.len());
    let mut next = 0;
    while next < t_eval.len() && t_eval[next] <= t0 {
        out_t.push(t_eval[next]);
        out_y.push(y0.to_vec());
        next += 1;
    }
    while next < t_eval.len() {
        bdf.step()?;
        while next < t_eval.len() && t_eval[next] <= bdf.t {
            let te = t_eval[next];
            out_t.push(te);
            out_y.push(if te == bdf.t { bdf.y.clone() } else { bdf.dense(te) });
            next += 1;
        }
    }
    Ok(Solution {
        t: out_t,
        y: out_y,
        stats: bdf.stats,
    })
}
