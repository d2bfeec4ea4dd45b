//! Lasso regularization paths for linear and logistic models, used to rank
//! variables by the order in which they enter the path.
//!
//! The objective is `(1/2n) * sum w_i (z_i - eta_i)^2 + lambda * |beta|_1`
//! with the intercept and the control covariates unpenalized. For the
//! logistic model `w` and `z` are the working weights and response of the
//! quadratic approximation, refreshed in an outer loop. Coordinates are
//! updated cyclically over a sequential-strong-rule working set; every
//! solution is checked against the KKT conditions over all variables.
//!
//! Working-set columns are used with their weighted projection onto the
//! unpenalized block removed, so coordinate moves leave the intercept and
//! controls at their optimum.

use std::borrow::Cow;

use log::warn;
use ndarray::{ArrayView1, ArrayView2};

use crate::dataset::Family;
use crate::error::{Error, Result};
use crate::linalg::{dot, to_col_major, Qr};
use crate::scalar::{soft_threshold, Real};

const PROB_PIN: f64 = 1e-10;
const MIN_WEIGHT: f64 = 1e-5;
const MAX_OUTER: usize = 100;
const SATURATION: f64 = 0.999;

/// Path-fitting options.
#[derive(Debug, Clone)]
pub struct LassoConfig<T> {
    pub n_lambda: usize,
    /// `None` picks 0.01 when `p > n` and 1e-4 otherwise.
    pub lambda_min_ratio: Option<T>,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tol: T,
    /// Sweep cap per lambda.
    pub max_sweeps: usize,
    /// Stop walking the grid once this many variables have entered.
    pub max_entries: Option<usize>,
    /// Return the solution at every grid point.
    pub keep_coefficients: bool,
    /// On separation or a stalled logistic fit, warn and truncate the path
    /// at the last stable lambda instead of failing.
    pub truncate_on_failure: bool,
}

impl<T: Real> Default for LassoConfig<T> {
    fn default() -> Self {
        LassoConfig {
            n_lambda: 100,
            lambda_min_ratio: None,
            tol: T::tol(1e-7),
            max_sweeps: 100_000,
            max_entries: None,
            keep_coefficients: false,
            truncate_on_failure: false,
        }
    }
}

/// A computed regularization path.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath<T> {
    /// Strictly decreasing grid actually visited.
    pub lambdas: Vec<T>,
    /// Penalized columns in order of first nonzero appearance.
    pub entry_order: Vec<usize>,
    /// Penalized coefficients per lambda (if retained).
    pub coefficients: Option<Vec<Vec<T>>>,
    /// Intercept followed by control-covariate coefficients, per lambda
    /// (if retained).
    pub unpenalized: Option<Vec<Vec<T>>>,
    /// The path stopped early because of separation or a stalled fit.
    pub truncated: bool,
}

/// Variables kept by the screening step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreenedSet {
    /// Column indices, in entry order.
    pub selected: Vec<usize>,
    pub target_size: usize,
}

impl ScreenedSet {
    pub fn contains(&self, j: usize) -> bool {
        self.selected.contains(&j)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Screening target `floor(n / 6)`.
pub fn target_size(n_full: usize) -> usize {
    n_full / 6
}

/// The first `floor(n_full / 6)` variables to enter the path.
pub fn screen<T>(path: &LassoPath<T>, n_full: usize) -> ScreenedSet {
    let target = target_size(n_full);
    ScreenedSet {
        selected: path.entry_order.iter().take(target).copied().collect(),
        target_size: target,
    }
}

/// Fits a Lasso path from `lambda_max` down to `lambda_max * ratio` on a
/// log-spaced grid.
pub fn fit_lasso_path<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    clvar: Option<ArrayView2<'_, T>>,
    family: Family,
    cfg: &LassoConfig<T>,
) -> Result<LassoPath<T>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch("lasso: x and y rows differ".into()));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if cfg.n_lambda == 0 {
        return Err(Error::InvalidArgument("n_lambda must be positive".into()));
    }
    let mut solver = Solver::new(x, y, clvar, family, cfg)?;
    solver.run()
}

struct Solver<'a, T: Real> {
    n: usize,
    p: usize,
    family: Family,
    cfg: &'a LassoConfig<T>,
    x: Cow<'a, [T]>,
    y: Vec<T>,
    // intercept column followed by control covariates
    u_cols: Vec<Vec<T>>,
    beta: Vec<T>,
    gamma: Vec<T>,
    // linear predictor, maintained for the logistic model only
    eta: Vec<T>,
    // working residual z - eta
    res: Vec<T>,
    w: Vec<T>,
    // working-set columns with the unpenalized block projected out, and
    // the projection coefficients over the kept unpenalized columns
    xt: Vec<Vec<T>>,
    xc: Vec<Vec<T>>,
    // weighted column scales sum(w xt^2)/n
    xv: Vec<T>,
    grad: Vec<T>,
    in_strong: Vec<bool>,
    strong: Vec<usize>,
    sweeps: usize,
    // factorization of the weighted unpenalized block, valid for current `w`
    u_qr: Option<(Qr<T>, Vec<T>)>,
}

impl<'a, T: Real> Solver<'a, T> {
    fn new(
        x: ArrayView2<'a, T>,
        y: ArrayView1<'_, T>,
        clvar: Option<ArrayView2<'_, T>>,
        family: Family,
        cfg: &'a LassoConfig<T>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        let x: Cow<'a, [T]> = if x.t().is_standard_layout() {
            Cow::Borrowed(x.to_slice_memory_order().expect("contiguous"))
        } else {
            Cow::Owned(to_col_major(x).into_raw_vec_and_offset().0)
        };
        let mut u_cols = vec![vec![T::one(); n]];
        if let Some(c) = clvar {
            if c.nrows() != n {
                return Err(Error::DimensionMismatch("lasso: clvar rows".into()));
            }
            for col in c.columns() {
                u_cols.push(col.to_vec());
            }
        }
        let u = u_cols.len();
        let y = y.to_vec();
        if family == Family::Binomial && y.iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::NonBinaryResponse(
                y.iter().find(|&&v| v != T::zero() && v != T::one()).unwrap().as_f64(),
            ));
        }
        Ok(Solver {
            n,
            p,
            family,
            cfg,
            x,
            res: y.clone(),
            y,
            u_cols,
            beta: vec![T::zero(); p],
            gamma: vec![T::zero(); u],
            eta: vec![T::zero(); n],
            w: vec![T::one(); n],
            xt: vec![Vec::new(); p],
            xc: vec![Vec::new(); p],
            xv: vec![T::zero(); p],
            grad: vec![T::zero(); p],
            in_strong: vec![false; p],
            strong: Vec::new(),
            sweeps: 0,
            u_qr: None,
        })
    }

    #[inline]
    fn col(&self, j: usize) -> &[T] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    fn inv_n(&self) -> T {
        T::one() / T::of_usize(self.n)
    }

    fn run(&mut self) -> Result<LassoPath<T>> {
        let mut path = LassoPath {
            lambdas: Vec::new(),
            entry_order: Vec::new(),
            coefficients: self.cfg.keep_coefficients.then(Vec::new),
            unpenalized: self.cfg.keep_coefficients.then(Vec::new),
            truncated: false,
        };
        // null model: unpenalized part only
        let null_dev = match self.solve(T::infinity()) {
            Ok(()) => self.deviance(),
            Err(e) => return Err(e),
        };
        self.full_gradient();
        let lambda_max = self.grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        let ratio = self.cfg.lambda_min_ratio.unwrap_or_else(|| {
            if self.p > self.n {
                T::lit(0.01)
            } else {
                T::lit(1e-4)
            }
        });
        let grid = lambda_grid(lambda_max, ratio, self.cfg.n_lambda);
        let mut entered = vec![false; self.p];
        let mut prev_lambda = lambda_max;
        for (k, &lam) in grid.iter().enumerate() {
            if k == 0 {
                // every penalized coefficient is zero at lambda_max
                path.lambdas.push(lam);
                if let Some(c) = path.coefficients.as_mut() {
                    c.push(self.beta.clone());
                }
                if let Some(u) = path.unpenalized.as_mut() {
                    u.push(self.gamma.clone());
                }
                continue;
            }
            let prev_grad = self.grad.clone();
            let snapshot = (self.beta.clone(), self.gamma.clone(), self.eta.clone());
            // sequential strong rule
            let cutoff = T::lit(2.0) * lam - prev_lambda;
            for j in 0..self.p {
                if !self.in_strong[j] && (self.beta[j] != T::zero() || self.grad[j].abs() >= cutoff) {
                    self.add_strong(j);
                }
            }
            if let Err(e) = self.solve(lam) {
                if self.family == Family::Binomial && self.cfg.truncate_on_failure {
                    warn!("lasso path truncated at lambda index {k}: {e}");
                    self.restore(snapshot);
                    path.truncated = true;
                    break;
                }
                return Err(e);
            }
            if self.family == Family::Binomial && k > 0 && self.pinned() {
                if self.cfg.truncate_on_failure {
                    warn!("lasso path truncated at lambda index {k}: perfect separation");
                    self.restore(snapshot);
                    path.truncated = true;
                    break;
                }
                return Err(Error::PerfectSeparation);
            }
            let mut fresh: Vec<usize> = (0..self.p)
                .filter(|&j| !entered[j] && self.beta[j] != T::zero())
                .collect();
            fresh.sort_by(|&a, &b| {
                prev_grad[b]
                    .abs()
                    .partial_cmp(&prev_grad[a].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &j in &fresh {
                entered[j] = true;
            }
            path.entry_order.extend(fresh);
            path.lambdas.push(lam);
            if let Some(c) = path.coefficients.as_mut() {
                c.push(self.beta.clone());
            }
            if let Some(u) = path.unpenalized.as_mut() {
                u.push(self.gamma.clone());
            }
            prev_lambda = lam;
            if self.cfg.max_entries.is_some_and(|m| path.entry_order.len() >= m) {
                break;
            }
            if self.family == Family::Binomial && null_dev > T::zero() {
                let explained = T::one() - self.deviance() / null_dev;
                if explained > T::lit(SATURATION) {
                    break;
                }
            }
        }
        Ok(path)
    }

    fn restore(&mut self, (beta, gamma, eta): (Vec<T>, Vec<T>, Vec<T>)) {
        self.beta = beta;
        self.gamma = gamma;
        self.eta = eta;
    }

    fn add_strong(&mut self, j: usize) {
        self.in_strong[j] = true;
        let pos = self.strong.partition_point(|&k| k < j);
        self.strong.insert(pos, j);
        self.project(j);
    }

    fn factor_unpenalized(&mut self) {
        if self.u_qr.is_none() {
            let sw: Vec<T> = self.w.iter().map(|w| w.sqrt()).collect();
            let cols: Vec<Vec<T>> = self
                .u_cols
                .iter()
                .map(|c| c.iter().zip(&sw).map(|(&a, &s)| a * s).collect())
                .collect();
            self.u_qr = Some((Qr::new(&cols, self.n), sw));
        }
    }

    /// Removes the weighted projection of column `j` onto the unpenalized
    /// block and caches the result with its scale.
    fn project(&mut self, j: usize) {
        self.factor_unpenalized();
        let (qr, sw) = self.u_qr.as_ref().expect("factorized above");
        let col = &self.x[j * self.n..(j + 1) * self.n];
        let target: Vec<T> = col.iter().zip(sw).map(|(&a, &s)| a * s).collect();
        let (coef, _) = qr.solve(&target);
        let mut xt = col.to_vec();
        for (&k, &c) in qr.kept().iter().zip(&coef) {
            for (v, &u) in xt.iter_mut().zip(&self.u_cols[k]) {
                *v -= c * u;
            }
        }
        self.xv[j] = xt.iter().zip(&self.w).map(|(&x, &w)| w * x * x).sum::<T>() * self.inv_n();
        self.xt[j] = xt;
        self.xc[j] = coef;
    }

    fn pinned(&self) -> bool {
        let lo = T::lit(PROB_PIN);
        let hi = T::one() - lo;
        self.eta.iter().all(|&e| {
            let pr = sigmoid(e);
            pr < lo || pr > hi
        })
    }

    fn deviance(&self) -> T {
        match self.family {
            Family::Gaussian => self.res.iter().map(|&r| r * r).sum(),
            Family::Binomial => {
                let two = T::lit(2.0);
                self.y
                    .iter()
                    .zip(&self.eta)
                    .map(|(&y, &e)| two * (softplus(e) - y * e))
                    .sum()
            }
        }
    }

    /// Gradient of the average log-likelihood w.r.t. every penalized column.
    fn full_gradient(&mut self) {
        let inv_n = self.inv_n();
        let score: Vec<T> = match self.family {
            Family::Gaussian => self.res.clone(),
            Family::Binomial => self
                .y
                .iter()
                .zip(&self.eta)
                .map(|(&y, &e)| y - sigmoid(e))
                .collect(),
        };
        for j in 0..self.p {
            let c = self.col(j);
            self.grad[j] = dot(c, &score) * inv_n;
        }
    }

    fn refresh_working(&mut self) {
        self.u_qr = None;
        let floor = T::lit(MIN_WEIGHT);
        for i in 0..self.n {
            let pr = sigmoid(self.eta[i]);
            let w = (pr * (T::one() - pr)).max(floor);
            self.w[i] = w;
            self.res[i] = (self.y[i] - pr) / w;
        }
        for idx in 0..self.strong.len() {
            let j = self.strong[idx];
            self.project(j);
        }
    }

    /// Solves at one lambda (infinity: unpenalized part only), leaving
    /// `grad` holding the final full gradient.
    fn solve(&mut self, lam: T) -> Result<()> {
        match self.family {
            Family::Gaussian => loop {
                self.converge(lam)?;
                self.full_gradient();
                if !self.admit_violators(lam) {
                    return Ok(());
                }
            },
            Family::Binomial => {
                let mut outer = 0;
                loop {
                    let before: Vec<T> = self.beta.iter().chain(&self.gamma).copied().collect();
                    self.refresh_working();
                    self.converge(lam)?;
                    let change = before
                        .iter()
                        .zip(self.beta.iter().chain(&self.gamma))
                        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
                    outer += 1;
                    if change < self.cfg.tol {
                        self.full_gradient();
                        if !self.admit_violators(lam) {
                            return Ok(());
                        }
                    }
                    if outer >= MAX_OUTER {
                        return Err(Error::NonConvergence {
                            iterations: outer,
                            context: "logistic lasso outer loop",
                        });
                    }
                }
            }
        }
    }

    fn admit_violators(&mut self, lam: T) -> bool {
        if !lam.is_finite() {
            return false;
        }
        let mut added = false;
        for j in 0..self.p {
            if !self.in_strong[j] && self.grad[j].abs() > lam {
                self.add_strong(j);
                added = true;
            }
        }
        added
    }

    /// Cyclic coordinate descent over the working set until the largest
    /// coefficient change drops below tolerance.
    fn converge(&mut self, lam: T) -> Result<()> {
        let tol = self.cfg.tol;
        loop {
            let mut change = self.update_unpenalized();
            if lam.is_finite() {
                let strong = std::mem::take(&mut self.strong);
                for &j in &strong {
                    change = change.max(self.update(j, lam));
                }
                self.strong = strong;
            }
            self.tick()?;
            if change < tol {
                return Ok(());
            }
            // iterate on the nonzero coefficients only
            let active: Vec<usize> = self
                .strong
                .iter()
                .copied()
                .filter(|&j| self.beta[j] != T::zero())
                .collect();
            loop {
                let mut change = self.update_unpenalized();
                if lam.is_finite() {
                    for &j in &active {
                        change = change.max(self.update(j, lam));
                    }
                }
                self.tick()?;
                if change < tol {
                    break;
                }
            }
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.sweeps += 1;
        if self.sweeps > self.cfg.max_sweeps {
            return Err(Error::NonConvergence {
                iterations: self.sweeps,
                context: "lasso coordinate descent",
            });
        }
        Ok(())
    }

    fn update(&mut self, j: usize, lam: T) -> T {
        let xv = self.xv[j];
        if xv <= T::zero() {
            return T::zero();
        }
        let n = self.n;
        let col = &self.xt[j];
        let g = match self.family {
            Family::Gaussian => dot(col, &self.res),
            Family::Binomial => col
                .iter()
                .zip(&self.res)
                .zip(&self.w)
                .map(|((&a, &b), &w)| w * a * b)
                .sum::<T>(),
        } * self.inv_n();
        let old = self.beta[j];
        let new = soft_threshold(g + xv * old, lam) / xv;
        let delta = new - old;
        if delta != T::zero() {
            self.beta[j] = new;
            // moving along the projected column shifts the unpenalized part
            let kept = self.u_qr.as_ref().expect("factorized with the working set").0.kept();
            for (&k, &c) in kept.iter().zip(&self.xc[j]) {
                self.gamma[k] -= delta * c;
            }
            match self.family {
                Family::Gaussian => {
                    for (r, &x) in self.res.iter_mut().zip(col) {
                        *r -= delta * x;
                    }
                }
                Family::Binomial => {
                    for i in 0..n {
                        self.res[i] -= delta * col[i];
                        self.eta[i] += delta * col[i];
                    }
                }
            }
        }
        delta.abs()
    }

    /// Exact weighted least-squares update of the intercept and controls.
    fn update_unpenalized(&mut self) -> T {
        self.factor_unpenalized();
        let (qr, sw) = self.u_qr.as_ref().expect("factorized above");
        let target: Vec<T> = self.res.iter().zip(sw).map(|(&r, &s)| r * s).collect();
        let (coef, _) = qr.solve(&target);
        let kept = qr.kept().to_vec();
        let mut change = T::zero();
        for (&k, &d) in kept.iter().zip(&coef) {
            if d == T::zero() {
                continue;
            }
            self.gamma[k] += d;
            change = change.max(d.abs());
            let col = &self.u_cols[k];
            for i in 0..self.n {
                self.res[i] -= d * col[i];
                self.eta[i] += d * col[i];
            }
        }
        change
    }
}

fn lambda_grid<T: Real>(lambda_max: T, ratio: T, n: usize) -> Vec<T> {
    if n == 1 || lambda_max <= T::zero() {
        return vec![lambda_max];
    }
    let step = ratio.ln() / T::of_usize(n - 1);
    (0..n)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * (step * T::of_usize(k)).exp()
            }
        })
        .collect()
}

#[inline]
pub(crate) fn sigmoid<T: Real>(e: T) -> T {
    if e >= T::zero() {
        T::one() / (T::one() + (-e).exp())
    } else {
        let z = e.exp();
        z / (T::one() + z)
    }
}

/// `log(1 + exp(e))` without overflow.
#[inline]
pub(crate) fn softplus<T: Real>(e: T) -> T {
    if e > T::zero() {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    }
}
