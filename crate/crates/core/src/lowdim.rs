//! Classical low-dimensional fits and tests run on the inference half of a
//! sample split.
//!
//! Designs are always `[1 | clvar | x_sub]`. Columns that are linearly
//! dependent on earlier ones are dropped, so control covariates win over
//! SNPs and earlier-screened SNPs over later ones.

use ndarray::{ArrayView1, ArrayView2};

use crate::dataset::{Dataset, Family};
use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::scalar::Real;
use crate::screening::{sigmoid, softplus, ScreenedSet};
use crate::special::{chi2_sf, f_sf};

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
const PROB_PIN: f64 = 1e-10;
const LRT_SLACK: f64 = 1e-6;
const SEPARATED_DEVIANCE: f64 = 1e-6;

/// Outcome of a low-dimensional fit.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub family: Family,
    pub n: usize,
    /// Indices into the design `[1 | clvar | x_sub]` that were kept.
    pub retained: Vec<usize>,
    /// One coefficient per retained column.
    pub coefficients: Vec<T>,
    /// Residual sum of squares (response scale).
    pub rss: T,
    /// RSS for the linear model, `-2 log L` for the logistic model.
    pub deviance: T,
    pub log_likelihood: T,
    pub df_resid: usize,
    /// `(X'X)^{-1}` over the retained columns (linear model only).
    pub cov_unscaled: Option<Vec<T>>,
}

impl<T: Real> FitResult<T> {
    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    /// Coefficient of design column `col`, if that column was retained.
    pub fn coefficient(&self, col: usize) -> Option<T> {
        self.retained
            .iter()
            .position(|&c| c == col)
            .map(|k| self.coefficients[k])
    }

    /// Two-sided t-test p-value for design column `col` (linear model).
    pub fn t_pvalue(&self, col: usize) -> Option<T> {
        let k = self.retained.iter().position(|&c| c == col)?;
        let cov = self.cov_unscaled.as_ref()?;
        let r = self.rank();
        let sigma2 = self.rss / T::of_usize(self.df_resid);
        let se = (sigma2 * cov[k * r + k]).sqrt();
        let t = self.coefficients[k] / se;
        Some(crate::special::t_two_sided(t, T::of_usize(self.df_resid)))
    }
}

/// Assembles `[1 | clvar | x_sub]` as columns.
pub fn design_columns<T: Real>(
    x_sub: ArrayView2<'_, T>,
    clvar: Option<ArrayView2<'_, T>>,
) -> Vec<Vec<T>> {
    let n = x_sub.nrows();
    let mut cols = vec![vec![T::one(); n]];
    if let Some(c) = clvar {
        cols.extend(c.columns().into_iter().map(|c| c.to_vec()));
    }
    cols.extend(x_sub.columns().into_iter().map(|c| c.to_vec()));
    cols
}

/// Least-squares fit of `y` on `[1 | clvar | x_sub]`.
pub fn fit_ols<T: Real>(
    x_sub: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    clvar: Option<ArrayView2<'_, T>>,
) -> Result<FitResult<T>> {
    let y = y.to_vec();
    ols_columns(&design_columns(x_sub, clvar), &y)
}

/// Logistic regression of `y` on `[1 | clvar | x_sub]` by IRLS.
pub fn fit_logistic<T: Real>(
    x_sub: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    clvar: Option<ArrayView2<'_, T>>,
) -> Result<FitResult<T>> {
    let y = y.to_vec();
    logistic_columns(&design_columns(x_sub, clvar), &y)
}

pub(crate) fn fit_columns<T: Real>(cols: &[Vec<T>], y: &[T], family: Family) -> Result<FitResult<T>> {
    match family {
        Family::Gaussian => ols_columns(cols, y),
        Family::Binomial => logistic_columns(cols, y),
    }
}

pub(crate) fn ols_columns<T: Real>(cols: &[Vec<T>], y: &[T]) -> Result<FitResult<T>> {
    let n = y.len();
    let qr = Qr::new(cols, n);
    let rank = qr.rank();
    if n <= rank {
        return Err(Error::DegenerateFit(format!(
            "{n} observations for {rank} parameters"
        )));
    }
    let (coefficients, rss) = qr.solve(y);
    let nn = T::of_usize(n);
    let log_likelihood = -nn / T::lit(2.0)
        * ((T::lit(2.0) * T::PI() * rss / nn).ln() + T::one());
    Ok(FitResult {
        family: Family::Gaussian,
        n,
        retained: qr.kept().to_vec(),
        coefficients,
        rss,
        deviance: rss,
        log_likelihood,
        df_resid: n - rank,
        cov_unscaled: Some(qr.unscaled_covariance()),
    })
}

fn binomial_loglik<T: Real>(y: &[T], eta: &[T]) -> T {
    y.iter().zip(eta).map(|(&y, &e)| y * e - softplus(e)).sum()
}

fn linear_predictor<T: Real>(cols: &[Vec<T>], kept: &[usize], coef: &[T], n: usize) -> Vec<T> {
    let mut eta = vec![T::zero(); n];
    for (&c, &b) in kept.iter().zip(coef) {
        for (e, &x) in eta.iter_mut().zip(&cols[c]) {
            *e += b * x;
        }
    }
    eta
}

pub(crate) fn logistic_columns<T: Real>(cols: &[Vec<T>], y: &[T]) -> Result<FitResult<T>> {
    let n = y.len();
    // rank decided once on the unweighted design
    let kept = Qr::new(cols, n).kept().to_vec();
    let rank = kept.len();
    if n <= rank {
        return Err(Error::DegenerateFit(format!(
            "{n} observations for {rank} parameters"
        )));
    }
    let kcols: Vec<Vec<T>> = kept.iter().map(|&c| cols[c].clone()).collect();
    let all: Vec<usize> = (0..rank).collect();
    let lin = |c: &[T]| linear_predictor(&kcols, &all, c, n);
    let half = T::lit(0.5);
    let mut eta: Vec<T> = y
        .iter()
        .map(|&v| {
            let mu = (v + half) / T::lit(2.0);
            (mu / (T::one() - mu)).ln()
        })
        .collect();
    let mut dev_old = -T::lit(2.0) * binomial_loglik(y, &eta);
    let mut coef: Vec<T> = vec![T::zero(); rank];
    let mut converged = false;
    for it in 0..IRLS_MAX_ITER {
        let mut sw = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (T::one() - mu)).max(T::min_positive_value());
            sw.push(w.sqrt());
            z.push((eta[i] + (y[i] - mu) / w) * w.sqrt());
        }
        let wcols: Vec<Vec<T>> = kcols
            .iter()
            .map(|c| c.iter().zip(&sw).map(|(&x, &s)| x * s).collect())
            .collect();
        let qr = Qr::new(&wcols, n);
        let (sol, _) = qr.solve(&z);
        let mut new_coef = vec![T::zero(); rank];
        for (&k, &b) in qr.kept().iter().zip(&sol) {
            new_coef[k] = b;
        }
        let mut new_eta = lin(&new_coef);
        let mut dev = -T::lit(2.0) * binomial_loglik(y, &new_eta);
        // step halving on divergence
        let mut halvings = 0;
        while it > 0 && (!dev.is_finite() || dev > dev_old) && halvings < 30 {
            for (nc, &oc) in new_coef.iter_mut().zip(&coef) {
                *nc = (*nc + oc) * half;
            }
            new_eta = lin(&new_coef);
            dev = -T::lit(2.0) * binomial_loglik(y, &new_eta);
            halvings += 1;
        }
        let delta = (dev - dev_old).abs();
        coef = new_coef;
        eta = new_eta;
        dev_old = dev;
        if delta < T::tol(IRLS_TOL) {
            converged = true;
            break;
        }
    }
    let lo = T::lit(PROB_PIN);
    let pinned = eta.iter().all(|&e| {
        let mu = sigmoid(e);
        mu < lo || mu > T::one() - lo
    });
    // a vanishing deviance means the classes are (quasi-)separated
    if pinned || dev_old < T::tol(SEPARATED_DEVIANCE) {
        return Err(Error::PerfectSeparation);
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: IRLS_MAX_ITER,
            context: "logistic IRLS",
        });
    }
    let rss = y
        .iter()
        .zip(&eta)
        .map(|(&v, &e)| {
            let r = v - sigmoid(e);
            r * r
        })
        .sum();
    let ll = binomial_loglik(y, &eta);
    Ok(FitResult {
        family: Family::Binomial,
        n,
        retained: kept,
        coefficients: coef,
        rss,
        deviance: -T::lit(2.0) * ll,
        log_likelihood: ll,
        df_resid: n - rank,
        cov_unscaled: None,
    })
}

/// Partial F-test of a reduced linear model nested in a full one.
pub fn partial_f_test<T: Real>(full: &FitResult<T>, reduced: &FitResult<T>) -> Result<T> {
    if full.df_resid < 1 {
        return Err(Error::DegenerateFit("no residual degrees of freedom".into()));
    }
    let ddf = full.rank().saturating_sub(reduced.rank());
    if ddf == 0 {
        return Ok(T::one());
    }
    let scale = full.rss.max(reduced.rss);
    if full.rss <= T::epsilon() * scale || full.rss <= T::zero() {
        return Err(Error::DegenerateFit("zero residual sum of squares".into()));
    }
    let num = (reduced.rss - full.rss).max(T::zero()) / T::of_usize(ddf);
    let den = full.rss / T::of_usize(full.df_resid);
    Ok(f_sf(num / den, T::of_usize(ddf), T::of_usize(full.df_resid)))
}

/// Likelihood-ratio test of a reduced model nested in a full one.
pub fn lrt<T: Real>(full: &FitResult<T>, reduced: &FitResult<T>) -> Result<T> {
    let ddf = full.rank().saturating_sub(reduced.rank());
    let mut stat = reduced.deviance - full.deviance;
    if stat < -T::lit(LRT_SLACK) {
        return Err(Error::NegativeDeviance(stat.as_f64()));
    }
    if stat < T::zero() {
        stat = T::zero();
    }
    if ddf == 0 {
        return Ok(T::one());
    }
    Ok(chi2_sf(stat, T::of_usize(ddf)))
}

/// Nested-model test appropriate for the family.
pub fn nested_test<T: Real>(full: &FitResult<T>, reduced: &FitResult<T>) -> Result<T> {
    match full.family {
        Family::Gaussian => partial_f_test(full, reduced),
        Family::Binomial => lrt(full, reduced),
    }
}

/// p-value for `H0: beta_G = 0` on the inference half `d2`, given the
/// variables screened on the other half. Any fit failure yields 1.
pub fn group_pvalue<T: Real>(d2: &Dataset<T>, screened: &ScreenedSet, group: &[usize]) -> T {
    let tested: Vec<usize> = screened
        .selected
        .iter()
        .copied()
        .filter(|j| group.contains(j))
        .collect();
    if tested.is_empty() {
        return T::one();
    }
    let kept: Vec<usize> = screened
        .selected
        .iter()
        .copied()
        .filter(|j| !tested.contains(j))
        .collect();
    let base = design_columns(d2.x().slice(ndarray::s![.., 0..0]), d2.clvar());
    let with = |vars: &[usize]| {
        let mut cols = base.clone();
        cols.extend(vars.iter().map(|&j| d2.column(j).to_vec()));
        cols
    };
    let y = d2.y().to_vec();
    let full = fit_columns(&with(&screened.selected), &y, d2.family());
    let reduced = fit_columns(&with(&kept), &y, d2.family());
    match (full, reduced) {
        (Ok(f), Ok(r)) => nested_test(&f, &r).unwrap_or(T::one()),
        _ => T::one(),
    }
    .min(T::one())
    .max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    /// Solves the normal equations by Gauss-Jordan elimination.
    fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let k = cols.len();
        let mut a = vec![vec![0.0; k + 1]; k];
        for r in 0..k {
            for c in 0..k {
                a[r][c] = cols[r].iter().zip(&cols[c]).map(|(x, z)| x * z).sum();
            }
            a[r][k] = cols[r].iter().zip(y).map(|(x, z)| x * z).sum();
        }
        for piv in 0..k {
            let best = (piv..k).max_by(|&i, &j| a[i][piv].abs().total_cmp(&a[j][piv].abs())).unwrap();
            a.swap(piv, best);
            let d = a[piv][piv];
            for c in 0..=k {
                a[piv][c] /= d;
            }
            for r in 0..k {
                if r != piv {
                    let f = a[r][piv];
                    for c in 0..=k {
                        a[r][c] -= f * a[piv][c];
                    }
                }
            }
        }
        a.iter().map(|row| row[k]).collect()
    }

    #[test]
    fn exact_linear_fit() {
        let x = Array2::from_shape_vec((5, 1), vec![0.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let y = x.column(0).mapv(|v| 2.0 * v);
        let fit = fit_ols(x.view(), y.view(), None).unwrap();
        assert_relative_eq!(fit.coefficient(1).unwrap(), 2.0, epsilon = 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x1: Vec<f64> = (0..12).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = x1.iter().map(|v| 1.0 + v + 0.3 * normal(&mut rng)).collect();
        let single = Array2::from_shape_vec((12, 1), x1.clone()).unwrap();
        let dup = Array2::from_shape_fn((12, 2), |(i, _)| x1[i]);
        let y = Array1::from(y);
        let a = fit_ols(single.view(), y.view(), None).unwrap();
        let b = fit_ols(dup.view(), y.view(), None).unwrap();
        assert_eq!(b.retained, vec![0, 1]);
        assert_relative_eq!(a.rss, b.rss, epsilon = 1e-12);
        assert_relative_eq!(a.coefficients[1], b.coefficients[1], epsilon = 1e-12);
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = Array2::from_shape_fn((20, 3), |_| normal(&mut rng));
        let y = Array1::from_shape_fn(20, |i| 0.5 + x[[i, 0]] - 2.0 * x[[i, 2]] + normal(&mut rng));
        let fit = fit_ols(x.view(), y.view(), None).unwrap();
        let cols = design_columns(x.view(), None);
        let oracle = normal_equations(&cols, y.as_slice().unwrap());
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn intercept_only_logistic_is_logit_of_mean() {
        let y: Vec<f64> = (0..40).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let fit = logistic_columns(&[vec![1.0; 40]], &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], (0.25f64 / 0.75).ln(), epsilon = 1e-8);
        assert_relative_eq!(fit.coefficients[0], -1.098_612_288_668_11, epsilon = 1e-8);
    }

    /// Plain Newton-Raphson on the log-likelihood with a dense Hessian.
    fn newton_logistic(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let k = cols.len();
        let n = y.len();
        let mut b = vec![0.0; k];
        for _ in 0..200 {
            let eta: Vec<f64> = (0..n).map(|i| (0..k).map(|c| cols[c][i] * b[c]).sum()).collect();
            let mu: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
            let mut h = vec![vec![0.0; k + 1]; k];
            for r in 0..k {
                for c in 0..k {
                    h[r][c] = (0..n).map(|i| cols[r][i] * cols[c][i] * mu[i] * (1.0 - mu[i])).sum();
                }
                h[r][k] = (0..n).map(|i| cols[r][i] * (y[i] - mu[i])).sum();
            }
            // h * step = score
            let hcols: Vec<Vec<f64>> = (0..k).map(|c| (0..k).map(|r| h[r][c]).collect()).collect();
            let rhs: Vec<f64> = (0..k).map(|r| h[r][k]).collect();
            let step = normal_equations_square(&hcols, &rhs);
            let mut biggest: f64 = 0.0;
            for c in 0..k {
                b[c] += step[c];
                biggest = biggest.max(step[c].abs());
            }
            if biggest < 1e-12 {
                break;
            }
        }
        b
    }

    fn normal_equations_square(cols: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
        let k = cols.len();
        let mut a: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                let mut row: Vec<f64> = (0..k).map(|c| cols[c][r]).collect();
                row.push(rhs[r]);
                row
            })
            .collect();
        for piv in 0..k {
            let best = (piv..k).max_by(|&i, &j| a[i][piv].abs().total_cmp(&a[j][piv].abs())).unwrap();
            a.swap(piv, best);
            let d = a[piv][piv];
            for c in 0..=k {
                a[piv][c] /= d;
            }
            for r in 0..k {
                if r != piv {
                    let f = a[r][piv];
                    for c in 0..=k {
                        a[r][c] -= f * a[piv][c];
                    }
                }
            }
        }
        a.iter().map(|row| row[k]).collect()
    }

    #[test]
    fn irls_matches_newton_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 80;
        let x = Array2::from_shape_fn((n, 2), |_| normal(&mut rng));
        let y = Array1::from_shape_fn(n, |i| {
            let p = 1.0 / (1.0 + (-(0.3 + x[[i, 0]] - 0.5 * x[[i, 1]])).exp());
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        });
        let fit = fit_logistic(x.view(), y.view(), None).unwrap();
        let oracle = newton_logistic(&design_columns(x.view(), None), y.as_slice().unwrap());
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn uninformative_slope_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut small = 0;
        for _ in 0..100 {
            let n = 200;
            // covariate sd 2: the slope's standard error is then about 0.07
            let x = Array2::from_shape_fn((n, 1), |_| 2.0 * normal(&mut rng));
            let mut y = Array1::from_shape_fn(n, |i| (i % 2) as f64);
            // shuffle to decouple from row index
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                y.swap(i, j);
            }
            let fit = fit_logistic(x.view(), y.view(), None).unwrap();
            if fit.coefficient(1).unwrap().abs() < 0.2 {
                small += 1;
            }
        }
        assert!(small >= 95, "{small}");
    }

    #[test]
    fn separation_is_reported() {
        let x = Array2::from_shape_vec((6, 1), vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let y = Array1::from(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let err = fit_logistic(x.view(), y.view(), None).unwrap_err();
        assert!(matches!(err, Error::PerfectSeparation | Error::NonConvergence { .. }));
    }

    fn rss_fit(rss: f64, rank: usize, n: usize) -> FitResult<f64> {
        FitResult {
            family: Family::Gaussian,
            n,
            retained: (0..rank).collect(),
            coefficients: vec![0.0; rank],
            rss,
            deviance: rss,
            log_likelihood: 0.0,
            df_resid: n - rank,
            cov_unscaled: None,
        }
    }

    #[test]
    fn no_improvement_gives_one() {
        let p = partial_f_test(&rss_fit(5.0, 4, 30), &rss_fit(5.0, 2, 30)).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn single_df_f_equals_t_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((30, 2), |_| normal(&mut rng));
        let y = Array1::from_shape_fn(30, |i| 0.4 * x[[i, 1]] + normal(&mut rng));
        let full = fit_ols(x.view(), y.view(), None).unwrap();
        let reduced = fit_ols(x.slice(ndarray::s![.., 0..1]), y.view(), None).unwrap();
        let pf = partial_f_test(&full, &reduced).unwrap();
        let pt = full.t_pvalue(2).unwrap();
        assert!((pf - pt).abs() < 1e-10, "{pf} vs {pt}");
    }

    #[test]
    fn lrt_closed_forms() {
        let mk = |dev: f64, rank: usize| FitResult {
            deviance: dev,
            family: Family::Binomial,
            ..rss_fit(dev, rank, 50)
        };
        assert_eq!(lrt(&mk(10.0, 3), &mk(10.0, 3)).unwrap(), 1.0);
        let p = lrt(&mk(10.0, 3), &mk(10.0 + 2.0 * 20f64.ln(), 1)).unwrap();
        assert_relative_eq!(p, 0.05, epsilon = 1e-12);
        let p = lrt(&mk(10.0, 2), &mk(13.841, 1)).unwrap();
        assert!((p - 0.0500).abs() < 1e-4);
        assert!(matches!(lrt(&mk(10.0, 2), &mk(9.0, 1)), Err(Error::NegativeDeviance(_))));
        assert_eq!(lrt(&mk(10.0, 2), &mk(10.0 - 1e-7, 1)).unwrap(), 1.0);
    }

    fn half_dataset(n: usize, p: usize, seed: u64, signal: bool) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| normal(&mut rng));
        let y = Array1::from_shape_fn(n, |i| if signal { x[[i, 0]] } else { 0.0 } + normal(&mut rng));
        let names = (0..p).map(|j| format!("v{j}")).collect();
        Dataset::new(x, y, None, names, Family::Gaussian).unwrap()
    }

    #[test]
    fn disjoint_group_gives_one() {
        let d = half_dataset(30, 6, 1, true);
        let s = ScreenedSet { selected: vec![0, 1], target_size: 5 };
        assert_eq!(group_pvalue(&d, &s, &[3, 4]), 1.0);
    }

    #[test]
    fn singleton_group_matches_t_test() {
        let d = half_dataset(40, 6, 2, true);
        let s = ScreenedSet { selected: vec![2, 0, 4], target_size: 6 };
        let p = group_pvalue(&d, &s, &[0]);
        let x_sub = crate::linalg::take_rows(d.x(), &(0..40).collect::<Vec<_>>());
        let sub = ndarray::stack(
            ndarray::Axis(1),
            &[x_sub.column(2), x_sub.column(0), x_sub.column(4)],
        )
        .unwrap();
        let fit = fit_ols(sub.view(), d.y(), None).unwrap();
        let t = fit.t_pvalue(2).unwrap();
        assert!((p - t).abs() < 1e-10, "{p} vs {t}");
    }

    #[test]
    fn null_pvalues_are_uniform() {
        let mut ps: Vec<f64> = (0..200)
            .map(|r| {
                let d = half_dataset(50, 8, 1000 + r, false);
                let s = ScreenedSet { selected: vec![1, 3, 5], target_size: 8 };
                group_pvalue(&d, &s, &[0, 1, 2, 3, 4, 5])
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| ((i + 1) as f64 / 200.0 - p).abs().max((p - i as f64 / 200.0).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.10, "KS distance {ks}");
    }

    #[test]
    fn adding_variables_never_increases_rss() {
        let d = half_dataset(40, 6, 5, true);
        let y = d.y().to_vec();
        let mut cols = vec![vec![1.0; 40]];
        let mut last = f64::INFINITY;
        for j in 0..6 {
            cols.push(d.column(j).to_vec());
            let fit = ols_columns(&cols, &y).unwrap();
            assert!(fit.rss <= last + 1e-12);
            last = fit.rss;
        }
    }
}
