//! Explained variance of a group of variables, averaged over the
//! inference halves of the sample splits: adjusted R² for a continuous
//! response, Nagelkerke's R² for a binary one.

use log::warn;
use rayon::prelude::*;

use crate::dataset::{Dataset, Family};
use crate::error::{Error, Result};
use crate::lowdim::fit_columns;
use crate::multisplit::{MultiSplitConfig, MultiSplitTester, SplitPlan};
use crate::scalar::Real;

/// How a split whose screened set misses the cluster enters the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptySplit {
    /// Counts as zero explained variance.
    #[default]
    Zero,
    /// Left out of the mean.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct R2Options {
    pub empty: EmptySplit,
    /// Whether the Nagelkerke null model contains the control covariates.
    pub null_with_clvar: bool,
}

impl Default for R2Options {
    fn default() -> Self {
        R2Options {
            empty: EmptySplit::Zero,
            null_with_clvar: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2Report<T> {
    pub mean: T,
    /// Per split; `None` when no screened variable fell in the cluster or
    /// the fit failed.
    pub per_split: Vec<Option<T>>,
}

/// R² of `cluster` (all columns when `None`) over the splits of `tester`.
pub fn compute_r2_with<T: Real>(
    tester: &MultiSplitTester<'_, T>,
    cluster: Option<&[String]>,
    opts: &R2Options,
) -> Result<R2Report<T>> {
    let d = tester.data();
    let members: Option<Vec<usize>> = cluster
        .map(|names| {
            names
                .iter()
                .map(|n| d.column_index(n).ok_or_else(|| Error::UnknownColname(n.clone())))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let per_split: Vec<Option<T>> = tester
        .plan()
        .splits
        .par_iter()
        .enumerate()
        .map(|(b, split)| {
            let vars: Vec<usize> = tester
                .screened(b)
                .selected
                .iter()
                .copied()
                .filter(|j| members.as_ref().is_none_or(|m| m.contains(j)))
                .collect();
            if vars.is_empty() {
                return None;
            }
            match split_r2(d, &split.second, &vars, opts) {
                Ok(r2) => Some(r2),
                Err(e) => {
                    warn!("R² fit failed on split {b}: {e}");
                    None
                }
            }
        })
        .collect();
    let used: Vec<T> = match opts.empty {
        EmptySplit::Zero => per_split.iter().map(|v| v.unwrap_or(T::zero())).collect(),
        EmptySplit::Skip => per_split.iter().flatten().copied().collect(),
    };
    let mean = if used.is_empty() {
        T::zero()
    } else {
        used.iter().copied().sum::<T>() / T::of_usize(used.len())
    };
    Ok(R2Report { mean, per_split })
}

/// Screens every split of `plan` and reports the R² of `cluster`.
pub fn compute_r2<T: Real>(
    d: &Dataset<T>,
    cluster: Option<&[String]>,
    plan: SplitPlan,
    cfg: &MultiSplitConfig<T>,
    opts: &R2Options,
) -> Result<R2Report<T>> {
    let tester = MultiSplitTester::new(d, plan, cfg)?;
    compute_r2_with(&tester, cluster, opts)
}

fn base_columns<T: Real>(d: &Dataset<T>, rows: &[usize], with_clvar: bool) -> Vec<Vec<T>> {
    let mut cols = vec![vec![T::one(); rows.len()]];
    if let (true, Some(c)) = (with_clvar, d.clvar()) {
        for col in c.columns() {
            cols.push(rows.iter().map(|&i| col[i]).collect());
        }
    }
    cols
}

fn split_r2<T: Real>(d: &Dataset<T>, rows: &[usize], vars: &[usize], opts: &R2Options) -> Result<T> {
    let y: Vec<T> = rows.iter().map(|&i| d.y()[i]).collect();
    let mut cols = base_columns(d, rows, true);
    for &j in vars {
        let col = d.column(j);
        cols.push(rows.iter().map(|&i| col[i]).collect());
    }
    let full = fit_columns(&cols, &y, d.family())?;
    let n2 = T::of_usize(rows.len());
    match d.family() {
        Family::Gaussian => {
            let mean = y.iter().copied().sum::<T>() / n2;
            let tss: T = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
            if tss <= T::zero() || full.df_resid == 0 {
                return Err(Error::DegenerateFit("constant response on split".into()));
            }
            Ok(T::one() - (full.rss / T::of_usize(full.df_resid)) / (tss / (n2 - T::one())))
        }
        Family::Binomial => {
            let null = fit_columns(&base_columns(d, rows, opts.null_with_clvar), &y, Family::Binomial)?;
            Ok(nagelkerke(null.log_likelihood, full.log_likelihood, rows.len()))
        }
    }
}

/// `[1 - (L0/L1)^{2/n}] / [1 - L0^{2/n}]` from log-likelihoods.
pub fn nagelkerke<T: Real>(ll0: T, ll1: T, n: usize) -> T {
    let k = T::lit(2.0) / T::of_usize(n);
    let num = -(k * (ll0 - ll1)).exp_m1();
    let den = -(k * ll0).exp_m1();
    num / den
}
