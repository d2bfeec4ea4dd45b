//! Multi sample splitting: random half-splits, screening on one half,
//! classical tests on the other, and aggregation of the dependent
//! per-split p-values into one valid p-value.

use std::sync::atomic::{AtomicUsize, Ordering};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Family};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::lowdim::{fit_columns, nested_test, FitResult};
use crate::scalar::Real;
use crate::screening::{fit_lasso_path, screen, target_size, LassoConfig, ScreenedSet};
use crate::special::f_sf;

/// Smallest sample size accepted for splitting.
pub const MIN_OBSERVATIONS: usize = 8;

/// Default number of random splits.
pub const DEFAULT_SPLITS: usize = 50;

/// One random partition of the observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Screening half, `floor(n/2)` sorted indices.
    pub first: Vec<usize>,
    /// Inference half, the sorted complement.
    pub second: Vec<usize>,
    /// RNG stream the partition was drawn from.
    pub stream: u64,
}

/// `B` independent half-splits reproducible from one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub n: usize,
    pub seed: u64,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Draws `b` uniform half-splits of `0..n`; split `k` uses ChaCha stream `k`
/// of `seed`, so any split can be regenerated independently.
pub fn make_splits(n: usize, b: usize, seed: u64) -> Result<SplitPlan> {
    if n < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            n,
            min: MIN_OBSERVATIONS,
        });
    }
    if b == 0 {
        return Err(Error::InvalidArgument("number of splits must be positive".into()));
    }
    let half = n / 2;
    let splits = (0..b as u64)
        .map(|stream| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut first = idx[..half].to_vec();
            let mut second = idx[half..].to_vec();
            first.sort_unstable();
            second.sort_unstable();
            Split {
                first,
                second,
                stream,
            }
        })
        .collect();
    Ok(SplitPlan { n, seed, splits })
}

/// Independent 64-bit seed for item `k` of an analysis component `domain`,
/// drawn from a ChaCha stream disjoint from those used for splits.
pub fn derive_seed(seed: u64, domain: u64, k: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | domain);
    rng.set_word_pos(2 * k as u128);
    rng.next_u64()
}

/// Lower end of the quantile search in the aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConfig<T> {
    pub gamma_min: T,
}

impl<T: Real> Default for GammaConfig<T> {
    fn default() -> Self {
        GammaConfig {
            gamma_min: T::lit(0.05),
        }
    }
}

impl<T: Real> GammaConfig<T> {
    pub fn new(gamma_min: T) -> Result<Self> {
        if !(gamma_min > T::zero() && gamma_min < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "gamma_min must lie in (0, 1), got {gamma_min}"
            )));
        }
        Ok(GammaConfig { gamma_min })
    }

    /// Price for searching over quantile levels: `1 - ln(gamma_min)`.
    pub fn factor(&self) -> T {
        T::one() - self.gamma_min.ln()
    }
}

/// Aggregates per-split p-values:
/// `min(1, (1 - ln gmin) * inf_{g in (gmin, 1)} q_g(p / g))`.
///
/// With the order-statistic quantile `q_g = p_(ceil(g B))`, `Q` is
/// decreasing on each `((k-1)/B, k/B]`, so the infimum is the minimum of
/// `p_(k) * B / k` over the `k` with `k/B > gmin` (the `k = B` term being
/// the limit `g -> 1`).
pub fn aggregate_pvalues<T: Real>(p_splits: &[T], cfg: &GammaConfig<T>) -> Result<T> {
    if p_splits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = p_splits.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let b = sorted.len();
    let bb = T::of_usize(b);
    let mut best = T::infinity();
    for k in 1..=b {
        let gamma = T::of_usize(k) / bb;
        if gamma <= cfg.gamma_min {
            continue;
        }
        best = best.min(sorted[k - 1] / gamma);
    }
    Ok((cfg.factor() * best).min(T::one()))
}

/// Which sample size the `floor(n/6)` screening target refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScreeningTarget {
    /// Size of the full dataset.
    #[default]
    FullSample,
    /// Size of the screening half.
    HalfSample,
}

/// Options for a multi-split analysis.
#[derive(Debug, Clone)]
pub struct MultiSplitConfig<T> {
    pub gamma: GammaConfig<T>,
    pub lasso: LassoConfig<T>,
    pub target: ScreeningTarget,
}

impl<T: Real> Default for MultiSplitConfig<T> {
    fn default() -> Self {
        MultiSplitConfig {
            gamma: GammaConfig::default(),
            lasso: LassoConfig::default(),
            target: ScreeningTarget::FullSample,
        }
    }
}

#[derive(Debug, Clone)]
struct SplitModel<T> {
    screened: ScreenedSet,
    // [1 | clvar | screened] on the inference half
    design: Vec<Vec<T>>,
    y: Vec<T>,
    full: Option<FitResult<T>>,
}

impl<T: Real> SplitModel<T> {
    fn offset(&self) -> usize {
        self.design.len() - self.screened.len()
    }

    fn pvalue(&self, family: Family, sorted_group: &[usize]) -> T {
        let tested: Vec<usize> = self
            .screened
            .selected
            .iter()
            .enumerate()
            .filter(|(_, j)| sorted_group.binary_search(j).is_ok())
            .map(|(k, _)| k + self.offset())
            .collect();
        if tested.is_empty() {
            return T::one();
        }
        let Some(full) = &self.full else {
            return T::one();
        };
        let p = if family == Family::Gaussian && full.rank() == self.design.len() {
            self.wald_f(full, &tested)
        } else {
            None
        };
        p.unwrap_or_else(|| self.refit(full, &tested))
            .max(T::zero())
            .min(T::one())
    }

    /// Partial F-test from the full fit alone: for a full-rank linear model
    /// `RSS_red - RSS_full = b_G' (V_GG)^{-1} b_G` with `V = (X'X)^{-1}`.
    fn wald_f(&self, full: &FitResult<T>, tested: &[usize]) -> Option<T> {
        let cov = full.cov_unscaled.as_ref()?;
        let r = full.rank();
        let k = tested.len();
        let mut sub = vec![T::zero(); k * k];
        for (a, &ia) in tested.iter().enumerate() {
            for (b, &ib) in tested.iter().enumerate() {
                sub[a * k + b] = cov[ia * r + ib];
            }
        }
        let beta: Vec<T> = tested.iter().map(|&i| full.coefficients[i]).collect();
        let sol = cholesky_solve(&sub, k, &beta)?;
        let extra = beta.iter().zip(&sol).map(|(&a, &b)| a * b).sum::<T>();
        if full.df_resid < 1 || full.rss <= T::epsilon() * (full.rss + extra) {
            return Some(T::one());
        }
        let f = (extra.max(T::zero()) / T::of_usize(k)) / (full.rss / T::of_usize(full.df_resid));
        Some(f_sf(f, T::of_usize(k), T::of_usize(full.df_resid)))
    }

    fn refit(&self, full: &FitResult<T>, tested: &[usize]) -> T {
        let cols: Vec<Vec<T>> = self
            .design
            .iter()
            .enumerate()
            .filter(|(c, _)| !tested.contains(c))
            .map(|(_, col)| col.clone())
            .collect();
        match fit_columns(&cols, &self.y, full.family) {
            Ok(reduced) => nested_test(full, &reduced).unwrap_or(T::one()),
            Err(_) => T::one(),
        }
    }
}

/// Per-split screening and full-model fits computed once, reused for
/// every group tested on the same data.
#[derive(Debug)]
pub struct MultiSplitTester<'a, T> {
    data: &'a Dataset<T>,
    plan: SplitPlan,
    gamma: GammaConfig<T>,
    models: Vec<SplitModel<T>>,
    screenings: AtomicUsize,
}

impl<'a, T: Real> MultiSplitTester<'a, T> {
    /// Screens every split (in parallel on the current rayon pool).
    pub fn new(data: &'a Dataset<T>, plan: SplitPlan, cfg: &MultiSplitConfig<T>) -> Result<Self> {
        if plan.n != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "split plan for {} observations, data has {}",
                plan.n,
                data.n()
            )));
        }
        let screenings = AtomicUsize::new(0);
        let models = plan
            .splits
            .par_iter()
            .map(|split| {
                screenings.fetch_add(1, Ordering::Relaxed);
                build_split_model(data, split, cfg)
            })
            .collect();
        Ok(MultiSplitTester {
            data,
            plan,
            gamma: cfg.gamma,
            models,
            screenings,
        })
    }

    pub fn data(&self) -> &'a Dataset<T> {
        self.data
    }

    pub fn plan(&self) -> &SplitPlan {
        &self.plan
    }

    pub fn screened(&self, b: usize) -> &ScreenedSet {
        &self.models[b].screened
    }

    /// Number of screening runs performed so far.
    pub fn screening_runs(&self) -> usize {
        self.screenings.load(Ordering::Relaxed)
    }

    /// The `B` raw per-split p-values for `group` (column indices).
    pub fn split_pvalues(&self, group: &[usize]) -> Vec<T> {
        let mut sorted = group.to_vec();
        sorted.sort_unstable();
        let family = self.data.family();
        match family {
            Family::Gaussian => self.models.iter().map(|m| m.pvalue(family, &sorted)).collect(),
            Family::Binomial => self.models.par_iter().map(|m| m.pvalue(family, &sorted)).collect(),
        }
    }

    /// Aggregated multi-split p-value for `group`.
    pub fn pvalue(&self, group: &[usize]) -> T {
        let ps = self.split_pvalues(group);
        aggregate_pvalues(&ps, &self.gamma).unwrap_or(T::one())
    }
}

fn build_split_model<T: Real>(
    data: &Dataset<T>,
    split: &Split,
    cfg: &MultiSplitConfig<T>,
) -> SplitModel<T> {
    let n_target = match cfg.target {
        ScreeningTarget::FullSample => data.n(),
        ScreeningTarget::HalfSample => split.first.len(),
    };
    let d1 = data.subset_rows(&split.first);
    let mut lasso = cfg.lasso.clone();
    lasso.max_entries = Some(target_size(n_target));
    lasso.truncate_on_failure = true;
    let screened = match fit_lasso_path(d1.x(), d1.y(), d1.clvar(), data.family(), &lasso) {
        Ok(path) => screen(&path, n_target),
        Err(e) => {
            warn!("screening failed on split {}: {e}; treating as empty", split.stream);
            ScreenedSet {
                selected: Vec::new(),
                target_size: target_size(n_target),
            }
        }
    };
    let rows = &split.second;
    let mut design = vec![vec![T::one(); rows.len()]];
    if let Some(c) = data.clvar() {
        for col in c.columns() {
            design.push(rows.iter().map(|&i| col[i]).collect());
        }
    }
    for &j in &screened.selected {
        let col = data.column(j);
        design.push(rows.iter().map(|&i| col[i]).collect());
    }
    let y: Vec<T> = rows.iter().map(|&i| data.y()[i]).collect();
    let full = if screened.is_empty() {
        None
    } else {
        fit_columns(&design, &y, data.family()).ok()
    };
    SplitModel {
        screened,
        design,
        y,
        full,
    }
}

/// Convenience wrapper: screen all splits and test one group.
pub fn multisplit_pvalue<T: Real>(
    d: &Dataset<T>,
    group: &[usize],
    plan: SplitPlan,
    cfg: &MultiSplitConfig<T>,
) -> Result<T> {
    Ok(MultiSplitTester::new(d, plan, cfg)?.pvalue(group))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowdim::group_pvalue;
    use approx::assert_relative_eq;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Minimizes Q over the grid g = i/N, i > gmin*N, up to and including
    /// g = 1 (Q is left-continuous, so the infimum over the open interval
    /// equals the minimum over this half-open grid once it contains every
    /// k/B).
    fn brute_force(p: &[f64], gmin: f64, grid: usize) -> f64 {
        let mut sorted = p.to_vec();
        sorted.sort_by(f64::total_cmp);
        let b = p.len();
        let mut best = f64::INFINITY;
        for i in 1..=grid {
            let g = i as f64 / grid as f64;
            if g <= gmin {
                continue;
            }
            let k = ((g * b as f64).ceil() as usize).clamp(1, b);
            best = best.min(sorted[k - 1] / g);
        }
        (best * (1.0 - gmin.ln())).min(1.0)
    }

    #[test]
    fn constant_pvalues() {
        let cfg = GammaConfig::default();
        let q = 0.01;
        let out = aggregate_pvalues(&vec![q; 50], &cfg).unwrap();
        assert_relative_eq!(out, (1.0 - 0.05f64.ln()) * q, epsilon = 1e-15);
        assert_relative_eq!(cfg.factor(), 3.995_732_273_553_991, epsilon = 1e-12);
        assert_eq!(aggregate_pvalues(&vec![1.0; 50], &cfg).unwrap(), 1.0);
        assert_eq!(aggregate_pvalues(&[0.9; 10], &cfg).unwrap(), 1.0);
    }

    #[test]
    fn two_split_example() {
        let cfg = GammaConfig::default();
        let out = aggregate_pvalues(&[0.001, 1.0], &cfg).unwrap();
        assert_relative_eq!(out, 0.002 * (1.0 - 0.05f64.ln()), epsilon = 1e-15);
        assert!((out - 0.0080).abs() < 1e-4);
        assert!((out - brute_force(&[0.001, 1.0], 0.05, 1_000_000)).abs() < 1e-9);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            aggregate_pvalues::<f64>(&[], &GammaConfig::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let plan = make_splits(10, 5, 3).unwrap();
        for s in &plan.splits {
            assert_eq!(s.first.len(), 5);
            let mut all: Vec<usize> = s.first.iter().chain(&s.second).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(plan, make_splits(10, 5, 3).unwrap());
        assert_ne!(plan, make_splits(10, 5, 4).unwrap());
        assert!(matches!(make_splits(7, 5, 1), Err(Error::TooFewObservations { .. })));
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..3)
            .flat_map(|d| (0..100).map(move |k| derive_seed(42, d, k)))
            .collect();
        assert_eq!(seeds.len(), 300);
        assert_eq!(derive_seed(42, 1, 7), derive_seed(42, 1, 7));
    }

    #[test]
    fn fifty_splits_are_distinct() {
        let plan = make_splits(500, 50, 11).unwrap();
        let distinct: std::collections::HashSet<_> = plan.splits.iter().map(|s| s.first.clone()).collect();
        assert!(distinct.len() >= 49);
    }

    proptest! {
        #[test]
        fn monotone_permutation_invariant_and_above_min(
            mut p in proptest::collection::vec(0.0f64..=1.0, 1..60),
            bump in 0.0f64..0.5,
            idx in 0usize..60,
        ) {
            let cfg = GammaConfig::default();
            let base = aggregate_pvalues(&p, &cfg).unwrap();
            let min = p.iter().copied().fold(1.0, f64::min);
            prop_assert!(base >= min);
            prop_assert!((0.0..=1.0).contains(&base));
            let mut rev = p.clone();
            rev.reverse();
            prop_assert_eq!(aggregate_pvalues(&rev, &cfg).unwrap(), base);
            let i = idx % p.len();
            p[i] = (p[i] + bump).min(1.0);
            prop_assert!(aggregate_pvalues(&p, &cfg).unwrap() >= base);
        }
    }

    fn synthetic(n: usize, p: usize, beta: &[(usize, f64)], seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| {
            beta.iter().map(|&(j, b)| b * x[[i, j]]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)
        });
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Dataset::new(x, y, None, names, Family::Gaussian).unwrap()
    }

    #[test]
    fn cached_route_matches_explicit_refits() {
        let d = synthetic(80, 40, &[(0, 1.0), (1, 0.5), (5, -0.7)], 5);
        let plan = make_splits(80, 6, 9).unwrap();
        let tester = MultiSplitTester::new(&d, plan.clone(), &MultiSplitConfig::default()).unwrap();
        for group in [vec![0], vec![1, 2, 3], vec![5, 0, 7], (0..40).collect::<Vec<_>>()] {
            let fast = tester.split_pvalues(&group);
            for (b, split) in plan.splits.iter().enumerate() {
                let d2 = d.subset_rows(&split.second);
                let slow = group_pvalue(&d2, tester.screened(b), &group);
                assert!((fast[b] - slow).abs() < 1e-10, "split {b}: {} vs {slow}", fast[b]);
            }
        }
    }

    #[test]
    fn screening_runs_once_per_split() {
        let d = synthetic(60, 30, &[(2, 1.0)], 6);
        let tester = MultiSplitTester::new(&d, make_splits(60, 7, 1).unwrap(), &MultiSplitConfig::default()).unwrap();
        let _ = tester.pvalue(&[2]);
        let _ = tester.pvalue(&[0, 1, 2, 3]);
        let _ = tester.pvalue(&(0..30).collect::<Vec<_>>());
        assert_eq!(tester.screening_runs(), 7);
    }

    #[test]
    fn disjoint_group_aggregates_to_one() {
        let d = synthetic(60, 30, &[(2, 3.0)], 7);
        // target floor(60/6) = 10 of 30 variables: use an empty-looking group
        let tester = MultiSplitTester::new(&d, make_splits(60, 10, 2).unwrap(), &MultiSplitConfig::default()).unwrap();
        let never: Vec<usize> = (0..30)
            .filter(|j| (0..10).all(|b| !tester.screened(b).contains(*j)))
            .collect();
        if !never.is_empty() {
            assert_eq!(tester.pvalue(&never), 1.0);
        }
        assert_eq!(tester.pvalue(&[]), 1.0);
    }

    #[test]
    fn strong_variable_is_significant() {
        let mut hits = 0;
        for r in 0..20 {
            let d = synthetic(300, 100, &[(4, 3.0)], 100 + r);
            let p = multisplit_pvalue(&d, &[4], make_splits(300, 20, r).unwrap(), &MultiSplitConfig::default()).unwrap();
            if p < 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}");
    }
}
