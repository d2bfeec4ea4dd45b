//! Combining evidence across studies: p-value aggregation (Tippett,
//! Stouffer) and the pooled-data baseline.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Mutex;

use ndarray::Array2;
use rayon::prelude::*;

use crate::dataset::{Dataset, StudyCollection};
use crate::error::{Error, Result};
use crate::hiertest::GroupTest;
use crate::multisplit::{derive_seed, make_splits, MultiSplitConfig, MultiSplitTester, SplitPlan};
use crate::scalar::Real;
use crate::special::{norm_cdf, norm_quantile};

/// Clamp applied to p-values before the normal quantile.
pub const STOUFFER_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetaMethod {
    #[default]
    Tippett,
    Stouffer,
}

impl FromStr for MetaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tippett" => Ok(MetaMethod::Tippett),
            "stouffer" => Ok(MetaMethod::Stouffer),
            other => Err(Error::InvalidArgument(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// `1 - (1 - min p)^m`.
pub fn tippett<T: Real>(p: &[T]) -> Result<T> {
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    let min = p.iter().copied().fold(T::one(), T::min).max(T::zero());
    if p.len() == 1 {
        return Ok(min);
    }
    // 1 - (1-x)^m = -expm1(m * ln1p(-x))
    let m = T::of_usize(p.len());
    Ok((-(m * (-min).ln_1p()).exp_m1()).min(T::one()))
}

/// `Phi(sum_l w_l Phi^{-1}(p_l))` with `w_l = sqrt(n_l / n)`.
pub fn stouffer<T: Real>(p: &[T], n_per_study: &[usize]) -> Result<T> {
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    if p.len() != n_per_study.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} p-values for {} study sizes",
            p.len(),
            n_per_study.len()
        )));
    }
    let total: usize = n_per_study.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("study sizes sum to zero".into()));
    }
    let eps = T::lit(STOUFFER_EPS);
    let z: T = p
        .iter()
        .zip(n_per_study)
        .map(|(&pl, &nl)| {
            let w = (T::of_usize(nl) / T::of_usize(total)).sqrt();
            w * norm_quantile(pl.max(eps).min(T::one() - eps))
        })
        .sum();
    Ok(norm_cdf(z))
}

pub fn combine<T: Real>(method: MetaMethod, p: &[T], n_per_study: &[usize]) -> Result<T> {
    match method {
        MetaMethod::Tippett => tippett(p),
        MetaMethod::Stouffer => stouffer(p, n_per_study),
    }
}

/// Per-study multi-split testers over a shared column universe.
#[derive(Debug)]
pub struct MetaTester<'a, T> {
    universe: Vec<String>,
    studies: Vec<MultiSplitTester<'a, T>>,
    /// Universe index to study column, per study.
    maps: Vec<Vec<Option<usize>>>,
    sizes: Vec<usize>,
    method: MetaMethod,
    /// Per-study p-values by group, shared across combination rules.
    cache: Mutex<HashMap<Vec<usize>, Vec<T>>>,
}

impl<'a, T: Real> MetaTester<'a, T> {
    pub fn new(
        studies: &'a StudyCollection<T>,
        plans: Vec<SplitPlan>,
        cfg: &MultiSplitConfig<T>,
        method: MetaMethod,
    ) -> Result<Self> {
        if plans.len() != studies.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} split plans for {} studies",
                plans.len(),
                studies.len()
            )));
        }
        let universe = studies.universe();
        let testers: Vec<Result<MultiSplitTester<'a, T>>> = studies
            .studies()
            .par_iter()
            .zip(plans)
            .map(|(d, plan)| MultiSplitTester::new(d, plan, cfg))
            .collect();
        let testers = testers.into_iter().collect::<Result<Vec<_>>>()?;
        let maps = studies
            .studies()
            .iter()
            .map(|d| universe.iter().map(|n| d.column_index(n)).collect())
            .collect();
        Ok(MetaTester {
            universe,
            studies: testers,
            maps,
            sizes: studies.studies().iter().map(Dataset::n).collect(),
            method,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn method(&self) -> MetaMethod {
        self.method
    }

    /// Switches the combination rule; per-study p-values are kept.
    pub fn set_method(&mut self, method: MetaMethod) {
        self.method = method;
    }

    pub fn studies(&self) -> &[MultiSplitTester<'a, T>] {
        &self.studies
    }

    /// Per-study p-values for a group of universe indices; a study holding
    /// none of the group's columns contributes 1.
    pub fn study_pvalues(&self, group: &[usize]) -> Vec<T> {
        if let Some(ps) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(group) {
            return ps.clone();
        }
        let ps: Vec<T> = self
            .studies
            .par_iter()
            .zip(&self.maps)
            .map(|(t, map)| {
                let cols: Vec<usize> = group.iter().filter_map(|&g| map[g]).collect();
                if cols.is_empty() {
                    T::one()
                } else {
                    t.pvalue(&cols)
                }
            })
            .collect();
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(group.to_vec(), ps.clone());
        ps
    }
}

impl<T: Real> GroupTest<T> for MetaTester<'_, T> {
    fn variables(&self) -> &[String] {
        &self.universe
    }

    fn raw_pvalue(&self, group: &[usize]) -> T {
        let ps = self.study_pvalues(group);
        combine(self.method, &ps, &self.sizes).unwrap_or(T::one())
    }
}

/// Seed domain of the per-study split plans.
const STUDY_PLAN_DOMAIN: u64 = 7;

/// One split plan per study, each from its own seed derived from `seed`.
pub fn study_plans<T: Real>(studies: &StudyCollection<T>, b: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    studies
        .studies()
        .iter()
        .enumerate()
        .map(|(l, d)| make_splits(d.n(), b, derive_seed(seed, STUDY_PLAN_DOMAIN, l as u64)))
        .collect()
}

/// Aggregated p-value for one named group across studies.
pub fn meta_group_pvalue<T: Real>(
    studies: &StudyCollection<T>,
    group: &[String],
    plans: Vec<SplitPlan>,
    cfg: &MultiSplitConfig<T>,
    method: MetaMethod,
) -> Result<T> {
    let tester = MetaTester::new(studies, plans, cfg, method)?;
    let index: HashMap<&str, usize> = tester
        .universe
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let idx: Vec<usize> = group.iter().filter_map(|n| index.get(n.as_str()).copied()).collect();
    Ok(tester.raw_pvalue(&idx))
}

/// Row-stacks the studies into one dataset with a separate intercept per
/// study (`m - 1` indicator columns appended to the controls). This
/// ignores between-study heterogeneity of the effects and serves as a
/// baseline only.
pub fn pool_studies<T: Real>(studies: &StudyCollection<T>) -> Result<Dataset<T>> {
    let all = studies.studies();
    let first = &all[0];
    if all.len() == 1 {
        return Ok(first.clone());
    }
    let names = first.colnames().to_vec();
    let mut col_maps = Vec::with_capacity(all.len());
    for (l, d) in all.iter().enumerate() {
        if d.p() != names.len() {
            return Err(Error::ColumnUniverseMismatch(format!(
                "study {} has {} columns, study 1 has {}",
                l + 1,
                d.p(),
                names.len()
            )));
        }
        let map = names
            .iter()
            .map(|n| {
                d.column_index(n).ok_or_else(|| {
                    Error::ColumnUniverseMismatch(format!("`{n}` missing from study {}", l + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        col_maps.push(map);
    }
    let q = first.q();
    if all.iter().any(|d| d.q() != q) {
        return Err(Error::DimensionMismatch("studies differ in control covariates".into()));
    }
    let n: usize = all.iter().map(Dataset::n).sum();
    let m = all.len();
    let mut x = Array2::<T>::zeros((n, names.len()));
    let mut clvar = Array2::<T>::zeros((n, q + m - 1));
    let mut y = ndarray::Array1::<T>::zeros(n);
    let mut row = 0;
    for (l, (d, map)) in all.iter().zip(&col_maps).enumerate() {
        for i in 0..d.n() {
            for (j, &src) in map.iter().enumerate() {
                x[[row + i, j]] = d.column(src)[i];
            }
            y[row + i] = d.y()[i];
            if let Some(c) = d.clvar() {
                for k in 0..q {
                    clvar[[row + i, k]] = c[[i, k]];
                }
            }
            if l > 0 {
                clvar[[row + i, q + l - 1]] = T::one();
            }
        }
        row += d.n();
    }
    Dataset::new(x, y, Some(clvar), names, first.family())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Family;
    use crate::multisplit::make_splits;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Standard normal CDF by the erf Taylor series, independent of the
    /// incomplete-gamma route used in the library.
    fn phi_series(x: f64) -> f64 {
        let z = x / std::f64::consts::SQRT_2;
        let mut term = z;
        let mut sum = z;
        for k in 1..200 {
            term *= -z * z / k as f64;
            sum += term / (2 * k + 1) as f64;
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn tippett_closed_forms() {
        assert_eq!(tippett(&[0.05, 1.0]).unwrap(), 0.0975);
        assert_eq!(tippett(&[0.3]).unwrap(), 0.3);
        assert_eq!(tippett(&[0.0, 0.4, 0.9]).unwrap(), 0.0);
        assert!(matches!(tippett::<f64>(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn stouffer_closed_forms() {
        assert_relative_eq!(stouffer(&[0.5, 0.5], &[10, 10]).unwrap(), 0.5, epsilon = 1e-14);
        let z = std::f64::consts::SQRT_2 * -1.6448536269514722;
        let expect = phi_series(z);
        let got = stouffer(&[0.05, 0.05], &[10, 10]).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.0100).abs() < 1e-4);
        let veto = stouffer(&[0.001, 1.0], &[10, 10]).unwrap();
        assert!(veto > 0.999, "{veto}");
        assert!(veto < 1.0);
    }

    proptest! {
        #[test]
        fn tippett_bounds_and_monotone(p in proptest::collection::vec(0.0f64..=1.0, 1..10), bump in 0.0f64..0.3, k in 0usize..10) {
            let t = tippett(&p).unwrap();
            let min = p.iter().copied().fold(1.0, f64::min);
            prop_assert!(t >= min - 1e-15);
            prop_assert!(t <= (p.len() as f64 * min).min(1.0) + 1e-15);
            let mut q = p.clone();
            let i = k % q.len();
            q[i] = (q[i] + bump).min(1.0);
            prop_assert!(tippett(&q).unwrap() >= t);
            q.reverse();
            prop_assert!((0.0..=1.0).contains(&tippett(&q).unwrap()));
        }

        #[test]
        fn stouffer_bounds_monotone_symmetric(p in proptest::collection::vec(0.0f64..=1.0, 1..10), bump in 0.0f64..0.3, k in 0usize..10) {
            let n = vec![7usize; p.len()];
            let s = stouffer(&p, &n).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let mut r = p.clone();
            r.reverse();
            prop_assert!((stouffer(&r, &n).unwrap() - s).abs() < 1e-12);
            let i = k % p.len();
            let mut q = p.clone();
            q[i] = (q[i] + bump).min(1.0);
            prop_assert!(stouffer(&q, &n).unwrap() >= s - 1e-12);
        }
    }

    #[test]
    fn null_rejection_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let (mut rt, mut rs) = (0usize, 0usize);
        for _ in 0..draws {
            let p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            rt += (tippett(&p).unwrap() <= 0.05) as usize;
            rs += (stouffer(&p, &[50, 100, 150]).unwrap() <= 0.05) as usize;
        }
        let bound = 0.05 + 2.0 * (0.05f64 * 0.95 / draws as f64).sqrt();
        assert!((rt as f64 / draws as f64) <= bound);
        assert!((rs as f64 / draws as f64) <= bound, "{} {}", rt, rs);
    }

    fn study(n: usize, p: usize, beta: f64, seed: u64, names: &[String]) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ndarray::Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| beta * x[[i, 0]] + rng.sample::<f64, _>(StandardNormal));
        Dataset::new(x, y, None, names.to_vec(), Family::Gaussian).unwrap()
    }

    #[test]
    fn pooling_construction() {
        let names: Vec<String> = (0..5).map(|j| format!("c{j}")).collect();
        let a = study(250, 5, 0.0, 1, &names);
        let mut rev = names.clone();
        rev.reverse();
        let b = study(250, 5, 0.0, 2, &rev);
        let s = StudyCollection::new(vec![a.clone(), b.clone()]).unwrap();
        let pooled = pool_studies(&s).unwrap();
        assert_eq!((pooled.n(), pooled.q()), (500, 1));
        // columns are aligned by name
        assert_eq!(pooled.column(0)[250], b.column(4)[0]);
        assert_eq!(pooled.clvar().unwrap()[[0, 0]], 0.0);
        assert_eq!(pooled.clvar().unwrap()[[499, 0]], 1.0);
        let one = pool_studies(&StudyCollection::new(vec![a.clone()]).unwrap()).unwrap();
        assert_eq!((one.n(), one.q()), (250, 0));
        let short = study(20, 4, 0.0, 3, &names[..4]);
        assert!(matches!(
            pool_studies(&StudyCollection::new(vec![a, short]).unwrap()),
            Err(Error::ColumnUniverseMismatch(_))
        ));
    }

    #[test]
    fn single_study_equals_multisplit() {
        let names: Vec<String> = (0..30).map(|j| format!("c{j}")).collect();
        let d = study(80, 30, 0.8, 4, &names);
        let s = StudyCollection::new(vec![d.clone()]).unwrap();
        let plan = make_splits(80, 10, 5).unwrap();
        let cfg = MultiSplitConfig::default();
        let single = MultiSplitTester::new(&d, plan.clone(), &cfg).unwrap().pvalue(&[0, 1]);
        for method in [MetaMethod::Tippett, MetaMethod::Stouffer] {
            let meta = meta_group_pvalue(&s, &names[..2], vec![plan.clone()], &cfg, method).unwrap();
            assert!((meta - single).abs() < 1e-12);
        }
        let absent = meta_group_pvalue(&s, &["zz".to_string()], vec![plan], &cfg, MetaMethod::Tippett).unwrap();
        assert_eq!(absent, 1.0);
    }

    #[test]
    fn tippett_beats_stouffer_with_one_strong_study() {
        let names: Vec<String> = (0..40).map(|j| format!("c{j}")).collect();
        let cfg = MultiSplitConfig::default();
        let (mut t_rej, mut s_rej) = (0, 0);
        for r in 0..20 {
            let s = StudyCollection::new(vec![
                study(120, 40, 1.5, 100 + r, &names),
                study(120, 40, 0.0, 200 + r, &names),
            ])
            .unwrap();
            let plans = vec![make_splits(120, 10, r).unwrap(), make_splits(120, 10, r + 50).unwrap()];
            let tester = MetaTester::new(&s, plans, &cfg, MetaMethod::Tippett).unwrap();
            let ps = tester.study_pvalues(&[0]);
            t_rej += (tippett(&ps).unwrap() <= 0.05) as usize;
            s_rej += (stouffer(&ps, &[120, 120]).unwrap() <= 0.05) as usize;
        }
        assert!(t_rej >= s_rej, "{t_rej} vs {s_rej}");
        assert!(t_rej >= 15, "{t_rej}");
    }
}
