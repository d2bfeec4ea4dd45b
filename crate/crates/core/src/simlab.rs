//! Simulation laboratory: synthetic genotype-like designs, responses with
//! a random active set, and power / FWER estimation for single-study,
//! aggregated and pooled analyses.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::{BlockMap, Dataset, Family, PositionMap, StudyCollection};
use crate::error::{Error, Result};
use crate::hiertest::{test_hierarchy, ClusterFinding};
use crate::hiertree::{cluster_position, cluster_var_studies, HierTree};
use crate::linalg::Qr;
use crate::meta::{pool_studies, study_plans, MetaMethod, MetaTester};
use crate::multisplit::{derive_seed, make_splits, MultiSplitConfig, MultiSplitTester};
use crate::screening::sigmoid;

const DOMAIN_DESIGN: u64 = 1;
const DOMAIN_REPLICATE: u64 = 2;
const DOMAIN_STUDY_SPLITS: u64 = 3;
const DOMAIN_POOLED_SPLITS: u64 = 4;

/// Latent thresholds giving genotype codes 0/1/2.
const GENOTYPE_CUT: f64 = 0.75;
/// Collinearity filter: set size and R² limit.
const COLLINEAR_SET: usize = 10;
const COLLINEAR_R2: f64 = 1.0 - 1e-8;
/// Kept columns searched for near-collinear partners of a new column.
const COLLINEAR_WINDOW: usize = 50;

/// Correlation of the latent Gaussian columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Independent,
    /// `cor(z_j, z_k) = rho^|j-k|`.
    Ar1(f64),
    /// Equicorrelated blocks of consecutive columns.
    Block { rho: f64, size: usize },
}

impl FromStr for Correlation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("invalid number `{v}`"));
        let corr = match parts.as_slice() {
            ["independent"] => Correlation::Independent,
            ["ar1", rho] => Correlation::Ar1(num(rho)?),
            ["block", rho, size] => Correlation::Block {
                rho: num(rho)?,
                size: size.parse().map_err(|_| format!("invalid block size `{size}`"))?,
            },
            _ => return Err(format!("unknown correlation `{s}` (independent | ar1:RHO | block:RHO:SIZE)")),
        };
        match corr {
            Correlation::Ar1(r) if !(0.0..1.0).contains(&r) => Err("ar1 rho must lie in [0, 1)".into()),
            Correlation::Block { rho, size } if !(0.0..1.0).contains(&rho) || size == 0 => {
                Err("block rho must lie in [0, 1) and size be positive".into())
            }
            c => Ok(c),
        }
    }
}

impl std::fmt::Display for Correlation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correlation::Independent => write!(f, "independent"),
            Correlation::Ar1(r) => write!(f, "ar1:{r}"),
            Correlation::Block { rho, size } => write!(f, "block:{rho}:{size}"),
        }
    }
}

/// Draws an `n x p` design of codes {0, 1, 2} by thresholding correlated
/// latent standard normals at `-0.75` and `0.75`.
pub fn gen_design(n: usize, p: usize, correlation: Correlation, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((n, p).f());
    let mut z = vec![0.0; p];
    for i in 0..n {
        match correlation {
            Correlation::Independent => {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            Correlation::Ar1(rho) => {
                let s = (1.0 - rho * rho).sqrt();
                for j in 0..p {
                    let e: f64 = rng.sample(StandardNormal);
                    z[j] = if j == 0 { e } else { rho * z[j - 1] + s * e };
                }
            }
            Correlation::Block { rho, size } => {
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                let mut f = 0.0;
                for j in 0..p {
                    if j % size == 0 {
                        f = rng.sample(StandardNormal);
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    z[j] = a * f + b * e;
                }
            }
        }
        for j in 0..p {
            x[[i, j]] = if z[j] < -GENOTYPE_CUT {
                0.0
            } else if z[j] > GENOTYPE_CUT {
                2.0
            } else {
                1.0
            };
        }
    }
    x
}

/// `y = X beta + sigma * eps` (Gaussian) or Bernoulli draws with success
/// probability `1 / (1 + exp(-X beta))` (binomial).
pub fn gen_response(x: &Array2<f64>, beta: &[f64], sigma: f64, family: Family, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let eta = x.dot(&Array1::from(beta.to_vec()));
    match family {
        Family::Gaussian => eta.mapv(|m| m + sigma * rng.sample::<f64, _>(StandardNormal)),
        Family::Binomial => eta.mapv(|m| f64::from(u8::from(rng.random::<f64>() < sigmoid(m)))),
    }
}

/// Columns kept after removing constant columns and, scanning by index,
/// any column that is (nearly) a linear combination of at most nine
/// already-kept columns in some study. Candidates are the kept columns
/// most correlated with the new one among the last few kept.
pub fn filter_columns(designs: &[Array2<f64>]) -> Vec<usize> {
    let p = designs.first().map_or(0, |x| x.ncols());
    let mut kept: Vec<usize> = Vec::new();
    'col: for j in 0..p {
        for x in designs {
            let c = x.column(j);
            if c.iter().all(|&v| v == c[0]) {
                continue 'col;
            }
        }
        for x in designs {
            let n = x.nrows();
            let center = |k: usize| {
                let c = x.column(k);
                let m = c.sum() / n as f64;
                c.mapv(|v| v - m)
            };
            let cj = center(j);
            let nj = cj.dot(&cj).sqrt();
            let mut cands: Vec<(f64, usize)> = kept
                .iter()
                .rev()
                .take(COLLINEAR_WINDOW)
                .map(|&k| {
                    let ck = center(k);
                    ((cj.dot(&ck) / (nj * ck.dot(&ck).sqrt())).abs(), k)
                })
                .collect();
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cands.truncate(COLLINEAR_SET - 1);
            if cands.is_empty() {
                continue;
            }
            let mut cols = vec![vec![1.0; n]];
            cols.extend(cands.iter().map(|&(_, k)| x.column(k).to_vec()));
            let (_, rss) = Qr::new(&cols, n).solve(&x.column(j).to_vec());
            if 1.0 - rss / (nj * nj) > COLLINEAR_R2 {
                continue 'col;
            }
        }
        kept.push(j);
    }
    kept
}

/// `(1/|S0|) * sum 1/|C|` over findings that contain an active variable.
pub fn adaptive_power(findings: &[Vec<usize>], active: &HashSet<usize>) -> f64 {
    if active.is_empty() {
        return 0.0;
    }
    findings
        .iter()
        .filter(|c| c.iter().any(|j| active.contains(j)))
        .fold(0.0, |acc, c| acc + 1.0 / c.len() as f64)
        / active.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Tippett,
    Stouffer,
    Pooling,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tippett" => Ok(Method::Tippett),
            "stouffer" => Ok(Method::Stouffer),
            "pooling" => Ok(Method::Pooling),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Tippett => "tippett",
            Method::Stouffer => "stouffer",
            Method::Pooling => "pooling",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMethod {
    Var,
    Position,
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub name: String,
    /// Observations per study; the number of studies is its length.
    pub n: Vec<usize>,
    pub p: usize,
    pub s0: usize,
    /// Value of the active coefficients, per study.
    pub beta: Vec<f64>,
    /// Noise standard deviation, per study.
    pub sigma: Vec<f64>,
    pub correlation: Correlation,
    /// Number of consecutive column blocks forming the tree's block level.
    pub blocks: usize,
    pub tree: TreeMethod,
    pub family: Family,
    pub splits: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            name: "custom".into(),
            n: vec![200],
            p: 500,
            s0: 10,
            beta: vec![1.0],
            sigma: vec![1.0],
            correlation: Correlation::Independent,
            blocks: 1,
            tree: TreeMethod::Var,
            family: Family::Gaussian,
            splits: 50,
            alpha: 0.05,
            replicates: 100,
            seed: 1,
            methods: vec![Method::Tippett],
        }
    }
}

impl SimScenario {
    pub fn studies(&self) -> usize {
        self.n.len()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let m = self.n.len();
        if m == 0 {
            return Err("at least one study is required".into());
        }
        if self.beta.len() != m || self.sigma.len() != m {
            return Err(format!("beta and sigma need one value or {m} values"));
        }
        if self.s0 > self.p {
            return Err(format!("s0 = {} exceeds p = {}", self.s0, self.p));
        }
        if self.sigma.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err("sigma must be positive".into());
        }
        if self.n.iter().any(|&n| n < crate::multisplit::MIN_OBSERVATIONS) {
            return Err(format!("each study needs at least {} observations", crate::multisplit::MIN_OBSERVATIONS));
        }
        if self.blocks == 0 || self.blocks > self.p {
            return Err("blocks must lie between 1 and p".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must lie in (0, 1)".into());
        }
        if self.splits == 0 || self.replicates == 0 || self.methods.is_empty() {
            return Err("splits, replicates and methods must be non-empty".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Per-study values
    /// are comma separated, a single value applies to every study.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            file: "scenario".into(),
            line,
            msg,
        };
        let mut sc = SimScenario::default();
        let mut studies: Option<(usize, usize)> = None;
        let (mut n_raw, mut beta_raw, mut sigma_raw) = (None, None, None);
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(ln, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(ln, format!("duplicate key `{key}`")));
            }
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(ln, format!("`{key}` needs an integer, got `{v}`")));
            let real = |v: &str| v.parse::<f64>().map_err(|_| err(ln, format!("`{key}` needs a number, got `{v}`")));
            let list = |v: &str| -> Result<Vec<f64>> { v.split(',').map(|t| real(t.trim())).collect() };
            match key {
                "name" => sc.name = value.to_string(),
                "studies" => studies = Some((int(value)?, ln)),
                "n" => n_raw = Some((value.split(',').map(|t| int(t.trim())).collect::<Result<Vec<_>>>()?, ln)),
                "p" => sc.p = int(value)?,
                "s0" => sc.s0 = int(value)?,
                "beta" => beta_raw = Some((list(value)?, ln)),
                "sigma" => sigma_raw = Some((list(value)?, ln)),
                "correlation" => sc.correlation = value.parse().map_err(|m| err(ln, m))?,
                "blocks" => sc.blocks = int(value)?,
                "tree" => {
                    sc.tree = match value {
                        "var" => TreeMethod::Var,
                        "position" => TreeMethod::Position,
                        v => return Err(err(ln, format!("tree must be `var` or `position`, got `{v}`"))),
                    }
                }
                "family" => sc.family = value.parse().map_err(|e: Error| err(ln, e.to_string()))?,
                "splits" | "B" => sc.splits = int(value)?,
                "alpha" => sc.alpha = real(value)?,
                "replicates" => sc.replicates = int(value)?,
                "seed" => sc.seed = value.parse().map_err(|_| err(ln, format!("invalid seed `{value}`")))?,
                "methods" => {
                    sc.methods = value
                        .split(',')
                        .map(|t| t.parse::<Method>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|m| err(ln, m))?
                }
                other => return Err(err(ln, format!("unknown key `{other}`"))),
            }
        }
        let (ns, n_line) = n_raw.unwrap_or((sc.n.clone(), 0));
        let m = match studies {
            Some((m, _)) if m > 0 => m,
            Some((_, ln)) => return Err(err(ln, "studies must be positive".into())),
            None => ns.len(),
        };
        let broadcast = |v: Vec<f64>, ln: usize, key: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; m]),
                k if k == m => Ok(v),
                k => Err(err(ln, format!("`{key}` has {k} values for {m} studies"))),
            }
        };
        sc.n = match ns.len() {
            1 => vec![ns[0]; m],
            k if k == m => ns,
            k => return Err(err(n_line, format!("`n` has {k} values for {m} studies"))),
        };
        let (b, bl) = beta_raw.unwrap_or((sc.beta.clone(), 0));
        sc.beta = broadcast(b, bl, "beta")?;
        let (s, sl) = sigma_raw.unwrap_or((sc.sigma.clone(), 0));
        sc.sigma = broadcast(s, sl, "sigma")?;
        sc.validate().map_err(|m| err(0, m))?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                file: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }

    /// Built-in settings: `null`, `meta-null`, `one-strong`, `ten-studies`,
    /// `sign-cancel`.
    pub fn preset(name: &str) -> Option<Self> {
        let base = SimScenario {
            name: name.to_string(),
            ..SimScenario::default()
        };
        let all = vec![Method::Tippett, Method::Stouffer, Method::Pooling];
        Some(match name {
            "null" => SimScenario {
                n: vec![200],
                p: 500,
                beta: vec![0.0],
                sigma: vec![1.0],
                replicates: 200,
                ..base
            },
            "meta-null" => SimScenario {
                n: vec![200, 200],
                p: 500,
                beta: vec![0.0, 0.0],
                sigma: vec![1.0, 1.0],
                replicates: 200,
                methods: all,
                ..base
            },
            "one-strong" => SimScenario {
                n: vec![300, 300],
                p: 1000,
                blocks: 2,
                beta: vec![3.0, 0.0],
                sigma: vec![1.0, 1.0],
                methods: vec![Method::Tippett, Method::Stouffer],
                ..base
            },
            "ten-studies" => SimScenario {
                n: vec![150; 10],
                p: 2000,
                blocks: 2,
                beta: vec![1.0; 10],
                sigma: vec![1.0; 10],
                methods: vec![Method::Tippett, Method::Pooling],
                ..base
            },
            "sign-cancel" => SimScenario {
                n: vec![300, 300],
                p: 1000,
                blocks: 2,
                beta: vec![1.0, -1.0],
                sigma: vec![1.0, 1.0],
                methods: vec![Method::Tippett, Method::Pooling],
                ..base
            },
            _ => return None,
        })
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["null", "meta-null", "one-strong", "ten-studies", "sign-cancel"]
    }
}

/// Per-method outcome of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    pub power: f64,
    /// At least one finding without an active variable.
    pub false_detection: bool,
    pub findings: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub power: f64,
    pub power_se: f64,
    pub fwer: f64,
    pub fwer_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub scenario: String,
    /// Columns left after the constant / collinear column filter.
    pub p_effective: usize,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl PowerReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// One row per method; the last column is `fwer + 2 se`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,method,replicates,power,power_se,fwer,fwer_se,fwer_upper\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                self.scenario,
                s.method,
                s.replicates,
                s.power,
                s.power_se,
                s.fwer,
                s.fwer_se,
                s.fwer + 2.0 * s.fwer_se
            );
        }
        out
    }

    /// One row per replicate and method; clusters are `;`-joined names and
    /// separated by `|`.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("replicate,method,power,false_detection,n_findings,findings\n");
        for r in &self.records {
            let clusters: Vec<String> = r.findings.iter().map(|c| c.join(";")).collect();
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                r.replicate,
                r.method,
                r.power,
                r.false_detection,
                r.findings.len(),
                clusters.join("|")
            );
        }
        out
    }
}

/// Designs, column names and tree fixed for all replicates of a scenario.
pub struct Fixture {
    pub designs: Vec<Array2<f64>>,
    pub names: Vec<String>,
    pub tree: HierTree,
}

/// Generates and filters the per-study designs and builds the tree.
pub fn build_fixture(sc: &SimScenario) -> Result<Fixture> {
    sc.validate().map_err(Error::InvalidArgument)?;
    let raw: Vec<Array2<f64>> = sc
        .n
        .iter()
        .enumerate()
        .map(|(l, &n)| gen_design(n, sc.p, sc.correlation, derive_seed(sc.seed, DOMAIN_DESIGN, l as u64)))
        .collect();
    let keep = filter_columns(&raw);
    if keep.len() < sc.s0.max(2) {
        return Err(Error::InvalidArgument("too few usable columns after filtering".into()));
    }
    let designs: Vec<Array2<f64>> = raw.iter().map(|x| x.select(ndarray::Axis(1), &keep)).collect();
    let names: Vec<String> = keep.iter().map(|j| format!("SNP.{}", j + 1)).collect();
    let chunk = keep.len().div_ceil(sc.blocks);
    let blocks = (sc.blocks > 1).then(|| {
        BlockMap::new(
            names
                .iter()
                .enumerate()
                .map(|(k, nm)| (nm.clone(), format!("chr{}", k / chunk + 1)))
                .collect(),
        )
    });
    let blocks = blocks.transpose()?;
    let tree = match sc.tree {
        TreeMethod::Var => {
            let studies = designs
                .iter()
                .map(|x| Dataset::new(x.clone(), Array1::zeros(x.nrows()), None, names.clone(), Family::Gaussian))
                .collect::<Result<Vec<_>>>()?;
            cluster_var_studies(&StudyCollection::new(studies)?, blocks.as_ref())?
        }
        TreeMethod::Position => {
            let pos = PositionMap::new(names.iter().cloned().zip(keep.iter().map(|&j| j as i64)).collect())?;
            cluster_position(&pos, blocks.as_ref())?
        }
    };
    Ok(Fixture { designs, names, tree })
}

fn cluster_indices(findings: &[ClusterFinding<f64>], index: &HashMap<&str, usize>) -> Vec<Vec<usize>> {
    findings
        .iter()
        .map(|f| f.group.iter().map(|n| index[n.as_str()]).collect())
        .collect()
}

/// Runs one replicate of every requested method.
pub fn run_replicate(sc: &SimScenario, fx: &Fixture, r: usize) -> Result<Vec<ReplicateRecord>> {
    let seed = derive_seed(sc.seed, DOMAIN_REPLICATE, r as u64);
    let p = fx.names.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut active: Vec<usize> = sample(&mut rng, p, sc.s0).into_vec();
    active.sort_unstable();
    // With all coefficients zero every variable is null.
    let any_signal = sc.beta.iter().any(|&b| b != 0.0);
    let active_set: HashSet<usize> = active.iter().copied().filter(|_| any_signal).collect();
    let studies = fx
        .designs
        .iter()
        .enumerate()
        .map(|(l, x)| {
            let mut beta = vec![0.0; p];
            for &j in &active {
                beta[j] = sc.beta[l];
            }
            let y = gen_response(x, &beta, sc.sigma[l], sc.family, derive_seed(seed, 0, l as u64));
            Dataset::new(x.clone(), y, None, fx.names.clone(), sc.family)
        })
        .collect::<Result<Vec<_>>>()?;
    let collection = StudyCollection::new(studies)?;
    let cfg = MultiSplitConfig::default();
    let index: HashMap<&str, usize> = fx.names.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    let record = |method: Method, findings: &[ClusterFinding<f64>]| {
        let groups = cluster_indices(findings, &index);
        ReplicateRecord {
            replicate: r,
            method,
            power: adaptive_power(&groups, &active_set),
            false_detection: groups.iter().any(|g| g.iter().all(|j| !active_set.contains(j))),
            findings: findings.iter().map(|f| f.group.clone()).collect(),
        }
    };
    let mut out = Vec::new();
    let mut methods = sc.methods.clone();
    methods.sort();
    methods.dedup();
    let aggregated: Vec<Method> = methods.iter().copied().filter(|&m| m != Method::Pooling).collect();
    if !aggregated.is_empty() {
        let plans = study_plans(&collection, sc.splits, derive_seed(seed, DOMAIN_STUDY_SPLITS, 0))?;
        let mut tester = MetaTester::new(&collection, plans, &cfg, MetaMethod::Tippett)?;
        for &m in &aggregated {
            tester.set_method(match m {
                Method::Stouffer => MetaMethod::Stouffer,
                _ => MetaMethod::Tippett,
            });
            let res = test_hierarchy(&tester, &fx.tree, sc.alpha)?;
            out.push(record(m, &res.findings));
        }
    }
    if methods.contains(&Method::Pooling) {
        let pooled = pool_studies(&collection)?;
        let plan = make_splits(pooled.n(), sc.splits, derive_seed(seed, DOMAIN_POOLED_SPLITS, 0))?;
        let tester = MultiSplitTester::new(&pooled, plan, &cfg)?;
        let res = test_hierarchy(&tester, &fx.tree, sc.alpha)?;
        out.push(record(Method::Pooling, &res.findings));
    }
    Ok(out)
}

/// Runs all replicates (concurrently) and summarizes power and FWER.
pub fn run_experiment(sc: &SimScenario) -> Result<PowerReport> {
    let fx = build_fixture(sc)?;
    let per_rep: Vec<Result<Vec<ReplicateRecord>>> =
        (0..sc.replicates).into_par_iter().map(|r| run_replicate(sc, &fx, r)).collect();
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    let mut methods = sc.methods.clone();
    methods.sort();
    methods.dedup();
    let summaries = methods
        .iter()
        .map(|&m| summarize(m, &records))
        .collect();
    Ok(PowerReport {
        scenario: sc.name.clone(),
        p_effective: fx.names.len(),
        summaries,
        records,
    })
}

fn summarize(method: Method, records: &[ReplicateRecord]) -> MethodSummary {
    let rs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
    let k = rs.len() as f64;
    let power = rs.iter().map(|r| r.power).sum::<f64>() / k;
    let var = if rs.len() > 1 {
        rs.iter().map(|r| (r.power - power).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let fwer = rs.iter().filter(|r| r.false_detection).count() as f64 / k;
    MethodSummary {
        method,
        replicates: rs.len(),
        power,
        power_se: (var / k).sqrt(),
        fwer,
        fwer_se: (fwer * (1.0 - fwer) / k).sqrt(),
    }
}
