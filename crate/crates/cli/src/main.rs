//! `hierinf` command-line tool: build variable trees, run hierarchical
//! tests, report explained variance and run simulation experiments.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hierinf::dataset::{load_dataset, load_studies, read_matrix, Dataset};
use hierinf::hiertest::{findings_delimited, print_findings, test_hierarchy};
use hierinf::hiertree::{cluster_position, cluster_var, cluster_var_studies, positions_for};
use hierinf::meta::{study_plans, MetaTester};
use hierinf::multisplit::{make_splits, GammaConfig, MultiSplitConfig, MultiSplitTester};
use hierinf::simlab::{run_experiment, SimScenario};
use hierinf::varexpl::{compute_r2, EmptySplit, R2Options};
use hierinf::{BlockMap, Error, Family, HierTree, MetaMethod, PositionMap};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "hierinf", version, about = "Hierarchical inference for high-dimensional regression")]
struct Cli {
    /// Number of worker threads (default: all available cores).
    #[arg(long, global = true, env = "HIERINF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a hierarchical tree over the variables and save it.
    Cluster(ClusterArgs),
    /// Test the tree top-down and print the significant clusters.
    Test(TestArgs),
    /// Explained variance of a cluster (or of all variables).
    R2(R2Args),
    /// Run a power / FWER simulation experiment.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeMethodArg {
    Var,
    Position,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Tippett,
    Stouffer,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, value_enum)]
    method: TreeMethodArg,
    /// Design matrix (header row of column names).
    #[arg(long, conflicts_with = "studies")]
    x: Option<PathBuf>,
    /// Manifest of studies (header `x,y,clvar`); clustering uses all of them.
    #[arg(long)]
    studies: Option<PathBuf>,
    /// Two-column file `name,block`.
    #[arg(long)]
    block: Option<PathBuf>,
    /// Two-column file `name,position`.
    #[arg(long)]
    position: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, required_unless_present = "studies", conflicts_with = "studies", requires = "y")]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long, requires = "x")]
    clvar: Option<PathBuf>,
    /// Manifest of studies (header `x,y,clvar`, paths relative to it).
    #[arg(long)]
    studies: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: FamilyArg,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    tree: PathBuf,
    /// Number of sample splits.
    #[arg(long = "B", default_value_t = 50)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    /// Aggregation rule across studies.
    #[arg(long, value_enum, default_value = "tippett")]
    agg: AggArg,
    /// Lower end of the quantile search when aggregating over splits.
    #[arg(long, default_value_t = 0.05)]
    gamma_min: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Names shown per cluster in the table format.
    #[arg(long, default_value_t = 5)]
    n_terms: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct R2Args {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    clvar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: FamilyArg,
    /// `;`-separated column names; all columns when omitted.
    #[arg(long)]
    cluster: Option<String>,
    #[arg(long = "B", default_value_t = 50)]
    b: usize,
    #[arg(long)]
    seed: u64,
    /// Leave splits whose screened set misses the cluster out of the mean.
    #[arg(long)]
    skip_empty: bool,
    /// Nagelkerke null model with the intercept only.
    #[arg(long)]
    null_without_clvar: bool,
}

#[derive(Args)]
#[group(id = "source", required = true, args = ["scenario", "preset"])]
struct SimulateArgs {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario: null, meta-null, one-strong, ten-studies, sign-cancel.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: u64,
    /// Overrides the scenario's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Summary table (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate findings.
    #[arg(long)]
    log: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn run_cluster(a: &ClusterArgs) -> Outcome {
    let block = a.block.as_deref().map(BlockMap::load).transpose()?;
    let tree: HierTree = match a.method {
        TreeMethodArg::Var => {
            if let Some(m) = &a.studies {
                cluster_var_studies(&load_studies::<f64>(m, Family::Gaussian)?, block.as_ref())?
            } else if let Some(x) = &a.x {
                let (names, m) = read_matrix::<f64>(x)?;
                let y = ndarray::Array1::zeros(m.nrows());
                cluster_var(&Dataset::new(m, y, None, names, Family::Gaussian)?, block.as_ref())?
            } else {
                return Err(Failure::Usage("--method var needs --x or --studies".into()));
            }
        }
        TreeMethodArg::Position => {
            let Some(path) = &a.position else {
                return Err(Failure::Usage("--method position needs --position".into()));
            };
            let pos = PositionMap::load(path)?;
            let pos = match (&a.x, &a.studies) {
                (Some(x), _) => positions_for(&pos, &read_matrix::<f64>(x)?.0)?,
                (None, Some(m)) => positions_for(&pos, &load_studies::<f64>(m, Family::Gaussian)?.universe())?,
                (None, None) => pos,
            };
            cluster_position(&pos, block.as_ref())?
        }
    };
    info!("tree with {} variables and {} nodes", tree.n_vars(), tree.nodes().len());
    tree.save(&a.out)?;
    Ok(())
}

fn check_common(b: usize, alpha: f64) -> Outcome {
    if b == 0 {
        return Err(Failure::Usage("--B must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Failure::Usage("--alpha must lie in (0, 1)".into()));
    }
    Ok(())
}

fn run_test(a: &TestArgs) -> Outcome {
    check_common(a.b, a.alpha)?;
    let gamma = GammaConfig::new(a.gamma_min).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = MultiSplitConfig {
        gamma,
        ..MultiSplitConfig::default()
    };
    let tree = HierTree::load(&a.tree)?;
    let family = Family::from(a.data.family);
    let result = if let Some(m) = &a.data.studies {
        let studies = load_studies::<f64>(m, family)?;
        let method = match a.agg {
            AggArg::Tippett => MetaMethod::Tippett,
            AggArg::Stouffer => MetaMethod::Stouffer,
        };
        let plans = study_plans(&studies, a.b, a.seed)?;
        let tester = MetaTester::new(&studies, plans, &cfg, method)?;
        test_hierarchy(&tester, &tree, a.alpha)?
    } else {
        let (x, y) = (a.data.x.as_ref(), a.data.y.as_ref());
        let (Some(x), Some(y)) = (x, y) else {
            return Err(Failure::Usage("--x and --y are required without --studies".into()));
        };
        let d = load_dataset::<f64>(x, y, a.data.clvar.as_deref(), family)?;
        let tester = MultiSplitTester::new(&d, make_splits(d.n(), a.b, a.seed)?, &cfg)?;
        test_hierarchy(&tester, &tree, a.alpha)?
    };
    let text = match a.format {
        FormatArg::Table => print_findings(&result, a.n_terms),
        FormatArg::Csv => findings_delimited(&result, ','),
    };
    emit(a.out.as_deref(), &text)
}

fn run_r2(a: &R2Args) -> Outcome {
    check_common(a.b, 0.5)?;
    let d = load_dataset::<f64>(&a.x, &a.y, a.clvar.as_deref(), a.family.into())?;
    let cluster: Option<Vec<String>> = a.cluster.as_ref().map(|c| {
        c.split(';')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    });
    let opts = R2Options {
        empty: if a.skip_empty {
            EmptySplit::Skip
        } else {
            EmptySplit::Zero
        },
        null_with_clvar: !a.null_without_clvar,
    };
    let plan = make_splits(d.n(), a.b, a.seed)?;
    let r = compute_r2(&d, cluster.as_deref(), plan, &MultiSplitConfig::default(), &opts)?;
    emit(None, &format!("{:.6}\n", r.mean))
}

fn run_simulate(a: &SimulateArgs) -> Outcome {
    let mut sc = match (&a.scenario, &a.preset) {
        (Some(path), _) => SimScenario::load(path).map_err(|e| match e {
            Error::Parse { .. } => Failure::Usage(e.to_string()),
            other => Failure::Core(other),
        })?,
        (None, Some(name)) => SimScenario::preset(name).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown preset `{name}` (available: {})",
                SimScenario::preset_names().join(", ")
            ))
        })?,
        (None, None) => unreachable!("clap enforces a scenario source"),
    };
    sc.seed = a.seed;
    if let Some(r) = a.replicates {
        sc.replicates = r;
    }
    sc.validate().map_err(Failure::Usage)?;
    let report = run_experiment(&sc)?;
    emit(a.out.as_deref(), &report.to_csv())?;
    if let Some(log) = &a.log {
        emit(Some(log), &report.records_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = match &cli.cmd {
        Command::Cluster(a) => run_cluster(a),
        Command::Test(a) => run_test(a),
        Command::R2(a) => run_r2(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { EXIT_DATA } else { EXIT_NUMERIC })
        }
    }
}
