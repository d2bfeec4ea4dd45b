#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hierinf::dataset::{save_dataset, Dataset};
use hierinf::simlab::{gen_design, gen_response, Correlation};
use hierinf::Family;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hierinf"));
    c.env_remove("HIERINF_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("SNP.{j}")).collect()
}

/// Genotype-like study with `active` columns carrying coefficient `beta`.
pub fn study(n: usize, p: usize, active: &[usize], beta: f64, family: Family, seed: u64) -> Dataset<f64> {
    let x = gen_design(n, p, Correlation::Block { rho: 0.6, size: 10 }, seed);
    let mut b = vec![0.0; p];
    for &j in active {
        b[j] = beta;
    }
    let y = gen_response(&x, &b, 1.0, family, seed + 1000);
    Dataset::new(x, y, None, names(p), family).unwrap()
}

/// Writes `x.csv`, `y.csv` (and `clvar.csv` if present) under `dir/prefix`.
pub fn write_study(dir: &Path, prefix: &str, d: &Dataset<f64>) -> (PathBuf, PathBuf) {
    let x = dir.join(format!("{prefix}x.csv"));
    let y = dir.join(format!("{prefix}y.csv"));
    let c = dir.join(format!("{prefix}clvar.csv"));
    save_dataset(d, &x, &y, d.clvar().map(|_| c.as_path())).unwrap();
    (x, y)
}

/// Two-column block file splitting the columns into `k` consecutive blocks.
pub fn write_blocks(dir: &Path, p: usize, k: usize) -> PathBuf {
    let path = dir.join("blocks.csv");
    let chunk = p.div_ceil(k);
    let mut s = String::from("name,block\n");
    for (j, n) in names(p).iter().enumerate() {
        s.push_str(&format!("{n},chr{}\n", j / chunk + 1));
    }
    std::fs::write(&path, s).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
