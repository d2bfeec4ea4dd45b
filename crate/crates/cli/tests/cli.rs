mod common;

use common::*;
use hierinf::dataset::{load_studies, StudyCollection};
use hierinf::hiertest::{findings_delimited, test_hierarchy};
use hierinf::meta::{study_plans, MetaTester};
use hierinf::multisplit::{make_splits, MultiSplitConfig};
use hierinf::varexpl::{compute_r2, R2Options};
use hierinf::{Family, HierTree, MetaMethod};

struct Fixture {
    dir: tempfile::TempDir,
    x: std::path::PathBuf,
    y: std::path::PathBuf,
    tree: std::path::PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let d = study(120, 40, &[3, 17], 1.5, Family::Gaussian, 11);
    let (x, y) = write_study(dir.path(), "", &d);
    let blocks = write_blocks(dir.path(), 40, 2);
    let tree = dir.path().join("tree.txt");
    let o = run(&["cluster", "--method", "var", "--x", s(&x), "--block", s(&blocks), "--out", s(&tree)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Fixture { dir, x, y, tree }
}

fn test_args<'a>(f: &'a Fixture, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["test", "--x", s(&f.x), "--y", s(&f.y), "--tree", s(&f.tree), "--B", "10"];
    a.extend_from_slice(extra);
    a
}

#[test]
fn cluster_is_deterministic_and_loadable() {
    let f = fixture();
    let again = f.dir.path().join("tree2.txt");
    let blocks = f.dir.path().join("blocks.csv");
    let o = run(&["cluster", "--method", "var", "--x", s(&f.x), "--block", s(&blocks), "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read(&f.tree).unwrap();
    assert_eq!(a, std::fs::read(&again).unwrap());
    let t = HierTree::load(&f.tree).unwrap();
    assert_eq!(t.n_vars(), 40);
    assert_eq!(t.blocks(), vec!["chr1".to_string(), "chr2".to_string()]);
}

#[test]
fn position_method_needs_positions() {
    let f = fixture();
    let out = f.dir.path().join("t.txt");
    let o = run(&["cluster", "--method", "position", "--x", s(&f.x), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let pos = f.dir.path().join("pos.csv");
    let mut text = String::from("name,position\n");
    for (j, n) in names(40).iter().enumerate() {
        text.push_str(&format!("{n},{}\n", 1000 + 7 * j));
    }
    std::fs::write(&pos, text).unwrap();
    let o = run(&["cluster", "--method", "position", "--position", s(&pos), "--x", s(&f.x), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(HierTree::load(&out).unwrap().n_vars(), 40);
}

#[test]
fn test_prints_table_and_finds_signal() {
    let f = fixture();
    let o = run(&test_args(&f, &["--seed", "7"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("  block p.value"), "{out}");
    assert!(out.contains("SNP.4") && out.contains("SNP.18"), "{out}");
}

#[test]
fn seed_is_required() {
    let f = fixture();
    let o = run(&test_args(&f, &[]));
    assert_eq!(code(&o), 2);
    let o = run(&["simulate", "--preset", "null"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn output_independent_of_threads() {
    let f = fixture();
    let one = run(&test_args(&f, &["--seed", "3", "--threads", "1"]));
    let four = run(&test_args(&f, &["--seed", "3", "--threads", "4"]));
    let env = bin().args(test_args(&f, &["--seed", "3"])).env("HIERINF_THREADS", "8").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, env.stdout);
}

#[test]
fn tree_dataset_mismatch_is_data_error() {
    let f = fixture();
    let other = study(60, 30, &[], 0.0, Family::Gaussian, 5);
    let (x2, y2) = write_study(f.dir.path(), "o_", &other);
    let o = run(&["test", "--x", s(&x2), "--y", s(&y2), "--tree", s(&f.tree), "--seed", "1"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn stouffer_flag_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("x,y,clvar\n");
    for l in 0..2 {
        let d = study(100, 30, &[2, 20], 1.0, Family::Gaussian, 40 + l);
        let prefix = format!("s{l}_");
        write_study(dir.path(), &prefix, &d);
        manifest.push_str(&format!("{prefix}x.csv,{prefix}y.csv,\n"));
    }
    let mpath = dir.path().join("studies.csv");
    std::fs::write(&mpath, manifest).unwrap();
    let tree = dir.path().join("tree.txt");
    let o = run(&["cluster", "--method", "var", "--studies", s(&mpath), "--out", s(&tree)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let studies: StudyCollection<f64> = load_studies(&mpath, Family::Gaussian).unwrap();
    let t = HierTree::load(&tree).unwrap();
    for (flag, method) in [("tippett", MetaMethod::Tippett), ("stouffer", MetaMethod::Stouffer)] {
        let o = run(&[
            "test", "--studies", s(&mpath), "--tree", s(&tree), "--B", "8", "--seed", "5", "--agg", flag, "--format", "csv",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let plans = study_plans(&studies, 8, 5).unwrap();
        let tester = MetaTester::new(&studies, plans, &MultiSplitConfig::default(), method).unwrap();
        let expected = findings_delimited(&test_hierarchy(&tester, &t, 0.05).unwrap(), ',');
        assert_eq!(stdout(&o), expected, "{flag}");
    }
}

#[test]
fn r2_whole_dataset_and_unknown_column() {
    let f = fixture();
    let o = run(&["r2", "--x", s(&f.x), "--y", s(&f.y), "--B", "6", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed: f64 = stdout(&o).trim().parse().unwrap();
    let d = hierinf::dataset::load_dataset::<f64>(&f.x, &f.y, None, Family::Gaussian).unwrap();
    let r = compute_r2(&d, None, make_splits(d.n(), 6, 2).unwrap(), &MultiSplitConfig::default(), &R2Options::default())
        .unwrap();
    assert!((printed - r.mean).abs() < 1e-6);
    let o = run(&["r2", "--x", s(&f.x), "--y", s(&f.y), "--seed", "2", "--cluster", "SNP.4;nope"]);
    assert_eq!(code(&o), 3);
    let o = run(&["r2", "--x", s(&f.x), "--y", s(&f.y), "--B", "6", "--seed", "2", "--cluster", "SNP.4;SNP.18"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!(v > 0.0 && v <= printed + 1e-12);
}

#[test]
fn simulate_preset_and_malformed_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let log = dir.path().join("log.csv");
    let o = run(&["simulate", "--preset", "null", "--seed", "1", "--replicates", "2", "--out", s(&out), "--log", s(&log)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.lines().next().unwrap().contains(",fwer,"));
    assert_eq!(report.lines().count(), 2);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "p = 50\nn = lots\n").unwrap();
    let o = run(&["simulate", "--scenario", s(&bad), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let good = dir.path().join("good.txt");
    std::fs::write(&good, "n = 60\np = 30\ns0 = 2\nbeta = 2\nsplits = 4\nreplicates = 2\n").unwrap();
    let o = run(&["simulate", "--scenario", s(&good), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scenario,method"));
}
