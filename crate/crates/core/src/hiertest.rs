//! Top-down hierarchical testing with familywise error control.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hiertree::HierTree;
use crate::multisplit::MultiSplitTester;
use crate::scalar::Real;

/// Something that yields a raw p-value for a group of variables.
pub trait GroupTest<T>: Sync {
    /// Variable names that group indices refer to.
    fn variables(&self) -> &[String];
    fn raw_pvalue(&self, group: &[usize]) -> T;
}

impl<T: Real> GroupTest<T> for MultiSplitTester<'_, T> {
    fn variables(&self) -> &[String] {
        self.data().colnames()
    }

    fn raw_pvalue(&self, group: &[usize]) -> T {
        self.pvalue(group)
    }
}

/// Multiplicity adjustment for a group of `group_size` out of `p_total`
/// variables: `min(1, p * p_total / group_size)`.
pub fn adjust<T: Real>(p_raw: T, group_size: usize, p_total: usize) -> T {
    if group_size == p_total {
        return p_raw.min(T::one());
    }
    (p_raw * T::of_usize(p_total) / T::of_usize(group_size)).min(T::one())
}

/// A minimal significant group.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFinding<T> {
    pub block: Option<String>,
    pub group: Vec<String>,
    /// Tree node the finding corresponds to.
    pub node: usize,
    /// Hierarchically adjusted p-value.
    pub p_adjusted: T,
}

/// One row of the result table: a finding, or a block without findings.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultRow {
    Finding(usize),
    Empty(Option<String>),
}

#[derive(Debug, Clone)]
pub struct HierarchyResult<T> {
    pub findings: Vec<ClusterFinding<T>>,
    pub rows: Vec<ResultRow>,
    /// Hierarchically adjusted p-value per tree node; `None` if not tested.
    pub node_pvalues: Vec<Option<T>>,
    pub alpha: T,
}

impl<T: Real> HierarchyResult<T> {
    pub fn tested_nodes(&self) -> usize {
        self.node_pvalues.iter().filter(|p| p.is_some()).count()
    }
}

/// Tests the tree top-down, breadth first. A node's children are visited
/// only if its hierarchically adjusted p-value is at most `alpha`; nodes of
/// one depth are tested concurrently.
pub fn test_hierarchy<T: Real, G: GroupTest<T>>(
    tester: &G,
    tree: &HierTree,
    alpha: T,
) -> Result<HierarchyResult<T>> {
    let lookup: HashMap<&str, usize> = tester
        .variables()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let map: Vec<usize> = tree
        .names()
        .iter()
        .map(|n| {
            lookup
                .get(n.as_str())
                .copied()
                .ok_or_else(|| Error::TreeDatasetMismatch(n.clone()))
        })
        .collect::<Result<_>>()?;
    let p_total = tree.n_vars();
    let mut adjusted: Vec<Option<T>> = vec![None; tree.nodes().len()];
    let mut level = vec![tree.root()];
    while !level.is_empty() {
        let raw: Vec<T> = level
            .par_iter()
            .map(|&node| {
                let group: Vec<usize> = tree.members(node).iter().map(|&v| map[v]).collect();
                tester.raw_pvalue(&group)
            })
            .collect();
        let mut next = Vec::new();
        for (&node, p) in level.iter().zip(raw) {
            let parent = tree
                .node(node)
                .parent
                .and_then(|q| adjusted[q])
                .unwrap_or(T::zero());
            let adj = adjust(p, tree.node(node).size(), p_total).max(parent);
            adjusted[node] = Some(adj);
            if adj <= alpha {
                next.extend(&tree.node(node).children);
            }
        }
        level = next;
    }
    let significant = |i: usize| adjusted[i].is_some_and(|p| p <= alpha);
    let mut visit: Vec<usize> = (0..tree.nodes().len()).filter(|&i| adjusted[i].is_some()).collect();
    visit.sort_by_key(|&i| (tree.node(i).depth, i));
    let findings: Vec<ClusterFinding<T>> = visit
        .into_iter()
        .filter(|&i| significant(i) && !tree.node(i).children.iter().any(|&c| significant(c)))
        .map(|i| ClusterFinding {
            block: tree.node(i).block.clone(),
            group: tree.member_names(i).iter().map(|s| s.to_string()).collect(),
            node: i,
            p_adjusted: adjusted[i].unwrap_or(T::one()),
        })
        .collect();
    let rows = table_rows(tree, &findings);
    Ok(HierarchyResult {
        findings,
        rows,
        node_pvalues: adjusted,
        alpha,
    })
}

fn table_rows<T>(tree: &HierTree, findings: &[ClusterFinding<T>]) -> Vec<ResultRow> {
    let blocks = tree.blocks();
    let mut rows: Vec<ResultRow> = findings
        .iter()
        .enumerate()
        .filter(|(_, f)| f.block.is_none())
        .map(|(k, _)| ResultRow::Finding(k))
        .collect();
    if blocks.is_empty() {
        if rows.is_empty() {
            rows.push(ResultRow::Empty(None));
        }
        return rows;
    }
    let root_found = !rows.is_empty();
    for b in blocks {
        let before = rows.len();
        rows.extend(
            findings
                .iter()
                .enumerate()
                .filter(|(_, f)| f.block.as_deref() == Some(b.as_str()))
                .map(|(k, _)| ResultRow::Finding(k)),
        );
        if rows.len() == before && !root_found {
            rows.push(ResultRow::Empty(Some(b)));
        }
    }
    rows
}

/// `0.0489170` style for moderate values, `3.858e-05` below `1e-4`.
pub fn format_pvalue<T: Real>(p: T) -> String {
    let p = p.as_f64();
    if p >= 1e-4 || p == 0.0 {
        return format!("{p:.7}");
    }
    let s = format!("{p:.3e}");
    match s.split_once('e') {
        Some((mant, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ("-", d),
                None => ("+", exp),
            };
            format!("{mant}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

fn truncate_names(names: &[String], n_terms: usize) -> String {
    if names.len() <= n_terms {
        return names.join(", ");
    }
    let shown = names[..n_terms].join(", ");
    format!("{shown}, ... [{}]", names.len() - n_terms)
}

/// Fixed-width table with columns `block`, `p.value` and
/// `significant.cluster`; clusters longer than `n_terms` names are cut.
pub fn print_findings<T: Real>(result: &HierarchyResult<T>, n_terms: usize) -> String {
    let cells: Vec<[String; 3]> = result
        .rows
        .iter()
        .map(|row| match row {
            ResultRow::Finding(k) => {
                let f = &result.findings[*k];
                [
                    f.block.clone().unwrap_or_else(|| "NA".into()),
                    format_pvalue(f.p_adjusted),
                    truncate_names(&f.group, n_terms.max(1)),
                ]
            }
            ResultRow::Empty(b) => [b.clone().unwrap_or_else(|| "NA".into()), "NA".into(), "NA".into()],
        })
        .collect();
    let labels: Vec<String> = (1..=cells.len()).map(|i| i.to_string()).collect();
    let header = ["block", "p.value", "significant.cluster"];
    let lw = labels.iter().map(String::len).max().unwrap_or(0);
    let mut w = header.map(str::len);
    for c in &cells {
        for k in 0..3 {
            w[k] = w[k].max(c[k].chars().count());
        }
    }
    let mut out = String::new();
    let line = |label: &str, c: [&str; 3]| {
        format!(
            "{label:>lw$} {:<w0$} {:<w1$} {}",
            c[0],
            c[1],
            c[2],
            w0 = w[0],
            w1 = w[1]
        )
        .trim_end()
        .to_string()
    };
    let _ = writeln!(out, "{}", line("", header));
    for (label, c) in labels.iter().zip(&cells) {
        let _ = writeln!(out, "{}", line(label, [&c[0], &c[1], &c[2]]));
    }
    out
}

/// Machine-readable table: one row per finding, cluster names joined by
/// semicolons, full-precision p-values.
pub fn findings_delimited<T: Real>(result: &HierarchyResult<T>, sep: char) -> String {
    let mut out = format!("block{sep}p_value{sep}significant_cluster\n");
    for row in &result.rows {
        let _ = match row {
            ResultRow::Finding(k) => {
                let f = &result.findings[*k];
                writeln!(
                    out,
                    "{}{sep}{}{sep}{}",
                    f.block.as_deref().unwrap_or("NA"),
                    f.p_adjusted,
                    f.group.join(";")
                )
            }
            ResultRow::Empty(b) => writeln!(out, "{}{sep}NA{sep}NA", b.as_deref().unwrap_or("NA")),
        };
    }
    out
}
