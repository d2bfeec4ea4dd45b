//! Hierarchical trees over variables: average-linkage clustering on
//! `1 - cor^2` or recursive halving of position-sorted variables, with an
//! optional user-defined block level below the root.
//!
//! Every node's members occupy a contiguous range of one leaf ordering,
//! so a tree over `p` variables needs `O(p)` member storage.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::dataset::{BlockMap, Dataset, PositionMap, StudyCollection};
use crate::error::{Error, Result};
use crate::scalar::Real;

const FORMAT_HEADER: &str = "# hierinf-tree v1";
const VARIABLES_TAG: &str = "# variables";

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    start: usize,
    len: usize,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Root has depth 1.
    pub depth: usize,
    /// Merge height for clustering trees.
    pub height: Option<f64>,
    pub block: Option<String>,
}

impl Node {
    pub fn size(&self) -> usize {
        self.len
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted tree whose nodes are groups of variables; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct HierTree {
    names: Vec<String>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl HierTree {
    /// Variable names; members are indices into this list.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn members(&self, i: usize) -> &[usize] {
        let n = &self.nodes[i];
        &self.order[n.start..n.start + n.len]
    }

    pub fn member_names(&self, i: usize) -> Vec<&str> {
        self.members(i).iter().map(|&v| self.names[v].as_str()).collect()
    }

    /// Labels of the block level, in tree order.
    pub fn blocks(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &c in &self.nodes[0].children {
            if let Some(b) = &self.nodes[c].block {
                if !out.contains(b) {
                    out.push(b.clone());
                }
            }
        }
        out
    }

    /// Checks the structural invariants: children partition their parent,
    /// leaves are singletons, the root holds every variable exactly once.
    pub fn check(&self) -> std::result::Result<(), String> {
        let mut seen = vec![false; self.names.len()];
        for &v in &self.order {
            if v >= seen.len() || std::mem::replace(&mut seen[v], true) {
                return Err("leaf order is not a permutation".into());
            }
        }
        if self.order.len() != self.names.len() || self.nodes[0].len != self.names.len() {
            return Err("root does not contain every variable".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                if n.len != 1 {
                    return Err(format!("leaf {i} has {} members", n.len));
                }
                continue;
            }
            let mut pos = n.start;
            for &c in &n.children {
                let ch = &self.nodes[c];
                if ch.start != pos || ch.len == 0 || ch.parent != Some(i) || ch.depth != n.depth + 1 {
                    return Err(format!("children of node {i} do not partition it"));
                }
                pos += ch.len;
            }
            if pos != n.start + n.len {
                return Err(format!("children of node {i} do not cover it"));
            }
        }
        Ok(())
    }

    /// Writes the indented text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(FORMAT_HEADER);
        out.push('\n');
        let _ = writeln!(out, "{VARIABLES_TAG}\t{}", self.names.join(","));
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            for _ in 1..n.depth {
                out.push_str("  ");
            }
            let height = n.height.map_or_else(|| "-".to_string(), |h| h.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                n.len,
                n.block.as_deref().unwrap_or("-"),
                height,
                self.member_names(i).join(",")
            );
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        for name in &self.names {
            if name.contains([',', '\t', '\n']) {
                return Err(Error::InvalidArgument(format!(
                    "column name `{name}` cannot be written to a tree file"
                )));
            }
        }
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::parse(&text)
    }

    /// Parses the text form written by [`HierTree::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::TreeFormat {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h.trim_end() == FORMAT_HEADER => {}
            _ => return Err(bad(1, "missing tree header")),
        }
        let universe: Vec<String> = match lines.next() {
            Some((_, l)) if l.starts_with(VARIABLES_TAG) => match l[VARIABLES_TAG.len()..].strip_prefix('\t') {
                Some(list) => list.split(',').map(str::to_string).collect(),
                None => return Err(bad(2, "malformed variable list")),
            },
            _ => return Err(bad(2, "missing variable list")),
        };
        let index: HashMap<&str, usize> = universe.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if index.len() != universe.len() {
            return Err(bad(2, "duplicate variable in the variable list"));
        }
        struct Raw {
            line: usize,
            names: Vec<String>,
        }
        let mut raw: Vec<Raw> = Vec::new();
        let mut nodes: Vec<Node> = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let indent = line.len() - line.trim_start_matches(' ').len();
            if indent % 2 != 0 {
                return Err(bad(ln, "odd indentation"));
            }
            let level = indent / 2;
            let fields: Vec<&str> = line[indent..].split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(ln, "expected 4 tab-separated fields"));
            }
            let size: usize = fields[0].parse().map_err(|_| bad(ln, "invalid size"))?;
            let block = (fields[1] != "-").then(|| fields[1].to_string());
            let height = match fields[2] {
                "-" => None,
                h => Some(h.parse::<f64>().map_err(|_| bad(ln, "invalid height"))?),
            };
            let names: Vec<String> = fields[3].split(',').map(str::to_string).collect();
            if names.len() != size || names.iter().any(|n| n.is_empty()) {
                return Err(bad(ln, "size does not match the listed names"));
            }
            if level > stack.len() || (level == 0 && !nodes.is_empty()) {
                return Err(bad(ln, "indentation does not match the tree structure"));
            }
            stack.truncate(level);
            let parent = stack.last().copied();
            let id = nodes.len();
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            nodes.push(Node {
                start: 0,
                len: 0,
                children: Vec::new(),
                parent,
                depth: level + 1,
                height,
                block,
            });
            raw.push(Raw { line: ln, names });
            stack.push(id);
        }
        if nodes.is_empty() {
            return Err(bad(1, "tree has no nodes"));
        }
        // leaves in preorder define the leaf order
        let mut order = Vec::new();
        let mut seen = vec![false; universe.len()];
        for (i, n) in nodes.iter_mut().enumerate() {
            n.start = order.len();
            if n.children.is_empty() {
                if raw[i].names.len() != 1 {
                    return Err(bad(raw[i].line, "leaf is not a singleton"));
                }
                let v = *index
                    .get(raw[i].names[0].as_str())
                    .ok_or_else(|| bad(raw[i].line, "leaf variable missing from the variable list"))?;
                if std::mem::replace(&mut seen[v], true) {
                    return Err(bad(raw[i].line, "variable appears in two leaves"));
                }
                order.push(v);
            }
        }
        let names = universe.clone();
        for i in (0..nodes.len()).rev() {
            nodes[i].len = if nodes[i].children.is_empty() {
                1
            } else {
                nodes[i].children.iter().map(|&c| nodes[c].len).sum()
            };
        }
        let tree = HierTree { names, order, nodes };
        for (i, r) in raw.iter().enumerate() {
            let listed: HashSet<&str> = r.names.iter().map(String::as_str).collect();
            let actual: HashSet<&str> = tree.member_names(i).into_iter().collect();
            if listed != actual || listed.len() != r.names.len() {
                return Err(bad(r.line, "node names differ from the union of its children"));
            }
        }
        tree.check().map_err(|m| bad(1, &m))?;
        Ok(tree)
    }
}

/// One block's tree before it is grafted into the full tree; `order` holds
/// variable indices, node 0 is the block root.
struct LocalTree {
    order: Vec<usize>,
    nodes: Vec<(usize, usize, Vec<usize>, Option<f64>)>,
}

fn assemble(names: Vec<String>, parts: Vec<(Option<String>, LocalTree)>) -> HierTree {
    let mut order = Vec::with_capacity(names.len());
    let mut nodes = Vec::new();
    let blocked = parts.first().is_some_and(|(b, _)| b.is_some());
    let base_depth = if blocked {
        nodes.push(Node {
            start: 0,
            len: names.len(),
            children: Vec::new(),
            parent: None,
            depth: 1,
            height: None,
            block: None,
        });
        2
    } else {
        1
    };
    for (block, local) in parts {
        let offset = order.len();
        let first = nodes.len();
        order.extend(&local.order);
        for (start, len, _, height) in &local.nodes {
            nodes.push(Node {
                start: offset + start,
                len: *len,
                children: Vec::new(),
                parent: None,
                depth: base_depth,
                height: *height,
                block: block.clone(),
            });
        }
        for (k, (_, _, children, _)) in local.nodes.iter().enumerate() {
            let id = first + k;
            for &c in children {
                nodes[first + c].parent = Some(id);
                nodes[id].children.push(first + c);
            }
        }
        // local nodes are in preorder, so parents precede children
        for id in first..nodes.len() {
            if let Some(p) = nodes[id].parent {
                nodes[id].depth = nodes[p].depth + 1;
            }
        }
        if blocked {
            nodes[first].parent = Some(0);
            nodes[0].children.push(first);
        }
    }
    HierTree { names, order, nodes }
}

fn leaf_tree(v: usize) -> LocalTree {
    LocalTree {
        order: vec![v],
        nodes: vec![(0, 1, Vec::new(), None)],
    }
}

/// Turns a sequence of merges `(a, b, height)` over `m` leaves (cluster ids
/// `0..m` for leaves, `m + k` for the `k`-th merge) into a preorder tree.
fn from_merges(vars: &[usize], merges: &[(usize, usize, f64)]) -> LocalTree {
    let m = vars.len();
    if m == 1 {
        return leaf_tree(vars[0]);
    }
    let mut size = vec![1usize; m + merges.len()];
    for (k, &(a, b, _)) in merges.iter().enumerate() {
        size[m + k] = size[a] + size[b];
    }
    let root = m + merges.len() - 1;
    let mut order = vec![0; m];
    let mut nodes = Vec::with_capacity(2 * m - 1);
    // (cluster, start, parent local id)
    let mut stack = vec![(root, 0usize, None::<usize>)];
    while let Some((c, start, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some(p) = parent {
            let pnode: &mut (usize, usize, Vec<usize>, Option<f64>) = &mut nodes[p];
            pnode.2.push(id);
        }
        if c < m {
            order[start] = vars[c];
            nodes.push((start, 1, Vec::new(), None));
        } else {
            let (a, b, h) = merges[c - m];
            nodes.push((start, size[c], Vec::new(), Some(h)));
            stack.push((b, start + size[a], Some(id)));
            stack.push((a, start, Some(id)));
        }
    }
    LocalTree { order, nodes }
}

/// Pairwise dissimilarities `1 - cor^2` within one group of variables,
/// from observations stacked over studies (pairwise complete).
struct StudyStats {
    n: f64,
    /// Per variable: mean in this study, or `None` when absent.
    mean: Vec<Option<f64>>,
    /// Centered columns (empty when absent).
    centered: Vec<Vec<f64>>,
}

fn dissimilarity<T: Real>(
    studies: &[&Dataset<T>],
    names: &[String],
    vars: &[usize],
) -> Result<Vec<f64>> {
    let m = vars.len();
    let mut stats = Vec::with_capacity(studies.len());
    let mut total_range = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
    for d in studies {
        let mut mean = Vec::with_capacity(m);
        let mut centered = Vec::with_capacity(m);
        for (a, &v) in vars.iter().enumerate() {
            match d.column_index(&names[v]) {
                Some(j) => {
                    let col: Vec<f64> = d.column(j).iter().map(|x| x.as_f64()).collect();
                    let mu = col.iter().sum::<f64>() / col.len() as f64;
                    for &x in &col {
                        total_range[a].0 = total_range[a].0.min(x);
                        total_range[a].1 = total_range[a].1.max(x);
                    }
                    mean.push(Some(mu));
                    centered.push(col.iter().map(|x| x - mu).collect());
                }
                None => {
                    mean.push(None);
                    centered.push(Vec::new());
                }
            }
        }
        stats.push(StudyStats {
            n: d.n() as f64,
            mean,
            centered,
        });
    }
    for (a, &(lo, hi)) in total_range.iter().enumerate() {
        if lo >= hi {
            return Err(Error::ZeroVariance(names[vars[a]].clone()));
        }
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let both: Vec<&StudyStats> = stats
                .iter()
                .filter(|s| s.mean[a].is_some() && s.mean[b].is_some())
                .collect();
            let r2 = if both.len() == 1 {
                let s = both[0];
                let (ca, cb) = (&s.centered[a], &s.centered[b]);
                let sab = dot(ca, cb);
                let saa = dot(ca, ca);
                let sbb = dot(cb, cb);
                if saa > 0.0 && sbb > 0.0 {
                    sab * sab / (saa * sbb)
                } else {
                    0.0
                }
            } else if both.is_empty() {
                0.0
            } else {
                let nn: f64 = both.iter().map(|s| s.n).sum();
                let ma = both.iter().map(|s| s.n * s.mean[a].unwrap()).sum::<f64>() / nn;
                let mb = both.iter().map(|s| s.n * s.mean[b].unwrap()).sum::<f64>() / nn;
                let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
                for s in &both {
                    let (ca, cb) = (&s.centered[a], &s.centered[b]);
                    let da = s.mean[a].unwrap() - ma;
                    let db = s.mean[b].unwrap() - mb;
                    saa += dot(ca, ca) + s.n * da * da;
                    sbb += dot(cb, cb) + s.n * db * db;
                    sab += dot(ca, cb) + s.n * da * db;
                }
                if saa > 0.0 && sbb > 0.0 {
                    sab * sab / (saa * sbb)
                } else {
                    0.0
                }
            };
            let d = (1.0 - r2).max(0.0);
            out[a * m + b] = d;
            out[b * m + a] = d;
        }
    }
    Ok(out)
}

/// Average-linkage agglomeration with Lance-Williams updates.
///
/// Ties in dissimilarity are broken by the lexicographically smallest
/// member names of the two clusters, so the result does not depend on the
/// input order. `rank[a]` is the name rank of local variable `a`.
pub(crate) fn average_linkage(dist: &[f64], rank: &[usize]) -> Vec<(usize, usize, f64)> {
    let m = rank.len();
    let mut d = dist.to_vec();
    let mut active = vec![true; m];
    let mut size = vec![1usize; m];
    let mut min_rank = rank.to_vec();
    let mut id: Vec<usize> = (0..m).collect();
    let key = |d: &[f64], min_rank: &[usize], i: usize, j: usize| {
        let (lo, hi) = if min_rank[i] < min_rank[j] {
            (min_rank[i], min_rank[j])
        } else {
            (min_rank[j], min_rank[i])
        };
        (d[i * m + j], lo, hi)
    };
    let less = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
    };
    let nearest = |d: &[f64], min_rank: &[usize], active: &[bool], i: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..m {
            if j == i || !active[j] {
                continue;
            }
            if best.is_none_or(|b| less(key(d, min_rank, i, j), key(d, min_rank, i, b))) {
                best = Some(j);
            }
        }
        best
    };
    let mut nn: Vec<Option<usize>> = (0..m).map(|i| nearest(&d, &min_rank, &active, i)).collect();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    for step in 0..m.saturating_sub(1) {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            if let Some(j) = nn[i] {
                if best.is_none_or(|(bi, bj)| less(key(&d, &min_rank, i, j), key(&d, &min_rank, bi, bj))) {
                    best = Some((i, j));
                }
            }
        }
        let (x, y) = best.expect("at least two active clusters");
        // keep the cluster holding the smaller name first
        let (i, j) = if min_rank[x] < min_rank[y] { (x, y) } else { (y, x) };
        let h = d[i * m + j];
        merges.push((id[i], id[j], h));
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..m {
            if active[k] && k != i && k != j {
                let v = (ni * d[k * m + i] + nj * d[k * m + j]) / (ni + nj);
                d[k * m + i] = v;
                d[i * m + k] = v;
            }
        }
        active[j] = false;
        size[i] += size[j];
        min_rank[i] = min_rank[i].min(min_rank[j]);
        id[i] = m + step;
        for k in 0..m {
            if !active[k] || k == i {
                continue;
            }
            if nn[k] == Some(i) || nn[k] == Some(j) {
                nn[k] = nearest(&d, &min_rank, &active, k);
            } else if let Some(b) = nn[k] {
                if less(key(&d, &min_rank, k, i), key(&d, &min_rank, k, b)) {
                    nn[k] = Some(i);
                }
            }
        }
        nn[i] = nearest(&d, &min_rank, &active, i);
    }
    merges
}

fn name_ranks(names: &[String], vars: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vars.len()).collect();
    idx.sort_by(|&a, &b| names[vars[a]].cmp(&names[vars[b]]));
    let mut rank = vec![0; vars.len()];
    for (r, &a) in idx.iter().enumerate() {
        rank[a] = r;
    }
    rank
}

fn cluster_group<T: Real>(studies: &[&Dataset<T>], names: &[String], vars: &[usize]) -> Result<LocalTree> {
    if vars.len() == 1 {
        return Ok(leaf_tree(vars[0]));
    }
    let dist = dissimilarity(studies, names, vars)?;
    let merges = average_linkage(&dist, &name_ranks(names, vars));
    Ok(from_merges(vars, &merges))
}

fn build<F>(names: Vec<String>, block: Option<&BlockMap>, f: F) -> Result<HierTree>
where
    F: Fn(&str, &[usize]) -> Result<LocalTree> + Sync,
{
    if names.is_empty() {
        return Err(Error::EmptyInput);
    }
    let parts = match block {
        None => vec![(None, f("", &(0..names.len()).collect::<Vec<_>>())?)],
        Some(bm) => {
            let groups = bm.partition(&names)?;
            let built: Vec<Result<LocalTree>> = groups
                .par_iter()
                .map(|(label, vars)| {
                    if vars.len() == 1 {
                        warn!("block `{label}` holds a single variable and becomes a leaf");
                    }
                    f(label, vars)
                })
                .collect();
            let mut parts = Vec::with_capacity(groups.len());
            for ((label, _), t) in groups.into_iter().zip(built) {
                parts.push((Some(label), t?));
            }
            parts
        }
    };
    Ok(assemble(names, parts))
}

/// Average-linkage tree on `1 - cor^2` of the columns of `d`.
pub fn cluster_var<T: Real>(d: &Dataset<T>, block: Option<&BlockMap>) -> Result<HierTree> {
    let names = d.colnames().to_vec();
    build(names.clone(), block, |_, vars| cluster_group(&[d], &names, vars))
}

/// Average-linkage tree over the column universe of several studies, with
/// correlations from stacked observations, pairwise complete per pair.
pub fn cluster_var_studies<T: Real>(
    studies: &StudyCollection<T>,
    block: Option<&BlockMap>,
) -> Result<HierTree> {
    let names = studies.universe();
    let refs: Vec<&Dataset<T>> = studies.studies().iter().collect();
    build(names.clone(), block, |_, vars| cluster_group(&refs, &names, vars))
}

/// Tree from recursive halving of the position-sorted variables: the left
/// child takes the first `ceil(k/2)` of `k` variables.
pub fn cluster_position(pos: &PositionMap, block: Option<&BlockMap>) -> Result<HierTree> {
    let names: Vec<String> = pos.entries.iter().map(|(n, _)| n.clone()).collect();
    let coords: Vec<i64> = pos.entries.iter().map(|(_, p)| *p).collect();
    build(names, block, |label, vars| {
        let mut sorted = vars.to_vec();
        sorted.sort_by_key(|&v| coords[v]);
        for w in sorted.windows(2) {
            if coords[w[0]] == coords[w[1]] {
                return Err(Error::DuplicatePosition {
                    block: label.to_string(),
                    position: coords[w[0]],
                });
            }
        }
        Ok(halving(sorted))
    })
}

fn halving(order: Vec<usize>) -> LocalTree {
    let mut nodes: Vec<(usize, usize, Vec<usize>, Option<f64>)> = Vec::with_capacity(2 * order.len());
    let mut stack = vec![(0usize, order.len(), None::<usize>)];
    while let Some((start, len, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some(p) = parent {
            nodes[p].2.push(id);
        }
        nodes.push((start, len, Vec::new(), None));
        if len > 1 {
            let left = len.div_ceil(2);
            stack.push((start + left, len - left, Some(id)));
            stack.push((start, left, Some(id)));
        }
    }
    LocalTree { order, nodes }
}

/// Positions of `names`, in that order; every name needs a position.
pub fn positions_for(pos: &PositionMap, names: &[String]) -> Result<PositionMap> {
    let lookup: HashMap<&str, i64> = pos.entries.iter().map(|(n, p)| (n.as_str(), *p)).collect();
    let entries = names
        .iter()
        .map(|n| {
            lookup
                .get(n.as_str())
                .map(|&p| (n.clone(), p))
                .ok_or_else(|| Error::MissingPosition(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    PositionMap::new(entries)
}
