//! Data model and delimited-text ingestion for single- and multi-study
//! analyses.
//!
//! Matrices are stored column-major since every hot loop (coordinate
//! descent, correlations, design assembly) walks columns.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg::take_rows;
use crate::scalar::Real;

/// Response distribution and the matching low-dimensional test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Linear model, partial F-tests.
    Gaussian,
    /// Logistic model, likelihood-ratio tests.
    Binomial,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// One study: response, SNP design and optional unpenalized controls.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    x: Array2<T>,
    y: Array1<T>,
    clvar: Option<Array2<T>>,
    colnames: Vec<String>,
    family: Family,
    index: HashMap<String, usize>,
}

impl<T: Real> Dataset<T> {
    /// Validates and assembles a dataset. The intercept is never stored.
    pub fn new(
        x: Array2<T>,
        y: Array1<T>,
        clvar: Option<Array2<T>>,
        colnames: Vec<String>,
        family: Family,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x has {n} rows but y has {} values",
                y.len()
            )));
        }
        if colnames.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "x has {} columns but {} names",
                x.ncols(),
                colnames.len()
            )));
        }
        if let Some(c) = &clvar {
            if c.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "clvar has {} rows, expected {n}",
                    c.nrows()
                )));
            }
        }
        let mut index = HashMap::with_capacity(colnames.len());
        for (j, name) in colnames.iter().enumerate() {
            if index.insert(name.clone(), j).is_some() {
                return Err(Error::DuplicateColname(name.clone()));
            }
        }
        let all_finite = x.iter().chain(y.iter()).all(|v| v.is_finite())
            && clvar.as_ref().is_none_or(|c| c.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::MissingValue {
                file: "<memory>".into(),
                line: 0,
                column: 0,
            });
        }
        if family == Family::Binomial {
            check_binary(y.view())?;
        }
        let x = if x.t().is_standard_layout() {
            x
        } else {
            crate::linalg::to_col_major(x.view())
        };
        let clvar = clvar.map(|c| crate::linalg::to_col_major(c.view()));
        Ok(Dataset {
            x,
            y,
            clvar,
            colnames,
            family,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of control covariates.
    pub fn q(&self) -> usize {
        self.clvar.as_ref().map_or(0, |c| c.ncols())
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn clvar(&self) -> Option<ArrayView2<'_, T>> {
        self.clvar.as_ref().map(|c| c.view())
    }

    pub fn colnames(&self) -> &[String] {
        &self.colnames
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Column `j` of the SNP matrix as a contiguous slice.
    pub fn column(&self, j: usize) -> &[T] {
        self.x
            .column(j)
            .to_slice()
            .expect("design stored column-major")
    }

    /// The observations `idx`, in the given order.
    pub fn subset_rows(&self, idx: &[usize]) -> Dataset<T> {
        Dataset {
            x: take_rows(self.x.view(), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            clvar: self.clvar.as_ref().map(|c| take_rows(c.view(), idx)),
            colnames: self.colnames.clone(),
            family: self.family,
            index: self.index.clone(),
        }
    }

    /// Keeps only the SNP columns `keep`, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Dataset<T> {
        let mut x = Array2::<T>::zeros((self.n(), keep.len()).f());
        for (o, &j) in keep.iter().enumerate() {
            x.column_mut(o).assign(&self.x.column(j));
        }
        let colnames: Vec<String> = keep.iter().map(|&j| self.colnames[j].clone()).collect();
        let index = colnames
            .iter()
            .enumerate()
            .map(|(j, s)| (s.clone(), j))
            .collect();
        Dataset {
            x,
            y: self.y.clone(),
            clvar: self.clvar.clone(),
            colnames,
            family: self.family,
            index,
        }
    }

    /// Replaces the control covariates.
    pub fn with_clvar(mut self, clvar: Option<Array2<T>>) -> Result<Self> {
        if let Some(c) = &clvar {
            if c.nrows() != self.n() {
                return Err(Error::DimensionMismatch("clvar rows".into()));
            }
        }
        self.clvar = clvar.map(|c| crate::linalg::to_col_major(c.view()));
        Ok(self)
    }

    /// Replaces the response, re-checking the family contract.
    pub fn with_response(mut self, y: Array1<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch("response length".into()));
        }
        if self.family == Family::Binomial {
            check_binary(y.view())?;
        }
        self.y = y;
        Ok(self)
    }
}

fn check_binary<T: Real>(y: ArrayView1<'_, T>) -> Result<()> {
    let mut seen = [false; 2];
    for &v in y.iter() {
        if v == T::zero() {
            seen[0] = true;
        } else if v == T::one() {
            seen[1] = true;
        } else {
            return Err(Error::NonBinaryResponse(v.as_f64()));
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::SingleClassResponse);
    }
    Ok(())
}

/// Columns removed by [`validate_columns`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnReport {
    pub dropped: Vec<String>,
}

fn is_constant<T: Real>(col: &[T]) -> bool {
    col.iter().all(|&v| v == col[0])
}

/// Finds zero-variance SNP columns; drops them when `drop_degenerate`,
/// otherwise fails on the first one.
pub fn validate_columns<T: Real>(
    d: &Dataset<T>,
    drop_degenerate: bool,
) -> Result<(Dataset<T>, ColumnReport)> {
    let mut keep = Vec::with_capacity(d.p());
    let mut report = ColumnReport::default();
    for j in 0..d.p() {
        if d.n() > 0 && is_constant(d.column(j)) {
            if !drop_degenerate {
                return Err(Error::DegenerateColumn(d.colnames[j].clone()));
            }
            report.dropped.push(d.colnames[j].clone());
        } else {
            keep.push(j);
        }
    }
    if report.dropped.is_empty() {
        return Ok((d.clone(), report));
    }
    Ok((d.select_columns(&keep), report))
}

/// Genomic coordinate of each variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PositionMap {
    pub entries: Vec<(String, i64)>,
}

impl PositionMap {
    pub fn new(entries: Vec<(String, i64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColname(name.clone()));
            }
        }
        Ok(PositionMap { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_two_column(path)?;
        let mut entries = Vec::with_capacity(rows.len());
        for (line, name, value) in rows {
            let pos = value.parse::<i64>().map_err(|_| Error::Parse {
                file: path.display().to_string(),
                line,
                msg: format!("position `{value}` is not an integer"),
            })?;
            entries.push((name, pos));
        }
        Self::new(entries)
    }
}

/// Assignment of variables to user-defined blocks (e.g. chromosomes).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockMap {
    pub entries: Vec<(String, String)>,
}

impl BlockMap {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, block) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColname(name.clone()));
            }
            if block.is_empty() {
                return Err(Error::BlockMismatch(format!("empty block label for `{name}`")));
            }
        }
        Ok(BlockMap { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_two_column(path.as_ref())?;
        Self::new(rows.into_iter().map(|(_, a, b)| (a, b)).collect())
    }

    /// Block labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|(_, b)| seen.insert(b.as_str()))
            .map(|(_, b)| b.clone())
            .collect()
    }

    /// Partitions `names` by block, in label order. Every name must be
    /// assigned and every assigned name must be among `names`.
    pub fn partition(&self, names: &[String]) -> Result<Vec<(String, Vec<usize>)>> {
        let lookup: HashMap<&str, &str> = self
            .entries
            .iter()
            .map(|(n, b)| (n.as_str(), b.as_str()))
            .collect();
        if lookup.len() != names.len() {
            return Err(Error::BlockMismatch(format!(
                "{} variables but {} block assignments",
                names.len(),
                lookup.len()
            )));
        }
        let labels = self.labels();
        let slot: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
        for (j, name) in names.iter().enumerate() {
            let b = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::BlockMismatch(format!("`{name}` has no block")))?;
            groups[slot[b]].push(j);
        }
        Ok(labels.into_iter().zip(groups).collect())
    }
}

/// Ordered studies sharing a column universe.
#[derive(Debug, Clone)]
pub struct StudyCollection<T> {
    studies: Vec<Dataset<T>>,
}

impl<T: Real> StudyCollection<T> {
    pub fn new(studies: Vec<Dataset<T>>) -> Result<Self> {
        let first = studies.first().ok_or(Error::EmptyInput)?;
        let family = first.family();
        if studies.iter().any(|s| s.family() != family) {
            return Err(Error::InvalidArgument("studies mix response families".into()));
        }
        Ok(StudyCollection { studies })
    }

    pub fn studies(&self) -> &[Dataset<T>] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn family(&self) -> Family {
        self.studies[0].family()
    }

    /// Union of the column names, in order of first appearance.
    pub fn universe(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for s in &self.studies {
            for c in s.colnames() {
                if seen.insert(c.as_str()) {
                    out.push(c.clone());
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// text I/O

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn detect_delimiter(first_line: &str) -> u8 {
    if first_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "NA" | "NaN" | "nan" | "." | "?")
}

fn read_records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read_text(path)?;
    let delim = detect_delimiter(text.lines().next().unwrap_or(""));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        out.push((line, fields));
    }
    Ok(out)
}

fn parse_cell<T: Real>(path: &Path, line: usize, column: usize, s: &str) -> Result<T> {
    if is_missing_token(s) {
        return Err(Error::MissingValue {
            file: path.display().to_string(),
            line,
            column,
        });
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            line,
            msg: format!("`{s}` is not a number"),
        })
}

/// Reads a header-first numeric matrix into column-major storage.
pub fn read_matrix<T: Real>(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<T>)> {
    let path = path.as_ref();
    let mut records = read_records(path)?.into_iter();
    let (_, header) = records.next().ok_or_else(|| Error::Parse {
        file: path.display().to_string(),
        line: 1,
        msg: "missing header row".into(),
    })?;
    let p = header.len();
    let mut values: Vec<Vec<T>> = vec![Vec::new(); p];
    for (line, fields) in records {
        if fields.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{}: line {line} has {} fields, header has {p}",
                path.display(),
                fields.len()
            )));
        }
        for (j, f) in fields.iter().enumerate() {
            values[j].push(parse_cell(path, line, j + 1, f)?);
        }
    }
    let n = values.first().map_or(0, |c| c.len());
    let flat: Vec<T> = values.into_iter().flatten().collect();
    let m = Array2::from_shape_vec((n, p).f(), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok((header, m))
}

/// Reads a one-value-per-line vector; a non-numeric first line is a header.
pub fn read_vector<T: Real>(path: impl AsRef<Path>) -> Result<Array1<T>> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut out = Vec::with_capacity(records.len());
    for (k, (line, fields)) in records.into_iter().enumerate() {
        let cell = fields.last().map(String::as_str).unwrap_or("");
        if k == 0 && !is_missing_token(cell) && cell.parse::<f64>().is_err() {
            continue;
        }
        out.push(parse_cell(path, line, fields.len(), cell)?);
    }
    Ok(Array1::from(out))
}

fn read_two_column(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut records = read_records(path)?.into_iter();
    // header row is mandatory
    records.next();
    records
        .map(|(line, fields)| {
            if fields.len() != 2 {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line,
                    msg: format!("expected 2 fields, found {}", fields.len()),
                });
            }
            let mut it = fields.into_iter();
            Ok((line, it.next().unwrap(), it.next().unwrap()))
        })
        .collect()
}

/// Loads and validates a dataset from delimited text files.
pub fn load_dataset<T: Real>(
    x_path: impl AsRef<Path>,
    y_path: impl AsRef<Path>,
    clvar_path: Option<&Path>,
    family: Family,
) -> Result<Dataset<T>> {
    let (names, x) = read_matrix::<T>(x_path)?;
    let y = read_vector::<T>(y_path)?;
    let clvar = match clvar_path {
        Some(p) => Some(read_matrix::<T>(p)?.1),
        None => None,
    };
    Dataset::new(x, y, clvar, names, family)
}

/// Loads the studies listed in a manifest with header `x,y,clvar` (the
/// `clvar` column optional, its cells may be empty). Relative paths are
/// resolved against the manifest's directory; study order is kept.
pub fn load_studies<T: Real>(manifest: impl AsRef<Path>, family: Family) -> Result<StudyCollection<T>> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut records = read_records(manifest)?.into_iter();
    let bad = |line: usize, msg: String| Error::Parse {
        file: manifest.display().to_string(),
        line,
        msg,
    };
    let (_, header) = records.next().ok_or_else(|| bad(1, "missing header row".into()))?;
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (xi, yi) = match (col("x"), col("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(bad(1, "header must name columns `x` and `y`".into())),
    };
    let ci = col("clvar");
    let mut studies = Vec::new();
    for (line, fields) in records {
        let get = |k: usize| fields.get(k).map(|s| s.trim()).filter(|s| !s.is_empty());
        let x = get(xi).ok_or_else(|| bad(line, "missing x path".into()))?;
        let y = get(yi).ok_or_else(|| bad(line, "missing y path".into()))?;
        let c = ci.and_then(get).map(|c| base.join(c));
        studies.push(load_dataset(base.join(x), base.join(y), c.as_deref(), family)?);
    }
    if studies.is_empty() {
        return Err(bad(2, "manifest lists no studies".into()));
    }
    StudyCollection::new(studies)
}

fn write_matrix<T: Real>(path: &Path, header: &[String], m: ArrayView2<'_, T>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a dataset in the format [`load_dataset`] reads.
pub fn save_dataset<T: Real>(
    d: &Dataset<T>,
    x_path: impl AsRef<Path>,
    y_path: impl AsRef<Path>,
    clvar_path: Option<&Path>,
) -> Result<()> {
    write_matrix(x_path.as_ref(), d.colnames(), d.x())?;
    let y_path = y_path.as_ref();
    let mut f = fs::File::create(y_path).map_err(|e| Error::io(y_path, e))?;
    let mut buf = String::from("y\n");
    for v in d.y().iter() {
        buf.push_str(&v.to_string());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(y_path, e))?;
    if let (Some(path), Some(c)) = (clvar_path, d.clvar()) {
        let header: Vec<String> = (1..=c.ncols()).map(|i| format!("clvar{i}")).collect();
        write_matrix(path, &header, c)?;
    }
    Ok(())
}
