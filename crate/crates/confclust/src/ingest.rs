//! Loading of expression/vector matrices and ground-truth labels.
//!
//! Dense matrices are delimited text (comma or tab, auto-detected), sparse
//! matrices are Matrix Market coordinate files, labels are two-column
//! `point_id,label` files. All parsers have a pure in-memory entry point so
//! untrusted input can be exercised directly (see the fuzz targets).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// How a dense text matrix is laid out on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Rows are features, columns are points (the in-memory layout).
    FeaturesAsRows,
    /// Rows are points; the matrix is transposed on load.
    PointsAsRows,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features-as-rows" => Ok(Orientation::FeaturesAsRows),
            "points-as-rows" => Ok(Orientation::PointsAsRows),
            other => Err(Error::invalid_input(format!(
                "unknown orientation {other:?} (expected features-as-rows or points-as-rows)"
            ))),
        }
    }
}

/// Compressed sparse column storage for a `d x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// `n_cols + 1` offsets into `row_idx`/`values`.
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds CSC storage from (row, col, value) triples; duplicate
    /// coordinates are summed.
    pub fn from_triples(
        n_rows: usize,
        n_cols: usize,
        mut triples: Vec<(u32, u32, f64)>,
    ) -> Self {
        triples.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx: Vec<u32> = Vec::with_capacity(triples.len());
        let mut values: Vec<f64> = Vec::with_capacity(triples.len());
        let mut last = None;
        for (r, c, v) in triples {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                last = Some((r, c));
            }
            col_ptr[c as usize + 1] = row_idx.len();
        }
        // forward-fill offsets for empty columns
        for c in 1..=n_cols {
            if col_ptr[c] < col_ptr[c - 1] {
                col_ptr[c] = col_ptr[c - 1];
            }
        }
        CscMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    /// `d x n`, features along rows.
    Dense(Array2<f64>),
    Sparse(CscMatrix),
}

/// A `d x n` dataset of feature vectors, points stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    storage: Storage,
    point_ids: Vec<String>,
    feature_ids: Option<Vec<String>>,
}

impl DataMatrix {
    /// Wraps a dense `d x n` array. When `point_ids` is `None`, ordinal ids
    /// `p000001..` are synthesized.
    pub fn from_dense(
        values: Array2<f64>,
        point_ids: Option<Vec<String>>,
        feature_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_input("matrix contains non-finite entries"));
        }
        let (d, n) = values.dim();
        Self::validated(Storage::Dense(values), point_ids, feature_ids, d, n)
    }

    pub fn from_sparse(
        values: CscMatrix,
        point_ids: Option<Vec<String>>,
        feature_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if !values.values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_input("matrix contains non-finite entries"));
        }
        let (d, n) = (values.n_rows, values.n_cols);
        Self::validated(Storage::Sparse(values), point_ids, feature_ids, d, n)
    }

    fn validated(
        storage: Storage,
        point_ids: Option<Vec<String>>,
        feature_ids: Option<Vec<String>>,
        d: usize,
        n: usize,
    ) -> Result<Self> {
        let point_ids = match point_ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "point ids".into(),
                        expected: n,
                        found: ids.len(),
                    });
                }
                let mut seen = HashMap::with_capacity(ids.len());
                for id in &ids {
                    if seen.insert(id.clone(), ()).is_some() {
                        return Err(Error::DuplicateId(id.clone()));
                    }
                }
                ids
            }
            None => synthesize_ids(n),
        };
        if let Some(f) = &feature_ids {
            if f.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "feature ids".into(),
                    expected: d,
                    found: f.len(),
                });
            }
        }
        Ok(DataMatrix {
            storage,
            point_ids,
            feature_ids,
        })
    }

    pub fn n_features(&self) -> usize {
        match &self.storage {
            Storage::Dense(a) => a.nrows(),
            Storage::Sparse(s) => s.n_rows,
        }
    }

    pub fn n_points(&self) -> usize {
        match &self.storage {
            Storage::Dense(a) => a.ncols(),
            Storage::Sparse(s) => s.n_cols,
        }
    }

    pub fn point_ids(&self) -> &[String] {
        &self.point_ids
    }

    pub fn feature_ids(&self) -> Option<&[String]> {
        self.feature_ids.as_deref()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn stored_nonzeros(&self) -> usize {
        match &self.storage {
            Storage::Dense(a) => a.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse(s) => s.nnz(),
        }
    }

    pub fn get(&self, feature: usize, point: usize) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a[(feature, point)],
            Storage::Sparse(s) => {
                let (rows, vals) = s.col(point);
                match rows.binary_search(&(feature as u32)) {
                    Ok(k) => vals[k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Writes column `j` densely into `out` (length `d`).
    pub fn column_dense(&self, j: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_features());
        match &self.storage {
            Storage::Dense(a) => {
                for (o, v) in out.iter_mut().zip(a.column(j).iter()) {
                    *o = *v;
                }
            }
            Storage::Sparse(s) => {
                out.fill(0.0);
                let (rows, vals) = s.col(j);
                for (&r, &v) in rows.iter().zip(vals) {
                    out[r as usize] = v;
                }
            }
        }
    }

    /// Per-feature mean over the point columns.
    pub fn mean_vector(&self) -> Array1<f64> {
        let d = self.n_features();
        let n = self.n_points();
        let mut mean = Array1::zeros(d);
        match &self.storage {
            Storage::Dense(a) => {
                for col in a.columns() {
                    mean += &col;
                }
            }
            Storage::Sparse(s) => {
                for (&r, &v) in s.row_idx.iter().zip(&s.values) {
                    mean[r as usize] += v;
                }
            }
        }
        mean / n as f64
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        let n = self.n_points();
        match &self.storage {
            Storage::Dense(a) => (0..n).map(|j| a.column(j).dot(&a.column(j))).collect(),
            Storage::Sparse(s) => (0..n)
                .map(|j| s.col(j).1.iter().map(|v| v * v).sum())
                .collect(),
        }
    }

    /// Exact Euclidean distance between columns `i` and `j`.
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(a) => {
                let (ci, cj) = (a.column(i), a.column(j));
                ci.iter()
                    .zip(cj.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            }
            Storage::Sparse(s) => {
                let (ri, vi) = s.col(i);
                let (rj, vj) = s.col(j);
                let mut acc = 0.0;
                let (mut a, mut b) = (0, 0);
                while a < ri.len() && b < rj.len() {
                    match ri[a].cmp(&rj[b]) {
                        std::cmp::Ordering::Less => {
                            acc += vi[a] * vi[a];
                            a += 1;
                        }
                        std::cmp::Ordering::Greater => {
                            acc += vj[b] * vj[b];
                            b += 1;
                        }
                        std::cmp::Ordering::Equal => {
                            let dlt = vi[a] - vj[b];
                            acc += dlt * dlt;
                            a += 1;
                            b += 1;
                        }
                    }
                }
                acc += vi[a..].iter().map(|v| v * v).sum::<f64>();
                acc += vj[b..].iter().map(|v| v * v).sum::<f64>();
                acc.sqrt()
            }
        }
    }

    /// Block of the Gram matrix `X^T X`: rows `cols` of the full `n x n`
    /// product, as a `(len, n)` array.
    pub(crate) fn gram_block(&self, cols: Range<usize>) -> Array2<f64> {
        let n = self.n_points();
        match &self.storage {
            Storage::Dense(a) => {
                let block = a.slice(ndarray::s![.., cols.clone()]);
                block.t().dot(a)
            }
            Storage::Sparse(s) => {
                let b = cols.len();
                // densify the block columns as rows of `dense` (b x d)
                let d = s.n_rows;
                let mut dense = Array2::zeros((b, d));
                for (bi, j) in cols.clone().enumerate() {
                    let (rows, vals) = s.col(j);
                    for (&r, &v) in rows.iter().zip(vals) {
                        dense[(bi, r as usize)] = v;
                    }
                }
                let mut out = Array2::zeros((b, n));
                for j in 0..n {
                    let (rows, vals) = s.col(j);
                    for bi in 0..b {
                        let row = dense.row(bi);
                        let mut acc = 0.0;
                        for (&r, &v) in rows.iter().zip(vals) {
                            acc += row[r as usize] * v;
                        }
                        out[(bi, j)] = acc;
                    }
                }
                out
            }
        }
    }

    /// `A^T W` for a dense `d x k` block `W`, giving `n x k`.
    pub(crate) fn matmul_tn(&self, w: &Array2<f64>) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(a) => a.t().dot(w),
            Storage::Sparse(s) => {
                let k = w.ncols();
                let mut out = Array2::zeros((s.n_cols, k));
                for j in 0..s.n_cols {
                    let (rows, vals) = s.col(j);
                    for (&r, &v) in rows.iter().zip(vals) {
                        for c in 0..k {
                            out[(j, c)] += v * w[(r as usize, c)];
                        }
                    }
                }
                out
            }
        }
    }

    /// `A W` for a dense `n x k` block `W`, giving `d x k`.
    pub(crate) fn matmul_nn(&self, w: &Array2<f64>) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(a) => a.dot(w),
            Storage::Sparse(s) => {
                let k = w.ncols();
                let mut out = Array2::zeros((s.n_rows, k));
                for j in 0..s.n_cols {
                    let (rows, vals) = s.col(j);
                    for (&r, &v) in rows.iter().zip(vals) {
                        for c in 0..k {
                            out[(r as usize, c)] += v * w[(j, c)];
                        }
                    }
                }
                out
            }
        }
    }
}

fn synthesize_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("p{i:06}")).collect()
}

fn detect_delimiter(line: &str) -> char {
    if line.contains('\t') {
        '\t'
    } else {
        ','
    }
}

fn is_numeric(tok: &str) -> bool {
    parse_cell(tok).is_some()
}

/// Parses a numeric cell; non-finite values are rejected.
fn parse_cell(tok: &str) -> Option<f64> {
    let v: f64 = tok.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Parses a dense delimited matrix from text.
///
/// A header row of identifiers and a leading identifier column are both
/// optional and auto-detected (any non-numeric cell in the first row or the
/// first column marks them as identifiers).
pub fn parse_dense_matrix(text: &str, orientation: Orientation) -> Result<DataMatrix> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::EmptyInput);
    }
    let delim = detect_delimiter(lines[0].1);
    let rows: Vec<(usize, Vec<&str>)> = lines
        .iter()
        .map(|(ln, l)| (*ln, l.split(delim).map(str::trim).collect()))
        .collect();

    let header_row = rows[0].1.iter().any(|c| !is_numeric(c));
    let body_start = usize::from(header_row);
    if body_start >= rows.len() {
        return Err(Error::EmptyInput);
    }
    let id_column = rows[body_start..]
        .iter()
        .any(|(_, cells)| cells.first().is_some_and(|c| !is_numeric(c)));

    let first_width = rows[body_start].1.len();
    let value_cols = first_width - usize::from(id_column);
    if value_cols == 0 {
        return Err(Error::EmptyInput);
    }

    let mut row_ids = Vec::new();
    let n_body = rows.len() - body_start;
    let mut values = Array2::zeros((n_body, value_cols));
    for (bi, (ln, cells)) in rows[body_start..].iter().enumerate() {
        if cells.len() != first_width {
            return Err(Error::Parse {
                line: *ln,
                column: None,
                message: format!(
                    "ragged row: expected {first_width} fields, found {}",
                    cells.len()
                ),
            });
        }
        let data = if id_column {
            row_ids.push(cells[0].to_string());
            &cells[1..]
        } else {
            &cells[..]
        };
        for (ci, tok) in data.iter().enumerate() {
            values[(bi, ci)] = parse_cell(tok).ok_or_else(|| Error::Parse {
                line: *ln,
                column: Some(ci + 1 + usize::from(id_column)),
                message: format!("non-numeric cell {tok:?}"),
            })?;
        }
    }

    let mut col_ids = if header_row {
        let mut h: Vec<String> = rows[0].1.iter().map(|s| s.to_string()).collect();
        // drop the corner cell when the header also spans the id column
        if id_column && h.len() == value_cols + 1 {
            h.remove(0);
        }
        if h.len() != value_cols {
            return Err(Error::Parse {
                line: rows[0].0,
                column: None,
                message: format!(
                    "header has {} fields for {value_cols} value columns",
                    h.len()
                ),
            });
        }
        Some(h)
    } else {
        None
    };
    let mut row_ids = if id_column { Some(row_ids) } else { None };

    match orientation {
        Orientation::FeaturesAsRows => {
            DataMatrix::from_dense(values, col_ids.take(), row_ids.take())
        }
        Orientation::PointsAsRows => {
            DataMatrix::from_dense(values.reversed_axes().as_standard_layout().to_owned(),
                row_ids.take(), col_ids.take())
        }
    }
}

pub fn load_dense_matrix(path: impl AsRef<Path>, orientation: Orientation) -> Result<DataMatrix> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_dense_matrix(&text, orientation)
}

/// Writes a dense matrix as delimited text, features as rows, with a header
/// row of point ids and (when present) a leading column of feature ids.
pub fn write_dense_matrix(m: &DataMatrix, w: &mut impl Write) -> Result<()> {
    let d = m.n_features();
    let n = m.n_points();
    if m.feature_ids().is_some() {
        write!(w, ",")?;
    }
    writeln!(w, "{}", m.point_ids().join(","))?;
    for i in 0..d {
        if let Some(f) = m.feature_ids() {
            write!(w, "{},", f[i])?;
        }
        for j in 0..n {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", m.get(i, j))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses a Matrix Market coordinate file into `(n_rows, n_cols, triples)`.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<(usize, usize, Vec<(u32, u32, f64)>)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(Error::Io)?,
        None => return Err(Error::EmptyInput),
    };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"%%MatrixMarket") {
        return Err(Error::format("missing %%MatrixMarket header"));
    }
    if toks.get(1) != Some(&"matrix") || toks.get(2) != Some(&"coordinate") {
        return Err(Error::format(
            "only `matrix coordinate` Matrix Market files are supported",
        ));
    }
    match toks.get(3) {
        Some(&"real") | Some(&"integer") | None => {}
        Some(other) => {
            return Err(Error::format(format!(
                "unsupported field type {other:?} (expected real or integer)"
            )))
        }
    }
    match toks.get(4) {
        Some(&"general") | None => {}
        Some(other) => {
            return Err(Error::format(format!(
                "unsupported symmetry {other:?} (expected general)"
            )))
        }
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triples = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(Error::Io)?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(Error::format(format!(
                        "line {lineno}: size line must be `rows cols nnz`"
                    )));
                }
                let parse = |s: &str| -> Result<usize> {
                    s.parse().map_err(|_| {
                        Error::format(format!("line {lineno}: bad size value {s:?}"))
                    })
                };
                dims = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
                let (r, c, _) = dims.unwrap();
                if r == 0 || c == 0 {
                    return Err(Error::format("matrix dimensions must be positive"));
                }
                if r > u32::MAX as usize || c > u32::MAX as usize {
                    return Err(Error::format("matrix dimensions exceed u32 range"));
                }
            }
            Some((nr, nc, nnz)) => {
                if triples.len() == nnz {
                    return Err(Error::format(format!(
                        "line {lineno}: more than the declared {nnz} entries"
                    )));
                }
                if fields.len() != 3 {
                    return Err(Error::format(format!(
                        "line {lineno}: entry must be `row col value`"
                    )));
                }
                let i: usize = fields[0].parse().map_err(|_| {
                    Error::format(format!("line {lineno}: bad row index {:?}", fields[0]))
                })?;
                let j: usize = fields[1].parse().map_err(|_| {
                    Error::format(format!("line {lineno}: bad column index {:?}", fields[1]))
                })?;
                let v: f64 = fields[2].parse().map_err(|_| {
                    Error::format(format!("line {lineno}: bad value {:?}", fields[2]))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(format!(
                        "line {lineno}: non-finite value {v}"
                    )));
                }
                if i < 1 || i > nr || j < 1 || j > nc {
                    return Err(Error::format(format!(
                        "line {lineno}: index ({i}, {j}) out of declared bounds {nr} x {nc}"
                    )));
                }
                triples.push(((i - 1) as u32, (j - 1) as u32, v));
            }
        }
    }
    let (nr, nc, nnz) = dims.ok_or(Error::EmptyInput)?;
    if triples.len() != nnz {
        return Err(Error::format(format!(
            "declared {nnz} entries, found {}",
            triples.len()
        )));
    }
    Ok((nr, nc, triples))
}

fn read_id_file(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
    }
    Ok(out)
}

/// Loads a Matrix Market matrix plus optional per-column id and per-row
/// feature files. Missing id files synthesize `p000001..` in column order.
pub fn load_sparse_matrix(
    matrix_path: impl AsRef<Path>,
    ids_path: Option<&Path>,
    features_path: Option<&Path>,
) -> Result<DataMatrix> {
    let reader = BufReader::new(File::open(matrix_path)?);
    let (d, n, triples) = parse_matrix_market(reader)?;
    let point_ids = match ids_path {
        Some(p) => {
            let ids = read_id_file(p)?;
            if ids.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "point id file".into(),
                    expected: n,
                    found: ids.len(),
                });
            }
            Some(ids)
        }
        None => None,
    };
    let feature_ids = match features_path {
        Some(p) => {
            let ids = read_id_file(p)?;
            if ids.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "feature id file".into(),
                    expected: d,
                    found: ids.len(),
                });
            }
            Some(ids)
        }
        None => None,
    };
    DataMatrix::from_sparse(CscMatrix::from_triples(d, n, triples), point_ids, feature_ids)
}

/// Writes the stored nonzeros in Matrix Market coordinate format, sorted by
/// (column, row) so round-trips are canonical.
pub fn write_sparse_matrix(m: &DataMatrix, w: &mut impl Write) -> Result<()> {
    let d = m.n_features();
    let n = m.n_points();
    let mut entries = Vec::new();
    let mut col = vec![0.0; d];
    for j in 0..n {
        m.column_dense(j, &mut col);
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    entries.sort_unstable_by_key(|&(r, c, _)| (c, r));
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{d} {n} {}", entries.len())?;
    for (r, c, v) in entries {
        writeln!(w, "{r} {c} {v}")?;
    }
    Ok(())
}

/// Ground-truth labels keyed by point id, with cluster indices `1..=k`
/// assigned by first appearance of each label string.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: HashMap<String, u32>,
    label_names: Vec<String>,
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, point_id: &str) -> Option<u32> {
        self.labels.get(point_id).copied()
    }

    /// Name of cluster index `idx` (1-based).
    pub fn label_name(&self, idx: u32) -> Option<&str> {
        self.label_names.get(idx as usize - 1).map(String::as_str)
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Resolves this map against an ordered list of point ids, producing
    /// per-vertex labels.
    pub fn align(&self, point_ids: &[String]) -> Result<VertexLabels> {
        let mut labels = Vec::with_capacity(point_ids.len());
        for id in point_ids {
            match self.get(id) {
                Some(l) => labels.push(l),
                None => return Err(Error::MissingLabel(id.clone())),
            }
        }
        VertexLabels::new(labels, self.k())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut labels = HashMap::new();
        let mut label_names: Vec<String> = Vec::new();
        for (id, name) in pairs {
            let idx = match label_names.iter().position(|l| *l == name) {
                Some(i) => i as u32 + 1,
                None => {
                    label_names.push(name.clone());
                    label_names.len() as u32
                }
            };
            if labels.insert(id.clone(), idx).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(GroundTruth {
            labels,
            label_names,
        })
    }
}

/// Per-vertex ground-truth labels in `1..=k`, aligned with matrix columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexLabels {
    labels: Vec<u32>,
    k: usize,
}

impl VertexLabels {
    pub fn new(labels: Vec<u32>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid_parameter("k must be at least 1"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l as usize > k) {
            return Err(Error::invalid_input(format!(
                "label {bad} outside 1..={k}"
            )));
        }
        Ok(VertexLabels { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Label of vertex `v`, 1-based.
    pub fn get(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }
}

/// Parses a two-column `point_id,label` file. A first line whose second
/// field is literally `label` (case-insensitive) is treated as a header and
/// skipped.
pub fn parse_labels(text: &str) -> Result<GroundTruth> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::EmptyInput);
    }
    let delim = detect_delimiter(lines[0].1);
    let mut pairs = Vec::with_capacity(lines.len());
    for (pos, (ln, line)) in lines.iter().enumerate() {
        let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
        if cells.len() != 2 {
            return Err(Error::Parse {
                line: *ln,
                column: None,
                message: format!("expected 2 fields, found {}", cells.len()),
            });
        }
        if pos == 0 && cells[1].eq_ignore_ascii_case("label") {
            continue;
        }
        pairs.push((cells[0].to_string(), cells[1].to_string()));
    }
    GroundTruth::from_pairs(pairs)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_labels(&text)
}

pub fn write_labels(
    point_ids: &[String],
    labels: &VertexLabels,
    names: Option<&[String]>,
    w: &mut impl Write,
) -> Result<()> {
    for (id, &l) in point_ids.iter().zip(labels.as_slice()) {
        match names.and_then(|n| n.get(l as usize - 1)) {
            Some(name) => writeln!(w, "{id},{name}")?,
            None => writeln!(w, "{id},{l}")?,
        }
    }
    Ok(())
}

/// Count-normalization settings. Both transforms default to off so the
/// downstream math sees the data exactly as loaded unless asked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeConfig {
    /// Scale every column so its entry sum hits this target.
    pub library_size: Option<f64>,
    /// Apply `x -> ln(1 + x)` after scaling.
    pub log1p: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            library_size: None,
            log1p: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub matrix: DataMatrix,
    /// Columns with zero entry sum, left unscaled.
    pub zero_columns: Vec<usize>,
}

/// Library-size scaling followed by optional log1p, in that order.
pub fn normalize(m: &DataMatrix, cfg: &NormalizeConfig) -> Result<Normalized> {
    let n = m.n_points();
    let mut zero_columns = Vec::new();

    let scale_col = |j: usize, col: &mut [f64], zero: &mut Vec<usize>| -> Result<()> {
        if let Some(target) = cfg.library_size {
            let mut sum = 0.0;
            for &v in col.iter() {
                if v < 0.0 {
                    return Err(Error::invalid_input(format!(
                        "negative entry in column {j} with library_size set"
                    )));
                }
                sum += v;
            }
            if sum == 0.0 {
                zero.push(j);
            } else {
                let f = target / sum;
                for v in col.iter_mut() {
                    *v *= f;
                }
            }
        }
        if cfg.log1p {
            for v in col.iter_mut() {
                *v = v.ln_1p();
            }
        }
        Ok(())
    };

    let storage = match &m.storage {
        Storage::Dense(a) => {
            let mut out = a.clone();
            for j in 0..n {
                let mut col: Vec<f64> = out.column(j).to_vec();
                scale_col(j, &mut col, &mut zero_columns)?;
                for (i, v) in col.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            Storage::Dense(out)
        }
        Storage::Sparse(s) => {
            // zeros are preserved by both transforms, so only touch nonzeros
            let mut out = s.clone();
            for j in 0..n {
                let r = out.col_ptr[j]..out.col_ptr[j + 1];
                let vals = &mut out.values[r];
                scale_col(j, vals, &mut zero_columns)?;
            }
            Storage::Sparse(out)
        }
    };
    if !zero_columns.is_empty() {
        log::warn!(
            "normalize: {} all-zero column(s) left unscaled (first: {})",
            zero_columns.len(),
            zero_columns[0]
        );
    }
    Ok(Normalized {
        matrix: DataMatrix {
            storage,
            point_ids: m.point_ids.clone(),
            feature_ids: m.feature_ids.clone(),
        },
        zero_columns,
    })
}

/// Convenience file-to-file wrapper used by the CLI.
pub fn save_dense_matrix(m: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense_matrix(m, &mut w)
}

pub fn save_sparse_matrix(m: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sparse_matrix(m, &mut w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_with_header_features_as_rows() {
        let text = "c1,c2\n1,2\n3,4\n5,6\n";
        let m = parse_dense_matrix(text, Orientation::FeaturesAsRows).unwrap();
        assert_eq!(m.n_features(), 3);
        assert_eq!(m.n_points(), 2);
        assert_eq!(m.point_ids(), &["c1".to_string(), "c2".to_string()]);
        assert_eq!(m.get(2, 1), 6.0);
    }

    #[test]
    fn dense_points_as_rows_transposes() {
        let text = "c1,c2\n1,2\n3,4\n5,6\n";
        let m = parse_dense_matrix(text, Orientation::PointsAsRows).unwrap();
        assert_eq!(m.n_features(), 2);
        assert_eq!(m.n_points(), 3);
        assert_eq!(m.get(1, 2), 6.0);
        // header names features in this orientation
        assert_eq!(m.feature_ids().unwrap(), &["c1".to_string(), "c2".to_string()]);
    }

    #[test]
    fn dense_non_numeric_cell_reports_coordinates() {
        let text = "1,2\n3,abc\n";
        match parse_dense_matrix(text, Orientation::FeaturesAsRows) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, Some(2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dense_ragged_row_reports_line() {
        let text = "1,2\n3\n";
        match parse_dense_matrix(text, Orientation::FeaturesAsRows) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dense_empty_is_rejected() {
        assert!(matches!(
            parse_dense_matrix("", Orientation::FeaturesAsRows),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            parse_dense_matrix("\n  \n", Orientation::FeaturesAsRows),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn dense_tab_delimited_with_row_and_column_ids() {
        let text = "\tc1\tc2\ng1\t1.5\t2\ng2\t0\t-4\n";
        let m = parse_dense_matrix(text, Orientation::FeaturesAsRows).unwrap();
        assert_eq!(m.n_features(), 2);
        assert_eq!(m.n_points(), 2);
        assert_eq!(m.feature_ids().unwrap()[1], "g2");
        assert_eq!(m.get(0, 0), 1.5);
        assert_eq!(m.get(1, 1), -4.0);
    }

    #[test]
    fn dense_rejects_non_finite() {
        let text = "1,inf\n2,3\n";
        assert!(parse_dense_matrix(text, Orientation::FeaturesAsRows).is_err());
    }

    #[test]
    fn matrix_market_small() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n3 2 2\n1 1 5\n3 2 7\n";
        let m = load_mm(text).unwrap();
        assert_eq!(m.n_features(), 3);
        assert_eq!(m.n_points(), 2);
        assert_eq!(m.stored_nonzeros(), 2);
        assert_eq!(m.get(0, 0), 5.0);
        assert_eq!(m.get(2, 1), 7.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.point_ids(), &["p000001".to_string(), "p000002".to_string()]);
    }

    fn load_mm(text: &str) -> Result<DataMatrix> {
        let (d, n, t) = parse_matrix_market(text.as_bytes())?;
        DataMatrix::from_sparse(CscMatrix::from_triples(d, n, t), None, None)
    }

    #[test]
    fn matrix_market_out_of_bounds_index() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 2 1\n4 1 1\n";
        assert!(matches!(load_mm(text), Err(Error::Format(_))));
    }

    #[test]
    fn matrix_market_nnz_mismatch() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 2 3\n1 1 5\n3 2 7\n";
        assert!(matches!(load_mm(text), Err(Error::Format(_))));
        let text = "%%MatrixMarket matrix coordinate real general\n3 2 1\n1 1 5\n3 2 7\n";
        assert!(matches!(load_mm(text), Err(Error::Format(_))));
    }

    #[test]
    fn sparse_id_file_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mtx = dir.path().join("m.mtx");
        std::fs::write(
            &mtx,
            "%%MatrixMarket matrix coordinate real general\n3 2 2\n1 1 5\n3 2 7\n",
        )
        .unwrap();
        let ids = dir.path().join("ids.txt");
        std::fs::write(&ids, "a\nb\nc\n").unwrap();
        match load_sparse_matrix(&mtx, Some(ids.as_path()), None) {
            Err(Error::DimensionMismatch {
                expected, found, ..
            }) => {
                assert_eq!(expected, 2);
                assert_eq!(found, 3);
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn labels_basic_first_appearance_order() {
        let gt = parse_labels("c1,CD4\nc2,CD8\nc3,CD4\n").unwrap();
        assert_eq!(gt.k(), 2);
        assert_eq!(gt.get("c1"), Some(1));
        assert_eq!(gt.get("c2"), Some(2));
        assert_eq!(gt.get("c3"), Some(1));
        assert_eq!(gt.label_name(1), Some("CD4"));
    }

    #[test]
    fn labels_duplicate_id() {
        match parse_labels("c1,CD4\nc1,CD8\n") {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "c1"),
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn labels_header_skipped() {
        let gt = parse_labels("barcode,Label\nc1,CD4\nc2,CD8\n").unwrap();
        assert_eq!(gt.k(), 2);
        assert_eq!(gt.len(), 2);
        assert!(gt.get("barcode").is_none());
    }

    #[test]
    fn labels_empty() {
        assert!(matches!(parse_labels(""), Err(Error::EmptyInput)));
    }

    #[test]
    fn align_missing_label_errors() {
        let gt = parse_labels("c1,A\n").unwrap();
        let err = gt.align(&["c1".into(), "c9".into()]).unwrap_err();
        assert!(matches!(err, Error::MissingLabel(id) if id == "c9"));
    }

    #[test]
    fn normalize_scales_columns() {
        let m = DataMatrix::from_dense(
            ndarray::arr2(&[[1.0, 0.0], [3.0, 0.0]]),
            None,
            None,
        )
        .unwrap();
        let cfg = NormalizeConfig {
            library_size: Some(8.0),
            log1p: false,
        };
        let out = normalize(&m, &cfg).unwrap();
        assert_eq!(out.matrix.get(0, 0), 2.0);
        assert_eq!(out.matrix.get(1, 0), 6.0);
        // all-zero column untouched and reported
        assert_eq!(out.matrix.get(0, 1), 0.0);
        assert_eq!(out.zero_columns, vec![1]);
    }

    #[test]
    fn normalize_log1p_keeps_zero() {
        let m = DataMatrix::from_dense(ndarray::arr2(&[[0.0], [1.0]]), None, None).unwrap();
        let cfg = NormalizeConfig {
            library_size: None,
            log1p: true,
        };
        let out = normalize(&m, &cfg).unwrap();
        assert_eq!(out.matrix.get(0, 0), 0.0);
        assert!((out.matrix.get(1, 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_negative_with_library_size() {
        let m = DataMatrix::from_dense(ndarray::arr2(&[[-1.0], [2.0]]), None, None).unwrap();
        let cfg = NormalizeConfig {
            library_size: Some(10.0),
            log1p: false,
        };
        assert!(matches!(normalize(&m, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn normalize_idempotent_without_log() {
        let m = DataMatrix::from_dense(
            ndarray::arr2(&[[1.0, 2.0], [3.0, 5.0]]),
            None,
            None,
        )
        .unwrap();
        let cfg = NormalizeConfig {
            library_size: Some(10_000.0),
            log1p: false,
        };
        let once = normalize(&m, &cfg).unwrap().matrix;
        let twice = normalize(&once, &cfg).unwrap().matrix;
        for j in 0..2 {
            for i in 0..2 {
                assert!((once.get(i, j) - twice.get(i, j)).abs() <= 1e-12 * once.get(i, j).abs());
            }
        }
    }

    #[test]
    fn dense_round_trip_bit_identical() {
        let text = "c1,c2\n1.25,-2e-3\n0.1,4\n5,6.000000000000001\n";
        let m = parse_dense_matrix(text, Orientation::FeaturesAsRows).unwrap();
        let mut buf = Vec::new();
        write_dense_matrix(&m, &mut buf).unwrap();
        let m2 = parse_dense_matrix(
            std::str::from_utf8(&buf).unwrap(),
            Orientation::FeaturesAsRows,
        )
        .unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn sparse_round_trip_bit_identical() {
        let text =
            "%%MatrixMarket matrix coordinate real general\n4 3 4\n1 1 0.5\n2 3 -7.25\n4 1 1e-12\n3 2 9\n";
        let m = load_mm(text).unwrap();
        let mut buf = Vec::new();
        write_sparse_matrix(&m, &mut buf).unwrap();
        let (d, n, t) = parse_matrix_market(buf.as_slice()).unwrap();
        let m2 = DataMatrix::from_sparse(CscMatrix::from_triples(d, n, t), None, None).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn sparse_and_dense_kernels_agree() {
        let text =
            "%%MatrixMarket matrix coordinate real general\n4 3 5\n1 1 0.5\n2 3 -7.25\n4 1 2.0\n3 2 9\n1 2 3\n";
        let sp = load_mm(text).unwrap();
        let mut dense = Array2::zeros((4, 3));
        for i in 0..4 {
            for j in 0..3 {
                dense[(i, j)] = sp.get(i, j);
            }
        }
        let dn = DataMatrix::from_dense(dense, None, None).unwrap();
        assert_eq!(sp.mean_vector(), dn.mean_vector());
        assert_eq!(sp.column_norms_sq(), dn.column_norms_sq());
        let g1 = sp.gram_block(0..3);
        let g2 = dn.gram_block(0..3);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((sp.pair_distance(0, 2) - dn.pair_distance(0, 2)).abs() < 1e-12);
        let w = ndarray::arr2(&[[1.0, 2.0], [0.5, -1.0], [0.0, 3.0], [2.0, 2.0]]);
        assert_eq!(sp.matmul_tn(&w), dn.matmul_tn(&w));
        let w2 = ndarray::arr2(&[[1.0], [2.0], [3.0]]);
        assert_eq!(sp.matmul_nn(&w2), dn.matmul_nn(&w2));
    }
}
