//! Categorical tabular datasets: schemas with per-column level tables,
//! label-encoded rows, one-hot views, CSV ingestion and splits.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeedStream;

/// One column: display name plus the ordered list of distinct level strings.
///
/// Levels are sorted lexicographically at load time, which fixes a canonical
/// CDF ordering for the KS metric and a canonical integer coding for the
/// correlation metrics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub levels: Vec<String>,
}

impl Column {
    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }
}

/// Ordered column/level tables for a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<Column>,
}

impl DatasetSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        for col in &columns {
            let distinct: BTreeSet<&String> = col.levels.iter().collect();
            if distinct.len() != col.levels.len() {
                return Err(Error::data(format!(
                    "column '{}' has duplicate levels",
                    col.name
                )));
            }
            if col.levels.is_empty() {
                return Err(Error::data(format!("column '{}' has no levels", col.name)));
            }
        }
        Ok(DatasetSchema { columns })
    }

    /// Number of columns.
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Level count of column `j`.
    pub fn cardinality(&self, j: usize) -> usize {
        self.columns[j].cardinality()
    }

    /// Total one-hot width: sum of level counts over all columns.
    pub fn onehot_width(&self) -> usize {
        self.columns.iter().map(Column::cardinality).sum()
    }

    /// Half-open `[start, end)` one-hot column ranges, one per column.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.columns.len());
        let mut start = 0;
        for col in &self.columns {
            let end = start + col.cardinality();
            out.push((start, end));
            start = end;
        }
        out
    }

    /// Columns with a single observed level at load time. Correlation
    /// metrics treat these as undefined.
    pub fn constant_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cardinality() < 2)
            .map(|(j, _)| j)
            .collect()
    }

    /// Canonical text form used for hashing; one line per column,
    /// fields separated by the unit separator.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        for col in &self.columns {
            s.push_str(&col.name);
            for level in &col.levels {
                s.push('\u{1f}');
                s.push_str(level);
            }
            s.push('\n');
        }
        s
    }

    /// FNV-1a hash of the canonical form; binds weight files to schemas.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_string().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Persist(format!("schema serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let schema: DatasetSchema = serde_json::from_str(&text)
            .map_err(|e| Error::Persist(format!("schema parse: {e}")))?;
        DatasetSchema::new(schema.columns)
    }
}

/// Label-encoded categorical rows bound to a schema.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDataset {
    schema: Arc<DatasetSchema>,
    /// Row-major n x p level indices.
    rows: Vec<u32>,
    n: usize,
}

impl CategoricalDataset {
    pub fn new(schema: Arc<DatasetSchema>, rows: Vec<u32>) -> Result<Self> {
        let p = schema.n_columns();
        if p == 0 || !rows.len().is_multiple_of(p) {
            return Err(Error::data(
                "row data length not a multiple of column count",
            ));
        }
        let n = rows.len() / p;
        for (idx, &code) in rows.iter().enumerate() {
            let j = idx % p;
            if code as usize >= schema.cardinality(j) {
                return Err(Error::data(format!(
                    "level index {code} out of range for column {j} (T={})",
                    schema.cardinality(j)
                )));
            }
        }
        Ok(CategoricalDataset { schema, rows, n })
    }

    pub fn schema(&self) -> &Arc<DatasetSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_columns(&self) -> usize {
        self.schema.n_columns()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let p = self.schema.n_columns();
        &self.rows[i * p..(i + 1) * p]
    }

    pub fn rows_flat(&self) -> &[u32] {
        &self.rows
    }

    /// Column `j` values across all rows.
    pub fn column(&self, j: usize) -> impl Iterator<Item = u32> + '_ {
        let p = self.schema.n_columns();
        self.rows[j..].iter().step_by(p).copied().take(self.n)
    }

    /// Distinct levels observed in column `j`.
    pub fn observed_levels(&self, j: usize) -> BTreeSet<u32> {
        self.column(j).collect()
    }

    /// New dataset containing the given rows (indices may repeat).
    pub fn select_rows(&self, indices: &[usize]) -> CategoricalDataset {
        let p = self.schema.n_columns();
        let mut rows = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            rows.extend_from_slice(self.row(i));
        }
        CategoricalDataset {
            schema: Arc::clone(&self.schema),
            rows,
            n: indices.len(),
        }
    }

    /// Seeded subsample of `k` rows without replacement.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<CategoricalDataset> {
        if k > self.n {
            return Err(Error::data(format!(
                "cannot subsample {k} rows from {}",
                self.n
            )));
        }
        let mut rng = SeedStream::new(seed);
        let idx = rng.sample_indices(self.n, k);
        Ok(self.select_rows(&idx))
    }

    /// Write rows back out as CSV with a header of column names.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut w = std::io::BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let names: Vec<&str> = self
            .schema
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        writeln!(w, "{}", names.join(",")).map_err(io_err)?;
        for i in 0..self.n {
            let mut line = String::new();
            for (j, &code) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&self.schema.columns[j].levels[code as usize]);
            }
            writeln!(w, "{line}").map_err(io_err)?;
        }
        Ok(())
    }
}

/// Block-structured one-hot (or block-PMF) view of a dataset.
///
/// Each row restricted to a column's block is a point on that column's
/// simplex: entries in [0, 1] summing to 1. A hard encoding has exactly
/// one 1 per block.
#[derive(Clone, Debug)]
pub struct OneHotMatrix {
    schema: Arc<DatasetSchema>,
    values: Matrix,
}

impl OneHotMatrix {
    /// Wrap a probability matrix, validating block sums to 1e-6.
    pub fn from_probs(schema: Arc<DatasetSchema>, values: Matrix) -> Result<Self> {
        if values.cols() != schema.onehot_width() {
            return Err(Error::ShapeMismatch(format!(
                "one-hot width {} != schema width {}",
                values.cols(),
                schema.onehot_width()
            )));
        }
        let blocks = schema.blocks();
        for i in 0..values.rows() {
            let row = values.row(i);
            for &(s, e) in &blocks {
                let sum: f64 = row[s..e].iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::data(format!(
                        "block sum {sum} != 1 at row {i}, block [{s},{e})"
                    )));
                }
            }
        }
        Ok(OneHotMatrix { schema, values })
    }

    pub fn schema(&self) -> &Arc<DatasetSchema> {
        &self.schema
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

/// Mode for converting block PMFs back to level indices.
#[derive(Clone, Copy, Debug)]
pub enum DecodeMode {
    /// Highest-probability level; ties break to the lowest index.
    Argmax,
    /// Draw each level from its block PMF with the given seed.
    Sample { seed: u64 },
}

/// Load a CSV of categorical columns.
///
/// Format: comma-separated, UTF-8, optional header row. Quoted fields are
/// not supported and are rejected. Every column's distinct values become
/// its levels, sorted lexicographically. Columns with a single distinct
/// value are kept and reported in the returned warnings.
pub fn load_csv(path: &Path, header: bool) -> Result<(CategoricalDataset, Vec<String>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.is_empty() {
            continue;
        }
        if line.contains('"') {
            return Err(Error::data_at(
                "quoted fields are not supported",
                lineno + 1,
            ));
        }
        lines.push((lineno + 1, line));
    }
    if lines.is_empty() {
        return Err(Error::data("empty file"));
    }

    let mut names: Option<Vec<String>> = None;
    if header {
        let (_, head) = lines.remove(0);
        names = Some(head.split(',').map(|s| s.trim().to_string()).collect());
        if lines.is_empty() {
            return Err(Error::data("file has a header but no data rows"));
        }
    }

    let first_width = lines[0].1.split(',').count();
    if let Some(ref n) = names {
        if n.len() != first_width {
            return Err(Error::data(format!(
                "header has {} fields but first row has {first_width}",
                n.len()
            )));
        }
    }

    let mut cells: Vec<Vec<String>> = Vec::with_capacity(lines.len());
    for (lineno, line) in &lines {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != first_width {
            return Err(Error::data_at(
                format!("ragged row: {} fields, expected {first_width}", row.len()),
                *lineno,
            ));
        }
        cells.push(row);
    }

    let p = first_width;
    let mut columns = Vec::with_capacity(p);
    let mut warnings = Vec::new();
    for j in 0..p {
        let distinct: BTreeSet<String> = cells.iter().map(|r| r[j].clone()).collect();
        let levels: Vec<String> = distinct.into_iter().collect();
        let name = names
            .as_ref()
            .map(|n| n[j].clone())
            .unwrap_or_else(|| format!("c{j}"));
        if levels.len() < 2 {
            warnings.push(format!(
                "column '{name}' is constant (single level); correlation metrics will report it as missing"
            ));
        }
        columns.push(Column { name, levels });
    }
    let schema = Arc::new(DatasetSchema::new(columns)?);

    let mut rows = Vec::with_capacity(cells.len() * p);
    for row in &cells {
        for (j, value) in row.iter().enumerate() {
            // binary search over the sorted level table
            let code = schema.columns[j]
                .levels
                .binary_search(value)
                .expect("level present by construction");
            rows.push(code as u32);
        }
    }
    let ds = CategoricalDataset::new(schema, rows)?;
    Ok((ds, warnings))
}

/// Load a CSV under an existing schema: columns must line up positionally
/// and every cell must be a known level of its column.
pub fn load_csv_with_schema(
    path: &Path,
    header: bool,
    schema: Arc<DatasetSchema>,
) -> Result<CategoricalDataset> {
    let (raw, _) = load_csv(path, header)?;
    if raw.n_columns() != schema.n_columns() {
        return Err(Error::SchemaMismatch(format!(
            "{} has {} columns, schema has {}",
            path.display(),
            raw.n_columns(),
            schema.n_columns()
        )));
    }
    let mut rows = Vec::with_capacity(raw.n_rows() * schema.n_columns());
    for i in 0..raw.n_rows() {
        for (j, &code) in raw.row(i).iter().enumerate() {
            let text = &raw.schema().columns[j].levels[code as usize];
            let mapped = schema.columns[j].levels.binary_search(text).map_err(|_| {
                Error::SchemaMismatch(format!(
                    "value '{text}' in column '{}' of {} is not a level of the schema",
                    schema.columns[j].name,
                    path.display()
                ))
            })?;
            rows.push(mapped as u32);
        }
    }
    CategoricalDataset::new(schema, rows)
}

/// Hard one-hot encoding of the dataset, block per column.
pub fn to_onehot(ds: &CategoricalDataset) -> OneHotMatrix {
    let schema = Arc::clone(ds.schema());
    let width = schema.onehot_width();
    let blocks = schema.blocks();
    let mut values = Matrix::zeros(ds.n_rows(), width);
    for i in 0..ds.n_rows() {
        let row = values.row_mut(i);
        for (j, &code) in ds.row(i).iter().enumerate() {
            row[blocks[j].0 + code as usize] = 1.0;
        }
    }
    OneHotMatrix { schema, values }
}

/// Convert block PMFs back to level indices.
///
/// Each block row must sum to 1 within 1e-6. Argmax ties break to the
/// lowest level index; sampling treats the block as a categorical PMF.
pub fn from_onehot(m: &OneHotMatrix, mode: DecodeMode) -> Result<CategoricalDataset> {
    let schema = Arc::clone(m.schema());
    let blocks = schema.blocks();
    let mut rng = match mode {
        DecodeMode::Sample { seed } => Some(SeedStream::new(seed)),
        DecodeMode::Argmax => None,
    };
    let mut rows = Vec::with_capacity(m.n_rows() * blocks.len());
    for i in 0..m.n_rows() {
        let row = m.values().row(i);
        for &(s, e) in &blocks {
            let block = &row[s..e];
            let sum: f64 = block.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::data(format!(
                    "block sum {sum} != 1 at row {i}, block [{s},{e})"
                )));
            }
            let code = match rng {
                None => argmax_lowest(block),
                Some(ref mut r) => r.categorical(block),
            };
            rows.push(code as u32);
        }
    }
    CategoricalDataset::new(schema, rows)
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Disjoint shuffled train/test partition.
///
/// Train gets `ceil(n * (1 - test_fraction))` rows, test the remainder.
/// Deterministic per seed.
pub fn split(
    ds: &CategoricalDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(CategoricalDataset, CategoricalDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    if ds.n_rows() < 2 {
        return Err(Error::data("need at least 2 rows to split"));
    }
    let n = ds.n_rows();
    let n_train = (n as f64 * (1.0 - test_fraction)).ceil() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    SeedStream::new(seed).shuffle(&mut idx);
    let train = ds.select_rows(&idx[..n_train]);
    let test = ds.select_rows(&idx[n_train..]);
    Ok((train, test))
}

/// Empirical PMF of column `j` over the schema's level support.
///
/// Levels absent from the data get probability 0.
pub fn marginal_pmf(ds: &CategoricalDataset, j: usize) -> Result<Vec<f64>> {
    if j >= ds.n_columns() {
        return Err(Error::data(format!(
            "column index {j} out of range (p={})",
            ds.n_columns()
        )));
    }
    let t = ds.schema().cardinality(j);
    let mut counts = vec![0usize; t];
    for code in ds.column(j) {
        counts[code as usize] += 1;
    }
    let inv = 1.0 / ds.n_rows() as f64;
    Ok(counts.iter().map(|&c| c as f64 * inv).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cwsynth-data-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    pub(crate) fn tiny_schema() -> Arc<DatasetSchema> {
        Arc::new(
            DatasetSchema::new(vec![
                Column {
                    name: "A".into(),
                    levels: vec!["x".into(), "y".into()],
                },
                Column {
                    name: "B".into(),
                    levels: vec!["u".into(), "v".into(), "w".into()],
                },
            ])
            .unwrap(),
        )
    }

    #[test]
    fn load_csv_three_rows() {
        let path = write_temp("three.csv", "A,B\nx,u\ny,v\nx,w\n");
        let (ds, warnings) = load_csv(&path, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ds.n_columns(), 2);
        assert_eq!(ds.schema().cardinality(0), 2);
        assert_eq!(ds.schema().cardinality(1), 3);
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.schema().onehot_width(), 5);
    }

    #[test]
    fn load_csv_survey_shaped_width() {
        // 54 columns whose level counts sum to 231: 15 columns with 5 levels,
        // 24 with 4, 15 with 4/3... construct explicitly: 39 columns of 4 levels
        // and 15 columns of 5 levels = 156 + 75 = 231.
        let p = 54;
        let card: Vec<usize> = (0..p).map(|j| if j < 39 { 4 } else { 5 }).collect();
        assert_eq!(card.iter().sum::<usize>(), 231);
        let mut text = String::new();
        // enough rows that every level appears at least once
        for r in 0..20 {
            let row: Vec<String> = card.iter().map(|&t| format!("l{}", r % t)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = write_temp("survey.csv", &text);
        let (ds, _) = load_csv(&path, false).unwrap();
        assert_eq!(ds.n_columns(), 54);
        assert_eq!(ds.schema().onehot_width(), 231);
    }

    #[test]
    fn load_csv_ragged_row() {
        let path = write_temp("ragged.csv", "a,b\nc\n");
        let err = load_csv(&path, false).unwrap_err();
        assert!(matches!(err, Error::Data { .. }), "{err}");
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn load_csv_empty_file() {
        let path = write_temp("empty.csv", "");
        assert!(load_csv(&path, false).is_err());
    }

    #[test]
    fn load_csv_constant_column_warns() {
        let path = write_temp("const.csv", "a,b\na,c\na,d\n");
        let (ds, warnings) = load_csv(&path, false).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("constant"));
        assert_eq!(ds.schema().constant_columns(), vec![0]);
    }

    #[test]
    fn load_csv_rejects_quotes() {
        let path = write_temp("quoted.csv", "\"a,b\",c\n");
        assert!(load_csv(&path, false).is_err());
    }

    #[test]
    fn load_with_schema_maps_and_rejects() {
        let schema = tiny_schema();
        let path = write_temp("subset.csv", "A,B\ny,w\nx,u\n");
        let ds = load_csv_with_schema(&path, true, Arc::clone(&schema)).unwrap();
        assert_eq!(ds.row(0), &[1, 2]);
        assert_eq!(ds.row(1), &[0, 0]);

        let bad = write_temp("unknown-level.csv", "A,B\nz,u\n");
        assert!(matches!(
            load_csv_with_schema(&bad, true, Arc::clone(&schema)),
            Err(Error::SchemaMismatch(_))
        ));

        let wrong_cols = write_temp("wrong-cols.csv", "A\nx\n");
        assert!(load_csv_with_schema(&wrong_cols, true, schema).is_err());
    }

    #[test]
    fn onehot_row_layout() {
        // row (A=y, B=u) with T=(2,3) -> [0,1, 1,0,0]
        let ds = CategoricalDataset::new(tiny_schema(), vec![1, 0]).unwrap();
        let m = to_onehot(&ds);
        assert_eq!(m.values().row(0), &[0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn onehot_equal_rows() {
        let ds = CategoricalDataset::new(tiny_schema(), vec![1, 2, 1, 2, 1, 2]).unwrap();
        let m = to_onehot(&ds);
        assert_eq!(m.values().row(0), m.values().row(1));
        assert_eq!(m.values().row(0), m.values().row(2));
    }

    #[test]
    fn from_onehot_argmax_and_ties() {
        let schema = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into(), "c".into()],
            }])
            .unwrap(),
        );
        let m = OneHotMatrix::from_probs(
            Arc::clone(&schema),
            Matrix::from_vec(1, 3, vec![0.1, 0.7, 0.2]),
        )
        .unwrap();
        let ds = from_onehot(&m, DecodeMode::Argmax).unwrap();
        assert_eq!(ds.row(0), &[1]);

        // tie breaks to the lowest index
        let schema2 = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into()],
            }])
            .unwrap(),
        );
        let m2 = OneHotMatrix::from_probs(schema2, Matrix::from_vec(1, 2, vec![0.5, 0.5])).unwrap();
        let ds2 = from_onehot(&m2, DecodeMode::Argmax).unwrap();
        assert_eq!(ds2.row(0), &[0]);
    }

    #[test]
    fn from_onehot_degenerate_sample() {
        let schema = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into(), "c".into()],
            }])
            .unwrap(),
        );
        for seed in 0..20 {
            let m = OneHotMatrix::from_probs(
                Arc::clone(&schema),
                Matrix::from_vec(1, 3, vec![0.0, 1.0, 0.0]),
            )
            .unwrap();
            let ds = from_onehot(&m, DecodeMode::Sample { seed }).unwrap();
            assert_eq!(ds.row(0), &[1]);
        }
    }

    #[test]
    fn from_onehot_bad_block_sum() {
        let m = OneHotMatrix {
            schema: tiny_schema(),
            values: Matrix::from_vec(1, 5, vec![0.4, 0.4, 1.0, 0.0, 0.0]),
        };
        assert!(from_onehot(&m, DecodeMode::Argmax).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let schema = tiny_schema();
        let rows: Vec<u32> = (0..10)
            .flat_map(|i| vec![(i % 2) as u32, (i % 3) as u32])
            .collect();
        let ds = CategoricalDataset::new(schema, rows).unwrap();
        let (tr, te) = split(&ds, 0.2, 1).unwrap();
        assert_eq!(tr.n_rows(), 8);
        assert_eq!(te.n_rows(), 2);

        let (tr2, te2) = split(&ds, 0.2, 1).unwrap();
        assert_eq!(tr.rows_flat(), tr2.rows_flat());
        assert_eq!(te.rows_flat(), te2.rows_flat());
    }

    #[test]
    fn split_income_shape() {
        // n=50000, f=0.1 -> (45000, 5000)
        let schema = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into()],
            }])
            .unwrap(),
        );
        let rows: Vec<u32> = (0..50_000).map(|i| (i % 2) as u32).collect();
        let ds = CategoricalDataset::new(schema, rows).unwrap();
        let (tr, te) = split(&ds, 0.1, 7).unwrap();
        assert_eq!(tr.n_rows(), 45_000);
        assert_eq!(te.n_rows(), 5_000);
    }

    #[test]
    fn marginal_pmf_examples() {
        let schema = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into(), "c".into()],
            }])
            .unwrap(),
        );
        // values [0,1,1,2,2,2] -> [1/6, 1/3, 1/2]
        let ds = CategoricalDataset::new(Arc::clone(&schema), vec![0, 1, 1, 2, 2, 2]).unwrap();
        let pmf = marginal_pmf(&ds, 0).unwrap();
        assert!((pmf[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((pmf[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((pmf[2] - 0.5).abs() < 1e-15);

        // constant column of level 2 with T=3 -> [0,0,1]
        let ds2 = CategoricalDataset::new(Arc::clone(&schema), vec![2, 2, 2, 2]).unwrap();
        assert_eq!(marginal_pmf(&ds2, 0).unwrap(), vec![0.0, 0.0, 1.0]);

        // two-level column, values [0,0,1,1] -> [0.5,0.5]
        let schema2 = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "A".into(),
                levels: vec!["a".into(), "b".into()],
            }])
            .unwrap(),
        );
        let ds3 = CategoricalDataset::new(schema2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(marginal_pmf(&ds3, 0).unwrap(), vec![0.5, 0.5]);

        assert!(marginal_pmf(&ds, 5).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_onehot(rows in proptest::collection::vec((0u32..2, 0u32..3), 1..40)) {
            let flat: Vec<u32> = rows.iter().flat_map(|&(a, b)| vec![a, b]).collect();
            let ds = CategoricalDataset::new(tiny_schema(), flat).unwrap();
            let back = from_onehot(&to_onehot(&ds), DecodeMode::Argmax).unwrap();
            prop_assert_eq!(ds.rows_flat(), back.rows_flat());
        }

        #[test]
        fn pmf_sums_to_one(rows in proptest::collection::vec((0u32..2, 0u32..3), 1..40)) {
            let flat: Vec<u32> = rows.iter().flat_map(|&(a, b)| vec![a, b]).collect();
            let ds = CategoricalDataset::new(tiny_schema(), flat).unwrap();
            for j in 0..2 {
                let pmf = marginal_pmf(&ds, j).unwrap();
                prop_assert!(pmf.iter().all(|&p| p >= 0.0));
                prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn split_preserves_row_multiset(
            rows in proptest::collection::vec((0u32..2, 0u32..3), 2..50),
            seed in 0u64..1000,
        ) {
            let flat: Vec<u32> = rows.iter().flat_map(|&(a, b)| vec![a, b]).collect();
            let ds = CategoricalDataset::new(tiny_schema(), flat).unwrap();
            let (tr, te) = split(&ds, 0.3, seed).unwrap();
            let mut orig: Vec<Vec<u32>> = (0..ds.n_rows()).map(|i| ds.row(i).to_vec()).collect();
            let mut joined: Vec<Vec<u32>> = (0..tr.n_rows()).map(|i| tr.row(i).to_vec())
                .chain((0..te.n_rows()).map(|i| te.row(i).to_vec())).collect();
            orig.sort();
            joined.sort();
            prop_assert_eq!(orig, joined);
        }
    }
}
