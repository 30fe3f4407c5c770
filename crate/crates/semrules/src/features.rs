//! Binarization of raw tabular data into fuzzy membership features.
//!
//! Every raw column is turned into one or more feature columns whose cells
//! are membership degrees in `[0, 1]`. Continuous columns support five
//! schemes: named semantic categories with trapezoidal memberships,
//! fixed-width `<x` thresholds, quantile-based `<x` thresholds, exact-value
//! flags and 1-D k-means clusters. Categorical columns are exploded into
//! one column per distinct value, and already-binary columns pass through.
//!
//! The `<x` schemes produce an ordered column group: on any row, membership
//! never decreases as the threshold grows.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Cell values of one raw column.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumnData {
    /// Numeric values; NaN marks a missing cell.
    Continuous(Vec<f64>),
    /// String values; `None` marks a missing cell.
    Categorical(Vec<Option<String>>),
}

impl RawColumnData {
    pub fn len(&self) -> usize {
        match self {
            RawColumnData::Continuous(v) => v.len(),
            RawColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One named column of raw input data.
#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub data: RawColumnData,
}

/// A raw tabular dataset prior to binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub row_ids: Vec<String>,
}

impl RawTable {
    /// Checks equal row counts and unique column names.
    pub fn validate(&self) -> Result<()> {
        let rows = self.row_ids.len();
        let mut seen = BTreeSet::new();
        for col in &self.columns {
            if col.data.len() != rows {
                return Err(Error::Data(format!(
                    "column '{}' has {} rows, table has {}",
                    col.name,
                    col.data.len(),
                    rows
                )));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Data(format!("duplicate column name '{}'", col.name)));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// One semantic category: a named value range. `None` bounds are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

/// Binarization scheme for one raw column. `h` is the ramp half-width of
/// the fuzzy boundary; 0 means crisp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    SemanticCategories {
        categories: Vec<CategoryDef>,
        #[serde(default)]
        h: f64,
    },
    FixedWidth {
        width: f64,
        max: f64,
        #[serde(default)]
        h: f64,
    },
    Quantile {
        #[serde(default = "default_quantile_count")]
        q: usize,
        #[serde(default)]
        h: f64,
    },
    ExactValue {
        target: f64,
        #[serde(default)]
        tolerance: f64,
    },
    Cluster {
        k: usize,
    },
    /// One binary column per distinct categorical value.
    OneHot,
    /// Column is already a membership in [0, 1]; kept as-is.
    PassthroughBinary,
}

fn default_quantile_count() -> usize {
    4
}

impl Scheme {
    /// Short label stored in column metadata.
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::SemanticCategories { .. } => "semantic_categories",
            Scheme::FixedWidth { .. } => "fixed_width",
            Scheme::Quantile { .. } => "quantile",
            Scheme::ExactValue { .. } => "exact_value",
            Scheme::Cluster { .. } => "cluster",
            Scheme::OneHot => "one_hot",
            Scheme::PassthroughBinary => "passthrough_binary",
        }
    }
}

/// How missing raw cells map into the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// All derived memberships 0, plus a `<col> missing` indicator column.
    #[default]
    Indicator,
    /// All derived memberships 0, no indicator column.
    ZeroFill,
    /// Any missing cell is an error.
    Error,
}

/// Per-column binarization instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub column: String,
    #[serde(flatten)]
    pub scheme: Scheme,
    #[serde(default)]
    pub missing: MissingPolicy,
}

/// Full binarization plan for a raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationSpec {
    pub columns: Vec<ColumnSpec>,
    /// Seed for data-driven schemes (clustering).
    #[serde(default)]
    pub seed: u64,
}

impl BinarizationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Provenance of one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    /// Raw column the feature was derived from.
    pub source: String,
    /// Scheme label ("fixed_width", ..., "missing_indicator").
    pub scheme: String,
    /// Ordered `<x` group id, when the column belongs to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Threshold value for `<x` columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// A dense rows x features matrix of memberships in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    meta: Vec<ColumnMeta>,
    row_ids: Vec<String>,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major values, validating shape and range.
    pub fn new(values: Vec<f64>, meta: Vec<ColumnMeta>, row_ids: Vec<String>) -> Result<Self> {
        let n_rows = row_ids.len();
        let n_cols = meta.len();
        if values.len() != n_rows * n_cols {
            return Err(Error::Dimension {
                context: "feature matrix values".into(),
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        let mut names = BTreeSet::new();
        for m in &meta {
            if !names.insert(m.name.as_str()) {
                return Err(Error::Data(format!("duplicate feature column '{}'", m.name)));
            }
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::Data(format!(
                    "membership out of [0,1] at row {}, column '{}': {v}",
                    i / n_cols,
                    meta[i % n_cols].name
                )));
            }
        }
        Ok(FeatureMatrix {
            values,
            n_rows,
            n_cols,
            meta,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.n_cols + col] = value;
    }

    pub fn meta(&self) -> &[ColumnMeta] {
        &self.meta
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.meta.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    /// New matrix containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut row_ids = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            row_ids.push(self.row_ids[r].clone());
        }
        FeatureMatrix {
            values,
            n_rows: rows.len(),
            n_cols: self.n_cols,
            meta: self.meta.clone(),
            row_ids,
        }
    }
}

/// One derived feature column before assembly into a matrix. NaN cells
/// mark rows whose raw value was missing; `apply_spec` resolves them
/// against the column's missing policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub values: Vec<f64>,
    pub threshold: Option<f64>,
}

impl FeatureColumn {
    fn plain(name: String, values: Vec<f64>) -> Self {
        FeatureColumn {
            name,
            values,
            threshold: None,
        }
    }
}

/// Rising unit ramp centered on `boundary` with half-width `h`.
/// `h = 0` degenerates to the crisp step `v >= boundary`.
fn ramp_up(v: f64, boundary: f64, h: f64) -> f64 {
    if h == 0.0 {
        return if v >= boundary { 1.0 } else { 0.0 };
    }
    ((v - (boundary - h)) / (2.0 * h)).clamp(0.0, 1.0)
}

fn format_number(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Fixed-width `<x` thresholds: one column per threshold `width, 2*width,
/// ..., max`, membership 1 below the threshold with a fuzzy band of
/// half-width `h` around it.
pub fn binarize_fixed_width(
    values: &[f64],
    width: f64,
    max: f64,
    h: f64,
) -> Result<Vec<FeatureColumn>> {
    if !(width > 0.0) {
        return Err(Error::Config(format!("bin width must be > 0, got {width}")));
    }
    if max < width {
        return Err(Error::Config(format!(
            "max ({max}) must be at least one bin width ({width})"
        )));
    }
    if h < 0.0 || h >= width / 2.0 {
        return Err(Error::Config(format!(
            "ramp half-width must satisfy 0 <= h < width/2, got h={h}, width={width}"
        )));
    }
    let n_bins = (max / width + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n_bins);
    for i in 1..=n_bins {
        let threshold = i as f64 * width;
        let col = values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    f64::NAN
                } else {
                    1.0 - ramp_up(v, threshold, h)
                }
            })
            .collect();
        out.push(FeatureColumn {
            name: format!("<{}", format_number(threshold)),
            values: col,
            threshold: Some(threshold),
        });
    }
    Ok(out)
}

/// Named categories with trapezoidal memberships. Adjacent categories share
/// a boundary; within the ramp band of half-width `h` the two memberships
/// sum to exactly 1.
pub fn binarize_semantic_categories(
    values: &[f64],
    categories: &[CategoryDef],
    h: f64,
) -> Result<Vec<FeatureColumn>> {
    if categories.is_empty() {
        return Err(Error::Config("semantic_categories needs at least one category".into()));
    }
    if h < 0.0 {
        return Err(Error::Config(format!("ramp half-width must be >= 0, got {h}")));
    }
    // Contiguity: each category's upper bound is the next one's lower bound.
    for pair in categories.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        match (a.upper, b.lower) {
            (Some(ua), Some(lb)) if ua == lb => {}
            _ => {
                return Err(Error::Config(format!(
                    "categories '{}' and '{}' are not contiguous",
                    a.name, b.name
                )))
            }
        }
    }
    let boundaries: Vec<f64> = categories[..categories.len() - 1]
        .iter()
        .map(|c| c.upper.unwrap())
        .collect();
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("category boundaries must be strictly increasing".into()));
    }
    if categories[0].lower.is_some() || categories[categories.len() - 1].upper.is_some() {
        return Err(Error::Config(
            "outermost categories must be unbounded (omit the first lower and last upper bound)"
                .into(),
        ));
    }
    // Plateaus must not vanish, or three categories would overlap in one band.
    if h > 0.0 {
        for w in boundaries.windows(2) {
            if w[1] - w[0] < 2.0 * h {
                return Err(Error::Config(format!(
                    "category between boundaries {} and {} is narrower than the 2h ramp band",
                    w[0], w[1]
                )));
            }
        }
    }

    let mut out = Vec::with_capacity(categories.len());
    for (ci, cat) in categories.iter().enumerate() {
        let col = values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    return f64::NAN;
                }
                // Sharing ramp_up across the boundary makes adjacent
                // memberships sum to exactly 1.
                let up = if ci == 0 { 1.0 } else { ramp_up(v, boundaries[ci - 1], h) };
                let down = if ci == categories.len() - 1 {
                    1.0
                } else {
                    1.0 - ramp_up(v, boundaries[ci], h)
                };
                up.min(down)
            })
            .collect();
        out.push(FeatureColumn::plain(format!("({})", cat.name), col));
    }
    Ok(out)
}

/// Quantile `<x` thresholds at `1/q .. (q-1)/q`, linear-interpolation
/// quantiles, same ramp semantics as `binarize_fixed_width`. Duplicate
/// thresholds (too few distinct values) are collapsed with a warning.
pub fn binarize_quantiles(
    values: &[f64],
    q: usize,
    h: f64,
) -> Result<(Vec<FeatureColumn>, Vec<String>)> {
    if q < 2 {
        return Err(Error::Config(format!("quantile count must be >= 2, got {q}")));
    }
    if h < 0.0 {
        return Err(Error::Config(format!("ramp half-width must be >= 0, got {h}")));
    }
    let mut present: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if present.is_empty() {
        return Err(Error::Data("quantile binarization needs at least one finite value".into()));
    }
    present.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut thresholds: Vec<f64> = (1..q)
        .map(|i| quantile_sorted(&present, i as f64 / q as f64))
        .collect();
    thresholds.dedup();
    let mut warnings = Vec::new();
    if thresholds.len() < q - 1 {
        warnings.push(format!(
            "quantile thresholds collapsed from {} to {} (too few distinct values)",
            q - 1,
            thresholds.len()
        ));
    }

    let mut out = Vec::with_capacity(thresholds.len());
    for (i, &threshold) in thresholds.iter().enumerate() {
        let col = values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    f64::NAN
                } else {
                    1.0 - ramp_up(v, threshold, h)
                }
            })
            .collect();
        out.push(FeatureColumn {
            name: format!("<Q{}", i + 1),
            values: col,
            threshold: Some(threshold),
        });
    }
    Ok((out, warnings))
}

/// Single exact-value flag: membership 1 iff `|v - target| <= tol`.
pub fn binarize_exact(values: &[f64], target: f64, tol: f64) -> Result<FeatureColumn> {
    if tol < 0.0 {
        return Err(Error::Config(format!("tolerance must be >= 0, got {tol}")));
    }
    let col = values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                f64::NAN
            } else if (v - target).abs() <= tol {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(FeatureColumn::plain(format!("={}", format_number(target)), col))
}

/// 1-D k-means (Lloyd's algorithm) with centers initialized at the
/// quantiles `(i + 0.5) / k`, producing one crisp column per cluster.
/// Clusters are ordered by ascending center; distance ties assign to the
/// lower-index cluster. If the data has fewer than `k` distinct values,
/// `k` is reduced with a warning.
pub fn binarize_clusters(
    values: &[f64],
    k: usize,
    seed: u64,
) -> Result<(Vec<FeatureColumn>, Vec<String>)> {
    if k < 2 {
        return Err(Error::Config(format!("cluster count must be >= 2, got {k}")));
    }
    let _ = seed; // initialization is quantile-based, so the seed is currently unused
    let mut present: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if present.is_empty() {
        return Err(Error::Data("cluster binarization needs at least one finite value".into()));
    }
    present.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = present.clone();
    distinct.dedup();

    let mut warnings = Vec::new();
    let k_eff = if distinct.len() < k {
        warnings.push(format!(
            "cluster count reduced from {k} to {} (distinct values)",
            distinct.len()
        ));
        distinct.len()
    } else {
        k
    };

    let mut centers: Vec<f64> = (0..k_eff)
        .map(|i| quantile_sorted(&present, (i as f64 + 0.5) / k_eff as f64))
        .collect();
    centers.dedup();
    if centers.len() < k_eff {
        warnings.push(format!(
            "cluster centers collapsed from {k_eff} to {} during initialization",
            centers.len()
        ));
    }

    let assign = |centers: &[f64], v: f64| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (ci, &c) in centers.iter().enumerate() {
            let d = (v - c).abs();
            if d < best_d {
                best_d = d;
                best = ci;
            }
        }
        best
    };

    // Lloyd's iterations; 1-D with sorted quantile init converges fast.
    for _ in 0..100 {
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for &v in &present {
            let c = assign(&centers, v);
            sums[c] += v;
            counts[c] += 1;
        }
        let mut next = centers.clone();
        for (ci, c) in next.iter_mut().enumerate() {
            if counts[ci] > 0 {
                *c = sums[ci] / counts[ci] as f64;
            }
        }
        next.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if next == centers {
            break;
        }
        centers = next;
    }

    let mut out = Vec::with_capacity(centers.len());
    for (ci, &center) in centers.iter().enumerate() {
        let col = values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    f64::NAN
                } else if assign(&centers, v) == ci {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        out.push(FeatureColumn {
            name: format!("(cluster-{ci})"),
            values: col,
            threshold: Some(center),
        });
    }
    Ok((out, warnings))
}

/// One crisp column per distinct categorical value, in sorted value order.
fn binarize_one_hot(values: &[Option<String>]) -> Result<Vec<FeatureColumn>> {
    let distinct: BTreeSet<&String> = values.iter().flatten().collect();
    if distinct.is_empty() {
        return Err(Error::Data("one_hot column has no present values".into()));
    }
    let mut out = Vec::with_capacity(distinct.len());
    for value in distinct {
        let col = values
            .iter()
            .map(|v| match v {
                Some(s) => {
                    if s == value {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => f64::NAN,
            })
            .collect();
        out.push(FeatureColumn::plain(format!("({value})"), col));
    }
    Ok(out)
}

fn continuous_values<'a>(col: &'a RawColumn, scheme: &Scheme) -> Result<&'a [f64]> {
    match &col.data {
        RawColumnData::Continuous(v) => Ok(v),
        RawColumnData::Categorical(_) => Err(Error::Config(format!(
            "scheme {} on column '{}' requires numeric values",
            scheme.label(),
            col.name
        ))),
    }
}

/// Applies a binarization spec to a raw table, producing the feature
/// matrix, its per-column metadata and any warnings raised along the way.
///
/// Missing raw cells are resolved per the column's missing policy; the
/// default zeroes all derived memberships and appends a
/// `"<col> missing"` indicator column (always appended under that policy,
/// so the output schema does not depend on the data).
pub fn apply_spec(raw: &RawTable, spec: &BinarizationSpec) -> Result<(FeatureMatrix, Vec<String>)> {
    raw.validate()?;
    let n_rows = raw.n_rows();
    let mut warnings = Vec::new();
    let mut meta: Vec<ColumnMeta> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();

    let mut covered = BTreeSet::new();
    for cs in &spec.columns {
        if !covered.insert(cs.column.as_str()) {
            return Err(Error::Config(format!("column '{}' appears twice in the spec", cs.column)));
        }
    }
    for col in &raw.columns {
        if !covered.contains(col.name.as_str()) {
            return Err(Error::Config(format!(
                "spec does not cover raw column '{}'",
                col.name
            )));
        }
    }

    for cs in &spec.columns {
        let col = raw
            .column(&cs.column)
            .ok_or_else(|| Error::Config(format!("spec references unknown column '{}'", cs.column)))?;

        let block: Vec<FeatureColumn> = match &cs.scheme {
            Scheme::FixedWidth { width, max, h } => {
                binarize_fixed_width(continuous_values(col, &cs.scheme)?, *width, *max, *h)?
            }
            Scheme::SemanticCategories { categories, h } => {
                binarize_semantic_categories(continuous_values(col, &cs.scheme)?, categories, *h)?
            }
            Scheme::Quantile { q, h } => {
                let (block, mut w) = binarize_quantiles(continuous_values(col, &cs.scheme)?, *q, *h)?;
                for msg in w.drain(..) {
                    warnings.push(format!("column '{}': {msg}", cs.column));
                }
                block
            }
            Scheme::ExactValue { target, tolerance } => {
                vec![binarize_exact(continuous_values(col, &cs.scheme)?, *target, *tolerance)?]
            }
            Scheme::Cluster { k } => {
                let (block, mut w) =
                    binarize_clusters(continuous_values(col, &cs.scheme)?, *k, spec.seed)?;
                for msg in w.drain(..) {
                    warnings.push(format!("column '{}': {msg}", cs.column));
                }
                block
            }
            Scheme::OneHot => match &col.data {
                RawColumnData::Categorical(v) => binarize_one_hot(v)?,
                RawColumnData::Continuous(_) => {
                    return Err(Error::Config(format!(
                        "one_hot on column '{}' requires categorical values",
                        col.name
                    )))
                }
            },
            Scheme::PassthroughBinary => {
                let v = continuous_values(col, &cs.scheme)?;
                for (i, x) in v.iter().enumerate() {
                    if x.is_finite() && !(0.0..=1.0).contains(x) {
                        return Err(Error::Data(format!(
                            "passthrough column '{}' has value {x} outside [0,1] at row {i}",
                            col.name
                        )));
                    }
                }
                vec![FeatureColumn::plain(String::new(), v.to_vec())]
            }
        };

        // A row is missing if any derived cell is NaN (all schemes mark
        // every derived cell of a missing row).
        let mut missing_rows = vec![false; n_rows];
        for fc in &block {
            for (i, v) in fc.values.iter().enumerate() {
                if v.is_nan() {
                    missing_rows[i] = true;
                }
            }
        }
        if cs.missing == MissingPolicy::Error {
            if let Some(row) = missing_rows.iter().position(|&m| m) {
                return Err(Error::Data(format!(
                    "column '{}' has a missing value at row {row}",
                    cs.column
                )));
            }
        }

        let group = matches!(cs.scheme, Scheme::FixedWidth { .. } | Scheme::Quantile { .. })
            .then(|| cs.column.clone());
        for fc in block {
            let name = if fc.name.is_empty() {
                cs.column.clone()
            } else {
                format!("{} {}", cs.column, fc.name)
            };
            meta.push(ColumnMeta {
                name,
                source: cs.column.clone(),
                scheme: cs.scheme.label().to_string(),
                group: group.clone(),
                threshold: fc.threshold,
            });
            columns.push(
                fc.values
                    .iter()
                    .map(|v| if v.is_nan() { 0.0 } else { *v })
                    .collect(),
            );
        }
        if cs.missing == MissingPolicy::Indicator {
            meta.push(ColumnMeta {
                name: format!("{} missing", cs.column),
                source: cs.column.clone(),
                scheme: "missing_indicator".to_string(),
                group: None,
                threshold: None,
            });
            columns.push(missing_rows.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect());
        }
    }

    let n_cols = columns.len();
    let mut values = vec![0.0; n_rows * n_cols];
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            values[r * n_cols + c] = v;
        }
    }
    let matrix = FeatureMatrix::new(values, meta, raw.row_ids.clone())?;
    Ok((matrix, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(cols: &[FeatureColumn]) -> Vec<&str> {
        cols.iter().map(|c| c.name.as_str()).collect()
    }

    #[test]
    fn fixed_width_sets_all_higher_thresholds() {
        // value 6 with width-5 bins up to 50: <5 off, <10..<50 on
        let cols = binarize_fixed_width(&[6.0], 5.0, 50.0, 0.0).unwrap();
        assert_eq!(
            names(&cols),
            vec!["<5", "<10", "<15", "<20", "<25", "<30", "<35", "<40", "<45", "<50"]
        );
        assert_eq!(cols[0].values[0], 0.0);
        for c in &cols[1..] {
            assert_eq!(c.values[0], 1.0);
        }
    }

    #[test]
    fn fixed_width_value_near_max_sets_only_last() {
        let cols = binarize_fixed_width(&[46.0], 5.0, 50.0, 0.0).unwrap();
        for c in &cols[..9] {
            assert_eq!(c.values[0], 0.0);
        }
        assert_eq!(cols[9].values[0], 1.0);
    }

    #[test]
    fn fixed_width_ramp_midpoint() {
        // mu(<10) at v=10 with h=1: (10+1-10)/2 = 0.5
        let cols = binarize_fixed_width(&[10.0], 5.0, 50.0, 1.0).unwrap();
        assert!((cols[1].values[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_width_rejects_bad_width() {
        assert!(binarize_fixed_width(&[1.0], 0.0, 10.0, 0.0).is_err());
        assert!(binarize_fixed_width(&[1.0], -1.0, 10.0, 0.0).is_err());
        assert!(binarize_fixed_width(&[1.0], 5.0, 10.0, 2.5).is_err());
    }

    #[test]
    fn fixed_width_flags_missing_as_nan() {
        let cols = binarize_fixed_width(&[f64::NAN, f64::INFINITY, 3.0], 5.0, 10.0, 0.0).unwrap();
        assert!(cols[0].values[0].is_nan());
        assert!(cols[0].values[1].is_nan());
        assert_eq!(cols[0].values[2], 1.0);
    }

    fn age_categories() -> Vec<CategoryDef> {
        vec![
            CategoryDef { name: "child".into(), lower: None, upper: Some(18.0) },
            CategoryDef { name: "young adult".into(), lower: Some(18.0), upper: Some(40.0) },
            CategoryDef { name: "older adult".into(), lower: Some(40.0), upper: Some(65.0) },
            CategoryDef { name: "elderly".into(), lower: Some(65.0), upper: None },
        ]
    }

    #[test]
    fn semantic_ramp_splits_across_boundary() {
        // v=17 near the child/young-adult boundary at 18 with h=2:
        // child (18+2-17)/4 = 0.75, young adult 0.25
        let cols = binarize_semantic_categories(&[17.0], &age_categories(), 2.0).unwrap();
        assert!((cols[0].values[0] - 0.75).abs() < 1e-12);
        assert!((cols[1].values[0] - 0.25).abs() < 1e-12);
        assert_eq!(cols[2].values[0], 0.0);
        assert_eq!(cols[3].values[0], 0.0);
    }

    #[test]
    fn semantic_boundary_splits_evenly() {
        let cols = binarize_semantic_categories(&[18.0], &age_categories(), 2.0).unwrap();
        assert!((cols[0].values[0] - 0.5).abs() < 1e-12);
        assert!((cols[1].values[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn semantic_plateau_is_exclusive() {
        let cols = binarize_semantic_categories(&[30.0], &age_categories(), 2.0).unwrap();
        assert_eq!(cols[0].values[0], 0.0);
        assert_eq!(cols[1].values[0], 1.0);
        assert_eq!(cols[2].values[0], 0.0);
        assert_eq!(cols[3].values[0], 0.0);
    }

    #[test]
    fn semantic_rejects_non_contiguous() {
        let cats = vec![
            CategoryDef { name: "a".into(), lower: None, upper: Some(10.0) },
            CategoryDef { name: "b".into(), lower: Some(12.0), upper: None },
        ];
        assert!(binarize_semantic_categories(&[1.0], &cats, 0.0).is_err());
    }

    #[test]
    fn quantile_thresholds_match_hand_computed_values() {
        // 1..=100 at q=4: linear-interpolation quantiles 25.75, 50.5, 75.25
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let (cols, warnings) = binarize_quantiles(&values, 4, 0.0).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(names(&cols), vec!["<Q1", "<Q2", "<Q3"]);
        assert!((cols[0].threshold.unwrap() - 25.75).abs() < 1e-12);
        assert!((cols[1].threshold.unwrap() - 50.5).abs() < 1e-12);
        assert!((cols[2].threshold.unwrap() - 75.25).abs() < 1e-12);
        // v = 30: below Q2 and Q3 only
        let idx = values.iter().position(|&v| v == 30.0).unwrap();
        assert_eq!(cols[0].values[idx], 0.0);
        assert_eq!(cols[1].values[idx], 1.0);
        assert_eq!(cols[2].values[idx], 1.0);
    }

    #[test]
    fn quantile_collapses_identical_values() {
        let values = vec![7.0; 20];
        let (cols, warnings) = binarize_quantiles(&values, 4, 0.0).unwrap();
        assert_eq!(cols.len(), 1);
        assert!(!warnings.is_empty());
        // constant column: 7 < 7 is false everywhere
        assert!(cols[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantile_value_below_all_thresholds() {
        let mut values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        values.push(0.5);
        let (cols, _) = binarize_quantiles(&values, 4, 0.0).unwrap();
        assert!(cols.iter().all(|c| c.values[100] == 1.0));
    }

    #[test]
    fn exact_value_tolerance() {
        let col = binarize_exact(&[100.0, 99.9, 100.0000005], 100.0, 1e-6).unwrap();
        assert_eq!(col.values[0], 1.0);
        assert_eq!(col.values[1], 0.0);
        assert_eq!(col.values[2], 1.0);
    }

    #[test]
    fn clusters_separate_two_groups() {
        let values = vec![1.0, 1.0, 1.0, 10.0, 10.0, 10.0];
        let (cols, warnings) = binarize_clusters(&values, 2, 0).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cols.len(), 2);
        assert!((cols[0].threshold.unwrap() - 1.0).abs() < 1e-12);
        assert!((cols[1].threshold.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(cols[0].values[0], 1.0);
        assert_eq!(cols[1].values[0], 0.0);
    }

    #[test]
    fn clusters_tie_assigns_lower_index() {
        // centers converge to {1, 3}; 2.0 is equidistant
        let values = vec![1.0, 1.0, 3.0, 3.0, 2.0];
        let (cols, _) = binarize_clusters(&values, 2, 0).unwrap();
        let centers: Vec<f64> = cols.iter().map(|c| c.threshold.unwrap()).collect();
        // Lloyd's: 2.0 joins the lower cluster on the first pass, so centers
        // settle at {4/3, 3}; verify the tie-break convention directly.
        assert!(centers[0] < centers[1]);
        let v = (centers[0] + centers[1]) / 2.0;
        let mut col_values = vec![v];
        col_values.extend_from_slice(&values);
        // re-run with the midpoint included to exercise the tie
        let (cols2, _) = binarize_clusters(&col_values, 2, 0).unwrap();
        let c2: Vec<f64> = cols2.iter().map(|c| c.threshold.unwrap()).collect();
        let mid = (c2[0] + c2[1]) / 2.0;
        let d0 = (mid - c2[0]).abs();
        let d1 = (mid - c2[1]).abs();
        assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn clusters_hand_run_lloyds() {
        // {0,1,2,100,101,102}, k=2: init centers at quantiles 0.25/0.75,
        // first assignment splits low/high, converges to {1, 101}
        let values = vec![0.0, 1.0, 2.0, 100.0, 101.0, 102.0];
        let (cols, _) = binarize_clusters(&values, 2, 0).unwrap();
        assert!((cols[0].threshold.unwrap() - 1.0).abs() < 1e-12);
        assert!((cols[1].threshold.unwrap() - 101.0).abs() < 1e-12);
        // v = 2 belongs to the low cluster
        assert_eq!(cols[0].values[2], 1.0);
        assert_eq!(cols[1].values[2], 0.0);
    }

    #[test]
    fn clusters_reduce_k_when_too_few_distinct() {
        let values = vec![5.0, 5.0, 5.0, 9.0];
        let (cols, warnings) = binarize_clusters(&values, 3, 0).unwrap();
        assert_eq!(cols.len(), 2);
        assert!(!warnings.is_empty());
    }

    fn single_column_table(name: &str, values: Vec<f64>) -> RawTable {
        let n = values.len();
        RawTable {
            columns: vec![RawColumn {
                name: name.into(),
                data: RawColumnData::Continuous(values),
            }],
            row_ids: (0..n).map(|i| format!("r{i}")).collect(),
        }
    }

    #[test]
    fn apply_spec_passthrough_is_identity() {
        let raw = single_column_table("flag", vec![0.0, 1.0, 0.5]);
        let spec = BinarizationSpec {
            columns: vec![ColumnSpec {
                column: "flag".into(),
                scheme: Scheme::PassthroughBinary,
                missing: MissingPolicy::ZeroFill,
            }],
            seed: 0,
        };
        let (matrix, warnings) = apply_spec(&raw, &spec).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(matrix.n_cols(), 1);
        assert_eq!(matrix.meta()[0].name, "flag");
        assert_eq!(
            (0..3).map(|r| matrix.get(r, 0)).collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.5]
        );
    }

    #[test]
    fn apply_spec_fixed_width_column_count() {
        let raw = single_column_table("cigs", vec![6.0, 46.0]);
        let spec = BinarizationSpec {
            columns: vec![ColumnSpec {
                column: "cigs".into(),
                scheme: Scheme::FixedWidth { width: 5.0, max: 50.0, h: 0.0 },
                missing: MissingPolicy::ZeroFill,
            }],
            seed: 0,
        };
        let (matrix, _) = apply_spec(&raw, &spec).unwrap();
        assert_eq!(matrix.n_cols(), 10);
        assert_eq!(matrix.meta()[0].name, "cigs <5");
        assert_eq!(matrix.meta()[0].group.as_deref(), Some("cigs"));
    }

    #[test]
    fn apply_spec_unknown_column_is_named_in_error() {
        let raw = single_column_table("a", vec![1.0]);
        let spec = BinarizationSpec {
            columns: vec![
                ColumnSpec {
                    column: "a".into(),
                    scheme: Scheme::PassthroughBinary,
                    missing: MissingPolicy::ZeroFill,
                },
                ColumnSpec {
                    column: "ghost".into(),
                    scheme: Scheme::PassthroughBinary,
                    missing: MissingPolicy::ZeroFill,
                },
            ],
            seed: 0,
        };
        let err = apply_spec(&raw, &spec).unwrap_err().to_string();
        assert!(err.contains("ghost"), "{err}");
    }

    #[test]
    fn apply_spec_missing_indicator() {
        let raw = single_column_table("x", vec![6.0, f64::NAN]);
        let spec = BinarizationSpec {
            columns: vec![ColumnSpec {
                column: "x".into(),
                scheme: Scheme::FixedWidth { width: 5.0, max: 10.0, h: 0.0 },
                missing: MissingPolicy::Indicator,
            }],
            seed: 0,
        };
        let (matrix, _) = apply_spec(&raw, &spec).unwrap();
        assert_eq!(matrix.n_cols(), 3);
        assert_eq!(matrix.meta()[2].name, "x missing");
        // missing row: derived memberships zeroed, indicator on
        assert_eq!(matrix.get(1, 0), 0.0);
        assert_eq!(matrix.get(1, 1), 0.0);
        assert_eq!(matrix.get(1, 2), 1.0);
        assert_eq!(matrix.get(0, 2), 0.0);
    }

    #[test]
    fn apply_spec_missing_error_policy() {
        let raw = single_column_table("x", vec![f64::NAN]);
        let spec = BinarizationSpec {
            columns: vec![ColumnSpec {
                column: "x".into(),
                scheme: Scheme::FixedWidth { width: 5.0, max: 10.0, h: 0.0 },
                missing: MissingPolicy::Error,
            }],
            seed: 0,
        };
        assert!(apply_spec(&raw, &spec).is_err());
    }

    #[test]
    fn apply_spec_one_hot_explodes_categories() {
        let raw = RawTable {
            columns: vec![RawColumn {
                name: "delivery".into(),
                data: RawColumnData::Categorical(vec![
                    Some("nurse".into()),
                    Some("doctor".into()),
                    None,
                ]),
            }],
            row_ids: vec!["a".into(), "b".into(), "c".into()],
        };
        let spec = BinarizationSpec {
            columns: vec![ColumnSpec {
                column: "delivery".into(),
                scheme: Scheme::OneHot,
                missing: MissingPolicy::Indicator,
            }],
            seed: 0,
        };
        let (matrix, _) = apply_spec(&raw, &spec).unwrap();
        assert_eq!(
            matrix.column_names(),
            vec!["delivery (doctor)", "delivery (nurse)", "delivery missing"]
        );
        assert_eq!(matrix.get(0, 1), 1.0);
        assert_eq!(matrix.get(1, 0), 1.0);
        assert_eq!(matrix.get(2, 2), 1.0);
    }

    #[test]
    fn apply_spec_reproduces_case_study_width() {
        // Illustrative case-study layout: 59 binary flags, 4 age
        // categories, 10 width-5 bins, 3 quartile bins and 1 exact flag
        // give a 77-column table over 1198 rows.
        let n_rows = 1198usize;
        let mut columns = Vec::new();
        for i in 0..59 {
            columns.push(RawColumn {
                name: format!("flag{i:02}"),
                data: RawColumnData::Continuous(
                    (0..n_rows).map(|r| ((r + i) % 2) as f64).collect(),
                ),
            });
        }
        columns.push(RawColumn {
            name: "mean_age".into(),
            data: RawColumnData::Continuous((0..n_rows).map(|r| 15.0 + (r % 60) as f64).collect()),
        });
        columns.push(RawColumn {
            name: "cigarettes_per_day".into(),
            data: RawColumnData::Continuous((0..n_rows).map(|r| (r % 50) as f64).collect()),
        });
        columns.push(RawColumn {
            name: "duration_weeks".into(),
            data: RawColumnData::Continuous((0..n_rows).map(|r| (r % 40) as f64).collect()),
        });
        columns.push(RawColumn {
            name: "pct_female".into(),
            data: RawColumnData::Continuous((0..n_rows).map(|r| (r % 101) as f64).collect()),
        });
        let raw = RawTable {
            columns,
            row_ids: (0..n_rows).map(|i| format!("arm{i}")).collect(),
        };

        let mut specs: Vec<ColumnSpec> = (0..59)
            .map(|i| ColumnSpec {
                column: format!("flag{i:02}"),
                scheme: Scheme::PassthroughBinary,
                missing: MissingPolicy::ZeroFill,
            })
            .collect();
        specs.push(ColumnSpec {
            column: "mean_age".into(),
            scheme: Scheme::SemanticCategories { categories: age_categories(), h: 2.0 },
            missing: MissingPolicy::ZeroFill,
        });
        specs.push(ColumnSpec {
            column: "cigarettes_per_day".into(),
            scheme: Scheme::FixedWidth { width: 5.0, max: 50.0, h: 0.0 },
            missing: MissingPolicy::ZeroFill,
        });
        specs.push(ColumnSpec {
            column: "duration_weeks".into(),
            scheme: Scheme::Quantile { q: 4, h: 0.0 },
            missing: MissingPolicy::ZeroFill,
        });
        specs.push(ColumnSpec {
            column: "pct_female".into(),
            scheme: Scheme::ExactValue { target: 100.0, tolerance: 1e-6 },
            missing: MissingPolicy::ZeroFill,
        });
        let spec = BinarizationSpec { columns: specs, seed: 0 };

        let (matrix, warnings) = apply_spec(&raw, &spec).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(matrix.n_rows(), 1198);
        assert_eq!(matrix.n_cols(), 77);
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{
            "seed": 7,
            "columns": [
                {"column": "age", "scheme": "semantic_categories", "h": 2.0,
                 "categories": [
                    {"name": "child", "upper": 18.0},
                    {"name": "adult", "lower": 18.0}
                 ]},
                {"column": "cigs", "scheme": "fixed_width", "width": 5.0, "max": 50.0},
                {"column": "dur", "scheme": "quantile"},
                {"column": "pct", "scheme": "exact_value", "target": 100.0},
                {"column": "amount", "scheme": "cluster", "k": 3},
                {"column": "flag", "scheme": "passthrough_binary", "missing": "error"}
            ]
        }"#;
        let spec = BinarizationSpec::from_json(text).unwrap();
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.columns.len(), 6);
        assert!(matches!(spec.columns[2].scheme, Scheme::Quantile { q: 4, .. }));
        assert_eq!(spec.columns[5].missing, MissingPolicy::Error);
        let text2 = spec.to_json().unwrap();
        let spec2 = BinarizationSpec::from_json(&text2).unwrap();
        assert_eq!(spec, spec2);
    }
}
