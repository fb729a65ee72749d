//! Density-based clustering of participants restricted to a subspace.
//!
//! Distances mix normalized numeric differences with 0/1 category
//! mismatches and are scaled by the subspace cardinality, so they stay in
//! `[0, 1]` whatever the number of columns:
//!
//! ```text
//! d(p, q) = sqrt( sum_numeric (x_p - x_q)^2 + sum_categorical [x_p != x_q] ) / sqrt(|s|)
//! ```

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NormalizedView, Row};
use crate::error::{Error, Result};

/// A non-empty set of feature column names, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Subspace(Vec<String>);

impl TryFrom<Vec<String>> for Subspace {
    type Error = Error;

    fn try_from(columns: Vec<String>) -> Result<Self> {
        Subspace::new(columns)
    }
}

impl From<Subspace> for Vec<String> {
    fn from(s: Subspace) -> Self {
        s.0
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.join(", "))
    }
}

impl Subspace {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut cols: Vec<String> = columns.into_iter().map(Into::into).collect();
        if cols.is_empty() {
            return Err(Error::InvalidParameter("empty subspace".into()));
        }
        let n = cols.len();
        cols.sort();
        cols.dedup();
        if cols.len() != n {
            return Err(Error::InvalidParameter("subspace repeats a column".into()));
        }
        Ok(Subspace(cols))
    }

    pub fn single(column: impl Into<String>) -> Self {
        Subspace(vec![column.into()])
    }

    pub fn columns(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, column: &str) -> bool {
        self.0.binary_search_by(|c| c.as_str().cmp(column)).is_ok()
    }

    pub fn union(&self, other: &Subspace) -> Subspace {
        let mut cols = self.0.clone();
        cols.extend(other.0.iter().cloned());
        cols.sort();
        cols.dedup();
        Subspace(cols)
    }

    pub fn intersection_len(&self, other: &Subspace) -> usize {
        self.0.iter().filter(|c| other.contains(c)).count()
    }

    /// Checks that every column is a feature column of `ds`.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        for c in &self.0 {
            if !ds.column(c)?.is_feature() {
                return Err(Error::InvalidParameter(format!("`{c}` is not a feature column")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if min_pts < 2 {
            return Err(Error::InvalidParameter(format!("min_pts must be at least 2, got {min_pts}")));
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

/// Cluster assignment of a set of rows; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    rows: Vec<Row>,
    labels: Vec<Option<usize>>,
    n_clusters: usize,
}

impl Partition {
    pub fn from_labels(rows: Vec<Row>, labels: Vec<Option<usize>>) -> Result<Self> {
        if rows.len() != labels.len() || rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("partition rows must be sorted and unique".into()));
        }
        let n_clusters = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let mut seen = vec![false; n_clusters];
        labels.iter().flatten().for_each(|&c| seen[c] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter("cluster labels must be contiguous".into()));
        }
        Ok(Partition {
            rows,
            labels,
            n_clusters,
        })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// `None` if the row is not part of the partition, `Some(None)` for noise.
    pub fn label(&self, row: Row) -> Option<Option<usize>> {
        self.rows.binary_search(&row).ok().map(|i| self.labels[i])
    }

    /// Members of each cluster, in cluster order.
    pub fn clusters(&self) -> Vec<Vec<Row>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (&r, l) in self.rows.iter().zip(&self.labels) {
            if let Some(c) = l {
                out[*c].push(r);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<Row> {
        self.rows
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.is_none())
            .map(|(&r, _)| r)
            .collect()
    }
}

/// Subspace coordinates of a row set, gathered once for repeated distance
/// evaluation.
pub(crate) struct SubspacePoints {
    n_num: usize,
    n_cat: usize,
    numeric: Vec<f64>,
    categorical: Vec<u32>,
    inv_dim: f64,
    len: usize,
}

impl SubspacePoints {
    pub(crate) fn gather(view: &NormalizedView, s: &Subspace, rows: &[Row]) -> Result<Self> {
        let mut num_cols = Vec::new();
        let mut cat_cols = Vec::new();
        for name in s.columns() {
            let c = view.column_index(name)?;
            if let Some(v) = view.numeric(c) {
                num_cols.push(v);
            } else if let Some(v) = view.categorical(c) {
                cat_cols.push(v);
            } else {
                return Err(Error::InvalidParameter(format!("`{name}` is not a feature column")));
            }
        }
        let mut numeric = Vec::with_capacity(rows.len() * num_cols.len());
        let mut categorical = Vec::with_capacity(rows.len() * cat_cols.len());
        for &r in rows {
            numeric.extend(num_cols.iter().map(|v| v[r]));
            categorical.extend(cat_cols.iter().map(|v| v[r]));
        }
        Ok(SubspacePoints {
            n_num: num_cols.len(),
            n_cat: cat_cols.len(),
            numeric,
            categorical,
            inv_dim: 1.0 / s.len() as f64,
            len: rows.len(),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.numeric[i * self.n_num..][..self.n_num], &self.numeric[j * self.n_num..][..self.n_num]);
        let mut sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let (a, b) = (&self.categorical[i * self.n_cat..][..self.n_cat], &self.categorical[j * self.n_cat..][..self.n_cat]);
        sum += a.iter().zip(b).filter(|(x, y)| x != y).count() as f64;
        (sum * self.inv_dim).sqrt()
    }

    /// Indices within `eps` of point `i`, itself included.
    fn region(&self, i: usize, eps: f64) -> Vec<usize> {
        (0..self.len).filter(|&j| self.dist(i, j) <= eps).collect()
    }
}

/// Mixed distance between two participants of the same cohort.
pub fn mixed_distance(p: Row, q: Row, s: &Subspace, view: &NormalizedView) -> Result<f64> {
    let pts = SubspacePoints::gather(view, s, &[p, q])?;
    Ok(pts.dist(0, 1))
}

/// `min_pts = max(4, round(ln n))`.
pub fn default_min_pts(n: usize) -> usize {
    let ln = (n.max(1) as f64).ln().round() as usize;
    ln.max(4)
}

/// Index of the point farthest from the chord joining the curve's endpoints.
/// Ties resolve to the first index.
pub fn elbow_index(sorted: &[f64]) -> usize {
    let n = sorted.len();
    if n < 3 {
        return 0;
    }
    let (x1, y0, y1) = ((n - 1) as f64, sorted[0], sorted[n - 1]);
    let dy = y1 - y0;
    let norm = (x1 * x1 + dy * dy).sqrt();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &y) in sorted.iter().enumerate() {
        let d = (dy * i as f64 - x1 * (y - y0)).abs() / norm;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Sorted k-distance curve: for every point the distance to its `k`-th
/// nearest point, counting the point itself as the first.
pub(crate) fn k_distance_curve(pts: &SubspacePoints, k: usize) -> Vec<f64> {
    let mut curve: Vec<f64> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..pts.len()).map(|j| pts.dist(i, j)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect();
    curve.sort_by(f64::total_cmp);
    curve
}

/// Smallest eps used when the k-distance elbow sits at zero (duplicated points).
const MIN_EPS: f64 = 1e-12;

/// Derives DBSCAN parameters for a row set in a subspace: `min_pts` from the
/// sample size and `eps` at the elbow of the sorted k-distance curve.
pub fn auto_params(rows: &[Row], s: &Subspace, view: &NormalizedView) -> Result<DbscanParams> {
    let pts = SubspacePoints::gather(view, s, rows)?;
    auto_params_for(&pts)
}

pub(crate) fn auto_params_for(pts: &SubspacePoints) -> Result<DbscanParams> {
    let min_pts = default_min_pts(pts.len());
    if pts.len() < min_pts {
        return Err(Error::TooFewParticipants {
            needed: min_pts,
            got: pts.len(),
        });
    }
    let curve = k_distance_curve(pts, min_pts);
    let eps = curve[elbow_index(&curve)].max(MIN_EPS);
    DbscanParams::new(eps, min_pts)
}

/// DBSCAN over `rows` in subspace `s`.
///
/// Core points have at least `min_pts` points (themselves included) within
/// `eps`, inclusive. Rows are scanned in ascending order, so a border point
/// reachable from several clusters joins the first one discovered.
pub fn dbscan(rows: &[Row], s: &Subspace, params: DbscanParams, view: &NormalizedView) -> Result<Partition> {
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let pts = SubspacePoints::gather(view, s, &rows)?;
    let labels = dbscan_points(&pts, params);
    Partition::from_labels(rows, labels)
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Unvisited,
    Noise,
    Member(usize),
}

pub(crate) fn dbscan_points(pts: &SubspacePoints, params: DbscanParams) -> Vec<Option<usize>> {
    let n = pts.len();
    let mut state = vec![State::Unvisited; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for i in 0..n {
        if state[i] != State::Unvisited {
            continue;
        }
        let region = pts.region(i, params.eps);
        if region.len() < params.min_pts {
            state[i] = State::Noise;
            continue;
        }
        let cluster = next;
        next += 1;
        state[i] = State::Member(cluster);
        queue.extend(region.into_iter().filter(|&j| j != i));
        while let Some(j) = queue.pop_front() {
            match state[j] {
                State::Noise => state[j] = State::Member(cluster),
                State::Unvisited => {
                    state[j] = State::Member(cluster);
                    let region = pts.region(j, params.eps);
                    if region.len() >= params.min_pts {
                        queue.extend(region.into_iter().filter(|&k| state[k] == State::Unvisited || state[k] == State::Noise));
                    }
                }
                State::Member(_) => {}
            }
        }
    }
    state
        .into_iter()
        .map(|s| match s {
            State::Member(c) => Some(c),
            _ => None,
        })
        .collect()
}
