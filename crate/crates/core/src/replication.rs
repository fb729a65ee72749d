//! Replicating a subspace cluster in a second cohort.
//!
//! A cluster is described by a hyper-rectangle over its numeric subspace
//! columns plus fixed values for its pure categorical columns. Candidate
//! rectangles are scored by the ROC point they reach on the original cohort,
//! new-cohort participants inside a rectangle get 1-NN outcome labels, and a
//! committed candidate yields two subpopulations whose similarity is
//! measured on distribution, dimensionality, size and deviation from the
//! cohort means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnValues, Dataset, NormalizedView, Row};
use crate::density::Subspace;
use crate::error::{Error, Result};
use crate::search::SubspaceCluster;

/// Closed intervals on numeric columns (raw units) and required categories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperRectangle {
    #[serde(default)]
    pub intervals: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub fixings: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<Subspace>,
}

impl HyperRectangle {
    /// Checks bounds, column kinds and, when a subspace is set, that every
    /// keyed column belongs to it.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        for (col, &(lo, hi)) in &self.intervals {
            ds.numeric(col)?;
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("interval on `{col}` has low > high")));
            }
        }
        for (col, cat) in &self.fixings {
            ds.categorical(col)?;
            if !ds.column(col)?.categories.contains(cat) {
                return Err(Error::UnknownCategory {
                    column: col.clone(),
                    value: cat.clone(),
                });
            }
        }
        if let Some(s) = &self.subspace {
            if let Some(col) = self.intervals.keys().chain(self.fixings.keys()).find(|c| !s.contains(c)) {
                return Err(Error::InvalidParameter(format!("`{col}` is not in subspace {s}")));
            }
        }
        Ok(())
    }
}

/// Participants of `rows` inside every interval and matching every fixing.
pub fn rectangle_members(rows: &[Row], rect: &HyperRectangle, ds: &Dataset) -> Result<Vec<Row>> {
    rect.validate(ds)?;
    let mut tests: Vec<Box<dyn Fn(Row) -> bool + '_>> = Vec::new();
    for (col, &(lo, hi)) in &rect.intervals {
        let v = ds.numeric(col)?;
        tests.push(Box::new(move |r| v[r] >= lo && v[r] <= hi));
    }
    for (col, cat) in &rect.fixings {
        let v = ds.categorical(col)?;
        let code = ds.column(col)?.categories.iter().position(|c| c == cat).expect("validated") as u32;
        tests.push(Box::new(move |r| v[r] == code));
    }
    Ok(rows.iter().copied().filter(|&r| tests.iter().all(|t| t(r))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalFilter {
    /// Matching participants of the filtered cohort.
    #[serde(skip)]
    pub rows: Vec<Row>,
    /// Categorical subspace columns on which the cluster is single-valued.
    pub fixings: BTreeMap<String, String>,
    /// Categorical subspace columns with several values in the cluster.
    pub impure: Vec<String>,
}

/// Restricts `cohort` to the categories the cluster is pure on.
pub fn nominal_filter(
    cohort: &Dataset,
    members: &[Row],
    subspace: &Subspace,
    original: &Dataset,
) -> Result<NominalFilter> {
    let mut fixings = BTreeMap::new();
    let mut impure = Vec::new();
    for col in subspace.columns() {
        let ColumnValues::Categorical(codes) = original.values(original.column_index(col)?) else {
            continue;
        };
        let first = members.first().map(|&r| codes[r]);
        match first {
            Some(c) if members.iter().all(|&r| codes[r] == c) => {
                fixings.insert(col.clone(), original.column(col)?.categories[c as usize].clone());
            }
            _ => impure.push(col.clone()),
        }
    }
    let rect = HyperRectangle {
        fixings: fixings.clone(),
        ..Default::default()
    };
    let rows = rectangle_members(&cohort.rows(), &rect, cohort)?;
    Ok(NominalFilter { rows, fixings, impure })
}

/// 1-NN outcome prediction for `query` rows of `query_ds` from `reference`
/// rows of the original cohort, on the numeric columns of `s` normalized
/// with the original cohort's ranges. Ties go to the smallest reference row.
/// Returns whether each query row is predicted positive.
pub fn predict_labels_1nn(
    reference: &[Row],
    ref_ds: &Dataset,
    ref_view: &NormalizedView,
    query: &[Row],
    query_ds: &Dataset,
    s: &Subspace,
) -> Result<Vec<bool>> {
    if reference.is_empty() {
        return Err(Error::Empty("reference set is empty"));
    }
    let query_view = NormalizedView::with_ranges_of(query_ds, ref_view)?;
    let mut ref_cols = Vec::new();
    let mut query_cols = Vec::new();
    for col in s.columns() {
        let rc = ref_view.column_index(col)?;
        if let Some(v) = ref_view.numeric(rc) {
            ref_cols.push(v);
            let qc = query_view.column_index(col)?;
            query_cols.push(
                query_view
                    .numeric(qc)
                    .ok_or_else(|| Error::ColumnKind {
                        column: col.clone(),
                        expected: "numeric",
                    })?,
            );
        }
    }
    let mut reference = reference.to_vec();
    reference.sort_unstable();
    reference.dedup();
    Ok(query
        .iter()
        .map(|&q| {
            let mut best = (reference[0], f64::INFINITY);
            for &r in &reference {
                let d: f64 = ref_cols
                    .iter()
                    .zip(&query_cols)
                    .map(|(rv, qv)| (rv[r] - qv[q]).powi(2))
                    .sum();
                if d < best.1 {
                    best = (r, d);
                }
            }
            ref_ds.is_positive(best.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tpr: f64,
    pub fpr: f64,
}

fn roc_from(labels: impl Iterator<Item = (bool, bool)>) -> Result<RocPoint> {
    let (mut tp, mut p, mut fp, mut n) = (0usize, 0usize, 0usize, 0usize);
    for (inside, positive) in labels {
        if positive {
            p += 1;
            tp += usize::from(inside);
        } else {
            n += 1;
            fp += usize::from(inside);
        }
    }
    if p == 0 || n == 0 {
        return Err(Error::OneClass);
    }
    Ok(RocPoint {
        tpr: tp as f64 / p as f64,
        fpr: fp as f64 / n as f64,
    })
}

/// Sensitivity and 1 − specificity of rectangle membership as a predictor
/// of the observed outcome over `eval_rows`.
pub fn roc_point(rect: &HyperRectangle, eval_rows: &[Row], ds: &Dataset) -> Result<RocPoint> {
    let inside = rectangle_members(eval_rows, rect, ds)?;
    let mut flag = vec![false; ds.len()];
    for r in inside {
        flag[r] = true;
    }
    roc_from(eval_rows.iter().map(|&r| (flag[r], ds.is_positive(r))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocMode {
    /// Nominal-filtered original cohort with observed labels.
    #[default]
    Original,
    /// Additionally the nominal-filtered new cohort with 1-NN labels.
    UnionPredicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationCandidate {
    pub rect: HyperRectangle,
    pub tpr: f64,
    pub fpr: f64,
    pub original_members_in_rect: Vec<String>,
    pub new_cohort_members_in_rect: Vec<String>,
    pub predicted_labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelProvenance {
    Observed,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subpopulation {
    pub id: String,
    pub source_cohort: String,
    pub members: Vec<String>,
    pub subspace: Subspace,
    pub rect: HyperRectangle,
    pub labels: BTreeMap<String, String>,
    pub label_provenance: LabelProvenance,
}

impl Subpopulation {
    pub fn rows(&self, ds: &Dataset) -> Result<Vec<Row>> {
        ds.rows_of(&self.members)
    }

    /// Share of members labelled `positive`.
    pub fn outcome_rate(&self, positive: &str) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.values().filter(|l| *l == positive).count() as f64 / self.labels.len() as f64
    }
}

/// Everything needed to evaluate rectangles for one cluster across two
/// cohorts.
pub struct ReplicationContext<'a> {
    pub original: &'a Dataset,
    pub new_cohort: &'a Dataset,
    pub cluster: &'a SubspaceCluster,
    pub view: NormalizedView,
    /// Original cohort after the nominal filter: the ROC population and the
    /// 1-NN reference set.
    pub eval: NominalFilter,
    pub new_filtered: NominalFilter,
}

impl<'a> ReplicationContext<'a> {
    pub fn new(original: &'a Dataset, new_cohort: &'a Dataset, cluster: &'a SubspaceCluster) -> Result<Self> {
        cluster.subspace.validate(original)?;
        cluster.subspace.validate(new_cohort)?;
        let eval = nominal_filter(original, &cluster.members, &cluster.subspace, original)?;
        let new_filtered = nominal_filter(new_cohort, &cluster.members, &cluster.subspace, original)?;
        Ok(ReplicationContext {
            original,
            new_cohort,
            cluster,
            view: NormalizedView::new(original),
            eval,
            new_filtered,
        })
    }

    /// The rectangle as applied: restricted to the cluster subspace, with
    /// the nominal fixings added.
    fn complete(&self, rect: &HyperRectangle) -> Result<HyperRectangle> {
        let mut rect = rect.clone();
        match &rect.subspace {
            Some(s) if s != &self.cluster.subspace => {
                return Err(Error::InvalidParameter(format!(
                    "rectangle subspace {s} differs from cluster subspace {}",
                    self.cluster.subspace
                )))
            }
            _ => rect.subspace = Some(self.cluster.subspace.clone()),
        }
        for (col, cat) in &self.eval.fixings {
            rect.fixings.entry(col.clone()).or_insert_with(|| cat.clone());
        }
        rect.validate(self.original)?;
        rect.validate(self.new_cohort)?;
        Ok(rect)
    }

    fn predict(&self, query: &[Row]) -> Result<Vec<bool>> {
        predict_labels_1nn(
            &self.eval.rows,
            self.original,
            &self.view,
            query,
            self.new_cohort,
            &self.cluster.subspace,
        )
    }

    pub fn evaluate(&self, rect: &HyperRectangle, mode: RocMode) -> Result<ReplicationCandidate> {
        let rect = self.complete(rect)?;
        let roc = match mode {
            RocMode::Original => roc_point(&rect, &self.eval.rows, self.original)?,
            RocMode::UnionPredicted => {
                let mut inside = vec![false; self.original.len()];
                for r in rectangle_members(&self.eval.rows, &rect, self.original)? {
                    inside[r] = true;
                }
                let mut inside_new = vec![false; self.new_cohort.len()];
                for r in rectangle_members(&self.new_filtered.rows, &rect, self.new_cohort)? {
                    inside_new[r] = true;
                }
                let predicted = if self.new_filtered.rows.is_empty() {
                    Vec::new()
                } else {
                    self.predict(&self.new_filtered.rows)?
                };
                let observed = self.eval.rows.iter().map(|&r| (inside[r], self.original.is_positive(r)));
                let new = self.new_filtered.rows.iter().zip(predicted).map(|(&r, p)| (inside_new[r], p));
                roc_from(observed.chain(new))?
            }
        };
        let original_in = rectangle_members(&self.eval.rows, &rect, self.original)?;
        let new_in = rectangle_members(&self.new_filtered.rows, &rect, self.new_cohort)?;
        let predicted = if new_in.is_empty() { Vec::new() } else { self.predict(&new_in)? };
        let predicted_labels = new_in
            .iter()
            .zip(predicted)
            .map(|(&r, p)| (self.new_cohort.id(r).to_string(), self.original.outcome_label(p).to_string()))
            .collect();
        Ok(ReplicationCandidate {
            rect,
            tpr: roc.tpr,
            fpr: roc.fpr,
            original_members_in_rect: self.original.ids_of(&original_in),
            new_cohort_members_in_rect: self.new_cohort.ids_of(&new_in),
            predicted_labels,
        })
    }

    /// Turns a candidate into the original-cohort subpopulation `id_a`, the
    /// nominal-filtered original participants inside the rectangle
    /// (observed labels) and the new-cohort subpopulation `id_b` (predicted
    /// labels).
    pub fn commit(&self, cand: &ReplicationCandidate, id_a: &str, id_b: &str) -> Result<(Subpopulation, Subpopulation)> {
        commit_candidate(self.cluster, cand, self.original, self.new_cohort, id_a, id_b)
    }

    /// Rectangle search on the nominal-filtered original cohort.
    pub fn recommend(&self, grid: usize) -> Result<Recommendation> {
        let mut rec = recommend_rectangle(self.cluster, &self.eval.rows, self.original, grid)?;
        rec.rect.fixings = self.eval.fixings.clone();
        Ok(rec)
    }
}

pub fn commit_candidate(
    cluster: &SubspaceCluster,
    cand: &ReplicationCandidate,
    original: &Dataset,
    new_cohort: &Dataset,
    id_a: &str,
    id_b: &str,
) -> Result<(Subpopulation, Subpopulation)> {
    if cand.original_members_in_rect.is_empty() {
        return Err(Error::Empty("subpopulation A is empty"));
    }
    if cand.new_cohort_members_in_rect.is_empty() {
        return Err(Error::Empty("subpopulation B is empty"));
    }
    let rows_a = original.rows_of(&cand.original_members_in_rect)?;
    new_cohort.rows_of(&cand.new_cohort_members_in_rect)?;
    let a = Subpopulation {
        id: id_a.to_string(),
        source_cohort: original.tag().to_string(),
        members: cand.original_members_in_rect.clone(),
        subspace: cluster.subspace.clone(),
        rect: cand.rect.clone(),
        labels: rows_a
            .iter()
            .map(|&r| (original.id(r).to_string(), original.outcome_label(original.is_positive(r)).to_string()))
            .collect(),
        label_provenance: LabelProvenance::Observed,
    };
    let b = Subpopulation {
        id: id_b.to_string(),
        source_cohort: new_cohort.tag().to_string(),
        members: cand.new_cohort_members_in_rect.clone(),
        subspace: cluster.subspace.clone(),
        rect: cand.rect.clone(),
        labels: cand.predicted_labels.clone(),
        label_provenance: LabelProvenance::Predicted,
    };
    Ok((a, b))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub variable: String,
    pub statistic: f64,
    /// Both samples constant or one of them empty.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMeasure {
    pub variables: Vec<KsEntry>,
    pub outcome_rate_a: f64,
    pub outcome_rate_b: f64,
    pub outcome_rate_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeMeasure {
    pub relative_a: f64,
    pub relative_b: f64,
    pub absolute_difference: f64,
    pub threshold: f64,
    pub close: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub variable: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub global_mean_a: f64,
    pub global_mean_b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub same_sign: bool,
    /// `|Δa − Δb| / max(|Δa|, |Δb|)`, 0 when both deviations are 0.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subpopulation_a: String,
    pub subpopulation_b: String,
    pub distribution: DistributionMeasure,
    pub dimensionality_equal: bool,
    pub size: SizeMeasure,
    pub deviation: Vec<DeviationEntry>,
}

/// Default closeness threshold on the relative-size difference.
pub const SIZE_THRESHOLD: f64 = 0.05;

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// The four similarity measures between two committed subpopulations.
pub fn validate_replication(
    a: &Subpopulation,
    b: &Subpopulation,
    global_a: &Dataset,
    global_b: &Dataset,
    size_threshold: f64,
) -> Result<ValidationReport> {
    let rows_a = a.rows(global_a)?;
    let rows_b = b.rows(global_b)?;
    let mut variables = Vec::new();
    let mut deviation = Vec::new();
    let mut names: Vec<&String> = a.subspace.columns().iter().collect();
    names.extend(b.subspace.columns().iter().filter(|c| !a.subspace.contains(c)));
    names.sort();
    for name in names {
        let (Ok(va), Ok(vb)) = (global_a.numeric(name), global_b.numeric(name)) else {
            continue;
        };
        let xa: Vec<f64> = rows_a.iter().map(|&r| va[r]).collect();
        let xb: Vec<f64> = rows_b.iter().map(|&r| vb[r]).collect();
        let degenerate = xa.is_empty() || xb.is_empty() || (constant(&xa) && constant(&xb));
        variables.push(KsEntry {
            variable: name.clone(),
            statistic: if degenerate { 0.0 } else { ks_statistic(&xa, &xb) },
            degenerate,
        });
        let (ma, mb) = (mean(&xa), mean(&xb));
        let (ga, gb) = (mean(va), mean(vb));
        let (da, db) = (ma - ga, mb - gb);
        let scale = da.abs().max(db.abs());
        deviation.push(DeviationEntry {
            variable: name.clone(),
            mean_a: ma,
            mean_b: mb,
            global_mean_a: ga,
            global_mean_b: gb,
            delta_a: da,
            delta_b: db,
            same_sign: da.signum() == db.signum() || (da == 0.0 && db == 0.0),
            relative_gap: if scale > 0.0 { (da - db).abs() / scale } else { 0.0 },
        });
    }
    let rate_a = a.outcome_rate(global_a.positive_label());
    let rate_b = b.outcome_rate(global_b.positive_label());
    let rel_a = rows_a.len() as f64 / global_a.len() as f64;
    let rel_b = rows_b.len() as f64 / global_b.len() as f64;
    Ok(ValidationReport {
        subpopulation_a: a.id.clone(),
        subpopulation_b: b.id.clone(),
        distribution: DistributionMeasure {
            variables,
            outcome_rate_a: rate_a,
            outcome_rate_b: rate_b,
            outcome_rate_difference: (rate_a - rate_b).abs(),
        },
        dimensionality_equal: a.subspace == b.subspace,
        size: SizeMeasure {
            relative_a: rel_a,
            relative_b: rel_b,
            absolute_difference: (rel_a - rel_b).abs(),
            threshold: size_threshold,
            close: (rel_a - rel_b).abs() <= size_threshold,
        },
        deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rect: HyperRectangle,
    /// `tpr · (1 − fpr)` of `rect`.
    pub objective: f64,
    /// Objective of the cluster's bounding box.
    pub initial_objective: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Largest numeric subspace handled by [`recommend_rectangle`].
pub const MAX_RECOMMEND_DIMS: usize = 5;

/// `grid` quantile cut points of `values`: indices
/// `round(i·(m−1)/(grid−1))` of the sorted distinct values.
pub fn quantile_cuts(values: &[f64], grid: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.is_empty() {
        return v;
    }
    let m = v.len();
    let mut cuts: Vec<f64> = (0..grid)
        .map(|i| v[((i * (m - 1)) as f64 / (grid - 1) as f64).round() as usize])
        .collect();
    cuts.dedup();
    cuts
}

/// Coordinate search for the box maximizing `tpr · (1 − fpr)` over
/// `eval_rows`, starting from the cluster's bounding box.
///
/// Each numeric subspace column may move its endpoints to any pair drawn
/// from its quantile cuts over `eval_rows` plus the starting endpoints; a
/// move is taken only if it strictly improves the objective. Passes repeat
/// until one makes no move.
pub fn recommend_rectangle(
    cluster: &SubspaceCluster,
    eval_rows: &[Row],
    ds: &Dataset,
    grid: usize,
) -> Result<Recommendation> {
    if grid < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 cut points".into()));
    }
    if cluster.members.is_empty() {
        return Err(Error::Empty("cluster has no members"));
    }
    let cols: Vec<&String> = cluster.subspace.columns().iter().filter(|c| ds.numeric(c).is_ok()).collect();
    if cols.len() > MAX_RECOMMEND_DIMS {
        return Err(Error::InvalidParameter(format!(
            "{} numeric dimensions exceed the limit of {MAX_RECOMMEND_DIMS}",
            cols.len()
        )));
    }
    let positive: Vec<bool> = eval_rows.iter().map(|&r| ds.is_positive(r)).collect();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClass);
    }
    let values: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let v = ds.numeric(c).expect("numeric");
            eval_rows.iter().map(|&r| v[r]).collect()
        })
        .collect();
    let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(cols.len());
    let mut choices: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for (k, c) in cols.iter().enumerate() {
        let v = ds.numeric(c).expect("numeric");
        let lo = cluster.members.iter().map(|&r| v[r]).fold(f64::INFINITY, f64::min);
        let hi = cluster.members.iter().map(|&r| v[r]).fold(f64::NEG_INFINITY, f64::max);
        let cuts = quantile_cuts(&values[k], grid);
        if cuts.len() == 1 {
            bounds.push((cuts[0], cuts[0]));
            choices.push(Vec::new());
            continue;
        }
        let mut set = cuts;
        set.push(lo);
        set.push(hi);
        set.sort_by(f64::total_cmp);
        set.dedup();
        bounds.push((lo, hi));
        choices.push(set);
    }

    let objective = |b: &[(f64, f64)]| -> (f64, f64, f64) {
        let (mut tp, mut fp) = (0usize, 0usize);
        for i in 0..positive.len() {
            let inside = values.iter().zip(b).all(|(v, &(lo, hi))| v[i] >= lo && v[i] <= hi);
            if inside {
                if positive[i] {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let tpr = tp as f64 / n_pos as f64;
        let fpr = fp as f64 / n_neg as f64;
        (tpr * (1.0 - fpr), tpr, fpr)
    };

    let initial = objective(&bounds).0;
    let mut current = initial;
    loop {
        let mut moved = false;
        for k in 0..cols.len() {
            let mut best: Option<((f64, f64), f64)> = None;
            for (i, &lo) in choices[k].iter().enumerate() {
                for &hi in &choices[k][i..] {
                    let mut trial = bounds.clone();
                    trial[k] = (lo, hi);
                    let f = objective(&trial).0;
                    if f > best.map_or(current, |b| b.1) {
                        best = Some(((lo, hi), f));
                    }
                }
            }
            if let Some((b, f)) = best {
                bounds[k] = b;
                current = f;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let (obj, tpr, fpr) = objective(&bounds);
    Ok(Recommendation {
        rect: HyperRectangle {
            intervals: cols.iter().map(|c| (*c).clone()).zip(bounds).collect(),
            fixings: BTreeMap::new(),
            subspace: Some(cluster.subspace.clone()),
        },
        objective: obj,
        initial_objective: initial,
        tpr,
        fpr,
    })
}
