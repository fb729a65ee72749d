//! Outcome tests and the per-cluster summaries behind the detail views.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;

use crate::dataset::{ColumnValues, Dataset, NormalizedView, Row};
use crate::density::Subspace;
use crate::error::{Error, Result};

/// 2×2 counts `[[a, b], [c, d]]`.
pub type Table2 = [[u64; 2]; 2];

/// Relative tolerance when comparing table probabilities against the
/// observed one, as in R's `fisher.test`.
const REL_TOL: f64 = 1e-7;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Two-sided Fisher exact test: the total probability of all tables with the
/// observed margins that are no more likely than the observed table.
pub fn fisher_exact_two_sided(t: Table2) -> f64 {
    let [[a, b], [c, d]] = t;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let ln_denom = ln_choose(n, c1);
    let ln_p = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_denom;
    let observed = ln_p(a);
    let cutoff = observed + REL_TOL.ln_1p();
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|&lp| lp <= cutoff)
        .map(f64::exp)
        .sum();
    p.min(1.0)
}

/// Pearson chi-square test with Yates' continuity correction (1 df).
pub fn chi_square_yates(t: Table2) -> f64 {
    let [[a, b], [c, d]] = t;
    let n = (a + b + c + d) as f64;
    let rows = [(a + b) as f64, (c + d) as f64];
    let cols = [(a + c) as f64, (b + d) as f64];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return 1.0;
    }
    let dev = (a as f64 - rows[0] * cols[0] / n).abs();
    let corrected = (dev - dev.min(0.5)).powi(2);
    let stat: f64 = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| corrected / (rows[i] * cols[j] / n))
        .sum();
    erfc((stat / 2.0).sqrt())
}

/// Whether any expected cell count is below 5.
pub fn needs_exact(t: Table2) -> bool {
    let [[a, b], [c, d]] = t;
    let n = (a + b + c + d) as f64;
    let rows = [(a + b) as f64, (c + d) as f64];
    let cols = [(a + c) as f64, (b + d) as f64];
    rows.iter().any(|r| cols.iter().any(|c| r * c / n < 5.0))
}

/// Two-sided p-value of a 2×2 table: exact test when any expected cell is
/// below 5, continuity-corrected chi-square otherwise.
pub fn table_pvalue(t: Table2) -> f64 {
    if needs_exact(t) {
        fisher_exact_two_sided(t)
    } else {
        chi_square_yates(t)
    }
}

/// Members vs non-members by outcome class: `[[m+, m-], [o+, o-]]`.
pub fn outcome_table(members: &[Row], ds: &Dataset) -> Table2 {
    let mut inside = vec![false; ds.len()];
    for &r in members {
        inside[r] = true;
    }
    let mut t = [[0u64; 2]; 2];
    for r in 0..ds.len() {
        let i = usize::from(!inside[r]);
        let j = usize::from(!ds.is_positive(r));
        t[i][j] += 1;
    }
    t
}

/// P-value for the outcome rate of `members` deviating from the rest of the
/// cohort.
pub fn outcome_pvalue(members: &[Row], ds: &Dataset) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Empty("member set is empty"));
    }
    let t = outcome_table(members, ds);
    if t[1][0] + t[1][1] == 0 {
        return Err(Error::InvalidParameter(
            "cluster covers the whole cohort, no complement to compare".into(),
        ));
    }
    Ok(table_pvalue(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single member.
    pub sd: f64,
    pub n: usize,
    pub degenerate: bool,
}

fn numeric_column<'a>(ds: &'a Dataset, var: &str) -> Result<&'a [f64]> {
    ds.numeric(var)
}

fn stats_of(values: impl Iterator<Item = f64> + Clone) -> Option<GroupStats> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let (sd, degenerate) = if n > 1 {
        let ss: f64 = values.map(|x| (x - mean).powi(2)).sum();
        ((ss / (n - 1) as f64).sqrt(), false)
    } else {
        (0.0, true)
    };
    Some(GroupStats { mean, sd, n, degenerate })
}

/// Mean, sample SD and size of a numeric variable over `members`.
pub fn group_stats(members: &[Row], var: &str, ds: &Dataset) -> Result<GroupStats> {
    let v = numeric_column(ds, var)?;
    stats_of(members.iter().map(|&r| v[r])).ok_or(Error::Empty("member set is empty"))
}

/// A participant group of one cohort, e.g. a cluster, a subpopulation or a
/// whole cohort.
#[derive(Debug, Clone, Copy)]
pub struct Group<'a> {
    pub id: &'a str,
    pub ds: &'a Dataset,
    pub rows: &'a [Row],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorbarEntry {
    pub cluster_id: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    /// `mean` times the positive fraction.
    pub positive_segment: f64,
    /// `mean` times the negative fraction.
    pub negative_segment: f64,
    pub positive_mean: Option<f64>,
    pub negative_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorbarSeries {
    pub variable: String,
    /// How the segments split the mean.
    pub decomposition: String,
    pub entries: Vec<ErrorbarEntry>,
}

/// Per-group mean of `var` split into outcome-class shares, sorted by mean.
/// Empty groups are skipped.
pub fn errorbar_series(groups: &[Group], var: &str) -> Result<ErrorbarSeries> {
    let mut entries = Vec::with_capacity(groups.len());
    for g in groups {
        let v = numeric_column(g.ds, var)?;
        let Some(st) = stats_of(g.rows.iter().map(|&r| v[r])) else {
            continue;
        };
        let pos: Vec<f64> = g.rows.iter().filter(|&&r| g.ds.is_positive(r)).map(|&r| v[r]).collect();
        let neg: Vec<f64> = g.rows.iter().filter(|&&r| !g.ds.is_positive(r)).map(|&r| v[r]).collect();
        let share = pos.len() as f64 / st.n as f64;
        let mean_of = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        entries.push(ErrorbarEntry {
            cluster_id: g.id.to_string(),
            mean: st.mean,
            sd: st.sd,
            n: st.n,
            positive_segment: st.mean * share,
            negative_segment: st.mean * (1.0 - share),
            positive_mean: mean_of(&pos),
            negative_mean: mean_of(&neg),
        });
    }
    entries.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(ErrorbarSeries {
        variable: var.to_string(),
        decomposition: "class_share".into(),
        entries,
    })
}

/// Id of a cohort's global pseudo-cluster, e.g. `S2-G`.
pub fn global_id(ds: &Dataset) -> String {
    format!("{}-G", ds.tag())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_variable: String,
    pub column_variable: String,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

fn categorical_column<'a>(ds: &'a Dataset, var: &str) -> Result<(&'a [u32], Vec<String>)> {
    let codes = ds.categorical(var)?;
    Ok((codes, ds.column(var)?.categories.clone()))
}

/// Cross-tabulation of two categorical variables over `members`.
pub fn contingency(members: &[Row], var_a: &str, var_b: &str, ds: &Dataset) -> Result<ContingencyTable> {
    let (va, la) = categorical_column(ds, var_a)?;
    let (vb, lb) = categorical_column(ds, var_b)?;
    let mut counts = vec![vec![0u64; lb.len()]; la.len()];
    for &r in members {
        counts[va[r] as usize][vb[r] as usize] += 1;
    }
    Ok(ContingencyTable {
        row_variable: var_a.to_string(),
        column_variable: var_b.to_string(),
        row_labels: la,
        column_labels: lb,
        counts,
        total: members.len() as u64,
    })
}

/// Most frequent code, smallest code on ties.
fn mode(codes: impl Iterator<Item = u32>) -> Option<u32> {
    let mut freq: BTreeMap<u32, usize> = BTreeMap::new();
    for c in codes {
        *freq.entry(c).or_default() += 1;
    }
    let mut best: Option<(u32, usize)> = None;
    for (c, n) in freq {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((c, n));
        }
    }
    best.map(|(c, _)| c)
}

fn population_variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Within-group variance per feature column: normalized values for numeric
/// columns, the one-vs-mode indicator for categorical ones.
fn feature_variances(members: &[Row], ds: &Dataset, view: &NormalizedView) -> Vec<(String, f64)> {
    ds.feature_columns()
        .into_iter()
        .map(|c| {
            let name = ds.schema()[c].name.clone();
            let var = match ds.values(c) {
                ColumnValues::Numeric(_) => {
                    let xs: Vec<f64> = members.iter().map(|&r| view.value(c, r)).collect();
                    population_variance(&xs)
                }
                ColumnValues::Categorical(codes) => {
                    let m = mode(members.iter().map(|&r| codes[r])).unwrap_or(0);
                    let p = members.iter().filter(|&&r| codes[r] == m).count() as f64 / members.len() as f64;
                    p * (1.0 - p)
                }
                ColumnValues::Id => unreachable!("features exclude the id column"),
            };
            (name, var)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceShares {
    pub cluster_id: String,
    pub shares: BTreeMap<String, f64>,
    pub involved: Vec<String>,
    /// All variances were zero and the shares are uniform.
    pub uniform: bool,
}

/// Donut sector sizes: each feature column's share of the summed
/// within-cluster variance.
pub fn variance_shares(
    cluster_id: &str,
    members: &[Row],
    subspace: &Subspace,
    ds: &Dataset,
    view: &NormalizedView,
) -> Result<VarianceShares> {
    if members.is_empty() {
        return Err(Error::Empty("member set is empty"));
    }
    let vars = feature_variances(members, ds, view);
    let total: f64 = vars.iter().map(|(_, v)| v).sum();
    let uniform = total <= 0.0;
    let k = vars.len() as f64;
    let shares = vars
        .into_iter()
        .map(|(name, v)| (name, if uniform { 1.0 / k } else { v / total }))
        .collect();
    Ok(VarianceShares {
        cluster_id: cluster_id.to_string(),
        shares,
        involved: subspace.columns().to_vec(),
        uniform,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapSort {
    #[default]
    None,
    MaxVarianceDim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonutHeatmap {
    pub cluster_id: String,
    pub columns: Vec<String>,
    pub involved: Vec<bool>,
    pub sort_column: Option<String>,
    pub row_ids: Vec<String>,
    /// Row-major normalized values; categorical codes scaled to `[0, 1]`.
    pub values: Vec<Vec<f64>>,
}

/// Normalized member-by-feature matrix for the donut heat map.
pub fn donut_heatmap_data(
    cluster_id: &str,
    members: &[Row],
    subspace: &Subspace,
    ds: &Dataset,
    view: &NormalizedView,
    sort: HeatmapSort,
) -> Result<DonutHeatmap> {
    if members.is_empty() {
        return Err(Error::Empty("member set is empty"));
    }
    let cols = ds.feature_columns();
    let cell = |c: usize, r: Row| match ds.values(c) {
        ColumnValues::Categorical(codes) => {
            let k = ds.schema()[c].categories.len();
            if k > 1 {
                codes[r] as f64 / (k - 1) as f64
            } else {
                0.0
            }
        }
        _ => view.value(c, r),
    };
    let mut rows = members.to_vec();
    let mut sort_column = None;
    if sort == HeatmapSort::MaxVarianceDim {
        let vars = feature_variances(members, ds, view);
        let mut best = 0;
        for (i, (_, v)) in vars.iter().enumerate() {
            if *v > vars[best].1 {
                best = i;
            }
        }
        let c = cols[best];
        rows.sort_by(|&a, &b| cell(c, a).total_cmp(&cell(c, b)));
        sort_column = Some(vars[best].0.clone());
    }
    let columns: Vec<String> = cols.iter().map(|&c| ds.schema()[c].name.clone()).collect();
    Ok(DonutHeatmap {
        cluster_id: cluster_id.to_string(),
        involved: columns.iter().map(|n| subspace.contains(n)).collect(),
        columns,
        sort_column,
        row_ids: ds.ids_of(&rows),
        values: rows.iter().map(|&r| cols.iter().map(|&c| cell(c, r)).collect()).collect(),
    })
}

/// Scatterplot-matrix data: raw values of the subspace's numeric columns
/// with the outcome label of every member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplomData {
    pub cluster_id: String,
    pub columns: Vec<String>,
    pub row_ids: Vec<String>,
    pub outcome: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn splom_data(cluster_id: &str, members: &[Row], subspace: &Subspace, ds: &Dataset) -> Result<SplomData> {
    let mut columns = Vec::new();
    let mut data = Vec::new();
    for name in subspace.columns() {
        if let Ok(v) = ds.numeric(name) {
            columns.push(name.clone());
            data.push(v);
        }
    }
    Ok(SplomData {
        cluster_id: cluster_id.to_string(),
        columns,
        row_ids: ds.ids_of(members),
        outcome: members.iter().map(|&r| ds.outcome_label(ds.is_positive(r)).to_string()).collect(),
        values: members.iter().map(|&r| data.iter().map(|v| v[r]).collect()).collect(),
    })
}
