//! Constraint-guided forward selection over subspaces.
//!
//! Every feature column is first scored on its own. The search then grows
//! the best candidate by merging it with the other candidates, drops merges
//! whose constraint separation falls below both parents, clusters the rest,
//! and keeps a merge as a new candidate only when it beats the best quality
//! seen so far.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ConstraintSet, Dataset, NormalizedView, Row};
use crate::density::{auto_params_for, dbscan_points, Partition, Subspace, SubspacePoints};
use crate::error::{Error, Result};
use crate::geometry::{cluster_distance, ClusterDistanceConfig, ClusterFootprint};
use crate::statistics::outcome_pvalue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Weight of constraint satisfaction in the full quality.
    pub alpha: f64,
    pub max_dimensionality: usize,
    /// Smallest emitted cluster, as a fraction of the cohort.
    pub min_relative_size: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.5,
            max_dimensionality: 5,
            min_relative_size: 0.05,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.max_dimensionality == 0 {
            return Err(Error::InvalidParameter("max_dimensionality must be at least 1".into()));
        }
        if !(self.min_relative_size > 0.0 && self.min_relative_size < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "min_relative_size must lie in (0, 1), got {}",
                self.min_relative_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub separation: f64,
    pub satisfaction: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceQuality {
    pub separation: f64,
    pub satisfaction: f64,
    pub full: f64,
    pub partition: Option<Partition>,
}

impl SubspaceQuality {
    pub fn scores(&self) -> QualityScores {
        QualityScores {
            separation: self.separation,
            satisfaction: self.satisfaction,
            full: self.full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedSubspace {
    pub columns: Subspace,
    pub separation: f64,
    pub satisfaction: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceCluster {
    pub id: String,
    pub subspace: Subspace,
    /// Sorted row indices.
    pub members: Vec<Row>,
    pub quality: QualityScores,
    pub outcome_rate: f64,
    pub p_value: f64,
}

impl SubspaceCluster {
    pub fn footprint(&self, cohort: &str) -> ClusterFootprint {
        ClusterFootprint::new(self.id.clone(), cohort, self.subspace.clone(), self.members.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracePoint {
    pub iteration: usize,
    pub q_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub cohort: String,
    pub config: SearchConfig,
    /// Every fully scored subspace, best first.
    pub ranked_subspaces: Vec<RankedSubspace>,
    pub clusters: Vec<SubspaceCluster>,
    pub q_best_trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDoc {
    pub id: String,
    pub columns: Subspace,
    pub member_ids: Vec<String>,
    pub size: usize,
    pub quality: QualityScores,
    pub outcome_rate: f64,
    pub p_value: f64,
}

impl ClusterDoc {
    pub fn new(c: &SubspaceCluster, ds: &Dataset) -> Self {
        ClusterDoc {
            id: c.id.clone(),
            columns: c.subspace.clone(),
            member_ids: ds.ids_of(&c.members),
            size: c.members.len(),
            quality: c.quality,
            outcome_rate: c.outcome_rate,
            p_value: c.p_value,
        }
    }

    pub fn resolve(&self, ds: &Dataset) -> Result<SubspaceCluster> {
        self.columns.validate(ds)?;
        let members = ds.rows_of(&self.member_ids)?;
        if members.is_empty() {
            return Err(Error::Empty("cluster has no members"));
        }
        Ok(SubspaceCluster {
            id: self.id.clone(),
            subspace: self.columns.clone(),
            members,
            quality: self.quality,
            outcome_rate: self.outcome_rate,
            p_value: self.p_value,
        })
    }
}

/// JSON form of a [`SearchResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchResultDoc {
    pub cohort: String,
    pub config: SearchConfig,
    pub q_best_trace: Vec<TracePoint>,
    pub subspaces: Vec<RankedSubspace>,
    pub clusters: Vec<ClusterDoc>,
}

impl SearchResult {
    pub fn to_doc(&self, ds: &Dataset) -> SearchResultDoc {
        SearchResultDoc {
            cohort: self.cohort.clone(),
            config: self.config,
            q_best_trace: self.q_best_trace.clone(),
            subspaces: self.ranked_subspaces.clone(),
            clusters: self.clusters.iter().map(|c| ClusterDoc::new(c, ds)).collect(),
        }
    }

    pub fn from_doc(doc: &SearchResultDoc, ds: &Dataset) -> Result<Self> {
        Ok(SearchResult {
            cohort: doc.cohort.clone(),
            config: doc.config,
            ranked_subspaces: doc.subspaces.clone(),
            clusters: doc.clusters.iter().map(|c| c.resolve(ds)).collect::<Result<_>>()?,
            q_best_trace: doc.q_best_trace.clone(),
        })
    }

    pub fn cluster(&self, id: &str) -> Option<&SubspaceCluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn top_subspace(&self) -> Option<&Subspace> {
        self.ranked_subspaces.first().map(|r| &r.columns)
    }
}

fn combine(ml: Option<f64>, nl: Option<f64>) -> f64 {
    ((nl.unwrap_or(0.0) - ml.unwrap_or(0.0) + 1.0) / 2.0).clamp(0.0, 1.0)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Constraint rows gathered once per subspace.
struct ConstraintPoints {
    pts: SubspacePoints,
    slot: HashMap<Row, usize>,
}

impl ConstraintPoints {
    fn new(s: &Subspace, cs: &ConstraintSet, view: &NormalizedView) -> Result<Self> {
        let rows: Vec<Row> = cs.rows().into_iter().collect();
        let pts = SubspacePoints::gather(view, s, &rows)?;
        let slot = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        Ok(ConstraintPoints { pts, slot })
    }

    fn dist(&self, (a, b): (Row, Row)) -> f64 {
        self.pts.dist(self.slot[&a], self.slot[&b])
    }
}

/// Reduced quality: how much farther apart not-linked participants are than
/// must-linked ones, `clamp((mean_NL - mean_ML + 1) / 2, 0, 1)`. A missing
/// pair kind contributes 0.
pub fn separation_score(s: &Subspace, cs: &ConstraintSet, view: &NormalizedView) -> Result<f64> {
    if cs.is_empty() {
        return Err(Error::EmptyConstraints);
    }
    let cp = ConstraintPoints::new(s, cs, view)?;
    Ok(combine(
        mean(cs.must_link().map(|p| cp.dist(p))),
        mean(cs.not_link().map(|p| cp.dist(p))),
    ))
}

/// Fraction of satisfied constraints. Noise points satisfy nothing.
pub fn constraint_satisfaction(p: &Partition, cs: &ConstraintSet) -> Result<f64> {
    if cs.is_empty() {
        return Err(Error::EmptyConstraints);
    }
    let label = |r: Row| {
        p.label(r)
            .ok_or_else(|| Error::InvalidParameter(format!("constrained row {r} is not in the partition")))
    };
    let mut ok = 0usize;
    for (a, b) in cs.must_link() {
        if let (Some(x), Some(y)) = (label(a)?, label(b)?) {
            ok += usize::from(x == y);
        }
    }
    for (a, b) in cs.not_link() {
        if let (Some(x), Some(y)) = (label(a)?, label(b)?) {
            ok += usize::from(x != y);
        }
    }
    Ok(ok as f64 / cs.len() as f64)
}

/// Clusters `rows` in `s` with automatic DBSCAN parameters and combines
/// satisfaction and separation with weight `alpha`.
pub fn full_quality(
    s: &Subspace,
    rows: &[Row],
    cs: &ConstraintSet,
    view: &NormalizedView,
    cfg: &SearchConfig,
) -> Result<SubspaceQuality> {
    let separation = separation_score(s, cs, view)?;
    full_quality_with(s, rows, cs, view, cfg, separation)
}

fn full_quality_with(
    s: &Subspace,
    rows: &[Row],
    cs: &ConstraintSet,
    view: &NormalizedView,
    cfg: &SearchConfig,
    separation: f64,
) -> Result<SubspaceQuality> {
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let pts = SubspacePoints::gather(view, s, &rows)?;
    let params = auto_params_for(&pts)?;
    let partition = Partition::from_labels(rows, dbscan_points(&pts, params))?;
    let satisfaction = constraint_satisfaction(&partition, cs)?;
    Ok(SubspaceQuality {
        separation,
        satisfaction,
        full: cfg.alpha * satisfaction + (1.0 - cfg.alpha) * separation,
        partition: Some(partition),
    })
}

struct Scored {
    quality: SubspaceQuality,
}

/// Highest full quality, smallest column list on ties.
fn pick_best<'a>(cands: &'a BTreeSet<Subspace>, scored: &BTreeMap<Subspace, Scored>) -> &'a Subspace {
    let mut best: Option<&Subspace> = None;
    for s in cands {
        if best.is_none_or(|b| scored[s].quality.full > scored[b].quality.full) {
            best = Some(s);
        }
    }
    best.expect("candidate set is non-empty")
}

/// Runs the forward-selection search over all feature columns of `ds`.
pub fn dress_search(ds: &Dataset, cs: &ConstraintSet, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    if cs.is_empty() {
        return Err(Error::EmptyConstraints);
    }
    let features = ds.feature_names();
    if features.is_empty() {
        return Err(Error::Schema("dataset has no feature columns".into()));
    }
    let view = NormalizedView::new(ds);
    let rows = ds.rows();
    let eval = |s: &Subspace| -> Result<Scored> {
        Ok(Scored {
            quality: full_quality(s, &rows, cs, &view, cfg)?,
        })
    };

    let singles: Vec<Subspace> = features.into_iter().map(Subspace::single).collect();
    let first: Vec<Scored> = singles.par_iter().map(eval).collect::<Result<_>>()?;
    let mut scored: BTreeMap<Subspace, Scored> = singles.iter().cloned().zip(first).collect();
    let mut candidates: BTreeSet<Subspace> = singles.into_iter().collect();
    let mut filtered: BTreeSet<Subspace> = BTreeSet::new();

    let best_single = pick_best(&candidates, &scored).clone();
    let mut q_best = scored[&best_single].quality.full;
    let mut stored: Vec<Subspace> = vec![best_single];
    let mut trace = vec![TracePoint {
        iteration: 1,
        q_best,
    }];

    let mut iteration = 1;
    while !candidates.is_empty() {
        iteration += 1;
        let s_can = pick_best(&candidates, &scored).clone();
        let sep_can = scored[&s_can].quality.separation;

        // merge -> partners producing it
        let mut merges: BTreeMap<Subspace, Vec<Subspace>> = BTreeMap::new();
        for other in candidates.iter().filter(|c| **c != s_can) {
            let merged = s_can.union(other);
            if merged.len() > cfg.max_dimensionality
                || merged == s_can
                || scored.contains_key(&merged)
                || filtered.contains(&merged)
            {
                continue;
            }
            merges.entry(merged).or_default().push(other.clone());
        }
        let merges: Vec<(Subspace, Vec<Subspace>)> = merges.into_iter().collect();

        let evaluated: Vec<Option<Scored>> = merges
            .par_iter()
            .map(|(m, partners)| {
                let sep = separation_score(m, cs, &view)?;
                let dropped = sep < sep_can && partners.iter().all(|p| sep < scored[p].quality.separation);
                if dropped {
                    return Ok(None);
                }
                Ok(Some(Scored {
                    quality: full_quality_with(m, &rows, cs, &view, cfg, sep)?,
                }))
            })
            .collect::<Result<_>>()?;

        for ((m, partners), result) in merges.into_iter().zip(evaluated) {
            let Some(sc) = result else {
                filtered.insert(m);
                continue;
            };
            if sc.quality.full > q_best {
                q_best = sc.quality.full;
                for p in &partners {
                    candidates.remove(p);
                }
                candidates.insert(m.clone());
                stored.push(m.clone());
            }
            scored.insert(m, sc);
        }
        candidates.remove(&s_can);
        trace.push(TracePoint { iteration, q_best });
    }

    let mut ranked: Vec<(&Subspace, &Scored)> = scored.iter().collect();
    ranked.sort_by(|a, b| b.1.quality.full.total_cmp(&a.1.quality.full).then_with(|| a.0.cmp(b.0)));

    let min_size = cfg.min_relative_size * ds.len() as f64;
    let stored: BTreeSet<&Subspace> = stored.iter().collect();
    let mut clusters = Vec::new();
    for (s, sc) in &ranked {
        if !stored.contains(s) {
            continue;
        }
        let partition = sc.quality.partition.as_ref().expect("scored subspaces keep their partition");
        for members in partition.clusters() {
            if (members.len() as f64) < min_size {
                continue;
            }
            let p_value = match outcome_pvalue(&members, ds) {
                Ok(p) => p,
                Err(Error::InvalidParameter(_)) => 1.0,
                Err(e) => return Err(e),
            };
            clusters.push(SubspaceCluster {
                id: format!("{}-{}", ds.tag(), clusters.len() + 1),
                subspace: (*s).clone(),
                outcome_rate: ds.outcome_rate(members.iter().copied()),
                members,
                quality: sc.quality.scores(),
                p_value,
            });
        }
    }

    Ok(SearchResult {
        cohort: ds.tag().to_string(),
        config: *cfg,
        ranked_subspaces: ranked
            .into_iter()
            .map(|(s, sc)| RankedSubspace {
                columns: s.clone(),
                separation: sc.quality.separation,
                satisfaction: sc.quality.satisfaction,
                full: sc.quality.full,
            })
            .collect(),
        clusters,
        q_best_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankOptions {
    /// Clusters closer than this (cluster distance at `beta = 0.5`) to a more
    /// significant one are dropped.
    pub redundancy_threshold: f64,
    /// Rank by largest p-value instead of smallest.
    pub invert: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            redundancy_threshold: 0.1,
            invert: false,
        }
    }
}

/// The `k` most significant clusters after removing near-duplicates.
/// P-values are recomputed against `ds`.
pub fn rank_and_filter(
    result: &SearchResult,
    ds: &Dataset,
    k: usize,
    opts: &RankOptions,
) -> Result<Vec<SubspaceCluster>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let mut clusters: Vec<SubspaceCluster> = result.clusters.clone();
    for c in clusters.iter_mut() {
        c.p_value = match outcome_pvalue(&c.members, ds) {
            Ok(p) => p,
            Err(Error::InvalidParameter(_)) => 1.0,
            Err(e) => return Err(e),
        };
    }
    if opts.invert {
        clusters.sort_by(|a, b| b.p_value.total_cmp(&a.p_value));
    } else {
        clusters.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    }
    let cfg = ClusterDistanceConfig::default();
    let mut kept: Vec<(SubspaceCluster, ClusterFootprint)> = Vec::new();
    for c in clusters {
        if kept.len() == k {
            break;
        }
        let fp = c.footprint(ds.tag());
        if kept
            .iter()
            .any(|(_, other)| cluster_distance(&fp, other, cfg) < opts.redundancy_threshold)
        {
            continue;
        }
        kept.push((c, fp));
    }
    Ok(kept.into_iter().map(|(c, _)| c).collect())
}
