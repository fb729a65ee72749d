//! Session operations. The HTTP handlers and the CLI both call these and
//! serialize what they return, so both emit the same documents.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use subscope_core::dataset::{
    generate_constraints, ColumnSchema, ConstraintSet, Dataset, IngestSummary, MatchOptions, MatchedCohorts,
    NormalizedView, RejectedRow, Row,
};
use subscope_core::density::Subspace;
use subscope_core::geometry::{layout as build_layout, ClusterDistanceConfig, ClusterFootprint, Layout};
use subscope_core::replication::{
    HyperRectangle, Recommendation, ReplicationCandidate, ReplicationContext, RocMode, Subpopulation,
    ValidationReport, SIZE_THRESHOLD, validate_replication,
};
use subscope_core::search::{
    dress_search, rank_and_filter, ClusterDoc, RankOptions, SearchConfig, SearchResult, SearchResultDoc,
    SubspaceCluster,
};
use subscope_core::statistics::{
    contingency, donut_heatmap_data, errorbar_series, global_id, splom_data, variance_shares, ContingencyTable,
    DonutHeatmap, ErrorbarSeries, Group, HeatmapSort, SplomData, VarianceShares,
};

use crate::error::{ServiceError, ServiceResult};
use crate::session::{CandidateRound, Session, SessionArchive, StoredConstraints};

/// Constraint counts used when a search starts without constraints.
pub const DEFAULT_CONSTRAINTS: usize = 20;
/// Cut points per variable for rectangle recommendation.
pub const DEFAULT_GRID: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub datasets: Vec<DatasetInfo>,
    pub constraints: Option<ConstraintCounts>,
    pub has_search_result: bool,
    pub committed_subpopulations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub tag: String,
    pub rows: usize,
    pub columns: Vec<ColumnSchema>,
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub cohort: String,
    pub must_link: usize,
    pub not_link: usize,
}

pub fn info(s: &Session) -> SessionInfo {
    SessionInfo {
        id: s.id.clone(),
        created_at: s.created_at,
        updated_at: s.updated_at,
        datasets: datasets(s),
        constraints: s.constraints.as_ref().map(|c| ConstraintCounts {
            cohort: c.cohort.clone(),
            must_link: c.must_link.len(),
            not_link: c.not_link.len(),
        }),
        has_search_result: s.search.is_some(),
        committed_subpopulations: s.committed.iter().map(|p| p.id.clone()).collect(),
    }
}

pub fn datasets(s: &Session) -> Vec<DatasetInfo> {
    s.datasets
        .iter()
        .map(|d| DatasetInfo {
            tag: d.tag().to_string(),
            rows: d.len(),
            columns: d.schema().to_vec(),
            positive_rate: d.outcome_rate(d.rows()),
        })
        .collect()
}

// ---- ingestion ----

/// Upload body: the CSV text and its schema sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadRequest {
    pub csv: String,
    pub schema: Vec<ColumnSchema>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    #[serde(flatten)]
    pub summary: IngestSummary,
    pub rejected_rows: Vec<RejectedRow>,
}

fn check_tag(tag: &str) -> ServiceResult<()> {
    let ok = !tag.is_empty()
        && tag
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!(
            "cohort tag `{tag}` must be non-empty ASCII letters, digits, `-` or `_`"
        )))
    }
}

pub fn ingest(s: &mut Session, tag: &str, csv: &[u8], schema: Vec<ColumnSchema>) -> ServiceResult<IngestReport> {
    check_tag(tag)?;
    if s.dataset(tag).is_ok() {
        return Err(ServiceError::Conflict(format!("dataset `{tag}` already exists")));
    }
    let ing = Dataset::ingest_reader(csv, schema, tag)?;
    let report = IngestReport {
        summary: ing.summary(),
        rejected_rows: ing.rejected,
    };
    s.datasets.push(ing.dataset);
    s.touch();
    Ok(report)
}

// ---- constraints ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n_ml: usize,
    pub n_nl: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsRequest {
    /// Cohort the pairs refer to; the first uploaded one by default.
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub must_link: Option<Vec<[String; 2]>>,
    #[serde(default)]
    pub not_link: Option<Vec<[String; 2]>>,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
}

pub fn set_constraints(s: &mut Session, req: &ConstraintsRequest) -> ServiceResult<StoredConstraints> {
    let ds = s.primary(req.tag.as_deref())?;
    let explicit = req.must_link.is_some() || req.not_link.is_some();
    let cs = match (&req.generate, explicit) {
        (Some(_), true) => {
            return Err(ServiceError::BadRequest(
                "give either `generate` or explicit `must_link`/`not_link`, not both".into(),
            ))
        }
        (Some(g), false) => generate_constraints(ds, g.n_ml, g.n_nl, g.seed)?,
        (None, _) => StoredConstraints {
            cohort: ds.tag().to_string(),
            must_link: req.must_link.clone().unwrap_or_default(),
            not_link: req.not_link.clone().unwrap_or_default(),
        }
        .resolve(ds)?,
    };
    let stored = StoredConstraints::new(ds, &cs);
    s.constraints = Some(stored.clone());
    s.touch();
    Ok(stored)
}

// ---- matching ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    #[serde(rename = "tagA")]
    pub tag_a: String,
    #[serde(rename = "tagB")]
    pub tag_b: String,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub caliper: Option<f64>,
    /// Replace both cohorts by their matched participants.
    #[serde(default)]
    pub apply: bool,
}

pub fn match_cohorts(s: &mut Session, req: &MatchRequest) -> ServiceResult<MatchedCohorts> {
    if req.tag_a == req.tag_b {
        return Err(ServiceError::BadRequest("tagA and tagB must differ".into()));
    }
    if let Some(c) = req.caliper {
        if !(c > 0.0) {
            return Err(ServiceError::BadRequest("caliper must be positive".into()));
        }
    }
    let a = s.dataset(&req.tag_a)?;
    let b = s.dataset(&req.tag_b)?;
    let opts = MatchOptions {
        caliper: req.caliper,
        ..Default::default()
    };
    let m = subscope_core::dataset::propensity_match(a, b, &req.covariates, &opts)?;
    if req.apply {
        let touched = |tag: &str| {
            s.constraints.as_ref().is_some_and(|c| c.cohort == tag)
                || s.search.as_ref().is_some_and(|r| r.cohort == tag)
                || s.committed.iter().any(|p| p.source_cohort == tag)
        };
        if touched(&req.tag_a) || touched(&req.tag_b) {
            return Err(ServiceError::Conflict(
                "matching can only be applied before constraints, searches or commits use the cohorts".into(),
            ));
        }
        let new_a = a.subset(&a.rows_of(&m.retained_a)?)?;
        let new_b = b.subset(&b.rows_of(&m.retained_b)?)?;
        for d in s.datasets.iter_mut() {
            if d.tag() == req.tag_a {
                *d = new_a.clone();
            } else if d.tag() == req.tag_b {
                *d = new_b.clone();
            }
        }
        s.round = None;
    }
    s.matched = Some(m.clone());
    s.touch();
    Ok(m)
}

// ---- search ----

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default)]
    pub config: SearchConfig,
    #[serde(default)]
    pub tag: Option<String>,
}

/// Everything a search run needs, detached from the session.
#[derive(Debug, Clone)]
pub struct SearchJob {
    pub dataset: Dataset,
    pub constraints: ConstraintSet,
    pub config: SearchConfig,
    /// Constraints were generated for this run and should be stored.
    pub generated: bool,
}

/// Stored constraints for the cohort, or 20 must-link and 20 not-link pairs
/// drawn with the config seed.
pub fn prepare_search(s: &Session, req: &SearchRequest) -> ServiceResult<SearchJob> {
    req.config.validate()?;
    let ds = s.primary(req.tag.as_deref())?;
    let (constraints, generated) = match &s.constraints {
        Some(c) if c.cohort == ds.tag() => (c.resolve(ds)?, false),
        _ => (
            generate_constraints(ds, DEFAULT_CONSTRAINTS, DEFAULT_CONSTRAINTS, req.config.seed)?,
            true,
        ),
    };
    Ok(SearchJob {
        dataset: ds.clone(),
        constraints,
        config: req.config,
        generated,
    })
}

pub fn run_search(job: &SearchJob) -> ServiceResult<SearchResult> {
    Ok(dress_search(&job.dataset, &job.constraints, &job.config)?)
}

/// Stores a finished search. Fails if the cohort changed meanwhile.
pub fn finish_search(s: &mut Session, job: &SearchJob, result: SearchResult) -> ServiceResult<SearchResultDoc> {
    let ds = s.dataset(job.dataset.tag())?;
    if *ds != job.dataset {
        return Err(ServiceError::Conflict("the cohort changed while the search was running".into()));
    }
    let generated = job.generated.then(|| StoredConstraints::new(ds, &job.constraints));
    let doc = result.to_doc(ds);
    if generated.is_some() {
        s.constraints = generated;
    }
    s.search = Some(result);
    s.round = None;
    s.touch();
    Ok(doc)
}

pub fn search(s: &mut Session, req: &SearchRequest) -> ServiceResult<SearchResultDoc> {
    let job = prepare_search(s, req)?;
    let result = run_search(&job)?;
    finish_search(s, &job, result)
}

// ---- clusters and layout ----

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClustersQuery {
    pub k: Option<usize>,
    pub invert: Option<bool>,
    pub redundancy: Option<f64>,
}

fn ranked(s: &Session, q: &ClustersQuery) -> ServiceResult<Vec<SubspaceCluster>> {
    let result = s.search()?;
    let ds = s.search_cohort()?;
    let defaults = RankOptions::default();
    let opts = RankOptions {
        redundancy_threshold: q.redundancy.unwrap_or(defaults.redundancy_threshold),
        invert: q.invert.unwrap_or(defaults.invert),
    };
    if !(0.0..=1.0).contains(&opts.redundancy_threshold) {
        return Err(ServiceError::BadRequest("redundancy must lie in [0, 1]".into()));
    }
    if result.clusters.is_empty() {
        return Ok(Vec::new());
    }
    Ok(rank_and_filter(result, ds, q.k.unwrap_or(usize::MAX), &opts)?)
}

pub fn clusters(s: &Session, q: &ClustersQuery) -> ServiceResult<Vec<ClusterDoc>> {
    let ds = s.search_cohort()?;
    Ok(ranked(s, q)?.iter().map(|c| ClusterDoc::new(c, ds)).collect())
}

/// Overview of the ranked clusters plus every committed subpopulation.
pub fn layout(s: &Session, beta: f64, k: Option<usize>) -> ServiceResult<Layout> {
    let cfg = ClusterDistanceConfig::new(beta)?;
    let cohort = s.search_cohort()?.tag().to_string();
    let mut items: Vec<ClusterFootprint> = ranked(
        s,
        &ClustersQuery {
            k,
            ..Default::default()
        },
    )?
    .iter()
    .map(|c| c.footprint(&cohort))
    .collect();
    for p in &s.committed {
        let ds = s.dataset(&p.source_cohort)?;
        items.push(ClusterFootprint::new(
            p.id.clone(),
            p.source_cohort.clone(),
            p.subspace.clone(),
            p.rows(ds)?,
        ));
    }
    Ok(build_layout(&items, cfg)?)
}

// ---- views ----

/// A cluster or committed subpopulation resolved against its cohort.
struct Target<'a> {
    id: String,
    ds: &'a Dataset,
    rows: Vec<Row>,
    subspace: Subspace,
}

fn target<'a>(s: &'a Session, cid: &str) -> ServiceResult<Target<'a>> {
    if let Some(result) = &s.search {
        if let Some(c) = result.cluster(cid) {
            return Ok(Target {
                id: c.id.clone(),
                ds: s.dataset(&result.cohort)?,
                rows: c.members.clone(),
                subspace: c.subspace.clone(),
            });
        }
    }
    if let Some(p) = s.committed.iter().find(|p| p.id == cid) {
        let ds = s.dataset(&p.source_cohort)?;
        return Ok(Target {
            id: p.id.clone(),
            ds,
            rows: p.rows(ds)?,
            subspace: p.subspace.clone(),
        });
    }
    Err(ServiceError::NotFound(format!("no cluster or subpopulation `{cid}`")))
}

pub fn donut(s: &Session, cid: &str) -> ServiceResult<VarianceShares> {
    let t = target(s, cid)?;
    Ok(variance_shares(&t.id, &t.rows, &t.subspace, t.ds, &NormalizedView::new(t.ds))?)
}

pub fn donut_heatmap(s: &Session, cid: &str, sort: HeatmapSort) -> ServiceResult<DonutHeatmap> {
    let t = target(s, cid)?;
    Ok(donut_heatmap_data(
        &t.id,
        &t.rows,
        &t.subspace,
        t.ds,
        &NormalizedView::new(t.ds),
        sort,
    )?)
}

pub fn splom(s: &Session, cid: &str) -> ServiceResult<SplomData> {
    let t = target(s, cid)?;
    Ok(splom_data(&t.id, &t.rows, &t.subspace, t.ds)?)
}

pub fn mosaic(s: &Session, cid: &str, a: &str, b: &str) -> ServiceResult<ContingencyTable> {
    let t = target(s, cid)?;
    Ok(contingency(&t.rows, a, b, t.ds)?)
}

/// The cluster against the global pseudo-cluster of every cohort that has
/// the variable.
pub fn errorbars(s: &Session, cid: &str, var: &str) -> ServiceResult<ErrorbarSeries> {
    let t = target(s, cid)?;
    t.ds.numeric(var)?;
    let globals: Vec<(String, Vec<Row>, &Dataset)> = s
        .datasets
        .iter()
        .filter(|d| d.numeric(var).is_ok())
        .map(|d| (global_id(d), d.rows(), d))
        .collect();
    let mut groups = vec![Group {
        id: &t.id,
        ds: t.ds,
        rows: &t.rows,
    }];
    groups.extend(globals.iter().map(|(id, rows, ds)| Group { id, ds, rows }));
    Ok(errorbar_series(&groups, var)?)
}

// ---- replication ----

fn new_cohort<'a>(s: &'a Session, original: &str, tag: Option<&str>) -> ServiceResult<&'a Dataset> {
    if let Some(t) = tag {
        if t == original {
            return Err(ServiceError::BadRequest("the new cohort must differ from the searched one".into()));
        }
        return s.dataset(t);
    }
    let others: Vec<&Dataset> = s.datasets.iter().filter(|d| d.tag() != original).collect();
    match others.as_slice() {
        [one] => Ok(one),
        [] => Err(ServiceError::Precondition("replication needs a second cohort".into())),
        _ => Err(ServiceError::BadRequest(
            "several cohorts could be the new cohort; name one with `new_cohort`".into(),
        )),
    }
}

fn search_cluster<'a>(s: &'a Session, cluster_id: &str) -> ServiceResult<&'a SubspaceCluster> {
    s.search()?
        .cluster(cluster_id)
        .ok_or_else(|| ServiceError::NotFound(format!("no cluster `{cluster_id}`")))
}

/// The most significant cluster after ranking.
pub fn top_cluster(s: &Session) -> ServiceResult<String> {
    ranked(
        s,
        &ClustersQuery {
            k: Some(1),
            ..Default::default()
        },
    )?
    .into_iter()
    .next()
    .map(|c| c.id)
    .ok_or_else(|| ServiceError::Precondition("the search produced no clusters".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesRequest {
    pub cluster_id: String,
    pub rects: Vec<HyperRectangle>,
    #[serde(default)]
    pub new_cohort: Option<String>,
    #[serde(default)]
    pub mode: RocMode,
}

/// Evaluates every rectangle and keeps the batch for a later commit.
pub fn candidates(s: &mut Session, req: &CandidatesRequest) -> ServiceResult<Vec<ReplicationCandidate>> {
    if req.rects.is_empty() {
        return Err(ServiceError::BadRequest("no rectangles given".into()));
    }
    let cluster = search_cluster(s, &req.cluster_id)?;
    let original = s.search_cohort()?;
    let new = new_cohort(s, original.tag(), req.new_cohort.as_deref())?;
    let ctx = ReplicationContext::new(original, new, cluster)?;
    let cands = req
        .rects
        .iter()
        .map(|r| ctx.evaluate(r, req.mode))
        .collect::<Result<Vec<_>, _>>()?;
    s.round = Some(CandidateRound {
        cluster_id: cluster.id.clone(),
        original: original.tag().to_string(),
        new_cohort: new.tag().to_string(),
        mode: req.mode,
        candidates: cands.clone(),
    });
    s.touch();
    Ok(cands)
}

pub fn recommend(
    s: &Session,
    cluster_id: &str,
    grid: Option<usize>,
    new_tag: Option<&str>,
) -> ServiceResult<Recommendation> {
    let cluster = search_cluster(s, cluster_id)?;
    let original = s.search_cohort()?;
    let new = new_cohort(s, original.tag(), new_tag)?;
    let ctx = ReplicationContext::new(original, new, cluster)?;
    Ok(ctx.recommend(grid.unwrap_or(DEFAULT_GRID))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRequest {
    pub candidate_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Committed {
    pub subpopulation_a: Subpopulation,
    pub subpopulation_b: Subpopulation,
    pub report: ValidationReport,
}

fn fresh_id(taken: &BTreeSet<String>, prefix: &str, sep: char) -> String {
    (1..)
        .map(|k| format!("{prefix}{sep}{k}"))
        .find(|id| !taken.contains(id))
        .expect("unbounded range")
}

/// Commits a candidate of the current round: `A` is named
/// `{cluster}.{k}` and `B` `{new cohort}-{k}`, each with the smallest free `k`.
pub fn commit(s: &mut Session, req: &CommitRequest) -> ServiceResult<Committed> {
    let round = s
        .round
        .as_ref()
        .ok_or_else(|| ServiceError::Precondition("no replication candidates evaluated".into()))?;
    let cand = round.candidates.get(req.candidate_index).ok_or_else(|| {
        ServiceError::NotFound(format!(
            "candidate index {} out of range (round has {})",
            req.candidate_index,
            round.candidates.len()
        ))
    })?;
    let cluster = search_cluster(s, &round.cluster_id)?;
    let original = s.dataset(&round.original)?;
    let new = s.dataset(&round.new_cohort)?;
    let mut taken: BTreeSet<String> = s.committed.iter().map(|p| p.id.clone()).collect();
    if let Some(r) = &s.search {
        taken.extend(r.clusters.iter().map(|c| c.id.clone()));
    }
    let id_a = fresh_id(&taken, &cluster.id, '.');
    taken.insert(id_a.clone());
    let id_b = fresh_id(&taken, new.tag(), '-');
    let ctx = ReplicationContext::new(original, new, cluster)?;
    let (a, b) = ctx.commit(cand, &id_a, &id_b)?;
    let report = validate_replication(&a, &b, original, new, SIZE_THRESHOLD)?;
    s.committed.push(a.clone());
    s.committed.push(b.clone());
    s.reports.push(report.clone());
    s.touch();
    Ok(Committed {
        subpopulation_a: a,
        subpopulation_b: b,
        report,
    })
}

/// What `replicate --recommend` does in one step: recommend, evaluate the
/// recommended box as the only candidate, commit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedReplication {
    pub cluster_id: String,
    pub recommendation: Recommendation,
    pub candidate: ReplicationCandidate,
    pub committed: Committed,
}

pub fn replicate_recommended(
    s: &mut Session,
    cluster_id: &str,
    grid: Option<usize>,
    new_tag: Option<&str>,
) -> ServiceResult<RecommendedReplication> {
    let recommendation = recommend(s, cluster_id, grid, new_tag)?;
    let req = CandidatesRequest {
        cluster_id: cluster_id.to_string(),
        rects: vec![recommendation.rect.clone()],
        new_cohort: new_tag.map(str::to_string),
        mode: RocMode::Original,
    };
    let candidate = candidates(s, &req)?.remove(0);
    let committed = commit(s, &CommitRequest { candidate_index: 0 })?;
    Ok(RecommendedReplication {
        cluster_id: cluster_id.to_string(),
        recommendation,
        candidate,
        committed,
    })
}

// ---- report ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub validation: ValidationReport,
    /// One table per numeric subspace variable: A, B and both cohorts.
    pub errorbars: Vec<ErrorbarSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub sections: Vec<ReportSection>,
}

pub fn report(s: &Session) -> ServiceResult<Report> {
    if s.committed.is_empty() {
        return Err(ServiceError::Precondition("no committed subpopulations".into()));
    }
    let mut sections = Vec::with_capacity(s.reports.len());
    for v in &s.reports {
        let find = |id: &str| {
            s.committed
                .iter()
                .find(|p| p.id == id)
                .ok_or_else(|| ServiceError::NotFound(format!("no subpopulation `{id}`")))
        };
        let (a, b) = (find(&v.subpopulation_a)?, find(&v.subpopulation_b)?);
        let (da, db) = (s.dataset(&a.source_cohort)?, s.dataset(&b.source_cohort)?);
        let (ra, rb) = (a.rows(da)?, b.rows(db)?);
        let (all_a, all_b) = (da.rows(), db.rows());
        let (ga, gb) = (global_id(da), global_id(db));
        let mut errorbars = Vec::new();
        for var in a.subspace.columns() {
            if da.numeric(var).is_err() || db.numeric(var).is_err() {
                continue;
            }
            let groups = [
                Group { id: &a.id, ds: da, rows: &ra },
                Group { id: &b.id, ds: db, rows: &rb },
                Group { id: &ga, ds: da, rows: &all_a },
                Group { id: &gb, ds: db, rows: &all_b },
            ];
            errorbars.push(errorbar_series(&groups, var)?);
        }
        sections.push(ReportSection {
            validation: v.clone(),
            errorbars,
        });
    }
    Ok(Report {
        session_id: s.id.clone(),
        sections,
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn report_markdown(r: &Report) -> String {
    let mut out = format!("# Replication report\n\nSession `{}`\n", r.session_id);
    for sec in &r.sections {
        let v = &sec.validation;
        out += &format!("\n## {} vs {}\n\n", v.subpopulation_a, v.subpopulation_b);
        out += &format!(
            "- outcome rate: {:.4} vs {:.4} (difference {:.4})\n",
            v.distribution.outcome_rate_a, v.distribution.outcome_rate_b, v.distribution.outcome_rate_difference
        );
        out += &format!("- same dimensionality: {}\n", yes_no(v.dimensionality_equal));
        out += &format!(
            "- relative size: {:.4} vs {:.4} (gap {:.4}, close: {})\n",
            v.size.relative_a,
            v.size.relative_b,
            v.size.absolute_difference,
            yes_no(v.size.close)
        );
        out += "\n| variable | KS | mean A | mean B | Δ A | Δ B | same sign |\n|---|---|---|---|---|---|---|\n";
        for (ks, d) in v.distribution.variables.iter().zip(&v.deviation) {
            out += &format!(
                "| {} | {:.4} | {:.4} | {:.4} | {:+.4} | {:+.4} | {} |\n",
                ks.variable,
                ks.statistic,
                d.mean_a,
                d.mean_b,
                d.delta_a,
                d.delta_b,
                yes_no(d.same_sign)
            );
        }
        for series in &sec.errorbars {
            out += &format!(
                "\n### {}\n\n| group | n | mean | sd | positive | negative |\n|---|---|---|---|---|---|\n",
                series.variable
            );
            for e in &series.entries {
                out += &format!(
                    "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
                    e.cluster_id, e.n, e.mean, e.sd, e.positive_segment, e.negative_segment
                );
            }
        }
    }
    out
}

// ---- archives ----

pub fn export(s: &Session) -> SessionArchive {
    s.to_archive()
}

pub fn import(archive: SessionArchive) -> ServiceResult<Session> {
    Session::from_archive(archive)
}
