//! Session state and its on-disk archive form.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use subscope_core::dataset::{ConstraintDoc, ConstraintSet, Dataset, MatchedCohorts};
use subscope_core::replication::{ReplicationCandidate, RocMode, Subpopulation, ValidationReport};
use subscope_core::search::{SearchResult, SearchResultDoc};

use crate::error::{ServiceError, ServiceResult};

/// Version written into every archive; other versions are refused on import.
pub const FORMAT_VERSION: u32 = 1;

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Constraints together with the cohort whose participants they pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredConstraints {
    pub cohort: String,
    pub must_link: Vec<[String; 2]>,
    pub not_link: Vec<[String; 2]>,
}

impl StoredConstraints {
    pub fn new(ds: &Dataset, cs: &ConstraintSet) -> Self {
        let doc = cs.to_doc(ds);
        StoredConstraints {
            cohort: ds.tag().to_string(),
            must_link: doc.must_link,
            not_link: doc.not_link,
        }
    }

    pub fn resolve(&self, ds: &Dataset) -> ServiceResult<ConstraintSet> {
        let doc = ConstraintDoc {
            must_link: self.must_link.clone(),
            not_link: self.not_link.clone(),
        };
        Ok(ConstraintSet::from_doc(ds, &doc)?)
    }
}

/// The most recent batch of evaluated rectangles; commits pick from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRound {
    pub cluster_id: String,
    pub original: String,
    pub new_cohort: String,
    pub mode: RocMode,
    pub candidates: Vec<ReplicationCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    /// In upload order; the first one is the discovery cohort by default.
    pub datasets: Vec<Dataset>,
    pub constraints: Option<StoredConstraints>,
    pub matched: Option<MatchedCohorts>,
    pub search: Option<SearchResult>,
    pub round: Option<CandidateRound>,
    pub committed: Vec<Subpopulation>,
    pub reports: Vec<ValidationReport>,
    pub created_at: u64,
    pub updated_at: u64,
}

/// A whole session as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionArchive {
    pub format_version: u32,
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub datasets: Vec<Dataset>,
    pub constraints: Option<StoredConstraints>,
    pub matched: Option<MatchedCohorts>,
    pub search_result: Option<SearchResultDoc>,
    pub candidates: Option<CandidateRound>,
    pub committed_subpopulations: Vec<Subpopulation>,
    pub reports: Vec<ValidationReport>,
}

impl Session {
    pub fn new() -> Self {
        Self::with_id(new_id())
    }

    pub fn with_id(id: impl Into<String>) -> Self {
        let now = now_millis();
        Session {
            id: id.into(),
            datasets: Vec::new(),
            constraints: None,
            matched: None,
            search: None,
            round: None,
            committed: Vec::new(),
            reports: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn touch(&mut self) {
        self.updated_at = now_millis().max(self.updated_at);
    }

    pub fn dataset(&self, tag: &str) -> ServiceResult<&Dataset> {
        self.datasets
            .iter()
            .find(|d| d.tag() == tag)
            .ok_or_else(|| ServiceError::NotFound(format!("no dataset tagged `{tag}`")))
    }

    /// The named cohort, or the first uploaded one.
    pub fn primary(&self, tag: Option<&str>) -> ServiceResult<&Dataset> {
        match tag {
            Some(t) => self.dataset(t),
            None => self
                .datasets
                .first()
                .ok_or_else(|| ServiceError::Precondition("no dataset uploaded".into())),
        }
    }

    pub fn search(&self) -> ServiceResult<&SearchResult> {
        self.search
            .as_ref()
            .ok_or_else(|| ServiceError::Precondition("no search result in this session".into()))
    }

    /// The cohort the search ran on.
    pub fn search_cohort(&self) -> ServiceResult<&Dataset> {
        let tag = &self.search()?.cohort;
        self.dataset(tag)
    }

    pub fn to_archive(&self) -> SessionArchive {
        let search_result = self.search.as_ref().map(|r| {
            let ds = self.dataset(&r.cohort).expect("search cohort is kept in the session");
            r.to_doc(ds)
        });
        SessionArchive {
            format_version: FORMAT_VERSION,
            id: self.id.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            datasets: self.datasets.clone(),
            constraints: self.constraints.clone(),
            matched: self.matched.clone(),
            search_result,
            candidates: self.round.clone(),
            committed_subpopulations: self.committed.clone(),
            reports: self.reports.clone(),
        }
    }

    /// Rebuilds a session, checking every id reference against its datasets.
    pub fn from_archive(a: SessionArchive) -> ServiceResult<Self> {
        if a.format_version != FORMAT_VERSION {
            return Err(ServiceError::BadRequest(format!(
                "unsupported archive format version {} (expected {FORMAT_VERSION})",
                a.format_version
            )));
        }
        let mut s = Session {
            id: a.id,
            datasets: Vec::new(),
            constraints: None,
            matched: a.matched,
            search: None,
            round: a.candidates,
            committed: a.committed_subpopulations,
            reports: a.reports,
            created_at: a.created_at,
            updated_at: a.updated_at,
        };
        for ds in a.datasets {
            if s.dataset(ds.tag()).is_ok() {
                return Err(ServiceError::BadRequest(format!("dataset tag `{}` appears twice", ds.tag())));
            }
            s.datasets.push(ds);
        }
        if let Some(c) = a.constraints {
            c.resolve(s.dataset(&c.cohort)?)?;
            s.constraints = Some(c);
        }
        if let Some(doc) = a.search_result {
            let ds = s.dataset(&doc.cohort)?;
            s.search = Some(SearchResult::from_doc(&doc, ds)?);
        }
        for sub in &s.committed {
            sub.rows(s.dataset(&sub.source_cohort)?)?;
        }
        let mut ids: Vec<&str> = s.committed.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ServiceError::BadRequest("duplicate subpopulation id in archive".into()));
        }
        Ok(s)
    }
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}
