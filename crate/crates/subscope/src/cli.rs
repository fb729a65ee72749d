//! Batch front end. Each subcommand loads a session archive file, runs one
//! operation, saves the archive and prints the resulting document.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use subscope_core::dataset::{read_schema, ConstraintDoc};
use subscope_core::replication::{HyperRectangle, RocMode};
use subscope_core::search::SearchConfig;

use crate::error::{ServiceError, ServiceResult};
use crate::ops;
use crate::session::Session;
use crate::store::{read_archive, write_archive, Store};
use crate::to_json;

#[derive(Debug, Parser)]
#[command(name = "subscope", version, about = "Constraint-based subspace cluster search and replication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Original,
    UnionPredicted,
}

impl From<Mode> for RocMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Original => RocMode::Original,
            Mode::UnionPredicted => RocMode::UnionPredicted,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add a cohort CSV and its schema sidecar to a session file (created if missing).
    Ingest {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        tag: String,
        data: PathBuf,
        schema: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Set must-link/not-link constraints from a file, or generate them from the outcome.
    Constraints {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        tag: Option<String>,
        /// JSON document with `must_link` and `not_link` id pairs.
        #[arg(long, conflicts_with_all = ["n_ml", "n_nl", "seed"])]
        file: Option<PathBuf>,
        #[arg(long, default_value_t = ops::DEFAULT_CONSTRAINTS)]
        n_ml: usize,
        #[arg(long, default_value_t = ops::DEFAULT_CONSTRAINTS)]
        n_nl: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Propensity-score match two cohorts of the session.
    Match {
        #[arg(long)]
        session: PathBuf,
        #[arg(long = "a")]
        tag_a: String,
        #[arg(long = "b")]
        tag_b: String,
        #[arg(long, value_delimiter = ',', required = true)]
        covariates: Vec<String>,
        #[arg(long)]
        caliper: Option<f64>,
        /// Replace both cohorts by their matched participants.
        #[arg(long)]
        apply: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the subspace search on a session cohort, or directly on a CSV and schema.
    Search {
        #[arg(long, conflicts_with = "data")]
        session: Option<PathBuf>,
        #[arg(long)]
        tag: Option<String>,
        /// SearchConfig JSON document.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Constraint document for the file mode; generated when absent.
        #[arg(long, requires = "data")]
        constraints: Option<PathBuf>,
        #[arg(requires = "schema")]
        data: Option<PathBuf>,
        schema: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Ranked, de-duplicated clusters of the session's search result.
    Clusters {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        invert: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// 2-D overview positions and overlap matrices.
    Layout {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate rectangles for a cluster on the new cohort, or recommend one and commit it.
    Replicate {
        #[arg(long)]
        session: PathBuf,
        /// Defaults to the most significant cluster.
        #[arg(long)]
        cluster: Option<String>,
        #[arg(long)]
        new_cohort: Option<String>,
        /// JSON list of rectangles.
        #[arg(long, required_unless_present = "recommend", conflicts_with = "recommend")]
        rects: Option<PathBuf>,
        #[arg(long)]
        recommend: bool,
        #[arg(long, requires = "recommend")]
        grid: Option<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Original, requires = "rects")]
        mode: Mode,
        /// Commit the candidate with this index after evaluating.
        #[arg(long, requires = "rects")]
        commit: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Validation reports and errorbar tables of all committed subpopulations.
    Report {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        format: ReportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Where session archives live; in memory only when unset.
        #[arg(long, env = "SUBSCOPE_DATA_DIR")]
        data_dir: Option<PathBuf>,
    },
}

fn read_input(path: &Path) -> ServiceResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ServiceError::Precondition(format!("missing input file `{}`", path.display())),
        _ => ServiceError::Io(e),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> ServiceResult<T> {
    Ok(serde_json::from_slice(&read_input(path)?)?)
}

fn load(path: &Path) -> ServiceResult<Session> {
    if !path.exists() {
        return Err(ServiceError::Precondition(format!(
            "session file `{}` does not exist; run `ingest` first",
            path.display()
        )));
    }
    read_archive(path)
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> ServiceResult<()> {
    use std::io::Write;
    match output {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

/// Loads the session, applies `f`, saves it and emits the document.
fn with_session<T: serde::Serialize>(
    path: &Path,
    output: Option<&Path>,
    f: impl FnOnce(&mut Session) -> ServiceResult<T>,
) -> ServiceResult<()> {
    let mut s = load(path)?;
    let doc = f(&mut s)?;
    write_archive(path, &s)?;
    emit(output, &to_json(&doc))
}

fn read_only<T: serde::Serialize>(
    path: &Path,
    output: Option<&Path>,
    f: impl FnOnce(&Session) -> ServiceResult<T>,
) -> ServiceResult<()> {
    let s = load(path)?;
    emit(output, &to_json(&f(&s)?))
}

fn ingest_files(s: &mut Session, tag: &str, data: &Path, schema: &Path) -> ServiceResult<ops::IngestReport> {
    if !schema.exists() {
        return Err(ServiceError::Precondition(format!("missing input file `{}`", schema.display())));
    }
    let schema = read_schema(schema)?;
    ops::ingest(s, tag, &read_input(data)?, schema)
}

fn search_config(path: Option<&Path>) -> ServiceResult<SearchConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => SearchConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn file_tag(data: &Path) -> String {
    data.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn run(cli: Cli) -> ServiceResult<()> {
    match cli.command {
        Command::Ingest {
            session,
            tag,
            data,
            schema,
            output,
        } => {
            let mut s = if session.exists() { read_archive(&session)? } else { Session::new() };
            let report = ingest_files(&mut s, &tag, &data, &schema)?;
            write_archive(&session, &s)?;
            emit(output.as_deref(), &to_json(&report))
        }
        Command::Constraints {
            session,
            tag,
            file,
            n_ml,
            n_nl,
            seed,
            output,
        } => {
            let req = match file {
                Some(f) => {
                    let doc: ConstraintDoc = read_json(&f)?;
                    ops::ConstraintsRequest {
                        tag,
                        must_link: Some(doc.must_link),
                        not_link: Some(doc.not_link),
                        generate: None,
                    }
                }
                None => ops::ConstraintsRequest {
                    tag,
                    generate: Some(ops::GenerateSpec { n_ml, n_nl, seed }),
                    ..Default::default()
                },
            };
            with_session(&session, output.as_deref(), |s| ops::set_constraints(s, &req))
        }
        Command::Match {
            session,
            tag_a,
            tag_b,
            covariates,
            caliper,
            apply,
            output,
        } => {
            let req = ops::MatchRequest {
                tag_a,
                tag_b,
                covariates,
                caliper,
                apply,
            };
            with_session(&session, output.as_deref(), |s| ops::match_cohorts(s, &req))
        }
        Command::Search {
            session,
            tag,
            config,
            constraints,
            data,
            schema,
            output,
        } => {
            let req = ops::SearchRequest {
                config: search_config(config.as_deref())?,
                tag: tag.clone(),
            };
            match (session, data, schema) {
                (Some(path), None, None) => with_session(&path, output.as_deref(), |s| ops::search(s, &req)),
                (None, Some(data), Some(schema)) => {
                    let mut s = Session::new();
                    let tag = tag.unwrap_or_else(|| file_tag(&data));
                    ingest_files(&mut s, &tag, &data, &schema)?;
                    if let Some(c) = constraints {
                        let doc: ConstraintDoc = read_json(&c)?;
                        ops::set_constraints(
                            &mut s,
                            &ops::ConstraintsRequest {
                                tag: None,
                                must_link: Some(doc.must_link),
                                not_link: Some(doc.not_link),
                                generate: None,
                            },
                        )?;
                    }
                    let doc = ops::search(&mut s, &req)?;
                    emit(output.as_deref(), &to_json(&doc))
                }
                _ => Err(ServiceError::BadRequest(
                    "give either --session or a data CSV and its schema".into(),
                )),
            }
        }
        Command::Clusters {
            session,
            k,
            invert,
            output,
        } => {
            let q = ops::ClustersQuery {
                k,
                invert: Some(invert),
                redundancy: None,
            };
            read_only(&session, output.as_deref(), |s| ops::clusters(s, &q))
        }
        Command::Layout {
            session,
            beta,
            k,
            output,
        } => read_only(&session, output.as_deref(), |s| ops::layout(s, beta, k)),
        Command::Replicate {
            session,
            cluster,
            new_cohort,
            rects,
            recommend,
            grid,
            mode,
            commit,
            output,
        } => with_session(&session, output.as_deref(), |s| {
            let cluster_id = match cluster {
                Some(c) => c,
                None => ops::top_cluster(s)?,
            };
            if recommend {
                let done = ops::replicate_recommended(s, &cluster_id, grid, new_cohort.as_deref())?;
                return Ok(serde_json::to_value(done)?);
            }
            let rects: Vec<HyperRectangle> = read_json(rects.as_deref().expect("clap requires --rects"))?;
            let req = ops::CandidatesRequest {
                cluster_id,
                rects,
                new_cohort,
                mode: mode.into(),
            };
            let cands = ops::candidates(s, &req)?;
            match commit {
                Some(i) => Ok(serde_json::to_value(ops::commit(s, &ops::CommitRequest { candidate_index: i })?)?),
                None => Ok(serde_json::to_value(cands)?),
            }
        }),
        Command::Report {
            session,
            format,
            output,
        } => {
            let s = load(&session)?;
            let r = ops::report(&s)?;
            let bytes = match format {
                ReportFormat::Json => to_json(&r),
                ReportFormat::Markdown => ops::report_markdown(&r).into_bytes(),
            };
            emit(output.as_deref(), &bytes)
        }
        Command::Serve { port, host, data_dir } => {
            let store = match data_dir {
                Some(d) => Store::open(d)?,
                None => Store::in_memory(),
            };
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::api::serve(Arc::new(store), SocketAddr::new(host, port)))?;
            Ok(())
        }
    }
}
