//! Nearest-neighbour propensity score matching between two cohorts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ColumnValues, Dataset, Row};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    /// Maximum score gap of a retained pair. `None` uses 0.2 standard
    /// deviations of the pooled propensity score.
    pub caliper: Option<f64>,
    pub max_iter: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            caliper: None,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Propensity,
    /// Logistic fit failed; pairs were formed on covariate distance instead.
    CovariateDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: String,
    pub b: String,
    /// Propensity score gap, or covariate distance for the fallback method.
    pub gap: f64,
}

/// Mean (numeric) or proportion (per category) of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceStat {
    pub covariate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub before_a: f64,
    pub before_b: f64,
    pub after_a: f64,
    pub after_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedCohorts {
    pub method: MatchMethod,
    pub converged: bool,
    pub caliper: f64,
    pub pairs: Vec<MatchedPair>,
    pub retained_a: Vec<String>,
    pub retained_b: Vec<String>,
    pub balance_stats: Vec<BalanceStat>,
}

enum Term {
    Numeric { a: Vec<f64>, b: Vec<f64> },
    Level { a: Vec<f64>, b: Vec<f64> },
}

struct Covariate<'a> {
    name: &'a str,
    categories: &'a [String],
    col_a: usize,
    col_b: usize,
}

fn covariates<'a>(a: &'a Dataset, b: &'a Dataset, names: &'a [String]) -> Result<Vec<Covariate<'a>>> {
    let out_a = a.outcome_column();
    let out_b = b.outcome_column();
    if out_a.name != out_b.name || out_a.categories != out_b.categories {
        return Err(Error::SchemaMismatch("outcome columns differ".into()));
    }
    let mut list = Vec::new();
    for name in names.iter().chain(std::iter::once(&out_a.name)) {
        if list.iter().any(|c: &Covariate| c.name == name) {
            continue;
        }
        let col_a = a.column_index(name)?;
        let col_b = b.column_index(name)?;
        let (sa, sb) = (&a.schema()[col_a], &b.schema()[col_b]);
        if sa.kind != sb.kind || sa.categories != sb.categories {
            return Err(Error::SchemaMismatch(format!("covariate `{name}` differs between cohorts")));
        }
        if matches!(a.values(col_a), ColumnValues::Id) {
            return Err(Error::InvalidParameter(format!("`{name}` is the id column")));
        }
        list.push(Covariate {
            name,
            categories: &sa.categories,
            col_a,
            col_b,
        });
    }
    Ok(list)
}

fn design_terms(a: &Dataset, b: &Dataset, covs: &[Covariate]) -> Vec<Term> {
    let mut terms = Vec::new();
    for c in covs {
        match (a.values(c.col_a), b.values(c.col_b)) {
            (ColumnValues::Numeric(va), ColumnValues::Numeric(vb)) => {
                terms.push(Term::Numeric {
                    a: va.clone(),
                    b: vb.clone(),
                });
            }
            (ColumnValues::Categorical(va), ColumnValues::Categorical(vb)) => {
                // reference level dropped
                for level in 1..c.categories.len() as u32 {
                    let ind = |v: &[u32]| v.iter().map(|&x| f64::from(u8::from(x == level))).collect();
                    terms.push(Term::Level { a: ind(va), b: ind(vb) });
                }
            }
            _ => unreachable!("kinds checked"),
        }
    }
    terms
}

/// Pooled design matrix with intercept; numeric columns standardized and
/// constant columns dropped. Rows of `a` come first.
fn design_matrix(terms: &[Term], na: usize, nb: usize) -> DMatrix<f64> {
    let n = na + nb;
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for t in terms {
        let (va, vb) = match t {
            Term::Numeric { a, b } | Term::Level { a, b } => (a, b),
        };
        let mut pooled: Vec<f64> = va.iter().chain(vb).copied().collect();
        let mean = pooled.iter().sum::<f64>() / n as f64;
        let var = pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        if var <= 1e-12 {
            continue;
        }
        if let Term::Numeric { .. } = t {
            let sd = var.sqrt();
            pooled.iter_mut().for_each(|x| *x = (*x - mean) / sd);
        }
        cols.push(pooled);
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Newton-Raphson logistic regression. `None` when the fit diverges or the
/// Hessian is singular.
fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>, max_iter: usize) -> Option<DVector<f64>> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let grad = x.transpose() * (y - &mu);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let hessian = x.transpose() * xw;
        let step = hessian.cholesky()?.solve(&grad);
        beta += &step;
        if !beta.iter().all(|b| b.is_finite()) || beta.amax() > 30.0 {
            return None;
        }
        if step.amax() < 1e-9 {
            return Some(beta);
        }
    }
    None
}

/// Greedy nearest-neighbour matching without replacement. `a` rows are
/// visited in the given order; each takes the closest unused `b` row (lowest
/// row on ties) and the pair is kept if its gap is within the caliper.
fn greedy_match(
    order_a: &[Row],
    nb: usize,
    caliper: f64,
    gap: impl Fn(Row, Row) -> f64,
) -> Vec<(Row, Row, f64)> {
    let mut used = vec![false; nb];
    let mut pairs = Vec::new();
    for &ra in order_a {
        let mut best: Option<(Row, f64)> = None;
        for (rb, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let g = gap(ra, rb);
            if best.is_none_or(|(_, bg)| g < bg) {
                best = Some((rb, g));
            }
        }
        let Some((rb, g)) = best else { break };
        if g <= caliper {
            used[rb] = true;
            pairs.push((ra, rb, g));
        }
    }
    pairs
}

fn balance(a: &Dataset, b: &Dataset, covs: &[Covariate], kept_a: &[Row], kept_b: &[Row]) -> Vec<BalanceStat> {
    let mean = |v: &dyn Fn(Row) -> f64, rows: &mut dyn Iterator<Item = Row>| {
        let (mut s, mut n) = (0.0, 0usize);
        for r in rows {
            s += v(r);
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    };
    let mut stats = Vec::new();
    for c in covs {
        let mut push = |level: Option<String>, fa: &dyn Fn(Row) -> f64, fb: &dyn Fn(Row) -> f64| {
            stats.push(BalanceStat {
                covariate: c.name.to_string(),
                level,
                before_a: mean(fa, &mut (0..a.len())),
                before_b: mean(fb, &mut (0..b.len())),
                after_a: mean(fa, &mut kept_a.iter().copied()),
                after_b: mean(fb, &mut kept_b.iter().copied()),
            });
        };
        match (a.values(c.col_a), b.values(c.col_b)) {
            (ColumnValues::Numeric(va), ColumnValues::Numeric(vb)) => {
                push(None, &|r| va[r], &|r| vb[r]);
            }
            (ColumnValues::Categorical(va), ColumnValues::Categorical(vb)) => {
                for (level, label) in c.categories.iter().enumerate() {
                    let level = level as u32;
                    push(
                        Some(label.clone()),
                        &|r| f64::from(u8::from(va[r] == level)),
                        &|r| f64::from(u8::from(vb[r] == level)),
                    );
                }
            }
            _ => unreachable!("kinds checked"),
        }
    }
    stats
}

/// Matches cohort `a` against cohort `b` on `covariates` plus the outcome.
///
/// A logistic model of cohort membership yields a propensity score per
/// participant; `a` participants are visited by descending score and paired
/// greedily with the closest unused `b` participant. If the logistic fit
/// does not converge (e.g. under complete separation) pairs are formed on
/// the mixed covariate distance instead and `method` says so.
pub fn propensity_match(
    a: &Dataset,
    b: &Dataset,
    covariates: &[String],
    opts: &MatchOptions,
) -> Result<MatchedCohorts> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("both cohorts need participants"));
    }
    let covs = self::covariates(a, b, covariates)?;
    let (na, nb) = (a.len(), b.len());
    let terms = design_terms(a, b, &covs);
    let x = design_matrix(&terms, na, nb);
    let y = DVector::from_fn(na + nb, |i, _| if i < na { 1.0 } else { 0.0 });

    let (method, converged, caliper, pairs) = match fit_logistic(&x, &y, opts.max_iter) {
        Some(beta) => {
            let scores: Vec<f64> = (&x * beta).iter().map(|&z| sigmoid(z)).collect();
            let (sa, sb) = scores.split_at(na);
            let caliper = opts.caliper.unwrap_or_else(|| {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                    / (scores.len().max(2) - 1) as f64;
                0.2 * var.sqrt()
            });
            let mut order: Vec<Row> = (0..na).collect();
            order.sort_by(|&i, &j| sa[j].total_cmp(&sa[i]).then(i.cmp(&j)));
            let pairs = greedy_match(&order, nb, caliper, |i, j| (sa[i] - sb[j]).abs());
            (MatchMethod::Propensity, true, caliper, pairs)
        }
        None => {
            let caliper = opts.caliper.unwrap_or(0.2);
            let dist = covariate_distance(a, b, &covs);
            let order: Vec<Row> = (0..na).collect();
            let pairs = greedy_match(&order, nb, caliper, dist);
            (MatchMethod::CovariateDistance, false, caliper, pairs)
        }
    };

    let mut kept_a: Vec<Row> = pairs.iter().map(|p| p.0).collect();
    let mut kept_b: Vec<Row> = pairs.iter().map(|p| p.1).collect();
    let out_pairs = pairs
        .iter()
        .map(|&(ra, rb, gap)| MatchedPair {
            a: a.id(ra).to_string(),
            b: b.id(rb).to_string(),
            gap,
        })
        .collect();
    kept_a.sort_unstable();
    kept_b.sort_unstable();
    Ok(MatchedCohorts {
        method,
        converged,
        caliper,
        pairs: out_pairs,
        retained_a: a.ids_of(&kept_a),
        retained_b: b.ids_of(&kept_b),
        balance_stats: balance(a, b, &covs, &kept_a, &kept_b),
    })
}

/// Mixed distance over the covariates, numeric columns min-max scaled on the
/// pooled cohorts.
fn covariate_distance<'a>(a: &'a Dataset, b: &'a Dataset, covs: &'a [Covariate]) -> impl Fn(Row, Row) -> f64 + 'a {
    let spans: Vec<Option<(f64, f64)>> = covs
        .iter()
        .map(|c| match (a.values(c.col_a), b.values(c.col_b)) {
            (ColumnValues::Numeric(va), ColumnValues::Numeric(vb)) => {
                let lo = va.iter().chain(vb).copied().fold(f64::INFINITY, f64::min);
                let hi = va.iter().chain(vb).copied().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi - lo))
            }
            _ => None,
        })
        .collect();
    let k = covs.len() as f64;
    move |ra, rb| {
        let mut sum = 0.0;
        for (c, span) in covs.iter().zip(&spans) {
            match (a.values(c.col_a), b.values(c.col_b), span) {
                (ColumnValues::Numeric(va), ColumnValues::Numeric(vb), Some((_, w))) => {
                    if *w > 0.0 {
                        sum += ((va[ra] - vb[rb]) / w).powi(2);
                    }
                }
                (ColumnValues::Categorical(va), ColumnValues::Categorical(vb), _) => {
                    sum += f64::from(u8::from(va[ra] != vb[rb]));
                }
                _ => {}
            }
        }
        (sum / k).sqrt()
    }
}
