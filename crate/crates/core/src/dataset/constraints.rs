use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Row};
use crate::error::{Error, Result};

/// Must-link and not-link participant pairs.
///
/// Pairs are stored unordered as `(min, max)` row pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    must_link: BTreeSet<(Row, Row)>,
    not_link: BTreeSet<(Row, Row)>,
}

/// Wire form of a [`ConstraintSet`], keyed by participant id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    #[serde(default)]
    pub must_link: Vec<[String; 2]>,
    #[serde(default)]
    pub not_link: Vec<[String; 2]>,
}

fn ordered(a: Row, b: Row) -> (Row, Row) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ConstraintSet {
    /// Builds a constraint set over a dataset of `n_rows` participants.
    pub fn new(
        n_rows: usize,
        must_link: impl IntoIterator<Item = (Row, Row)>,
        not_link: impl IntoIterator<Item = (Row, Row)>,
    ) -> Result<Self> {
        let collect = |pairs: &mut dyn Iterator<Item = (Row, Row)>| -> Result<BTreeSet<(Row, Row)>> {
            let mut out = BTreeSet::new();
            for (a, b) in pairs {
                if a == b {
                    return Err(Error::InvalidConstraint(format!("self pair on row {a}")));
                }
                if a >= n_rows || b >= n_rows {
                    return Err(Error::InvalidConstraint(format!(
                        "pair ({a}, {b}) outside {n_rows} rows"
                    )));
                }
                out.insert(ordered(a, b));
            }
            Ok(out)
        };
        let must_link = collect(&mut must_link.into_iter())?;
        let not_link = collect(&mut not_link.into_iter())?;
        if let Some(p) = must_link.intersection(&not_link).next() {
            return Err(Error::InvalidConstraint(format!(
                "pair ({}, {}) is both must-link and not-link",
                p.0, p.1
            )));
        }
        Ok(ConstraintSet { must_link, not_link })
    }

    pub fn from_doc(ds: &Dataset, doc: &ConstraintDoc) -> Result<Self> {
        let resolve = |pairs: &[[String; 2]]| -> Result<Vec<(Row, Row)>> {
            pairs
                .iter()
                .map(|[a, b]| Ok((ds.require_row(a)?, ds.require_row(b)?)))
                .collect()
        };
        Self::new(ds.len(), resolve(&doc.must_link)?, resolve(&doc.not_link)?)
    }

    pub fn to_doc(&self, ds: &Dataset) -> ConstraintDoc {
        let ids = |pairs: &BTreeSet<(Row, Row)>| {
            pairs
                .iter()
                .map(|&(a, b)| [ds.id(a).to_string(), ds.id(b).to_string()])
                .collect()
        };
        ConstraintDoc {
            must_link: ids(&self.must_link),
            not_link: ids(&self.not_link),
        }
    }

    pub fn must_link(&self) -> impl Iterator<Item = (Row, Row)> + '_ {
        self.must_link.iter().copied()
    }

    pub fn not_link(&self) -> impl Iterator<Item = (Row, Row)> + '_ {
        self.not_link.iter().copied()
    }

    pub fn n_must_link(&self) -> usize {
        self.must_link.len()
    }

    pub fn n_not_link(&self) -> usize {
        self.not_link.len()
    }

    pub fn len(&self) -> usize {
        self.must_link.len() + self.not_link.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every row that appears in some constraint.
    pub fn rows(&self) -> BTreeSet<Row> {
        self.must_link
            .iter()
            .chain(&self.not_link)
            .flat_map(|&(a, b)| [a, b])
            .collect()
    }
}

fn pairs_within(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Samples `count` distinct unordered pairs uniformly from a pair space of
/// `available` pairs described by `decode`.
fn sample_pairs(
    rng: &mut ChaCha8Rng,
    available: usize,
    count: usize,
    decode: impl Fn(usize) -> (Row, Row),
    draw: impl Fn(&mut ChaCha8Rng) -> (Row, Row),
) -> BTreeSet<(Row, Row)> {
    if count == 0 {
        return BTreeSet::new();
    }
    if count * 2 > available {
        return sample(rng, available, count)
            .into_iter()
            .map(|i| {
                let (a, b) = decode(i);
                ordered(a, b)
            })
            .collect();
    }
    let mut seen = HashSet::with_capacity(count);
    while seen.len() < count {
        let (a, b) = draw(rng);
        seen.insert(ordered(a, b));
    }
    seen.into_iter().collect()
}

/// Index of the `k`-th pair `(i, j)`, `i < j`, in row-major order over `n` items.
fn decode_within(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let span = n - i - 1;
        if k < span {
            return (i, i + 1 + k);
        }
        k -= span;
    }
    unreachable!("pair index out of range")
}

fn draw_within(rng: &mut ChaCha8Rng, rows: &[Row]) -> (Row, Row) {
    let i = rng.random_range(0..rows.len());
    let mut j = rng.random_range(0..rows.len() - 1);
    if j >= i {
        j += 1;
    }
    (rows[i], rows[j])
}

/// Samples must-link pairs among participants sharing an outcome class and
/// not-link pairs across classes, without replacement. Deterministic for a
/// given seed.
pub fn generate_constraints(ds: &Dataset, n_ml: usize, n_nl: usize, seed: u64) -> Result<ConstraintSet> {
    let (pos, neg): (Vec<Row>, Vec<Row>) = ds.rows().into_iter().partition(|&r| ds.is_positive(r));
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::TooFewParticipants {
            needed: 2,
            got: pos.len().min(neg.len()),
        });
    }
    let (pp, nn) = (pairs_within(pos.len()), pairs_within(neg.len()));
    let same = pp + nn;
    let cross = pos.len() * neg.len();
    if n_ml > same {
        return Err(Error::NotEnoughPairs {
            kind: "must-link",
            requested: n_ml,
            available: same,
        });
    }
    if n_nl > cross {
        return Err(Error::NotEnoughPairs {
            kind: "not-link",
            requested: n_nl,
            available: cross,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let must_link = sample_pairs(
        &mut rng,
        same,
        n_ml,
        |k| {
            if k < pp {
                let (i, j) = decode_within(pos.len(), k);
                (pos[i], pos[j])
            } else {
                let (i, j) = decode_within(neg.len(), k - pp);
                (neg[i], neg[j])
            }
        },
        |rng| {
            if rng.random_range(0..same) < pp {
                draw_within(rng, &pos)
            } else {
                draw_within(rng, &neg)
            }
        },
    );
    let not_link = sample_pairs(
        &mut rng,
        cross,
        n_nl,
        |k| (pos[k / neg.len()], neg[k % neg.len()]),
        |rng| {
            (
                pos[rng.random_range(0..pos.len())],
                neg[rng.random_range(0..neg.len())],
            )
        },
    );
    Ok(ConstraintSet { must_link, not_link })
}
