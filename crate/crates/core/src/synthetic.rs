//! Seeded synthetic cohorts with a known planted structure, used by tests,
//! benchmarks and the demo fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{generate_constraints, ColumnSchema, ColumnValues, ConstraintSet, Dataset};
use crate::error::Result;

/// The two planted columns.
pub const PLANTED: [&str; 2] = ["x1", "x2"];

/// Outcome column of planted cohorts.
pub const OUTCOME: &str = "band";

/// Half of the offset between the two bands along `x2`.
const DELTA: f64 = 0.15;
/// Half-width of the uniform jitter across a band.
const JITTER: f64 = 0.02;

pub fn noise_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("n{i:02}")).collect()
}

/// A cohort with two parallel diagonal bands in `(x1, x2)` and `noise_dims`
/// uniform columns.
///
/// Every participant draws a stratified position `t` along the diagonal;
/// band `upper` sits at `x2 = x1 + 2·DELTA`. Both bands cover the same `x1` range, so
/// `x1` alone says nothing about the band and `x2` alone says little. The
/// outcome is the band (`upper` is positive).
pub fn planted_cohort(tag: &str, n: usize, noise_dims: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut band = Vec::with_capacity(n);
    let mut noise = vec![Vec::with_capacity(n); noise_dims];
    for i in 0..n {
        let upper = i % 2 == 1;
        let t = ((i / 2) as f64 + rng.random::<f64>()) / n.div_ceil(2) as f64;
        let j: f64 = rng.random_range(-JITTER..JITTER);
        x1.push(t + j);
        x2.push(t - j + if upper { DELTA } else { -DELTA });
        band.push(u32::from(upper));
        for col in noise.iter_mut() {
            col.push(rng.random());
        }
    }
    let mut schema = vec![ColumnSchema::id("id")];
    let mut columns = vec![ColumnValues::Id];
    for (name, v) in PLANTED.iter().zip([x1, x2]) {
        schema.push(ColumnSchema::numeric(*name));
        columns.push(ColumnValues::Numeric(v));
    }
    for (name, v) in noise_names(noise_dims).into_iter().zip(noise) {
        schema.push(ColumnSchema::numeric(name));
        columns.push(ColumnValues::Numeric(v));
    }
    schema.push(ColumnSchema::outcome(OUTCOME, "lower", "upper"));
    columns.push(ColumnValues::Categorical(band));
    let ids = (0..n).map(|i| format!("{tag}-{i:04}")).collect();
    Dataset::from_parts(tag, schema, ids, columns).expect("planted cohort is valid")
}

/// The recovery benchmark: 400 participants, 10 noise columns, 20 must-link
/// and 20 not-link constraints drawn from the band labels.
pub fn planted_problem(seed: u64) -> Result<(Dataset, ConstraintSet)> {
    let ds = planted_cohort("S2", 400, 10, seed);
    let cs = generate_constraints(&ds, 20, 20, seed)?;
    Ok((ds, cs))
}
