//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subscope::ops::Report;
use subscope_core::dataset::{ColumnSchema, ColumnValues, Dataset, NormalizedView, Row};
use subscope_core::density::{auto_params, dbscan, mixed_distance, DbscanParams, Subspace};
use subscope_core::geometry::{classical_mds, cluster_distance, overlap_matrices, ClusterDistanceConfig, ClusterFootprint};
use subscope_core::replication::{
    predict_labels_1nn, recommend_rectangle, roc_point, validate_replication, HyperRectangle, ReplicationContext,
    RocMode, SIZE_THRESHOLD,
};
use subscope_core::search::{dress_search, rank_and_filter, QualityScores, RankOptions, SearchConfig, SubspaceCluster};
use subscope_core::statistics::{chi_square_yates, fisher_exact_two_sided, outcome_pvalue};
use subscope_core::synthetic::{planted_cohort, planted_problem};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 10] = [
        ("cluster-distance oracle", cluster_distance_oracle),
        ("dbscan oracle", dbscan_oracle),
        ("planted-subspace recovery", planted_recovery),
        ("mds fidelity", mds_fidelity),
        ("1-nn oracle", nn_oracle),
        ("roc properties", roc_properties),
        ("exact-test oracle", exact_test_oracle),
        ("recommend_rectangle grid oracle", recommend_oracle),
        ("cli round trip", cli_round_trip),
        ("twin-cohort replication", twin_cohorts),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:?}, limit {limit:?}"))
}

/// A cohort with numeric columns, optional categorical columns and a binary
/// outcome (`yes` positive).
fn cohort(tag: &str, numeric: &[(&str, Vec<f64>)], categorical: &[(&str, usize, Vec<u32>)], positive: &[bool]) -> Dataset {
    let n = positive.len();
    let mut schema = vec![ColumnSchema::id("id")];
    let mut columns = vec![ColumnValues::Id];
    for (name, v) in numeric {
        schema.push(ColumnSchema::numeric(*name));
        columns.push(ColumnValues::Numeric(v.clone()));
    }
    for (name, k, v) in categorical {
        schema.push(ColumnSchema::categorical(*name, (0..*k).map(|c| format!("c{c}"))));
        columns.push(ColumnValues::Categorical(v.clone()));
    }
    schema.push(ColumnSchema::outcome("outcome", "no", "yes"));
    columns.push(ColumnValues::Categorical(positive.iter().map(|&p| u32::from(p)).collect()));
    let ids = (0..n).map(|i| format!("{tag}{i}")).collect();
    Dataset::from_parts(tag, schema, ids, columns).expect("valid cohort")
}

fn random_subset(rng: &mut ChaCha8Rng, pool: usize, min: usize, max: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..pool).collect();
    all.shuffle(rng);
    all.truncate(rng.random_range(min..=max.min(pool)));
    all
}

// ---------------------------------------------------------------------------

fn cluster_distance_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pool: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
    let footprint = |rng: &mut ChaCha8Rng, i: usize| {
        let cols: Vec<&String> = random_subset(rng, pool.len(), 1, 4).into_iter().map(|k| &pool[k]).collect();
        let cohort = if rng.random_bool(0.25) { "B" } else { "A" };
        let members = random_subset(rng, 50, 1, 30);
        ClusterFootprint::new(format!("c{i}"), cohort, Subspace::new(cols).unwrap(), members)
    };
    let oracle = |a: &ClusterFootprint, b: &ClusterFootprint, beta: f64| {
        let sa: HashSet<&str> = a.subspace.columns().iter().map(String::as_str).collect();
        let sb: HashSet<&str> = b.subspace.columns().iter().map(String::as_str).collect();
        let jac = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
        let ma: HashSet<(&str, Row)> = a.members.iter().map(|&r| (a.cohort.as_str(), r)).collect();
        let mb: HashSet<(&str, Row)> = b.members.iter().map(|&r| (b.cohort.as_str(), r)).collect();
        let overlap = ma.intersection(&mb).count() as f64 / ma.len().min(mb.len()) as f64;
        beta * (1.0 - jac) + (1.0 - beta) * (1.0 - overlap)
    };
    let mut worst = 0.0f64;
    for i in 0..200 {
        let a = footprint(&mut rng, 2 * i);
        let b = if i % 10 == 0 { a.clone() } else { footprint(&mut rng, 2 * i + 1) };
        let beta = match i % 4 {
            0 => 0.5,
            1 => rng.random_range(0.0..=1.0),
            2 => f64::from(rng.random_bool(0.5) as u8),
            _ => rng.random_range(0.0..=1.0),
        };
        let cfg = ClusterDistanceConfig::new(beta).unwrap();
        let d = cluster_distance(&a, &b, cfg);
        let err = (d - oracle(&a, &b, beta)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("pair {i}: distance {d} off by {err}"))?;
        ensure(d == cluster_distance(&b, &a, cfg), || format!("pair {i}: asymmetric"))?;
        ensure((0.0..=1.0).contains(&d), || format!("pair {i}: {d} outside [0, 1]"))?;
        let m = overlap_matrices(&[a.clone(), b.clone()]);
        let half = cluster_distance(&a, &b, ClusterDistanceConfig::default());
        let decomposed = 0.5 * (1.0 - m.variable_jaccard[0][1]) + 0.5 * (1.0 - m.object_overlap[0][1]);
        ensure(half == decomposed, || format!("pair {i}: beta = 0.5 decomposition {half} != {decomposed}"))?;
    }
    within(start, Duration::from_secs(1), "200 pairs")?;
    Ok(format!("200 pairs, max |error| {worst:.1e}, symmetric, bounded, decomposition exact"))
}

// ---------------------------------------------------------------------------

/// Density-connected components by union-find over core points; a border
/// point goes to the component with the smallest first core row among its
/// core neighbours.
fn reference_dbscan(d: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = d.len();
    let core: Vec<bool> = (0..n).map(|i| d[i].iter().filter(|&&x| x <= eps).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && d[i][j] <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut first_core = vec![usize::MAX; n];
    for i in (0..n).filter(|&i| core[i]) {
        let root = find(&mut parent, i);
        first_core[root] = first_core[root].min(i);
    }
    let mut starts: Vec<usize> = (0..n).filter(|&i| core[i] && first_core[find(&mut parent, i)] == i).collect();
    starts.sort_unstable();
    let label_of_root = |p: &mut [usize], i: usize| {
        let root = find(p, i);
        starts.iter().position(|&s| s == first_core[root]).unwrap()
    };
    (0..n)
        .map(|i| {
            if core[i] {
                Some(label_of_root(&mut parent, i))
            } else {
                (0..n)
                    .filter(|&j| core[j] && d[i][j] <= eps)
                    .map(|j| label_of_root(&mut parent, j))
                    .min()
            }
        })
        .collect()
}

fn same_up_to_permutation(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (None, None) => true,
            (Some(x), Some(y)) => *fwd.entry(*x).or_insert(*y) == *y && *back.entry(*y).or_insert(*x) == *x,
            _ => false,
        })
}

fn dbscan_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let names = ["d0", "d1", "d2"];
    let mut clusters_seen = 0;
    let mut auto = 0;
    for inst in 0..50 {
        let dims = if inst % 2 == 0 { 2 } else { 3 };
        let n = rng.random_range(20..=200);
        let centers: Vec<Vec<f64>> = (0..rng.random_range(1..=4))
            .map(|_| (0..dims).map(|_| rng.random_range(0.1..0.9)).collect())
            .collect();
        let sd = rng.random_range(0.02..0.08);
        let mut cols = vec![Vec::with_capacity(n); dims];
        for _ in 0..n {
            let noise = rng.random_bool(0.2);
            let c = &centers[rng.random_range(0..centers.len())];
            for (k, col) in cols.iter_mut().enumerate() {
                col.push(if noise {
                    rng.random::<f64>()
                } else {
                    c[k] + sd * (rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5)
                });
            }
        }
        let numeric: Vec<(&str, Vec<f64>)> = names.iter().copied().zip(cols).collect();
        let ds = cohort("D", &numeric, &[], &vec![false; n]);
        let view = NormalizedView::new(&ds);
        let s = Subspace::new(names[..dims].iter().copied()).unwrap();
        let rows = ds.rows();
        let params = if inst % 2 == 0 {
            auto += 1;
            auto_params(&rows, &s, &view).map_err(|e| e.to_string())?
        } else {
            DbscanParams::new(rng.random_range(0.02..0.15), rng.random_range(3..=8)).unwrap()
        };
        let d: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| rows.iter().map(|&j| mixed_distance(i, j, &s, &view).unwrap()).collect())
            .collect();
        let expected = reference_dbscan(&d, params.eps, params.min_pts);
        let got = dbscan(&rows, &s, params, &view).map_err(|e| e.to_string())?;
        ensure(same_up_to_permutation(got.labels(), &expected), || {
            format!("instance {inst} (n = {n}, dims = {dims}) differs from the reference")
        })?;
        clusters_seen += got.n_clusters();
    }
    within(start, Duration::from_secs(30), "50 instances")?;
    Ok(format!("50 instances ({auto} with automatic parameters), {clusters_seen} clusters, all equal"))
}

// ---------------------------------------------------------------------------

fn planted_recovery() -> Result<String, String> {
    let mut recovered = 0;
    let mut slowest = Duration::ZERO;
    for seed in 0..20u64 {
        let start = Instant::now();
        let (ds, cs) = planted_problem(seed).map_err(|e| e.to_string())?;
        let result = dress_search(&ds, &cs, &SearchConfig::default()).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        ensure(took < Duration::from_secs(60), || format!("seed {seed} took {took:?}"))?;
        ensure(result.q_best_trace.windows(2).all(|w| w[0].q_best <= w[1].q_best), || {
            format!("seed {seed}: q_best trace decreases")
        })?;
        if result.top_subspace().is_some_and(|s| s.contains("x1") && s.contains("x2")) {
            recovered += 1;
        }
    }
    ensure(recovered >= 18, || format!("planted pair recovered in {recovered}/20 runs"))?;
    Ok(format!("recovered {recovered}/20, traces non-decreasing 20/20, slowest run {slowest:.2?}"))
}

// ---------------------------------------------------------------------------

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn mds_fidelity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let pts: Vec<[f64; 2]> = (0..10).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let m: Vec<Vec<f64>> = pts.iter().map(|&a| pts.iter().map(|&b| euclid(a, b)).collect()).collect();
        let emb = classical_mds(&m).map_err(|e| e.to_string())?;
        for i in 0..10 {
            for j in i + 1..10 {
                let rel = (euclid(emb[i], emb[j]) - m[i][j]).abs() / m[i][j];
                worst = worst.max(rel);
                ensure(rel <= 1e-6, || format!("trial {trial}: pair ({i}, {j}) off by {rel:.2e} relative"))?;
            }
        }
    }
    let tri = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let emb = classical_mds(&tri).map_err(|e| e.to_string())?;
    let mut tri_worst = 0.0f64;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        tri_worst = tri_worst.max((euclid(emb[i], emb[j]) - 1.0).abs());
    }
    ensure(tri_worst <= 1e-9, || format!("equilateral triangle off by {tri_worst:.2e}"))?;
    Ok(format!("20 sets of 10 points, max relative error {worst:.1e}; triangle error {tri_worst:.1e}"))
}

// ---------------------------------------------------------------------------

fn nn_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let names = ["a", "b", "c"];
    let mut ties = 0usize;
    let mut queries = 0usize;
    for inst in 0..100 {
        let integer = inst % 2 == 0;
        let n_ref = rng.random_range(2..=100);
        let n_query = rng.random_range(1..=100);
        let draw = |rng: &mut ChaCha8Rng, n: usize, wide: bool| -> Vec<Vec<f64>> {
            (0..3)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let x: f64 = if integer { rng.random_range(0..6) as f64 } else { rng.random_range(0.0..10.0) };
                            if wide { x * 1.5 - 2.0 } else { x }
                        })
                        .collect()
                })
                .collect()
        };
        let ref_cols = draw(&mut rng, n_ref, false);
        let query_cols = draw(&mut rng, n_query, true);
        let ref_cat: Vec<u32> = (0..n_ref).map(|_| rng.random_range(0..3)).collect();
        let query_cat: Vec<u32> = (0..n_query).map(|_| rng.random_range(0..3)).collect();
        let positive: Vec<bool> = (0..n_ref).map(|_| rng.random_bool(0.5)).collect();
        let original = cohort(
            "O",
            &names.iter().copied().zip(ref_cols.clone()).collect::<Vec<_>>(),
            &[("g", 3, ref_cat)],
            &positive,
        );
        let query_ds = cohort(
            "Q",
            &names.iter().copied().zip(query_cols.clone()).collect::<Vec<_>>(),
            &[("g", 3, query_cat)],
            &vec![false; n_query],
        );
        let mut cols: Vec<&str> = random_subset(&mut rng, 3, 1, 3).into_iter().map(|k| names[k]).collect();
        if rng.random_bool(0.3) {
            cols.push("g");
        }
        let s = Subspace::new(cols).unwrap();
        let reference = random_subset(&mut rng, n_ref, 1, n_ref);
        let mut query: Vec<Row> = (0..n_query).collect();
        query.shuffle(&mut rng);

        let view = NormalizedView::new(&original);
        let got = predict_labels_1nn(&reference, &original, &view, &query, &query_ds, &s).map_err(|e| e.to_string())?;

        let used: Vec<usize> = s.columns().iter().filter_map(|c| names.iter().position(|n| n == c)).collect();
        let ranges: Vec<(f64, f64)> = ref_cols
            .iter()
            .map(|v| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
            .collect();
        let norm = |k: usize, x: f64| {
            let (lo, hi) = ranges[k];
            if hi > lo { (x - lo) / (hi - lo) } else { x - lo }
        };
        let mut sorted_ref = reference.clone();
        sorted_ref.sort_unstable();
        for (qi, &q) in query.iter().enumerate() {
            let dist = |r: Row| -> f64 {
                used.iter()
                    .map(|&k| {
                        let diff = norm(k, ref_cols[k][r]) - norm(k, query_cols[k][q]);
                        diff * diff
                    })
                    .sum()
            };
            let mut best = sorted_ref[0];
            let mut best_d = f64::INFINITY;
            let mut tied = 0;
            for &r in &sorted_ref {
                let d = dist(r);
                if d < best_d {
                    best = r;
                    best_d = d;
                    tied = 1;
                } else if d == best_d {
                    tied += 1;
                }
            }
            if tied > 1 {
                ties += 1;
            }
            queries += 1;
            ensure(got[qi] == positive[best], || format!("instance {inst}: query row {q} predicted wrongly"))?;
        }
    }
    Ok(format!("100 instances, {queries} queries, {ties} with tied nearest neighbours"))
}

// ---------------------------------------------------------------------------

fn roc_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { rng.random_range(0.0..0.4) } else { rng.random_range(0.6..1.0) }).collect();
    let y: Vec<f64> = (0..60).map(|_| rng.random()).collect();
    let positive: Vec<bool> = x.iter().map(|&v| v < 0.5).collect();
    let ds = cohort("R", &[("x", x.clone()), ("y", y)], &[], &positive);
    let rows = ds.rows();
    let pos_x: Vec<f64> = x.iter().zip(&positive).filter(|(_, &p)| p).map(|(&v, _)| v).collect();
    let lo = pos_x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pos_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut positive_only = HyperRectangle::default();
    positive_only.intervals.insert("x".into(), (lo, hi));
    let p = roc_point(&positive_only, &rows, &ds).map_err(|e| e.to_string())?;
    ensure(p.tpr == 1.0 && p.fpr == 0.0, || format!("positive-only box gave ({}, {})", p.tpr, p.fpr))?;
    let u = roc_point(&HyperRectangle::default(), &rows, &ds).map_err(|e| e.to_string())?;
    ensure(u.tpr == 1.0 && u.fpr == 1.0, || format!("universal box gave ({}, {})", u.tpr, u.fpr))?;

    for trial in 0..100 {
        let n = rng.random_range(20..=150);
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        let ds = cohort("N", &[("a", a), ("b", b)], &[], &positive);
        let rows = ds.rows();
        let mut outer = HyperRectangle::default();
        let mut inner = HyperRectangle::default();
        for col in ["a", "b"] {
            let (mut o_lo, mut o_hi) = (rng.random::<f64>(), rng.random::<f64>());
            if o_lo > o_hi {
                std::mem::swap(&mut o_lo, &mut o_hi);
            }
            let mut i_lo = rng.random_range(o_lo..=o_hi);
            let mut i_hi = rng.random_range(o_lo..=o_hi);
            if i_lo > i_hi {
                std::mem::swap(&mut i_lo, &mut i_hi);
            }
            outer.intervals.insert(col.into(), (o_lo, o_hi));
            if rng.random_bool(0.8) {
                inner.intervals.insert(col.into(), (i_lo, i_hi));
            } else {
                inner.intervals.insert(col.into(), (o_lo, o_hi));
            }
        }
        let po = roc_point(&outer, &rows, &ds).map_err(|e| e.to_string())?;
        let pi = roc_point(&inner, &rows, &ds).map_err(|e| e.to_string())?;
        ensure(pi.tpr <= po.tpr && pi.fpr <= po.fpr, || format!("nesting {trial}: inner ROC point exceeds outer"))?;
    }
    Ok("positive-only (1, 0), universal (1, 1), 100 nestings monotone".into())
}

// ---------------------------------------------------------------------------

fn binomials(max: usize) -> Vec<Vec<u128>> {
    let mut c = vec![vec![0u128; max + 1]; max + 1];
    for n in 0..=max {
        c[n][0] = 1;
        for k in 1..=n {
            c[n][k] = c[n - 1][k - 1] + c[n - 1][k];
        }
    }
    c
}

/// Exact two-sided hypergeometric p-value; tables within a relative 1e-7 of
/// the observed probability count as equally likely.
fn hypergeometric_p(c: &[Vec<u128>], t: [[usize; 2]; 2]) -> f64 {
    let [[a, b], [cc, d]] = t;
    let (r1, r2, c1) = (a + b, cc + d, a + cc);
    let weight = |x: usize| c[r1][x] * c[r2][c1 - x];
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let num: u128 = (lo..=hi)
        .map(weight)
        .filter(|&w| w * 10_000_000 <= observed * 10_000_001)
        .sum();
    num as f64 / c[r1 + r2][c1] as f64
}

fn exact_test_oracle() -> Result<String, String> {
    let c = binomials(40);
    let mut tables = 0usize;
    let mut exact_branch = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=40usize {
        for p in 0..=n {
            let positive: Vec<bool> = (0..n).map(|i| i < p).collect();
            let ds = cohort("E", &[], &[], &positive);
            for a in 0..=p {
                for b in 0..=n - p {
                    let t = [[a, b], [p - a, n - p - b]];
                    let tu = t.map(|r| r.map(|x| x as u64));
                    let expected = hypergeometric_p(&c, t);
                    let fisher = fisher_exact_two_sided(tu);
                    let err = (fisher - expected).abs();
                    worst = worst.max(err);
                    ensure(err <= 1e-10, || format!("table {t:?}: {fisher} vs {expected}"))?;
                    tables += 1;

                    let members: Vec<Row> = (0..a).chain(p..p + b).collect();
                    if members.is_empty() || members.len() == n {
                        continue;
                    }
                    let (r, col) = ([a + b, n - a - b], [p, n - p]);
                    let small = r.iter().any(|&ri| col.iter().any(|&cj| ri * cj < 5 * n));
                    let got = outcome_pvalue(&members, &ds).map_err(|e| e.to_string())?;
                    if small {
                        exact_branch += 1;
                        let err = (got - expected).abs();
                        worst = worst.max(err);
                        ensure(err <= 1e-10, || format!("outcome_pvalue on {t:?}: {got} vs {expected}"))?;
                    } else {
                        ensure(got == chi_square_yates(tu), || format!("table {t:?} should use the chi-square test"))?;
                    }
                }
            }
        }
    }
    Ok(format!("{tables} tables, {exact_branch} outcome p-values on the exact branch, max |error| {worst:.1e}"))
}

// ---------------------------------------------------------------------------

fn cuts_oracle(values: &[f64], grid: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    let m = v.len();
    (0..grid)
        .map(|i| v[(2 * i * (m - 1) + (grid - 1)) / (2 * (grid - 1))])
        .collect()
}

fn box_objective(values: &[Vec<f64>], positive: &[bool], bounds: &[(f64, f64)]) -> f64 {
    let (mut tp, mut fp) = (0, 0);
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    for i in 0..positive.len() {
        if values.iter().zip(bounds).all(|(v, &(lo, hi))| lo <= v[i] && v[i] <= hi) {
            if positive[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp as f64 / n_pos as f64) * (1.0 - fp as f64 / n_neg as f64)
}

fn planted_cluster(members: Vec<Row>, cols: &[&str]) -> SubspaceCluster {
    SubspaceCluster {
        id: "R-0".into(),
        subspace: Subspace::new(cols.iter().copied()).unwrap(),
        members,
        quality: QualityScores {
            separation: 0.0,
            satisfaction: 0.0,
            full: 0.0,
        },
        outcome_rate: 0.0,
        p_value: 1.0,
    }
}

fn recommend_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut improved = 0;
    for trial in 0..100 {
        let n = rng.random_range(20..=120);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let informative = trial % 2 == 0;
        let mut positive: Vec<bool> = x
            .iter()
            .map(|&v| if informative { rng.random_bool(if (3.0..6.0).contains(&v) { 0.8 } else { 0.2 }) } else { rng.random_bool(0.5) })
            .collect();
        positive[0] = true;
        positive[1] = false;
        let ds = cohort("R", &[("x", x.clone())], &[], &positive);
        let mut members = random_subset(&mut rng, n, 1, n / 2);
        members.sort_unstable();
        let cluster = planted_cluster(members.clone(), &["x"]);
        let rows = ds.rows();
        let rec = recommend_rectangle(&cluster, &rows, &ds, 10).map_err(|e| e.to_string())?;

        let m_lo = members.iter().map(|&r| x[r]).fold(f64::INFINITY, f64::min);
        let m_hi = members.iter().map(|&r| x[r]).fold(f64::NEG_INFINITY, f64::max);
        let mut cands = cuts_oracle(&x, 10);
        cands.extend([m_lo, m_hi]);
        let values = vec![x.clone()];
        let mut best = f64::NEG_INFINITY;
        for &lo in &cands {
            for &hi in cands.iter().filter(|&&h| h >= lo) {
                best = best.max(box_objective(&values, &positive, &[(lo, hi)]));
            }
        }
        let initial = box_objective(&values, &positive, &[(m_lo, m_hi)]);
        ensure((rec.objective - best).abs() <= 1e-12, || {
            format!("1-D trial {trial}: objective {} vs brute force {best}", rec.objective)
        })?;
        ensure(rec.initial_objective == initial, || format!("1-D trial {trial}: wrong initial objective"))?;
        let (lo, hi) = rec.rect.intervals["x"];
        ensure(box_objective(&values, &positive, &[(lo, hi)]) == rec.objective, || {
            format!("1-D trial {trial}: returned box does not reach the reported objective")
        })?;
    }
    for trial in 0..100 {
        let n = 60;
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut positive: Vec<bool> = a.iter().zip(&b).map(|(&u, &v)| rng.random_bool(if u + v < 1.0 { 0.7 } else { 0.3 })).collect();
        positive[0] = true;
        positive[1] = false;
        let ds = cohort("R", &[("a", a), ("b", b)], &[], &positive);
        let members = random_subset(&mut rng, n, 2, 30);
        let cluster = planted_cluster(members, &["a", "b"]);
        let grid = if trial % 2 == 0 { 8 } else { 10 };
        let rec = recommend_rectangle(&cluster, &ds.rows(), &ds, grid).map_err(|e| e.to_string())?;
        ensure(rec.objective >= rec.initial_objective, || format!("2-D trial {trial} regressed"))?;
        if rec.objective > rec.initial_objective {
            improved += 1;
        }
    }
    Ok(format!("100 1-D trials equal brute force; 100 2-D trials never regress ({improved} improved)"))
}

// ---------------------------------------------------------------------------

fn run(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_subscope"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`subscope {}` exited with {}: {}", args[0], out.status, String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn cli_round_trip() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).display().to_string();
    let write = |ds: &Dataset, name: &str| {
        ds.export_files(Path::new(&path(&format!("{name}.csv"))), Path::new(&path(&format!("{name}.schema.json"))))
            .map_err(|e| e.to_string())
    };
    write(&planted_cohort("S2", 400, 10, 0), "S2")?;
    write(&planted_cohort("T", 400, 10, 1000), "T")?;
    let session = path("session.json");
    run(&["ingest", "--session", &session, "--tag", "S2", &path("S2.csv"), &path("S2.schema.json")])?;
    run(&["ingest", "--session", &session, "--tag", "T", &path("T.csv"), &path("T.schema.json")])?;
    run(&["constraints", "--session", &session, "--tag", "S2", "--n-ml", "20", "--n-nl", "20", "--seed", "0"])?;
    run(&["search", "--session", &session])?;
    run(&["replicate", "--session", &session, "--recommend"])?;
    let report: Report = serde_json::from_slice(&run(&["report", "--session", &session])?).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(120), "round trip")?;
    let v = &report.sections.first().ok_or("report has no sections")?.validation;
    ensure(v.dimensionality_equal, || "dimensionality differs".into())?;
    ensure(v.size.absolute_difference <= 0.05, || format!("relative-size gap {}", v.size.absolute_difference))?;
    Ok(format!(
        "{} vs {}: dimensionality equal, relative-size gap {:.4}",
        v.subpopulation_a, v.subpopulation_b, v.size.absolute_difference
    ))
}

// ---------------------------------------------------------------------------

fn twin_cohorts() -> Result<String, String> {
    let mut variables = 0;
    for seed in [0u64, 1, 2] {
        let (original, cs) = planted_problem(seed).map_err(|e| e.to_string())?;
        let twin = planted_cohort("T", 400, 10, seed);
        let result = dress_search(&original, &cs, &SearchConfig::default()).map_err(|e| e.to_string())?;
        let top = rank_and_filter(&result, &original, 1, &RankOptions::default()).map_err(|e| e.to_string())?;
        let cluster = top.first().ok_or("search found no cluster")?;
        let ctx = ReplicationContext::new(&original, &twin, cluster).map_err(|e| e.to_string())?;
        let rec = ctx.recommend(10).map_err(|e| e.to_string())?;
        let cand = ctx.evaluate(&rec.rect, RocMode::Original).map_err(|e| e.to_string())?;
        let (a, b) = ctx.commit(&cand, "A", "B").map_err(|e| e.to_string())?;
        let report = validate_replication(&a, &b, &original, &twin, SIZE_THRESHOLD).map_err(|e| e.to_string())?;
        for k in &report.distribution.variables {
            ensure(k.statistic == 0.0, || format!("seed {seed}: KS on {} is {}", k.variable, k.statistic))?;
        }
        ensure(report.distribution.outcome_rate_difference == 0.0, || format!("seed {seed}: outcome rates differ"))?;
        ensure(report.size.absolute_difference == 0.0, || format!("seed {seed}: sizes differ"))?;
        for d in &report.deviation {
            ensure(d.same_sign && d.delta_a == d.delta_b, || format!("seed {seed}: deviation on {} differs", d.variable))?;
        }
        variables += report.deviation.len();
    }
    Ok(format!("3 twin pairs, {variables} variables with KS 0 and identical deviations"))
}
