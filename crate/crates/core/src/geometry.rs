//! Cluster-to-cluster distances, overlap matrices and the 2-D overview
//! layout.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Row;
use crate::density::Subspace;
use crate::error::{Error, Result};

/// What the geometry needs to know about a cluster: its subspace and which
/// participants of which cohort it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFootprint {
    pub id: String,
    pub cohort: String,
    pub subspace: Subspace,
    /// Sorted, without duplicates.
    pub members: Vec<Row>,
}

impl ClusterFootprint {
    pub fn new(id: impl Into<String>, cohort: impl Into<String>, subspace: Subspace, mut members: Vec<Row>) -> Self {
        members.sort_unstable();
        members.dedup();
        ClusterFootprint {
            id: id.into(),
            cohort: cohort.into(),
            subspace,
            members,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistanceConfig {
    pub beta: f64,
}

impl ClusterDistanceConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(ClusterDistanceConfig { beta })
    }
}

impl Default for ClusterDistanceConfig {
    fn default() -> Self {
        ClusterDistanceConfig { beta: 0.5 }
    }
}

/// `|S_i ∩ S_j| / |S_i ∪ S_j|`.
pub fn variable_jaccard(a: &ClusterFootprint, b: &ClusterFootprint) -> f64 {
    let inter = a.subspace.intersection_len(&b.subspace);
    let union = a.subspace.len() + b.subspace.len() - inter;
    inter as f64 / union as f64
}

fn sorted_intersection(a: &[Row], b: &[Row]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `|C_i ∩ C_j| / min(|C_i|, |C_j|)`. Clusters of different cohorts share no
/// participants.
pub fn object_overlap(a: &ClusterFootprint, b: &ClusterFootprint) -> f64 {
    let smaller = a.members.len().min(b.members.len());
    if a.cohort != b.cohort || smaller == 0 {
        return 0.0;
    }
    sorted_intersection(&a.members, &b.members) as f64 / smaller as f64
}

/// Weighted sum of subspace dissimilarity and member-overlap dissimilarity.
pub fn cluster_distance(a: &ClusterFootprint, b: &ClusterFootprint, cfg: ClusterDistanceConfig) -> f64 {
    let beta = cfg.beta;
    beta * (1.0 - variable_jaccard(a, b)) + (1.0 - beta) * (1.0 - object_overlap(a, b))
}

pub fn distance_matrix(clusters: &[ClusterFootprint], cfg: ClusterDistanceConfig) -> Vec<Vec<f64>> {
    let n = clusters.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cluster_distance(&clusters[i], &clusters[j], cfg);
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrices {
    pub variable_jaccard: Vec<Vec<f64>>,
    pub object_overlap: Vec<Vec<f64>>,
}

pub fn overlap_matrices(clusters: &[ClusterFootprint]) -> OverlapMatrices {
    let table = |f: fn(&ClusterFootprint, &ClusterFootprint) -> f64| {
        clusters
            .iter()
            .map(|a| clusters.iter().map(|b| f(a, b)).collect())
            .collect()
    };
    OverlapMatrices {
        variable_jaccard: table(variable_jaccard),
        object_overlap: table(object_overlap),
    }
}

/// Classical (Torgerson) MDS into two dimensions.
///
/// Each axis is the eigenvector of the double-centred squared distances,
/// scaled by the square root of its eigenvalue (negative eigenvalues give a
/// zero axis) and flipped so its largest-magnitude entry is positive.
pub fn classical_mds(m: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = m.len();
    if m.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidParameter("distance matrix is not square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            let scale = m[i][j].abs().max(m[j][i].abs()).max(1.0);
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let sq = DMatrix::from_fn(n, n, |i, j| m[i][j] * m[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let mut lead = 0;
        for i in 1..n {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = lambda.sqrt();
        for i in 0..n {
            coords[i][axis] = if s > 0.0 { v[i] * s } else { 0.0 };
        }
    }
    Ok(coords)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutPoint {
    pub cluster_id: String,
    pub x: f64,
    pub y: f64,
}

pub fn mds_layout(ids: &[String], m: &[Vec<f64>]) -> Result<Vec<LayoutPoint>> {
    if ids.len() != m.len() {
        return Err(Error::InvalidParameter("one id per matrix row required".into()));
    }
    Ok(classical_mds(m)?
        .into_iter()
        .zip(ids)
        .map(|([x, y], id)| LayoutPoint {
            cluster_id: id.clone(),
            x,
            y,
        })
        .collect())
}

/// The overview document: MDS positions plus both overlap matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub beta: f64,
    pub points: Vec<LayoutPoint>,
    pub variable_jaccard: Vec<Vec<f64>>,
    pub object_overlap: Vec<Vec<f64>>,
}

pub fn layout(clusters: &[ClusterFootprint], cfg: ClusterDistanceConfig) -> Result<Layout> {
    let ids: Vec<String> = clusters.iter().map(|c| c.id.clone()).collect();
    let points = mds_layout(&ids, &distance_matrix(clusters, cfg))?;
    let OverlapMatrices {
        variable_jaccard,
        object_overlap,
    } = overlap_matrices(clusters);
    Ok(Layout {
        beta: cfg.beta,
        points,
        variable_jaccard,
        object_overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp(id: &str, cols: &[&str], members: &[Row]) -> ClusterFootprint {
        ClusterFootprint::new(id, "S2", Subspace::new(cols.iter().copied()).unwrap(), members.to_vec())
    }

    fn embedded(c: &[[f64; 2]], i: usize, j: usize) -> f64 {
        ((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2)).sqrt()
    }

    #[test]
    fn worked_example() {
        let a = fp("a", &["a", "b"], &[1, 2, 3, 4]);
        let b = fp("b", &["b", "c"], &[3, 4, 5]);
        assert!((variable_jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert!((object_overlap(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cluster_distance(&a, &b, ClusterDistanceConfig::default()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extremes() {
        let a = fp("a", &["x"], &[0, 1]);
        let b = fp("b", &["y"], &[2, 3]);
        for beta in [0.0, 0.3, 1.0] {
            let cfg = ClusterDistanceConfig::new(beta).unwrap();
            assert_eq!(cluster_distance(&a, &a, cfg), 0.0);
            assert_eq!(cluster_distance(&a, &b, cfg), 1.0);
        }
        assert!(ClusterDistanceConfig::new(1.5).is_err());
    }

    #[test]
    fn cohorts_never_share_members() {
        let a = fp("a", &["x"], &[0, 1]);
        let mut b = a.clone();
        b.cohort = "T".into();
        assert_eq!(object_overlap(&a, &b), 0.0);
    }

    #[test]
    fn beta_one_ignores_members() {
        let cs = [fp("a", &["x", "y"], &[0, 1]), fp("b", &["y"], &[2, 3])];
        let moved = [fp("a", &["x", "y"], &[5, 6, 7]), fp("b", &["y"], &[5])];
        let cfg = ClusterDistanceConfig::new(1.0).unwrap();
        assert_eq!(distance_matrix(&cs, cfg), distance_matrix(&moved, cfg));
    }

    #[test]
    fn identical_clusters_matrix() {
        let a = fp("a", &["x"], &[0, 1]);
        let m = distance_matrix(&[a.clone(), a], ClusterDistanceConfig::default());
        assert_eq!(m, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn equilateral_triangle() {
        let m = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let c = classical_mds(&m).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((embedded(&c, i, j) - 1.0).abs() < 1e-9);
        }
        let cx: f64 = c.iter().map(|p| p[0]).sum();
        let cy: f64 = c.iter().map(|p| p[1]).sum();
        assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_collapses() {
        let c = classical_mds(&vec![vec![0.0; 4]; 4]).unwrap();
        assert!(c.iter().all(|p| p == &[0.0, 0.0]));
    }

    #[test]
    fn asymmetric_rejected() {
        let m = vec![vec![0.0, 1.0], vec![0.5, 0.0]];
        assert!(matches!(classical_mds(&m), Err(Error::NotSymmetric)));
    }

    #[test]
    fn single_cluster_at_origin() {
        let l = layout(&[fp("a", &["x"], &[0])], ClusterDistanceConfig::default()).unwrap();
        assert_eq!((l.points[0].x, l.points[0].y), (0.0, 0.0));
        assert_eq!(l.variable_jaccard, vec![vec![1.0]]);
    }

    #[test]
    fn repeat_is_identical() {
        let cs = [fp("a", &["x", "y"], &[0, 1, 2]), fp("b", &["y"], &[2, 3]), fp("c", &["z"], &[0, 3])];
        let cfg = ClusterDistanceConfig::new(0.7).unwrap();
        assert_eq!(layout(&cs, cfg).unwrap(), layout(&cs, cfg).unwrap());
    }

    fn arb_cluster() -> impl Strategy<Value = ClusterFootprint> {
        (
            prop::collection::btree_set(0usize..6, 1..4),
            prop::collection::btree_set(0usize..30, 1..12),
        )
            .prop_map(|(cols, members)| {
                let names: Vec<String> = cols.into_iter().map(|c| format!("v{c}")).collect();
                ClusterFootprint::new("c", "S2", Subspace::new(names).unwrap(), members.into_iter().collect())
            })
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_bounded(a in arb_cluster(), b in arb_cluster(), beta in 0.0f64..=1.0) {
            let cfg = ClusterDistanceConfig::new(beta).unwrap();
            let d = cluster_distance(&a, &b, cfg);
            prop_assert_eq!(d, cluster_distance(&b, &a, cfg));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn relabeling_permutes_layout(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..8)) {
            let dist = |p: &[(f64, f64)]| -> Vec<Vec<f64>> {
                p.iter().map(|a| p.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect()).collect()
            };
            let fwd = classical_mds(&dist(&pts)).unwrap();
            let rev_pts: Vec<_> = pts.iter().rev().copied().collect();
            let rev = classical_mds(&dist(&rev_pts)).unwrap();
            let n = pts.len();
            for i in 0..n {
                for j in 0..n {
                    let a = embedded(&fwd, i, j);
                    let b = embedded(&rev, n - 1 - i, n - 1 - j);
                    prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
                }
            }
        }
    }
}
