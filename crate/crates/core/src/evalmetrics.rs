//! Ranking metrics and PCA projection.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub const EVAL_SCHEMA: &str = "fgp-eval/1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all values tied in one argument; tau is undefined")]
    AllTied,
    #[error("percent must lie in (0, 100], got {0}")]
    InvalidPercent(f64),
    #[error("covariance is degenerate: {0}")]
    DegenerateCovariance(String),
    #[error("non-finite input value")]
    NonFinite,
}

fn check_pair(truth: &[f64], pred: &[f64], needed: usize) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.len() < needed {
        return Err(MetricError::TooFewItems {
            needed,
            got: truth.len(),
        });
    }
    if truth.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Number of tied pairs in a sorted slice, by run length.
fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions (pairs out of order, ties not counted).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
///
/// `(C − D) / sqrt((n0 − n1)(n0 − n2))` with `n0 = n(n−1)/2` and `n1`, `n2`
/// the tied pairs within `truth` and `pred`.
pub fn kendall_tau(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(truth, pred, 2)?;
    let n = truth.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        truth[a]
            .total_cmp(&truth[b])
            .then_with(|| pred[a].total_cmp(&pred[b]))
    });
    let xs: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pairs(&xs);
    // pairs tied in both
    let mut n3 = 0u64;
    let mut start = 0;
    for i in 1..=n {
        if i == n || xs[i] != xs[start] || ys[i] != ys[start] {
            let run = (i - start) as u64;
            n3 += run * (run - 1) / 2;
            start = i;
        }
    }
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    let denom = ((n0 - n1) as f64) * ((n0 - n2) as f64);
    if denom == 0.0 {
        return Err(MetricError::AllTied);
    }
    // concordant − discordant = n0 − n1 − n2 + n3 − 2·swaps
    let numer = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    Ok(numer as f64 / denom.sqrt())
}

/// Size of a top-`percent` set: `⌈percent·n/100⌉`, at least 1.
pub fn top_count(n: usize, percent: f64) -> usize {
    let exact = percent * n as f64 / 100.0;
    // guard against representation error just above an integer
    let k = (exact - 1e-9).ceil() as usize;
    k.clamp(1, n.max(1))
}

/// Indices of the `count` largest values; ties prefer the lower index.
pub fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// `|top(truth) ∩ top(pred)| / |top(truth)|`.
pub fn precision_at_percent(truth: &[f64], pred: &[f64], percent: f64) -> Result<f64, MetricError> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(MetricError::InvalidPercent(percent));
    }
    check_pair(truth, pred, 1)?;
    let k = top_count(truth.len(), percent);
    let mut in_pred = vec![false; truth.len()];
    for i in top_indices(pred, k) {
        in_pred[i] = true;
    }
    let hits = top_indices(truth, k).into_iter().filter(|&i| in_pred[i]).count();
    Ok(hits as f64 / k as f64)
}

/// Ranking quality of a set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema: String,
    pub seed: u64,
    pub n: usize,
    pub tau_variant: String,
    pub kendall_tau: f64,
    /// Keyed by the percent formatted as a string (`"1"`, `"5"`).
    pub precision_at: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn compute(truth: &[f64], pred: &[f64], percents: &[f64], seed: u64) -> Result<Self, MetricError> {
        let kendall_tau = kendall_tau(truth, pred)?;
        let mut precision_at = BTreeMap::new();
        for &p in percents {
            precision_at.insert(format!("{p}"), precision_at_percent(truth, pred, p)?);
        }
        Ok(Self {
            schema: EVAL_SCHEMA.to_string(),
            seed,
            n: truth.len(),
            tau_variant: "tau-b".to_string(),
            kendall_tau,
            precision_at,
        })
    }
}

/// Output of [`pca_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub points: Vec<Vec<f64>>,
    /// Sorted descending; one per output axis.
    pub explained_variance_ratio: Vec<f64>,
    /// Unit loadings, one row per output axis.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Projects centred `vectors` onto the top `out_dim` covariance eigenvectors.
///
/// Each component's sign is fixed so that its first loading with magnitude
/// above `1e-12` is positive.
pub fn pca_project(vectors: &[Vec<f64>], out_dim: usize) -> Result<PcaProjection, MetricError> {
    let n = vectors.len();
    if n < out_dim + 1 {
        return Err(MetricError::TooFewItems {
            needed: out_dim + 1,
            got: n,
        });
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(MetricError::DegenerateCovariance("ragged input".into()));
    }
    if out_dim == 0 || out_dim > dim {
        return Err(MetricError::DegenerateCovariance(format!(
            "cannot project {dim}-d data to {out_dim} dimensions"
        )));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mean: Vec<f64> = (0..dim)
        .map(|c| vectors.iter().map(|v| v[c]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, dim, |r, c| vectors[r][c] - mean[c]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if !(total > 0.0) {
        return Err(MetricError::DegenerateCovariance("zero total variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
    });
    let mut components = Vec::with_capacity(out_dim);
    let mut ratios = Vec::with_capacity(out_dim);
    for &j in order.iter().take(out_dim) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        ratios.push(eig.eigenvalues[j].max(0.0) / total);
        components.push(v);
    }
    let points = (0..n)
        .map(|r| {
            components
                .iter()
                .map(|comp| (0..dim).map(|c| centered[(r, c)] * comp[c]).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        points,
        explained_variance_ratio: ratios,
        components,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty, mut n0) = (0i64, 0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                n0 += 1;
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                if a == 0.0 {
                    tx += 1;
                }
                if b == 0.0 {
                    ty += 1;
                }
                if a * b > 0.0 {
                    c += 1;
                } else if a * b < 0.0 {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
    }

    #[test]
    fn tau_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tau_errors() {
        assert!(matches!(kendall_tau(&[1.0], &[1.0]), Err(MetricError::TooFewItems { .. })));
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::AllTied));
        assert!(matches!(kendall_tau(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch(2, 1))));
    }

    #[test]
    fn tau_with_ties_matches_pairs() {
        let x = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 0.5];
        let y = [2.0, 1.0, 1.0, 4.0, 4.0, 0.0, 0.0];
        assert!((kendall_tau(&x, &y).unwrap() - brute_tau(&x, &y)).abs() < 1e-14);
    }

    #[test]
    fn precision_examples() {
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(precision_at_percent(&t, &t, 5.0).unwrap(), 1.0);
        let rev: Vec<f64> = t.iter().map(|v| -v).collect();
        assert_eq!(precision_at_percent(&t, &rev, 5.0).unwrap(), 0.0);
        // top-5 of truth is 95..=99; make pred's top-5 share exactly 3 of them
        let mut p = t.clone();
        p[95] = -1.0;
        p[96] = -2.0;
        p[0] = 1000.0;
        p[1] = 999.0;
        assert!((precision_at_percent(&t, &p, 5.0).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(precision_at_percent(&t, &t, 0.0), Err(MetricError::InvalidPercent(_))));
        assert!(matches!(precision_at_percent(&t, &t, 100.5), Err(MetricError::InvalidPercent(_))));
    }

    #[test]
    fn top_count_rounding() {
        assert_eq!(top_count(100, 5.0), 5);
        assert_eq!(top_count(960, 1.0), 10);
        assert_eq!(top_count(10, 1.0), 1);
        assert_eq!(top_count(7, 100.0), 7);
    }

    #[test]
    fn pca_line_has_zero_second_variance() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let p = pca_project(&pts, 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!(p.explained_variance_ratio[1].abs() < 1e-12);
    }

    #[test]
    fn pca_axis_aligned_recovers_coordinates() {
        let pts = vec![vec![3.0, 0.0], vec![-3.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let p = pca_project(&pts, 2).unwrap();
        for (pt, q) in pts.iter().zip(&p.points) {
            assert!((pt[0].abs() - q[0].abs()).abs() < 1e-12);
            assert!((pt[1].abs() - q[1].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_errors() {
        assert!(matches!(pca_project(&[vec![1.0, 2.0]], 2), Err(MetricError::TooFewItems { .. })));
        let same = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(pca_project(&same, 2), Err(MetricError::DegenerateCovariance(_))));
    }

    proptest! {
        #[test]
        fn tau_matches_brute_force(v in proptest::collection::vec((0i32..6, 0i32..6), 2..40)) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            match kendall_tau(&x, &y) {
                Ok(t) => prop_assert!((t - brute_tau(&x, &y)).abs() < 1e-12),
                Err(MetricError::AllTied) => {
                    prop_assert!(x.iter().all(|&a| a == x[0]) || y.iter().all(|&a| a == y[0]))
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn tau_self_and_negation(v in proptest::collection::vec(-1e3f64..1e3, 2..30)) {
            prop_assume!(v.iter().any(|&a| a != v[0]));
            prop_assert!((kendall_tau(&v, &v).unwrap() - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = v.iter().map(|a| -a).collect();
            prop_assert!((kendall_tau(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn tau_monotone_invariant(v in proptest::collection::vec((-5f64..5.0, -5f64..5.0), 2..30)) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let fx: Vec<f64> = x.iter().map(|a| a.exp() * 3.0 + 1.0).collect();
            if let Ok(t) = kendall_tau(&x, &y) {
                prop_assert!((kendall_tau(&fx, &y).unwrap() - t).abs() < 1e-12);
            }
        }

        #[test]
        fn precision_scale_invariant(v in proptest::collection::vec((-5f64..5.0, -5f64..5.0), 1..60), pct in 1f64..100.0, scale in 0.01f64..100.0) {
            let t: Vec<f64> = v.iter().map(|p| p.0).collect();
            let p: Vec<f64> = v.iter().map(|p| p.1).collect();
            let sp: Vec<f64> = p.iter().map(|a| a * scale).collect();
            let a = precision_at_percent(&t, &p, pct).unwrap();
            prop_assert_eq!(a, precision_at_percent(&t, &sp, pct).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
