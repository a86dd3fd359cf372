//! K-means grouping of countries by fundamentals.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use thiserror::Error;

use crate::exec::Execution;
use crate::panel::{CountryMeta, PanelTable, RegimeClass};
use crate::rng;
use crate::stats;
use crate::vars;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("every restart produced an empty cluster")]
    EmptyCluster,
    #[error("need more points ({n}) than clusters ({k})")]
    TooFewPoints { n: usize, k: usize },
    #[error("regime group {group} has {n} countries (need at least 3)")]
    RegimeGroupTooSmall { group: String, n: usize },
    #[error("country {country} has no observations of {factor}")]
    MissingFactor { country: String, factor: String },
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
}

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 50;

/// Result of a K-means run. Labels run `1..=k` in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
    /// Restart that produced the returned solution.
    pub best_restart: usize,
    /// WCSS after each Lloyd update or transfer sweep of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroids_of(points: &[&[f64]], labels: &[usize], k: usize) -> Option<Vec<Vec<f64>>> {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    if counts.contains(&0) {
        return None;
    }
    for (s, c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= *c as f64;
        }
    }
    Some(sums)
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut bd = sq_dist(p, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let dj = sq_dist(p, c);
                if dj < bd {
                    bd = dj;
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn wcss(points: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

/// One sweep of single-point moves (Hartigan): point `i` leaves cluster `a`
/// for `b` when `n_a/(n_a-1) |x-c_a|^2 > n_b/(n_b+1) |x-c_b|^2`, which
/// strictly lowers the WCSS. Centroids are updated after each move.
fn transfer_pass(points: &[&[f64]], labels: &mut [usize], centroids: &mut [Vec<f64>], k: usize) -> bool {
    const GAIN_TOL: f64 = 1e-12;
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let na = counts[a] as f64;
        let leave = na / (na - 1.0) * sq_dist(p, &centroids[a]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let join = nb / (nb + 1.0) * sq_dist(p, &centroids[b]);
            if leave - join > GAIN_TOL * leave.max(1.0) && best.is_none_or(|(_, j)| join < j) {
                best = Some((b, join));
            }
        }
        if let Some((b, _)) = best {
            let nb = counts[b] as f64;
            for (j, x) in p.iter().enumerate() {
                centroids[a][j] = (na * centroids[a][j] - x) / (na - 1.0);
                centroids[b][j] = (nb * centroids[b][j] + x) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    if moved {
        if let Some(c) = centroids_of(points, labels, k) {
            centroids.clone_from_slice(&c);
        }
    }
    moved
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    wcss: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn lloyd(points: &[&[f64]], k: usize, seed: u64) -> Option<Run> {
    let mut r = rng::rng_from(seed);
    let init = sample(&mut r, points.len(), k);
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|i| points[i].to_vec()).collect();
    let mut labels = assign(points, &centroids);
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        centroids = centroids_of(points, &labels, k)?;
        history.push(wcss(points, &labels, &centroids));
        iterations += 1;
        let next = assign(points, &centroids);
        if next == labels || iterations >= MAX_ITERATIONS {
            break;
        }
        labels = next;
    }
    while transfer_pass(points, &mut labels, &mut centroids, k) {
        history.push(wcss(points, &labels, &centroids));
        iterations += 1;
        if iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let w = wcss(points, &labels, &centroids);
    Some(Run { labels, centroids, wcss: w, iterations, history })
}

/// Lloyd's algorithm followed by single-point transfers, from `restarts`
/// random initialisations; restart `r` uses seed `seed + r`. The lowest-WCSS solution wins, ties going to the
/// lowest restart index.
///
/// Points are put in lexicographic order before any sampling, so the result
/// does not depend on input order.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    exec: Execution,
) -> Result<KMeansFit, ClusterError> {
    let n = points.len();
    if n < k || k == 0 {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(ClusterError::DimensionMismatch);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<&[f64]> = order.iter().map(|&i| points[i].as_slice()).collect();

    let runs = exec.map(restarts.max(1), |r| lloyd(&sorted, k, seed.wrapping_add(r as u64)));
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .fold(None::<(usize, Run)>, |acc, (i, r)| match acc {
            Some((bi, b)) if b.wcss <= r.wcss => Some((bi, b)),
            _ => Some((i, r)),
        })
        .ok_or(ClusterError::EmptyCluster)?;

    // canonical labels: order of first appearance in sorted order
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &best.labels {
        if relabel[l] == usize::MAX {
            relabel[l] = next;
            next += 1;
        }
    }
    let mut centroids = vec![Vec::new(); k];
    for (old, c) in best.centroids.into_iter().enumerate() {
        centroids[relabel[old]] = c;
    }
    let mut labels = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = relabel[best.labels[pos]] + 1;
    }
    Ok(KMeansFit {
        labels,
        centroids,
        wcss: best.wcss,
        iterations: best.iterations,
        best_restart,
        history: best.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegimeGroup {
    FreeFloat,
    Managed,
    All,
}

impl RegimeGroup {
    pub fn name(self) -> &'static str {
        match self {
            RegimeGroup::FreeFloat => "FreeFloat",
            RegimeGroup::Managed => "Managed",
            RegimeGroup::All => "All",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub regime_group: RegimeGroup,
    /// Country -> cluster label in {1, 2}; 2 is the strong cluster.
    pub assignments: BTreeMap<String, u8>,
    /// Centroid of cluster 1 then cluster 2.
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub seed: u64,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HighIsStrong,
    LowIsStrong,
}

/// All fundamentals are "higher is stronger" except the short rate.
pub fn default_directions() -> BTreeMap<String, Direction> {
    vars::CLUSTER_FACTORS
        .iter()
        .map(|f| {
            let d = if *f == vars::SHORT_RATE { Direction::LowIsStrong } else { Direction::HighIsStrong };
            (f.to_string(), d)
        })
        .collect()
}

/// Per-cluster medians of each factor, keyed by cluster label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    pub medians: BTreeMap<u8, BTreeMap<String, f64>>,
    pub strong_cluster: u8,
}

/// Strong cluster among labels 1 and 2: the one winning most factor-wise
/// median comparisons. A tie is broken by financial development; if that is
/// tied too, cluster 2 is kept.
pub fn label_strong_cluster(
    medians: &BTreeMap<u8, BTreeMap<String, f64>>,
    directions: &BTreeMap<String, Direction>,
) -> u8 {
    let empty = BTreeMap::new();
    let m1 = medians.get(&1).unwrap_or(&empty);
    let m2 = medians.get(&2).unwrap_or(&empty);
    let better = |factor: &str| -> Option<u8> {
        let (a, b) = (m1.get(factor)?, m2.get(factor)?);
        let dir = directions.get(factor).copied().unwrap_or(Direction::HighIsStrong);
        let (a, b) = match dir {
            Direction::HighIsStrong => (*a, *b),
            Direction::LowIsStrong => (-*a, -*b),
        };
        if a > b {
            Some(1)
        } else if b > a {
            Some(2)
        } else {
            None
        }
    };
    let (mut w1, mut w2) = (0, 0);
    for f in directions.keys() {
        match better(f) {
            Some(1) => w1 += 1,
            Some(2) => w2 += 1,
            _ => {}
        }
    }
    match w1.cmp(&w2) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 2,
        std::cmp::Ordering::Equal => better(vars::FINANCIAL_DEVELOPMENT).unwrap_or(2),
    }
}

/// Median of each factor over pooled country-period observations of each
/// cluster's members.
pub fn cluster_profile(
    panel: &PanelTable,
    assignments: &BTreeMap<String, u8>,
    factors: &[&str],
    directions: &BTreeMap<String, Direction>,
) -> ClusterProfile {
    let mut medians: BTreeMap<u8, BTreeMap<String, f64>> = BTreeMap::new();
    for label in [1u8, 2u8] {
        let members: Vec<&String> = assignments.iter().filter(|(_, l)| **l == label).map(|(c, _)| c).collect();
        let mut row = BTreeMap::new();
        for f in factors {
            let xs: Vec<f64> = members.iter().flat_map(|c| panel.series_values(c, f)).collect();
            if !xs.is_empty() {
                row.insert(f.to_string(), stats::median(&xs));
            }
        }
        medians.insert(label, row);
    }
    let strong_cluster = label_strong_cluster(&medians, directions);
    ClusterProfile { medians, strong_cluster }
}

/// Per-country median factor vector over the panel.
pub fn country_feature_vectors(
    panel: &PanelTable,
    countries: &[String],
    factors: &[&str],
) -> Result<Vec<Vec<f64>>, ClusterError> {
    countries
        .iter()
        .map(|c| {
            factors
                .iter()
                .map(|f| {
                    let xs = panel.series_values(c, f);
                    if xs.is_empty() {
                        Err(ClusterError::MissingFactor { country: c.clone(), factor: f.to_string() })
                    } else {
                        Ok(stats::median(&xs))
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ClusterOptions<'a> {
    pub factors: &'a [&'a str],
    pub directions: BTreeMap<String, Direction>,
    pub split_by_regime: bool,
    pub seed: u64,
    pub restarts: usize,
    pub exec: Execution,
}

/// Two-cluster K-means per FX-regime group on z-scored fundamentals. Labels
/// are renumbered so that cluster 2 is the strong cluster.
pub fn cluster_countries(
    panel: &PanelTable,
    meta: &[CountryMeta],
    opts: &ClusterOptions<'_>,
) -> Result<Vec<ClusterAssignment>, ClusterError> {
    let mut groups: BTreeMap<RegimeGroup, Vec<String>> = BTreeMap::new();
    let in_panel = panel.countries();
    for m in meta.iter().filter(|m| in_panel.contains(&m.country_id)) {
        let g = if opts.split_by_regime {
            match m.regime_class() {
                RegimeClass::FreeFloat => RegimeGroup::FreeFloat,
                RegimeClass::Managed => RegimeGroup::Managed,
            }
        } else {
            RegimeGroup::All
        };
        groups.entry(g).or_default().push(m.country_id.clone());
    }
    let mut out = Vec::new();
    for (group, mut countries) in groups {
        countries.sort();
        if countries.len() < 3 {
            return Err(ClusterError::RegimeGroupTooSmall { group: group.name().into(), n: countries.len() });
        }
        let points = country_feature_vectors(panel, &countries, opts.factors)?;
        let seed = rng::derive_seed(opts.seed, &["cluster".into(), group.name().into()]);
        let fit = kmeans(&points, 2, seed, opts.restarts, opts.exec)?;
        let mut assignments: BTreeMap<String, u8> =
            countries.iter().cloned().zip(fit.labels.iter().map(|l| *l as u8)).collect();
        let profile = cluster_profile(panel, &assignments, opts.factors, &opts.directions);
        let mut centroids = fit.centroids;
        if profile.strong_cluster == 1 {
            for l in assignments.values_mut() {
                *l = 3 - *l;
            }
            centroids.swap(0, 1);
        }
        out.push(ClusterAssignment { regime_group: group, assignments, centroids, wcss: fit.wcss, seed, restarts: opts.restarts });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn no_single_move_improves_the_result() {
        use rand::Rng;
        let mut r = rng::rng_from(31);
        for _ in 0..30 {
            let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let fit = kmeans(&pts, 3, 7, 1, Execution::Sequential).unwrap();
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            let cost = |labels: &[usize]| {
                centroids_of(&refs, labels, 3).map(|c| wcss(&refs, labels, &c)).unwrap_or(f64::INFINITY)
            };
            let base: Vec<usize> = fit.labels.iter().map(|l| l - 1).collect();
            assert_abs_diff_eq!(cost(&base), fit.wcss, epsilon = 1e-12);
            for i in 0..pts.len() {
                for b in 0..3 {
                    let mut moved = base.clone();
                    moved[i] = b;
                    assert!(cost(&moved) >= fit.wcss - 1e-12);
                }
            }
        }
    }

    #[test]
    fn separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![10.0, 10.0], vec![0.0, 1.0], vec![10.0, 11.0]];
        for seed in 0..20 {
            let fit = kmeans(&pts, 2, seed, 3, Execution::Sequential).unwrap();
            assert_eq!(fit.labels[0], fit.labels[2]);
            assert_eq!(fit.labels[1], fit.labels[3]);
            assert_ne!(fit.labels[0], fit.labels[1]);
            assert_abs_diff_eq!(fit.wcss, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_points_two_clusters() {
        let fit = kmeans(&[vec![1.0], vec![2.0]], 2, 1, 5, Execution::Sequential).unwrap();
        assert_ne!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.wcss, 0.0);
    }

    #[test]
    fn too_few_and_degenerate() {
        assert_eq!(kmeans(&[vec![1.0]], 2, 0, 1, Execution::Sequential).unwrap_err(), ClusterError::TooFewPoints { n: 1, k: 2 });
        let same = vec![vec![1.0, 1.0]; 6];
        assert_eq!(kmeans(&same, 2, 0, 10, Execution::Sequential).unwrap_err(), ClusterError::EmptyCluster);
    }

    fn table2_panel_a() -> BTreeMap<u8, BTreeMap<String, f64>> {
        let names = vars::CLUSTER_FACTORS;
        let c1 = [1.0, 11.4, 0.3, 0.3, 86.5, 5.0, -0.6, 0.5];
        let c2 = [0.6, 10.7, 0.1, 1.3, 174.6, 1.1, -0.3, 0.9];
        let row = |v: [f64; 8]| names.iter().map(|n| n.to_string()).zip(v).collect::<BTreeMap<_, _>>();
        [(1u8, row(c1)), (2u8, row(c2))].into()
    }

    #[test]
    fn strong_cluster_published_medians() {
        assert_eq!(label_strong_cluster(&table2_panel_a(), &default_directions()), 2);
    }

    #[test]
    fn strong_cluster_clean_sweep_and_tie() {
        let dirs = default_directions();
        let mut m = table2_panel_a();
        // cluster 1 better on everything
        for (f, v) in m.get_mut(&1).unwrap().iter_mut() {
            *v = if f == vars::SHORT_RATE { -100.0 } else { 1000.0 };
        }
        assert_eq!(label_strong_cluster(&m, &dirs), 1);
        // 4-4 split with cluster 1 ahead on financial development
        let names = vars::CLUSTER_FACTORS;
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for (i, f) in names.iter().enumerate() {
            let (x, y) = if i < 4 { (0.0, 1.0) } else { (1.0, 0.0) };
            let (x, y) = if *f == vars::SHORT_RATE { (y, x) } else { (x, y) };
            a.insert(f.to_string(), x);
            b.insert(f.to_string(), y);
        }
        // factors 0..4 won by cluster 2, 4..8 (incl. ShortRate, FinDev) by cluster 1
        let m: BTreeMap<u8, _> = [(1u8, a), (2u8, b)].into();
        assert_eq!(label_strong_cluster(&m, &dirs), 1);
    }
}
