//! Broken-qubit statistics, cluster analysis on the encoded graph, worst-case
//! domain-size Monte Carlo, and site-percolation threshold estimation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decoding::GroupStates;
use crate::topology::{percolation_subgraph, Graph, NodeId};
use crate::util::derived_rng;
use crate::{Error, Result};

/// Broken-qubit and tie frequencies over a set of classified readouts.
#[derive(Clone, Debug)]
pub struct BqStats {
    /// Fraction of readouts in which each group is broken.
    pub per_qubit_p: BTreeMap<NodeId, f64>,
    /// Readout-averaged broken fraction.
    pub mean_p_bq: f64,
    /// Readout-averaged tie fraction.
    pub mean_p_tie: f64,
    pub sample_count: usize,
}

impl BqStats {
    /// Coefficient of variation of per-qubit broken probabilities; reported
    /// (not asserted) as the spatial-uniformity diagnostic.
    pub fn spatial_cv(&self) -> f64 {
        let n = self.per_qubit_p.len() as f64;
        if n == 0.0 {
            return f64::NAN;
        }
        let mean = self.per_qubit_p.values().sum::<f64>() / n;
        if mean == 0.0 {
            return f64::NAN;
        }
        let var = self
            .per_qubit_p
            .values()
            .map(|&p| (p - mean).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt() / mean
    }
}

pub fn bq_statistics(records: &[GroupStates]) -> Result<BqStats> {
    let first = records
        .first()
        .ok_or_else(|| Error::Parameter("no readout records".into()))?;
    let groups: Vec<NodeId> = first.iter().map(|&(l, _)| l).collect();
    let mut broken_counts: HashMap<NodeId, usize> = groups.iter().map(|&l| (l, 0)).collect();
    let mut broken_total = 0usize;
    let mut tie_total = 0usize;
    for rec in records {
        if rec.len() != groups.len() {
            return Err(Error::Parameter(
                "inconsistent group maps across records".into(),
            ));
        }
        for &(l, state) in rec {
            if state.is_broken() {
                *broken_counts
                    .get_mut(&l)
                    .ok_or_else(|| Error::Parameter("inconsistent group maps".into()))? += 1;
                broken_total += 1;
            }
            if state.is_tie() {
                tie_total += 1;
            }
        }
    }
    let n_rec = records.len();
    let per_qubit_p = groups
        .iter()
        .map(|&l| (l, broken_counts[&l] as f64 / n_rec as f64))
        .collect();
    let denom = (n_rec * groups.len()) as f64;
    Ok(BqStats {
        per_qubit_p,
        mean_p_bq: broken_total as f64 / denom,
        mean_p_tie: tie_total as f64 / denom,
        sample_count: n_rec,
    })
}

/// Cluster-size histogram (size -> count) of the subgraph induced by the
/// broken qubits.
pub fn bq_clusters(encoded_graph: &Graph, bq_set: &BTreeSet<NodeId>) -> BTreeMap<usize, usize> {
    let comps = percolation_subgraph(encoded_graph, bq_set);
    let mut hist = BTreeMap::new();
    for c in comps {
        *hist.entry(c.len()).or_insert(0) += 1;
    }
    hist
}

/// Central-site connected-domain sizes under independent site occupation.
///
/// Sizes are recorded for the trials whose central vertex is occupied; the
/// mean is the conditional mean domain size, the quantity that saturates
/// with growing lattice size below threshold.
#[derive(Clone, Debug)]
pub struct DomainScan {
    pub p: f64,
    pub sizes: Vec<usize>,
    pub mean_size: f64,
    /// Total configurations drawn, including unoccupied-center ones.
    pub trials: usize,
}

impl DomainScan {
    pub fn stderr(&self) -> f64 {
        let n = self.sizes.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let var = self
            .sizes
            .iter()
            .map(|&s| (s as f64 - self.mean_size).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }
}

/// 2LG neighborhood arithmetic without building a Graph: vertex (x, y, z) of
/// an N x N x 2 grid.
fn for_each_2lg_neighbor(n: usize, v: usize, mut f: impl FnMut(usize)) {
    let layer = n * n;
    let (z, rem) = (v / layer, v % layer);
    let (y, x) = (rem / n, rem % n);
    if x > 0 {
        f(v - 1);
    }
    if x + 1 < n {
        f(v + 1);
    }
    if y > 0 {
        f(v - n);
    }
    if y + 1 < n {
        f(v + n);
    }
    f(if z == 0 { v + layer } else { v - layer });
}

/// Occupies each vertex of the N x N x 2 grid independently with probability
/// `p` and measures the connected occupied domain containing the central
/// vertex (floor(N/2), floor(N/2), 0). Trials whose central vertex comes up
/// unoccupied carry no domain and are skipped in the mean.
///
/// Occupancy is sampled lazily during the flood fill, so only the vicinity of
/// the central cluster is ever touched.
pub fn domain_size_scan(n: usize, p: f64, trials: usize, master_seed: u64) -> Result<DomainScan> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "occupation probability {p} outside [0,1]"
        )));
    }
    if trials < 1 || n < 1 {
        return Err(Error::Parameter("need trials >= 1 and N >= 1".into()));
    }
    let center = (n / 2) * n + n / 2;
    let sizes: Vec<usize> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut rng = derived_rng(master_seed, t as u64);
            let size = central_domain(n, p, center, &mut rng);
            (size > 0).then_some(size)
        })
        .collect();
    let mean_size = if sizes.is_empty() {
        0.0
    } else {
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
    };
    Ok(DomainScan {
        p,
        sizes,
        mean_size,
        trials,
    })
}

fn central_domain(n: usize, p: f64, center: usize, rng: &mut ChaCha8Rng) -> usize {
    // Occupancy decided on first touch; 0 = unknown, 1 = occupied, 2 = empty.
    let mut status: HashMap<usize, u8> = HashMap::new();
    let occupied = |v: usize, rng: &mut ChaCha8Rng, status: &mut HashMap<usize, u8>| -> bool {
        match status.get(&v) {
            Some(&s) => s == 1,
            None => {
                let occ = rng.random::<f64>() < p;
                status.insert(v, if occ { 1 } else { 2 });
                occ
            }
        }
    };
    if !occupied(center, rng, &mut status) {
        return 0;
    }
    let mut stack = vec![center];
    let mut in_cluster: BTreeSet<usize> = [center].into_iter().collect();
    while let Some(v) = stack.pop() {
        let mut nbrs = Vec::with_capacity(5);
        for_each_2lg_neighbor(n, v, |w| nbrs.push(w));
        for w in nbrs {
            if !in_cluster.contains(&w) && occupied(w, rng, &mut status) {
                in_cluster.insert(w);
                stack.push(w);
            }
        }
    }
    in_cluster.len()
}

/// Reference lattices for threshold estimation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Square,
    Cubic,
    TwoLevelGrid,
}

impl Lattice {
    pub fn name(self) -> &'static str {
        match self {
            Lattice::Square => "square",
            Lattice::Cubic => "cubic",
            Lattice::TwoLevelGrid => "2lg",
        }
    }

    fn vertex_count(self, n: usize) -> usize {
        match self {
            Lattice::Square => n * n,
            Lattice::Cubic => n * n * n,
            Lattice::TwoLevelGrid => 2 * n * n,
        }
    }

    /// x-coordinate of a vertex (spanning is measured along x).
    fn x_of(self, n: usize, v: usize) -> usize {
        match self {
            Lattice::Square => v % n,
            Lattice::Cubic => v % n,
            Lattice::TwoLevelGrid => v % (n * n) % n,
        }
    }

    fn for_each_neighbor(self, n: usize, v: usize, mut f: impl FnMut(usize)) {
        match self {
            Lattice::Square => {
                let (y, x) = (v / n, v % n);
                if x > 0 {
                    f(v - 1);
                }
                if x + 1 < n {
                    f(v + 1);
                }
                if y > 0 {
                    f(v - n);
                }
                if y + 1 < n {
                    f(v + n);
                }
            }
            Lattice::Cubic => {
                let plane = n * n;
                let (z, rem) = (v / plane, v % plane);
                let (y, x) = (rem / n, rem % n);
                if x > 0 {
                    f(v - 1);
                }
                if x + 1 < n {
                    f(v + 1);
                }
                if y > 0 {
                    f(v - n);
                }
                if y + 1 < n {
                    f(v + n);
                }
                if z > 0 {
                    f(v - plane);
                }
                if z + 1 < n {
                    f(v + plane);
                }
            }
            Lattice::TwoLevelGrid => for_each_2lg_neighbor(n, v, f),
        }
    }
}

/// One occupied-path spanning test from the x = 0 boundary to x = N - 1.
fn spans(lattice: Lattice, n: usize, occupied: &[bool]) -> bool {
    let total = lattice.vertex_count(n);
    let mut visited = vec![false; total];
    let mut stack: Vec<usize> = (0..total)
        .filter(|&v| occupied[v] && lattice.x_of(n, v) == 0)
        .collect();
    for &v in &stack {
        visited[v] = true;
    }
    while let Some(v) = stack.pop() {
        if lattice.x_of(n, v) == n - 1 {
            return true;
        }
        let mut nbrs = Vec::with_capacity(6);
        lattice.for_each_neighbor(n, v, |w| nbrs.push(w));
        for w in nbrs {
            if occupied[w] && !visited[w] {
                visited[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

fn spanning_count(lattice: Lattice, n: usize, p: f64, trials: usize, seed: u64) -> usize {
    (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = derived_rng(seed, t as u64);
            let occupied: Vec<bool> = (0..lattice.vertex_count(n))
                .map(|_| rng.random::<f64>() < p)
                .collect();
            spans(lattice, n, &occupied)
        })
        .count()
}

#[derive(Clone, Debug)]
pub struct ThresholdEstimate {
    pub lattice: Lattice,
    pub estimate: f64,
    pub stderr: f64,
}

/// Estimates the site-percolation threshold from the crossing of
/// spanning-probability curves at different sizes, with a bootstrap error
/// bar over the per-point Bernoulli counts.
pub fn estimate_site_threshold(
    lattice: Lattice,
    sizes: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<ThresholdEstimate> {
    if sizes.len() < 2 {
        return Err(Error::Parameter(
            "need at least two sizes for a crossing".into(),
        ));
    }
    if trials < 20 {
        return Err(Error::EstimationFailure(
            "too few trials per grid point".into(),
        ));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();

    // Stage A: coarse bracket of the 0.5-crossing on the smallest size.
    let coarse_trials = (trials / 4).max(50);
    let n0 = sizes[0];
    let mut bracket = None;
    let mut prev = 0.0;
    for k in 1..19 {
        let p = k as f64 * 0.05;
        let frac = spanning_count(lattice, n0, p, coarse_trials, master_seed ^ 0xA0) as f64
            / coarse_trials as f64;
        if prev < 0.5 && frac >= 0.5 {
            bracket = Some(p - 0.025);
            break;
        }
        prev = frac;
    }
    let center =
        bracket.ok_or_else(|| Error::EstimationFailure("no 0.5 crossing in [0.05, 0.9]".into()))?;

    // Stage B: fine grid around the bracket, all sizes.
    let grid: Vec<f64> = (-6..=6)
        .map(|k| (center + k as f64 * 0.01).clamp(0.01, 0.99))
        .collect();
    let mut counts: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        let row: Vec<usize> = grid
            .iter()
            .enumerate()
            .map(|(pi, &p)| {
                spanning_count(
                    lattice,
                    n,
                    p,
                    trials,
                    master_seed ^ ((si as u64) << 32 | pi as u64),
                )
            })
            .collect();
        counts.push(row);
    }

    let fracs: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / trials as f64).collect())
        .collect();
    let estimate = crossing_estimate(&grid, &fracs).ok_or_else(|| {
        Error::EstimationFailure("spanning curves do not cross on the grid".into())
    })?;

    // Bootstrap over per-point binomial counts.
    let boots = 200;
    let mut rng = derived_rng(master_seed, 0xB007);
    let mut resampled = Vec::with_capacity(boots);
    for _ in 0..boots {
        let re_fracs: Vec<Vec<f64>> = fracs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&f| {
                        let mut k = 0usize;
                        for _ in 0..trials {
                            if rng.random::<f64>() < f {
                                k += 1;
                            }
                        }
                        k as f64 / trials as f64
                    })
                    .collect()
            })
            .collect();
        if let Some(est) = crossing_estimate(&grid, &re_fracs) {
            resampled.push(est);
        }
    }
    if resampled.len() < boots / 2 {
        return Err(Error::EstimationFailure(
            "bootstrap crossings mostly absent".into(),
        ));
    }
    let mean = resampled.iter().sum::<f64>() / resampled.len() as f64;
    let var =
        resampled.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (resampled.len() - 1) as f64;
    Ok(ThresholdEstimate {
        lattice,
        estimate,
        stderr: var.sqrt(),
    })
}

/// Mean crossing point of consecutive-size spanning curves; falls back to the
/// largest size's 0.5-crossing when curve pairs never intersect.
fn crossing_estimate(grid: &[f64], fracs: &[Vec<f64>]) -> Option<f64> {
    let mut crossings = Vec::new();
    for w in fracs.windows(2) {
        let (small, big) = (&w[0], &w[1]);
        // d(p) = R_big - R_small changes sign from negative (below threshold,
        // bigger lattices span less) to positive.
        let mut found = None;
        for i in 1..grid.len() {
            let d0 = big[i - 1] - small[i - 1];
            let d1 = big[i] - small[i];
            if d0 <= 0.0 && d1 > 0.0 {
                let t = if (d1 - d0).abs() < 1e-15 {
                    0.5
                } else {
                    -d0 / (d1 - d0)
                };
                found = Some(grid[i - 1] + t * (grid[i] - grid[i - 1]));
            }
        }
        if let Some(c) = found {
            crossings.push(c);
        }
    }
    if !crossings.is_empty() {
        return Some(crossings.iter().sum::<f64>() / crossings.len() as f64);
    }
    // Fallback: 0.5-crossing of the largest size.
    let big = fracs.last()?;
    for i in 1..grid.len() {
        if big[i - 1] < 0.5 && big[i] >= 0.5 {
            let t = (0.5 - big[i - 1]) / (big[i] - big[i - 1]);
            return Some(grid[i - 1] + t * (grid[i] - grid[i - 1]));
        }
    }
    None
}

/// Exponential-tail fit constants for the cluster-size law alpha e^{-gamma r}.
#[derive(Clone, Copy, Debug)]
pub struct ClusterTailFit {
    pub alpha: f64,
    pub gamma: f64,
}

/// Least squares on log counts over histogram bins with count >= 10.
pub fn fit_cluster_tail(hist: &BTreeMap<usize, usize>) -> Result<ClusterTailFit> {
    let pts: Vec<(f64, f64)> = hist
        .iter()
        .filter(|&(_, &c)| c >= 10)
        .map(|(&s, &c)| (s as f64, (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::EstimationFailure(
            "fewer than two histogram bins with count >= 10".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok(ClusterTailFit {
        alpha: intercept.exp(),
        gamma: -slope,
    })
}

/// Decodability cost figures from the no-large-domain probability law.
#[derive(Clone, Copy, Debug)]
pub struct DecodingCost {
    pub p_r: f64,
    pub t_ratio: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub p_bq: f64,
    /// gamma <= 0 means no exponential decay was fit: above threshold, the
    /// cost figures are unreliable.
    pub above_threshold: bool,
}

/// P(r) = (1 - alpha e^{-gamma r})^N and the domain-count-per-success factor
/// (N / r) / P(r).
pub fn decoding_cost_estimate(
    n_encoded: usize,
    p_bq: f64,
    r: usize,
    fit: ClusterTailFit,
) -> Result<DecodingCost> {
    if !(0.0 < p_bq && p_bq < 1.0) {
        return Err(Error::Parameter(format!("p_bq = {p_bq} outside (0,1)")));
    }
    if r == 0 || n_encoded == 0 {
        return Err(Error::Parameter("need r >= 1 and N >= 1".into()));
    }
    let above_threshold = fit.gamma <= 0.0;
    let per_qubit = 1.0 - fit.alpha * (-fit.gamma * r as f64).exp();
    let p_r = per_qubit.max(0.0).powi(n_encoded as i32);
    let t_ratio = (n_encoded as f64 / r as f64) / p_r;
    Ok(DecodingCost {
        p_r,
        t_ratio,
        alpha: fit.alpha,
        gamma: fit.gamma,
        p_bq,
        above_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::GroupState;
    use crate::topology::two_level_grid;
    use rand::SeedableRng;

    #[test]
    fn bq_stats_basic() {
        // All unbroken.
        let rec: GroupStates = (0..4).map(|l| (l, GroupState::Unbroken(1))).collect();
        let stats = bq_statistics(&vec![rec.clone(); 10]).unwrap();
        assert!(stats.per_qubit_p.values().all(|&p| p == 0.0));
        assert_eq!(stats.mean_p_bq, 0.0);

        // Group 3 always tied.
        let mut rec2 = rec.clone();
        rec2[3] = (3, GroupState::Tie);
        let stats = bq_statistics(&vec![rec2; 7]).unwrap();
        assert_eq!(stats.per_qubit_p[&3], 1.0);
        assert!((stats.mean_p_tie - 0.25).abs() < 1e-12);
        assert!(stats.mean_p_tie <= stats.mean_p_bq);
    }

    #[test]
    fn bq_stats_uncorrelated_groups() {
        // Uniform random 4-spin groups: p_tie = 6/16, p_bq = 14/16.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        let n_groups = 8;
        let mut records = Vec::new();
        for _ in 0..100_000 / n_groups {
            let rec: GroupStates = (0..n_groups)
                .map(|l| {
                    let spins: Vec<i8> = (0..4)
                        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                        .collect();
                    let sum: i32 = spins.iter().map(|&s| i32::from(s)).sum();
                    let state = if sum.abs() == 4 {
                        GroupState::Unbroken(if sum > 0 { 1 } else { -1 })
                    } else if sum == 0 {
                        GroupState::Tie
                    } else {
                        GroupState::PartiallyBroken(if sum > 0 { 1 } else { -1 })
                    };
                    (l, state)
                })
                .collect();
            records.push(rec);
        }
        let stats = bq_statistics(&records).unwrap();
        assert!(
            (stats.mean_p_tie - 0.375).abs() < 0.01,
            "{}",
            stats.mean_p_tie
        );
        assert!(
            (stats.mean_p_bq - 0.875).abs() < 0.01,
            "{}",
            stats.mean_p_bq
        );
        assert!(stats.spatial_cv().is_finite());
    }

    #[test]
    fn cluster_histogram() {
        let lg = two_level_grid(8, &BTreeSet::new()).unwrap();
        assert!(bq_clusters(lg.graph(), &BTreeSet::new()).is_empty());

        let a = lg.vertex_id(0, 0, 0);
        let b = lg.vertex_id(1, 0, 0);
        let hist = bq_clusters(lg.graph(), &[a, b].into_iter().collect());
        assert_eq!(hist, [(2, 1)].into_iter().collect());

        // Sub-threshold random sets: histogram mass conserved, no giant cluster.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let set: BTreeSet<NodeId> = (0..lg.vertex_count())
                .filter(|_| rng.random::<f64>() < 0.1)
                .collect();
            let hist = bq_clusters(lg.graph(), &set);
            let mass: usize = hist.iter().map(|(&s, &c)| s * c).sum();
            assert_eq!(mass, set.len());
            if let Some((&largest, _)) = hist.iter().next_back() {
                assert!(largest < 32, "unexpected giant cluster of size {largest}");
            }
        }
    }

    #[test]
    fn domain_scan_endpoints() {
        let scan = domain_size_scan(8, 0.0, 50, 1).unwrap();
        assert_eq!(scan.mean_size, 0.0);
        let scan = domain_size_scan(8, 1.0, 50, 2).unwrap();
        assert_eq!(scan.mean_size, 128.0);
    }

    #[test]
    fn domain_scan_monotone_in_p() {
        let mut prev = -1.0;
        for (i, p) in [0.1, 0.2, 0.3, 0.375].iter().enumerate() {
            let scan = domain_size_scan(12, *p, 3000, 100 + i as u64).unwrap();
            assert!(scan.mean_size > prev, "mean not increasing at p = {p}");
            prev = scan.mean_size;
        }
    }

    #[test]
    fn tail_fit_recovers_exponential() {
        // Synthetic histogram counts = 1000 e^{-0.7 s}.
        let hist: BTreeMap<usize, usize> = (1..12)
            .map(|s| (s, (1000.0 * (-0.7 * s as f64).exp()).round() as usize))
            .filter(|&(_, c)| c > 0)
            .collect();
        let fit = fit_cluster_tail(&hist).unwrap();
        assert!((fit.gamma - 0.7).abs() < 0.05, "gamma {}", fit.gamma);
        assert!((fit.alpha.ln() - 1000.0f64.ln()).abs() < 0.3);
    }

    #[test]
    fn cost_estimate_limits() {
        // alpha -> 0: P -> 1 and T -> N/r.
        let fit = ClusterTailFit {
            alpha: 1e-12,
            gamma: 1.0,
        };
        let c = decoding_cost_estimate(1000, 0.2, 5, fit).unwrap();
        assert!((c.p_r - 1.0).abs() < 1e-6);
        assert!((c.t_ratio - 200.0).abs() < 1e-3);
        assert!(!c.above_threshold);

        // r = c log N keeps P(r) constant as N grows.
        let fit = ClusterTailFit {
            alpha: 0.5,
            gamma: 1.0,
        };
        let mut values = Vec::new();
        for exp in 2..7 {
            let n = 10usize.pow(exp);
            let r = (3.0 * (n as f64).ln()).ceil() as usize;
            let c = decoding_cost_estimate(n, 0.2, r, fit).unwrap();
            values.push(c.p_r);
        }
        for w in values.windows(2) {
            assert!((w[0] - w[1]).abs() < 0.01, "P(r) drifted: {values:?}");
        }

        // gamma <= 0 flags above-threshold.
        let bad = ClusterTailFit {
            alpha: 0.5,
            gamma: -0.1,
        };
        assert!(
            decoding_cost_estimate(100, 0.5, 3, bad)
                .unwrap()
                .above_threshold
        );
    }

    #[test]
    fn spatial_uniformity_statistic_on_solver_readouts() {
        // Broken-qubit probabilities from real solver readouts; the
        // coefficient of variation is reported, not bounded.
        use crate::decoding::classify_groups;
        use crate::embedding::{assign_penalties, embed_qacme, PenaltyStrategy};
        use crate::instances::generate_planted;
        use crate::solvers::{sa_run, SaParams};
        use crate::topology::{chimera, two_level_grid};
        use rand::SeedableRng;

        let hw = chimera(2, 2, 4, &BTreeSet::new()).unwrap();
        let lg = two_level_grid(2, &BTreeSet::new()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(45);
        let inst = generate_planted(lg.graph(), 1.0, Default::default(), &mut rng).unwrap();
        let e = embed_qacme(&inst.problem, &lg, &hw).unwrap();
        let (e, _) = assign_penalties(e, PenaltyStrategy::Uniform(0.2)).unwrap();
        let merged = e.solver_problem().unwrap();
        let params = SaParams::new(3.0, 1.0, 10, 1); // hot: plenty of breaks
        let mut records = Vec::new();
        for _ in 0..200 {
            let r = sa_run(&merged, &params, &mut rng).unwrap();
            records.push(classify_groups(&e, &r.configs[0]).unwrap());
        }
        let stats = bq_statistics(&records).unwrap();
        let cv = stats.spatial_cv();
        assert!(cv.is_finite(), "spatial CV must be computable: {cv}");
        assert!(stats.mean_p_bq > 0.0);
    }

    #[test]
    fn threshold_estimation_error_paths() {
        // One size cannot produce a crossing.
        assert!(estimate_site_threshold(Lattice::Square, &[16], 100, 1).is_err());
        // Too few trials per grid point.
        assert!(estimate_site_threshold(Lattice::Square, &[8, 16], 5, 1).is_err());
    }

    #[test]
    fn spanning_probability_monotone() {
        let seed = 7;
        let mut prev = 0.0;
        for (i, p) in [0.3, 0.5, 0.6, 0.7, 0.8].iter().enumerate() {
            let c = spanning_count(Lattice::Square, 12, *p, 300, seed + i as u64);
            let f = c as f64 / 300.0;
            assert!(
                f + 0.05 >= prev,
                "spanning probability decreased at p = {p}"
            );
            prev = f;
        }
    }
}
