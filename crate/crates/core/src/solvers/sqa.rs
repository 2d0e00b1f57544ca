//! Discrete-time path-integral Monte Carlo (simulated quantum annealing).
//!
//! The transverse-field Ising Hamiltonian is sampled through its dual
//! classical action
//!
//!   beta H_C(s) = J_perp(s) sum_{i,tau} s_{i,tau} s_{i,tau+1}
//!               + (beta/N_tau) B(s) sum_tau [ sum_i h_i s_{i,tau}
//!                                           + sum_{i<j} J_ij s_{i,tau} s_{j,tau} ]
//!
//! with J_perp = (1/2) ln tanh(beta A / N_tau) < 0. Updates are single-site
//! Wolff clusters grown along the Trotter direction only; the in-slice terms
//! enter as a Metropolis acceptance on the proposed cluster flip.

use rand::Rng;

use crate::ising::{IsingProblem, SpinConfig};
use crate::solvers::{j_perp_clamped, AnnealSchedule, ReadoutPolicy, SolveResult, SqaParams};
use crate::{Error, Result};

/// Mutable Trotter-replicated spin system; one run owns one engine.
pub struct SqaEngine {
    n_sites: usize,
    n_tau: usize,
    /// Spin at (site, tau) stored at site * n_tau + tau.
    spins: Vec<i8>,
    h: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
    in_cluster: Vec<bool>,
    cluster: Vec<usize>,
}

impl SqaEngine {
    pub fn new<R: Rng>(p: &IsingProblem, n_tau: usize, rng: &mut R) -> Self {
        let n_sites = p.vertex_count();
        let spins = (0..n_sites * n_tau)
            .map(|_| if rng.random::<bool>() { 1i8 } else { -1 })
            .collect();
        SqaEngine {
            n_sites,
            n_tau,
            spins,
            h: p.h().to_vec(),
            adj: p.adjacency(),
            in_cluster: vec![false; n_tau],
            cluster: Vec::with_capacity(n_tau),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_tau(&self) -> usize {
        self.n_tau
    }

    pub fn spin(&self, site: usize, tau: usize) -> i8 {
        self.spins[site * self.n_tau + tau]
    }

    /// Grows the Trotter cluster for `site` from a random seed slice.
    /// Returns the slice indices; the cluster is a contiguous arc (or the
    /// whole ring) of equal spins.
    fn build_cluster<R: Rng>(&mut self, site: usize, j_perp: f64, rng: &mut R) -> &[usize] {
        let base = site * self.n_tau;
        let n_tau = self.n_tau;
        let p_add = 1.0 - (2.0 * j_perp).exp();
        for &t in &self.cluster {
            self.in_cluster[t] = false;
        }
        self.cluster.clear();

        let seed = rng.random_range(0..n_tau);
        let seed_spin = self.spins[base + seed];
        self.cluster.push(seed);
        self.in_cluster[seed] = true;

        // Forward arc.
        let mut t = seed;
        loop {
            let next = (t + 1) % n_tau;
            if self.in_cluster[next] || self.spins[base + next] != seed_spin {
                break;
            }
            if rng.random::<f64>() >= p_add {
                break;
            }
            self.cluster.push(next);
            self.in_cluster[next] = true;
            t = next;
        }
        // Backward arc.
        let mut t = seed;
        loop {
            let prev = (t + n_tau - 1) % n_tau;
            if self.in_cluster[prev] || self.spins[base + prev] != seed_spin {
                break;
            }
            if rng.random::<f64>() >= p_add {
                break;
            }
            self.cluster.push(prev);
            self.in_cluster[prev] = true;
            t = prev;
        }
        &self.cluster
    }

    fn update_site<R: Rng>(&mut self, site: usize, j_perp: f64, slice_weight: f64, rng: &mut R) {
        let base = site * self.n_tau;
        self.build_cluster(site, j_perp, rng);
        // Field-action change of flipping the cluster:
        //   delta = -2 sum_{tau in C} b_tau s_tau,
        //   b_tau = slice_weight * (h_i + sum_j J_ij s_{j,tau}).
        let mut delta = 0.0;
        for k in 0..self.cluster.len() {
            let tau = self.cluster[k];
            let mut field = self.h[site];
            for &(j, w) in &self.adj[site] {
                field += w * f64::from(self.spins[j * self.n_tau + tau]);
            }
            delta += -2.0 * slice_weight * field * f64::from(self.spins[base + tau]);
        }
        if delta <= 0.0 || rng.random::<f64>() < (-delta).exp() {
            for k in 0..self.cluster.len() {
                let tau = self.cluster[k];
                self.spins[base + tau] = -self.spins[base + tau];
            }
        }
    }

    /// One pass: a Trotter-cluster update for every spatial site.
    ///
    /// `slice_weight` is (beta / n_tau) * B(s).
    pub fn sweep<R: Rng>(&mut self, j_perp: f64, slice_weight: f64, rng: &mut R) {
        for site in 0..self.n_sites {
            self.update_site(site, j_perp, slice_weight, rng);
        }
    }

    pub fn readout<R: Rng>(&self, policy: ReadoutPolicy, rng: &mut R) -> SpinConfig {
        match policy {
            ReadoutPolicy::RandomSlice => {
                let tau = rng.random_range(0..self.n_tau);
                self.slice_config(tau)
            }
            ReadoutPolicy::MajoritySlice => {
                let spins = (0..self.n_sites)
                    .map(|site| {
                        let sum: i32 = (0..self.n_tau)
                            .map(|tau| i32::from(self.spins[site * self.n_tau + tau]))
                            .sum();
                        match sum.cmp(&0) {
                            std::cmp::Ordering::Greater => 1i8,
                            std::cmp::Ordering::Less => -1,
                            std::cmp::Ordering::Equal => {
                                if rng.random::<bool>() {
                                    1
                                } else {
                                    -1
                                }
                            }
                        }
                    })
                    .collect();
                SpinConfig::new(spins).unwrap()
            }
        }
    }

    pub fn slice_config(&self, tau: usize) -> SpinConfig {
        let spins = (0..self.n_sites)
            .map(|site| self.spins[site * self.n_tau + tau])
            .collect();
        SpinConfig::new(spins).unwrap()
    }
}

/// Anneals the dual system from s = 0 to s = 1 and reads out one
/// configuration according to the readout policy.
pub fn sqa_run<R: Rng>(
    p: &IsingProblem,
    sched: &AnnealSchedule,
    params: &SqaParams,
    rng: &mut R,
) -> Result<SolveResult> {
    params.validate()?;
    if p.vertex_count() == 0 {
        return Err(Error::Parameter("problem has no vertices".into()));
    }
    let mut engine = SqaEngine::new(p, params.n_tau, rng);
    let steps = params.sweeps.div_ceil(params.block_size);
    for sweep in 0..params.sweeps {
        let step = sweep / params.block_size;
        let s = if steps > 1 {
            step as f64 / (steps - 1) as f64
        } else {
            1.0
        };
        let jp = j_perp_clamped(params.beta, sched.a(s), params.n_tau);
        let slice_weight = params.beta * sched.b(s) / params.n_tau as f64;
        engine.sweep(jp, slice_weight, rng);
    }
    let config = engine.readout(params.readout, rng);
    SolveResult::from_configs(p, vec![config])
}
