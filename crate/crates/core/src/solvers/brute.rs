//! Exact ground-state enumeration for desk-scale problems.

use crate::ising::{energy, IsingProblem, SpinConfig};
use crate::solvers::SolveResult;
use crate::{Error, Result};

pub const BRUTE_FORCE_LIMIT: usize = 26;

const DEGENERACY_CAP: usize = 1 << 22;
const RESYNC_INTERVAL: u64 = 1 << 16;

/// Enumerates all 2^N configurations in Gray-code order and returns the
/// complete ground-state set with the exact minimum energy.
pub fn brute_force(p: &IsingProblem) -> Result<SolveResult> {
    let n = p.vertex_count();
    if n == 0 {
        return Err(Error::Parameter("problem has no vertices".into()));
    }
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeLimit(format!(
            "{n} spins exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    let adj = p.adjacency();
    let h = p.h();

    let mut spins = vec![1i8; n];
    let mut e = energy(p, &SpinConfig::all_up(n))?;
    let mut best = e;
    // Gray code of k and k+1 differ in bit trailing_zeros(k+1).
    let mut candidates: Vec<u64> = vec![0];
    let total: u64 = 1 << n;
    for step in 1..total {
        let bit = step.trailing_zeros() as usize;
        let old = spins[bit];
        let mut local = h[bit];
        for &(j, w) in &adj[bit] {
            local += w * f64::from(spins[j]);
        }
        e -= 2.0 * f64::from(old) * local;
        spins[bit] = -old;

        if step % RESYNC_INTERVAL == 0 {
            // Refresh the running energy to keep incremental drift bounded.
            let cfg = SpinConfig::new(spins.clone()).unwrap();
            e = energy(p, &cfg)?;
        }

        if e < best - 1e-9 {
            best = e;
            candidates.clear();
        }
        if e <= best + 1e-9 {
            if candidates.len() >= DEGENERACY_CAP {
                return Err(Error::SizeLimit(
                    "ground-state degeneracy cap exceeded".into(),
                ));
            }
            candidates.push(gray(step));
        }
    }

    // Exact re-evaluation of every candidate; keep the true minimum set.
    let mut exact: Vec<(u64, f64)> = Vec::with_capacity(candidates.len());
    let mut min_e = f64::INFINITY;
    for bits in candidates {
        let cfg = SpinConfig::from_bits(n, bits);
        let ev = energy(p, &cfg)?;
        min_e = min_e.min(ev);
        exact.push((bits, ev));
    }
    let mut configs = Vec::new();
    let mut energies = Vec::new();
    for (bits, ev) in exact {
        if ev <= min_e + 1e-9 {
            configs.push(SpinConfig::from_bits(n, bits));
            energies.push(ev);
        }
    }
    Ok(SolveResult {
        configs,
        energies,
        best_energy: min_e,
    })
}

/// Gray code of `k`: the spin pattern reached after `k` Gray steps.
fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}
