//! Metropolis single-spin-flip simulated annealing with restarts.

use rand::Rng;

use crate::ising::{IsingProblem, SpinConfig};
use crate::solvers::{SaParams, SolveResult};
use crate::{Error, Result};

/// Linear-temperature simulated annealing. Each restart begins from a uniform
/// random configuration; all restart results are returned.
pub fn sa_run<R: Rng>(p: &IsingProblem, params: &SaParams, rng: &mut R) -> Result<SolveResult> {
    params.validate()?;
    let n = p.vertex_count();
    if n == 0 {
        return Err(Error::Parameter("problem has no vertices".into()));
    }
    let adj = p.adjacency();
    let h = p.h();

    let mut configs = Vec::with_capacity(params.restarts);
    for _ in 0..params.restarts {
        let mut spins: Vec<i8> = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        // local[i] = h_i + sum_j J_ij s_j, maintained incrementally.
        let mut local: Vec<f64> = (0..n)
            .map(|i| {
                h[i] + adj[i]
                    .iter()
                    .map(|&(j, w)| w * f64::from(spins[j]))
                    .sum::<f64>()
            })
            .collect();
        for sweep in 0..params.sweeps {
            let t = if params.sweeps > 1 {
                let frac = sweep as f64 / (params.sweeps - 1) as f64;
                params.t_init + (params.t_final - params.t_init) * frac
            } else {
                params.t_final
            };
            for i in 0..n {
                let delta = -2.0 * f64::from(spins[i]) * local[i];
                if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
                    spins[i] = -spins[i];
                    let si = f64::from(spins[i]);
                    for &(j, w) in &adj[i] {
                        local[j] += 2.0 * w * si;
                    }
                }
            }
        }
        configs.push(SpinConfig::new(spins)?);
    }
    SolveResult::from_configs(p, configs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::energy;
    use crate::solvers::brute_force;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_descent_on_ferromagnetic_pair() {
        let p = IsingProblem::new(2, vec![0.0, 0.0], vec![(0, 1, -1.0)]).unwrap();
        let params = SaParams::new(1e-6, 1e-6, 50, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = sa_run(&p, &params, &mut rng).unwrap();
        for c in &r.configs {
            assert_eq!(c.get(0), c.get(1), "aligned state expected at T -> 0");
        }
        assert_eq!(r.best_energy, -1.0);
    }

    #[test]
    fn generous_budget_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = 0;
        for trial in 0..100 {
            let mut gen = ChaCha8Rng::seed_from_u64(1000 + trial);
            let n = 10;
            let h: Vec<f64> = (0..n).map(|_| gen.random_range(-1.0..1.0)).collect();
            let mut cs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if gen.random::<f64>() < 0.35 {
                        cs.push((u, v, gen.random_range(-1.0..1.0)));
                    }
                }
            }
            let p = IsingProblem::new(n, h, cs).unwrap();
            let exact = brute_force(&p).unwrap().best_energy;
            let r = sa_run(&p, &SaParams::new(2.0, 0.01, 1000, 100), &mut rng).unwrap();
            if (r.best_energy - exact).abs() < 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 99, "SA found the optimum in only {hits}/100 trials");
    }

    #[test]
    fn decoding_budget_follows_coupling_scales() {
        let p = IsingProblem::new(3, vec![0.0; 3], vec![(0, 1, -0.8), (1, 2, 0.2)]).unwrap();
        let params = SaParams::decoding_defaults(&p);
        assert_eq!(params.restarts, 10);
        assert_eq!(params.sweeps, 10);
        assert!((params.t_init - 4.0 * 0.8).abs() < 1e-15);
        assert!((params.t_final - 0.1 * 0.2).abs() < 1e-15);
        // Field-only problems still get a positive temperature window.
        let fields = IsingProblem::new(2, vec![0.5, -0.25], vec![]).unwrap();
        let params = SaParams::decoding_defaults(&fields);
        assert!(params.t_final > 0.0 && params.t_init >= params.t_final);
    }

    #[test]
    fn gauge_equivariant_success_statistics() {
        // Solving a gauged problem and ungauging the output must match the
        // success statistics of solving the original: the solver has no
        // preferred spin direction.
        use crate::ising::{apply_gauge, ungauge, GaugeVector};
        let mut gen = ChaCha8Rng::seed_from_u64(21);
        let n = 8;
        let h: Vec<f64> = (0..n).map(|_| gen.random_range(-0.5..0.5)).collect();
        let mut cs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if gen.random::<f64>() < 0.4 {
                    cs.push((u, v, gen.random_range(-1.0..1.0)));
                }
            }
        }
        let p = IsingProblem::new(n, h, cs).unwrap();
        let ground = brute_force(&p).unwrap().best_energy;
        let g = GaugeVector::random(n, &mut gen);
        let gp = apply_gauge(&p, &g);

        let params = SaParams::new(1.5, 0.1, 15, 1);
        let runs = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut direct_hits = 0usize;
        let mut gauged_hits = 0usize;
        for _ in 0..runs {
            let r = sa_run(&p, &params, &mut rng).unwrap();
            if (r.best_energy - ground).abs() < 1e-9 {
                direct_hits += 1;
            }
            let rg = sa_run(&gp, &params, &mut rng).unwrap();
            let back = ungauge(&rg.configs[0], &g);
            if (energy(&p, &back).unwrap() - ground).abs() < 1e-9 {
                gauged_hits += 1;
            }
        }
        let (pa, pb) = (
            direct_hits as f64 / runs as f64,
            gauged_hits as f64 / runs as f64,
        );
        let pool = (pa + pb) / 2.0;
        let sigma = (2.0 * pool * (1.0 - pool) / runs as f64).sqrt();
        assert!(
            (pa - pb).abs() <= 3.0 * sigma.max(1e-3),
            "success rates diverge: direct {pa}, gauged {pb}, sigma {sigma}"
        );
    }

    #[test]
    fn incremental_energy_matches_recomputation() {
        // Mirror of the update loop, cross-checked against full recomputation
        // after every 1000 accepted flips.
        let mut gen = ChaCha8Rng::seed_from_u64(9);
        let n = 24;
        let h: Vec<f64> = (0..n).map(|_| gen.random_range(-1.0..1.0)).collect();
        let mut cs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if gen.random::<f64>() < 0.3 {
                    cs.push((u, v, gen.random_range(-1.0..1.0)));
                }
            }
        }
        let p = IsingProblem::new(n, h.clone(), cs).unwrap();
        let adj = p.adjacency();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut spins: Vec<i8> = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let mut local: Vec<f64> = (0..n)
            .map(|i| {
                h[i] + adj[i]
                    .iter()
                    .map(|&(j, w)| w * f64::from(spins[j]))
                    .sum::<f64>()
            })
            .collect();
        let mut e = energy(&p, &SpinConfig::new(spins.clone()).unwrap()).unwrap();
        let mut flips = 0usize;
        let t = 1.5;
        while flips < 5000 {
            let i = rng.random_range(0..n);
            let delta = -2.0 * f64::from(spins[i]) * local[i];
            if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
                e += delta;
                spins[i] = -spins[i];
                let si = f64::from(spins[i]);
                for &(j, w) in &adj[i] {
                    local[j] += 2.0 * w * si;
                }
                flips += 1;
                if flips % 1000 == 0 {
                    let fresh = energy(&p, &SpinConfig::new(spins.clone()).unwrap()).unwrap();
                    assert!(
                        (e - fresh).abs() < 1e-9,
                        "drift {} after {flips} flips",
                        e - fresh
                    );
                }
            }
        }
    }
}
