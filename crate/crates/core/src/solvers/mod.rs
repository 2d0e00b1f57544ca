//! Spin-configuration producers: simulated quantum annealing (path-integral
//! Monte Carlo), classical simulated annealing, and exact brute force.

mod brute;
mod sa;
mod sqa;

pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use sa::sa_run;
pub use sqa::{sqa_run, SqaEngine};

use crate::ising::{IsingProblem, SpinConfig};
use crate::{Error, Result};

/// Floor applied to the Trotter coupling when tanh underflows to 0.
pub const J_PERP_FLOOR: f64 = -25.0;

/// Trotter-direction coupling (1/2) ln tanh(beta A / n_tau).
#[derive(Clone, Copy, Debug)]
pub struct JPerp {
    pub value: f64,
    /// tanh rounded to 1: slices fully decouple and the value clamps to 0.
    pub saturated: bool,
}

pub fn j_perp(beta: f64, a: f64, n_tau: usize) -> Result<JPerp> {
    if a <= 0.0 {
        return Err(Error::Domain(format!(
            "transverse amplitude A = {a} must be positive"
        )));
    }
    if beta <= 0.0 {
        return Err(Error::Domain(format!("beta = {beta} must be positive")));
    }
    if n_tau < 2 {
        return Err(Error::Parameter("n_tau must be at least 2".into()));
    }
    let t = (beta * a / n_tau as f64).tanh();
    if t >= 1.0 {
        return Ok(JPerp {
            value: 0.0,
            saturated: true,
        });
    }
    let value = 0.5 * t.ln();
    Ok(JPerp {
        value: value.max(J_PERP_FLOOR),
        saturated: false,
    })
}

/// Like [`j_perp`] but total: A <= 0 maps to the frozen floor. Used inside the
/// annealing loop where A(1) = 0 is legitimate.
pub(crate) fn j_perp_clamped(beta: f64, a: f64, n_tau: usize) -> f64 {
    if a <= 0.0 {
        return J_PERP_FLOOR;
    }
    match j_perp(beta, a, n_tau) {
        Ok(jp) => jp.value,
        Err(_) => J_PERP_FLOOR,
    }
}

/// One (s, A, B) knot of an annealing schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulePoint {
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

/// Piecewise-linear annealing schedule over s in [0, 1].
#[derive(Clone, Debug)]
pub struct AnnealSchedule {
    points: Vec<SchedulePoint>,
}

impl AnnealSchedule {
    /// Default schedule A(s) = 1 - s, B(s) = s in solver units.
    pub fn linear() -> Self {
        AnnealSchedule {
            points: vec![
                SchedulePoint {
                    s: 0.0,
                    a: 1.0,
                    b: 0.0,
                },
                SchedulePoint {
                    s: 1.0,
                    a: 0.0,
                    b: 1.0,
                },
            ],
        }
    }

    pub fn from_points(points: Vec<SchedulePoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter(
                "schedule needs at least two points".into(),
            ));
        }
        let first = points.first().unwrap();
        let last = points.last().unwrap();
        if first.s != 0.0 || last.s != 1.0 {
            return Err(Error::Parameter("schedule must span s = 0 to s = 1".into()));
        }
        for w in points.windows(2) {
            if w[1].s <= w[0].s {
                return Err(Error::Parameter(
                    "schedule s values must be strictly increasing".into(),
                ));
            }
            if w[1].a > w[0].a + 1e-12 {
                return Err(Error::Parameter("A(s) must be non-increasing".into()));
            }
            if w[1].b + 1e-12 < w[0].b {
                return Err(Error::Parameter("B(s) must be non-decreasing".into()));
            }
        }
        if last.a.abs() > 1e-3 * first.a.abs().max(1e-300) {
            return Err(Error::Parameter("A(1) must be approximately zero".into()));
        }
        if first.b.abs() > 1e-3 * last.b.abs().max(1e-300) {
            return Err(Error::Parameter("B(0) must be approximately zero".into()));
        }
        Ok(AnnealSchedule { points })
    }

    /// Parses `s A B` lines.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::Parse(format!(
                    "schedule line {line:?} must be `s A B`"
                )));
            }
            let parse = |t: &str| -> Result<f64> {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad schedule number {t:?}")))
            };
            points.push(SchedulePoint {
                s: parse(toks[0])?,
                a: parse(toks[1])?,
                b: parse(toks[2])?,
            });
        }
        AnnealSchedule::from_points(points)
    }

    pub fn points(&self) -> &[SchedulePoint] {
        &self.points
    }

    fn interpolate(&self, s: f64, pick: impl Fn(&SchedulePoint) -> f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let idx = self.points.partition_point(|p| p.s <= s);
        if idx == 0 {
            return pick(&self.points[0]);
        }
        if idx == self.points.len() {
            return pick(self.points.last().unwrap());
        }
        let (lo, hi) = (&self.points[idx - 1], &self.points[idx]);
        let t = (s - lo.s) / (hi.s - lo.s);
        pick(lo) * (1.0 - t) + pick(hi) * t
    }

    pub fn a(&self, s: f64) -> f64 {
        self.interpolate(s, |p| p.a)
    }

    pub fn b(&self, s: f64) -> f64 {
        self.interpolate(s, |p| p.b)
    }
}

/// Final-slice readout rule for SQA.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutPolicy {
    /// One uniformly chosen Trotter slice (the unbiased Gibbs reading).
    RandomSlice,
    /// Per-site sign of the sum over slices, ties broken by rng.
    MajoritySlice,
}

#[derive(Clone, Debug)]
pub struct SqaParams {
    pub n_tau: usize,
    pub sweeps: usize,
    pub beta: f64,
    pub readout: ReadoutPolicy,
    /// Sweeps spent at each schedule point before s advances.
    pub block_size: usize,
}

impl SqaParams {
    pub fn new(n_tau: usize, sweeps: usize, beta: f64) -> Self {
        SqaParams {
            n_tau,
            sweeps,
            beta,
            readout: ReadoutPolicy::RandomSlice,
            block_size: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tau < 2 {
            return Err(Error::Parameter("n_tau must be at least 2".into()));
        }
        if self.sweeps < 1 || self.block_size < 1 {
            return Err(Error::Parameter(
                "sweeps and block_size must be at least 1".into(),
            ));
        }
        if self.beta <= 0.0 {
            return Err(Error::Parameter("beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SaParams {
    pub t_init: f64,
    pub t_final: f64,
    pub sweeps: usize,
    pub restarts: usize,
}

impl SaParams {
    pub fn new(t_init: f64, t_final: f64, sweeps: usize, restarts: usize) -> Self {
        SaParams {
            t_init,
            t_final,
            sweeps,
            restarts,
        }
    }

    /// Decoding budget: 10 restarts of 10 sweeps with T_init = 4 max|J| and
    /// T_final = 0.1 min nonzero |J|.
    pub fn decoding_defaults(p: &IsingProblem) -> Self {
        let max_h = p.h().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let scale = if p.max_abs_coupling() > 0.0 {
            p.max_abs_coupling()
        } else {
            max_h.max(1.0)
        };
        let min_h = p
            .h()
            .iter()
            .filter(|&&x| x != 0.0)
            .fold(None, |acc: Option<f64>, &x| {
                Some(acc.map_or(x.abs(), |a| a.min(x.abs())))
            });
        let floor = p.min_nonzero_abs_coupling().or(min_h).unwrap_or(1.0);
        let t_init = 4.0 * scale;
        let t_final = (0.1 * floor).min(t_init);
        SaParams {
            t_init,
            t_final,
            sweeps: 10,
            restarts: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_init >= self.t_final) {
            return Err(Error::Parameter("need T_init >= T_final > 0".into()));
        }
        if self.sweeps < 1 || self.restarts < 1 {
            return Err(Error::Parameter(
                "sweeps and restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Configurations produced by a solver call, with their energies.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub configs: Vec<SpinConfig>,
    pub energies: Vec<f64>,
    pub best_energy: f64,
}

impl SolveResult {
    pub(crate) fn from_configs(p: &IsingProblem, configs: Vec<SpinConfig>) -> Result<Self> {
        let energies: Vec<f64> = configs
            .iter()
            .map(|c| crate::ising::energy(p, c))
            .collect::<Result<_>>()?;
        let best_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SolveResult {
            configs,
            energies,
            best_energy,
        })
    }

    /// Configs attaining the best energy within `tol`.
    pub fn best_configs(&self, tol: f64) -> impl Iterator<Item = &SpinConfig> {
        self.configs
            .iter()
            .zip(&self.energies)
            .filter(move |(_, &e)| e <= self.best_energy + tol)
            .map(|(c, _)| c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_perp_closed_form() {
        let jp = j_perp(1.0, 1.0, 2).unwrap();
        let want = 0.5 * 0.5f64.tanh().ln();
        assert!((jp.value - want).abs() < 1e-15);
        assert!((jp.value + 0.38596841645).abs() < 1e-9);
        assert!(!jp.saturated);
        assert!(jp.value < 0.0);
    }

    #[test]
    fn j_perp_limits() {
        // Large argument: tanh rounds to 1, slices decouple.
        let hot = j_perp(1e9, 1.0, 2).unwrap();
        assert_eq!(hot.value, 0.0);
        assert!(hot.saturated);
        // Small argument: clamped at the floor.
        let cold = j_perp(1e-300, 1.0, 64).unwrap();
        assert_eq!(cold.value, J_PERP_FLOOR);
        assert!(j_perp(1.0, 0.0, 2).is_err());
        assert!(j_perp(1.0, -1.0, 2).is_err());
    }

    #[test]
    fn j_perp_monotone_in_a() {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..200 {
            let a = k as f64 * 0.05;
            let v = j_perp(2.0, a, 64).unwrap().value;
            assert!(v > prev);
            assert!(v < 0.0);
            prev = v;
        }
    }

    #[test]
    fn schedule_interpolation() {
        let sched = AnnealSchedule::linear();
        assert_eq!(sched.a(0.0), 1.0);
        assert_eq!(sched.b(1.0), 1.0);
        assert!((sched.a(0.25) - 0.75).abs() < 1e-15);
        assert!((sched.b(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn schedule_text_and_validation() {
        let sched = AnnealSchedule::from_text("0 2.0 0\n0.5 1.0 3.0\n1 0 6.0\n").unwrap();
        assert!((sched.a(0.25) - 1.5).abs() < 1e-15);
        assert!((sched.b(0.75) - 4.5).abs() < 1e-15);
        assert!(AnnealSchedule::from_text("0 1 0\n1 0.5 1\n").is_err()); // A(1) not ~0
        assert!(AnnealSchedule::from_text("0 1 0\n0.4 2 0.5\n1 0 1\n").is_err());
        // A increases
    }
}
