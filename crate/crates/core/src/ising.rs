//! Ising problem representation: energies, gauge transformations, and the
//! frustration / coupling-range diagnostics.
//!
//! Convention: computational |0> corresponds to spin +1, so a planted
//! "all-zero" state is the all-(+1) configuration.

use std::fmt::Write as _;

use crate::topology::NodeId;
use crate::util::{fmt_f64, pairwise_sum};
use crate::{Error, Result};

/// Local fields and pair couplings over a dense vertex space.
///
/// Couplings are stored normalized (u < v), sorted, at most one entry per
/// edge. Vertices without fields or couplings are simply absent from the
/// energy. Value type; immutable by convention after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingProblem {
    n: usize,
    h: Vec<f64>,
    couplings: Vec<(NodeId, NodeId, f64)>,
}

impl IsingProblem {
    pub fn new(n: usize, h: Vec<f64>, couplings: Vec<(NodeId, NodeId, f64)>) -> Result<Self> {
        if h.len() != n {
            return Err(Error::Parameter(format!(
                "h has {} entries, expected {n}",
                h.len()
            )));
        }
        let mut cs: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(couplings.len());
        for (u, v, j) in couplings {
            if u >= n || v >= n {
                return Err(Error::Parameter(format!("coupling ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::Parameter(format!("self coupling at {u}")));
            }
            cs.push((u.min(v), u.max(v), j));
        }
        cs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        for w in cs.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::Parameter(format!(
                    "duplicate coupling ({},{})",
                    w[0].0, w[0].1
                )));
            }
        }
        Ok(IsingProblem {
            n,
            h,
            couplings: cs,
        })
    }

    pub fn zero(n: usize) -> Self {
        IsingProblem {
            n,
            h: vec![0.0; n],
            couplings: Vec::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn couplings(&self) -> &[(NodeId, NodeId, f64)] {
        &self.couplings
    }

    pub fn coupling(&self, u: NodeId, v: NodeId) -> f64 {
        let key = (u.min(v), u.max(v));
        match self
            .couplings
            .binary_search_by_key(&key, |&(a, b, _)| (a, b))
        {
            Ok(i) => self.couplings[i].2,
            Err(_) => 0.0,
        }
    }

    /// Neighbor lists (vertex, J) derived from the nonzero couplings.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v, j) in &self.couplings {
            if j != 0.0 {
                adj[u].push((v, j));
                adj[v].push((u, j));
            }
        }
        adj
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.couplings
            .iter()
            .map(|&(_, _, j)| j.abs())
            .fold(0.0, f64::max)
    }

    pub fn min_nonzero_abs_coupling(&self) -> Option<f64> {
        self.couplings
            .iter()
            .filter(|&&(_, _, j)| j != 0.0)
            .map(|&(_, _, j)| j.abs())
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.min(x))))
    }

    /// Device-range validation, |h| <= 2 and |J| <= 1. Opt-in: intermediate
    /// artifacts (un-normalized loop sums) may exceed the range legitimately.
    pub fn validate_device_range(&self) -> Result<()> {
        for (i, &hi) in self.h.iter().enumerate() {
            if hi.abs() > 2.0 + 1e-12 {
                return Err(Error::Parameter(format!(
                    "|h[{i}]| = {} exceeds 2",
                    hi.abs()
                )));
            }
        }
        for &(u, v, j) in &self.couplings {
            if j.abs() > 1.0 + 1e-12 {
                return Err(Error::Parameter(format!(
                    "|J[{u},{v}]| = {} exceeds 1",
                    j.abs()
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &hi) in self.h.iter().enumerate() {
            if hi != 0.0 {
                writeln!(out, "H {i} {}", fmt_f64(hi)).unwrap();
            }
        }
        for &(u, v, j) in &self.couplings {
            writeln!(out, "J {u} {v} {}", fmt_f64(j)).unwrap();
        }
        out
    }

    /// Parses H/J lines; `n` fixes the vertex space (isolated vertices carry
    /// no lines of their own).
    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut h = vec![0.0; n];
        let mut couplings = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "H" if toks.len() == 3 => {
                    let i: usize = parse(toks[1])?;
                    if i >= n {
                        return Err(Error::Parse(format!("H index {i} out of range")));
                    }
                    h[i] = parse(toks[2])?;
                }
                "J" if toks.len() == 4 => {
                    let u: usize = parse(toks[1])?;
                    let v: usize = parse(toks[2])?;
                    couplings.push((u, v, parse(toks[3])?));
                }
                _ => return Err(Error::Parse(format!("unrecognized problem line {line:?}"))),
            }
        }
        IsingProblem::new(n, h, couplings)
    }
}

fn parse<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad token {tok:?}")))
}

/// Spin configuration, one value in {+1, -1} per vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Parameter("spins must be +1 or -1".into()));
        }
        Ok(SpinConfig { spins })
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfig { spins: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn get(&self, v: NodeId) -> i8 {
        self.spins[v]
    }

    pub fn set(&mut self, v: NodeId, s: i8) {
        debug_assert!(s == 1 || s == -1);
        self.spins[v] = s;
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Configuration from the low `n` bits of `bits`; bit set means spin -1.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        SpinConfig {
            spins: (0..n)
                .map(|i| if bits >> i & 1 == 1 { -1 } else { 1 })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &s) in self.spins.iter().enumerate() {
            writeln!(out, "S {i} {s:+}").unwrap();
        }
        out
    }

    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut spins = vec![1i8; n];
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 || toks[0] != "S" {
                return Err(Error::Parse(format!("unrecognized config line {line:?}")));
            }
            let i: usize = parse(toks[1])?;
            if i >= n {
                return Err(Error::Parse(format!("S index {i} out of range")));
            }
            spins[i] = match toks[2] {
                "+1" | "1" => 1,
                "-1" => -1,
                other => return Err(Error::Parse(format!("bad spin value {other:?}"))),
            };
        }
        SpinConfig::new(spins)
    }
}

/// Per-vertex signs of a gauge transformation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaugeVector {
    signs: Vec<i8>,
}

impl GaugeVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Parameter("gauge signs must be +1 or -1".into()));
        }
        Ok(GaugeVector { signs })
    }

    pub fn identity(n: usize) -> Self {
        GaugeVector { signs: vec![1; n] }
    }

    pub fn random<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        GaugeVector {
            signs: (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn get(&self, v: NodeId) -> i8 {
        self.signs[v]
    }
}

/// Classical Ising energy sum_i h_i s_i + sum_(i,j) J_ij s_i s_j.
pub fn energy(p: &IsingProblem, s: &SpinConfig) -> Result<f64> {
    if s.len() != p.vertex_count() {
        return Err(Error::ContractViolation(format!(
            "config covers {} vertices, problem has {}",
            s.len(),
            p.vertex_count()
        )));
    }
    let n_terms = p.h.len() + p.couplings.len();
    if n_terms <= 10_000 {
        let mut e = 0.0;
        for (i, &hi) in p.h.iter().enumerate() {
            e += hi * f64::from(s.get(i));
        }
        for &(u, v, j) in &p.couplings {
            e += j * f64::from(s.get(u)) * f64::from(s.get(v));
        }
        Ok(e)
    } else {
        let mut terms = Vec::with_capacity(n_terms);
        for (i, &hi) in p.h.iter().enumerate() {
            terms.push(hi * f64::from(s.get(i)));
        }
        for &(u, v, j) in &p.couplings {
            terms.push(j * f64::from(s.get(u)) * f64::from(s.get(v)));
        }
        Ok(pairwise_sum(&terms))
    }
}

/// Gauge the problem: h_i -> g_i h_i, J_ij -> g_i g_j J_ij.
pub fn apply_gauge(p: &IsingProblem, g: &GaugeVector) -> IsingProblem {
    let h =
        p.h.iter()
            .enumerate()
            .map(|(i, &hi)| f64::from(g.get(i)) * hi)
            .collect();
    let couplings = p
        .couplings
        .iter()
        .map(|&(u, v, j)| (u, v, f64::from(g.get(u)) * f64::from(g.get(v)) * j))
        .collect();
    IsingProblem {
        n: p.n,
        h,
        couplings,
    }
}

/// Maps a configuration through the gauge, s_i -> g_i s_i. The transformation
/// is an involution, so this both gauges and ungauges.
pub fn ungauge(s: &SpinConfig, g: &GaugeVector) -> SpinConfig {
    SpinConfig {
        spins: s
            .spins
            .iter()
            .enumerate()
            .map(|(i, &si)| g.get(i) * si)
            .collect(),
    }
}

/// Fraction of nonzero couplings violated by the planted configuration.
pub fn frustration_fraction(p: &IsingProblem, planted: &SpinConfig) -> Result<f64> {
    let mut nonzero = 0usize;
    let mut violated = 0usize;
    for &(u, v, j) in &p.couplings {
        if j != 0.0 {
            nonzero += 1;
            if j * f64::from(planted.get(u)) * f64::from(planted.get(v)) > 0.0 {
                violated += 1;
            }
        }
    }
    if nonzero == 0 {
        return Err(Error::UndefinedMetric("no nonzero couplings".into()));
    }
    Ok(violated as f64 / nonzero as f64)
}

/// Smallest nonzero |J| after scaling the largest to 1.
pub fn inverse_range(p: &IsingProblem) -> Result<f64> {
    let max = p.max_abs_coupling();
    let min = p
        .min_nonzero_abs_coupling()
        .ok_or_else(|| Error::UndefinedMetric("no nonzero couplings".into()))?;
    Ok(min / max)
}

/// Rescales all fields and couplings so the largest |J| equals 1. The
/// configuration energy ordering is unchanged.
pub fn normalize_couplings(p: &IsingProblem) -> Result<IsingProblem> {
    let max = p.max_abs_coupling();
    if max == 0.0 {
        return Err(Error::UndefinedMetric("no nonzero couplings".into()));
    }
    let h = p.h.iter().map(|&hi| hi / max).collect();
    let couplings = p
        .couplings
        .iter()
        .map(|&(u, v, j)| (u, v, j / max))
        .collect();
    Ok(IsingProblem {
        n: p.n,
        h,
        couplings,
    })
}
