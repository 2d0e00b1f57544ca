//! Planted frustrated-loop instance families: unweighted, weighted, and
//! deformed-embeddable, all with known reference energies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::ising::{energy, IsingProblem, SpinConfig};
use crate::solvers::{brute_force, sa_run, SaParams, BRUTE_FORCE_LIMIT};
use crate::topology::{Graph, LogicalGraph, NodeId};
use crate::util::fmt_f64;
use crate::{Error, Result};

/// Per-loop retry budget for the self-avoiding-walk sampler.
const LOOP_RETRY_BUDGET: usize = 1000;

/// A simple cycle carrying one antiferromagnetic (+1) coupling; all other
/// edges are ferromagnetic (-1) before weighting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    vertices: Vec<NodeId>,
    af_edge: usize,
}

impl Loop {
    pub fn new(vertices: Vec<NodeId>, af_edge: usize) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Parameter("loop needs at least 3 vertices".into()));
        }
        if af_edge >= vertices.len() {
            return Err(Error::Parameter("af_edge index out of range".into()));
        }
        let mut seen = vertices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != vertices.len() {
            return Err(Error::Parameter("loop vertices must be distinct".into()));
        }
        Ok(Loop { vertices, af_edge })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[NodeId] {
        &self.vertices
    }

    pub fn af_edge(&self) -> usize {
        self.af_edge
    }

    /// Edge k joins vertices k and k+1 (cyclically); the AF edge carries +1.
    pub fn edge_couplings(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        let len = self.vertices.len();
        (0..len).map(move |k| {
            let u = self.vertices[k];
            let v = self.vertices[(k + 1) % len];
            let j = if k == self.af_edge { 1.0 } else { -1.0 };
            (u.min(v), u.max(v), j)
        })
    }

    /// Ground-state energy of the loop alone at unit weight: -(L - 2).
    pub fn ground_energy(&self) -> f64 {
        -((self.len() - 2) as f64)
    }
}

/// Distribution over loop lengths. The default is an even split over {4, 6};
/// hosts whose girth excludes short cycles (the embeddable 2LG subgraph has
/// girth 8) take explicit longer lengths.
#[derive(Clone, Debug)]
pub struct LengthMix {
    choices: Vec<(usize, f64)>,
}

impl LengthMix {
    /// Lengths 4 and 6; `p4` is the probability of a 4-loop.
    pub fn four_six(p4: f64) -> Self {
        LengthMix {
            choices: vec![(4, p4), (6, 1.0 - p4)],
        }
    }

    pub fn single(length: usize) -> Self {
        LengthMix {
            choices: vec![(length, 1.0)],
        }
    }

    pub fn uniform(lengths: &[usize]) -> Self {
        let p = 1.0 / lengths.len() as f64;
        LengthMix {
            choices: lengths.iter().map(|&l| (l, p)).collect(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total: f64 = self.choices.iter().map(|&(_, p)| p).sum();
        let mut x = rng.random::<f64>() * total;
        for &(len, p) in &self.choices {
            if x < p {
                return len;
            }
            x -= p;
        }
        self.choices.last().map(|&(len, _)| len).unwrap_or(4)
    }
}

impl Default for LengthMix {
    fn default() -> Self {
        LengthMix::four_six(0.5)
    }
}

/// A planted-solution problem instance, its constructing loops and weights.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub problem: IsingProblem,
    pub planted: SpinConfig,
    pub loops: Vec<Loop>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub reference_energy: f64,
    pub deformed: bool,
}

impl PlantedInstance {
    /// Pre-normalization max |J| implied by the stored loops and weights.
    pub fn scale(&self) -> f64 {
        let mut sums: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for (lp, &w) in self.loops.iter().zip(&self.weights) {
            for (u, v, j) in lp.edge_couplings() {
                *sums.entry((u, v)).or_insert(0.0) += w * j;
            }
        }
        sums.values().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn to_text(&self) -> String {
        let mut out = self.problem.to_text();
        for (lp, &w) in self.loops.iter().zip(&self.weights) {
            write!(out, "LOOP").unwrap();
            for &v in lp.vertices() {
                write!(out, " {v}").unwrap();
            }
            writeln!(out, " {} {}", lp.af_edge(), fmt_f64(w)).unwrap();
        }
        writeln!(out, "ALPHA {}", fmt_f64(self.alpha)).unwrap();
        writeln!(out, "REFENERGY {}", fmt_f64(self.reference_energy)).unwrap();
        writeln!(out, "DEFORMED {}", i32::from(self.deformed)).unwrap();
        out
    }

    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut problem_lines = String::new();
        let mut loops = Vec::new();
        let mut weights = Vec::new();
        let mut alpha = None;
        let mut reference_energy = None;
        let mut deformed = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "H" | "J" => {
                    problem_lines.push_str(line);
                    problem_lines.push('\n');
                }
                "LOOP" => {
                    if toks.len() < 4 {
                        return Err(Error::Parse("LOOP line truncated".into()));
                    }
                    let verts: Vec<NodeId> = toks[1..toks.len() - 2]
                        .iter()
                        .map(|t| {
                            t.parse()
                                .map_err(|_| Error::Parse(format!("bad vertex {t:?}")))
                        })
                        .collect::<Result<_>>()?;
                    let af: usize = toks[toks.len() - 2]
                        .parse()
                        .map_err(|_| Error::Parse("bad af index".into()))?;
                    let w: f64 = toks[toks.len() - 1]
                        .parse()
                        .map_err(|_| Error::Parse("bad loop weight".into()))?;
                    loops.push(Loop::new(verts, af)?);
                    weights.push(w);
                }
                "ALPHA" if toks.len() == 2 => {
                    alpha = Some(
                        toks[1]
                            .parse()
                            .map_err(|_| Error::Parse("bad ALPHA".into()))?,
                    );
                }
                "REFENERGY" if toks.len() == 2 => {
                    reference_energy = Some(
                        toks[1]
                            .parse()
                            .map_err(|_| Error::Parse("bad REFENERGY".into()))?,
                    );
                }
                "DEFORMED" if toks.len() == 2 => {
                    deformed = toks[1] == "1";
                }
                _ => return Err(Error::Parse(format!("unrecognized instance line {line:?}"))),
            }
        }
        let problem = IsingProblem::from_text(n, &problem_lines)?;
        Ok(PlantedInstance {
            problem,
            planted: SpinConfig::all_up(n),
            loops,
            weights,
            alpha: alpha.ok_or_else(|| Error::Parse("missing ALPHA".into()))?,
            reference_energy: reference_energy
                .ok_or_else(|| Error::Parse("missing REFENERGY".into()))?,
            deformed,
        })
    }
}

/// Samples a random simple cycle of the requested length via a self-avoiding
/// walk from a uniform start vertex, with a uniformly random AF edge.
pub fn sample_loop<R: Rng>(g: &Graph, length: usize, rng: &mut R) -> Result<Loop> {
    if length < 3 {
        return Err(Error::Parameter("loop length must be at least 3".into()));
    }
    let starts: Vec<NodeId> = g.active_vertices().collect();
    if starts.is_empty() {
        return Err(Error::GenerationFailure(
            "graph has no active vertices".into(),
        ));
    }
    'retry: for _ in 0..LOOP_RETRY_BUDGET {
        let start = starts[rng.random_range(0..starts.len())];
        let mut path = Vec::with_capacity(length);
        path.push(start);
        for _ in 1..length {
            let here = *path.last().unwrap();
            let options: Vec<NodeId> = g
                .neighbors(here)
                .iter()
                .copied()
                .filter(|v| !path.contains(v))
                .collect();
            if options.is_empty() {
                continue 'retry;
            }
            path.push(options[rng.random_range(0..options.len())]);
        }
        if g.has_edge(*path.last().unwrap(), start) {
            let af = rng.random_range(0..length);
            return Ok(Loop::new(path, af)?);
        }
    }
    Err(Error::GenerationFailure(format!(
        "no {length}-cycle found within {LOOP_RETRY_BUDGET} attempts"
    )))
}

/// Sums round(alpha * |V|) frustrated loops into a planted instance on the
/// active vertices of `g`, then normalizes so max |J| = 1.
///
/// A loop whose addition would cancel an existing nonzero coupling to exactly
/// zero is rejected and resampled, keeping the term-wise ground-state argument
/// intact edge by edge.
pub fn generate_planted<R: Rng>(
    g: &Graph,
    alpha: f64,
    mix: LengthMix,
    rng: &mut R,
) -> Result<PlantedInstance> {
    let n_active = g.active_count();
    let n_loops = (alpha * n_active as f64).round() as usize;
    if alpha <= 0.0 || n_loops == 0 {
        return Err(Error::Parameter(format!("alpha = {alpha} yields no loops")));
    }
    let mut sums: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut loops: Vec<Loop> = Vec::with_capacity(n_loops);
    while loops.len() < n_loops {
        let mut placed = false;
        for _ in 0..LOOP_RETRY_BUDGET {
            let lp = sample_loop(g, mix.draw(rng), rng)?;
            let cancels = lp.edge_couplings().any(|(u, v, j)| {
                let existing = sums.get(&(u, v)).copied().unwrap_or(0.0);
                existing != 0.0 && existing + j == 0.0
            });
            if cancels {
                continue;
            }
            for (u, v, j) in lp.edge_couplings() {
                *sums.entry((u, v)).or_insert(0.0) += j;
            }
            loops.push(lp);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::GenerationFailure(
                "resample budget exhausted avoiding coupling cancellations".into(),
            ));
        }
    }
    assemble(g, loops, vec![1.0; n_loops], n_active)
}

/// Reweights the loops of `base` by the integer part of each loop's mean
/// x-coordinate, shifted to start at 1, and rebuilds the couplings.
pub fn generate_weighted(lg: &LogicalGraph, base: &PlantedInstance) -> Result<PlantedInstance> {
    if base.deformed {
        return Err(Error::ContractViolation(
            "cannot reweight a deformed instance".into(),
        ));
    }
    let weights: Vec<f64> = base
        .loops
        .iter()
        .map(|lp| {
            let sum: usize = lp.vertices().iter().map(|&v| lg.coords(v).0).sum();
            let mean_x = (sum as f64 / lp.len() as f64).floor();
            mean_x + 1.0
        })
        .collect();
    assemble(
        lg.graph(),
        base.loops.clone(),
        weights,
        lg.graph().active_count(),
    )
}

fn assemble(
    g: &Graph,
    loops: Vec<Loop>,
    weights: Vec<f64>,
    n_active: usize,
) -> Result<PlantedInstance> {
    for lp in &loops {
        for (u, v, _) in lp.edge_couplings() {
            if !g.has_edge(u, v) {
                return Err(Error::Parameter(format!(
                    "loop edge ({u},{v}) not in host graph"
                )));
            }
        }
    }
    let mut sums: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for (lp, &w) in loops.iter().zip(&weights) {
        for (u, v, j) in lp.edge_couplings() {
            *sums.entry((u, v)).or_insert(0.0) += w * j;
        }
    }
    let scale = sums.values().fold(0.0f64, |m, &x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::GenerationFailure("all couplings cancelled".into()));
    }
    let n = g.vertex_count();
    let couplings: Vec<(NodeId, NodeId, f64)> =
        sums.iter().map(|(&(u, v), &j)| (u, v, j / scale)).collect();
    let problem = IsingProblem::new(n, vec![0.0; n], couplings)?;
    let reference_energy = loops
        .iter()
        .zip(&weights)
        .map(|(lp, &w)| w * lp.ground_energy())
        .sum::<f64>()
        / scale;
    let alpha = loops.len() as f64 / n_active as f64;
    Ok(PlantedInstance {
        problem,
        planted: SpinConfig::all_up(n),
        loops,
        weights,
        alpha,
        reference_energy,
        deformed: false,
    })
}

/// Shift-and-compress deformation over a random vertex subset of size
/// `picked_count`: couplings crossing the subset boundary shrink to J/3,
/// couplings fully outside map to (2 sign J + J)/3, couplings inside are
/// unchanged. The reference energy is recomputed exactly where brute force is
/// feasible, otherwise by a generous simulated-annealing search.
pub fn deform_embeddable<R: Rng>(
    g: &Graph,
    base: &PlantedInstance,
    picked_count: usize,
    rng: &mut R,
) -> Result<PlantedInstance> {
    let active: Vec<NodeId> = g.active_vertices().collect();
    if picked_count > active.len() {
        return Err(Error::Parameter(format!(
            "picked_count {picked_count} exceeds {} usable vertices",
            active.len()
        )));
    }
    // Uniform subset without replacement.
    let mut pool = active;
    let mut picked = vec![false; g.vertex_count()];
    for _ in 0..picked_count {
        let k = rng.random_range(0..pool.len());
        picked[pool.swap_remove(k)] = true;
    }
    let couplings: Vec<(NodeId, NodeId, f64)> = base
        .problem
        .couplings()
        .iter()
        .map(|&(u, v, j)| {
            let inside = usize::from(picked[u]) + usize::from(picked[v]);
            let j2 = match inside {
                2 => j,
                1 => j / 3.0,
                _ => (2.0 * j.signum() + j) / 3.0,
            };
            (u, v, j2)
        })
        .collect();
    let problem = IsingProblem::new(g.vertex_count(), vec![0.0; g.vertex_count()], couplings)?;
    let reference_energy = exact_or_heuristic_minimum(&problem, g, rng)?;
    Ok(PlantedInstance {
        problem,
        planted: base.planted.clone(),
        loops: base.loops.clone(),
        weights: base.weights.clone(),
        alpha: base.alpha,
        reference_energy,
        deformed: true,
    })
}

fn exact_or_heuristic_minimum<R: Rng>(p: &IsingProblem, g: &Graph, rng: &mut R) -> Result<f64> {
    if g.active_count() <= BRUTE_FORCE_LIMIT && p.vertex_count() <= BRUTE_FORCE_LIMIT {
        return Ok(brute_force(p)?.best_energy);
    }
    // Desk-scale stand-in for an exact solver on large hosts.
    let params = SaParams::new(2.0, 0.01, 2000, 200);
    let result = sa_run(p, &params, rng)?;
    let planted_e = energy(p, &SpinConfig::all_up(p.vertex_count()))?;
    Ok(result.best_energy.min(planted_e))
}

/// Self-contained instance file: host graph lines followed by the problem
/// and loop trailer lines.
pub fn instance_file_text(lg: &LogicalGraph, inst: &PlantedInstance) -> String {
    format!("{}{}", lg.to_text(), inst.to_text())
}

/// Splits a bundled instance file back into its host graph and instance.
pub fn parse_instance_file(text: &str) -> Result<(LogicalGraph, PlantedInstance)> {
    let mut graph_lines = String::new();
    let mut rest = String::new();
    for line in text.lines() {
        let first = line.trim().split_whitespace().next().unwrap_or("");
        match first {
            "GRAPH" | "E" | "X" => {
                graph_lines.push_str(line);
                graph_lines.push('\n');
            }
            "" => {}
            _ => {
                rest.push_str(line);
                rest.push('\n');
            }
        }
    }
    let lg = LogicalGraph::from_text(&graph_lines)?;
    let inst = PlantedInstance::from_text(lg.vertex_count(), &rest)?;
    Ok((lg, inst))
}

/// Reference energy of a non-deformed instance from the loop decomposition:
/// sum_i w_i (-(L_i - 2)) / max pre-normalization |J|.
pub fn planted_energy(inst: &PlantedInstance) -> Result<f64> {
    if inst.deformed {
        return Err(Error::ContractViolation(
            "planted_energy is undefined for deformed instances; use reference_energy".into(),
        ));
    }
    let scale = inst.scale();
    if scale == 0.0 {
        return Err(Error::ContractViolation("instance has no loops".into()));
    }
    Ok(inst
        .loops
        .iter()
        .zip(&inst.weights)
        .map(|(lp, &w)| w * lp.ground_energy())
        .sum::<f64>()
        / scale)
}
