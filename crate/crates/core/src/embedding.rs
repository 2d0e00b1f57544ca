//! Direct, minor-embedding (ME), and QAC-ME maps from two-level-grid logical
//! problems onto Chimera hardware, penalty assignment, control-noise
//! injection, and concatenated-code parameters.
//!
//! Cell layout for logical vertex (x, y, z), hosted in Chimera cell (y, x):
//!
//! - Direct: the single qubit at position 0 of half z.
//! - ME: the pair {left z, right z}, tied by one intra-cell penalty coupler.
//!   In-plane logical edges use one inter-cell coupler; the vertical edge uses
//!   the two cross couplers (L0,R1) and (L1,R0).
//! - QAC-ME (square code): the four qubits at positions {2z, 2z+1} of both
//!   halves. Penalties are the four in-group couplers (the stabilizer square
//!   L-R-L'-R'); each logical coupling is realized by two physical couplers
//!   at full strength (boost 2) and each logical field by two physical
//!   fields.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ising::IsingProblem;
use crate::topology::{direct_embedding_qubit, HardwareGraph, LogicalGraph, NodeId};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Direct,
    Me,
    QacMe,
}

impl Scheme {
    pub fn group_size(self) -> usize {
        match self {
            Scheme::Direct => 1,
            Scheme::Me => 2,
            Scheme::QacMe => 4,
        }
    }

    /// Energy boost of the encoded problem relative to the logical one.
    pub fn boost(self) -> f64 {
        match self {
            Scheme::Direct | Scheme::Me => 1.0,
            Scheme::QacMe => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Me => "me",
            Scheme::QacMe => "qacme",
        }
    }
}

/// Logical vertex -> ordered physical qubits, disjoint across groups.
#[derive(Clone, Debug)]
pub struct GroupMap {
    pub scheme: Scheme,
    groups: Vec<(NodeId, Vec<NodeId>)>,
}

impl GroupMap {
    fn new(scheme: Scheme, groups: Vec<(NodeId, Vec<NodeId>)>) -> Result<Self> {
        let mut all: Vec<NodeId> = groups.iter().flat_map(|(_, g)| g.iter().copied()).collect();
        let before = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != before {
            return Err(Error::EmbeddingInfeasible("groups are not disjoint".into()));
        }
        if groups.iter().any(|(_, g)| g.len() != scheme.group_size()) {
            return Err(Error::EmbeddingInfeasible(
                "group size does not match scheme".into(),
            ));
        }
        Ok(GroupMap { scheme, groups })
    }

    /// (logical vertex, physical qubits), sorted by logical vertex.
    pub fn groups(&self) -> &[(NodeId, Vec<NodeId>)] {
        &self.groups
    }

    pub fn group_of(&self, logical: NodeId) -> Option<&[NodeId]> {
        self.groups
            .binary_search_by_key(&logical, |(l, _)| *l)
            .ok()
            .map(|i| self.groups[i].1.as_slice())
    }

    pub fn logical_vertices(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.groups.iter().map(|(l, _)| *l)
    }
}

/// A physical Ising problem together with its group map and penalty edges.
///
/// `physical` holds the problem couplings only; penalties are kept separate
/// until [`assign_penalties`] fixes their strengths. [`solver_problem`]
/// merges the two for the annealer.
#[derive(Clone, Debug)]
pub struct EmbeddedProblem {
    pub physical: IsingProblem,
    pub map: GroupMap,
    pub penalty_edges: Vec<(NodeId, NodeId)>,
    pub penalty_strengths: Vec<f64>,
    pub logical: IsingProblem,
}

impl EmbeddedProblem {
    /// Physical problem with penalty couplings folded in.
    pub fn solver_problem(&self) -> Result<IsingProblem> {
        let mut couplings: Vec<(NodeId, NodeId, f64)> = self.physical.couplings().to_vec();
        if self.penalty_strengths.len() != self.penalty_edges.len()
            && !self.penalty_edges.is_empty()
        {
            return Err(Error::ContractViolation(
                "penalty strengths not assigned; call assign_penalties first".into(),
            ));
        }
        for (&(u, v), &w) in self.penalty_edges.iter().zip(&self.penalty_strengths) {
            couplings.push((u, v, w));
        }
        IsingProblem::new(
            self.physical.vertex_count(),
            self.physical.h().to_vec(),
            couplings,
        )
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = self.physical.to_text();
        for (l, qs) in self.map.groups() {
            write!(out, "GROUP {l}").unwrap();
            for q in qs {
                write!(out, " {q}").unwrap();
            }
            writeln!(out).unwrap();
        }
        for (i, &(u, v)) in self.penalty_edges.iter().enumerate() {
            let w = self.penalty_strengths.get(i).copied().unwrap_or(0.0);
            writeln!(out, "PEN {u} {v} {}", crate::util::fmt_f64(w)).unwrap();
        }
        out
    }

    /// Rebuilds an embedded problem from its serialized form. The logical
    /// problem is reconstructed through the coupling sum rule (sum of the
    /// physical realizations divided by the scheme boost), which is exact for
    /// the layouts this crate produces.
    pub fn from_text(n_phys: usize, text: &str) -> Result<Self> {
        let mut problem_lines = String::new();
        let mut groups: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        let mut penalty_edges = Vec::new();
        let mut penalty_strengths = Vec::new();
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
                "GROUP" => {
                    if toks.len() < 3 {
                        return Err(Error::Parse("GROUP line truncated".into()));
                    }
                    let nums: Vec<NodeId> = toks[1..]
                        .iter()
                        .map(|t| {
                            t.parse()
                                .map_err(|_| Error::Parse(format!("bad GROUP token {t:?}")))
                        })
                        .collect::<Result<_>>()?;
                    groups.push((nums[0], nums[1..].to_vec()));
                }
                "PEN" => {
                    if toks.len() != 4 {
                        return Err(Error::Parse("PEN line needs i j value".into()));
                    }
                    let u: NodeId = toks[1]
                        .parse()
                        .map_err(|_| Error::Parse("bad PEN index".into()))?;
                    let v: NodeId = toks[2]
                        .parse()
                        .map_err(|_| Error::Parse("bad PEN index".into()))?;
                    let w: f64 = toks[3]
                        .parse()
                        .map_err(|_| Error::Parse("bad PEN value".into()))?;
                    penalty_edges.push((u.min(v), u.max(v)));
                    penalty_strengths.push(w);
                }
                "SCHEME" => {}
                _ => return Err(Error::Parse(format!("unrecognized embedded line {line:?}"))),
            }
        }
        let physical = IsingProblem::from_text(n_phys, &problem_lines)?;
        groups.sort_by_key(|(l, _)| *l);
        let size = groups
            .first()
            .map(|(_, g)| g.len())
            .ok_or_else(|| Error::Parse("embedded file has no GROUP lines".into()))?;
        let scheme = match size {
            1 => Scheme::Direct,
            2 => Scheme::Me,
            4 => Scheme::QacMe,
            other => return Err(Error::Parse(format!("unsupported group size {other}"))),
        };
        let map = GroupMap::new(scheme, groups)?;

        // Logical reconstruction via the sum rules.
        let n_logical = map.logical_vertices().max().map_or(0, |m| m + 1);
        let mut owner = std::collections::HashMap::new();
        for (l, qs) in map.groups() {
            for &q in qs {
                owner.insert(q, *l);
            }
        }
        let boost = scheme.boost();
        let mut h = vec![0.0; n_logical];
        for (q, &hq) in physical.h().iter().enumerate() {
            if hq != 0.0 {
                let l = owner
                    .get(&q)
                    .ok_or_else(|| Error::Parse(format!("field on qubit {q} outside any group")))?;
                h[*l] += hq / boost;
            }
        }
        let mut sums: std::collections::BTreeMap<(NodeId, NodeId), f64> =
            std::collections::BTreeMap::new();
        for &(a, b, j) in physical.couplings() {
            let (la, lb) = match (owner.get(&a), owner.get(&b)) {
                (Some(&la), Some(&lb)) if la != lb => (la, lb),
                (Some(_), Some(_)) => {
                    return Err(Error::Parse(format!(
                        "intra-group problem coupling ({a},{b}) in embedded file"
                    )))
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "coupling ({a},{b}) touches a qubit outside any group"
                    )))
                }
            };
            *sums.entry((la.min(lb), la.max(lb))).or_insert(0.0) += j / boost;
        }
        let couplings: Vec<(NodeId, NodeId, f64)> =
            sums.into_iter().map(|((u, v), j)| (u, v, j)).collect();
        let logical = IsingProblem::new(n_logical, h, couplings)?;
        Ok(EmbeddedProblem {
            physical,
            map,
            penalty_edges,
            penalty_strengths,
            logical,
        })
    }
}

/// Uniform: every penalty edge gets -gamma. Nonuniform: the penalty edges of
/// group i get -gamma times the mean |J| of the logical couplings at i.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "gamma")]
pub enum PenaltyStrategy {
    Uniform(f64),
    Nonuniform(f64),
}

impl PenaltyStrategy {
    pub fn gamma(self) -> f64 {
        match self {
            PenaltyStrategy::Uniform(g) | PenaltyStrategy::Nonuniform(g) => g,
        }
    }
}

/// Gaussian control-error model: N(0, chi^2) on every programmed value.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    pub chi: f64,
}

impl NoiseModel {
    pub fn new(chi: f64) -> Result<Self> {
        if chi < 0.0 {
            return Err(Error::Parameter("chi must be non-negative".into()));
        }
        Ok(NoiseModel { chi })
    }
}

fn check_2lg_fits(lg: &LogicalGraph, hw: &HardwareGraph, scheme: Scheme) -> Result<()> {
    if hw.rows != hw.cols || lg.side != hw.rows {
        return Err(Error::EmbeddingInfeasible(format!(
            "2LG({}) does not fit a {}x{} Chimera grid",
            lg.side, hw.rows, hw.cols
        )));
    }
    let need = match scheme {
        Scheme::Direct => 1,
        Scheme::Me => 2,
        Scheme::QacMe => 4,
    };
    if hw.half < need {
        return Err(Error::EmbeddingInfeasible(format!(
            "{} needs half-cell size >= {need}, hardware has {}",
            scheme.name(),
            hw.half
        )));
    }
    Ok(())
}

/// Physical qubits hosting logical vertex `v` under `scheme`.
pub fn scheme_group(
    lg: &LogicalGraph,
    hw: &HardwareGraph,
    scheme: Scheme,
    v: NodeId,
) -> Vec<NodeId> {
    let (x, y, z) = lg.coords(v);
    match scheme {
        Scheme::Direct => vec![direct_embedding_qubit(hw, x, y, z)],
        Scheme::Me => vec![hw.qubit(y, x, 0, z), hw.qubit(y, x, 1, z)],
        Scheme::QacMe => vec![
            hw.qubit(y, x, 0, 2 * z),
            hw.qubit(y, x, 0, 2 * z + 1),
            hw.qubit(y, x, 1, 2 * z),
            hw.qubit(y, x, 1, 2 * z + 1),
        ],
    }
}

/// Logical vertices whose whole group is alive on the hardware. Dead qubits
/// exclude the entire group; instance generation is restricted accordingly.
pub fn usable_logical_vertices(
    lg: &LogicalGraph,
    hw: &HardwareGraph,
    scheme: Scheme,
) -> Vec<NodeId> {
    (0..lg.vertex_count())
        .filter(|&v| {
            lg.graph().is_active(v)
                && scheme_group(lg, hw, scheme, v)
                    .iter()
                    .all(|&q| hw.graph().is_active(q))
        })
        .collect()
}

/// Logical vertices touched by a field or a nonzero coupling.
fn active_logical(logical: &IsingProblem) -> Vec<NodeId> {
    let mut used = vec![false; logical.vertex_count()];
    for (i, &hi) in logical.h().iter().enumerate() {
        if hi != 0.0 {
            used[i] = true;
        }
    }
    for &(u, v, j) in logical.couplings() {
        if j != 0.0 {
            used[u] = true;
            used[v] = true;
        }
    }
    (0..logical.vertex_count()).filter(|&v| used[v]).collect()
}

struct EdgeAccumulator {
    couplings: std::collections::BTreeMap<(NodeId, NodeId), f64>,
}

impl EdgeAccumulator {
    fn new() -> Self {
        EdgeAccumulator {
            couplings: std::collections::BTreeMap::new(),
        }
    }

    fn add(&mut self, u: NodeId, v: NodeId, j: f64) {
        *self.couplings.entry((u.min(v), u.max(v))).or_insert(0.0) += j;
    }

    fn into_vec(self) -> Vec<(NodeId, NodeId, f64)> {
        self.couplings
            .into_iter()
            .map(|((u, v), j)| (u, v, j))
            .collect()
    }
}

fn require_coupler(hw: &HardwareGraph, u: NodeId, v: NodeId, what: &str) -> Result<()> {
    if !hw.graph().has_edge(u, v) {
        return Err(Error::EmbeddingInfeasible(format!(
            "{what}: physical coupler ({u},{v}) unavailable"
        )));
    }
    Ok(())
}

/// One physical qubit per logical qubit; no penalties; couplings copied
/// edge-for-edge. The logical graph must be the embeddable subgraph.
pub fn embed_direct(
    logical: &IsingProblem,
    lg: &LogicalGraph,
    hw: &HardwareGraph,
) -> Result<EmbeddedProblem> {
    check_2lg_fits(lg, hw, Scheme::Direct)?;
    let n_phys = hw.vertex_count();
    let mut h = vec![0.0; n_phys];
    let mut acc = EdgeAccumulator::new();
    let used = active_logical(logical);
    let mut groups = Vec::with_capacity(used.len());
    for &v in &used {
        let group = scheme_group(lg, hw, Scheme::Direct, v);
        let q = group[0];
        if !hw.graph().is_active(q) {
            return Err(Error::EmbeddingInfeasible(format!(
                "qubit {q} for vertex {v} is dead"
            )));
        }
        h[q] = logical.h()[v];
        groups.push((v, group));
    }
    for &(u, v, j) in logical.couplings() {
        if j == 0.0 {
            continue;
        }
        let (xu, yu, zu) = lg.coords(u);
        let (xv, yv, zv) = lg.coords(v);
        let qu = direct_embedding_qubit(hw, xu, yu, zu);
        let qv = direct_embedding_qubit(hw, xv, yv, zv);
        require_coupler(hw, qu, qv, "direct embedding")?;
        acc.add(qu, qv, j);
    }
    let physical = IsingProblem::new(n_phys, h, acc.into_vec())?;
    Ok(EmbeddedProblem {
        physical,
        map: GroupMap::new(Scheme::Direct, groups)?,
        penalty_edges: Vec::new(),
        penalty_strengths: Vec::new(),
        logical: logical.clone(),
    })
}

/// Two-qubit groups with one intra-cell penalty coupler each. In-plane
/// logical couplings map to one physical coupler at full strength; vertical
/// couplings split evenly over the two available cross couplers.
pub fn embed_me(
    logical: &IsingProblem,
    lg: &LogicalGraph,
    hw: &HardwareGraph,
) -> Result<EmbeddedProblem> {
    embed_me_with(logical, lg, hw, 0.5)
}

/// As [`embed_me`] with an explicit split policy for doubly-realized
/// (vertical) couplings: the first cross coupler carries `split * J`, the
/// second the remainder. The sum rule holds for any split.
pub fn embed_me_with(
    logical: &IsingProblem,
    lg: &LogicalGraph,
    hw: &HardwareGraph,
    split: f64,
) -> Result<EmbeddedProblem> {
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::Parameter(format!(
            "split fraction {split} outside [0, 1]"
        )));
    }
    check_2lg_fits(lg, hw, Scheme::Me)?;
    let n_phys = hw.vertex_count();
    let mut h = vec![0.0; n_phys];
    let mut acc = EdgeAccumulator::new();
    let mut penalty_edges = Vec::new();
    let used = active_logical(logical);
    let mut groups = Vec::with_capacity(used.len());
    for &v in &used {
        let group = scheme_group(lg, hw, Scheme::Me, v);
        if group.iter().any(|&q| !hw.graph().is_active(q)) {
            return Err(Error::EmbeddingInfeasible(format!(
                "group of vertex {v} has a dead qubit"
            )));
        }
        require_coupler(hw, group[0], group[1], "ME penalty")?;
        penalty_edges.push((group[0].min(group[1]), group[0].max(group[1])));
        // Both realizations of the local field are available; use the left
        // qubit so the sum rule h_logical = sum h_physical holds trivially.
        h[group[0]] = logical.h()[v];
        groups.push((v, group));
    }
    for &(u, v, j) in logical.couplings() {
        if j == 0.0 {
            continue;
        }
        let (xu, yu, zu) = lg.coords(u);
        let (xv, yv, zv) = lg.coords(v);
        if zu == zv {
            let z = zu;
            // In-plane: y-edges couple left qubits, x-edges right qubits.
            let (qu, qv) = if xu == xv {
                (hw.qubit(yu, xu, 0, z), hw.qubit(yv, xv, 0, z))
            } else {
                (hw.qubit(yu, xu, 1, z), hw.qubit(yv, xv, 1, z))
            };
            require_coupler(hw, qu, qv, "ME in-plane coupling")?;
            acc.add(qu, qv, j);
        } else {
            // Vertical: two cross couplers inside the cell share the value.
            let (x, y) = (xu, yu);
            let a = (hw.qubit(y, x, 0, 0), hw.qubit(y, x, 1, 1));
            let b = (hw.qubit(y, x, 0, 1), hw.qubit(y, x, 1, 0));
            require_coupler(hw, a.0, a.1, "ME vertical coupling")?;
            require_coupler(hw, b.0, b.1, "ME vertical coupling")?;
            acc.add(a.0, a.1, split * j);
            acc.add(b.0, b.1, (1.0 - split) * j);
        }
    }
    let physical = IsingProblem::new(n_phys, h, acc.into_vec())?;
    Ok(EmbeddedProblem {
        physical,
        map: GroupMap::new(Scheme::Me, groups)?,
        penalty_edges,
        penalty_strengths: Vec::new(),
        logical: logical.clone(),
    })
}

/// How a vertical (in-cell) logical coupling is realized in QAC-ME.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerticalCouplerMode {
    /// Two disjoint couplers at full logical J (the relative-strength-
    /// preserving choice).
    TwoFull,
    /// All eight couplers at J/4 each.
    EightQuarter,
}

pub fn embed_qacme(
    logical: &IsingProblem,
    lg: &LogicalGraph,
    hw: &HardwareGraph,
) -> Result<EmbeddedProblem> {
    embed_qacme_with(logical, lg, hw, VerticalCouplerMode::TwoFull)
}

/// Square-code QAC-ME: four-qubit groups per encoded vertex, the four-coupler
/// stabilizer square as penalties, every logical coupling realized twice at
/// full strength and every logical field placed on two qubits.
///
/// All four intra-group couplers act as penalties: with fewer, a pair flip
/// along an unpenalized diagonal leaves tie states degenerate with unbroken
/// ground states.
pub fn embed_qacme_with(
    logical: &IsingProblem,
    lg: &LogicalGraph,
    hw: &HardwareGraph,
    vertical_mode: VerticalCouplerMode,
) -> Result<EmbeddedProblem> {
    check_2lg_fits(lg, hw, Scheme::QacMe)?;
    let n_phys = hw.vertex_count();
    let mut h = vec![0.0; n_phys];
    let mut acc = EdgeAccumulator::new();
    let mut penalty_edges = Vec::new();
    let used = active_logical(logical);
    let mut groups = Vec::with_capacity(used.len());
    for &v in &used {
        // Group order: [L_a, L_a1, R_a, R_a1] with a = 2z.
        let group = scheme_group(lg, hw, Scheme::QacMe, v);
        if group.iter().any(|&q| !hw.graph().is_active(q)) {
            return Err(Error::EmbeddingInfeasible(format!(
                "group of vertex {v} has a dead qubit"
            )));
        }
        // Stabilizer square L_a - R_a - L_a1 - R_a1.
        for &(a, b) in &[
            (group[0], group[2]),
            (group[0], group[3]),
            (group[1], group[2]),
            (group[1], group[3]),
        ] {
            require_coupler(hw, a, b, "QAC-ME penalty")?;
            penalty_edges.push((a.min(b), a.max(b)));
        }
        groups.push((v, group));
    }
    let map = GroupMap::new(Scheme::QacMe, groups)?;

    for &(u, v, j) in logical.couplings() {
        if j == 0.0 {
            continue;
        }
        let (xu, yu, zu) = lg.coords(u);
        let (xv, yv, zv) = lg.coords(v);
        if zu == zv {
            let z = zu;
            let (half, wires) = if xu == xv {
                (0, [2 * z, 2 * z + 1])
            } else {
                (1, [2 * z, 2 * z + 1])
            };
            for &pos in &wires {
                let qu = hw.qubit(yu, xu, half, pos);
                let qv = hw.qubit(yv, xv, half, pos);
                require_coupler(hw, qu, qv, "QAC-ME in-plane coupling")?;
                acc.add(qu, qv, j);
            }
        } else {
            let (x, y) = (xu, yu);
            match vertical_mode {
                VerticalCouplerMode::TwoFull => {
                    // Injective pair: (L0, R2) and (L1, R3).
                    let pairs = [
                        (hw.qubit(y, x, 0, 0), hw.qubit(y, x, 1, 2)),
                        (hw.qubit(y, x, 0, 1), hw.qubit(y, x, 1, 3)),
                    ];
                    for &(a, b) in &pairs {
                        require_coupler(hw, a, b, "QAC-ME vertical coupling")?;
                        acc.add(a, b, j);
                    }
                }
                VerticalCouplerMode::EightQuarter => {
                    for &(ha, pa, hb, pb) in &[
                        (0, 0, 1, 2),
                        (0, 0, 1, 3),
                        (0, 1, 1, 2),
                        (0, 1, 1, 3),
                        (0, 2, 1, 0),
                        (0, 2, 1, 1),
                        (0, 3, 1, 0),
                        (0, 3, 1, 1),
                    ] {
                        let a = hw.qubit(y, x, ha, pa);
                        let b = hw.qubit(y, x, hb, pb);
                        require_coupler(hw, a, b, "QAC-ME vertical coupling")?;
                        acc.add(a, b, j / 4.0);
                    }
                }
            }
        }
    }

    // Field placement: the two group qubits adjacent to the most problem
    // couplers, ties broken by lowest qubit index.
    let coupler_count = {
        let mut count = vec![0usize; n_phys];
        for (&(a, b), &j) in &acc.couplings {
            if j != 0.0 {
                count[a] += 1;
                count[b] += 1;
            }
        }
        count
    };
    for &v in &used {
        let hv = logical.h()[v];
        if hv == 0.0 {
            continue;
        }
        let group = map.group_of(v).unwrap();
        let mut ranked: Vec<NodeId> = group.to_vec();
        ranked.sort_by_key(|&q| (std::cmp::Reverse(coupler_count[q]), q));
        h[ranked[0]] = hv;
        h[ranked[1]] = hv;
    }

    let physical = IsingProblem::new(n_phys, h, acc.into_vec())?;
    Ok(EmbeddedProblem {
        physical,
        map,
        penalty_edges,
        penalty_strengths: Vec::new(),
        logical: logical.clone(),
    })
}

/// Fixes the penalty strengths. Under the nonuniform strategy, a group with
/// no nonzero logical couplings gets strength 0 and is reported back.
pub fn assign_penalties(
    mut e: EmbeddedProblem,
    strat: PenaltyStrategy,
) -> Result<(EmbeddedProblem, Vec<NodeId>)> {
    if strat.gamma() <= 0.0 {
        return Err(Error::Parameter("gamma must be positive".into()));
    }
    if e.penalty_edges.is_empty() {
        return Err(Error::Parameter("embedding has no penalty edges".into()));
    }
    let mut flagged = Vec::new();
    let mut strengths = vec![0.0; e.penalty_edges.len()];
    match strat {
        PenaltyStrategy::Uniform(gamma) => {
            for s in &mut strengths {
                *s = -gamma;
            }
        }
        PenaltyStrategy::Nonuniform(gamma) => {
            // Mean |J| of logical couplings per logical vertex.
            let n = e.logical.vertex_count();
            let mut sum = vec![0.0; n];
            let mut cnt = vec![0usize; n];
            for &(u, v, j) in e.logical.couplings() {
                if j != 0.0 {
                    sum[u] += j.abs();
                    sum[v] += j.abs();
                    cnt[u] += 1;
                    cnt[v] += 1;
                }
            }
            // Penalty edges are intra-group; map each back to its group.
            let mut owner = std::collections::HashMap::new();
            for (l, qs) in e.map.groups() {
                for &q in qs {
                    owner.insert(q, *l);
                }
            }
            for (i, &(a, _)) in e.penalty_edges.iter().enumerate() {
                let l = owner[&a];
                if cnt[l] == 0 {
                    flagged.push(l);
                    strengths[i] = 0.0;
                } else {
                    strengths[i] = -gamma * sum[l] / cnt[l] as f64;
                }
            }
            flagged.sort_unstable();
            flagged.dedup();
        }
    }
    e.penalty_strengths = strengths;
    Ok((e, flagged))
}

/// Copy of the physical problem (penalties included) with independent
/// N(0, chi^2) noise added to every nonzero field and coupling.
pub fn apply_noise<R: Rng>(
    e: &EmbeddedProblem,
    nm: NoiseModel,
    rng: &mut R,
) -> Result<IsingProblem> {
    let merged = e.solver_problem()?;
    if nm.chi == 0.0 {
        return Ok(merged);
    }
    let normal = Normal::new(0.0, nm.chi)
        .map_err(|err| Error::Parameter(format!("bad noise model: {err}")))?;
    let h = merged
        .h()
        .iter()
        .map(|&hi| {
            if hi != 0.0 {
                hi + normal.sample(rng)
            } else {
                hi
            }
        })
        .collect();
    let couplings = merged
        .couplings()
        .iter()
        .map(|&(u, v, j)| (u, v, if j != 0.0 { j + normal.sample(rng) } else { j }))
        .collect();
    IsingProblem::new(merged.vertex_count(), h, couplings)
}

/// Level-r concatenated square-code parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConcatParams {
    pub physical_qubits: u64,
    pub boost: u64,
    pub distance: u64,
}

pub fn concat_params(n: u64, r: u32) -> Result<ConcatParams> {
    if n < 1 || r < 1 {
        return Err(Error::Parameter("need n >= 1 and r >= 1".into()));
    }
    let side = n.pow(r - 1);
    let qubits = 4 * side * side;
    Ok(ConcatParams {
        physical_qubits: qubits,
        boost: 2 * side,
        distance: qubits,
    })
}

/// Checks the coupling sum rule: for every logical edge, the physical
/// realizations sum to boost x logical J; ditto for fields. Also verifies
/// that penalties stay intra-group.
pub fn audit_embedding(e: &EmbeddedProblem) -> Result<()> {
    let boost = e.map.scheme.boost();
    let mut group_of = std::collections::HashMap::new();
    for (l, qs) in e.map.groups() {
        for &q in qs {
            group_of.insert(q, *l);
        }
    }
    // Sum physical couplings per logical pair.
    let mut sums: std::collections::BTreeMap<(NodeId, NodeId), f64> =
        std::collections::BTreeMap::new();
    for &(a, b, j) in e.physical.couplings() {
        let (la, lb) = match (group_of.get(&a), group_of.get(&b)) {
            (Some(&la), Some(&lb)) => (la, lb),
            _ => {
                return Err(Error::ContractViolation(format!(
                    "physical coupling ({a},{b}) touches an ungrouped qubit"
                )))
            }
        };
        if la == lb {
            return Err(Error::ContractViolation(format!(
                "problem coupling ({a},{b}) is intra-group"
            )));
        }
        *sums.entry((la.min(lb), la.max(lb))).or_insert(0.0) += j;
    }
    for &(u, v, j) in e.logical.couplings() {
        if j == 0.0 {
            continue;
        }
        let got = sums.get(&(u.min(v), u.max(v))).copied().unwrap_or(0.0);
        if (got - boost * j).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "coupling sum rule violated on logical edge ({u},{v}): {got} != {} * {j}",
                boost
            )));
        }
    }
    // Field sum rule.
    let mut h_sums = std::collections::HashMap::new();
    for (q, &hq) in e.physical.h().iter().enumerate() {
        if hq != 0.0 {
            let l = group_of
                .get(&q)
                .ok_or_else(|| Error::ContractViolation(format!("field on ungrouped qubit {q}")))?;
            *h_sums.entry(*l).or_insert(0.0) += hq;
        }
    }
    for &l in group_of.values() {
        let want = boost * e.logical.h()[l];
        let got = h_sums.get(&l).copied().unwrap_or(0.0);
        if (got - want).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "field sum rule violated on logical vertex {l}: {got} != {want}"
            )));
        }
    }
    // Penalties intra-group only.
    for &(a, b) in &e.penalty_edges {
        if group_of.get(&a) != group_of.get(&b) || group_of.get(&a).is_none() {
            return Err(Error::ContractViolation(format!(
                "penalty edge ({a},{b}) crosses groups"
            )));
        }
    }
    Ok(())
}
