//! Broken-qubit classification and the CT / MV / EM / hybrid / recursive
//! decoding strategies.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::embedding::EmbeddedProblem;
use crate::ising::{energy, IsingProblem, SpinConfig};
use crate::solvers::{sa_run, SaParams, SolveResult};
use crate::topology::{NodeId, UnionFind};
use crate::{Error, Result};

/// Connected broken-qubit domains up to this size are decoded exhaustively;
/// larger problems fall back to simulated annealing.
pub const EXHAUSTIVE_CUTOFF: usize = 20;

/// State of a logical group at readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupState {
    /// All physical spins agree.
    Unbroken(i8),
    /// Disagreement with a nonzero majority.
    PartiallyBroken(i8),
    /// Exactly balanced disagreement (even group sizes only).
    Tie,
}

impl GroupState {
    pub fn is_broken(self) -> bool {
        !matches!(self, GroupState::Unbroken(_))
    }

    pub fn is_tie(self) -> bool {
        matches!(self, GroupState::Tie)
    }
}

/// Decoder selector shared by the CLI and the experiment pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Ct,
    MvCt,
    Em,
    MvEm,
    MvEmR,
    Recursive,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Ct => "ct",
            DecoderKind::MvCt => "mv-ct",
            DecoderKind::Em => "em",
            DecoderKind::MvEm => "mv-em",
            DecoderKind::MvEmR => "mv-em-r",
            DecoderKind::Recursive => "recursive",
        }
    }
}

/// Decoded logical configuration. `spins` is defined on all logical vertices
/// that carry a group; ungrouped vertices default to +1 and never contribute
/// energy terms.
#[derive(Clone, Debug)]
pub struct DecodedConfig {
    pub spins: SpinConfig,
    pub strategy: DecoderKind,
    /// Fraction of SA restarts attaining the best decoded energy (EM modes).
    pub p_dec: Option<f64>,
}

/// Per-group classification of one readout, sorted by logical vertex.
pub type GroupStates = Vec<(NodeId, GroupState)>;

pub fn classify_groups(e: &EmbeddedProblem, readout: &SpinConfig) -> Result<GroupStates> {
    if readout.len() != e.physical.vertex_count() {
        return Err(Error::ContractViolation(format!(
            "readout covers {} qubits, hardware has {}",
            readout.len(),
            e.physical.vertex_count()
        )));
    }
    let mut states = Vec::with_capacity(e.map.groups().len());
    for (l, group) in e.map.groups() {
        let sum: i32 = group.iter().map(|&q| i32::from(readout.get(q))).sum();
        let state = if sum.unsigned_abs() as usize == group.len() {
            GroupState::Unbroken(if sum > 0 { 1 } else { -1 })
        } else if sum == 0 {
            GroupState::Tie
        } else {
            GroupState::PartiallyBroken(if sum > 0 { 1 } else { -1 })
        };
        states.push((*l, state));
    }
    Ok(states)
}

/// Local decoders: CT assigns random signs to every broken group, MV-CT
/// majority-votes partially broken groups and coin-tosses ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalRule {
    Ct,
    MvCt,
}

pub fn decode_local<R: Rng>(
    n_logical: usize,
    states: &GroupStates,
    kind: LocalRule,
    rng: &mut R,
) -> DecodedConfig {
    let mut spins = SpinConfig::all_up(n_logical);
    for &(l, state) in states {
        let s = match (kind, state) {
            (_, GroupState::Unbroken(s)) => s,
            (LocalRule::Ct, _) => coin(rng),
            (LocalRule::MvCt, GroupState::PartiallyBroken(m)) => m,
            (LocalRule::MvCt, GroupState::Tie) => coin(rng),
        };
        spins.set(l, s);
    }
    let strategy = match kind {
        LocalRule::Ct => DecoderKind::Ct,
        LocalRule::MvCt => DecoderKind::MvCt,
    };
    DecodedConfig {
        spins,
        strategy,
        p_dec: None,
    }
}

fn coin<R: Rng>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// The decoding Hamiltonian restricted to `qubits`: effective fields fold the
/// frozen neighbors in, couplings survive only between undecoded qubits.
#[derive(Clone, Debug)]
pub struct DecodingProblem {
    /// Undecoded logical vertices, sorted.
    pub qubits: Vec<NodeId>,
    /// Effective field per entry of `qubits`.
    pub sub_h: Vec<f64>,
    /// Couplings between local indices into `qubits`.
    pub sub_j: Vec<(usize, usize, f64)>,
    /// Assigned values of every other grouped vertex.
    pub frozen: Vec<(NodeId, i8)>,
}

impl DecodingProblem {
    pub fn as_ising(&self) -> Result<IsingProblem> {
        IsingProblem::new(self.qubits.len(), self.sub_h.clone(), self.sub_j.clone())
    }
}

/// Builds the decoding problem over `em_set` given `frozen` values for every
/// other grouped logical vertex.
pub fn build_decoding_problem(
    logical: &IsingProblem,
    frozen: &[(NodeId, i8)],
    em_set: &BTreeSet<NodeId>,
) -> DecodingProblem {
    let frozen_map: HashMap<NodeId, i8> = frozen.iter().copied().collect();
    let qubits: Vec<NodeId> = em_set.iter().copied().collect();
    let index: HashMap<NodeId, usize> = qubits.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut sub_h: Vec<f64> = qubits.iter().map(|&v| logical.h()[v]).collect();
    let mut sub_j = Vec::new();
    for &(u, v, j) in logical.couplings() {
        if j == 0.0 {
            continue;
        }
        match (index.get(&u), index.get(&v)) {
            (Some(&iu), Some(&iv)) => sub_j.push((iu, iv, j)),
            (Some(&iu), None) => {
                if let Some(&s) = frozen_map.get(&v) {
                    sub_h[iu] += j * f64::from(s);
                }
            }
            (None, Some(&iv)) => {
                if let Some(&s) = frozen_map.get(&u) {
                    sub_h[iv] += j * f64::from(s);
                }
            }
            (None, None) => {}
        }
    }
    DecodingProblem {
        qubits,
        sub_h,
        sub_j,
        frozen: frozen.to_vec(),
    }
}

/// Energy-minimization decoder family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmMode {
    /// All broken qubits decoded by energy minimization.
    Em,
    /// Majority vote on partially broken qubits; ties by energy minimization.
    MvEm,
    /// MV-EM plus a random unbroken set (as large as the partially-broken
    /// set) re-decoded by energy minimization.
    MvEmR,
}

impl EmMode {
    fn strategy(self) -> DecoderKind {
        match self {
            EmMode::Em => DecoderKind::Em,
            EmMode::MvEm => DecoderKind::MvEm,
            EmMode::MvEmR => DecoderKind::MvEmR,
        }
    }
}

pub fn decode_em<R: Rng>(
    e: &EmbeddedProblem,
    states: &GroupStates,
    mode: EmMode,
    sa: &SaParams,
    rng: &mut R,
) -> Result<DecodedConfig> {
    decode_em_with_cutoff(e, states, mode, sa, EXHAUSTIVE_CUTOFF, rng)
}

/// As [`decode_em`] with an explicit exhaustive-enumeration cutoff; a cutoff
/// of 0 forces the simulated-annealing path.
pub fn decode_em_with_cutoff<R: Rng>(
    e: &EmbeddedProblem,
    states: &GroupStates,
    mode: EmMode,
    sa: &SaParams,
    cutoff: usize,
    rng: &mut R,
) -> Result<DecodedConfig> {
    let n_logical = e.logical.vertex_count();
    let mut em_set: BTreeSet<NodeId> = BTreeSet::new();
    let mut frozen: Vec<(NodeId, i8)> = Vec::new();
    for &(l, state) in states {
        match (mode, state) {
            (_, GroupState::Unbroken(s)) => frozen.push((l, s)),
            (EmMode::Em, _) => {
                em_set.insert(l);
            }
            (EmMode::MvEm | EmMode::MvEmR, GroupState::PartiallyBroken(m)) => frozen.push((l, m)),
            (EmMode::MvEm | EmMode::MvEmR, GroupState::Tie) => {
                em_set.insert(l);
            }
        }
    }
    if mode == EmMode::MvEmR {
        let n_partial = states
            .iter()
            .filter(|(_, s)| matches!(s, GroupState::PartiallyBroken(_)))
            .count();
        let mut unbroken: Vec<NodeId> = states
            .iter()
            .filter(|(_, s)| matches!(s, GroupState::Unbroken(_)))
            .map(|&(l, _)| l)
            .collect();
        for _ in 0..n_partial.min(unbroken.len()) {
            let k = rng.random_range(0..unbroken.len());
            let picked = unbroken.swap_remove(k);
            frozen.retain(|&(l, _)| l != picked);
            em_set.insert(picked);
        }
    }

    let problem = build_decoding_problem(&e.logical, &frozen, &em_set);
    let (assignment, p_dec) = minimize_decoding(&problem, sa, cutoff, rng)?;

    let mut spins = SpinConfig::all_up(n_logical);
    for &(l, s) in &frozen {
        spins.set(l, s);
    }
    for (&l, &s) in problem.qubits.iter().zip(&assignment) {
        spins.set(l, s);
    }
    Ok(DecodedConfig {
        spins,
        strategy: mode.strategy(),
        p_dec: Some(p_dec),
    })
}

/// Minimizes a decoding problem. Every connected domain within the cutoff is
/// enumerated exactly (P_dec contribution 1); otherwise the whole problem is
/// handed to simulated annealing and P_dec is the fraction of restarts
/// attaining the best energy found.
fn minimize_decoding<R: Rng>(
    problem: &DecodingProblem,
    sa: &SaParams,
    cutoff: usize,
    rng: &mut R,
) -> Result<(Vec<i8>, f64)> {
    let k = problem.qubits.len();
    if k == 0 {
        return Ok((Vec::new(), 1.0));
    }
    let components = connected_components(k, &problem.sub_j);
    if components.iter().all(|c| c.len() <= cutoff) {
        let mut assignment = vec![1i8; k];
        for comp in &components {
            exhaustive_component(problem, comp, &mut assignment);
        }
        return Ok((assignment, 1.0));
    }
    let ising = problem.as_ising()?;
    let result = sa_run(&ising, sa, rng)?;
    let attaining = result
        .energies
        .iter()
        .filter(|&&e| e <= result.best_energy + 1e-9)
        .count();
    let p_dec = attaining as f64 / result.energies.len() as f64;
    let best = result
        .configs
        .iter()
        .zip(&result.energies)
        .find(|(_, &e)| e <= result.best_energy + 1e-9)
        .map(|(c, _)| c.spins().to_vec())
        .unwrap();
    Ok((best, p_dec))
}

fn connected_components(k: usize, sub_j: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(k);
    for &(u, v, j) in sub_j {
        if j != 0.0 {
            uf.union(u, v);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..k {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    by_root.into_values().collect()
}

/// Exact minimization of one connected domain; lowest-index all-up-first
/// enumeration makes ties deterministic.
fn exhaustive_component(problem: &DecodingProblem, comp: &[usize], assignment: &mut [i8]) {
    let local: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let edges: Vec<(usize, usize, f64)> = problem
        .sub_j
        .iter()
        .filter(|&&(u, v, _)| local.contains_key(&u) && local.contains_key(&v))
        .map(|&(u, v, j)| (local[&u], local[&v], j))
        .collect();
    let mut best_bits = 0u64;
    let mut best_e = f64::INFINITY;
    for bits in 0..1u64 << comp.len() {
        let spin = |i: usize| if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
        let mut e = 0.0;
        for (i, &g) in comp.iter().enumerate() {
            e += problem.sub_h[g] * spin(i);
        }
        for &(u, v, j) in &edges {
            e += j * spin(u) * spin(v);
        }
        if e < best_e - 1e-12 {
            best_e = e;
            best_bits = bits;
        }
    }
    for (i, &g) in comp.iter().enumerate() {
        assignment[g] = if best_bits >> i & 1 == 1 { -1 } else { 1 };
    }
}

/// Recursive decoding: untied groups freeze (majority vote on partials), the
/// tie subgraph is re-solved with the supplied solver, and any still-tied
/// qubits iterate until the tie subgraph stops shrinking; residual ties fall
/// back to exhaustive energy minimization.
///
/// A qubit stays tied after a round when the solver's optimal configurations
/// split evenly on it.
pub fn decode_recursive<R, F>(
    e: &EmbeddedProblem,
    states: &GroupStates,
    solver: &mut F,
    rng: &mut R,
) -> Result<DecodedConfig>
where
    R: Rng,
    F: FnMut(&IsingProblem, &mut R) -> Result<SolveResult>,
{
    let n_logical = e.logical.vertex_count();
    let mut assigned: Vec<(NodeId, i8)> = Vec::new();
    let mut ties: BTreeSet<NodeId> = BTreeSet::new();
    for &(l, state) in states {
        match state {
            GroupState::Unbroken(s) => assigned.push((l, s)),
            GroupState::PartiallyBroken(m) => assigned.push((l, m)),
            GroupState::Tie => {
                ties.insert(l);
            }
        }
    }

    let mut unchanged_rounds = 0;
    while !ties.is_empty() && unchanged_rounds < 2 {
        let problem = build_decoding_problem(&e.logical, &assigned, &ties);
        let ising = problem.as_ising()?;
        let result = solver(&ising, rng)?;
        let mut still_tied: BTreeSet<NodeId> = BTreeSet::new();
        for (i, &l) in problem.qubits.iter().enumerate() {
            let vote: i64 = result.best_configs(1e-9).map(|c| i64::from(c.get(i))).sum();
            if vote > 0 {
                assigned.push((l, 1));
            } else if vote < 0 {
                assigned.push((l, -1));
            } else {
                still_tied.insert(l);
            }
        }
        if still_tied == ties {
            unchanged_rounds += 1;
        } else {
            unchanged_rounds = 0;
        }
        ties = still_tied;
    }

    if !ties.is_empty() {
        let problem = build_decoding_problem(&e.logical, &assigned, &ties);
        let mut assignment = vec![1i8; problem.qubits.len()];
        for comp in connected_components(problem.qubits.len(), &problem.sub_j) {
            exhaustive_component(&problem, &comp, &mut assignment);
        }
        for (&l, &s) in problem.qubits.iter().zip(&assignment) {
            assigned.push((l, s));
        }
    }

    let mut spins = SpinConfig::all_up(n_logical);
    for &(l, s) in &assigned {
        spins.set(l, s);
    }
    Ok(DecodedConfig {
        spins,
        strategy: DecoderKind::Recursive,
        p_dec: None,
    })
}

/// Success criterion: the decoded logical energy reaches the instance's
/// reference energy (ground states are typically degenerate, so configuration
/// equality would under-count).
pub fn is_success(
    d: &DecodedConfig,
    reference_energy: f64,
    logical: &IsingProblem,
) -> Result<bool> {
    Ok(energy(logical, &d.spins)? <= reference_energy + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{assign_penalties, embed_me, embed_qacme, PenaltyStrategy};
    use crate::solvers::brute_force;
    use crate::topology::{chimera, two_level_grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qac_fixture() -> (EmbeddedProblem, crate::instances::PlantedInstance) {
        let hw = chimera(2, 2, 4, &std::collections::BTreeSet::new()).unwrap();
        let lg = two_level_grid(2, &std::collections::BTreeSet::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let inst =
            crate::instances::generate_planted(lg.graph(), 1.0, Default::default(), &mut rng)
                .unwrap();
        let e = embed_qacme(&inst.problem, &lg, &hw).unwrap();
        let (e, _) = assign_penalties(e, PenaltyStrategy::Uniform(0.2)).unwrap();
        (e, inst)
    }

    /// Physical readout where `broken` groups get the given patterns and all
    /// other groups sit at the planted +1.
    fn synth_readout(e: &EmbeddedProblem, patterns: &[(NodeId, Vec<i8>)]) -> SpinConfig {
        let mut spins = SpinConfig::all_up(e.physical.vertex_count());
        for (l, pat) in patterns {
            let group = e.map.group_of(*l).unwrap();
            for (&q, &s) in group.iter().zip(pat) {
                spins.set(q, s);
            }
        }
        spins
    }

    #[test]
    fn classification_patterns() {
        let (e, _) = qac_fixture();
        let l0 = e.map.groups()[0].0;
        let l1 = e.map.groups()[1].0;
        let l2 = e.map.groups()[2].0;
        let readout = synth_readout(
            &e,
            &[
                (l0, vec![1, 1, 1, -1]),
                (l1, vec![1, 1, -1, -1]),
                (l2, vec![-1, -1, -1, -1]),
            ],
        );
        let states = classify_groups(&e, &readout).unwrap();
        let get = |l: NodeId| states.iter().find(|&&(v, _)| v == l).unwrap().1;
        assert_eq!(get(l0), GroupState::PartiallyBroken(1));
        assert_eq!(get(l1), GroupState::Tie);
        assert_eq!(get(l2), GroupState::Unbroken(-1));
        let unbroken = states.iter().filter(|(_, s)| !s.is_broken()).count();
        assert_eq!(unbroken, states.len() - 2);
    }

    #[test]
    fn me_groups_break_only_as_ties() {
        let hw = chimera(2, 2, 4, &std::collections::BTreeSet::new()).unwrap();
        let lg = two_level_grid(2, &std::collections::BTreeSet::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let inst =
            crate::instances::generate_planted(lg.graph(), 1.0, Default::default(), &mut rng)
                .unwrap();
        let e = embed_me(&inst.problem, &lg, &hw).unwrap();
        let l = e.map.groups()[0].0;
        let readout = synth_readout(&e, &[(l, vec![1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        for &(v, s) in &states {
            if v == l {
                assert_eq!(s, GroupState::Tie);
            } else {
                assert!(matches!(s, GroupState::Unbroken(_)));
            }
        }
    }

    #[test]
    fn local_decoders() {
        let (e, _) = qac_fixture();
        let n = e.logical.vertex_count();
        // All unbroken: CT and MV-CT agree and consume no randomness.
        let readout = synth_readout(&e, &[]);
        let states = classify_groups(&e, &readout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = rng.clone();
        let ct = decode_local(n, &states, LocalRule::Ct, &mut rng);
        let mv = decode_local(n, &states, LocalRule::MvCt, &mut rng);
        assert_eq!(ct.spins, mv.spins);
        assert_eq!(rng.random::<u64>(), before.clone().random::<u64>());

        // One partially broken group under MV-CT: deterministic majority.
        let l0 = e.map.groups()[0].0;
        let readout = synth_readout(&e, &[(l0, vec![1, 1, 1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let mv = decode_local(n, &states, LocalRule::MvCt, &mut rng);
        assert_eq!(mv.spins.get(l0), 1);

        // One tie under CT: fair coin over many draws.
        let readout = synth_readout(&e, &[(l0, vec![1, 1, -1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let mut ups = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            let d = decode_local(n, &states, LocalRule::Ct, &mut rng);
            if d.spins.get(l0) == 1 {
                ups += 1;
            }
        }
        let freq = ups as f64 / draws as f64;
        let sigma = 0.5 / (draws as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sigma, "tie frequency {freq}");
    }

    #[test]
    fn decoding_problem_folds_frozen_fields() {
        // BQ 0 with two frozen neighbors at +1 through J = -1: sub_h = -2.
        let logical = IsingProblem::new(3, vec![0.0; 3], vec![(0, 1, -1.0), (0, 2, -1.0)]).unwrap();
        let em: BTreeSet<NodeId> = [0].into_iter().collect();
        let dp = build_decoding_problem(&logical, &[(1, 1), (2, 1)], &em);
        assert_eq!(dp.sub_h, vec![-2.0]);
        assert!(dp.sub_j.is_empty());

        // Empty em-set: empty problem.
        let dp = build_decoding_problem(&logical, &[(0, 1), (1, 1), (2, 1)], &BTreeSet::new());
        assert!(dp.qubits.is_empty());

        // Two adjacent BQs: their coupling survives.
        let logical2 = IsingProblem::new(3, vec![0.0; 3], vec![(0, 1, 1.0), (1, 2, -0.5)]).unwrap();
        let em: BTreeSet<NodeId> = [0, 1].into_iter().collect();
        let dp = build_decoding_problem(&logical2, &[(2, -1)], &em);
        assert_eq!(dp.sub_j, vec![(0, 1, 1.0)]);
        assert_eq!(dp.sub_h[1], 0.5); // folded from frozen -1 through J = -0.5
    }

    #[test]
    fn em_matches_brute_force_on_decoding_hamiltonian() {
        let (e, _) = qac_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            // Break a random set of groups with random patterns.
            let mut patterns = Vec::new();
            for (l, _) in e.map.groups() {
                if rng.random::<f64>() < 0.5 {
                    let pat: Vec<i8> = (0..4).map(|_| coin(&mut rng)).collect();
                    patterns.push((*l, pat));
                }
            }
            let readout = synth_readout(&e, &patterns);
            let states = classify_groups(&e, &readout).unwrap();
            let sa = SaParams::decoding_defaults(&e.logical);
            let decoded = decode_em(&e, &states, EmMode::Em, &sa, &mut rng).unwrap();
            assert_eq!(decoded.p_dec, Some(1.0), "exhaustive mode expected");

            // Independent oracle: enumerate all BQ assignments on the logical
            // problem directly.
            let bq: Vec<NodeId> = states
                .iter()
                .filter(|(_, s)| s.is_broken())
                .map(|&(l, _)| l)
                .collect();
            let mut base = SpinConfig::all_up(e.logical.vertex_count());
            for &(l, s) in &states {
                if let GroupState::Unbroken(v) = s {
                    base.set(l, v);
                }
            }
            let mut best = f64::INFINITY;
            for bits in 0..1u64 << bq.len() {
                let mut cfg = base.clone();
                for (i, &l) in bq.iter().enumerate() {
                    cfg.set(l, if bits >> i & 1 == 1 { -1 } else { 1 });
                }
                best = best.min(energy(&e.logical, &cfg).unwrap());
            }
            let got = energy(&e.logical, &decoded.spins).unwrap();
            assert!(
                (got - best).abs() < 1e-9,
                "trial {trial}: EM energy {got} vs oracle {best}"
            );
        }
    }

    #[test]
    fn em_decomposes_over_components() {
        let (e, _) = qac_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l0 = e.map.groups()[0].0;
        let l5 = e.map.groups()[5].0;
        let readout = synth_readout(&e, &[(l0, vec![1, 1, -1, -1]), (l5, vec![-1, 1, 1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let sa = SaParams::decoding_defaults(&e.logical);
        let whole = decode_em(&e, &states, EmMode::Em, &sa, &mut rng).unwrap();

        // Decode each broken qubit in isolation, holding the other at its
        // whole-decode value; the independent optima must agree.
        for &solo in &[l0, l5] {
            let em: BTreeSet<NodeId> = [solo].into_iter().collect();
            let mut frozen: Vec<(NodeId, i8)> = Vec::new();
            for &(l, s) in &states {
                if l == solo {
                    continue;
                }
                match s {
                    GroupState::Unbroken(v) => frozen.push((l, v)),
                    _ => frozen.push((l, whole.spins.get(l))),
                }
            }
            let dp = build_decoding_problem(&e.logical, &frozen, &em);
            let mut assignment = vec![1i8];
            exhaustive_component(&dp, &[0], &mut assignment);
            assert_eq!(assignment[0], whole.spins.get(solo));
        }
    }

    #[test]
    fn single_tie_follows_effective_field() {
        let (e, _) = qac_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Find a group whose effective field at the planted background is
        // strictly negative-energy for +1 (sub_h < 0).
        for (l, _) in e.map.groups() {
            let readout = synth_readout(&e, &[(*l, vec![1, 1, -1, -1])]);
            let states = classify_groups(&e, &readout).unwrap();
            let frozen: Vec<(NodeId, i8)> = states
                .iter()
                .filter(|&&(v, _)| v != *l)
                .map(|&(v, s)| match s {
                    GroupState::Unbroken(x) => (v, x),
                    _ => unreachable!(),
                })
                .collect();
            let em: BTreeSet<NodeId> = [*l].into_iter().collect();
            let dp = build_decoding_problem(&e.logical, &frozen, &em);
            if dp.sub_h[0] < -1e-9 {
                let sa = SaParams::decoding_defaults(&e.logical);
                let d = decode_em(&e, &states, EmMode::Em, &sa, &mut rng).unwrap();
                assert_eq!(d.spins.get(*l), 1);
                return;
            }
        }
        panic!("no group with a negative effective field found");
    }

    #[test]
    fn mv_em_r_reduces_to_mv_em_without_partials() {
        let (e, _) = qac_fixture();
        let l0 = e.map.groups()[0].0;
        // Only ties, no partially broken groups.
        let readout = synth_readout(&e, &[(l0, vec![1, 1, -1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let sa = SaParams::decoding_defaults(&e.logical);
        let mut rng1 = ChaCha8Rng::seed_from_u64(10);
        let mut rng2 = ChaCha8Rng::seed_from_u64(10);
        let a = decode_em(&e, &states, EmMode::MvEm, &sa, &mut rng1).unwrap();
        let b = decode_em(&e, &states, EmMode::MvEmR, &sa, &mut rng2).unwrap();
        assert_eq!(a.spins, b.spins);
    }

    #[test]
    fn unbroken_preserved_by_all_strategies() {
        let (e, _) = qac_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l0 = e.map.groups()[0].0;
        let readout = synth_readout(&e, &[(l0, vec![1, -1, 1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let sa = SaParams::decoding_defaults(&e.logical);
        let unbroken: Vec<(NodeId, i8)> = states
            .iter()
            .filter_map(|&(l, s)| match s {
                GroupState::Unbroken(v) => Some((l, v)),
                _ => None,
            })
            .collect();
        for mode in [EmMode::Em, EmMode::MvEm] {
            let d = decode_em(&e, &states, mode, &sa, &mut rng).unwrap();
            for &(l, v) in &unbroken {
                assert_eq!(d.spins.get(l), v, "{mode:?} changed unbroken qubit {l}");
            }
        }
        let d = decode_local(e.logical.vertex_count(), &states, LocalRule::MvCt, &mut rng);
        for &(l, v) in &unbroken {
            assert_eq!(d.spins.get(l), v);
        }
    }

    #[test]
    fn recursive_no_ties_is_identity() {
        let (e, _) = qac_fixture();
        let readout = synth_readout(&e, &[]);
        let states = classify_groups(&e, &readout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut calls = 0usize;
        let mut solver = |p: &IsingProblem, _r: &mut ChaCha8Rng| {
            calls += 1;
            brute_force(p)
        };
        let d = decode_recursive(&e, &states, &mut solver, &mut rng).unwrap();
        assert_eq!(calls, 0, "no solver calls expected without ties");
        for (l, _) in e.map.groups() {
            assert_eq!(d.spins.get(*l), 1);
        }
    }

    #[test]
    fn recursive_resolves_field_and_chain() {
        // One tied qubit with net field -2 resolves to +1 in one round.
        let logical = IsingProblem::new(3, vec![0.0; 3], vec![(0, 1, -1.0), (0, 2, -1.0)]).unwrap();
        let hw = chimera(2, 2, 4, &std::collections::BTreeSet::new()).unwrap();
        let lg = two_level_grid(2, &std::collections::BTreeSet::new()).unwrap();
        // Reuse a QAC embedding on vertices 0..3 of the 2LG for plumbing; the
        // logical problem above only references vertices 0,1,2.
        let mut padded_h = vec![0.0; lg.vertex_count()];
        padded_h.truncate(lg.vertex_count());
        let logical_padded =
            IsingProblem::new(lg.vertex_count(), padded_h, logical.couplings().to_vec()).unwrap();
        let e = embed_qacme(&logical_padded, &lg, &hw).unwrap();
        let (e, _) = assign_penalties(e, PenaltyStrategy::Uniform(0.3)).unwrap();
        let tie_l = 0;
        let readout = synth_readout(&e, &[(tie_l, vec![1, 1, -1, -1])]);
        let states = classify_groups(&e, &readout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut solver = |p: &IsingProblem, _r: &mut ChaCha8Rng| brute_force(p);
        let d = decode_recursive(&e, &states, &mut solver, &mut rng).unwrap();
        assert_eq!(d.spins.get(tie_l), 1);

        // Chain of 3 tied qubits between frozen +1 ends, all J = -1.
        let chain = IsingProblem::new(
            5,
            vec![0.0; 5],
            vec![(0, 1, -1.0), (1, 2, -1.0), (2, 3, -1.0), (3, 4, -1.0)],
        )
        .unwrap();
        let em: BTreeSet<NodeId> = [1, 2, 3].into_iter().collect();
        let dp = build_decoding_problem(&chain, &[(0, 1), (4, 1)], &em);
        let ising = dp.as_ising().unwrap();
        let r = brute_force(&ising).unwrap();
        assert_eq!(r.configs.len(), 1);
        assert!(r.configs[0].spins().iter().all(|&s| s == 1));
    }

    #[test]
    fn success_criterion() {
        let (e, inst) = qac_fixture();
        let planted = DecodedConfig {
            spins: inst.planted.clone(),
            strategy: DecoderKind::Em,
            p_dec: None,
        };
        assert!(is_success(&planted, inst.reference_energy, &e.logical).unwrap());

        // Degenerate non-planted ground states also count.
        let exact = brute_force(&inst.problem).unwrap();
        for cfg in exact.configs.iter().take(4) {
            let d = DecodedConfig {
                spins: cfg.clone(),
                strategy: DecoderKind::Em,
                p_dec: None,
            };
            assert!(is_success(&d, inst.reference_energy, &e.logical).unwrap());
        }

        // An excited configuration does not.
        let mut bad = inst.planted.clone();
        let &(u, v, j) = inst
            .problem
            .couplings()
            .iter()
            .find(|&&(_, _, j)| j < 0.0)
            .unwrap();
        let _ = (v, j);
        bad.set(u, -1);
        let eb = energy(&inst.problem, &bad).unwrap();
        if eb > inst.reference_energy + 1e-6 {
            let d = DecodedConfig {
                spins: bad,
                strategy: DecoderKind::Em,
                p_dec: None,
            };
            assert!(!is_success(&d, inst.reference_energy, &e.logical).unwrap());
        }
    }

    #[test]
    fn strategy_dominance_over_noisy_readouts() {
        // Independent physical bit flips on the planted embedded state; the
        // mean success ordering EM >= MV-EM >= MV-CT >= CT must emerge.
        let (e, inst) = qac_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sa = SaParams::decoding_defaults(&e.logical);
        let n_logical = e.logical.vertex_count();
        let mut wins = [0usize; 4]; // em, mv_em, mv_ct, ct
        let readouts = 1200;
        let flip_p = 0.18;
        for _ in 0..readouts {
            let mut spins = SpinConfig::all_up(e.physical.vertex_count());
            for (_, group) in e.map.groups() {
                for &q in group {
                    if rng.random::<f64>() < flip_p {
                        spins.set(q, -1);
                    }
                }
            }
            let states = classify_groups(&e, &spins).unwrap();
            let em = decode_em(&e, &states, EmMode::Em, &sa, &mut rng).unwrap();
            let mv_em = decode_em(&e, &states, EmMode::MvEm, &sa, &mut rng).unwrap();
            let mv_ct = decode_local(n_logical, &states, LocalRule::MvCt, &mut rng);
            let ct = decode_local(n_logical, &states, LocalRule::Ct, &mut rng);
            for (i, d) in [&em, &mv_em, &mv_ct, &ct].iter().enumerate() {
                if is_success(d, inst.reference_energy, &e.logical).unwrap() {
                    wins[i] += 1;
                }
            }
        }
        assert!(wins[0] >= wins[1], "EM {} < MV-EM {}", wins[0], wins[1]);
        assert!(wins[1] >= wins[2], "MV-EM {} < MV-CT {}", wins[1], wins[2]);
        assert!(wins[2] >= wins[3], "MV-CT {} < CT {}", wins[2], wins[3]);
        assert!(wins[0] > wins[3], "EM should strictly beat CT on average");
    }
}
