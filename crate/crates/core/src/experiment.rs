//! Experimental protocol: programming cycles with random gauges, per-cycle
//! control noise, solving, decoding, success statistics, renormalization,
//! penalty optimization, and bootstrap error bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decoding::{
    classify_groups, decode_em, decode_local, decode_recursive, is_success, DecoderKind, EmMode,
    LocalRule,
};
use crate::embedding::{
    apply_noise, assign_penalties, embed_direct, embed_me, embed_qacme, EmbeddedProblem,
    NoiseModel, PenaltyStrategy, Scheme,
};
use crate::instances::PlantedInstance;
use crate::ising::{apply_gauge, ungauge, GaugeVector, SpinConfig};
use crate::solvers::{brute_force, sa_run, sqa_run, AnnealSchedule, SaParams, SqaParams};
use crate::topology::{HardwareGraph, LogicalGraph};
use crate::util::{derived_rng, mix_seed};
use crate::{Error, Result};

/// Solver selection for pipeline runs.
#[derive(Clone, Debug)]
pub enum SolverSpec {
    Sqa {
        params: SqaParams,
        schedule: AnnealSchedule,
    },
    Sa(SaParams),
    Brute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Uniform,
    Nonuniform,
}

/// Everything one batch run needs. `penalty_grid` is ignored for Direct.
pub struct ExperimentPlan {
    pub instances: Vec<PlantedInstance>,
    pub logical_graph: LogicalGraph,
    pub hardware: HardwareGraph,
    pub scheme: Scheme,
    pub penalty_grid: Vec<f64>,
    pub penalty_kind: PenaltyKind,
    /// Programming cycles per (instance, gamma).
    pub cycles: usize,
    /// Anneals per programming cycle.
    pub runs_per_cycle: usize,
    pub noise: NoiseModel,
    pub solver: SolverSpec,
    pub decoder: DecoderKind,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(Error::Parameter("plan has no instances".into()));
        }
        if self.cycles < 1 || self.runs_per_cycle < 1 {
            return Err(Error::Parameter(
                "cycles and runs_per_cycle must be >= 1".into(),
            ));
        }
        if self.scheme != Scheme::Direct && self.penalty_grid.is_empty() {
            return Err(Error::Parameter(
                "penalty grid empty for a penalized scheme".into(),
            ));
        }
        Ok(())
    }

    fn gammas(&self) -> Vec<f64> {
        if self.scheme == Scheme::Direct {
            vec![0.0]
        } else {
            self.penalty_grid.clone()
        }
    }
}

/// One decoded readout.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub instance: usize,
    pub gamma: f64,
    pub cycle: usize,
    pub run: usize,
    pub success: bool,
    pub n_broken: usize,
    pub n_ties: usize,
    pub p_dec: f64,
}

fn embed(plan: &ExperimentPlan, inst: &PlantedInstance, gamma: f64) -> Result<EmbeddedProblem> {
    match plan.scheme {
        Scheme::Direct => embed_direct(&inst.problem, &plan.logical_graph, &plan.hardware),
        Scheme::Me | Scheme::QacMe => {
            let e = if plan.scheme == Scheme::Me {
                embed_me(&inst.problem, &plan.logical_graph, &plan.hardware)?
            } else {
                embed_qacme(&inst.problem, &plan.logical_graph, &plan.hardware)?
            };
            let strat = match plan.penalty_kind {
                PenaltyKind::Uniform => PenaltyStrategy::Uniform(gamma),
                PenaltyKind::Nonuniform => PenaltyStrategy::Nonuniform(gamma),
            };
            Ok(assign_penalties(e, strat)?.0)
        }
    }
}

/// Runs the full protocol. For each instance x gamma and each programming
/// cycle: draw one random gauge, redraw the control noise, gauge the noisy
/// problem, run `runs_per_cycle` anneals, ungauge each readout, classify,
/// decode, and record success against the instance's reference energy.
///
/// The output is a pure function of (plan, master_seed): tasks get derived
/// RNG streams and results are emitted in (instance, gamma, cycle) order
/// regardless of the parallel schedule.
pub fn run_pipeline(plan: &ExperimentPlan, master_seed: u64) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    let gammas = plan.gammas();
    let mut tasks = Vec::new();
    for inst_idx in 0..plan.instances.len() {
        for (gamma_idx, &gamma) in gammas.iter().enumerate() {
            for cycle in 0..plan.cycles {
                tasks.push((inst_idx, gamma_idx, gamma, cycle));
            }
        }
    }
    let results: Vec<Result<Vec<RunRecord>>> = tasks
        .par_iter()
        .map(|&(inst_idx, gamma_idx, gamma, cycle)| {
            let salt = mix_seed(
                (inst_idx as u64) << 40 | (gamma_idx as u64) << 20 | cycle as u64,
                0xC1C1E,
            );
            let mut rng = derived_rng(master_seed, salt);
            run_cycle(plan, inst_idx, gamma, cycle, &mut rng)
        })
        .collect();
    let mut records = Vec::with_capacity(tasks.len() * plan.runs_per_cycle);
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

/// The physical problem restricted to qubits that carry a field or coupling,
/// with the index maps to scatter solver output back to full readouts.
struct CompactProblem {
    problem: crate::ising::IsingProblem,
    touched: Vec<usize>,
    n_full: usize,
}

impl CompactProblem {
    fn new(full: &crate::ising::IsingProblem) -> Result<Self> {
        let n = full.vertex_count();
        let mut is_touched = vec![false; n];
        for (i, &hi) in full.h().iter().enumerate() {
            if hi != 0.0 {
                is_touched[i] = true;
            }
        }
        for &(u, v, j) in full.couplings() {
            if j != 0.0 {
                is_touched[u] = true;
                is_touched[v] = true;
            }
        }
        let touched: Vec<usize> = (0..n).filter(|&v| is_touched[v]).collect();
        let mut index = vec![usize::MAX; n];
        for (i, &v) in touched.iter().enumerate() {
            index[v] = i;
        }
        let h: Vec<f64> = touched.iter().map(|&v| full.h()[v]).collect();
        let couplings: Vec<(usize, usize, f64)> = full
            .couplings()
            .iter()
            .filter(|&&(_, _, j)| j != 0.0)
            .map(|&(u, v, j)| (index[u], index[v], j))
            .collect();
        let problem = crate::ising::IsingProblem::new(touched.len(), h, couplings)?;
        Ok(CompactProblem {
            problem,
            touched,
            n_full: n,
        })
    }

    /// Expands a compact configuration; untouched qubits are free spins and
    /// get random values, as they would on hardware.
    fn expand(&self, compact: &crate::ising::SpinConfig, rng: &mut ChaCha8Rng) -> SpinConfig {
        let mut full = SpinConfig::all_up(self.n_full);
        let mut owned = vec![false; self.n_full];
        for (i, &v) in self.touched.iter().enumerate() {
            full.set(v, compact.get(i));
            owned[v] = true;
        }
        for v in 0..self.n_full {
            if !owned[v] && rng.random::<bool>() {
                full.set(v, -1);
            }
        }
        full
    }
}

fn run_cycle(
    plan: &ExperimentPlan,
    inst_idx: usize,
    gamma: f64,
    cycle: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RunRecord>> {
    let inst = &plan.instances[inst_idx];
    let embedded = embed(plan, inst, gamma)?;
    let n_phys = embedded.physical.vertex_count();

    let gauge = GaugeVector::random(n_phys, rng);
    let noisy = apply_noise(&embedded, plan.noise, rng)?;
    let gauged = apply_gauge(&noisy, &gauge);
    let compact = CompactProblem::new(&gauged)?;

    let mut records = Vec::with_capacity(plan.runs_per_cycle);
    for run in 0..plan.runs_per_cycle {
        let solved = match &plan.solver {
            SolverSpec::Sqa { params, schedule } => {
                sqa_run(&compact.problem, schedule, params, rng)?
            }
            SolverSpec::Sa(params) => sa_run(&compact.problem, params, rng)?,
            SolverSpec::Brute => brute_force(&compact.problem)?,
        };
        let full_config = compact.expand(&solved.configs[0], rng);
        let readout = ungauge(&full_config, &gauge);
        let states = classify_groups(&embedded, &readout)?;
        let n_broken = states.iter().filter(|(_, s)| s.is_broken()).count();
        let n_ties = states.iter().filter(|(_, s)| s.is_tie()).count();
        let decoded = match plan.decoder {
            DecoderKind::Ct => {
                decode_local(embedded.logical.vertex_count(), &states, LocalRule::Ct, rng)
            }
            DecoderKind::MvCt => decode_local(
                embedded.logical.vertex_count(),
                &states,
                LocalRule::MvCt,
                rng,
            ),
            DecoderKind::Em | DecoderKind::MvEm | DecoderKind::MvEmR => {
                let mode = match plan.decoder {
                    DecoderKind::Em => EmMode::Em,
                    DecoderKind::MvEm => EmMode::MvEm,
                    _ => EmMode::MvEmR,
                };
                let sa = SaParams::decoding_defaults(&embedded.logical);
                decode_em(&embedded, &states, mode, &sa, rng)?
            }
            DecoderKind::Recursive => {
                let mut solver = |p: &crate::ising::IsingProblem, r: &mut ChaCha8Rng| {
                    if p.vertex_count() <= crate::solvers::BRUTE_FORCE_LIMIT {
                        brute_force(p)
                    } else {
                        sa_run(p, &SaParams::decoding_defaults(p), r)
                    }
                };
                decode_recursive(&embedded, &states, &mut solver, rng)?
            }
        };
        let success = is_success(&decoded, inst.reference_energy, &embedded.logical)?;
        records.push(RunRecord {
            instance: inst_idx,
            gamma,
            cycle,
            run,
            success,
            n_broken,
            n_ties,
            p_dec: decoded.p_dec.unwrap_or(f64::NAN),
        });
    }
    Ok(records)
}

/// Mean over programming cycles of the per-cycle success fraction.
pub fn success_probability(records: &[RunRecord], instance: usize, gamma: f64) -> Result<f64> {
    let mut per_cycle: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        if r.instance == instance && r.gamma == gamma {
            let e = per_cycle.entry(r.cycle).or_insert((0, 0));
            e.0 += usize::from(r.success);
            e.1 += 1;
        }
    }
    if per_cycle.is_empty() {
        return Err(Error::Parameter(format!(
            "no records for instance {instance} at gamma {gamma}"
        )));
    }
    let mean = per_cycle
        .values()
        .map(|&(succ, tot)| succ as f64 / tot as f64)
        .sum::<f64>()
        / per_cycle.len() as f64;
    Ok(mean)
}

/// Resource renormalization: Direct and ME are charged for the 4x and 2x
/// parallelism their qubit budgets allow; QAC-ME is reported raw.
pub fn renormalize(p: f64, scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Direct => 1.0 - (1.0 - p).powi(4),
        Scheme::Me => 1.0 - (1.0 - p).powi(2),
        Scheme::QacMe => p,
    }
}

/// Picks the gamma maximizing the mean renormalized success probability over
/// its per-instance list; exact ties go to the smaller gamma.
pub fn optimize_penalty(stats: &[(f64, Vec<f64>)], scheme: Scheme) -> Result<(f64, Vec<f64>)> {
    if stats.is_empty() {
        return Err(Error::Parameter("empty penalty grid".into()));
    }
    let mut entries: Vec<&(f64, Vec<f64>)> = stats.iter().collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64, &Vec<f64>)> = None;
    for (gamma, ps) in entries {
        if ps.is_empty() {
            return Err(Error::Parameter(format!(
                "no success values at gamma {gamma}"
            )));
        }
        let mean = ps.iter().map(|&p| renormalize(p, scheme)).sum::<f64>() / ps.len() as f64;
        // Ascending gamma with a strict comparison ties toward the smaller.
        if best.map_or(true, |(bm, _, _)| mean > bm) {
            best = Some((mean, *gamma, ps));
        }
    }
    let (_, gamma, ps) = best.unwrap();
    Ok((gamma, ps.clone()))
}

/// Bootstrap mean: B resamples with replacement; returns (mean of resample
/// means, their standard deviation).
pub fn bootstrap_mean<R: Rng>(values: &[f64], b: usize, rng: &mut R) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Parameter("no values to bootstrap".into()));
    }
    if b < 1 {
        return Err(Error::Parameter("need at least one resample".into()));
    }
    let n = values.len();
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = if b > 1 {
        means.iter().map(|&m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64
    } else {
        0.0
    };
    Ok((mean, var.sqrt()))
}

/// One aggregated plot point.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsPoint {
    pub alpha: f64,
    pub scheme: Scheme,
    pub gamma_opt: f64,
    pub p_mean: f64,
    pub p_stderr: f64,
}

/// Aggregated success statistics of one pipeline run.
#[derive(Clone, Debug, Default)]
pub struct SuccessStats {
    pub points: Vec<StatsPoint>,
}

/// Aggregates run records into per-alpha optimal-penalty bootstrap means.
/// Instances are grouped by clause density; the penalty is optimized
/// independently per group.
pub fn aggregate(
    plan: &ExperimentPlan,
    records: &[RunRecord],
    bootstrap_b: usize,
    master_seed: u64,
) -> Result<SuccessStats> {
    let gammas = plan.gammas();
    // Group instances by alpha (bitwise identity keeps grouping exact).
    let mut by_alpha: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, inst) in plan.instances.iter().enumerate() {
        by_alpha.entry(inst.alpha.to_bits()).or_default().push(i);
    }
    let mut points = Vec::new();
    for (alpha_bits, inst_ids) in by_alpha {
        let alpha = f64::from_bits(alpha_bits);
        let mut stats: Vec<(f64, Vec<f64>)> = Vec::with_capacity(gammas.len());
        for &gamma in &gammas {
            let ps: Vec<f64> = inst_ids
                .iter()
                .map(|&i| success_probability(records, i, gamma))
                .collect::<Result<_>>()?;
            stats.push((gamma, ps));
        }
        let (gamma_opt, ps) = optimize_penalty(&stats, plan.scheme)?;
        let renorm: Vec<f64> = ps.iter().map(|&p| renormalize(p, plan.scheme)).collect();
        let mut rng = derived_rng(master_seed, 0xB00F ^ alpha_bits);
        let (p_mean, p_stderr) = bootstrap_mean(&renorm, bootstrap_b, &mut rng)?;
        points.push(StatsPoint {
            alpha,
            scheme: plan.scheme,
            gamma_opt,
            p_mean,
            p_stderr,
        });
    }
    Ok(SuccessStats { points })
}

/// CSV with one row per (instance, gamma, cycle). Carries the instance's
/// clause density so downstream statistics need no other inputs.
pub fn cycles_csv(plan: &ExperimentPlan, records: &[RunRecord]) -> String {
    let mut rows: BTreeMap<(usize, u64, usize), (usize, usize, usize, usize, f64, usize)> =
        BTreeMap::new();
    for r in records {
        let e = rows
            .entry((r.instance, r.gamma.to_bits(), r.cycle))
            .or_insert((0, 0, 0, 0, 0.0, 0));
        e.0 += usize::from(r.success);
        e.1 += 1;
        e.2 += r.n_broken;
        e.3 += r.n_ties;
        if r.p_dec.is_finite() {
            e.4 += r.p_dec;
            e.5 += 1;
        }
    }
    let mut out =
        String::from("instance,alpha,gamma,cycle,runs,successes,mean_broken,mean_ties,mean_pdec\n");
    for ((inst, gamma_bits, cycle), (succ, runs, broken, ties, pdec_sum, pdec_n)) in rows {
        let gamma = f64::from_bits(gamma_bits);
        let alpha = plan.instances[inst].alpha;
        let mean_broken = broken as f64 / runs as f64;
        let mean_ties = ties as f64 / runs as f64;
        let mean_pdec = if pdec_n > 0 {
            pdec_sum / pdec_n as f64
        } else {
            f64::NAN
        };
        writeln!(
            out,
            "{inst},{alpha},{gamma},{cycle},{runs},{succ},{mean_broken},{mean_ties},{mean_pdec}"
        )
        .unwrap();
    }
    out
}

/// One parsed row of a cycles CSV.
#[derive(Clone, Debug)]
pub struct CycleRow {
    pub instance: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub cycle: usize,
    pub runs: usize,
    pub successes: usize,
}

pub fn parse_cycles_csv(text: &str) -> Result<Vec<CycleRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            return Err(Error::Parse(format!("bad cycles row {line:?}")));
        }
        let p = |t: &str| -> Result<f64> {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad number {t:?}")))
        };
        rows.push(CycleRow {
            instance: p(cols[0])? as usize,
            alpha: p(cols[1])?,
            gamma: p(cols[2])?,
            cycle: p(cols[3])? as usize,
            runs: p(cols[4])? as usize,
            successes: p(cols[5])? as usize,
        });
    }
    Ok(rows)
}

/// Recomputes aggregated per-alpha statistics from parsed cycle rows.
pub fn stats_from_rows(
    rows: &[CycleRow],
    scheme: Scheme,
    bootstrap_b: usize,
    master_seed: u64,
) -> Result<SuccessStats> {
    // (alpha, gamma) -> instance -> per-cycle fractions.
    let mut table: BTreeMap<(u64, u64), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        table
            .entry((r.alpha.to_bits(), r.gamma.to_bits()))
            .or_default()
            .entry(r.instance)
            .or_default()
            .push(r.successes as f64 / r.runs.max(1) as f64);
    }
    let mut by_alpha: BTreeMap<u64, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    for ((alpha_bits, gamma_bits), insts) in table {
        let ps: Vec<f64> = insts
            .values()
            .map(|fracs| fracs.iter().sum::<f64>() / fracs.len() as f64)
            .collect();
        by_alpha
            .entry(alpha_bits)
            .or_default()
            .push((f64::from_bits(gamma_bits), ps));
    }
    let mut points = Vec::new();
    for (alpha_bits, stats) in by_alpha {
        let (gamma_opt, ps) = optimize_penalty(&stats, scheme)?;
        let renorm: Vec<f64> = ps.iter().map(|&p| renormalize(p, scheme)).collect();
        let mut rng = derived_rng(master_seed, 0xB00F ^ alpha_bits);
        let (p_mean, p_stderr) = bootstrap_mean(&renorm, bootstrap_b, &mut rng)?;
        points.push(StatsPoint {
            alpha: f64::from_bits(alpha_bits),
            scheme,
            gamma_opt,
            p_mean,
            p_stderr,
        });
    }
    Ok(SuccessStats { points })
}

/// CSV with one row per readout, mirroring the decoder record columns.
pub fn readouts_csv(records: &[RunRecord], decoder: DecoderKind) -> String {
    let mut out = String::from("instance,gamma,cycle,run,strategy,n_broken,n_ties,p_dec,success\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.instance,
            r.gamma,
            r.cycle,
            r.run,
            decoder.name(),
            r.n_broken,
            r.n_ties,
            r.p_dec,
            u8::from(r.success)
        )
        .unwrap();
    }
    out
}

/// Plot-data CSV: `alpha,scheme,gamma_opt,P_mean,P_stderr` sorted by
/// (scheme, alpha). Full float precision; re-reading reproduces the stats.
pub fn emit_plot_data(stats: &SuccessStats) -> Result<String> {
    if stats.points.is_empty() {
        return Err(Error::Parameter("no stats points to emit".into()));
    }
    let mut pts = stats.points.clone();
    pts.sort_by(|a, b| {
        a.scheme
            .name()
            .cmp(b.scheme.name())
            .then(a.alpha.total_cmp(&b.alpha))
    });
    let mut out = String::from("alpha,scheme,gamma_opt,P_mean,P_stderr\n");
    for p in pts {
        writeln!(
            out,
            "{},{},{},{},{}",
            crate::util::fmt_f64(p.alpha),
            p.scheme.name(),
            crate::util::fmt_f64(p.gamma_opt),
            crate::util::fmt_f64(p.p_mean),
            crate::util::fmt_f64(p.p_stderr)
        )
        .unwrap();
    }
    Ok(out)
}

pub fn read_plot_data(text: &str) -> Result<SuccessStats> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("bad plot-data row {line:?}")));
        }
        let parse = |t: &str| -> Result<f64> {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad number {t:?}")))
        };
        let scheme = match cols[1] {
            "direct" => Scheme::Direct,
            "me" => Scheme::Me,
            "qacme" => Scheme::QacMe,
            other => return Err(Error::Parse(format!("unknown scheme {other:?}"))),
        };
        points.push(StatsPoint {
            alpha: parse(cols[0])?,
            scheme,
            gamma_opt: parse(cols[2])?,
            p_mean: parse(cols[3])?,
            p_stderr: parse(cols[4])?,
        });
    }
    Ok(SuccessStats { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::generate_planted;
    use crate::topology::{chimera, two_level_grid};
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    fn small_plan(scheme: Scheme, cycles: usize, runs: usize, chi: f64) -> ExperimentPlan {
        let hw = chimera(2, 2, 4, &BTreeSet::new()).unwrap();
        let lg = two_level_grid(2, &BTreeSet::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let instances: Vec<PlantedInstance> = (0..3)
            .map(|_| generate_planted(lg.graph(), 1.0, Default::default(), &mut rng).unwrap())
            .collect();
        ExperimentPlan {
            instances,
            logical_graph: lg,
            hardware: hw,
            scheme,
            penalty_grid: vec![0.2, 0.4],
            penalty_kind: PenaltyKind::Uniform,
            cycles,
            runs_per_cycle: runs,
            noise: NoiseModel::new(chi).unwrap(),
            solver: SolverSpec::Sa(SaParams::new(2.0, 0.05, 60, 1)),
            decoder: DecoderKind::Em,
        }
    }

    #[test]
    fn record_count_and_determinism() {
        let plan = small_plan(Scheme::Me, 2, 5, 0.0);
        let a = run_pipeline(&plan, 99).unwrap();
        assert_eq!(a.len(), 3 * 2 * 2 * 5);
        let b = run_pipeline(&plan, 99).unwrap();
        assert_eq!(a, b);
        let c = run_pipeline(&plan, 100).unwrap();
        assert_ne!(a, c, "different seeds should differ somewhere");
        assert_eq!(cycles_csv(&plan, &a), cycles_csv(&plan, &b));
        // Round-trip through the CSV reproduces the aggregation.
        let rows = parse_cycles_csv(&cycles_csv(&plan, &a)).unwrap();
        let direct = aggregate(&plan, &a, 300, 99).unwrap();
        let via_csv = stats_from_rows(&rows, plan.scheme, 300, 99).unwrap();
        assert_eq!(direct.points.len(), via_csv.points.len());
        for (x, y) in direct.points.iter().zip(&via_csv.points) {
            assert_eq!(x.gamma_opt, y.gamma_opt);
            assert!((x.p_mean - y.p_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_solver_always_succeeds() {
        // Exact solver, no noise: every decodable instance succeeds.
        let mut plan = small_plan(Scheme::Me, 1, 1, 0.0);
        plan.solver = SolverSpec::Brute;
        plan.penalty_grid = vec![1.0];
        let records = run_pipeline(&plan, 1).unwrap();
        assert!(records.iter().all(|r| r.success), "{records:?}");
    }

    #[test]
    fn success_probability_is_cycle_mean() {
        let rec = |instance, cycle, success| RunRecord {
            instance,
            gamma: 0.2,
            cycle,
            run: 0,
            success,
            n_broken: 0,
            n_ties: 0,
            p_dec: 1.0,
        };
        // Cycle fractions {1.0, 0.0} -> 0.5.
        let records = vec![rec(0, 0, true), rec(0, 1, false)];
        assert_eq!(success_probability(&records, 0, 0.2).unwrap(), 0.5);

        // Synthetic per-cycle fractions.
        let mut records = Vec::new();
        let fractions = [0.25, 0.75, 1.0];
        for (cycle, &f) in fractions.iter().enumerate() {
            for run in 0..4 {
                let mut r = rec(1, cycle, (run as f64) < 4.0 * f);
                r.run = run;
                records.push(r);
            }
        }
        let want = fractions.iter().sum::<f64>() / 3.0;
        assert!((success_probability(&records, 1, 0.2).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn renormalization_values() {
        assert_eq!(renormalize(0.5, Scheme::Direct), 0.9375);
        assert_eq!(renormalize(0.5, Scheme::Me), 0.75);
        assert_eq!(renormalize(0.5, Scheme::QacMe), 0.5);
        for scheme in [Scheme::Direct, Scheme::Me, Scheme::QacMe] {
            assert_eq!(renormalize(0.0, scheme), 0.0);
            assert_eq!(renormalize(1.0, scheme), 1.0);
        }
        // Monotone and ordered Direct >= ME >= QAC-ME on (0,1).
        for k in 1..20 {
            let p = k as f64 / 20.0;
            let d = renormalize(p, Scheme::Direct);
            let m = renormalize(p, Scheme::Me);
            let q = renormalize(p, Scheme::QacMe);
            assert!(d >= m && m >= q);
            let p2 = p + 0.01;
            assert!(renormalize(p2, Scheme::Direct) > d);
            assert!(renormalize(p2, Scheme::Me) > m);
        }
    }

    #[test]
    fn penalty_optimization() {
        // Unimodal mean peaked at 0.2.
        let stats = vec![
            (0.1, vec![0.3, 0.4]),
            (0.2, vec![0.6, 0.7]),
            (0.3, vec![0.5, 0.5]),
        ];
        let (g, ps) = optimize_penalty(&stats, Scheme::QacMe).unwrap();
        assert_eq!(g, 0.2);
        assert_eq!(ps, vec![0.6, 0.7]);

        // Tie resolves to the smaller gamma.
        let stats = vec![(0.2, vec![0.5]), (0.1, vec![0.5])];
        let (g, _) = optimize_penalty(&stats, Scheme::Me).unwrap();
        assert_eq!(g, 0.1);

        // Single-point grid.
        let (g, _) = optimize_penalty(&[(0.7, vec![0.9])], Scheme::Me).unwrap();
        assert_eq!(g, 0.7);
    }

    #[test]
    fn bootstrap_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        // Constant values: zero spread up to summation rounding.
        let (m, s) = bootstrap_mean(&vec![0.42; 50], 500, &mut rng).unwrap();
        assert!((m - 0.42).abs() < 1e-12);
        assert!(s < 1e-12);

        // Uniform draws: stderr within 20% of sample_std / sqrt(n).
        let values: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let sample_mean = values.iter().sum::<f64>() / 100.0;
        let sample_std = (values
            .iter()
            .map(|v| (v - sample_mean).powi(2))
            .sum::<f64>()
            / 99.0)
            .sqrt();
        let (_, stderr) = bootstrap_mean(&values, 5000, &mut rng).unwrap();
        let want = sample_std / 10.0;
        assert!(
            (stderr - want).abs() < 0.2 * want,
            "stderr {stderr} vs {want}"
        );

        // Permutation invariance under matched seeds.
        let mut shuffled = values.clone();
        shuffled.reverse();
        let mut r1 = ChaCha8Rng::seed_from_u64(61);
        let mut r2 = ChaCha8Rng::seed_from_u64(61);
        let (m1, s1) = bootstrap_mean(&values, 2000, &mut r1).unwrap();
        let (m2, s2) = bootstrap_mean(&shuffled, 2000, &mut r2).unwrap();
        assert!((m1 - m2).abs() < 0.02);
        assert!((s1 - s2).abs() < 0.01);
    }

    #[test]
    fn plot_data_round_trip() {
        let stats = SuccessStats {
            points: vec![
                StatsPoint {
                    alpha: 0.94,
                    scheme: Scheme::QacMe,
                    gamma_opt: 0.2,
                    p_mean: 1.0 / 3.0,
                    p_stderr: 0.0123456789,
                },
                StatsPoint {
                    alpha: 0.4,
                    scheme: Scheme::Me,
                    gamma_opt: 0.1,
                    p_mean: 0.7,
                    p_stderr: 0.001,
                },
            ],
        };
        let text = emit_plot_data(&stats).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains(",me,"));
        let back = read_plot_data(&text).unwrap();
        // Sorted by (scheme, alpha).
        assert_eq!(back.points.len(), 2);
        assert_eq!(back.points[0].scheme, Scheme::Me);
        let qac = &back.points[1];
        assert_eq!(qac.p_mean.to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(qac.p_stderr.to_bits(), 0.0123456789f64.to_bits());

        let empty = SuccessStats::default();
        assert!(emit_plot_data(&empty).is_err());
    }

    #[test]
    fn gauge_neutrality_with_exact_solver() {
        // With chi = 0 and an exact solver, random gauges cannot change
        // outcomes at all. (QAC-ME on this host needs 32 qubits, past the
        // brute-force limit, so ME is the largest exactly solvable scheme.)
        let mut plan = small_plan(Scheme::Me, 3, 2, 0.0);
        plan.solver = SolverSpec::Brute;
        plan.penalty_grid = vec![0.5];
        let records = run_pipeline(&plan, 7).unwrap();
        assert!(records.iter().all(|r| r.success));
    }

    #[test]
    fn aggregate_produces_per_alpha_points() {
        let plan = small_plan(Scheme::Me, 2, 4, 0.02);
        let records = run_pipeline(&plan, 5).unwrap();
        let stats = aggregate(&plan, &records, 200, 5).unwrap();
        assert_eq!(stats.points.len(), 1); // all instances share alpha = 1.0
        let point = &stats.points[0];
        assert!(point.p_mean >= 0.0 && point.p_mean <= 1.0);
        assert!(point.p_stderr >= 0.0);
        assert!(plan.penalty_grid.contains(&point.gamma_opt));
    }
}
