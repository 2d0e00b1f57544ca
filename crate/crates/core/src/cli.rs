//! Command-line entry points: generate, embed, solve, decode, percolate,
//! experiment, stats. One binary, shared seeding discipline, a manifest in
//! every output directory, byte-deterministic outputs.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::decoding::{
    classify_groups, decode_em, decode_local, decode_recursive, is_success, DecoderKind, EmMode,
    LocalRule,
};
use crate::embedding::{
    assign_penalties, embed_direct, embed_me, embed_qacme, EmbeddedProblem, NoiseModel,
    PenaltyStrategy, Scheme,
};
use crate::experiment::{
    aggregate, cycles_csv, emit_plot_data, parse_cycles_csv, readouts_csv, run_pipeline,
    stats_from_rows, ExperimentPlan, PenaltyKind, SolverSpec,
};
use crate::instances::{
    deform_embeddable, generate_planted, generate_weighted, instance_file_text,
    parse_instance_file, LengthMix,
};
use crate::ising::{IsingProblem, SpinConfig};
use crate::percolation::{domain_size_scan, estimate_site_threshold, Lattice};
use crate::solvers::{
    brute_force, sa_run, sqa_run, AnnealSchedule, ReadoutPolicy, SaParams, SqaParams,
};
use crate::topology::{chimera, embeddable_subgraph, two_level_grid, HardwareGraph, LogicalGraph};
use crate::util::derived_rng;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "qacme",
    version,
    about = "Quantum annealing correction with minor embedding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate planted-instance files.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Host graph: 2lg<N> or emb<N> (embeddable subgraph of an NxNx4 Chimera).
        #[arg(long)]
        graph: String,
        /// Clause density.
        #[arg(long)]
        alpha: f64,
        /// Number of instances.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Instance family.
        #[arg(long, default_value = "planted", value_parser = ["planted", "weighted", "deformed"])]
        family: String,
        /// Probability of a 4-loop (the rest are 6-loops).
        #[arg(long, default_value_t = 0.5)]
        p4: f64,
        /// Explicit loop lengths (uniform mix), overriding the 4/6 default.
        /// emb hosts have girth 8 and default to length 8.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        /// Deformed family: size of the randomly picked vertex subset.
        #[arg(long, default_value_t = 35)]
        picked: usize,
        /// Dead-qubit mask file (X lines); emb hosts only.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Embed instance files under a scheme and fix the penalties.
    Embed {
        #[command(flatten)]
        common: Common,
        /// Directory of .inst files.
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, value_parser = ["direct", "me", "qacme"])]
        scheme: String,
        #[arg(long, default_value = "uniform", value_parser = ["uniform", "nonuniform"])]
        penalty_kind: String,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        /// Dead-qubit mask file (X lines).
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Run a solver on a problem or embedded-problem file.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Problem file (graph lines + H/J, optionally GROUP/PEN).
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "sqa", value_parser = ["sqa", "sa", "brute"])]
        solver: String,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 64)]
        ntau: usize,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value = "random-slice", value_parser = ["random-slice", "majority-slice"])]
        readout: String,
        /// Independent anneals (SQA).
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Initial/final SA temperatures.
        #[arg(long, default_value_t = 2.0)]
        t_init: f64,
        #[arg(long, default_value_t = 0.05)]
        t_final: f64,
        /// Tabulated schedule file with `s A B` lines.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Decode readouts against an embedded problem.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Embedded-problem file produced by `embed`.
        #[arg(long)]
        embedded: PathBuf,
        /// Readout file with CONFIG blocks.
        #[arg(long)]
        readouts: PathBuf,
        #[arg(long, default_value = "em",
              value_parser = ["ct", "mv-ct", "mv-em", "em", "mv-em-r", "recursive"])]
        decoder: String,
        /// Instance file; enables the success column.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Percolation analyses on reference lattices.
    Percolate {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        what: PercolateCmd,
    },
    /// Run a full experiment plan.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// TOML plan file.
        #[arg(long, alias = "config")]
        plan: PathBuf,
    },
    /// Aggregate a cycles CSV into plot data.
    Stats {
        #[command(flatten)]
        common: Common,
        /// cycles.csv produced by `experiment`.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_parser = ["direct", "me", "qacme"])]
        scheme: String,
        /// Bootstrap resamples.
        #[arg(long, default_value_t = 5000)]
        bootstrap: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PercolateCmd {
    /// Central-site domain sizes on N x N x 2 grids.
    Scan {
        /// Grid sides, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0.375)]
        p: f64,
        #[arg(long, default_value_t = 10000)]
        trials: usize,
    },
    /// Site-percolation threshold via spanning-curve crossings.
    Threshold {
        #[arg(long, value_parser = ["square", "cubic", "2lg"])]
        lattice: String,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 600)]
        trials: usize,
    },
    /// Cluster-size histogram of random occupation on a 2LG host.
    Clusters {
        /// Host graph: 2lg<N>.
        #[arg(long)]
        graph: String,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

/// Parses argv and routes to the subcommand. Exit codes: 0 success, 1 domain
/// error, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let argv_echo: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli, &argv_echo) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: Cli, argv_echo: &[String]) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            graph,
            alpha,
            count,
            family,
            p4,
            lengths,
            picked,
            mask,
        } => {
            setup(&common)?;
            cmd_generate(
                &common,
                &graph,
                alpha,
                count,
                &family,
                p4,
                lengths.as_deref(),
                picked,
                mask.as_deref(),
            )?;
            write_manifest(&common, argv_echo)
        }
        Command::Embed {
            common,
            instances,
            scheme,
            penalty_kind,
            gamma,
            mask,
        } => {
            setup(&common)?;
            cmd_embed(
                &common,
                &instances,
                &scheme,
                &penalty_kind,
                gamma,
                mask.as_deref(),
            )?;
            write_manifest(&common, argv_echo)
        }
        Command::Solve {
            common,
            problem,
            solver,
            beta,
            ntau,
            sweeps,
            restarts,
            readout,
            runs,
            t_init,
            t_final,
            schedule,
        } => {
            setup(&common)?;
            cmd_solve(
                &common,
                &problem,
                &solver,
                beta,
                ntau,
                sweeps,
                restarts,
                &readout,
                runs,
                t_init,
                t_final,
                schedule.as_deref(),
            )?;
            write_manifest(&common, argv_echo)
        }
        Command::Decode {
            common,
            embedded,
            readouts,
            decoder,
            instance,
        } => {
            setup(&common)?;
            cmd_decode(&common, &embedded, &readouts, &decoder, instance.as_deref())?;
            write_manifest(&common, argv_echo)
        }
        Command::Percolate { common, what } => {
            setup(&common)?;
            cmd_percolate(&common, &what)?;
            write_manifest(&common, argv_echo)
        }
        Command::Experiment { common, plan } => {
            setup(&common)?;
            cmd_experiment(&common, &plan)?;
            write_manifest(&common, argv_echo)
        }
        Command::Stats {
            common,
            records,
            scheme,
            bootstrap,
        } => {
            setup(&common)?;
            cmd_stats(&common, &records, &scheme, bootstrap)?;
            write_manifest(&common, argv_echo)
        }
    }
}

fn setup(common: &Common) -> Result<()> {
    if let Some(threads) = common.threads {
        // A second invocation in-process keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    fs::create_dir_all(&common.out)?;
    Ok(())
}

fn write_manifest(common: &Common, argv_echo: &[String]) -> Result<()> {
    let mut text = format!("qacme {}\n", env!("CARGO_PKG_VERSION"));
    writeln!(text, "args: {}", argv_echo.join(" ")).unwrap();
    writeln!(text, "seed: {}", common.seed).unwrap();
    fs::write(common.out.join("manifest.txt"), text)?;
    Ok(())
}

fn read_mask(path: Option<&Path>) -> Result<BTreeSet<usize>> {
    let Some(path) = path else {
        return Ok(BTreeSet::new());
    };
    let text = fs::read_to_string(path)?;
    let mut mask = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["X", v] => {
                mask.insert(
                    v.parse()
                        .map_err(|_| Error::Parse(format!("bad mask index {v:?}")))?,
                );
            }
            _ => {
                return Err(Error::Parse(format!(
                    "mask lines must be `X <qubit>`: {line:?}"
                )))
            }
        }
    }
    Ok(mask)
}

/// `2lg<N>` or `emb<N>`; emb carries its Chimera hardware alongside.
fn parse_host(spec: &str, mask: Option<&Path>) -> Result<(LogicalGraph, Option<HardwareGraph>)> {
    if let Some(n) = spec.strip_prefix("2lg") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Parameter(format!("bad graph spec {spec:?}")))?;
        if mask.is_some() {
            return Err(Error::Parameter("mask applies to emb hosts only".into()));
        }
        Ok((two_level_grid(n, &BTreeSet::new())?, None))
    } else if let Some(n) = spec.strip_prefix("emb") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Parameter(format!("bad graph spec {spec:?}")))?;
        let hw = chimera(n, n, 4, &read_mask(mask)?)?;
        let lg = embeddable_subgraph(&hw)?;
        Ok((lg, Some(hw)))
    } else {
        Err(Error::Parameter(format!(
            "unknown graph spec {spec:?}; use 2lg<N> or emb<N>"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    common: &Common,
    graph: &str,
    alpha: f64,
    count: usize,
    family: &str,
    p4: f64,
    lengths: Option<&[usize]>,
    picked: usize,
    mask: Option<&Path>,
) -> Result<()> {
    let (lg, _) = parse_host(graph, mask)?;
    let mix = match lengths {
        Some(ls) => LengthMix::uniform(ls),
        None if graph.starts_with("emb") => LengthMix::single(8),
        None => LengthMix::four_six(p4),
    };
    for i in 0..count {
        let mut rng = derived_rng(common.seed, i as u64);
        let base = generate_planted(lg.graph(), alpha, mix.clone(), &mut rng)?;
        let inst = match family {
            "planted" => base,
            "weighted" => generate_weighted(&lg, &base)?,
            "deformed" => {
                if !graph.starts_with("emb") {
                    return Err(Error::Parameter(
                        "deformed instances require an emb host".into(),
                    ));
                }
                deform_embeddable(lg.graph(), &base, picked, &mut rng)?
            }
            other => return Err(Error::Parameter(format!("unknown family {other:?}"))),
        };
        let path = common.out.join(format!("instance_{i:04}.inst"));
        fs::write(path, instance_file_text(&lg, &inst))?;
    }
    println!("wrote {count} {family} instances at alpha {alpha} on {graph}");
    Ok(())
}

fn list_instances(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "inst"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Parameter(format!(
            "no .inst files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn cmd_embed(
    common: &Common,
    instances: &Path,
    scheme: &str,
    penalty_kind: &str,
    gamma: f64,
    mask: Option<&Path>,
) -> Result<()> {
    let files = list_instances(instances)?;
    let mut embedded_count = 0;
    for (i, file) in files.iter().enumerate() {
        let (lg, inst) = parse_instance_file(&fs::read_to_string(file)?)?;
        let hw = chimera(lg.side, lg.side, 4, &read_mask(mask)?)?;
        let e = match scheme {
            "direct" => embed_direct(&inst.problem, &lg, &hw)?,
            "me" => embed_me(&inst.problem, &lg, &hw)?,
            "qacme" => embed_qacme(&inst.problem, &lg, &hw)?,
            other => return Err(Error::Parameter(format!("unknown scheme {other:?}"))),
        };
        let e = if scheme == "direct" {
            e
        } else {
            let strat = match penalty_kind {
                "uniform" => PenaltyStrategy::Uniform(gamma),
                "nonuniform" => PenaltyStrategy::Nonuniform(gamma),
                other => return Err(Error::Parameter(format!("unknown penalty kind {other:?}"))),
            };
            let (e, flagged) = assign_penalties(e, strat)?;
            for l in flagged {
                eprintln!("warning: group {l} has no logical neighbors; penalty set to 0");
            }
            e
        };
        let mut text = hw.to_text();
        text.push_str(&format!("SCHEME {scheme}\n"));
        text.push_str(&e.to_text());
        fs::write(common.out.join(format!("embedded_{i:04}.emb")), text)?;
        embedded_count += 1;
    }
    println!("embedded {embedded_count} instances with scheme {scheme}");
    Ok(())
}

/// Splits a bundled file into hardware-graph lines and payload lines.
fn split_graph_payload(text: &str) -> (String, String) {
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
    (graph_lines, rest)
}

fn load_embedded(path: &Path) -> Result<(HardwareGraph, EmbeddedProblem)> {
    let text = fs::read_to_string(path)?;
    let (graph_lines, rest) = split_graph_payload(&text);
    let hw = HardwareGraph::from_text(&graph_lines)?;
    let e = EmbeddedProblem::from_text(hw.vertex_count(), &rest)?;
    Ok((hw, e))
}

fn write_readouts(path: &Path, configs: &[SpinConfig]) -> Result<()> {
    let mut out = String::new();
    for (k, c) in configs.iter().enumerate() {
        writeln!(out, "CONFIG {k}").unwrap();
        out.push_str(&c.to_text());
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_readouts(path: &Path, n: usize) -> Result<Vec<SpinConfig>> {
    let text = fs::read_to_string(path)?;
    let mut configs = Vec::new();
    let mut block = String::new();
    for line in text.lines() {
        if line.trim_start().starts_with("CONFIG") {
            if !block.is_empty() {
                configs.push(SpinConfig::from_text(n, &block)?);
                block.clear();
            }
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    if !block.trim().is_empty() {
        configs.push(SpinConfig::from_text(n, &block)?);
    }
    if configs.is_empty() {
        return Err(Error::Parameter("no CONFIG blocks in readout file".into()));
    }
    Ok(configs)
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    common: &Common,
    problem: &Path,
    solver: &str,
    beta: f64,
    ntau: usize,
    sweeps: usize,
    restarts: usize,
    readout: &str,
    runs: usize,
    t_init: f64,
    t_final: f64,
    schedule: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(problem)?;
    let (graph_lines, rest) = split_graph_payload(&text);
    let hw = HardwareGraph::from_text(&graph_lines)
        .ok()
        .map(|hw| hw.vertex_count());
    let n = match hw {
        Some(n) => n,
        None => {
            let lg = LogicalGraph::from_text(&graph_lines)?;
            lg.vertex_count()
        }
    };
    // Embedded files carry GROUP/PEN lines; fold penalties into the problem.
    let p: IsingProblem = if rest.lines().any(|l| l.trim_start().starts_with("GROUP")) {
        EmbeddedProblem::from_text(n, &rest)?.solver_problem()?
    } else {
        let problem_only: String = rest
            .lines()
            .filter(|l| {
                let f = l.trim_start();
                f.starts_with("H ") || f.starts_with("J ")
            })
            .map(|l| format!("{l}\n"))
            .collect();
        IsingProblem::from_text(n, &problem_only)?
    };

    let sched = match schedule {
        Some(path) => AnnealSchedule::from_text(&fs::read_to_string(path)?)?,
        None => AnnealSchedule::linear(),
    };
    let mut rng = derived_rng(common.seed, 0x501E);
    let mut configs = Vec::new();
    let mut energies = Vec::new();
    match solver {
        "sqa" => {
            let policy = match readout {
                "majority-slice" => ReadoutPolicy::MajoritySlice,
                _ => ReadoutPolicy::RandomSlice,
            };
            let params = SqaParams {
                n_tau: ntau,
                sweeps,
                beta,
                readout: policy,
                block_size: 1,
            };
            for _ in 0..runs {
                let r = sqa_run(&p, &sched, &params, &mut rng)?;
                energies.push(r.energies[0]);
                configs.extend(r.configs);
            }
        }
        "sa" => {
            let r = sa_run(
                &p,
                &SaParams::new(t_init, t_final, sweeps, restarts),
                &mut rng,
            )?;
            energies.extend(r.energies.iter().copied());
            configs.extend(r.configs);
        }
        "brute" => {
            let r = brute_force(&p)?;
            energies.extend(r.energies.iter().copied());
            configs.extend(r.configs);
        }
        other => return Err(Error::Parameter(format!("unknown solver {other:?}"))),
    }
    write_readouts(&common.out.join("readouts.txt"), &configs)?;
    let mut csv = String::from("run,energy\n");
    for (k, e) in energies.iter().enumerate() {
        writeln!(csv, "{k},{e}").unwrap();
    }
    fs::write(common.out.join("energies.csv"), csv)?;
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    println!("{} configs written; best energy {best}", configs.len());
    Ok(())
}

fn cmd_decode(
    common: &Common,
    embedded: &Path,
    readouts: &Path,
    decoder: &str,
    instance: Option<&Path>,
) -> Result<()> {
    let (hw, e) = load_embedded(embedded)?;
    let reference = match instance {
        Some(path) => {
            let (_, inst) = parse_instance_file(&fs::read_to_string(path)?)?;
            Some(inst.reference_energy)
        }
        None => None,
    };
    let configs = read_readouts(readouts, hw.vertex_count())?;
    let mut rng = derived_rng(common.seed, 0xDEC0);
    let mut csv = String::from("readout,strategy,n_broken,n_ties,p_dec,success\n");
    for (k, cfg) in configs.iter().enumerate() {
        let states = classify_groups(&e, cfg)?;
        let n_broken = states.iter().filter(|(_, s)| s.is_broken()).count();
        let n_ties = states.iter().filter(|(_, s)| s.is_tie()).count();
        let decoded = match decoder {
            "ct" => decode_local(e.logical.vertex_count(), &states, LocalRule::Ct, &mut rng),
            "mv-ct" => decode_local(e.logical.vertex_count(), &states, LocalRule::MvCt, &mut rng),
            "em" | "mv-em" | "mv-em-r" => {
                let mode = match decoder {
                    "em" => EmMode::Em,
                    "mv-em" => EmMode::MvEm,
                    _ => EmMode::MvEmR,
                };
                let sa = SaParams::decoding_defaults(&e.logical);
                decode_em(&e, &states, mode, &sa, &mut rng)?
            }
            "recursive" => {
                let mut solver = |p: &IsingProblem, r: &mut rand_chacha::ChaCha8Rng| {
                    if p.vertex_count() <= crate::solvers::BRUTE_FORCE_LIMIT {
                        brute_force(p)
                    } else {
                        sa_run(p, &SaParams::decoding_defaults(p), r)
                    }
                };
                decode_recursive(&e, &states, &mut solver, &mut rng)?
            }
            other => return Err(Error::Parameter(format!("unknown decoder {other:?}"))),
        };
        let success = match reference {
            Some(ref_e) => {
                if is_success(&decoded, ref_e, &e.logical)? {
                    "1"
                } else {
                    "0"
                }
            }
            None => "",
        };
        let p_dec = decoded.p_dec.map_or(String::new(), |p| p.to_string());
        writeln!(csv, "{k},{decoder},{n_broken},{n_ties},{p_dec},{success}").unwrap();
    }
    fs::write(common.out.join("decoded.csv"), csv)?;
    println!("decoded {} readouts with {decoder}", configs.len());
    Ok(())
}

fn cmd_percolate(common: &Common, what: &PercolateCmd) -> Result<()> {
    match what {
        PercolateCmd::Scan { n, p, trials } => {
            for &side in n {
                let scan = domain_size_scan(side, *p, *trials, common.seed ^ side as u64)?;
                let mut csv = String::from("p,mean_size,stderr\n");
                writeln!(csv, "{},{},{}", scan.p, scan.mean_size, scan.stderr()).unwrap();
                fs::write(common.out.join(format!("scan_n{side}.csv")), csv)?;
                println!("N={side}: mean central domain {:.3}", scan.mean_size);
            }
        }
        PercolateCmd::Threshold {
            lattice,
            sizes,
            trials,
        } => {
            let lat = match lattice.as_str() {
                "square" => Lattice::Square,
                "cubic" => Lattice::Cubic,
                "2lg" => Lattice::TwoLevelGrid,
                other => return Err(Error::Parameter(format!("unknown lattice {other:?}"))),
            };
            let est = estimate_site_threshold(lat, sizes, *trials, common.seed)?;
            let mut csv = String::from("lattice,estimate,err\n");
            writeln!(csv, "{},{},{}", lat.name(), est.estimate, est.stderr).unwrap();
            fs::write(common.out.join("threshold.csv"), csv)?;
            println!(
                "{}: p_th = {:.4} +/- {:.4}",
                lat.name(),
                est.estimate,
                est.stderr
            );
        }
        PercolateCmd::Clusters { graph, p, trials } => {
            let (lg, _) = parse_host(graph, None)?;
            let mut hist = std::collections::BTreeMap::new();
            for t in 0..*trials {
                let mut rng = derived_rng(common.seed, t as u64);
                let set: BTreeSet<usize> = (0..lg.vertex_count())
                    .filter(|_| rand::Rng::random::<f64>(&mut rng) < *p)
                    .collect();
                for (size, count) in crate::percolation::bq_clusters(lg.graph(), &set) {
                    *hist.entry(size).or_insert(0usize) += count;
                }
            }
            let mut csv = String::from("size,count\n");
            for (size, count) in hist {
                writeln!(csv, "{size},{count}").unwrap();
            }
            fs::write(common.out.join("clusters.csv"), csv)?;
            println!("cluster histogram over {trials} trials written");
        }
    }
    Ok(())
}

/// TOML plan file schema.
#[derive(serde::Deserialize, Debug)]
struct PlanFile {
    instances_dir: PathBuf,
    scheme: Scheme,
    penalty_kind: PenaltyKind,
    gamma_grid: Vec<f64>,
    cycles: usize,
    runs_per_cycle: usize,
    #[serde(default)]
    chi: f64,
    decoder: DecoderKind,
    hardware: PlanHardware,
    solver: PlanSolver,
}

#[derive(serde::Deserialize, Debug)]
struct PlanHardware {
    rows: usize,
    cols: usize,
    half: usize,
    #[serde(default)]
    mask_file: Option<PathBuf>,
}

#[derive(serde::Deserialize, Debug)]
struct PlanSolver {
    kind: String,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    n_tau: Option<usize>,
    #[serde(default)]
    sweeps: Option<usize>,
    #[serde(default)]
    readout: Option<String>,
    #[serde(default)]
    block_size: Option<usize>,
    #[serde(default)]
    t_init: Option<f64>,
    #[serde(default)]
    t_final: Option<f64>,
    #[serde(default)]
    restarts: Option<usize>,
    #[serde(default)]
    schedule_file: Option<PathBuf>,
}

fn build_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path)?;
    let file: PlanFile =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("plan file: {e}")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &PathBuf| {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };

    let files = list_instances(&resolve(&file.instances_dir))?;
    let mut logical_graph = None;
    let mut instances = Vec::with_capacity(files.len());
    for f in &files {
        let (lg, inst) = parse_instance_file(&fs::read_to_string(f)?)?;
        match &logical_graph {
            None => logical_graph = Some(lg),
            Some(prev) => {
                if prev.to_text() != lg.to_text() {
                    return Err(Error::Parameter(
                        "instances in the plan use different host graphs".into(),
                    ));
                }
            }
        }
        instances.push(inst);
    }
    let logical_graph = logical_graph.unwrap();
    let mask = file.hardware.mask_file.as_ref().map(resolve);
    let hardware = chimera(
        file.hardware.rows,
        file.hardware.cols,
        file.hardware.half,
        &read_mask(mask.as_deref())?,
    )?;

    let solver = match file.solver.kind.as_str() {
        "sqa" => {
            let schedule = match &file.solver.schedule_file {
                Some(p) => AnnealSchedule::from_text(&fs::read_to_string(resolve(p))?)?,
                None => AnnealSchedule::linear(),
            };
            let readout = match file.solver.readout.as_deref() {
                Some("majority-slice") => ReadoutPolicy::MajoritySlice,
                _ => ReadoutPolicy::RandomSlice,
            };
            SolverSpec::Sqa {
                params: SqaParams {
                    n_tau: file.solver.n_tau.unwrap_or(64),
                    sweeps: file.solver.sweeps.unwrap_or(1000),
                    beta: file
                        .solver
                        .beta
                        .ok_or_else(|| Error::Parameter("sqa solver needs beta".into()))?,
                    readout,
                    block_size: file.solver.block_size.unwrap_or(1),
                },
                schedule,
            }
        }
        "sa" => SolverSpec::Sa(SaParams::new(
            file.solver.t_init.unwrap_or(2.0),
            file.solver.t_final.unwrap_or(0.05),
            file.solver.sweeps.unwrap_or(100),
            file.solver.restarts.unwrap_or(1),
        )),
        "brute" => SolverSpec::Brute,
        other => return Err(Error::Parameter(format!("unknown solver kind {other:?}"))),
    };

    Ok(ExperimentPlan {
        instances,
        logical_graph,
        hardware,
        scheme: file.scheme,
        penalty_grid: file.gamma_grid,
        penalty_kind: file.penalty_kind,
        cycles: file.cycles,
        runs_per_cycle: file.runs_per_cycle,
        noise: NoiseModel::new(file.chi)?,
        solver,
        decoder: file.decoder,
    })
}

fn cmd_experiment(common: &Common, plan_path: &Path) -> Result<()> {
    let plan = build_plan(plan_path)?;
    let records = run_pipeline(&plan, common.seed)?;
    fs::write(common.out.join("cycles.csv"), cycles_csv(&plan, &records))?;
    fs::write(
        common.out.join("readouts.csv"),
        readouts_csv(&records, plan.decoder),
    )?;
    let stats = aggregate(&plan, &records, 5000, common.seed)?;
    fs::write(common.out.join("summary.csv"), emit_plot_data(&stats)?)?;
    println!(
        "experiment complete: {} records over {} instances",
        records.len(),
        plan.instances.len()
    );
    Ok(())
}

fn cmd_stats(common: &Common, records: &Path, scheme: &str, bootstrap: usize) -> Result<()> {
    let scheme = match scheme {
        "direct" => Scheme::Direct,
        "me" => Scheme::Me,
        "qacme" => Scheme::QacMe,
        other => return Err(Error::Parameter(format!("unknown scheme {other:?}"))),
    };
    let rows = parse_cycles_csv(&fs::read_to_string(records)?)?;
    let stats = stats_from_rows(&rows, scheme, bootstrap, common.seed)?;
    fs::write(common.out.join("summary.csv"), emit_plot_data(&stats)?)?;
    println!(
        "aggregated {} rows into {} points",
        rows.len(),
        stats.points.len()
    );
    Ok(())
}
