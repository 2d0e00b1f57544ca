//! Python bindings: graphs, Ising problems, planted instances, embeddings,
//! solvers, decoders, and the percolation / statistics helpers.
//!
//! All randomized entry points take an explicit seed so Python sessions stay
//! reproducible.

use std::collections::BTreeSet;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qacme::decoding::{self, EmMode, LocalRule};
use qacme::embedding::{self, PenaltyStrategy, Scheme, VerticalCouplerMode};
use qacme::experiment;
use qacme::instances::{self, LengthMix};
use qacme::ising;
use qacme::percolation::{self, Lattice};
use qacme::solvers::{self, AnnealSchedule, ReadoutPolicy, SaParams, SqaParams};
use qacme::topology;

fn err(e: qacme::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scheme_from(name: &str) -> PyResult<Scheme> {
    match name {
        "direct" => Ok(Scheme::Direct),
        "me" => Ok(Scheme::Me),
        "qacme" => Ok(Scheme::QacMe),
        other => Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    }
}

#[pyclass(name = "HardwareGraph", skip_from_py_object)]
#[derive(Clone)]
struct PyHardwareGraph {
    inner: topology::HardwareGraph,
}

#[pymethods]
impl PyHardwareGraph {
    /// Chimera graph with M x N cells of half-size L and a dead-qubit list.
    #[staticmethod]
    #[pyo3(signature = (m, n, l, inactive = vec![]))]
    fn chimera(m: usize, n: usize, l: usize, inactive: Vec<usize>) -> PyResult<Self> {
        let mask: BTreeSet<usize> = inactive.into_iter().collect();
        Ok(PyHardwareGraph {
            inner: topology::chimera(m, n, l, &mask).map_err(err)?,
        })
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn active_count(&self) -> usize {
        self.inner.active_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph().edges().to_vec()
    }

    fn qubit(&self, row: usize, col: usize, half: usize, pos: usize) -> usize {
        self.inner.qubit(row, col, half, pos)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyHardwareGraph {
            inner: topology::HardwareGraph::from_text(text).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "HardwareGraph(chimera {}x{}x{}, {} active)",
            self.inner.rows,
            self.inner.cols,
            self.inner.half,
            self.inner.active_count()
        )
    }
}

#[pyclass(name = "LogicalGraph", skip_from_py_object)]
#[derive(Clone)]
struct PyLogicalGraph {
    inner: topology::LogicalGraph,
}

#[pymethods]
impl PyLogicalGraph {
    /// Full two-level grid of side N.
    #[staticmethod]
    #[pyo3(signature = (n, removed_edges = vec![]))]
    fn two_level_grid(n: usize, removed_edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let removed: BTreeSet<(usize, usize)> = removed_edges
            .into_iter()
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        Ok(PyLogicalGraph {
            inner: topology::two_level_grid(n, &removed).map_err(err)?,
        })
    }

    /// Largest 2LG subgraph directly embeddable into a square Chimera graph.
    #[staticmethod]
    fn embeddable_subgraph(hw: &PyHardwareGraph) -> PyResult<Self> {
        Ok(PyLogicalGraph {
            inner: topology::embeddable_subgraph(&hw.inner).map_err(err)?,
        })
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn usable_count(&self) -> usize {
        self.inner.usable_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph().edges().to_vec()
    }

    fn coords(&self, v: usize) -> (usize, usize, usize) {
        self.inner.coords(v)
    }

    fn vertex_id(&self, x: usize, y: usize, z: usize) -> usize {
        self.inner.vertex_id(x, y, z)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "LogicalGraph(2LG side {}, {} usable)",
            self.inner.side,
            self.inner.usable_count()
        )
    }
}

#[pyclass(name = "IsingProblem", skip_from_py_object)]
#[derive(Clone)]
struct PyIsingProblem {
    inner: ising::IsingProblem,
}

#[pymethods]
impl PyIsingProblem {
    #[new]
    fn new(n: usize, h: Vec<f64>, couplings: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Ok(PyIsingProblem {
            inner: ising::IsingProblem::new(n, h, couplings).map_err(err)?,
        })
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h().to_vec()
    }

    #[getter]
    fn couplings(&self) -> Vec<(usize, usize, f64)> {
        self.inner.couplings().to_vec()
    }

    fn energy(&self, spins: Vec<i8>) -> PyResult<f64> {
        let cfg = ising::SpinConfig::new(spins).map_err(err)?;
        ising::energy(&self.inner, &cfg).map_err(err)
    }

    fn frustration_fraction(&self, spins: Vec<i8>) -> PyResult<f64> {
        let cfg = ising::SpinConfig::new(spins).map_err(err)?;
        ising::frustration_fraction(&self.inner, &cfg).map_err(err)
    }

    fn inverse_range(&self) -> PyResult<f64> {
        ising::inverse_range(&self.inner).map_err(err)
    }

    fn normalize_couplings(&self) -> PyResult<Self> {
        Ok(PyIsingProblem {
            inner: ising::normalize_couplings(&self.inner).map_err(err)?,
        })
    }

    /// Gauged copy (h_i -> g_i h_i, J_ij -> g_i g_j J_ij).
    fn apply_gauge(&self, signs: Vec<i8>) -> PyResult<Self> {
        let g = ising::GaugeVector::new(signs).map_err(err)?;
        Ok(PyIsingProblem {
            inner: ising::apply_gauge(&self.inner, &g),
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(n: usize, text: &str) -> PyResult<Self> {
        Ok(PyIsingProblem {
            inner: ising::IsingProblem::from_text(n, text).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "IsingProblem({} vertices, {} couplings)",
            self.inner.vertex_count(),
            self.inner.couplings().len()
        )
    }
}

/// Maps a configuration through a gauge, s_i -> g_i s_i (an involution).
#[pyfunction]
fn ungauge(spins: Vec<i8>, signs: Vec<i8>) -> PyResult<Vec<i8>> {
    let cfg = ising::SpinConfig::new(spins).map_err(err)?;
    let g = ising::GaugeVector::new(signs).map_err(err)?;
    Ok(ising::ungauge(&cfg, &g).spins().to_vec())
}

#[pyclass(name = "PlantedInstance", skip_from_py_object)]
#[derive(Clone)]
struct PyPlantedInstance {
    inner: instances::PlantedInstance,
}

#[pymethods]
impl PyPlantedInstance {
    #[getter]
    fn problem(&self) -> PyIsingProblem {
        PyIsingProblem {
            inner: self.inner.problem.clone(),
        }
    }

    #[getter]
    fn planted(&self) -> Vec<i8> {
        self.inner.planted.spins().to_vec()
    }

    #[getter]
    fn reference_energy(&self) -> f64 {
        self.inner.reference_energy
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn deformed(&self) -> bool {
        self.inner.deformed
    }

    #[getter]
    fn loop_count(&self) -> usize {
        self.inner.loops.len()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn planted_energy(&self) -> PyResult<f64> {
        instances::planted_energy(&self.inner).map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "PlantedInstance(alpha {:.3}, {} loops, reference energy {:.6})",
            self.inner.alpha,
            self.inner.loops.len(),
            self.inner.reference_energy
        )
    }
}

/// Planted frustrated-loop instance on the logical graph. `lengths` defaults
/// to an even 4/6 mix; pass e.g. [8] on girth-8 hosts.
#[pyfunction]
#[pyo3(signature = (lg, alpha, seed, lengths = None))]
fn generate_planted(
    lg: &PyLogicalGraph,
    alpha: f64,
    seed: u64,
    lengths: Option<Vec<usize>>,
) -> PyResult<PyPlantedInstance> {
    let mix = match lengths {
        Some(ls) => LengthMix::uniform(&ls),
        None => LengthMix::default(),
    };
    let mut rng = rng_from(seed);
    Ok(PyPlantedInstance {
        inner: instances::generate_planted(lg.inner.graph(), alpha, mix, &mut rng).map_err(err)?,
    })
}

/// Reweights a planted instance by loop x-centers (weights 1..side).
#[pyfunction]
fn generate_weighted(lg: &PyLogicalGraph, base: &PyPlantedInstance) -> PyResult<PyPlantedInstance> {
    Ok(PyPlantedInstance {
        inner: instances::generate_weighted(&lg.inner, &base.inner).map_err(err)?,
    })
}

/// Shift-and-compress deformation over a random picked subset.
#[pyfunction]
fn deform_embeddable(
    lg: &PyLogicalGraph,
    base: &PyPlantedInstance,
    picked_count: usize,
    seed: u64,
) -> PyResult<PyPlantedInstance> {
    let mut rng = rng_from(seed);
    Ok(PyPlantedInstance {
        inner: instances::deform_embeddable(lg.inner.graph(), &base.inner, picked_count, &mut rng)
            .map_err(err)?,
    })
}

#[pyclass(name = "EmbeddedProblem", skip_from_py_object)]
#[derive(Clone)]
struct PyEmbeddedProblem {
    inner: embedding::EmbeddedProblem,
}

#[pymethods]
impl PyEmbeddedProblem {
    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.map.scheme.name()
    }

    #[getter]
    fn physical(&self) -> PyIsingProblem {
        PyIsingProblem {
            inner: self.inner.physical.clone(),
        }
    }

    #[getter]
    fn logical(&self) -> PyIsingProblem {
        PyIsingProblem {
            inner: self.inner.logical.clone(),
        }
    }

    #[getter]
    fn groups(&self) -> Vec<(usize, Vec<usize>)> {
        self.inner.map.groups().to_vec()
    }

    #[getter]
    fn penalty_edges(&self) -> Vec<(usize, usize)> {
        self.inner.penalty_edges.clone()
    }

    #[getter]
    fn penalty_strengths(&self) -> Vec<f64> {
        self.inner.penalty_strengths.clone()
    }

    /// Physical problem with penalties folded in, ready for a solver.
    fn solver_problem(&self) -> PyResult<PyIsingProblem> {
        Ok(PyIsingProblem {
            inner: self.inner.solver_problem().map_err(err)?,
        })
    }

    /// Checks the coupling/field sum rules and penalty locality.
    fn audit(&self) -> PyResult<()> {
        embedding::audit_embedding(&self.inner).map_err(err)
    }

    /// Noisy copy of the solver problem under Gaussian control error chi.
    fn apply_noise(&self, chi: f64, seed: u64) -> PyResult<PyIsingProblem> {
        let nm = embedding::NoiseModel::new(chi).map_err(err)?;
        let mut rng = rng_from(seed);
        Ok(PyIsingProblem {
            inner: embedding::apply_noise(&self.inner, nm, &mut rng).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddedProblem({}, {} groups, {} penalty edges)",
            self.inner.map.scheme.name(),
            self.inner.map.groups().len(),
            self.inner.penalty_edges.len()
        )
    }
}

/// Embeds a logical problem under the named scheme and, for ME/QAC-ME,
/// assigns penalties of the given kind and strength.
#[pyfunction]
#[pyo3(signature = (problem, lg, hw, scheme, penalty_kind = "uniform", gamma = 0.2, all_eight_vertical = false))]
fn embed(
    problem: &PyIsingProblem,
    lg: &PyLogicalGraph,
    hw: &PyHardwareGraph,
    scheme: &str,
    penalty_kind: &str,
    gamma: f64,
    all_eight_vertical: bool,
) -> PyResult<PyEmbeddedProblem> {
    let e = match scheme_from(scheme)? {
        Scheme::Direct => {
            return Ok(PyEmbeddedProblem {
                inner: embedding::embed_direct(&problem.inner, &lg.inner, &hw.inner)
                    .map_err(err)?,
            })
        }
        Scheme::Me => embedding::embed_me(&problem.inner, &lg.inner, &hw.inner).map_err(err)?,
        Scheme::QacMe => {
            let mode = if all_eight_vertical {
                VerticalCouplerMode::EightQuarter
            } else {
                VerticalCouplerMode::TwoFull
            };
            embedding::embed_qacme_with(&problem.inner, &lg.inner, &hw.inner, mode).map_err(err)?
        }
    };
    let strat = match penalty_kind {
        "uniform" => PenaltyStrategy::Uniform(gamma),
        "nonuniform" => PenaltyStrategy::Nonuniform(gamma),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown penalty kind {other:?}"
            )))
        }
    };
    let (e, _) = embedding::assign_penalties(e, strat).map_err(err)?;
    Ok(PyEmbeddedProblem { inner: e })
}

/// Concatenated square-code parameters (physical_qubits, boost, distance).
#[pyfunction]
fn concat_params(n: u64, r: u32) -> PyResult<(u64, u64, u64)> {
    let c = embedding::concat_params(n, r).map_err(err)?;
    Ok((c.physical_qubits, c.boost, c.distance))
}

/// Trotter coupling (1/2) ln tanh(beta A / n_tau); returns (value, saturated).
#[pyfunction]
fn j_perp(beta: f64, a: f64, n_tau: usize) -> PyResult<(f64, bool)> {
    let jp = solvers::j_perp(beta, a, n_tau).map_err(err)?;
    Ok((jp.value, jp.saturated))
}

#[pyclass(name = "SolveResult")]
struct PySolveResult {
    #[pyo3(get)]
    configs: Vec<Vec<i8>>,
    #[pyo3(get)]
    energies: Vec<f64>,
    #[pyo3(get)]
    best_energy: f64,
}

impl From<solvers::SolveResult> for PySolveResult {
    fn from(r: solvers::SolveResult) -> Self {
        PySolveResult {
            configs: r.configs.iter().map(|c| c.spins().to_vec()).collect(),
            energies: r.energies,
            best_energy: r.best_energy,
        }
    }
}

/// Simulated quantum annealing (path-integral Monte Carlo with
/// Trotter-direction Wolff updates) on the default linear schedule.
#[pyfunction]
#[pyo3(signature = (problem, beta, n_tau, sweeps, seed, readout = "random-slice"))]
fn sqa_run(
    problem: &PyIsingProblem,
    beta: f64,
    n_tau: usize,
    sweeps: usize,
    seed: u64,
    readout: &str,
) -> PyResult<PySolveResult> {
    let policy = match readout {
        "random-slice" => ReadoutPolicy::RandomSlice,
        "majority-slice" => ReadoutPolicy::MajoritySlice,
        other => return Err(PyValueError::new_err(format!("unknown readout {other:?}"))),
    };
    let params = SqaParams {
        n_tau,
        sweeps,
        beta,
        readout: policy,
        block_size: 1,
    };
    let mut rng = rng_from(seed);
    let r = solvers::sqa_run(&problem.inner, &AnnealSchedule::linear(), &params, &mut rng)
        .map_err(err)?;
    Ok(r.into())
}

/// Metropolis simulated annealing with restarts.
#[pyfunction]
fn sa_run(
    problem: &PyIsingProblem,
    t_init: f64,
    t_final: f64,
    sweeps: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<PySolveResult> {
    let params = SaParams::new(t_init, t_final, sweeps, restarts);
    let mut rng = rng_from(seed);
    Ok(solvers::sa_run(&problem.inner, &params, &mut rng)
        .map_err(err)?
        .into())
}

/// Exact enumeration (up to 26 spins); returns the full ground-state set.
#[pyfunction]
fn brute_force(problem: &PyIsingProblem) -> PyResult<PySolveResult> {
    Ok(solvers::brute_force(&problem.inner).map_err(err)?.into())
}

/// Classifies groups and decodes one physical readout. Returns
/// (logical_spins, n_broken, n_ties, p_dec or None).
#[pyfunction]
fn decode_readout(
    embedded: &PyEmbeddedProblem,
    readout: Vec<i8>,
    decoder: &str,
    seed: u64,
) -> PyResult<(Vec<i8>, usize, usize, Option<f64>)> {
    let cfg = ising::SpinConfig::new(readout).map_err(err)?;
    let states = decoding::classify_groups(&embedded.inner, &cfg).map_err(err)?;
    let n_broken = states.iter().filter(|(_, s)| s.is_broken()).count();
    let n_ties = states.iter().filter(|(_, s)| s.is_tie()).count();
    let mut rng = rng_from(seed);
    let n_logical = embedded.inner.logical.vertex_count();
    let decoded = match decoder {
        "ct" => decoding::decode_local(n_logical, &states, LocalRule::Ct, &mut rng),
        "mv-ct" => decoding::decode_local(n_logical, &states, LocalRule::MvCt, &mut rng),
        "em" | "mv-em" | "mv-em-r" => {
            let mode = match decoder {
                "em" => EmMode::Em,
                "mv-em" => EmMode::MvEm,
                _ => EmMode::MvEmR,
            };
            let sa = SaParams::decoding_defaults(&embedded.inner.logical);
            decoding::decode_em(&embedded.inner, &states, mode, &sa, &mut rng).map_err(err)?
        }
        "recursive" => {
            let mut solver = |p: &ising::IsingProblem, r: &mut ChaCha8Rng| {
                if p.vertex_count() <= solvers::BRUTE_FORCE_LIMIT {
                    solvers::brute_force(p)
                } else {
                    solvers::sa_run(p, &SaParams::decoding_defaults(p), r)
                }
            };
            decoding::decode_recursive(&embedded.inner, &states, &mut solver, &mut rng)
                .map_err(err)?
        }
        other => return Err(PyValueError::new_err(format!("unknown decoder {other:?}"))),
    };
    Ok((
        decoded.spins.spins().to_vec(),
        n_broken,
        n_ties,
        decoded.p_dec,
    ))
}

/// Energy success criterion against a reference energy.
#[pyfunction]
fn is_success(
    logical: &PyIsingProblem,
    decoded_spins: Vec<i8>,
    reference_energy: f64,
) -> PyResult<bool> {
    let cfg = ising::SpinConfig::new(decoded_spins).map_err(err)?;
    Ok(ising::energy(&logical.inner, &cfg).map_err(err)? <= reference_energy + 1e-9)
}

/// Mean central-site occupied-domain size on an N x N x 2 grid; returns
/// (mean_size, occupied_center_samples).
#[pyfunction]
fn domain_size_scan(n: usize, p: f64, trials: usize, seed: u64) -> PyResult<(f64, usize)> {
    let scan = percolation::domain_size_scan(n, p, trials, seed).map_err(err)?;
    Ok((scan.mean_size, scan.sizes.len()))
}

/// Site-percolation threshold estimate; returns (estimate, stderr).
#[pyfunction]
fn estimate_site_threshold(
    lattice: &str,
    sizes: Vec<usize>,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let lat = match lattice {
        "square" => Lattice::Square,
        "cubic" => Lattice::Cubic,
        "2lg" => Lattice::TwoLevelGrid,
        other => return Err(PyValueError::new_err(format!("unknown lattice {other:?}"))),
    };
    let est = percolation::estimate_site_threshold(lat, &sizes, trials, seed).map_err(err)?;
    Ok((est.estimate, est.stderr))
}

/// Resource renormalization 1-(1-P)^k with k = 4 (direct), 2 (me), 1 (qacme).
#[pyfunction]
fn renormalize(p: f64, scheme: &str) -> PyResult<f64> {
    Ok(experiment::renormalize(p, scheme_from(scheme)?))
}

/// Bootstrap mean over B resamples; returns (mean, stderr).
#[pyfunction]
fn bootstrap_mean(values: Vec<f64>, b: usize, seed: u64) -> PyResult<(f64, f64)> {
    let mut rng = rng_from(seed);
    experiment::bootstrap_mean(&values, b, &mut rng).map_err(err)
}

#[pymodule]
fn qacme_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHardwareGraph>()?;
    m.add_class::<PyLogicalGraph>()?;
    m.add_class::<PyIsingProblem>()?;
    m.add_class::<PyPlantedInstance>()?;
    m.add_class::<PyEmbeddedProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(ungauge, m)?)?;
    m.add_function(wrap_pyfunction!(generate_planted, m)?)?;
    m.add_function(wrap_pyfunction!(generate_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(deform_embeddable, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(concat_params, m)?)?;
    m.add_function(wrap_pyfunction!(j_perp, m)?)?;
    m.add_function(wrap_pyfunction!(sqa_run, m)?)?;
    m.add_function(wrap_pyfunction!(sa_run, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(decode_readout, m)?)?;
    m.add_function(wrap_pyfunction!(is_success, m)?)?;
    m.add_function(wrap_pyfunction!(domain_size_scan, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_site_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(renormalize, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_mean, m)?)?;
    Ok(())
}
