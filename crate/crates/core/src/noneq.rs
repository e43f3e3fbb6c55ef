//! Non-equilibrium driving of the replica coupling.
//!
//! A side walker carries an equilibrated configuration from lambda_start to
//! lambda_end: at each grid point it sweeps the connection topology with the
//! Metropolis probabilities P_c = min{lambda/(1-lambda), 1} and
//! P_d = min{(1-lambda)/lambda, 1}, runs the configuration updates, then
//! banks the work increment -[ln g(lambda_{i+1}, N_B) - ln g(lambda_i, N_B)].
//! Because every update is in detailed balance at its own lambda, the
//! annealed-importance identity <e^{-W}> = Z(lambda_end)/Z(lambda_start)
//! holds exactly for any grid, which is what the Jarzynski estimator
//! consumes. Paths whose final increment hits ln 0 (a site still
//! disconnected at lambda = 1) are abandoned and excluded downstream.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, ModelParams, RunMode};
use crate::seeding::{derive_seed, walker_rng, StreamRole};
use crate::sse::{cluster_update, diagonal_update, init_config, ReplicaConfig};
use crate::tensors::{log_g, ConnectionTensorKind, LogWeight};

/// A lambda ramp: uniform grid of step `d_lambda`, optionally with
/// geometric refinement of the first and last base steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub d_lambda: f64,
    pub sweeps_per_step: usize,
    pub endpoint_refinement: bool,
}

impl Schedule {
    pub fn new(
        lambda_start: f64,
        lambda_end: f64,
        d_lambda: f64,
        sweeps_per_step: usize,
        endpoint_refinement: bool,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_start) || !(0.0..=1.0).contains(&lambda_end) {
            return Err(Error::config("schedule", "lambda bounds must lie in [0, 1]"));
        }
        if !(lambda_start < lambda_end) {
            return Err(Error::config(
                "schedule",
                "lambda_start must be strictly below lambda_end",
            ));
        }
        if !(d_lambda > 0.0) {
            return Err(Error::config("noneq.d_lambda", "step must be positive"));
        }
        if sweeps_per_step == 0 {
            return Err(Error::config(
                "noneq.sweeps_per_step",
                "at least one sweep per step",
            ));
        }
        let ratio = (lambda_end - lambda_start) / d_lambda;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::config(
                "noneq.d_lambda",
                format!(
                    "(lambda_end - lambda_start) / d_lambda = {ratio} is not a positive integer"
                ),
            ));
        }
        Ok(Schedule {
            lambda_start,
            lambda_end,
            d_lambda,
            sweeps_per_step,
            endpoint_refinement,
        })
    }

    pub fn n_base_steps(&self) -> usize {
        ((self.lambda_end - self.lambda_start) / self.d_lambda).round() as usize
    }

    /// Lambda grid points, including both endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let steps = self.n_base_steps();
        let span = self.lambda_end - self.lambda_start;
        let base = |i: usize| self.lambda_start + span * i as f64 / steps as f64;
        let mut grid = Vec::with_capacity(steps + 1);
        // geometric sub-step fractions, ascending from a step's lower edge
        const RISE: [f64; 7] = [
            1.0 / 128.0,
            2.0 / 128.0,
            4.0 / 128.0,
            8.0 / 128.0,
            16.0 / 128.0,
            32.0 / 128.0,
            64.0 / 128.0,
        ];
        grid.push(base(0));
        for i in 0..steps {
            let (lo, hi) = (base(i), base(i + 1));
            let width = hi - lo;
            if self.endpoint_refinement && i == 0 {
                // fine resolution leaving lambda_start
                for f in RISE {
                    grid.push(lo + width * f);
                }
            }
            if self.endpoint_refinement && i + 1 == steps {
                // fine resolution approaching lambda_end
                for f in RISE.iter().rev() {
                    grid.push(hi - width * f);
                }
            }
            grid.push(hi);
        }
        grid.dedup_by(|a, b| (*a - *b).abs() < f64::EPSILON);
        grid
    }
}

/// Outcome of one side walker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathResult {
    /// Accumulated work W; partial (diagnostic only) when abandoned.
    pub work: f64,
    pub abandoned: bool,
    pub final_nb: usize,
    pub walker_seed: u64,
}

/// Model/mode descriptors shared by every path of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub kind: ConnectionTensorKind,
    pub renyi_n: u32,
    pub n_sites: usize,
    pub interval_index: usize,
    pub n_intervals: usize,
}

/// All path results of one (model, mode, interval) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkEnsemble {
    pub interval: Schedule,
    pub meta: EnsembleMeta,
    pub results: Vec<PathResult>,
}

impl WorkEnsemble {
    pub fn kept_work(&self) -> Vec<f64> {
        self.results
            .iter()
            .filter(|p| !p.abandoned)
            .map(|p| p.work)
            .collect()
    }

    pub fn n_abandoned(&self) -> usize {
        self.results.iter().filter(|p| p.abandoned).count()
    }
}

/// Connect/disconnect sweep over all sites in index order.
///
/// A disconnected site connects with probability P_c when its slice pattern
/// hits a nonzero tensor entry; a connected site disconnects with
/// probability P_d when the identity slice keeps every replica's worldline
/// consistent (anti-diagonal patterns cannot disconnect; the move's target
/// weight is zero). The endpoint values P_c(0) = 0 and P_d(1) = 0 implement
/// the auto-rejection of zero-weight moves.
pub fn topology_sweep(cfg: &mut ReplicaConfig, lambda: f64, rng: &mut impl Rng) {
    let p_connect = if lambda >= 1.0 {
        1.0
    } else {
        (lambda / (1.0 - lambda)).min(1.0)
    };
    let p_disconnect = if lambda <= 0.0 {
        1.0
    } else {
        ((1.0 - lambda) / lambda).min(1.0)
    };
    for site in 0..cfg.n_sites() {
        if cfg.connected.contains(site) {
            if cfg.site_identity_consistent(site)
                && (p_disconnect >= 1.0 || rng.random::<f64>() < p_disconnect)
            {
                cfg.connected.remove(site);
            }
        } else if cfg.kind.is_connectable(&cfg.slice_pattern(site))
            && p_connect > 0.0
            && (p_connect >= 1.0 || rng.random::<f64>() < p_connect)
        {
            cfg.connected.insert(site);
        }
    }
}

/// One equilibrium sweep at fixed lambda: topology, diagonal, cluster.
pub fn equilibrium_sweep(cfg: &mut ReplicaConfig, lambda: f64, rng: &mut impl Rng) {
    topology_sweep(cfg, lambda, rng);
    diagonal_update(cfg, rng);
    cluster_update(cfg, rng);
}

/// Drive one configuration through the schedule, accumulating work.
pub fn side_walk(
    cfg: &mut ReplicaConfig,
    schedule: &Schedule,
    walker_seed: u64,
    rng: &mut impl Rng,
) -> Result<PathResult> {
    let n = cfg.n_sites();
    let grid = schedule.grid();
    let mut work = 0.0f64;
    for window in grid.windows(2) {
        let (lam, lam_next) = (window[0], window[1]);
        topology_sweep(cfg, lam, rng);
        for _ in 0..schedule.sweeps_per_step {
            diagonal_update(cfg, rng);
            cluster_update(cfg, rng);
        }
        let nb = cfg.connected.count();
        let after = log_g(lam_next, nb, n)?;
        let before = log_g(lam, nb, n)?;
        match (after, before) {
            (LogWeight::Finite(a), LogWeight::Finite(b)) => {
                work -= a - b;
            }
            _ => {
                // ln 0 increment: the path is abandoned, its work is
                // ill-defined and only the partial value is kept for
                // diagnostics
                return Ok(PathResult {
                    work,
                    abandoned: true,
                    final_nb: nb,
                    walker_seed,
                });
            }
        }
    }
    Ok(PathResult {
        work,
        abandoned: false,
        final_nb: cfg.connected.count(),
        walker_seed,
    })
}

/// Protocol parameters with every default materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub d_lambda: f64,
    pub n_intervals: usize,
    pub paths_per_interval: usize,
    pub sweeps_per_step: usize,
    pub endpoint_refinement: bool,
    /// Main-walker burn-in at each interval's lambda_start.
    pub burn_in_sweeps: usize,
    /// Main-walker sweeps between side-walker snapshots.
    pub snapshot_every: usize,
    /// Replica thermalization sweeps inside init_config.
    pub init_therm_sweeps: usize,
}

impl ProtocolParams {
    /// Defaults for a lattice of `n_sites` sites: d_lambda = 1e-4, one
    /// interval, one sweep per step, burn-in 10 N, snapshots every 10
    /// sweeps, path count by mode (640 finite-T, 160 projector).
    pub fn defaults(n_sites: usize, mode: &RunMode) -> Self {
        ProtocolParams {
            d_lambda: 1e-4,
            n_intervals: 1,
            paths_per_interval: match mode {
                RunMode::FiniteT { .. } => 640,
                RunMode::Projector { .. } => 160,
            },
            sweeps_per_step: 1,
            endpoint_refinement: false,
            burn_in_sweeps: 10 * n_sites.max(1),
            snapshot_every: 10,
            init_therm_sweeps: 10 * n_sites.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::config("noneq.intervals", "need at least 1 interval"));
        }
        if self.paths_per_interval == 0 {
            return Err(Error::config(
                "noneq.paths_per_interval",
                "need at least 1 path",
            ));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config(
                "noneq.snapshot_every",
                "snapshot spacing must be positive",
            ));
        }
        self.interval_schedule(0).map(|_| ())
    }

    /// Schedule of interval k of K: [k/K, (k+1)/K].
    pub fn interval_schedule(&self, k: usize) -> Result<Schedule> {
        let kf = self.n_intervals as f64;
        Schedule::new(
            k as f64 / kf,
            (k + 1) as f64 / kf,
            self.d_lambda,
            self.sweeps_per_step,
            self.endpoint_refinement,
        )
    }
}

/// Paths are computed in fixed-size chunks so a progressive sink sees them
/// in path order no matter how many workers run; the chunk size is a
/// constant, never derived from the worker count.
const PATH_CHUNK: usize = 32;

/// Run one interval of the protocol, delivering paths to `sink` in index
/// order. Paths whose index is in `skip` are not recomputed (the main
/// walker still advances identically, so the remaining snapshots are
/// unchanged); used for resuming.
pub fn run_interval<F>(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    mode: &RunMode,
    kind: ConnectionTensorKind,
    proto: &ProtocolParams,
    run_seed: u64,
    interval_index: usize,
    skip: &HashSet<usize>,
    sink: &mut F,
) -> Result<Schedule>
where
    F: FnMut(usize, PathResult) -> Result<()>,
{
    let schedule = proto.interval_schedule(interval_index)?;
    let mut main = init_config(
        geometry,
        params,
        mode,
        kind,
        derive_seed(run_seed, StreamRole::InitConfig, interval_index as u64, 0),
        proto.init_therm_sweeps,
    )?;
    let mut main_rng = walker_rng(derive_seed(
        run_seed,
        StreamRole::MainWalker,
        interval_index as u64,
        0,
    ));
    for _ in 0..proto.burn_in_sweeps {
        equilibrium_sweep(&mut main, schedule.lambda_start, &mut main_rng);
    }

    let mut path = 0usize;
    while path < proto.paths_per_interval {
        let chunk_end = (path + PATH_CHUNK).min(proto.paths_per_interval);
        let mut jobs: Vec<(usize, u64, ReplicaConfig)> = Vec::with_capacity(chunk_end - path);
        for p in path..chunk_end {
            if p > 0 {
                for _ in 0..proto.snapshot_every {
                    equilibrium_sweep(&mut main, schedule.lambda_start, &mut main_rng);
                }
            }
            if !skip.contains(&p) {
                let seed = derive_seed(
                    run_seed,
                    StreamRole::SideWalker,
                    interval_index as u64,
                    p as u64,
                );
                jobs.push((p, seed, main.clone()));
            }
        }
        let results: Vec<(usize, Result<PathResult>)> = jobs
            .into_par_iter()
            .map(|(p, seed, mut cfg)| {
                let mut rng = walker_rng(seed);
                (p, side_walk(&mut cfg, &schedule, seed, &mut rng))
            })
            .collect();
        for (p, res) in results {
            sink(p, res?)?;
        }
        path = chunk_end;
    }
    Ok(schedule)
}

/// Run the full K-interval protocol and collect the work ensembles.
pub fn run_protocol(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    mode: &RunMode,
    kind: ConnectionTensorKind,
    proto: &ProtocolParams,
    run_seed: u64,
) -> Result<Vec<WorkEnsemble>> {
    proto.validate()?;
    let mut ensembles = Vec::with_capacity(proto.n_intervals);
    for k in 0..proto.n_intervals {
        let mut results: Vec<PathResult> = Vec::with_capacity(proto.paths_per_interval);
        let schedule = run_interval(
            geometry,
            params,
            mode,
            kind,
            proto,
            run_seed,
            k,
            &HashSet::new(),
            &mut |_p, res| {
                results.push(res);
                Ok(())
            },
        )?;
        ensembles.push(WorkEnsemble {
            interval: schedule,
            meta: EnsembleMeta {
                kind,
                renyi_n: params.renyi_n,
                n_sites: geometry.sites,
                interval_index: k,
                n_intervals: proto.n_intervals,
            },
            results,
        });
    }
    Ok(ensembles)
}

/// Per-interval free-energy difference with jackknife error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub interval_index: usize,
    pub delta_f: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_abandoned: usize,
}

/// The assembled Renyi-entropy estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenyiEstimate {
    pub value: f64,
    pub stderr: f64,
    pub per_interval: Vec<IntervalEstimate>,
}

impl RenyiEstimate {
    pub fn abandoned_fraction(&self) -> f64 {
        let total: usize = self.per_interval.iter().map(|i| i.n_paths).sum();
        let abandoned: usize = self.per_interval.iter().map(|i| i.n_abandoned).sum();
        if total == 0 {
            0.0
        } else {
            abandoned as f64 / total as f64
        }
    }
}

/// Jarzynski assembly: per interval Delta F_k = -ln <e^{-W}> over the
/// non-abandoned paths, M_n = sum_k Delta F_k / (n - 1), stderr by
/// leave-one-out jackknife per interval combined in quadrature.
pub fn estimate_renyi(ensembles: &[WorkEnsemble], n: u32) -> Result<RenyiEstimate> {
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    if ensembles.is_empty() {
        return Err(Error::InsufficientData("no work ensembles".into()));
    }
    let mut per_interval = Vec::with_capacity(ensembles.len());
    let mut value = 0.0f64;
    let mut variance = 0.0f64;
    let scale = 1.0 / (n as f64 - 1.0);
    for ens in ensembles {
        let work = ens.kept_work();
        let n_abandoned = ens.n_abandoned();
        if work.is_empty() {
            return Err(Error::AllPathsAbandoned {
                interval: ens.meta.interval_index,
            });
        }
        if work.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "interval {} has fewer than 2 non-abandoned paths",
                ens.meta.interval_index
            )));
        }
        let (delta_f, jack_var) = jackknife_delta_f(&work);
        value += scale * delta_f;
        variance += scale * scale * jack_var;
        per_interval.push(IntervalEstimate {
            interval_index: ens.meta.interval_index,
            delta_f,
            stderr: jack_var.sqrt(),
            n_paths: ens.results.len(),
            n_abandoned,
        });
    }
    Ok(RenyiEstimate {
        value,
        stderr: variance.sqrt(),
        per_interval,
    })
}

/// Delta F = -ln mean(e^{-W}) and its leave-one-out jackknife variance.
fn jackknife_delta_f(work: &[f64]) -> (f64, f64) {
    let p = work.len() as f64;
    let shift = work.iter().cloned().fold(f64::INFINITY, f64::min);
    let terms: Vec<f64> = work.iter().map(|w| (-(w - shift)).exp()).collect();
    let total: f64 = terms.iter().sum();
    let delta_f = -((total / p).ln() - shift);
    let mut theta_sum = 0.0;
    let mut theta_sq = 0.0;
    for t in &terms {
        let theta = -(((total - t) / (p - 1.0)).ln() - shift);
        theta_sum += theta;
        theta_sq += theta * theta;
    }
    let mean = theta_sum / p;
    let var = (p - 1.0) / p * (theta_sq - p * mean * mean).max(0.0);
    (delta_f, var)
}

/// Subtracted stabilizer entropy: M_n minus the state's Renyi entropy S_n
/// (zero for pure states).
pub fn sre_tilde(m_n: f64, s_n: f64) -> f64 {
    m_n - s_n
}
