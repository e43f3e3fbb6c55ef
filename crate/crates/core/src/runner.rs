//! Command orchestration: QMC runs with resumable CSV ledgers and JSON
//! summaries, exact-oracle evaluations in the same result schema, and the
//! work-statistics report.
//!
//! Path rows stream to `paths.csv` in canonical (interval, path) order and
//! are flushed per path, so a killed run resumes without duplicating rows
//! and a completed rerun is byte-identical for the same config and seed.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Quantity, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_snr_scaling, gaussian_consistency, work_stats, GaussianConsistency, SnrFit, WorkStats,
};
use crate::noneq::{
    estimate_renyi, run_interval, EnsembleMeta, PathResult, WorkEnsemble,
};
use crate::oracle;

pub const SCHEMA_VERSION: u32 = 1;
pub const PATHS_HEADER: &str =
    "run_id,interval_index,path_index,walker_seed,work,abandoned,final_nb";

/// One interval's summary inside the result document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval_index: usize,
    pub delta_f: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_abandoned: usize,
    pub abandoned_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work_stats: Option<WorkStats>,
}

/// The versioned result document shared by QMC runs and oracle evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    /// "qmc" or "exact".
    pub method: String,
    pub run_id: String,
    pub quantity: Quantity,
    pub renyi_n: u32,
    pub estimate: f64,
    pub stderr: f64,
    pub abandoned_fraction: f64,
    pub intervals: Vec<IntervalReport>,
    pub config: RunConfig,
    pub code_version: String,
    pub wall_time_seconds: f64,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub document: ResultDocument,
    pub paths_csv: Option<PathBuf>,
    pub result_json: Option<PathBuf>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic run identifier: hash of the fully materialized config
/// (covers the seed; excludes worker count, which never affects results).
pub fn run_id(config: &RunConfig) -> String {
    let canon = serde_json::to_vec(config).expect("config serializes");
    format!("{:016x}", fnv1a64(&canon))
}

fn format_row(run_id: &str, interval: usize, path: usize, res: &PathResult) -> String {
    format!(
        "{run_id},{interval},{path},{seed},{work:.16e},{abandoned},{nb}\n",
        seed = res.walker_seed,
        work = res.work,
        abandoned = res.abandoned,
        nb = res.final_nb
    )
}

fn parse_row(line: &str, lineno: usize) -> Result<(String, usize, usize, PathResult)> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 7 {
        return Err(Error::Checkpoint(format!(
            "paths.csv line {lineno}: expected 7 fields, got {}",
            fields.len()
        )));
    }
    let parse_err =
        |what: &str| Error::Checkpoint(format!("paths.csv line {lineno}: bad {what}"));
    Ok((
        fields[0].to_string(),
        fields[1].parse().map_err(|_| parse_err("interval_index"))?,
        fields[2].parse().map_err(|_| parse_err("path_index"))?,
        PathResult {
            walker_seed: fields[3].parse().map_err(|_| parse_err("walker_seed"))?,
            work: fields[4].parse().map_err(|_| parse_err("work"))?,
            abandoned: fields[5].parse().map_err(|_| parse_err("abandoned"))?,
            final_nb: fields[6].parse().map_err(|_| parse_err("final_nb"))?,
        },
    ))
}

/// Rows already present in a paths.csv being resumed.
fn read_existing_rows(
    path: &Path,
    expect_run_id: &str,
) -> Result<BTreeMap<(usize, usize), PathResult>> {
    let file = fs::File::open(path)?;
    let mut rows = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim_end() != PATHS_HEADER {
                return Err(Error::Checkpoint("paths.csv: unrecognized header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (rid, interval, path_idx, res) = parse_row(&line, i + 1)?;
        if rid != expect_run_id {
            return Err(Error::Checkpoint(format!(
                "paths.csv belongs to run {rid}, current config hashes to {expect_run_id}; \
                 refusing to mix runs"
            )));
        }
        if rows.insert((interval, path_idx), res).is_some() {
            return Err(Error::Checkpoint(format!(
                "paths.csv: duplicate row for interval {interval}, path {path_idx}"
            )));
        }
    }
    Ok(rows)
}

/// Execute a QMC run described by the config; `workers = 0` uses all cores.
pub fn run(config: &RunConfig, workers: usize, resume: bool) -> Result<RunArtifacts> {
    let start = Instant::now();
    let geometry = config.geometry()?;
    let params = config.params()?;
    let mode = config.run_mode()?;
    let kind = config.tensor_kind();
    let proto = config.protocol()?;
    let rid = run_id(config);

    let out_dir = PathBuf::from(&config.output.directory);
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("paths.csv");
    let want_csv = config.wants_format("csv");

    let existing = if resume {
        if !want_csv {
            return Err(Error::config(
                "output.formats",
                "resume requires the csv format",
            ));
        }
        if csv_path.exists() {
            read_existing_rows(&csv_path, &rid)?
        } else {
            BTreeMap::new()
        }
    } else {
        BTreeMap::new()
    };

    let mut writer: Option<fs::File> = if want_csv {
        if existing.is_empty() {
            let mut f = fs::File::create(&csv_path)?;
            f.write_all(PATHS_HEADER.as_bytes())?;
            f.write_all(b"\n")?;
            f.flush()?;
            Some(f)
        } else {
            Some(fs::OpenOptions::new().append(true).open(&csv_path)?)
        }
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;

    let mut ensembles: Vec<WorkEnsemble> = Vec::with_capacity(proto.n_intervals);
    for k in 0..proto.n_intervals {
        let skip: HashSet<usize> = existing
            .range((k, 0)..(k, usize::MAX))
            .map(|(&(_, p), _)| p)
            .collect();
        let mut computed: BTreeMap<usize, PathResult> = BTreeMap::new();
        let schedule = pool.install(|| {
            run_interval(
                &geometry,
                &params,
                &mode,
                kind,
                &proto,
                config.rng.seed,
                k,
                &skip,
                &mut |p, res| {
                    if let Some(w) = writer.as_mut() {
                        w.write_all(format_row(&rid, k, p, &res).as_bytes())?;
                        w.flush()?;
                    }
                    computed.insert(p, res);
                    Ok(())
                },
            )
        })?;
        let mut results = Vec::with_capacity(proto.paths_per_interval);
        for p in 0..proto.paths_per_interval {
            let res = computed
                .remove(&p)
                .or_else(|| existing.get(&(k, p)).cloned())
                .expect("every path either computed or resumed");
            results.push(res);
        }
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

    let estimate = estimate_renyi(&ensembles, params.renyi_n)?;
    let intervals: Vec<IntervalReport> = estimate
        .per_interval
        .iter()
        .zip(&ensembles)
        .map(|(est, ens)| {
            let kept = ens.kept_work();
            IntervalReport {
                interval_index: est.interval_index,
                delta_f: est.delta_f,
                stderr: est.stderr,
                n_paths: est.n_paths,
                n_abandoned: est.n_abandoned,
                abandoned_fraction: est.n_abandoned as f64 / est.n_paths.max(1) as f64,
                work_stats: work_stats(&kept, est.n_abandoned).ok(),
            }
        })
        .collect();

    let document = ResultDocument {
        schema_version: SCHEMA_VERSION,
        method: "qmc".into(),
        run_id: rid,
        quantity: config.renyi.quantity,
        renyi_n: params.renyi_n,
        estimate: estimate.value,
        stderr: estimate.stderr,
        abandoned_fraction: estimate.abandoned_fraction(),
        intervals,
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };

    let result_json = if config.wants_format("json") {
        let path = out_dir.join("result.json");
        fs::write(&path, serde_json::to_string_pretty(&document).unwrap())?;
        Some(path)
    } else {
        None
    };

    Ok(RunArtifacts {
        document,
        paths_csv: want_csv.then_some(csv_path),
        result_json,
    })
}

/// Evaluate the configured quantity exactly; emits the run schema with
/// method "exact" and zero stderr. Finite-temperature states use the Gibbs
/// density matrix; projector mode uses the ground state anchored at the
/// |0..0> trial (the m -> infinity limit of the sampler).
pub fn oracle_run(config: &RunConfig) -> Result<RunArtifacts> {
    let start = Instant::now();
    let geometry = config.geometry()?;
    let params = config.params()?;
    let mode = config.run_mode()?;
    let n = params.renyi_n;

    let h = oracle::build_dense_hamiltonian(&geometry, &params)?;
    let state = match mode {
        crate::lattice::RunMode::FiniteT { beta } => oracle::gibbs(&h, beta)?,
        crate::lattice::RunMode::Projector { .. } => {
            let trial = oracle::basis_state(0, geometry.sites).map(|c| c.re);
            let ground = oracle::projected_ground_state(&h, &trial)?;
            oracle::DenseState::pure_normalized(ground.map(|x| oracle::C64::new(x, 0.0)))?
        }
    };
    let estimate = match config.renyi.quantity {
        Quantity::Sre => oracle::exact_m_n(&state, n)?,
        Quantity::Ere => oracle::exact_s_n(&state, n)?,
        Quantity::Pre => oracle::exact_pre_diagonal(&state, n)?,
    };

    let out_dir = PathBuf::from(&config.output.directory);
    let document = ResultDocument {
        schema_version: SCHEMA_VERSION,
        method: "exact".into(),
        run_id: run_id(config),
        quantity: config.renyi.quantity,
        renyi_n: n,
        estimate,
        stderr: 0.0,
        abandoned_fraction: 0.0,
        intervals: Vec::new(),
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let result_json = if config.wants_format("json") {
        fs::create_dir_all(&out_dir)?;
        let path = out_dir.join("oracle.json");
        fs::write(&path, serde_json::to_string_pretty(&document).unwrap())?;
        Some(path)
    } else {
        None
    };
    Ok(RunArtifacts {
        document,
        paths_csv: None,
        result_json,
    })
}

// ---------------------------------------------------------------------------
// Work-statistics reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub source: String,
    pub run_id: String,
    pub n_sites: usize,
    pub n_paths: usize,
    pub n_abandoned: usize,
    pub work_stats: WorkStats,
    pub gaussian: GaussianConsistency,
    pub snr_exp_w: f64,
    pub snr_w: f64,
    pub histogram_csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsDocument {
    pub schema_version: u32,
    pub ensembles: Vec<EnsembleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_fit: Option<SnrFit>,
}

const HISTOGRAM_BINS: usize = 24;

/// Build the statistics report for one or more paths.csv files and write
/// stats.json, per-file histogram CSVs and (given >= 3 distinct system
/// sizes) the SNR fit lines.
pub fn stats(inputs: &[PathBuf], out_dir: &Path) -> Result<StatsDocument> {
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no paths.csv inputs".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut ensembles = Vec::new();
    for input in inputs {
        let file = fs::File::open(input)?;
        let mut work = Vec::new();
        let mut n_abandoned = 0usize;
        let mut n_sites = 0usize;
        let mut rid = String::new();
        let mut rows = 0usize;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim_end() != PATHS_HEADER {
                    return Err(Error::Checkpoint(format!(
                        "{}: unrecognized header",
                        input.display()
                    )));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (row_rid, _, _, res) = parse_row(&line, i + 1)?;
            rid = row_rid;
            rows += 1;
            if res.abandoned {
                n_abandoned += 1;
            } else {
                work.push(res.work);
                n_sites = n_sites.max(res.final_nb);
            }
        }
        if rows == 0 {
            return Err(Error::InsufficientData(format!(
                "{}: no path rows",
                input.display()
            )));
        }
        let ws = work_stats(&work, n_abandoned)?;
        let gaussian = gaussian_consistency(&ws, &work)?;
        let mean_exp: f64 = work.iter().map(|w| (-w).exp()).sum::<f64>() / work.len() as f64;
        let var_exp: f64 = work
            .iter()
            .map(|w| ((-w).exp() - mean_exp).powi(2))
            .sum::<f64>()
            / (work.len() as f64 - 1.0);
        let snr_exp_w = if var_exp > 0.0 {
            mean_exp * mean_exp / var_exp
        } else {
            f64::INFINITY
        };
        let snr_w = if ws.variance > 0.0 {
            ws.mean * ws.mean / ws.variance
        } else {
            f64::INFINITY
        };

        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("paths");
        let parent = input
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or("");
        let hist_name = if parent.is_empty() {
            format!("hist_{stem}.csv")
        } else {
            format!("hist_{parent}_{stem}.csv")
        };
        let hist_path = out_dir.join(&hist_name);
        write_histogram(&hist_path, &work, &ws)?;

        ensembles.push(EnsembleStats {
            source: input.display().to_string(),
            run_id: rid,
            n_sites,
            n_paths: rows,
            n_abandoned,
            work_stats: ws,
            gaussian,
            snr_exp_w,
            snr_w,
            histogram_csv: hist_name,
        });
    }

    let mut by_size: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for e in &ensembles {
        by_size.insert(e.n_sites, (e.snr_exp_w, e.snr_w));
    }
    let snr_fit = if by_size.len() >= 3 {
        let exp_series: Vec<(f64, f64)> = by_size
            .iter()
            .map(|(&n, &(s, _))| (n as f64, s))
            .collect();
        let w_series: Vec<(f64, f64)> =
            by_size.iter().map(|(&n, &(_, s))| (n as f64, s)).collect();
        let fit = fit_snr_scaling(&exp_series, Some(&w_series))?;
        let mut lines = String::from("n_sites,snr_exp_w,fitted\n");
        for &(n, s) in &exp_series {
            let fitted = n.powf(-fit.alpha) / fit.alpha_c;
            lines.push_str(&format!("{n},{s:.10e},{fitted:.10e}\n"));
        }
        fs::write(out_dir.join("snr_fit.csv"), lines)?;
        Some(fit)
    } else {
        None
    };

    let doc = StatsDocument {
        schema_version: SCHEMA_VERSION,
        ensembles,
        snr_fit,
    };
    fs::write(
        out_dir.join("stats.json"),
        serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    Ok(doc)
}

fn write_histogram(path: &Path, work: &[f64], ws: &WorkStats) -> Result<()> {
    let lo = work.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = work.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &w in work {
        let idx = (((w - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[idx] += 1;
    }
    let total = work.len() as f64;
    let sd = ws.variance.sqrt();
    let mut out = String::from("bin_lo,bin_hi,count,density,gaussian_fit\n");
    for (i, &c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        let b = a + width;
        let density = c as f64 / (total * width);
        let mid = 0.5 * (a + b);
        let gauss = if sd > 0.0 {
            (-((mid - ws.mean) / sd).powi(2) / 2.0).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
        } else {
            0.0
        };
        out.push_str(&format!("{a:.10e},{b:.10e},{c},{density:.10e},{gauss:.10e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
