//! Equilibrium correctness of the replica SSE sampler against dense
//! small-system oracles: expansion-order distributions, thermal
//! expectation values, rejection-free cluster flips, and the stationary
//! distributions of slice patterns and connection topology.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use sre_qmc::lattice::{build_lattice, Boundary, LatticeGeometry, ModelParams, RunMode};
use sre_qmc::noneq::{equilibrium_sweep, topology_sweep};
use sre_qmc::oracle;
use sre_qmc::seeding::walker_rng;
use sre_qmc::sse::{cluster_update, diagonal_update, init_config};
use sre_qmc::tensors::ConnectionTensorKind;

fn ring(n: usize) -> LatticeGeometry {
    build_lattice(&[n], &[Boundary::Periodic]).unwrap()
}

fn chain(n: usize) -> LatticeGeometry {
    build_lattice(&[n], &[Boundary::Open]).unwrap()
}

/// Chi-square p-value of observed counts against exact cell probabilities,
/// merging cells until every expected count is at least 5.
fn chi2_pvalue(counts: &[f64], probs: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        acc.0 += c;
        acc.1 += p * total;
        if acc.1 >= 5.0 {
            merged.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            merged.push(acc);
        }
    }
    assert!(merged.len() >= 2, "too few cells for a chi-square test");
    let stat: f64 = merged
        .iter()
        .map(|&(obs, exp)| (obs - exp).powi(2) / exp)
        .sum();
    let dof = merged.len() as f64 - 1.0;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

fn batch_stderr(samples: &[f64]) -> f64 {
    let n_batches = 20.min(samples.len());
    let per = samples.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| samples[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let m = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
    (var / n_batches as f64).sqrt()
}

#[test]
fn op_count_matches_expansion_order_distribution() {
    // single replica at B = 0: P(n) proportional to beta^n Tr[(C-H)^n] / n!
    let g = chain(2);
    let p = ModelParams::new(1.0, 1.0, 2).unwrap();
    let beta = 1.0;
    let mode = RunMode::FiniteT { beta };
    let mut cfg = init_config(&g, &p, &mode, ConnectionTensorKind::SreTensor, 21, 200).unwrap();
    let mut rng = walker_rng(22);

    let h = oracle::build_dense_hamiltonian(&g, &p).unwrap();
    let shift = oracle::sse_shift(&g, &p);
    let eigs: Vec<f64> = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| shift - e)
        .collect();
    let n_max = 60;
    let mut probs: Vec<f64> = Vec::with_capacity(n_max + 1);
    let mut log_fact = 0.0f64;
    for n in 0..=n_max {
        if n > 0 {
            log_fact += (n as f64).ln();
        }
        let tr: f64 = eigs.iter().map(|d| d.powi(n as i32)).sum();
        probs.push((n as f64 * beta.ln() - log_fact).exp() * tr);
    }
    let norm: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= norm;
    }

    let sweeps = 60_000;
    let mut counts = vec![0.0f64; n_max + 1];
    for i in 0..sweeps {
        cfg.sweep(&mut rng);
        if i % 3 == 0 {
            let n_tot = cfg.replicas[0].lower.n_ops + cfg.replicas[0].upper.n_ops;
            counts[n_tot.min(n_max)] += 1.0;
        }
    }
    let pval = chi2_pvalue(&counts, &probs);
    assert!(pval > 1e-3, "op-count distribution rejected: p = {pval}");
}

#[test]
fn zz_correlator_matches_thermal_value() {
    let g = chain(2);
    let p = ModelParams::new(1.0, 1.0, 2).unwrap();
    let beta = 1.0;
    let mode = RunMode::FiniteT { beta };
    let mut cfg = init_config(&g, &p, &mode, ConnectionTensorKind::SreTensor, 31, 200).unwrap();
    let mut rng = walker_rng(32);

    let h = oracle::build_dense_hamiltonian(&g, &p).unwrap();
    let rho = oracle::gibbs(&h, beta).unwrap();
    let exact = rho.pauli_expectation(oracle::PauliString {
        x_mask: 0,
        z_mask: 0b11,
    });

    let mut samples = Vec::new();
    for _ in 0..40_000 {
        cfg.sweep(&mut rng);
        let b = &cfg.replicas[0].base;
        samples.push((1.0 - 2.0 * b[0] as f64) * (1.0 - 2.0 * b[1] as f64));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let err = batch_stderr(&samples);
    assert!(
        (mean - exact).abs() < 3.0 * err,
        "<Z1 Z2> = {mean} +- {err}, exact {exact}"
    );
}

#[test]
fn cluster_flips_preserve_weight_and_audit() {
    let g = ring(3);
    let p = ModelParams::new(1.0, 0.9, 2).unwrap();
    let mode = RunMode::FiniteT { beta: 1.2 };
    let lambda = 0.4;
    let mut cfg = init_config(&g, &p, &mode, ConnectionTensorKind::SreTensor, 41, 100).unwrap();
    let mut rng = walker_rng(42);
    for _ in 0..50 {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
    }
    for _ in 0..200 {
        topology_sweep(&mut cfg, lambda, &mut rng);
        diagonal_update(&mut cfg, &mut rng);
        let before = cfg.log_weight(lambda).unwrap().finite().expect("finite");
        cluster_update(&mut cfg, &mut rng);
        let after = cfg.log_weight(lambda).unwrap().finite().expect("finite");
        assert!(
            (before - after).abs() < 1e-9,
            "cluster flip changed ln Wt: {before} -> {after}"
        );
        cfg.audit().unwrap();
    }
}

#[test]
fn audits_hold_for_every_driver_and_mode() {
    let cases: Vec<(ConnectionTensorKind, RunMode, u32)> = vec![
        (ConnectionTensorKind::SreTensor, RunMode::FiniteT { beta: 1.0 }, 2),
        (ConnectionTensorKind::SreTensor, RunMode::Projector { m: 14 }, 2),
        (ConnectionTensorKind::EreCyclic, RunMode::FiniteT { beta: 0.8 }, 3),
        (ConnectionTensorKind::PreDiagonal, RunMode::Projector { m: 10 }, 2),
        (ConnectionTensorKind::PreDiagonal, RunMode::FiniteT { beta: 1.1 }, 3),
    ];
    for (kind, mode, n) in cases {
        let g = ring(3);
        let p = ModelParams::new(1.0, 0.8, n).unwrap();
        let mut cfg = init_config(&g, &p, &mode, kind, 51, 50).unwrap();
        let mut rng = walker_rng(52);
        for i in 0..150 {
            let lambda = (i % 11) as f64 / 10.0;
            topology_sweep(&mut cfg, lambda, &mut rng);
            cfg.audit()
                .unwrap_or_else(|e| panic!("{kind:?} {mode:?} topology: {e}"));
            diagonal_update(&mut cfg, &mut rng);
            cfg.audit()
                .unwrap_or_else(|e| panic!("{kind:?} {mode:?} diagonal: {e}"));
            cluster_update(&mut cfg, &mut rng);
            cfg.audit()
                .unwrap_or_else(|e| panic!("{kind:?} {mode:?} cluster: {e}"));
        }
    }
}

#[test]
fn energy_estimator_classical_and_critical() {
    // h = 0, J = 1, N = 4 ring at beta = 8: ground energy -4
    let g = ring(4);
    let p0 = ModelParams::new(1.0, 0.0, 2).unwrap();
    let mode = RunMode::FiniteT { beta: 8.0 };
    let mut cfg = init_config(&g, &p0, &mode, ConnectionTensorKind::SreTensor, 61, 300).unwrap();
    let mut rng = walker_rng(62);
    let mut samples = Vec::new();
    for _ in 0..20_000 {
        cfg.sweep(&mut rng);
        samples.push(cfg.measure_energy().unwrap()[0]);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let err = batch_stderr(&samples).max(1e-3);
    assert!(
        (mean + 4.0).abs() < 3.0 * err + 1e-2,
        "E = {mean} +- {err}, expected -4"
    );

    // h = 1: exact thermal energy, and a hot system near the infinite-T mean
    for beta in [8.0, 0.1] {
        let p1 = ModelParams::new(1.0, 1.0, 2).unwrap();
        let mode = RunMode::FiniteT { beta };
        let mut cfg =
            init_config(&g, &p1, &mode, ConnectionTensorKind::SreTensor, 63, 300).unwrap();
        let mut rng = walker_rng(64);
        let h = oracle::build_dense_hamiltonian(&g, &p1).unwrap();
        let rho = oracle::gibbs(&h, beta).unwrap().to_density_matrix();
        let exact = (rho * h.map(|x| oracle::C64::new(x, 0.0))).trace().re;
        let mut samples = Vec::new();
        for _ in 0..30_000 {
            cfg.sweep(&mut rng);
            samples.push(cfg.measure_energy().unwrap()[0]);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let err = batch_stderr(&samples);
        assert!(
            (mean - exact).abs() < 3.0 * err,
            "beta={beta}: E = {mean} +- {err}, exact {exact}"
        );
    }
}

#[test]
fn joint_topology_and_slice_distribution_single_site() {
    // N = 1, n = 2, h = 1: the full extended configuration space is small
    // enough to enumerate. Disconnected cells are the 16 transparent
    // patterns (in == out per replica), connected cells the 16 nonzero
    // tensor patterns; weights follow Eq.-(12)-style products of
    // <out_r| e^{-beta H} |in_r> with the g factor.
    let g = chain(1);
    let p = ModelParams::new(1.0, 1.0, 2).unwrap();
    let beta = 1.0;
    let lambda = 0.45;
    let mode = RunMode::FiniteT { beta };
    let h = oracle::build_dense_hamiltonian(&g, &p).unwrap();
    let k = oracle::matrix_exp_sym(&h, -beta);
    let kind = ConnectionTensorKind::SreTensor;

    let mut cells: Vec<(bool, u64, u64)> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for v in 0..16u64 {
        let mut w = 1.0 - lambda;
        for r in 0..4 {
            let b = ((v >> r) & 1) as usize;
            w *= k[(b, b)];
        }
        cells.push((false, v, v));
        probs.push(w);
    }
    for ins in 0..16u64 {
        for outs in 0..16u64 {
            let pat = sre_qmc::tensors::SlicePattern::new(4, ins, outs);
            if !kind.is_connectable(&pat) {
                continue;
            }
            // nonzero entry 2 cancels the 1/2 tensor normalization
            let mut w = lambda;
            for r in 0..4 {
                let row = ((outs >> r) & 1) as usize;
                let col = ((ins >> r) & 1) as usize;
                w *= k[(row, col)];
            }
            cells.push((true, ins, outs));
            probs.push(w);
        }
    }
    assert_eq!(cells.len(), 32);
    let norm: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= norm;
    }

    let mut cfg = init_config(&g, &p, &mode, kind, 71, 200).unwrap();
    let mut rng = walker_rng(72);
    for _ in 0..500 {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
    }
    let mut counts = vec![0.0f64; cells.len()];
    let sweeps = 240_000;
    for i in 0..sweeps {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
        if i % 3 != 0 {
            continue;
        }
        let pat = cfg.slice_pattern(0);
        let conn = cfg.connected.contains(0);
        let idx = cells
            .iter()
            .position(|&(c, a, b)| c == conn && a == pat.ins && b == pat.outs)
            .expect("sampled configuration outside the enumerated space");
        counts[idx] += 1.0;
    }
    let pval = chi2_pvalue(&counts, &probs);
    assert!(pval > 1e-3, "joint distribution rejected: p = {pval}");
}

#[test]
fn slice_pattern_conditional_with_topology_moves() {
    // N = 2, n = 2, beta = 1, h = 1 at fixed lambda. Conditioned on site 0
    // being connected, the stationary (pattern at site 0, topology of
    // site 1) distribution follows the exact extended weight. Individual
    // replica legs at a connected site only change through
    // disconnect/reconnect moves, so the topology sweep is part of the
    // kernel under test.
    let g = chain(2);
    let p = ModelParams::new(1.0, 1.0, 2).unwrap();
    let beta = 1.0;
    let lambda = 0.5;
    let mode = RunMode::FiniteT { beta };
    let h = oracle::build_dense_hamiltonian(&g, &p).unwrap();
    let k = oracle::matrix_exp_sym(&h, -beta);
    let kind = ConnectionTensorKind::SreTensor;

    // valid site-0 patterns
    let mut pats: Vec<(u64, u64)> = Vec::new();
    for ins in 0..16u64 {
        for outs in 0..16u64 {
            if kind.is_connectable(&sre_qmc::tensors::SlicePattern::new(4, ins, outs)) {
                pats.push((ins, outs));
            }
        }
    }
    assert_eq!(pats.len(), 16);

    // cells: (site-0 pattern, site-1 connected?); site-1 slice values are
    // marginalized exactly
    let mut cells: Vec<(u64, u64, bool)> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for &(ins, outs) in &pats {
        let elem = |r: usize, z_out: u64, z_in: u64| -> f64 {
            let row = (((outs >> r) & 1) as usize) | (((z_out >> r) as usize & 1) << 1);
            let col = (((ins >> r) & 1) as usize) | (((z_in >> r) as usize & 1) << 1);
            k[(row, col)]
        };
        // site 1 disconnected: transparent, z_in = z_out = z
        let mut w_disc = 0.0f64;
        for z in 0..16u64 {
            let mut prod = 1.0 - lambda;
            for r in 0..4 {
                prod *= elem(r, z, z);
            }
            w_disc += prod;
        }
        // site 1 connected: any nonzero tensor pattern (factor 1 each)
        let mut w_conn = 0.0f64;
        for &(z_in, z_out) in &pats {
            let mut prod = lambda;
            for r in 0..4 {
                prod *= elem(r, z_out, z_in);
            }
            w_conn += prod;
        }
        cells.push((ins, outs, false));
        probs.push(w_disc);
        cells.push((ins, outs, true));
        probs.push(w_conn);
    }
    let norm: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= norm;
    }

    let mut cfg = init_config(&g, &p, &mode, kind, 73, 200).unwrap();
    let mut rng = walker_rng(74);
    for _ in 0..500 {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
    }
    let mut counts = vec![0.0f64; cells.len()];
    let mut kept = 0usize;
    let sweeps = 400_000;
    for i in 0..sweeps {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
        if i % 3 != 0 || !cfg.connected.contains(0) {
            continue;
        }
        let pat = cfg.slice_pattern(0);
        let conn1 = cfg.connected.contains(1);
        let idx = cells
            .iter()
            .position(|&(a, b, c)| a == pat.ins && b == pat.outs && c == conn1)
            .expect("sampled configuration outside the enumerated space");
        counts[idx] += 1.0;
        kept += 1;
    }
    assert!(kept > 50_000, "too few conditioned samples: {kept}");
    let pval = chi2_pvalue(&counts, &probs);
    assert!(
        pval > 1e-3,
        "conditional slice-pattern distribution rejected: p = {pval}"
    );
}

/// Stationary N_B distribution at fixed lambda against the exact subset sum,
/// exercised for each driver wired into the sampler.
fn nb_distribution_case(
    kind: ConnectionTensorKind,
    mode: RunMode,
    n: u32,
    lambda: f64,
    seed: u64,
    sweeps: usize,
) {
    let g = chain(2);
    let p = ModelParams::new(1.0, 1.0, n).unwrap();
    let weights = oracle::exact_nb_weights(&g, &p, &mode, n, kind, lambda).unwrap();
    let norm: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / norm).collect();

    let mut cfg = init_config(&g, &p, &mode, kind, seed, 200).unwrap();
    let mut rng = walker_rng(seed ^ 0xabcd);
    for _ in 0..500 {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
    }
    let mut counts = vec![0.0f64; g.sites + 1];
    for i in 0..sweeps {
        equilibrium_sweep(&mut cfg, lambda, &mut rng);
        if i % 3 == 0 {
            counts[cfg.connected.count()] += 1.0;
        }
    }
    let pval = chi2_pvalue(&counts, &probs);
    assert!(
        pval > 1e-3,
        "{kind:?} {mode:?}: N_B distribution rejected: p = {pval}, counts {counts:?}, probs {probs:?}"
    );
}

#[test]
fn nb_distribution_sre_finite_t() {
    nb_distribution_case(
        ConnectionTensorKind::SreTensor,
        RunMode::FiniteT { beta: 1.0 },
        2,
        0.5,
        81,
        60_000,
    );
}

#[test]
fn nb_distribution_sre_projector() {
    nb_distribution_case(
        ConnectionTensorKind::SreTensor,
        RunMode::Projector { m: 10 },
        2,
        0.35,
        82,
        60_000,
    );
}

#[test]
fn nb_distribution_ere_finite_t() {
    nb_distribution_case(
        ConnectionTensorKind::EreCyclic,
        RunMode::FiniteT { beta: 1.0 },
        2,
        0.5,
        83,
        60_000,
    );
}

#[test]
fn nb_distribution_pre_projector() {
    nb_distribution_case(
        ConnectionTensorKind::PreDiagonal,
        RunMode::Projector { m: 8 },
        2,
        0.5,
        84,
        60_000,
    );
}
