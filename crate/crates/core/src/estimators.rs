//! Statistical post-processing of work ensembles.
//!
//! Sample moments and Gaussianity diagnostics of the work distribution, the
//! Gaussian-model predictions for the mean and variance of e^{-W}, power-law
//! fits of the signal-to-noise ratio versus system size, and the spectral
//! lower bound on the projector list length.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Sample statistics of the non-abandoned work values of one ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standardized sample skewness (m3 / m2^{3/2}); 0 for degenerate data.
    pub skewness: f64,
    pub count: usize,
    pub abandoned_fraction: f64,
    /// Kolmogorov-Smirnov distance to the Gaussian fitted to the samples.
    pub ks_distance: f64,
    /// Set when the sample variance vanishes and the KS distance against a
    /// point mass is meaningless.
    pub degenerate: bool,
}

/// Power-law fit of SNR(e^{-W}) = alpha_c^{-1} N^{-alpha}, optionally with
/// the work-SNR exponent gamma from SNR(W) ~ N^gamma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrFit {
    pub alpha: f64,
    pub alpha_c: f64,
    pub gamma: Option<f64>,
    /// Log-space residuals of the e^{-W} SNR fit, one per input size.
    pub residuals: Vec<f64>,
}

/// Spectral inputs of the projector-length bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralData {
    pub ground_energy: f64,
    /// Energy gap to the first distinct excited level; must be positive.
    pub gap: f64,
    /// Trial-state amplitude ratio r0 = <e|phi> / <g|phi>.
    pub r0: f64,
}

/// Projector list length satisfying the relative-bias target, with the
/// smallness warning of the bound's derivation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProjectorBound {
    pub m: usize,
    /// True when (n-1) delta_r M_n is not small and the asymptotic bound is
    /// unreliable.
    pub smallness_warning: bool,
}

/// Moments, abandonment fraction and Gaussian KS distance of a work sample.
pub fn work_stats(work: &[f64], n_abandoned: usize) -> Result<WorkStats> {
    let count = work.len();
    if count < 2 {
        return Err(Error::InsufficientData(format!(
            "work statistics need >= 2 samples, got {count}"
        )));
    }
    let nf = count as f64;
    let mean = work.iter().sum::<f64>() / nf;
    let m2 = work.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / nf;
    let m3 = work.iter().map(|w| (w - mean).powi(3)).sum::<f64>() / nf;
    let variance = m2 * nf / (nf - 1.0);
    let degenerate = variance == 0.0;
    let skewness = if degenerate { 0.0 } else { m3 / m2.powf(1.5) };

    let ks_distance = if degenerate {
        // distance of a point mass to itself; flagged instead of tested
        0.0
    } else {
        ks_distance_to_normal(work, mean, variance.sqrt())
    };

    Ok(WorkStats {
        mean,
        variance,
        skewness,
        count,
        abandoned_fraction: n_abandoned as f64 / (count + n_abandoned) as f64,
        ks_distance,
        degenerate,
    })
}

fn ks_distance_to_normal(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("positive standard deviation");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal.cdf(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    d
}

/// Asymptotic Kolmogorov critical value at significance `alpha` for sample
/// size n: K_alpha / sqrt(n).
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    // K_alpha solves Q(K) = alpha for the Kolmogorov distribution
    let k_alpha = (-(alpha / 2.0).ln() / 2.0).sqrt();
    k_alpha / (n as f64).sqrt()
}

/// Gaussian-model consistency report: compares the empirical mean and
/// variance of e^{-W} with mu = e^{-Wbar + s^2/2} and
/// tau^2 = e^{-2 Wbar} e^{s^2} (e^{s^2} - 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianConsistency {
    pub mu_predicted: f64,
    pub mu_empirical: f64,
    pub mu_relative_deviation: f64,
    pub tau2_predicted: f64,
    pub tau2_empirical: f64,
    pub tau2_relative_deviation: f64,
    /// Raised when either relative deviation exceeds 20%.
    pub deviation_flag: bool,
}

pub fn gaussian_consistency(stats: &WorkStats, work: &[f64]) -> Result<GaussianConsistency> {
    if work.len() < 2 {
        return Err(Error::InsufficientData(
            "Gaussian consistency needs >= 2 samples".into(),
        ));
    }
    let wbar = stats.mean;
    let s2 = stats.variance;
    let mu_pred = (-wbar + s2 / 2.0).exp();
    let tau2_pred = (-2.0 * wbar).exp() * s2.exp() * (s2.exp() - 1.0);

    let nf = work.len() as f64;
    let mu_emp = work.iter().map(|w| (-w).exp()).sum::<f64>() / nf;
    let tau2_emp = work
        .iter()
        .map(|w| ((-w).exp() - mu_emp).powi(2))
        .sum::<f64>()
        / (nf - 1.0);

    let mu_dev = if mu_pred != 0.0 {
        (mu_emp - mu_pred).abs() / mu_pred.abs()
    } else {
        f64::INFINITY
    };
    let tau2_dev = if tau2_pred != 0.0 {
        (tau2_emp - tau2_pred).abs() / tau2_pred.abs()
    } else if tau2_emp == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(GaussianConsistency {
        mu_predicted: mu_pred,
        mu_empirical: mu_emp,
        mu_relative_deviation: mu_dev,
        tau2_predicted: tau2_pred,
        tau2_empirical: tau2_emp,
        tau2_relative_deviation: tau2_dev,
        deviation_flag: mu_dev > 0.2 || tau2_dev > 0.2,
    })
}

/// Least-squares power-law fit of the e^{-W} SNR series (and optionally the
/// W SNR series) in log-log space.
pub fn fit_snr_scaling(
    exp_w_snr: &[(f64, f64)],
    w_snr: Option<&[(f64, f64)]>,
) -> Result<SnrFit> {
    if exp_w_snr.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "SNR fit needs >= 3 system sizes, got {}",
            exp_w_snr.len()
        )));
    }
    for &(n, snr) in exp_w_snr {
        if !(n > 0.0) || !(snr > 0.0) {
            return Err(Error::config(
                "snr",
                format!("sizes and SNR values must be positive, got ({n}, {snr})"),
            ));
        }
    }
    // ln snr = -alpha ln N - ln alpha_c
    let (slope, intercept) = linear_fit(
        &exp_w_snr
            .iter()
            .map(|&(n, s)| (n.ln(), s.ln()))
            .collect::<Vec<_>>(),
    );
    let alpha = -slope;
    let alpha_c = (-intercept).exp();
    let residuals = exp_w_snr
        .iter()
        .map(|&(n, s)| s.ln() - (slope * n.ln() + intercept))
        .collect();

    let gamma = match w_snr {
        Some(series) if series.len() >= 2 => {
            for &(n, snr) in series {
                if !(n > 0.0) || !(snr > 0.0) {
                    return Err(Error::config(
                        "w_snr",
                        "sizes and SNR values must be positive",
                    ));
                }
            }
            let (g, _) = linear_fit(
                &series
                    .iter()
                    .map(|&(n, s)| (n.ln(), s.ln()))
                    .collect::<Vec<_>>(),
            );
            Some(g)
        }
        _ => None,
    };

    Ok(SnrFit {
        alpha,
        alpha_c,
        gamma,
        residuals,
    })
}

fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Lower bound on the projector list length for relative bias `delta_r`:
/// m >= |E_g| / (2 gap) * ln( 2 n r0^2 / ((n-1) delta_r M_n) ).
pub fn min_projector_length(
    spec: &SpectralData,
    n: u32,
    delta_r: f64,
    m_n: f64,
) -> Result<ProjectorBound> {
    if !(spec.gap > 0.0) {
        return Err(Error::config("gap", "energy gap must be positive"));
    }
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    if !(delta_r > 0.0) || !(m_n > 0.0) {
        return Err(Error::config(
            "delta_r",
            "relative bias target and M_n must be positive",
        ));
    }
    let product = (n as f64 - 1.0) * delta_r * m_n;
    let arg = 2.0 * n as f64 * spec.r0 * spec.r0 / product;
    let bound = spec.ground_energy.abs() / (2.0 * spec.gap) * arg.ln();
    Ok(ProjectorBound {
        m: bound.ceil().max(1.0) as usize,
        smallness_warning: product >= 0.1,
    })
}
