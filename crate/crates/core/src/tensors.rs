//! Replica-coupling tensors and the interpolation weight g(lambda, N_B).
//!
//! The tensors are never materialized: each kind reduces to a closed-form
//! predicate on the bit pattern of slice legs. For the stabilizer tensor the
//! entry is the sum of the four single-site Pauli products over all replica
//! legs; with 2n legs per side this collapses to
//!
//! * diagonal pattern (out == in):      1 + (-1)^parity         -> 0 or 2
//! * anti-diagonal (out == NOT in):     1 + (-1)^(n + parity)   -> 0 or 2
//! * anything else:                     0
//!
//! where `parity` is the popcount parity of the in-legs and the `(-1)^n`
//! comes from the product of 2n factors of Y contributing i^{2n}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spin legs immediately below (`ins`) and above (`outs`) a connection-tensor
/// slice at one lattice site, one bit per replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlicePattern {
    /// Number of legs per side (replica count).
    pub legs: usize,
    pub ins: u64,
    pub outs: u64,
}

impl SlicePattern {
    pub fn new(legs: usize, ins: u64, outs: u64) -> Self {
        assert!(legs >= 1 && legs <= 64, "leg count out of range");
        let mask = Self::mask(legs);
        debug_assert_eq!(ins & !mask, 0, "in-legs exceed leg count");
        debug_assert_eq!(outs & !mask, 0, "out-legs exceed leg count");
        SlicePattern { legs, ins, outs }
    }

    pub fn from_bits(ins: &[u8], outs: &[u8]) -> Self {
        assert_eq!(ins.len(), outs.len());
        let pack = |bits: &[u8]| {
            bits.iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | ((b as u64 & 1) << i))
        };
        SlicePattern::new(ins.len(), pack(ins), pack(outs))
    }

    fn mask(legs: usize) -> u64 {
        if legs == 64 {
            u64::MAX
        } else {
            (1u64 << legs) - 1
        }
    }

    fn full(&self) -> u64 {
        Self::mask(self.legs)
    }
}

/// Which tensor couples the replicas at a connected site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionTensorKind {
    /// Stabilizer tensor: sum of sigma^{x2n} over the four Paulis; 2n legs
    /// per side for Renyi order n.
    SreTensor,
    /// Cyclic permutation tensor of the replica trick (entanglement Renyi
    /// entropy); n legs per side.
    EreCyclic,
    /// Anti-cyclic permutation tensor (entanglement Renyi negativity).
    ErnAnticyclic,
    /// |0..0><0..0| + |1..1><1..1| over n replicas (participation entropy).
    PreDiagonal,
    /// Transparent slice: every replica's worldline passes straight through.
    Identity,
}

impl ConnectionTensorKind {
    /// Replica count required for Renyi order `n`.
    pub fn replicas(&self, n: u32) -> usize {
        match self {
            ConnectionTensorKind::SreTensor => 2 * n as usize,
            _ => n as usize,
        }
    }

    /// Tensor element for the given leg pattern (0, 1 or 2).
    pub fn entry(&self, p: &SlicePattern) -> u32 {
        match self {
            ConnectionTensorKind::SreTensor => sre_entry(p),
            ConnectionTensorKind::EreCyclic => ere_entry(p),
            ConnectionTensorKind::ErnAnticyclic => ern_entry(p),
            ConnectionTensorKind::PreDiagonal => pre_entry(p),
            ConnectionTensorKind::Identity => u32::from(p.ins == p.outs),
        }
    }

    /// True iff the pattern hits a nonzero entry of the active tensor.
    pub fn is_connectable(&self, p: &SlicePattern) -> bool {
        self.entry(p) != 0
    }

    /// Natural log of the per-site factor contributed by a connected site,
    /// i.e. entry / 2^norm with the SRE tensor normalized by 1/2 per site.
    /// `None` encodes a forbidden (zero-weight) pattern.
    pub fn log_site_factor(&self, p: &SlicePattern) -> Option<f64> {
        let e = self.entry(p);
        if e == 0 {
            return None;
        }
        let norm = match self {
            ConnectionTensorKind::SreTensor => 2.0f64.ln(),
            _ => 0.0,
        };
        Some((e as f64).ln() - norm)
    }
}

/// Stabilizer tensor element over 2n legs per side; always 0 or 2.
pub fn sre_entry(p: &SlicePattern) -> u32 {
    assert!(p.legs % 2 == 0, "SRE tensor needs an even leg count 2n");
    let parity = (p.ins.count_ones() & 1) as u64;
    if p.ins == p.outs {
        // I-product (+1) plus Z-product ((-1)^parity).
        if parity == 0 {
            2
        } else {
            0
        }
    } else if p.ins == (!p.outs & p.full()) {
        // X-product (+1) plus Y-product (i^{2n} (-1)^parity).
        let order_n = (p.legs / 2) as u64;
        if (parity + order_n) % 2 == 0 {
            2
        } else {
            0
        }
    } else {
        0
    }
}

/// Cyclic-shift delta tensor: 1 iff in[i] == out[(i+1) mod r] for all i.
pub fn ere_entry(p: &SlicePattern) -> u32 {
    let r = p.legs as u32;
    let shifted = ((p.outs >> 1) | (p.outs << (r - 1))) & p.full();
    u32::from(p.ins == shifted)
}

/// Anti-cyclic delta tensor: 1 iff in[i] == out[(i-1) mod r] for all i.
pub fn ern_entry(p: &SlicePattern) -> u32 {
    let r = p.legs as u32;
    let shifted = ((p.outs << 1) | (p.outs >> (r - 1))) & p.full();
    u32::from(p.ins == shifted)
}

/// Participation tensor: 1 iff all 2n legs are 0 or all are 1.
pub fn pre_entry(p: &SlicePattern) -> u32 {
    let all0 = p.ins == 0 && p.outs == 0;
    let all1 = p.ins == p.full() && p.outs == p.full();
    u32::from(all0 || all1)
}

/// The set B of sites whose replicas are coupled through the tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionSet {
    mask: Vec<bool>,
    n_connected: usize,
}

impl ConnectionSet {
    pub fn empty(n_sites: usize) -> Self {
        ConnectionSet {
            mask: vec![false; n_sites],
            n_connected: 0,
        }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let n_connected = mask.iter().filter(|&&b| b).count();
        ConnectionSet { mask, n_connected }
    }

    pub fn contains(&self, site: usize) -> bool {
        self.mask[site]
    }

    pub fn insert(&mut self, site: usize) {
        if !self.mask[site] {
            self.mask[site] = true;
            self.n_connected += 1;
        }
    }

    pub fn remove(&mut self, site: usize) {
        if self.mask[site] {
            self.mask[site] = false;
            self.n_connected -= 1;
        }
    }

    pub fn count(&self) -> usize {
        self.n_connected
    }

    pub fn n_sites(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        self.mask.as_slice()
    }
}

/// Log-domain weight with an explicit minus-infinity sentinel.
///
/// The sentinel marks an exactly-zero weight (the `ln 0` of an abandoned
/// path); adding anything to it is a programming error and panics, only
/// comparisons and subtraction of two finite values are provided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogWeight {
    Finite(f64),
    NegInfinity,
}

impl LogWeight {
    pub fn is_neg_infinity(&self) -> bool {
        matches!(self, LogWeight::NegInfinity)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            LogWeight::Finite(v) => Some(*v),
            LogWeight::NegInfinity => None,
        }
    }

    /// Finite difference `self - other`; `None` when either side is the
    /// sentinel (the caller must handle abandonment explicitly).
    pub fn checked_sub(&self, other: &LogWeight) -> Option<f64> {
        match (self, other) {
            (LogWeight::Finite(a), LogWeight::Finite(b)) => Some(a - b),
            _ => None,
        }
    }

    pub fn add_finite(&self, delta: f64) -> LogWeight {
        match self {
            LogWeight::Finite(v) => LogWeight::Finite(v + delta),
            LogWeight::NegInfinity => {
                panic!("arithmetic on the -inf log-weight sentinel")
            }
        }
    }
}

/// ln g(lambda, N_B) = N_B ln(lambda) + (N - N_B) ln(1 - lambda).
///
/// Exactly-zero weights (lambda = 0 with N_B > 0, or lambda = 1 with
/// N_B < N) return the sentinel; `0 ln 0 = 0` at the endpoints.
pub fn log_g(lambda: f64, n_b: usize, n_sites: usize) -> Result<LogWeight> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::config(
            "lambda",
            format!("lambda must lie in [0, 1], got {lambda}"),
        ));
    }
    if n_b > n_sites {
        return Err(Error::config(
            "n_b",
            format!("N_B = {n_b} exceeds site count {n_sites}"),
        ));
    }
    let k = n_b as f64;
    let rest = (n_sites - n_b) as f64;
    if lambda == 0.0 {
        return Ok(if n_b > 0 {
            LogWeight::NegInfinity
        } else {
            LogWeight::Finite(0.0)
        });
    }
    if lambda == 1.0 {
        return Ok(if n_b < n_sites {
            LogWeight::NegInfinity
        } else {
            LogWeight::Finite(0.0)
        });
    }
    Ok(LogWeight::Finite(
        k * lambda.ln() + rest * (1.0 - lambda).ln(),
    ))
}
