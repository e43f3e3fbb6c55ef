//! Stochastic series expansion sampler for coupled replicas of the
//! transverse-field Ising model.
//!
//! Each replica carries two fixed-length operator segments meeting at the
//! connection-tensor slice. In finite-temperature mode every segment
//! represents e^{-beta H / 2} with a variable occupancy of non-identity
//! operators (the remaining slots are fills), and the imaginary-time circle
//! closes through a shared base state. In projector mode the segments are
//! exactly m operators each, anchored on the fixed |0..0> trial state at
//! both ends.
//!
//! The operator vocabulary is the standard Ising one: unit fills, the
//! off-diagonal spin flip h X_k, its diagonal partner h I_k, and the bond
//! projector |J| + J Z_k Z_j which vanishes on anti-aligned spins.

mod cluster;
mod diagonal;

pub use cluster::cluster_update;
pub use diagonal::diagonal_update;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, ModelParams, RunMode};
use crate::seeding::{derive_seed, walker_rng, StreamRole};
use crate::tensors::{log_g, ConnectionSet, ConnectionTensorKind, LogWeight, SlicePattern};

/// One slot of an operator list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SseOperator {
    /// Unit operator H_{0,0}; finite-temperature fills only.
    Fill,
    /// Diagonal single-site operator h I_k.
    SiteDiag(u32),
    /// Off-diagonal spin flip h X_k.
    SpinFlip(u32),
    /// Diagonal bond operator |J| + J Z_k Z_j (index into the bond list).
    BondDiag(u32),
}

impl SseOperator {
    pub fn is_fill(&self) -> bool {
        matches!(self, SseOperator::Fill)
    }
}

/// One imaginary-time segment (half of a replica's operator list).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub ops: Vec<SseOperator>,
    /// Number of non-fill operators.
    pub n_ops: usize,
}

impl Segment {
    fn fills(capacity: usize) -> Self {
        Segment {
            ops: vec![SseOperator::Fill; capacity],
            n_ops: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.ops.len()
    }
}

/// One replica: two segments around the slice plus the cached slice states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    /// Finite-T: the state at the bottom of the lower segment, equal to the
    /// state at the top of the upper segment (imaginary-time periodicity).
    /// Projector: the fixed trial state |0..0> at both ends.
    pub base: Vec<u8>,
    pub lower: Segment,
    pub upper: Segment,
    /// Spins just below the slice, per site.
    pub slice_in: Vec<u8>,
    /// Spins just above the slice, per site.
    pub slice_out: Vec<u8>,
}

/// The extended configuration: all replicas plus the connected-site set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaConfig {
    pub geometry: LatticeGeometry,
    pub params: ModelParams,
    pub mode: RunMode,
    pub kind: ConnectionTensorKind,
    pub replicas: Vec<Replica>,
    pub connected: ConnectionSet,
}

const INITIAL_CAPACITY: usize = 8;
/// Grow a finite-T segment when occupancy exceeds this fraction.
const GROWTH_THRESHOLD_NUM: usize = 4;
const GROWTH_THRESHOLD_DEN: usize = 5;

impl ReplicaConfig {
    pub fn n_sites(&self) -> usize {
        self.geometry.sites
    }

    pub fn n_replicas(&self) -> usize {
        self.replicas.len()
    }

    /// Total non-fill operators across all replicas.
    pub fn op_count(&self) -> usize {
        self.replicas
            .iter()
            .map(|r| r.lower.n_ops + r.upper.n_ops)
            .sum()
    }

    /// Slice pattern (in/out legs across replicas) at one site.
    pub fn slice_pattern(&self, site: usize) -> SlicePattern {
        let mut ins = 0u64;
        let mut outs = 0u64;
        for (i, rep) in self.replicas.iter().enumerate() {
            ins |= (rep.slice_in[site] as u64) << i;
            outs |= (rep.slice_out[site] as u64) << i;
        }
        SlicePattern::new(self.replicas.len(), ins, outs)
    }

    /// True when disconnecting `site` leaves every replica's worldline
    /// consistent (the identity slice demands slice_in == slice_out).
    pub fn site_identity_consistent(&self, site: usize) -> bool {
        self.replicas
            .iter()
            .all(|r| r.slice_in[site] == r.slice_out[site])
    }

    /// One full configuration sweep: diagonal then cluster update.
    pub fn sweep(&mut self, rng: &mut impl Rng) {
        diagonal_update(self, rng);
        cluster_update(self, rng);
    }

    /// Instantaneous energy estimator per replica, finite-T only:
    /// E = C - n_ops / beta with C the series shift.
    pub fn measure_energy(&self) -> Result<Vec<f64>> {
        let beta = match self.mode {
            RunMode::FiniteT { beta } => beta,
            RunMode::Projector { .. } => {
                return Err(Error::Mode(
                    "energy estimator requires finite-temperature mode".into(),
                ))
            }
        };
        let shift = self.geometry.n_bonds() as f64 * self.params.coupling
            + self.geometry.sites as f64 * self.params.field;
        Ok(self
            .replicas
            .iter()
            .map(|r| shift - (r.lower.n_ops + r.upper.n_ops) as f64 / beta)
            .collect())
    }

    /// Full invariant audit: propagation closure, slice constraints for the
    /// active tensor, bond alignment, operator validity and mode shape.
    pub fn audit(&self) -> Result<()> {
        let n = self.n_sites();
        for (ri, rep) in self.replicas.iter().enumerate() {
            if rep.base.len() != n || rep.slice_in.len() != n || rep.slice_out.len() != n {
                return Err(audit_err(ri, "state vector length mismatch"));
            }
            match self.mode {
                RunMode::Projector { m } => {
                    if rep.base.iter().any(|&b| b != 0) {
                        return Err(audit_err(ri, "projector trial state must be |0..0>"));
                    }
                    for seg in [&rep.lower, &rep.upper] {
                        if seg.ops.len() != m || seg.n_ops != m {
                            return Err(audit_err(ri, "projector segment must hold exactly m operators"));
                        }
                        if seg.ops.iter().any(|o| o.is_fill()) {
                            return Err(audit_err(ri, "projector segments admit no fills"));
                        }
                    }
                }
                RunMode::FiniteT { .. } => {
                    for seg in [&rep.lower, &rep.upper] {
                        let real = seg.ops.iter().filter(|o| !o.is_fill()).count();
                        if real != seg.n_ops {
                            return Err(audit_err(ri, "segment occupancy count out of sync"));
                        }
                    }
                }
            }
            // propagate lower: base -> slice_in
            let mut state = rep.base.clone();
            self.walk_segment(ri, &rep.lower, &mut state)?;
            if state != rep.slice_in {
                return Err(audit_err(ri, "lower segment does not propagate to slice_in"));
            }
            // propagate upper: slice_out -> base (top of the strip)
            let mut state = rep.slice_out.clone();
            self.walk_segment(ri, &rep.upper, &mut state)?;
            if state != rep.base {
                return Err(audit_err(ri, "upper segment does not close on the base state"));
            }
            if self.params.field == 0.0 {
                for seg in [&rep.lower, &rep.upper] {
                    if seg
                        .ops
                        .iter()
                        .any(|o| matches!(o, SseOperator::SiteDiag(_) | SseOperator::SpinFlip(_)))
                    {
                        return Err(audit_err(ri, "site operators present at h = 0"));
                    }
                }
            }
        }
        for site in 0..n {
            if self.connected.contains(site) {
                let p = self.slice_pattern(site);
                if !self.kind.is_connectable(&p) {
                    return Err(Error::Numerical(format!(
                        "audit: connected site {site} has a zero tensor entry"
                    )));
                }
            } else if !self.site_identity_consistent(site) {
                return Err(Error::Numerical(format!(
                    "audit: disconnected site {site} has slice_in != slice_out"
                )));
            }
        }
        Ok(())
    }

    /// Propagate a state through a segment, checking operator validity and
    /// bond alignment along the way.
    fn walk_segment(&self, ri: usize, seg: &Segment, state: &mut [u8]) -> Result<()> {
        for op in &seg.ops {
            match *op {
                SseOperator::Fill => {}
                SseOperator::SiteDiag(s) => {
                    if s as usize >= state.len() {
                        return Err(audit_err(ri, "site index out of range"));
                    }
                }
                SseOperator::SpinFlip(s) => {
                    if s as usize >= state.len() {
                        return Err(audit_err(ri, "site index out of range"));
                    }
                    state[s as usize] ^= 1;
                }
                SseOperator::BondDiag(b) => {
                    let Some(&(s0, s1)) = self.geometry.bonds.get(b as usize) else {
                        return Err(audit_err(ri, "bond index out of range"));
                    };
                    if state[s0] != state[s1] {
                        return Err(audit_err(ri, "bond operator on anti-aligned spins"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Brute-force log-weight of the configuration at coupling `lambda`
    /// (the g factor, every operator matrix element, the slice tensor
    /// factors and the fixed-length combinatorial factors). Zero-weight
    /// configurations return the sentinel.
    pub fn log_weight(&self, lambda: f64) -> Result<LogWeight> {
        let n = self.n_sites();
        let g = log_g(lambda, self.connected.count(), n)?;
        let LogWeight::Finite(mut acc) = g else {
            return Ok(LogWeight::NegInfinity);
        };
        let h = self.params.field;
        let bond_w = 2.0 * self.params.coupling;
        for rep in &self.replicas {
            for (seg, entry, exit) in [
                (&rep.lower, &rep.base, &rep.slice_in),
                (&rep.upper, &rep.slice_out, &rep.base),
            ] {
                let mut state = entry.clone();
                for op in &seg.ops {
                    match *op {
                        SseOperator::Fill => {}
                        SseOperator::SiteDiag(_) | SseOperator::SpinFlip(_) => {
                            if h == 0.0 {
                                return Ok(LogWeight::NegInfinity);
                            }
                            if let SseOperator::SpinFlip(s) = *op {
                                state[s as usize] ^= 1;
                            }
                            acc += h.ln();
                        }
                        SseOperator::BondDiag(b) => {
                            let (s0, s1) = self.geometry.bonds[b as usize];
                            if state[s0] != state[s1] {
                                return Ok(LogWeight::NegInfinity);
                            }
                            acc += bond_w.ln();
                        }
                    }
                }
                if state != *exit {
                    return Ok(LogWeight::NegInfinity);
                }
                if let RunMode::FiniteT { beta } = self.mode {
                    let cap = seg.capacity();
                    acc += seg.n_ops as f64 * (beta / 2.0).ln();
                    for k in (cap - seg.n_ops + 1)..=cap {
                        acc -= (k as f64).ln();
                    }
                }
            }
        }
        for site in 0..n {
            if self.connected.contains(site) {
                match self.kind.log_site_factor(&self.slice_pattern(site)) {
                    Some(f) => acc += f,
                    None => return Ok(LogWeight::NegInfinity),
                }
            } else if !self.site_identity_consistent(site) {
                return Ok(LogWeight::NegInfinity);
            }
        }
        Ok(LogWeight::Finite(acc))
    }

    /// Grow finite-T segment capacities where occupancy exceeds the
    /// threshold; no-op in projector mode.
    pub(crate) fn maybe_grow_capacity(&mut self) {
        if self.mode.is_projector() {
            return;
        }
        for rep in &mut self.replicas {
            for seg in [&mut rep.lower, &mut rep.upper] {
                if seg.n_ops * GROWTH_THRESHOLD_DEN > seg.capacity() * GROWTH_THRESHOLD_NUM {
                    let new_cap = (seg.capacity() + seg.capacity() / 4).max(seg.capacity() + 4);
                    seg.ops.resize(new_cap, SseOperator::Fill);
                }
            }
        }
    }
}

fn audit_err(replica: usize, msg: &str) -> Error {
    Error::Numerical(format!("audit: replica {replica}: {msg}"))
}

/// Build and thermalize the extended configuration with B empty.
///
/// Every replica is thermalized by plain per-replica SSE (the slice is
/// transparent while nothing is connected). The projector trial state is
/// fixed to |0..0>.
pub fn init_config(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    mode: &RunMode,
    kind: ConnectionTensorKind,
    seed: u64,
    therm_sweeps: usize,
) -> Result<ReplicaConfig> {
    mode.validate()?;
    match kind {
        ConnectionTensorKind::SreTensor => {
            if params.renyi_n % 2 != 0 {
                return Err(Error::config(
                    "renyi.n",
                    "the stabilizer-tensor sampler requires even Renyi order n \
                     (its cluster flips only preserve tensor entries for even n); \
                     odd orders are available through the exact oracle",
                ));
            }
        }
        ConnectionTensorKind::EreCyclic | ConnectionTensorKind::PreDiagonal => {}
        ConnectionTensorKind::ErnAnticyclic | ConnectionTensorKind::Identity => {
            return Err(Error::Mode(format!(
                "tensor kind {kind:?} is not wired into the sampler"
            )));
        }
    }
    let n = geometry.sites;
    let n_replicas = kind.replicas(params.renyi_n);
    let mut rng = walker_rng(derive_seed(seed, StreamRole::InitConfig, 0, 0));

    let mut replicas = Vec::with_capacity(n_replicas);
    for _ in 0..n_replicas {
        let rep = match mode {
            RunMode::FiniteT { .. } => {
                let base: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
                Replica {
                    slice_in: base.clone(),
                    slice_out: base.clone(),
                    base,
                    lower: Segment::fills(INITIAL_CAPACITY),
                    upper: Segment::fills(INITIAL_CAPACITY),
                }
            }
            RunMode::Projector { m } => {
                if geometry.n_bonds() == 0 && params.field == 0.0 {
                    return Err(Error::config(
                        "mode.m",
                        "projector mode needs at least one bond or a nonzero field",
                    ));
                }
                let filler = |p: usize| {
                    if geometry.n_bonds() > 0 {
                        SseOperator::BondDiag((p % geometry.n_bonds()) as u32)
                    } else {
                        SseOperator::SiteDiag((p % n) as u32)
                    }
                };
                let seg = |offset: usize| Segment {
                    ops: (0..*m).map(|p| filler(p + offset)).collect(),
                    n_ops: *m,
                };
                Replica {
                    base: vec![0u8; n],
                    lower: seg(0),
                    upper: seg(*m),
                    slice_in: vec![0u8; n],
                    slice_out: vec![0u8; n],
                }
            }
        };
        replicas.push(rep);
    }

    let mut cfg = ReplicaConfig {
        geometry: geometry.clone(),
        params: *params,
        mode: *mode,
        kind,
        replicas,
        connected: ConnectionSet::empty(n),
    };
    debug_assert!(cfg.audit().is_ok(), "freshly built config fails audit");
    for _ in 0..therm_sweeps {
        cfg.sweep(&mut rng);
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Binary checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"SSECKPT\x01";

/// Write a versioned, self-describing binary checkpoint.
pub fn save_checkpoint<W: std::io::Write>(cfg: &ReplicaConfig, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let body = serde_json::to_vec(cfg)
        .map_err(|e| Error::Checkpoint(format!("serialize failed: {e}")))?;
    w.write_all(&(body.len() as u64).to_le_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`] and audit it.
pub fn load_checkpoint<R: std::io::Read>(mut r: R) -> Result<ReplicaConfig> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic or unsupported version".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let cfg: ReplicaConfig = serde_json::from_slice(&body)
        .map_err(|e| Error::Checkpoint(format!("deserialize failed: {e}")))?;
    cfg.audit()?;
    Ok(cfg)
}
