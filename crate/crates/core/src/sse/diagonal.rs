//! Diagonal operator updates.
//!
//! Finite temperature uses the standard fixed-length insert/remove sweep
//! with segment weight (beta/2)^n (M-n)!/M!: at a fill slot a candidate
//! (site or bond, uniform over N + N_b) is inserted with probability
//! min{1, beta' (N + N_b) w / (M - n)}, and a diagonal operator is removed
//! with the reciprocal probability. Projector segments keep their length
//! fixed, so diagonal slots are resampled in place with Metropolis ratio
//! w_new / w_old. Off-diagonal operators only propagate the state.

use rand::Rng;

use crate::lattice::RunMode;

use super::{Replica, ReplicaConfig, Segment, SseOperator};

struct Candidates<'a> {
    n_sites: usize,
    bonds: &'a [(usize, usize)],
    field: f64,
    bond_weight: f64,
}

impl Candidates<'_> {
    fn total(&self) -> usize {
        self.n_sites + self.bonds.len()
    }

    /// Draw a uniform candidate and evaluate its matrix element in `state`.
    fn propose(&self, rng: &mut impl Rng, state: &[u8]) -> (SseOperator, f64) {
        let c = rng.random_range(0..self.total());
        if c < self.n_sites {
            (SseOperator::SiteDiag(c as u32), self.field)
        } else {
            let b = c - self.n_sites;
            let (s0, s1) = self.bonds[b];
            let w = if state[s0] == state[s1] {
                self.bond_weight
            } else {
                0.0
            };
            (SseOperator::BondDiag(b as u32), w)
        }
    }

    fn weight_of(&self, op: &SseOperator) -> f64 {
        match op {
            SseOperator::SiteDiag(_) => self.field,
            SseOperator::BondDiag(_) => self.bond_weight,
            _ => unreachable!("weight_of only applies to diagonal operators"),
        }
    }
}

/// One diagonal sweep over every segment of every replica.
pub fn diagonal_update(cfg: &mut ReplicaConfig, rng: &mut impl Rng) {
    let cand = Candidates {
        n_sites: cfg.geometry.sites,
        bonds: &cfg.geometry.bonds,
        field: cfg.params.field,
        bond_weight: 2.0 * cfg.params.coupling,
    };
    let mode = cfg.mode;
    for rep in &mut cfg.replicas {
        match mode {
            RunMode::FiniteT { beta } => {
                let beta_seg = beta / 2.0;
                sweep_finite_t(&mut rep.lower, rep.base.clone(), beta_seg, &cand, rng);
                sweep_finite_t(&mut rep.upper, rep.slice_out.clone(), beta_seg, &cand, rng);
            }
            RunMode::Projector { .. } => {
                sweep_projector(rep, &cand, rng);
            }
        }
    }
    cfg.maybe_grow_capacity();
}

fn sweep_finite_t(
    seg: &mut Segment,
    mut state: Vec<u8>,
    beta_seg: f64,
    cand: &Candidates<'_>,
    rng: &mut impl Rng,
) {
    let m_cap = seg.capacity();
    let mut n = seg.n_ops;
    let scale = beta_seg * cand.total() as f64;
    for slot in 0..m_cap {
        match seg.ops[slot] {
            SseOperator::Fill => {
                let (op, w) = cand.propose(rng, &state);
                if w > 0.0 {
                    let ratio = scale * w / (m_cap - n) as f64;
                    if ratio >= 1.0 || rng.random::<f64>() < ratio {
                        seg.ops[slot] = op;
                        n += 1;
                    }
                }
            }
            SseOperator::SpinFlip(s) => {
                state[s as usize] ^= 1;
            }
            ref op @ (SseOperator::SiteDiag(_) | SseOperator::BondDiag(_)) => {
                let w = cand.weight_of(op);
                let ratio = (m_cap - n + 1) as f64 / (scale * w);
                if ratio >= 1.0 || rng.random::<f64>() < ratio {
                    seg.ops[slot] = SseOperator::Fill;
                    n -= 1;
                }
            }
        }
    }
    seg.n_ops = n;
}

fn sweep_projector(rep: &mut Replica, cand: &Candidates<'_>, rng: &mut impl Rng) {
    for (seg, entry) in [
        (&mut rep.lower, rep.base.clone()),
        (&mut rep.upper, rep.slice_out.clone()),
    ] {
        let mut state = entry;
        for slot in 0..seg.ops.len() {
            match seg.ops[slot] {
                SseOperator::SpinFlip(s) => {
                    state[s as usize] ^= 1;
                }
                ref op @ (SseOperator::SiteDiag(_) | SseOperator::BondDiag(_)) => {
                    let w_old = cand.weight_of(op);
                    let (new_op, w_new) = cand.propose(rng, &state);
                    if w_new > 0.0 {
                        let ratio = w_new / w_old;
                        if ratio >= 1.0 || rng.random::<f64>() < ratio {
                            seg.ops[slot] = new_op;
                        }
                    }
                }
                SseOperator::Fill => {
                    unreachable!("projector segments hold no fills")
                }
            }
        }
    }
}
