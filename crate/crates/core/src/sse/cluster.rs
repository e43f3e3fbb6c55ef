//! Swendsen-Wang cluster update over operator legs.
//!
//! Clusters are built on a union-find graph: worldline pieces join the legs
//! they connect, bond operators merge all four of their legs, and single-site
//! operators terminate growth (their two legs stay in separate clusters, so
//! flipping exactly one of them toggles the operator between its diagonal
//! and off-diagonal form at no weight cost). At the connection slice a
//! cluster reaching one leg of a connected site branches into the same-side
//! legs of every other replica for the stabilizer tensor, follows the cyclic
//! wiring for the permutation tensor, and absorbs all legs of the site for
//! the participation tensor. Disconnected sites are transparent. Finite-T
//! worldlines wrap through the shared base state; projector worldlines end
//! on the fixed trial state, freezing any cluster that touches a boundary.
//! Every cluster flips independently with probability 1/2.

use rand::Rng;

use crate::tensors::ConnectionTensorKind;

use super::{ReplicaConfig, SseOperator};

struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, v: u32) -> u32 {
        let mut root = v;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = v;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

/// Leg bookkeeping for one single-site operator (bond operators never change
/// under cluster flips, so only site operators are recorded).
struct SiteOpLegs {
    replica: usize,
    segment: usize,
    slot: usize,
    leg_in: u32,
    leg_out: u32,
}

/// One Swendsen-Wang sweep: build clusters, flip each with probability 1/2,
/// rewrite states and operator types.
pub fn cluster_update(cfg: &mut ReplicaConfig, rng: &mut impl Rng) {
    let n = cfg.n_sites();
    let n_rep = cfg.n_replicas();
    let projector = cfg.mode.is_projector();

    // vertex ids: bottom anchors, top anchors, slice_in, slice_out, op legs
    let bottom = |r: usize, s: usize| (r * n + s) as u32;
    let top_base = n_rep * n;
    let top = |r: usize, s: usize| (top_base + r * n + s) as u32;
    let slice_in_base = 2 * n_rep * n;
    let slice_in_v = |r: usize, s: usize| (slice_in_base + r * n + s) as u32;
    let slice_out_base = 3 * n_rep * n;
    let slice_out_v = |r: usize, s: usize| (slice_out_base + r * n + s) as u32;
    let leg_base = 4 * n_rep * n;

    let total_op_legs: usize = cfg
        .replicas
        .iter()
        .flat_map(|rep| [&rep.lower, &rep.upper])
        .flat_map(|seg| seg.ops.iter())
        .map(|op| match op {
            SseOperator::Fill => 0,
            SseOperator::SiteDiag(_) | SseOperator::SpinFlip(_) => 2,
            SseOperator::BondDiag(_) => 4,
        })
        .sum();
    let mut dsu = Dsu::new(leg_base + total_op_legs);
    let mut next_leg = leg_base as u32;
    let mut site_ops: Vec<SiteOpLegs> = Vec::new();

    // worldline walk per replica
    let mut last: Vec<u32> = vec![0; n];
    for (ri, rep) in cfg.replicas.iter().enumerate() {
        for s in 0..n {
            last[s] = bottom(ri, s);
        }
        for (si, seg) in [&rep.lower, &rep.upper].into_iter().enumerate() {
            if si == 1 {
                // cross the slice
                for s in 0..n {
                    dsu.union(slice_in_v(ri, s), last[s]);
                    last[s] = slice_out_v(ri, s);
                }
            }
            for (slot, op) in seg.ops.iter().enumerate() {
                match *op {
                    SseOperator::Fill => {}
                    SseOperator::SiteDiag(site) | SseOperator::SpinFlip(site) => {
                        let s = site as usize;
                        let leg_in = next_leg;
                        let leg_out = next_leg + 1;
                        next_leg += 2;
                        dsu.union(leg_in, last[s]);
                        last[s] = leg_out;
                        site_ops.push(SiteOpLegs {
                            replica: ri,
                            segment: si,
                            slot,
                            leg_in,
                            leg_out,
                        });
                    }
                    SseOperator::BondDiag(b) => {
                        let (s0, s1) = cfg.geometry.bonds[b as usize];
                        let legs = [next_leg, next_leg + 1, next_leg + 2, next_leg + 3];
                        next_leg += 4;
                        dsu.union(legs[0], last[s0]);
                        dsu.union(legs[1], last[s1]);
                        dsu.union(legs[0], legs[1]);
                        dsu.union(legs[0], legs[2]);
                        dsu.union(legs[0], legs[3]);
                        last[s0] = legs[2];
                        last[s1] = legs[3];
                    }
                }
            }
        }
        for s in 0..n {
            dsu.union(last[s], top(ri, s));
            if !projector {
                // imaginary-time periodicity: top and bottom share the base spin
                dsu.union(top(ri, s), bottom(ri, s));
            }
        }
    }

    // slice wiring
    for s in 0..n {
        if cfg.connected.contains(s) {
            match cfg.kind {
                ConnectionTensorKind::SreTensor => {
                    for r in 1..n_rep {
                        dsu.union(slice_in_v(0, s), slice_in_v(r, s));
                        dsu.union(slice_out_v(0, s), slice_out_v(r, s));
                    }
                }
                ConnectionTensorKind::EreCyclic => {
                    for r in 0..n_rep {
                        dsu.union(slice_in_v(r, s), slice_out_v((r + 1) % n_rep, s));
                    }
                }
                ConnectionTensorKind::PreDiagonal => {
                    for r in 0..n_rep {
                        dsu.union(slice_in_v(0, s), slice_in_v(r, s));
                        dsu.union(slice_in_v(0, s), slice_out_v(r, s));
                    }
                }
                ConnectionTensorKind::ErnAnticyclic | ConnectionTensorKind::Identity => {
                    unreachable!("kind rejected at construction")
                }
            }
        } else {
            for r in 0..n_rep {
                dsu.union(slice_in_v(r, s), slice_out_v(r, s));
            }
        }
    }

    // freeze clusters pinned by the fixed projector boundaries
    let total_vertices = dsu.parent.len();
    let mut frozen = vec![false; total_vertices];
    if projector {
        for r in 0..n_rep {
            for s in 0..n {
                let rb = dsu.find(bottom(r, s));
                frozen[rb as usize] = true;
                let rt = dsu.find(top(r, s));
                frozen[rt as usize] = true;
            }
        }
    }

    // decide flips, one coin per unfrozen cluster root (in vertex order)
    let mut flip_of_root: Vec<Option<bool>> = vec![None; total_vertices];
    let mut flipped = vec![false; total_vertices];
    for v in 0..total_vertices as u32 {
        let root = dsu.find(v);
        let decided = match flip_of_root[root as usize] {
            Some(f) => f,
            None => {
                let f = if frozen[root as usize] {
                    false
                } else {
                    rng.random::<bool>()
                };
                flip_of_root[root as usize] = Some(f);
                f
            }
        };
        flipped[v as usize] = decided;
    }

    // apply: base states, slice states, operator types
    for (ri, rep) in cfg.replicas.iter_mut().enumerate() {
        for s in 0..n {
            if !projector && flipped[bottom(ri, s) as usize] {
                rep.base[s] ^= 1;
            }
            if flipped[slice_in_v(ri, s) as usize] {
                rep.slice_in[s] ^= 1;
            }
            if flipped[slice_out_v(ri, s) as usize] {
                rep.slice_out[s] ^= 1;
            }
        }
    }
    for rec in &site_ops {
        if flipped[rec.leg_in as usize] != flipped[rec.leg_out as usize] {
            let rep = &mut cfg.replicas[rec.replica];
            let seg = if rec.segment == 0 {
                &mut rep.lower
            } else {
                &mut rep.upper
            };
            seg.ops[rec.slot] = match seg.ops[rec.slot] {
                SseOperator::SiteDiag(s) => SseOperator::SpinFlip(s),
                SseOperator::SpinFlip(s) => SseOperator::SiteDiag(s),
                _ => unreachable!("only site operators recorded"),
            };
        }
    }
}
