//! Lattice geometries and model parameters for the transverse-field Ising
//! Hamiltonian `H = -J sum_<ij> Z_i Z_j - h sum_i X_i`.
//!
//! Supported geometries are 1D chains and 2D rectangular lattices with
//! per-dimension open or periodic boundaries. Sites are indexed row-major
//! over `dims` and the bond list is sorted, so identical inputs always
//! produce bit-identical geometries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition along one lattice dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// Sites and bonds of a 1D chain or 2D rectangular lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub dims: Vec<usize>,
    pub bc: Vec<Boundary>,
    /// Total site count; product of `dims`.
    pub sites: usize,
    /// Unordered nearest-neighbor pairs, each stored as (low, high),
    /// sorted lexicographically.
    pub bonds: Vec<(usize, usize)>,
}

/// Coupling constants and the Renyi order of the target entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ising coupling, J > 0 (sign-problem-free regime).
    pub coupling: f64,
    /// Transverse field, h >= 0.
    pub field: f64,
    /// Renyi order n >= 2.
    pub renyi_n: u32,
}

impl ModelParams {
    pub fn new(coupling: f64, field: f64, renyi_n: u32) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(Error::config("model.J", "coupling J must be finite and > 0"));
        }
        if !(field >= 0.0) || !field.is_finite() {
            return Err(Error::config("model.h", "field h must be finite and >= 0"));
        }
        if renyi_n < 2 {
            return Err(Error::config("renyi.n", "Renyi order n must be >= 2"));
        }
        Ok(ModelParams {
            coupling,
            field,
            renyi_n,
        })
    }
}

/// Finite-temperature or ground-state (projector) sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunMode {
    /// Thermal density matrix e^{-beta H} / Tr e^{-beta H}.
    FiniteT { beta: f64 },
    /// Projector sampling of (-H)^m |0..0> with fixed operator-list length m
    /// per imaginary-time segment.
    Projector { m: usize },
}

impl RunMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            RunMode::FiniteT { beta } => {
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(Error::config("mode.beta", "beta must be finite and > 0"));
                }
            }
            RunMode::Projector { m } => {
                if *m < 1 {
                    return Err(Error::config("mode.m", "projector length m must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn is_projector(&self) -> bool {
        matches!(self, RunMode::Projector { .. })
    }
}

/// Build a 1D or 2D nearest-neighbor lattice.
///
/// Open dimensions may be as short as a single site; periodic dimensions
/// need length >= 3 to avoid duplicate bonds.
pub fn build_lattice(dims: &[usize], bc: &[Boundary]) -> Result<LatticeGeometry> {
    if dims.is_empty() || dims.len() > 2 {
        return Err(Error::config(
            "lattice.dims",
            format!("expected 1 or 2 dimensions, got {}", dims.len()),
        ));
    }
    if bc.len() != dims.len() {
        return Err(Error::config(
            "lattice.bc",
            format!(
                "boundary list length {} does not match dims length {}",
                bc.len(),
                dims.len()
            ),
        ));
    }
    for (d, (&len, &b)) in dims.iter().zip(bc.iter()).enumerate() {
        if len == 0 {
            return Err(Error::config(
                "lattice.dims",
                format!("dimension {d} has zero length"),
            ));
        }
        if b == Boundary::Periodic && len < 3 {
            return Err(Error::config(
                "lattice.dims",
                format!("periodic dimension {d} must have length >= 3, got {len}"),
            ));
        }
    }

    let sites: usize = dims.iter().product();
    // Row-major strides: site = i0 * dims[1] + i1 in 2D.
    let mut strides = vec![1usize; dims.len()];
    for d in (0..dims.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * dims[d + 1];
    }

    let mut bonds = Vec::new();
    let mut coords = vec![0usize; dims.len()];
    for site in 0..sites {
        {
            let mut rem = site;
            for d in 0..dims.len() {
                coords[d] = rem / strides[d];
                rem %= strides[d];
            }
        }
        for d in 0..dims.len() {
            let len = dims[d];
            let next = if coords[d] + 1 < len {
                Some(site + strides[d])
            } else if bc[d] == Boundary::Periodic {
                Some(site - coords[d] * strides[d])
            } else {
                None
            };
            if let Some(other) = next {
                let pair = (site.min(other), site.max(other));
                bonds.push(pair);
            }
        }
    }
    bonds.sort_unstable();
    bonds.dedup();

    let expected: usize = {
        let mut count = 0usize;
        for d in 0..dims.len() {
            let per_line = if bc[d] == Boundary::Periodic {
                dims[d]
            } else {
                dims[d] - 1
            };
            count += per_line * (sites / dims[d]);
        }
        count
    };
    debug_assert_eq!(bonds.len(), expected, "bond construction internal error");

    Ok(LatticeGeometry {
        dims: dims.to_vec(),
        bc: bc.to_vec(),
        sites,
        bonds,
    })
}

impl LatticeGeometry {
    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }
}
