//! Brute-force reference implementation for small systems.
//!
//! Dense Hamiltonians, Gibbs and projected states, and direct enumeration of
//! every Renyi quantity the sampler estimates: M_n over all 4^N Pauli
//! strings, S_n from the spectrum, participation and negativity entropies,
//! and the replica partition functions Z_B. Nothing here shares code with
//! the Monte Carlo path, so agreement is meaningful.

mod fixtures;
mod zb;

pub use fixtures::{stabilizer_fixture_checks, FixtureCase, FixtureReport};
pub use zb::{exact_nb_weights, exact_z_lambda, exact_zb, exact_zb_legsum};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, ModelParams};

pub type C64 = Complex<f64>;

/// Hard cap for dense Hamiltonian construction.
pub const MAX_DENSE_QUBITS: usize = 14;
/// Hard cap for 4^N Pauli-string enumeration.
pub const MAX_PAULI_QUBITS: usize = 8;
/// Hard cap for spectral operations on density matrices.
pub const MAX_SPECTRAL_QUBITS: usize = 12;

/// A pure state vector or density matrix on `n_qubits` spins.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub n_qubits: usize,
    pub kind: StateKind,
}

#[derive(Debug, Clone)]
pub enum StateKind {
    Pure(DVector<C64>),
    Density(DMatrix<C64>),
}

impl DenseState {
    /// Wrap a normalized pure state (norm checked to 1e-12).
    pub fn pure(v: DVector<C64>) -> Result<Self> {
        let n_qubits = qubit_count(v.len())?;
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "pure state norm {norm} deviates from 1 by more than 1e-12"
            )));
        }
        Ok(DenseState {
            n_qubits,
            kind: StateKind::Pure(v),
        })
    }

    pub fn pure_normalized(mut v: DVector<C64>) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Numerical("cannot normalize the zero vector".into()));
        }
        v /= C64::new(norm, 0.0);
        DenseState::pure(v)
    }

    /// Wrap a density matrix; checks hermiticity, unit trace (1e-10) and
    /// positive semidefiniteness (eigenvalue floor -1e-10).
    pub fn density(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Numerical("density matrix must be square".into()));
        }
        let n_qubits = qubit_count(m.nrows())?;
        let herm_dev = (&m - m.adjoint()).norm();
        if herm_dev > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        let trace = m.trace();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix trace {trace} deviates from 1"
            )));
        }
        let eigs = hermitian_eigenvalues(&m);
        if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
            if min < -1e-10 {
                return Err(Error::Numerical(format!(
                    "density matrix has negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(DenseState {
            n_qubits,
            kind: StateKind::Density(m),
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Tr[rho sigma] (or <psi|sigma|psi>) for the Pauli string `sigma`;
    /// real for Hermitian inputs.
    pub fn pauli_expectation(&self, p: PauliString) -> f64 {
        let val = match &self.kind {
            StateKind::Pure(v) => {
                let mut acc = C64::new(0.0, 0.0);
                for z in 0..v.len() {
                    let w = z ^ p.x_mask;
                    acc += v[w].conj() * p.phase(z) * v[z];
                }
                acc
            }
            StateKind::Density(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for z in 0..m.nrows() {
                    let w = z ^ p.x_mask;
                    acc += m[(z, w)] * p.phase(z);
                }
                acc
            }
        };
        debug_assert!(val.im.abs() < 1e-9, "Pauli expectation not real: {val}");
        val.re
    }

    /// Density-matrix view (pure states become projectors).
    pub fn to_density_matrix(&self) -> DMatrix<C64> {
        match &self.kind {
            StateKind::Pure(v) => v * v.adjoint(),
            StateKind::Density(m) => m.clone(),
        }
    }
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::Numerical(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// A Pauli string packed as X/Z bit masks; site s carries Y iff both bits
/// are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    pub x_mask: usize,
    pub z_mask: usize,
}

impl PauliString {
    /// Decode a base-4 site code (site s = (code >> 2s) & 3,
    /// 0 -> I, 1 -> Z, 2 -> X, 3 -> Y).
    pub fn from_code(code: usize, n_qubits: usize) -> Self {
        let mut x_mask = 0usize;
        let mut z_mask = 0usize;
        for s in 0..n_qubits {
            match (code >> (2 * s)) & 3 {
                0 => {}
                1 => z_mask |= 1 << s,
                2 => x_mask |= 1 << s,
                _ => {
                    x_mask |= 1 << s;
                    z_mask |= 1 << s;
                }
            }
        }
        PauliString { x_mask, z_mask }
    }

    /// <z ^ x_mask | sigma | z>.
    fn phase(&self, z: usize) -> C64 {
        let y_count = (self.x_mask & self.z_mask).count_ones();
        let minus = (z & self.z_mask).count_ones() & 1;
        let mut val = match y_count % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        if minus == 1 {
            val = -val;
        }
        val
    }
}

/// Dense transverse-field Ising Hamiltonian
/// `H = -J sum_<ij> Z_i Z_j - h sum_i X_i` in the computational Z basis.
pub fn build_dense_hamiltonian(
    geometry: &LatticeGeometry,
    params: &ModelParams,
) -> Result<DMatrix<f64>> {
    let n = geometry.sites;
    if n > MAX_DENSE_QUBITS {
        return Err(Error::SizeCap(format!(
            "dense Hamiltonian capped at {MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    let dim = 1usize << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for z in 0..dim {
        let mut diag = 0.0;
        for &(a, b) in &geometry.bonds {
            let aligned = ((z >> a) ^ (z >> b)) & 1 == 0;
            diag += if aligned {
                -params.coupling
            } else {
                params.coupling
            };
        }
        h[(z, z)] = diag;
        for s in 0..n {
            let w = z ^ (1 << s);
            h[(z, w)] -= params.field;
        }
    }
    Ok(h)
}

/// Constant shift C = N_b J + N h used by the series expansion; the sampler
/// expands (C - H)^m, whose eigenvalues are all non-negative.
pub fn sse_shift(geometry: &LatticeGeometry, params: &ModelParams) -> f64 {
    geometry.n_bonds() as f64 * params.coupling + geometry.sites as f64 * params.field
}

/// Lowest eigenpair of a real symmetric Hamiltonian plus the gap to the
/// next distinct level.
#[derive(Debug, Clone)]
pub struct GroundInfo {
    pub energy: f64,
    /// Gap to the next distinct eigenvalue (tolerance 1e-8).
    pub gap: f64,
    /// True when the lowest eigenvalue has multiplicity > 1.
    pub degenerate: bool,
    pub vector: DVector<f64>,
}

pub fn ground_state(h: &DMatrix<f64>) -> Result<GroundInfo> {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let e0 = eig.eigenvalues[order[0]];
    let tol = 1e-8 * (1.0 + e0.abs());
    let mut gap = 0.0;
    let mut degenerate = false;
    for &i in order.iter().skip(1) {
        let e = eig.eigenvalues[i];
        if e - e0 > tol {
            gap = e - e0;
            break;
        }
        degenerate = true;
    }
    if gap == 0.0 {
        return Err(Error::Numerical(
            "spectrum has a single distinct level; no gap defined".into(),
        ));
    }
    Ok(GroundInfo {
        energy: e0,
        gap,
        degenerate,
        vector: eig.eigenvectors.column(order[0]).into_owned(),
    })
}

/// Normalized projection of `trial` onto the ground eigenspace; this is the
/// m -> infinity limit of projector sampling anchored at `trial` and the
/// reference state for degenerate ground spaces.
pub fn projected_ground_state(h: &DMatrix<f64>, trial: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = h.clone().symmetric_eigen();
    let e0 = eig.eigenvalues.iter().cloned().reduce(f64::min).unwrap();
    let tol = 1e-8 * (1.0 + e0.abs());
    let mut proj = DVector::<f64>::zeros(trial.len());
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] - e0 <= tol {
            let v = eig.eigenvectors.column(i);
            proj += v * v.dot(trial);
        }
    }
    let norm = proj.norm();
    if norm < 1e-12 {
        return Err(Error::Numerical(
            "trial state has no overlap with the ground space".into(),
        ));
    }
    Ok(proj / norm)
}

/// E_g, gap and the trial-state amplitude ratio r0 = |c_e| / |c_g| feeding
/// the projector-length bound.
pub fn spectral_data(
    h: &DMatrix<f64>,
    trial: &DVector<f64>,
) -> Result<crate::estimators::SpectralData> {
    let info = ground_state(h)?;
    let eig = h.clone().symmetric_eigen();
    let e0 = info.energy;
    let tol = 1e-8 * (1.0 + e0.abs());
    let mut ground_part = DVector::<f64>::zeros(trial.len());
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] - e0 <= tol {
            let v = eig.eigenvectors.column(i);
            ground_part += v * v.dot(trial);
        }
    }
    let c_g = ground_part.norm();
    if c_g < 1e-12 {
        return Err(Error::Numerical(
            "trial state has no overlap with the ground space".into(),
        ));
    }
    let c_e = (trial - &ground_part).norm();
    Ok(crate::estimators::SpectralData {
        ground_energy: info.energy,
        gap: info.gap,
        r0: c_e / c_g,
    })
}

/// Normalized Gibbs state e^{-beta H} / Tr e^{-beta H}.
pub fn gibbs(h: &DMatrix<f64>, beta: f64) -> Result<DenseState> {
    let n = qubit_count(h.nrows())?;
    if n > MAX_SPECTRAL_QUBITS {
        return Err(Error::SizeCap(format!(
            "Gibbs state capped at {MAX_SPECTRAL_QUBITS} qubits, got {n}"
        )));
    }
    let m = matrix_exp_sym(h, -beta);
    let trace = m.trace();
    let rho = (m / trace).map(|x| C64::new(x, 0.0));
    DenseState::density(rho)
}

/// Unnormalized e^{t H} for real symmetric H via spectral decomposition,
/// with the spectrum shifted so the largest exponent is 0.
pub fn matrix_exp_sym(h: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = h.clone().symmetric_eigen();
    let peak = eig
        .eigenvalues
        .iter()
        .map(|&e| t * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let exp = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (t * e - peak).exp()));
    &eig.eigenvectors * exp * eig.eigenvectors.transpose()
}

/// Normalized (C - H)^m |trial>, the state a projector run of length m per
/// imaginary-time segment actually samples.
pub fn projected_state(
    h: &DMatrix<f64>,
    shift: f64,
    m: usize,
    trial: &DVector<f64>,
) -> Result<DenseState> {
    let dim = h.nrows();
    let mut v = trial.clone();
    let op = DMatrix::<f64>::identity(dim, dim) * shift - h;
    for _ in 0..m {
        v = &op * v;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Numerical(
                "projection annihilated the trial state".into(),
            ));
        }
        v /= norm;
    }
    DenseState::pure_normalized(v.map(|x| C64::new(x, 0.0)))
}

/// M_n by direct enumeration of all 4^N Pauli strings:
/// M_n = ln( sum_sigma Tr[rho sigma]^{2n} / 2^N ) / (1 - n).
pub fn exact_m_n(state: &DenseState, n: u32) -> Result<f64> {
    if state.n_qubits > MAX_PAULI_QUBITS {
        return Err(Error::SizeCap(format!(
            "Pauli enumeration capped at {MAX_PAULI_QUBITS} qubits, got {}",
            state.n_qubits
        )));
    }
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    let nq = state.n_qubits;
    let mut sum = 0.0f64;
    for code in 0..(1usize << (2 * nq)) {
        let tr = state.pauli_expectation(PauliString::from_code(code, nq));
        sum += tr.powi(2 * n as i32);
    }
    Ok((sum / (1u64 << nq) as f64).ln() / (1.0 - n as f64))
}

/// S_n = ln Tr(rho^n) / (1 - n); exactly zero for pure states.
pub fn exact_s_n(state: &DenseState, n: u32) -> Result<f64> {
    if state.n_qubits > MAX_SPECTRAL_QUBITS {
        return Err(Error::SizeCap(format!(
            "spectral Renyi entropy capped at {MAX_SPECTRAL_QUBITS} qubits"
        )));
    }
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    match &state.kind {
        StateKind::Pure(_) => Ok(0.0),
        StateKind::Density(m) => {
            let eigs = hermitian_eigenvalues(m);
            let sum: f64 = eigs.iter().map(|&l| l.max(0.0).powi(n as i32)).sum();
            Ok(sum.ln() / (1.0 - n as f64))
        }
    }
}

/// Participation Renyi entropy of a pure state in the computational basis.
pub fn exact_pre(state: &DenseState, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    match &state.kind {
        StateKind::Pure(v) => {
            let sum: f64 = v.iter().map(|a| a.norm_sqr().powi(n as i32)).sum();
            Ok(sum.ln() / (1.0 - n as f64))
        }
        StateKind::Density(_) => Err(Error::Mode(
            "participation entropy is defined for pure states".into(),
        )),
    }
}

/// Entanglement Renyi negativity
/// G_n(A) = ln( Tr[(rho^{T_A})^n] / Tr(rho^n) ) / (1 - n).
pub fn exact_ern(state: &DenseState, region_a: &[usize], n: u32) -> Result<f64> {
    if state.n_qubits > MAX_SPECTRAL_QUBITS {
        return Err(Error::SizeCap(format!(
            "negativity capped at {MAX_SPECTRAL_QUBITS} qubits"
        )));
    }
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    let mut a_mask = 0usize;
    for &s in region_a {
        if s >= state.n_qubits {
            return Err(Error::config(
                "region_a",
                format!("site {s} outside system of {} qubits", state.n_qubits),
            ));
        }
        a_mask |= 1 << s;
    }
    let rho = state.to_density_matrix();
    let rho_ta = partial_transpose(&rho, a_mask);
    let pt_eigs = hermitian_eigenvalues(&rho_ta);
    let num: f64 = pt_eigs.iter().map(|&l| l.powi(n as i32)).sum();
    let den_eigs = hermitian_eigenvalues(&rho);
    let den: f64 = den_eigs.iter().map(|&l| l.max(0.0).powi(n as i32)).sum();
    Ok((num / den).ln() / (1.0 - n as f64))
}

/// Transpose the indices inside `a_mask`:
/// rho^{T_A}[(zA,zB),(wA,wB)] = rho[(wA,zB),(zA,wB)].
pub fn partial_transpose(rho: &DMatrix<C64>, a_mask: usize) -> DMatrix<C64> {
    let dim = rho.nrows();
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for z in 0..dim {
        for w in 0..dim {
            let zp = (z & !a_mask) | (w & a_mask);
            let wp = (w & !a_mask) | (z & a_mask);
            out[(z, w)] = rho[(zp, wp)];
        }
    }
    out
}

/// Trace out every qubit not contained in `keep` (given as site indices).
pub fn partial_trace(state: &DenseState, keep: &[usize]) -> Result<DenseState> {
    let rho = state.to_density_matrix();
    let n = state.n_qubits;
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.iter().any(|&s| s >= n) {
        return Err(Error::config("keep", "site index out of range"));
    }
    let traced: Vec<usize> = (0..n).filter(|s| !keep_sorted.contains(s)).collect();
    let dim_keep = 1usize << keep_sorted.len();
    let dim_tr = 1usize << traced.len();
    let expand = |kept_bits: usize, tr_bits: usize| -> usize {
        let mut z = 0usize;
        for (i, &s) in keep_sorted.iter().enumerate() {
            z |= ((kept_bits >> i) & 1) << s;
        }
        for (i, &s) in traced.iter().enumerate() {
            z |= ((tr_bits >> i) & 1) << s;
        }
        z
    };
    let mut out = DMatrix::<C64>::zeros(dim_keep, dim_keep);
    for a in 0..dim_keep {
        for b in 0..dim_keep {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dim_tr {
                acc += rho[(expand(a, t), expand(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    DenseState::density(out)
}

/// Eigenvalues of a Hermitian complex matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .collect()
}

/// Computational basis state |bits> on `n` qubits (bit s = value of site s).
pub fn basis_state(bits: usize, n: usize) -> DVector<C64> {
    let mut v = DVector::<C64>::zeros(1 << n);
    v[bits] = C64::new(1.0, 0.0);
    v
}

/// Kronecker product of two density matrices; the left factor occupies the
/// low site indices, matching row-major site order.
pub fn kron_density(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (da, db) = (a.nrows(), b.nrows());
    let shift = da.trailing_zeros();
    let mut out = DMatrix::<C64>::zeros(da * db, da * db);
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    out[((k << shift) | i, (l << shift) | j)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Conjugate a state by a single-qubit gate at `site`.
pub fn apply_single_qubit(state: &DenseState, gate: &[[C64; 2]; 2], site: usize) -> DenseState {
    let dim = state.dim();
    let mut u = DMatrix::<C64>::zeros(dim, dim);
    for z in 0..dim {
        let bit = (z >> site) & 1;
        for new_bit in 0..2 {
            let w = (z & !(1 << site)) | (new_bit << site);
            u[(w, z)] = gate[new_bit][bit];
        }
    }
    conjugate(state, &u)
}

/// Conjugate a state by CNOT(control, target).
pub fn apply_cnot(state: &DenseState, control: usize, target: usize) -> DenseState {
    let dim = state.dim();
    let mut u = DMatrix::<C64>::zeros(dim, dim);
    for z in 0..dim {
        let w = if (z >> control) & 1 == 1 {
            z ^ (1 << target)
        } else {
            z
        };
        u[(w, z)] = C64::new(1.0, 0.0);
    }
    conjugate(state, &u)
}

fn conjugate(state: &DenseState, u: &DMatrix<C64>) -> DenseState {
    match &state.kind {
        StateKind::Pure(v) => DenseState {
            n_qubits: state.n_qubits,
            kind: StateKind::Pure(u * v),
        },
        StateKind::Density(m) => DenseState {
            n_qubits: state.n_qubits,
            kind: StateKind::Density(u * m * u.adjoint()),
        },
    }
}

pub const HADAMARD: [[C64; 2]; 2] = [
    [
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ],
    [
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ],
];

pub const PHASE_S: [[C64; 2]; 2] = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(0.0, 1.0)],
];

/// Participation entropy of the computational-basis diagonal: thermal
/// participation sum_z p_z^n for density matrices (p_z the normalized
/// diagonal), identical to [`exact_pre`] on pure states.
pub fn exact_pre_diagonal(state: &DenseState, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::config("n", "Renyi order must be >= 2"));
    }
    match &state.kind {
        StateKind::Pure(_) => exact_pre(state, n),
        StateKind::Density(m) => {
            let sum: f64 = (0..m.nrows()).map(|z| m[(z, z)].re.powi(n as i32)).sum();
            Ok(sum.ln() / (1.0 - n as f64))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Boundary};

    fn ring(n: usize) -> LatticeGeometry {
        build_lattice(&[n], &[Boundary::Periodic]).unwrap()
    }

    fn chain(n: usize) -> LatticeGeometry {
        build_lattice(&[n], &[Boundary::Open]).unwrap()
    }

    #[test]
    fn single_site_field_hamiltonian() {
        let g = chain(1);
        let p = ModelParams::new(1.0, 1.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        // H = -X: eigenvalues -1, +1
        let eig = h.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_site_classical_spectrum() {
        // Open chain, h = 0: H = -Z1 Z2, spectrum {-1, -1, 1, 1}.
        let g = chain(2);
        let p = ModelParams::new(1.0, 0.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let mut vals: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, want) in vals.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_ground_energy_matches_jordan_wigner() {
        // Independent closed form for the ring:
        // E_g = -sum_m sqrt(J^2 + h^2 + 2 J h cos((2m+1) pi / N)).
        let g = ring(4);
        let p = ModelParams::new(1.0, 1.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let info = ground_state(&h).unwrap();
        let jw: f64 = -(0..4)
            .map(|m| {
                let k = (2.0 * m as f64 + 1.0) * std::f64::consts::PI / 4.0;
                (1.0 + 1.0 + 2.0 * k.cos()).sqrt()
            })
            .sum::<f64>();
        assert!(
            (info.energy - jw).abs() < 1e-10,
            "{} vs {}",
            info.energy,
            jw
        );
    }

    #[test]
    fn ground_state_limits() {
        let g = ring(4);
        let p = ModelParams::new(1.0, 0.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let info = ground_state(&h).unwrap();
        assert!((info.energy + 4.0).abs() < 1e-10);
        assert!(info.degenerate);

        let p = ModelParams::new(1.0, 50.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let info = ground_state(&h).unwrap();
        assert!((info.energy / (-4.0 * 50.0) - 1.0).abs() < 0.02);
        assert!(!info.degenerate);
    }

    #[test]
    fn gap_matches_power_iteration() {
        let g = ring(6);
        let p = ModelParams::new(1.0, 1.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let info = ground_state(&h).unwrap();

        // Independent check: power iteration on (cI - H), then deflation.
        let dim = h.nrows();
        let c = 2.0 * sse_shift(&g, &p);
        let shifted = DMatrix::<f64>::identity(dim, dim) * c - &h;
        let mut v = DVector::<f64>::from_element(dim, 1.0) / (dim as f64).sqrt();
        for i in 0..dim {
            v[i] += 1e-3 * ((i * 2654435761) % 97) as f64;
        }
        v /= v.norm();
        for _ in 0..8000 {
            v = &shifted * v;
            v /= v.norm();
        }
        let e0 = c - (&shifted * &v).dot(&v);
        let mut w = DVector::<f64>::zeros(dim);
        for i in 0..dim {
            w[i] = 1e-3 * ((i * 40503) % 89) as f64 + if i % 3 == 0 { 1.0 } else { -0.5 };
        }
        for _ in 0..12000 {
            w -= &v * v.dot(&w);
            w = &shifted * w;
            w /= w.norm();
        }
        let e1 = c - (&shifted * &w).dot(&w);
        assert!((info.energy - e0).abs() < 1e-8);
        assert!(
            (info.gap - (e1 - e0)).abs() < 1e-8,
            "{} vs {}",
            info.gap,
            e1 - e0
        );
    }

    #[test]
    fn gibbs_limits_and_energy_derivative() {
        let g = ring(4);
        let p = ModelParams::new(1.0, 0.7, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();

        let hot = gibbs(&h, 1e-12).unwrap();
        let rho = hot.to_density_matrix();
        for i in 0..rho.nrows() {
            assert!((rho[(i, i)].re - 1.0 / rho.nrows() as f64).abs() < 1e-9);
        }

        let cold = gibbs(&h, 200.0).unwrap();
        let info = ground_state(&h).unwrap();
        let e_cold: f64 = (cold.to_density_matrix() * h.map(|x| C64::new(x, 0.0)))
            .trace()
            .re;
        assert!((e_cold - info.energy).abs() < 1e-6);

        // Tr(rho H) == -d ln Z / d beta by centered finite difference.
        let beta = 0.9;
        let ln_z = |b: f64| {
            let eig = h.clone().symmetric_eigen();
            let e0 = eig.eigenvalues.iter().cloned().reduce(f64::min).unwrap();
            let sum: f64 = eig.eigenvalues.iter().map(|&e| (-b * (e - e0)).exp()).sum();
            sum.ln() - b * e0
        };
        let d = 1e-5;
        let fd = -(ln_z(beta + d) - ln_z(beta - d)) / (2.0 * d);
        let rho = gibbs(&h, beta).unwrap().to_density_matrix();
        let en = (rho * h.map(|x| C64::new(x, 0.0))).trace().re;
        assert!((en - fd).abs() < 1e-6, "{en} vs {fd}");
    }

    #[test]
    fn m_n_of_stabilizer_states_is_zero() {
        for n in [2u32, 3] {
            let st = DenseState::pure(basis_state(0, 3)).unwrap();
            assert!(exact_m_n(&st, n).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn m2_of_anchored_mixture_is_ln2_and_tilde_zero() {
        for n_qubits in [2usize, 3] {
            let dim = 1 << n_qubits;
            let mut rho = DMatrix::<C64>::zeros(dim, dim);
            rho[(0, 0)] = C64::new(0.5, 0.0);
            rho[(dim - 1, dim - 1)] = C64::new(0.5, 0.0);
            let st = DenseState::density(rho).unwrap();
            let m2 = exact_m_n(&st, 2).unwrap();
            let s2 = exact_s_n(&st, 2).unwrap();
            assert!((m2 - 2.0f64.ln()).abs() < 1e-10, "m2 = {m2}");
            assert!((s2 - 2.0f64.ln()).abs() < 1e-10, "s2 = {s2}");
            assert!((m2 - s2).abs() < 1e-10);
        }
    }

    #[test]
    fn single_qubit_phase_state_closed_form() {
        let theta = std::f64::consts::FRAC_PI_4;
        let v = DVector::from_vec(vec![
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, theta),
        ]);
        let st = DenseState::pure(v).unwrap();
        let m2 = exact_m_n(&st, 2).unwrap();
        // Tr[rho I] = 1, Tr[rho Z] = 0, Tr[rho X] = cos(t), Tr[rho Y] = sin(t)
        let closed = -((1.0 + theta.cos().powi(4) + theta.sin().powi(4)) / 2.0).ln();
        assert!((m2 - closed).abs() < 1e-12);
    }

    #[test]
    fn m_n_additivity() {
        let g2 = chain(2);
        let g3 = chain(3);
        let p = ModelParams::new(1.0, 0.8, 2).unwrap();
        let rho2 = gibbs(&build_dense_hamiltonian(&g2, &p).unwrap(), 1.1).unwrap();
        let rho3 = gibbs(&build_dense_hamiltonian(&g3, &p).unwrap(), 0.6).unwrap();
        let prod = DenseState::density(kron_density(
            &rho2.to_density_matrix(),
            &rho3.to_density_matrix(),
        ))
        .unwrap();
        let lhs = exact_m_n(&prod, 2).unwrap();
        let rhs = exact_m_n(&rho2, 2).unwrap() + exact_m_n(&rho3, 2).unwrap();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn s_n_checks() {
        let st = DenseState::pure(basis_state(2, 2)).unwrap();
        assert_eq!(exact_s_n(&st, 3).unwrap(), 0.0);
        let g = ring(3);
        let p = ModelParams::new(1.0, 1.3, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let rho = gibbs(&h, 1e-13).unwrap();
        let s2 = exact_s_n(&rho, 2).unwrap();
        assert!((s2 - 3.0 * 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn pre_uniform_superposition() {
        let n = 3;
        let dim = 1 << n;
        let v = DVector::from_element(dim, C64::new(1.0 / (dim as f64).sqrt(), 0.0));
        let st = DenseState::pure(v).unwrap();
        for order in [2u32, 3, 4] {
            let h = exact_pre(&st, order).unwrap();
            assert!((h - n as f64 * 2.0f64.ln()).abs() < 1e-12);
        }
        let rho =
            DenseState::density(DMatrix::identity(2, 2).map(|x: f64| C64::new(x / 2.0, 0.0)))
                .unwrap();
        assert!(exact_pre(&rho, 2).is_err());
    }

    #[test]
    fn ern_of_product_state_vanishes() {
        let g2 = chain(2);
        let p = ModelParams::new(1.0, 0.9, 2).unwrap();
        let h2 = build_dense_hamiltonian(&g2, &p).unwrap();
        let a = gibbs(&h2, 0.8).unwrap().to_density_matrix();
        let b = gibbs(&h2, 1.4).unwrap().to_density_matrix();
        let prod = DenseState::density(kron_density(&a, &b)).unwrap();
        // Partial transpose of a product factor preserves the spectrum.
        let gn = exact_ern(&prod, &[0, 1], 2).unwrap();
        assert!(gn.abs() < 1e-10, "G_n = {gn}");
        let gn = exact_ern(&prod, &[2, 3], 3).unwrap();
        assert!(gn.abs() < 1e-10);
    }

    #[test]
    fn clifford_invariance_of_tilde_m2() {
        let g = chain(3);
        let p = ModelParams::new(1.0, 1.0, 2).unwrap();
        let h = build_dense_hamiltonian(&g, &p).unwrap();
        let rho = gibbs(&h, 1.2).unwrap();
        let tilde = |s: &DenseState| exact_m_n(s, 2).unwrap() - exact_s_n(s, 2).unwrap();
        let base = tilde(&rho);
        let conj = apply_single_qubit(&rho, &HADAMARD, 1);
        assert!((tilde(&conj) - base).abs() < 1e-9);
        let conj = apply_single_qubit(&rho, &PHASE_S, 0);
        assert!((tilde(&conj) - base).abs() < 1e-9);
        let conj = apply_cnot(&rho, 0, 2);
        assert!((tilde(&conj) - base).abs() < 1e-9);
    }

    #[test]
    fn partial_trace_of_bell_pair() {
        let mut v = DVector::<C64>::zeros(4);
        v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[3] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let bell = DenseState::pure(v).unwrap();
        let red = partial_trace(&bell, &[0]).unwrap();
        let rho = red.to_density_matrix();
        assert!((rho[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((rho[(1, 1)].re - 0.5).abs() < 1e-12);
        assert!(rho[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn size_caps_are_enforced() {
        let g = build_lattice(&[15], &[Boundary::Open]).unwrap();
        let p = ModelParams::new(1.0, 1.0, 2).unwrap();
        assert!(matches!(
            build_dense_hamiltonian(&g, &p),
            Err(Error::SizeCap(_))
        ));
    }
}
