//! Stabilizer mixed-state fixtures.
//!
//! Small states built from stabilizer codes whose second SRE is known
//! exactly: tracing a GHZ qubit, equal and unequal mixtures of code states.
//! An equal code mixture has M2 = S2 (so the subtracted SRE vanishes);
//! skewing the mixture weights makes it strictly positive.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

use super::{basis_state, exact_m_n, exact_s_n, partial_trace, DenseState, C64};

#[derive(Debug, Clone)]
pub struct FixtureCase {
    pub name: String,
    pub m2: f64,
    pub s2: f64,
    pub m2_tilde: f64,
    /// Expected sign of the subtracted SRE: zero or strictly positive.
    pub expect_zero: bool,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FixtureReport {
    pub cases: Vec<FixtureCase>,
}

impl FixtureReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }
}

fn ghz(n: usize) -> DenseState {
    let mut v = DVector::<C64>::zeros(1 << n);
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[0] = amp;
    v[(1 << n) - 1] = amp;
    DenseState::pure(v).unwrap()
}

/// Mixture of the two code states |00>, |11> of the stabilizer group <ZZ>
/// (N_A = 2 physical qubits, N_g = 1 shared generator).
fn code_mixture(w0: f64, w1: f64) -> DenseState {
    let mut rho = DMatrix::<C64>::zeros(4, 4);
    rho[(0, 0)] = C64::new(w0, 0.0);
    rho[(3, 3)] = C64::new(w1, 0.0);
    DenseState::density(rho).unwrap()
}

const TOL: f64 = 1e-10;

/// Build the fixture states and verify their subtracted SRE against the
/// stabilizer-code predictions. Both the raw first term M2 and the
/// subtracted value are recorded.
pub fn stabilizer_fixture_checks() -> Result<FixtureReport> {
    let mut cases = Vec::new();

    let mut push = |name: &str, state: &DenseState, expect_zero: bool| -> Result<()> {
        let m2 = exact_m_n(state, 2)?;
        let s2 = exact_s_n(state, 2)?;
        let tilde = m2 - s2;
        let pass = if expect_zero {
            tilde.abs() < TOL
        } else {
            tilde > 1e-6
        };
        cases.push(FixtureCase {
            name: name.to_string(),
            m2,
            s2,
            m2_tilde: tilde,
            expect_zero,
            pass,
        });
        Ok(())
    };

    // Pure stabilizer states.
    push(
        "pure |000>",
        &DenseState::pure(basis_state(0, 3))?,
        true,
    )?;
    push("pure GHZ(3)", &ghz(3), true)?;

    // GHZ with one qubit traced out: equal mixture of |00>, |11>.
    let traced = partial_trace(&ghz(3), &[0, 1])?;
    push("GHZ(3) traced to 2 qubits", &traced, true)?;

    // Equal mixture of the two <ZZ> code states.
    push("equal code mixture", &code_mixture(0.5, 0.5), true)?;

    // Skewed mixture of the same codes: strictly positive subtracted SRE.
    push("0.9/0.1 code mixture", &code_mixture(0.9, 0.1), false)?;

    Ok(FixtureReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_pass() {
        let report = stabilizer_fixture_checks().unwrap();
        for case in &report.cases {
            assert!(
                case.pass,
                "{}: M2={} S2={} tilde={}",
                case.name, case.m2, case.s2, case.m2_tilde
            );
        }
    }

    #[test]
    fn traced_ghz_entropy_matches_generator_count() {
        // S2(rho_A) = (N_A - N_g) ln 2 with N_A = 2 kept qubits and a single
        // surviving generator ZZ.
        let traced = partial_trace(&ghz(3), &[1, 2]).unwrap();
        let s2 = exact_s_n(&traced, 2).unwrap();
        assert!((s2 - 2.0f64.ln()).abs() < 1e-10);
        let m2 = exact_m_n(&traced, 2).unwrap();
        assert!((m2 - 2.0f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn skewed_mixture_values() {
        let rho = code_mixture(0.9, 0.1);
        let m2 = exact_m_n(&rho, 2).unwrap();
        let s2 = exact_s_n(&rho, 2).unwrap();
        // Pauli spectrum: II, ZZ give 1; ZI, IZ give (0.9 - 0.1) = 0.8.
        let expect_m2 = -((2.0 + 2.0 * 0.8f64.powi(4)) / 4.0).ln();
        let expect_s2 = -(0.9f64.powi(2) + 0.1f64.powi(2)).ln();
        assert!((m2 - expect_m2).abs() < 1e-12);
        assert!((s2 - expect_s2).abs() < 1e-12);
        assert!(m2 - s2 > 0.05);
    }
}
