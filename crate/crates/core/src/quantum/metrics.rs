use super::{hermitian_eigen, psd_sqrt, DensityMatrix, Observable, OutcomeDistribution};
use super::povm::{expectation, TetrahedralPovm};
use crate::error::{Error, Result};

/// Quantum fidelity `Tr sqrt(sqrt(a) b sqrt(a))`.
///
/// `rho_a` must be positive semidefinite; `rho_b` may be a non-physical
/// reconstruction. Negative eigenvalues of the inner matrix are clamped to
/// zero, and the result is capped at 1.
pub fn fidelity(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    if rho_a.dim() != rho_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_a.dim(),
            found: rho_b.dim(),
        });
    }
    let root = psd_sqrt(rho_a.matrix())?;
    let inner = &root * rho_b.matrix() * &root;
    let (values, _) = hermitian_eigen(&inner);
    let f: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(f.min(1.0))
}

/// Kullback-Leibler divergence `sum p* ln(p*/p)` in nats.
///
/// Terms with `p* = 0` contribute nothing; a model probability of zero where
/// the target is positive yields `f64::INFINITY`.
pub fn dkl(p_target: &[f64], p_model: &[f64]) -> Result<f64> {
    if p_target.len() != p_model.len() {
        return Err(Error::DimensionMismatch {
            expected: p_target.len(),
            found: p_model.len(),
        });
    }
    let mut total = 0.0;
    for (&t, &m) in p_target.iter().zip(p_model) {
        if t <= 0.0 {
            continue;
        }
        if m <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total += t * (t / m).ln();
    }
    Ok(total.max(0.0))
}

/// The four spin observables of the witness: `(A1, A2, B1, B2)`.
fn witness_settings(theta: f64) -> [Observable; 4] {
    [
        Observable::spin_xz(0.0),
        Observable::spin_xz(std::f64::consts::FRAC_PI_2),
        Observable::spin_xz(theta),
        Observable::spin_xz(-theta),
    ]
}

/// CHSH operator `A1B1 + A2B1 + A1B2 - A2B2` with `A1 = Z`, `A2 = X` and
/// `B1`, `B2` rotated by `+theta`, `-theta` in the x-z plane.
pub fn chsh_operator(theta: f64) -> Observable {
    let [a1, a2, b1, b2] = witness_settings(theta);
    a1.kron(&b1)
        .add(&a2.kron(&b1))
        .and_then(|o| o.add(&a1.kron(&b2)))
        .and_then(|o| o.add(&a2.kron(&b2).scaled(-1.0)))
        .expect("two-qubit operators")
}

/// Bell-correlation witness `B(theta)` evaluated on a two-qubit POVM distribution.
///
/// `|B| <= 2` for classical correlations; the Bell state reaches `2 sqrt(2)`
/// at `theta = pi/4`.
pub fn bell_witness(p: &OutcomeDistribution, theta: f64) -> Result<f64> {
    if p.n_qubits() != 2 {
        return Err(Error::Domain(format!(
            "Bell witness needs a two-qubit distribution, got {} qubits",
            p.n_qubits()
        )));
    }
    let povm = TetrahedralPovm::new();
    let [a1, a2, b1, b2] = witness_settings(theta);
    let e = |a: &Observable, b: &Observable| expectation(p, &a.kron(b), &povm);
    Ok(e(&a1, &b1)? + e(&a2, &b1)? + e(&a1, &b2)? - e(&a2, &b2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bell_state, born_distribution, ghz_state, werner_state};
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    #[test]
    fn fidelity_examples() {
        let b = bell_state();
        assert!((fidelity(&b, &b).unwrap() - 1.0).abs() < 1e-10);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!((fidelity(&b, &mixed).unwrap() - 0.5).abs() < 1e-10);
        for r in [0.0, 0.2, 0.5, 0.9] {
            let w = werner_state(r).unwrap();
            let analytic = ((1.0 + 3.0 * r) / 4.0).sqrt();
            assert!((fidelity(&b, &w).unwrap() - analytic).abs() < 1e-10);
        }
        assert!(matches!(
            fidelity(&b, &ghz_state(3).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dkl_examples() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(dkl(&p, &p).unwrap(), 0.0);
        assert_eq!(dkl(&[0.25; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap(), f64::INFINITY);
        let expected = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((dkl(&[0.7, 0.3], &[0.5, 0.5]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.08228).abs() < 1e-5);
        assert!(dkl(&[0.0, 1.0], &[0.5, 0.5]).unwrap() > 0.0);
        assert!(matches!(dkl(&p, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn witness_examples() {
        let povm = TetrahedralPovm::new();
        let pb = born_distribution(&bell_state(), &povm).unwrap();
        assert!((bell_witness(&pb, FRAC_PI_4).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((bell_witness(&pb, 0.0).unwrap() - 2.0).abs() < 1e-12);
        for r in [0.0, 0.3, 1.0 / SQRT_2, 1.0] {
            let pw = born_distribution(&werner_state(r).unwrap(), &povm).unwrap();
            assert!((bell_witness(&pw, FRAC_PI_4).unwrap() - 2.0 * SQRT_2 * r).abs() < 1e-12);
        }
        let p3 = born_distribution(&ghz_state(3).unwrap(), &povm).unwrap();
        assert!(matches!(bell_witness(&p3, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn witness_agrees_with_operator_trace() {
        let povm = TetrahedralPovm::new();
        let rho = werner_state(0.8).unwrap();
        let p = born_distribution(&rho, &povm).unwrap();
        for k in 0..20 {
            let theta = -1.0 + 0.17 * k as f64;
            let direct = rho.trace_with(&chsh_operator(theta)).unwrap();
            assert!((bell_witness(&p, theta).unwrap() - direct).abs() < 1e-12);
        }
    }
}
