use nalgebra::Matrix4;

use super::{c, hermitize, kron, CMatrix, DensityMatrix, Observable, OutcomeDistribution};
use crate::error::{Error, Result};

/// Single-qubit informationally complete POVM whose Bloch vectors form a
/// regular tetrahedron. Multi-qubit POVMs are tensor products of this one.
#[derive(Debug, Clone)]
pub struct TetrahedralPovm {
    bloch_vectors: [[f64; 3]; 4],
    elements: [CMatrix; 4],
    overlap: [[f64; 4]; 4],
    overlap_inverse: [[f64; 4]; 4],
    /// `D_a = sum_a' T^-1_{a a'} M_a'`, the reconstruction operators per qubit.
    duals: [CMatrix; 4],
}

/// Builds the tetrahedral POVM `M_a = (1 + s_a . sigma) / 4`.
pub fn make_tetrahedral_povm() -> TetrahedralPovm {
    TetrahedralPovm::new()
}

impl Default for TetrahedralPovm {
    fn default() -> Self {
        Self::new()
    }
}

impl TetrahedralPovm {
    pub fn new() -> Self {
        let r2 = 2f64.sqrt();
        let r6 = 6f64.sqrt();
        let bloch_vectors = [
            [0.0, 0.0, 1.0],
            [2.0 * r2 / 3.0, 0.0, -1.0 / 3.0],
            [-r2 / 3.0, r6 / 3.0, -1.0 / 3.0],
            [-r2 / 3.0, -r6 / 3.0, -1.0 / 3.0],
        ];
        let elements = bloch_vectors.map(|[sx, sy, sz]| {
            CMatrix::from_row_slice(
                2,
                2,
                &[
                    c((1.0 + sz) / 4.0, 0.0),
                    c(sx / 4.0, -sy / 4.0),
                    c(sx / 4.0, sy / 4.0),
                    c((1.0 - sz) / 4.0, 0.0),
                ],
            )
        });

        let mut overlap = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                overlap[a][b] = (&elements[a] * &elements[b]).trace().re;
            }
        }
        let t = Matrix4::from_fn(|a, b| overlap[a][b]);
        let t_inv = t.try_inverse().expect("tetrahedral overlap matrix is invertible");
        let overlap_inverse: [[f64; 4]; 4] =
            std::array::from_fn(|a| std::array::from_fn(|b| t_inv[(a, b)]));

        let duals = std::array::from_fn(|a| {
            let mut d = CMatrix::zeros(2, 2);
            for (b, m) in elements.iter().enumerate() {
                d += m.scale(overlap_inverse[a][b]);
            }
            d
        });

        Self {
            bloch_vectors,
            elements,
            overlap,
            overlap_inverse,
            duals,
        }
    }

    pub fn bloch_vectors(&self) -> &[[f64; 3]; 4] {
        &self.bloch_vectors
    }

    pub fn elements(&self) -> &[CMatrix; 4] {
        &self.elements
    }

    /// Single-qubit overlap matrix `T_{a a'} = Tr[M_a M_a']`.
    pub fn overlap(&self) -> &[[f64; 4]; 4] {
        &self.overlap
    }

    pub fn overlap_inverse(&self) -> &[[f64; 4]; 4] {
        &self.overlap_inverse
    }

    pub fn duals(&self) -> &[CMatrix; 4] {
        &self.duals
    }

    /// `ops[a_1] ⊗ ... ⊗ ops[a_N]` for the flat outcome index.
    fn tensor(ops: &[CMatrix; 4], n_qubits: usize, outcome: usize) -> CMatrix {
        let mut acc = CMatrix::identity(1, 1);
        for q in 0..n_qubits {
            let digit = (outcome >> (2 * (n_qubits - 1 - q))) & 3;
            acc = kron(&acc, &ops[digit]);
        }
        acc
    }

    /// Multi-qubit POVM element `M_{a_1} ⊗ ... ⊗ M_{a_N}`.
    pub fn element(&self, n_qubits: usize, outcome: usize) -> CMatrix {
        Self::tensor(&self.elements, n_qubits, outcome)
    }

    /// Reconstruction operator `Q_a = sum_a' (⊗ T^-1) (⊗ M_a')`.
    pub fn reconstruction_operator(&self, n_qubits: usize, outcome: usize) -> CMatrix {
        Self::tensor(&self.duals, n_qubits, outcome)
    }
}

/// `Re Tr[A B]` without forming the product.
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Born-rule outcome probabilities `P(a) = Tr[rho (M_{a_1} ⊗ ... ⊗ M_{a_N})]`.
pub fn born_distribution(rho: &DensityMatrix, povm: &TetrahedralPovm) -> Result<OutcomeDistribution> {
    let n = rho.n_qubits();
    let len = 1usize << (2 * n);
    let mut probs = Vec::with_capacity(len);
    for outcome in 0..len {
        probs.push(trace_product(rho.matrix(), &povm.element(n, outcome)));
    }
    OutcomeDistribution::new(n, probs)
}

/// Linear inversion `rho = sum_a P(a) Q_a`.
///
/// The result is Hermitian with unit trace by construction. Distributions
/// estimated from samples can yield slightly non-positive matrices; those are
/// returned with [`DensityMatrix::is_physical`] false rather than rejected.
pub fn reconstruct_density(p: &OutcomeDistribution, povm: &TetrahedralPovm) -> Result<DensityMatrix> {
    let n = p.n_qubits();
    let dim = 1usize << n;
    let mut rho = CMatrix::zeros(dim, dim);
    for (outcome, &prob) in p.probs().iter().enumerate() {
        if prob != 0.0 {
            rho += povm.reconstruction_operator(n, outcome).scale(prob);
        }
    }
    let rho = hermitize(&rho);
    // Rescale away accumulated round-off in the trace.
    let trace = rho.trace().re;
    DensityMatrix::unchecked_positivity(n, rho.scale(1.0 / trace))
}

/// Coefficients `Q^O_a = sum_a' Tr[O ⊗_i M_a'_i] prod_i T^-1_{a_i a'_i}` so that
/// `<O> = sum_a Q^O_a P(a)`.
pub fn observable_coefficients(obs: &Observable, povm: &TetrahedralPovm) -> Vec<f64> {
    let n = obs.n_qubits();
    let len = 1usize << (2 * n);
    let mut coeffs: Vec<f64> = (0..len)
        .map(|outcome| trace_product(obs.matrix(), &povm.element(n, outcome)))
        .collect();
    // Contract T^-1 along one base-4 digit at a time.
    let t_inv = povm.overlap_inverse();
    for q in 0..n {
        let stride = 1usize << (2 * (n - 1 - q));
        let mut next = vec![0.0; len];
        for (index, slot) in next.iter_mut().enumerate() {
            let digit = (index / stride) % 4;
            let base = index - digit * stride;
            *slot = (0..4).map(|d| t_inv[digit][d] * coeffs[base + d * stride]).sum();
        }
        coeffs = next;
    }
    coeffs
}

/// Expectation `<O>` estimated directly from outcome probabilities.
pub fn expectation(p: &OutcomeDistribution, obs: &Observable, povm: &TetrahedralPovm) -> Result<f64> {
    if obs.n_qubits() != p.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: p.n_qubits(),
            found: obs.n_qubits(),
        });
    }
    let coeffs = observable_coefficients(obs, povm);
    Ok(coeffs.iter().zip(p.probs()).map(|(q, p)| q * p).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bell_state, ghz_state, werner_state};

    const PRINTED_T_INV: [[f64; 4]; 4] = [
        [5.0, -1.0, -1.0, -1.0],
        [-1.0, 5.0, -1.0, -1.0],
        [-1.0, -1.0, 5.0, -1.0],
        [-1.0, -1.0, -1.0, 5.0],
    ];

    #[test]
    fn printed_elements() {
        let povm = make_tetrahedral_povm();
        let m = povm.elements();
        let r2 = 2f64.sqrt();
        let r6 = 6f64.sqrt();
        let expect = [
            [c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(1.0 / 6.0, 0.0), c(r2 / 6.0, 0.0), c(r2 / 6.0, 0.0), c(2.0 / 6.0, 0.0)],
            [c(2.0 / 12.0, 0.0), c(-r2 / 12.0, -r6 / 12.0), c(-r2 / 12.0, r6 / 12.0), c(4.0 / 12.0, 0.0)],
            [c(2.0 / 12.0, 0.0), c(-r2 / 12.0, r6 / 12.0), c(-r2 / 12.0, -r6 / 12.0), c(4.0 / 12.0, 0.0)],
        ];
        for a in 0..4 {
            for (k, z) in expect[a].iter().enumerate() {
                assert!((m[a][(k / 2, k % 2)] - z).norm() < 1e-15, "M_{a} entry {k}");
            }
        }
    }

    #[test]
    fn completeness_and_positivity() {
        let povm = make_tetrahedral_povm();
        let sum = povm.elements().iter().fold(CMatrix::zeros(2, 2), |acc, m| acc + m);
        assert!((sum - CMatrix::identity(2, 2)).iter().all(|z| z.norm() <= 1e-12));
        for m in povm.elements() {
            let (values, _) = super::super::hermitian_eigen(m);
            assert!(values.iter().all(|&v| (-1e-12..=0.5 + 1e-12).contains(&v)));
        }
        for s in povm.bloch_vectors() {
            assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn overlap_inverse_matches_printed() {
        let povm = make_tetrahedral_povm();
        let t = povm.overlap();
        let t_inv = povm.overlap_inverse();
        for a in 0..4 {
            for b in 0..4 {
                assert!((t_inv[a][b] - PRINTED_T_INV[a][b]).abs() < 1e-12);
                let prod: f64 = (0..4).map(|k| t[a][k] * t_inv[k][b]).sum();
                let id = if a == b { 1.0 } else { 0.0 };
                assert!((prod - id).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_distribution_matches_printed_table() {
        let povm = make_tetrahedral_povm();
        let p = born_distribution(&bell_state(), &povm).unwrap();
        // Printed with rows indexed by a_2 and columns by a_1.
        let table = [
            [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [1.0 / 3.0, 1.0, 1.0 / 3.0, 1.0 / 3.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0, 1.0 / 3.0],
        ];
        for a2 in 0..4u8 {
            for a1 in 0..4u8 {
                let got = p.get(&[a1, a2]).unwrap();
                assert!((got - table[a2 as usize][a1 as usize] / 8.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixed_state_gives_uniform() {
        let povm = make_tetrahedral_povm();
        let p = born_distribution(&DensityMatrix::maximally_mixed(2).unwrap(), &povm).unwrap();
        assert!(p.probs().iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
        let rho = reconstruct_density(&p, &povm).unwrap();
        assert!(rho.max_abs_diff(&DensityMatrix::maximally_mixed(2).unwrap()) < 1e-12);
    }

    #[test]
    fn werner_distribution_is_linear() {
        let povm = make_tetrahedral_povm();
        let pb = born_distribution(&bell_state(), &povm).unwrap();
        let pw = born_distribution(&werner_state(0.3).unwrap(), &povm).unwrap();
        for (w, b) in pw.probs().iter().zip(pb.probs()) {
            assert!((w - (0.3 * b + 0.7 / 16.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn bell_round_trip() {
        let povm = make_tetrahedral_povm();
        let p = born_distribution(&bell_state(), &povm).unwrap();
        let rho = reconstruct_density(&p, &povm).unwrap();
        assert!(rho.max_abs_diff(&bell_state()) < 1e-12);
        assert!(rho.is_physical());
    }

    #[test]
    fn ghz_round_trip() {
        let povm = make_tetrahedral_povm();
        for n in [3, 4] {
            let rho = ghz_state(n).unwrap();
            let p = born_distribution(&rho, &povm).unwrap();
            assert_eq!(p.probs().len(), 1 << (2 * n));
            assert!(reconstruct_density(&p, &povm).unwrap().max_abs_diff(&rho) < 1e-10);
        }
    }

    #[test]
    fn expectation_examples() {
        let povm = make_tetrahedral_povm();
        let pb = born_distribution(&bell_state(), &povm).unwrap();
        let z = Observable::pauli_z();
        let id = Observable::identity();
        assert!((expectation(&pb, &z.kron(&z), &povm).unwrap() - 1.0).abs() < 1e-12);
        assert!((expectation(&pb, &id.kron(&id), &povm).unwrap() - 1.0).abs() < 1e-12);
        let uniform = OutcomeDistribution::uniform(2).unwrap();
        let x = Observable::pauli_x();
        let y = Observable::pauli_y();
        for o in [z.kron(&x), x.kron(&y), y.kron(&id), z.kron(&z)] {
            assert!(expectation(&uniform, &o, &povm).unwrap().abs() < 1e-12);
        }
        assert!(matches!(
            expectation(&pb, &z, &povm),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
