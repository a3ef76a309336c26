use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quantum::{bell_state, born_distribution, ghz_state, werner_state, DensityMatrix, TetrahedralPovm};

/// Quantum state a network is trained to encode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetState {
    Bell,
    Werner { r: f64 },
    Ghz { n: usize },
}

impl TargetState {
    pub fn density(&self) -> Result<DensityMatrix> {
        match *self {
            TargetState::Bell => Ok(bell_state()),
            TargetState::Werner { r } => werner_state(r),
            TargetState::Ghz { n } => ghz_state(n),
        }
    }

    pub fn n_qubits(&self) -> usize {
        match *self {
            TargetState::Bell | TargetState::Werner { .. } => 2,
            TargetState::Ghz { n } => n,
        }
    }

    pub fn n_visible(&self) -> usize {
        2 * self.n_qubits()
    }
}

/// `p*(v)` over visible configurations, indexed with the first unit most significant.
pub fn target_distribution(state: &TargetState, povm: &TetrahedralPovm) -> Result<Vec<f64>> {
    Ok(born_distribution(&state.density()?, povm)?.into_probs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::CMatrix;
    use crate::topology::{decode_visible, visible_from_index};

    #[test]
    fn bell_matches_printed_table_through_the_unit_mapping() {
        let povm = TetrahedralPovm::new();
        let p = target_distribution(&TargetState::Bell, &povm).unwrap();
        for (idx, &x) in p.iter().enumerate() {
            let a = decode_visible(&visible_from_index(idx, 4)).unwrap();
            let high = matches!((a[0], a[1]), (0, 0) | (1, 1) | (2, 3) | (3, 2));
            let expected = if high { 1.0 / 8.0 } else { 1.0 / 24.0 };
            assert!((x - expected).abs() < 1e-12, "{a:?}");
        }
    }

    #[test]
    fn werner_zero_is_uniform() {
        let p = target_distribution(&TargetState::Werner { r: 0.0 }, &TetrahedralPovm::new()).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-14));
    }

    #[test]
    fn ghz3_matches_direct_trace() {
        let povm = TetrahedralPovm::new();
        let p = target_distribution(&TargetState::Ghz { n: 3 }, &povm).unwrap();
        assert_eq!(p.len(), 64);
        // |GHZ><GHZ| has four nonzero entries, so Tr[rho M] = (M00 + M07 + M70 + M77) / 2
        let m = povm.elements();
        for idx in 0..64 {
            let a = decode_visible(&visible_from_index(idx, 6)).unwrap();
            let mut op = CMatrix::identity(1, 1);
            for &ai in &a {
                op = op.kronecker(&m[ai as usize]);
            }
            let direct = 0.5 * (op[(0, 0)] + op[(0, 7)] + op[(7, 0)] + op[(7, 7)]).re;
            assert!((p[idx] - direct).abs() < 1e-14);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
