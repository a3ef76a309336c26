//! Exact marginal distribution of a network.
//!
//! The first hidden layer never has internal edges, so given every other unit
//! its units are independent and can be summed out in closed form:
//! `sum_h exp(-E) = exp(-E_clamped) * prod_j (1 + exp(phi_j))`. The remaining
//! ("clamped") units are enumerated. For restricted and visible-lateral nets
//! only the visible layer is enumerated, so the hidden layer may be any size.

use crate::error::{Error, Result};
use crate::topology::NetworkParams;

/// Maximum number of enumerated units.
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Clone)]
pub struct ExactDistribution {
    n_units: usize,
    n_visible: usize,
    /// Enumerated units, visible first.
    clamped: Vec<usize>,
    free: std::ops::Range<usize>,
    /// `p(S)` per clamped configuration `S` (bit k of the index = clamped[k]).
    config_probs: Vec<f64>,
    /// Activation `P(h_f = 1 | S)` per configuration and free unit.
    free_activation: Vec<f64>,
    visible: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Exact `p(v)` together with the clamped-configuration table needed for
/// exact model moments.
pub fn exact_distribution(params: &NetworkParams) -> Result<ExactDistribution> {
    let t = params.topology();
    let free = t.free_layer();
    let clamped: Vec<usize> = (0..t.n_units()).filter(|u| !free.contains(u)).collect();
    if clamped.len() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            units: clamped.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let n_free = free.len();
    let n_configs = 1usize << clamped.len();
    let mut position = vec![usize::MAX; t.n_units()];
    for (k, &u) in clamped.iter().enumerate() {
        position[u] = k;
    }

    let mut log_weights = vec![0.0; n_configs];
    let mut free_activation = vec![0.0; n_configs * n_free];
    let mut fields = vec![0.0; n_free];
    for (config, log_w) in log_weights.iter_mut().enumerate() {
        let on = |u: usize| (config >> position[u]) & 1 == 1;
        let mut neg_energy: f64 = clamped.iter().filter(|&&u| on(u)).map(|&u| params.bias(u)).sum();
        for (f, field) in fields.iter_mut().enumerate() {
            *field = params.bias(free.start + f);
        }
        for (&(i, j), &w) in t.edges().iter().zip(&params.weights) {
            match (free.contains(&i), free.contains(&j)) {
                (false, false) => {
                    if on(i) && on(j) {
                        neg_energy += w;
                    }
                }
                (true, false) => {
                    if on(j) {
                        fields[i - free.start] += w;
                    }
                }
                (false, true) => {
                    if on(i) {
                        fields[j - free.start] += w;
                    }
                }
                (true, true) => unreachable!("free layer has no internal edges"),
            }
        }
        *log_w = neg_energy + fields.iter().map(|&x| softplus(x)).sum::<f64>();
        for (f, &field) in fields.iter().enumerate() {
            free_activation[config * n_free + f] = sigmoid(field);
        }
    }

    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut config_probs: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let z: f64 = config_probs.iter().sum();
    config_probs.iter_mut().for_each(|p| *p /= z);

    let nv = t.n_visible();
    let mut visible = vec![0.0; 1 << nv];
    for (config, &p) in config_probs.iter().enumerate() {
        visible[visible_of(config, nv)] += p;
    }

    Ok(ExactDistribution {
        n_units: t.n_units(),
        n_visible: nv,
        clamped,
        free,
        config_probs,
        free_activation,
        visible,
        edges: t.edges().to_vec(),
    })
}

/// Visible flat index (first unit most significant) of a clamped configuration;
/// visible units occupy the low clamped bits.
fn visible_of(config: usize, nv: usize) -> usize {
    let low = (config & ((1 << nv) - 1)) as u64;
    (low.reverse_bits() >> (64 - nv)) as usize
}

/// Expected unit activities and edge products under a reweighted model.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// `<s_i s_j>` per edge.
    pub edges: Vec<f64>,
    /// `<s_u>` per unit.
    pub units: Vec<f64>,
}

impl ExactDistribution {
    /// `p(v)` indexed by visible configuration.
    pub fn visible(&self) -> &[f64] {
        &self.visible
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    /// Model moments `<s_i s_j>` and `<s_u>`.
    pub fn moments(&self) -> Moments {
        self.reweighted_moments(&vec![1.0; self.visible.len()])
    }

    /// `sum_{v,h} p(v,h) f(v) s_i s_j` for a per-visible-state factor `f`.
    pub fn reweighted_moments(&self, factor: &[f64]) -> Moments {
        assert_eq!(factor.len(), self.visible.len());
        let n_free = self.free.len();
        let mut edges = vec![0.0; self.edges.len()];
        let mut units = vec![0.0; self.n_units];
        let mut expect = vec![0.0; self.n_units];
        for (config, &p) in self.config_probs.iter().enumerate() {
            let weight = p * factor[visible_of(config, self.n_visible)];
            if weight == 0.0 {
                continue;
            }
            for (k, &u) in self.clamped.iter().enumerate() {
                expect[u] = ((config >> k) & 1) as f64;
            }
            let acts = &self.free_activation[config * n_free..(config + 1) * n_free];
            expect[self.free.clone()].copy_from_slice(acts);
            for (acc, &x) in units.iter_mut().zip(&expect) {
                *acc += weight * x;
            }
            for (acc, &(i, j)) in edges.iter_mut().zip(&self.edges) {
                *acc += weight * expect[i] * expect[j];
            }
        }
        Moments { edges, units }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::topology::{build_topology, energy, init_params, InitScheme, NetworkParams, TopologyKind};
    use rand::Rng;

    fn random_params(kind: TopologyKind, hidden: &[usize], seed: u64, scale: f64) -> NetworkParams {
        let t = build_topology(kind, 4, hidden).unwrap();
        let mut p = init_params(&t, seed, InitScheme::Uniform(scale)).unwrap();
        let mut r = rng::stream(seed, "test-biases");
        for x in p.d.iter_mut().chain(p.b.iter_mut()) {
            *x = r.random_range(-scale..scale);
        }
        p
    }

    /// Joint distribution by enumerating every unit, straight from the energy.
    pub(crate) fn brute_force_joint(p: &NetworkParams) -> Vec<f64> {
        let t = p.topology();
        let n = t.n_units();
        let nv = t.n_visible();
        let mut w: Vec<f64> = (0..1usize << n)
            .map(|mask| {
                let s: Vec<bool> = (0..n).map(|u| (mask >> (n - 1 - u)) & 1 == 1).collect();
                (-energy(p, &s[..nv], &s[nv..]).unwrap()).exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        w
    }

    #[test]
    fn zero_params_are_uniform() {
        let t = build_topology(TopologyKind::Restricted, 4, &[6]).unwrap();
        let p = init_params(&t, 0, InitScheme::Zero).unwrap();
        let ex = exact_distribution(&p).unwrap();
        assert!(ex.visible().iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn matches_enumeration_for_all_kinds() {
        for (kind, hidden) in [
            (TopologyKind::Restricted, vec![6]),
            (TopologyKind::VisibleLateral, vec![5]),
            (TopologyKind::Deep, vec![4, 3]),
        ] {
            let p = random_params(kind, &hidden, 21, 1.0);
            let joint = brute_force_joint(&p);
            let n_hidden = p.topology().n_hidden();
            let mut vis = vec![0.0; 16];
            for (idx, x) in joint.iter().enumerate() {
                vis[idx >> n_hidden] += x;
            }
            let ex = exact_distribution(&p).unwrap();
            for (a, b) in ex.visible().iter().zip(&vis) {
                assert!((a - b).abs() < 1e-12, "{kind:?}");
            }
            // moments against the same enumeration
            let n = p.topology().n_units();
            let m = ex.moments();
            for (e, &(i, j)) in p.topology().edges().iter().enumerate() {
                let direct: f64 = joint
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| (idx >> (n - 1 - i)) & 1 == 1 && (idx >> (n - 1 - j)) & 1 == 1)
                    .map(|(_, x)| x)
                    .sum();
                assert!((m.edges[e] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_coupling_limit() {
        // one visible pair coupled through a single strong hidden unit is not
        // available, so use the lateral edge between two visible units directly
        let t = build_topology(TopologyKind::VisibleLateral, 2, &[1]).unwrap();
        for w in [5.0, 20.0, 40.0] {
            // weights: (0,2), (1,2), (0,1)
            let mut p = init_params(&t, 0, InitScheme::Zero).unwrap();
            p.weights[2] = w;
            p.d = vec![-w / 2.0, -w / 2.0];
            let ex = exact_distribution(&p).unwrap();
            // closed form: weights 1, e^{-w/2}, e^{-w/2}, 1 for 00, 01, 10, 11
            let a = (-w / 2.0f64).exp();
            let z = 2.0 + 2.0 * a;
            assert!((ex.visible()[0] - 1.0 / z).abs() < 1e-12);
            assert!((ex.visible()[3] - 1.0 / z).abs() < 1e-12);
            assert!((ex.visible()[1] - a / z).abs() < 1e-12);
        }
        let p40 = {
            let mut p = init_params(&t, 0, InitScheme::Zero).unwrap();
            p.weights[2] = 40.0;
            p.d = vec![-20.0, -20.0];
            p
        };
        let v = exact_distribution(&p40).unwrap();
        assert!((v.visible()[0] - 0.5).abs() < 1e-8 && (v.visible()[3] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn large_hidden_layers_are_fine_when_restricted() {
        let t = build_topology(TopologyKind::Restricted, 4, &[200]).unwrap();
        let p = init_params(&t, 1, InitScheme::Uniform(0.3)).unwrap();
        let ex = exact_distribution(&p).unwrap();
        assert!((ex.visible().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let t = build_topology(TopologyKind::Deep, 4, &[4, 30]).unwrap();
        let p = init_params(&t, 1, InitScheme::Zero).unwrap();
        assert!(matches!(exact_distribution(&p), Err(Error::TooLarge { .. })));
    }
}
