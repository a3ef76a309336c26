use crate::error::{Error, Result};
use crate::samplers::{empirical_marginal, ExactDistribution, Marginal, SampleBatch};
use crate::topology::{NetworkParams, Topology};

/// `dD_KL/dtheta` in logical units.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Per edge, in topology edge order.
    pub dw: Vec<f64>,
    /// Per visible unit.
    pub dd: Vec<f64>,
    /// Per hidden unit.
    pub db: Vec<f64>,
}

impl GradientEstimate {
    /// Gradient flattened like [`NetworkParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.dw.clone();
        flat.extend_from_slice(&self.dd);
        flat.extend_from_slice(&self.db);
        flat
    }

    pub fn norm(&self) -> f64 {
        self.dw.iter().chain(&self.dd).chain(&self.db).map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Name of the first non-finite entry, such as `w[3]`, `d[0]` or `b[7]`.
    pub fn first_non_finite(&self) -> Option<String> {
        let bad = |v: &[f64]| v.iter().position(|g| !g.is_finite());
        bad(&self.dw)
            .map(|k| format!("w[{k}]"))
            .or_else(|| bad(&self.dd).map(|k| format!("d[{k}]")))
            .or_else(|| bad(&self.db).map(|k| format!("b[{k}]")))
    }

    fn from_units(dw: Vec<f64>, units: &[f64], n_visible: usize) -> Self {
        Self {
            dw,
            dd: units[..n_visible].to_vec(),
            db: units[n_visible..].to_vec(),
        }
    }
}

/// `1 - p*(v) / p(v)` where `p(v) > 0`, zero elsewhere.
fn reweighting(p_star: &[f64], p_model: &[f64]) -> Vec<f64> {
    p_star
        .iter()
        .zip(p_model)
        .map(|(&t, &m)| if m > 0.0 { 1.0 - t / m } else { 0.0 })
        .collect()
}

fn check_target(p_star: &[f64], n_visible: usize) -> Result<()> {
    if p_star.len() != 1 << n_visible {
        return Err(Error::DimensionMismatch {
            expected: 1 << n_visible,
            found: p_star.len(),
        });
    }
    Ok(())
}

/// Largest per-visible-state table used by [`aggregated_sums`].
const AGGREGATE_LIMIT: usize = 1 << 22;

/// Reweighted batch means of unit activities and edge products, sample by sample.
fn direct_sums(batch: &SampleBatch, t: &Topology, factor: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = t.n_units();
    let mut dw = vec![0.0; t.n_edges()];
    let mut units = vec![0.0; n];
    let mut on = vec![false; n];
    for k in 0..batch.len() {
        let f = factor[batch.visible_index(k)];
        if f == 0.0 {
            continue;
        }
        for (u, slot) in on.iter_mut().enumerate() {
            *slot = batch.unit(k, u);
            if *slot {
                units[u] += f;
            }
        }
        for (g, &(i, j)) in dw.iter_mut().zip(t.edges()) {
            if on[i] && on[j] {
                *g += f;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    dw.iter_mut().chain(units.iter_mut()).for_each(|g| *g *= scale);
    (dw, units)
}

/// Same sums as [`direct_sums`], but the factor depends only on `v`, so the
/// batch is first reduced to per-visible-state counts of hidden activity.
fn aggregated_sums(batch: &SampleBatch, t: &Topology, factor: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nv = t.n_visible();
    let nh = t.n_hidden();
    let states = 1usize << nv;
    let hidden_edges: Vec<(usize, usize, usize)> = t
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(i, _))| i >= nv)
        .map(|(e, &(i, j))| (e, i, j))
        .collect();
    let mut count = vec![0u64; states];
    let mut hidden = vec![0u64; states * nh];
    let mut pairs = vec![0u64; states * hidden_edges.len()];
    for k in 0..batch.len() {
        let v = batch.visible_index(k);
        count[v] += 1;
        let row = &mut hidden[v * nh..(v + 1) * nh];
        for (w, &word) in batch.words(k).iter().enumerate() {
            let mut bits = if w == 0 { word >> nv << nv } else { word };
            while bits != 0 {
                let u = 64 * w + bits.trailing_zeros() as usize;
                row[u - nv] += 1;
                bits &= bits - 1;
            }
        }
        for (slot, &(_, i, j)) in pairs[v * hidden_edges.len()..].iter_mut().zip(&hidden_edges) {
            if batch.unit(k, i) && batch.unit(k, j) {
                *slot += 1;
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    let mut dw = vec![0.0; t.n_edges()];
    let mut units = vec![0.0; t.n_units()];
    for v in 0..states {
        let f = factor[v] * scale;
        if count[v] == 0 || f == 0.0 {
            continue;
        }
        let bit = |i: usize| (v >> (nv - 1 - i)) & 1 == 1;
        let row = &hidden[v * nh..(v + 1) * nh];
        for i in (0..nv).filter(|&i| bit(i)) {
            units[i] += f * count[v] as f64;
        }
        for (j, &c) in row.iter().enumerate() {
            units[nv + j] += f * c as f64;
        }
        for (g, &(i, j)) in dw.iter_mut().zip(t.edges()) {
            if j < nv {
                if bit(i) && bit(j) {
                    *g += f * count[v] as f64;
                }
            } else if i < nv && bit(i) {
                *g += f * row[j - nv] as f64;
            }
        }
        for (p, &(e, _, _)) in hidden_edges.iter().enumerate() {
            dw[e] += f * pairs[v * hidden_edges.len() + p] as f64;
        }
    }
    (dw, units)
}

/// Batch estimate `< [1 - p*(v) / p_hat(v)] s_i s_j >` with `p_hat` the
/// empirical visible marginal of the same batch.
pub fn estimate_gradient(batch: &SampleBatch, p_star: &[f64], params: &NetworkParams) -> Result<GradientEstimate> {
    let t = params.topology();
    if batch.n_units() != t.n_units() || batch.n_visible() != t.n_visible() {
        return Err(Error::DimensionMismatch {
            expected: t.n_units(),
            found: batch.n_units(),
        });
    }
    check_target(p_star, t.n_visible())?;
    let p_hat = empirical_marginal(batch, Marginal::Visible)?;
    let factor = reweighting(p_star, &p_hat);

    let (dw, units) = if (1usize << t.n_visible()) * t.n_hidden().max(1) <= AGGREGATE_LIMIT {
        aggregated_sums(batch, t, &factor)
    } else {
        direct_sums(batch, t, &factor)
    };
    Ok(GradientEstimate::from_units(dw, &units, t.n_visible()))
}

/// Exact gradient `sum_v [p(v) - p*(v)] <s_i s_j | v>` from the closed-form model.
pub fn exact_gradient(exact: &ExactDistribution, p_star: &[f64]) -> Result<GradientEstimate> {
    check_target(p_star, exact.n_visible())?;
    let factor = reweighting(p_star, exact.visible());
    let m = exact.reweighted_moments(&factor);
    Ok(GradientEstimate::from_units(m.edges, &m.units, exact.n_visible()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{dkl, TetrahedralPovm};
    use crate::rng;
    use crate::samplers::{exact_distribution, BackendTag};
    use crate::topology::{build_topology, init_params, visible_from_index, InitScheme, TopologyKind};
    use crate::trainer::{target_distribution, TargetState};
    use rand::Rng;

    fn random_net(kind: TopologyKind, hidden: &[usize], seed: u64) -> NetworkParams {
        let t = build_topology(kind, 4, hidden).unwrap();
        let mut p = init_params(&t, seed, InitScheme::Uniform(1.0)).unwrap();
        let mut r = rng::stream(seed, "grad-test");
        for x in p.d.iter_mut().chain(p.b.iter_mut()) {
            *x = r.random_range(-1.0..1.0);
        }
        p
    }

    fn bell() -> Vec<f64> {
        target_distribution(&TargetState::Bell, &TetrahedralPovm::new()).unwrap()
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let p_star = bell();
        let objective = |p: &NetworkParams| dkl(&p_star, exact_distribution(p).unwrap().visible()).unwrap();
        let p = random_net(TopologyKind::Restricted, &[4], 3);
        let g = exact_gradient(&exact_distribution(&p).unwrap(), &p_star).unwrap().to_flat();
        let flat = p.to_flat();
        let h = 1e-5;
        for k in 0..flat.len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let mut f = flat.clone();
            f[k] += h;
            plus.set_flat(&f).unwrap();
            f[k] -= 2.0 * h;
            minus.set_flat(&f).unwrap();
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn exact_batch_gives_exact_gradient() {
        // a batch whose joint frequencies equal p(v, h) exactly reproduces the
        // closed form; build it for a tiny net by replicating joint states
        let t = build_topology(TopologyKind::Restricted, 2, &[1]).unwrap();
        let mut p = init_params(&t, 0, InitScheme::Zero).unwrap();
        p.weights = vec![0.0, 0.0];
        p.d = vec![0.0, 0.0];
        p.b = vec![0.0];
        let mut batch = SampleBatch::new(2, 3, BackendTag::Exact, 0);
        for mask in 0..8usize {
            let s: Vec<bool> = (0..3).map(|u| (mask >> (2 - u)) & 1 == 1).collect();
            batch.push_state(&s);
        }
        let p_star = vec![0.4, 0.1, 0.2, 0.3];
        let est = estimate_gradient(&batch, &p_star, &p).unwrap();
        let ex = exact_gradient(&exact_distribution(&p).unwrap(), &p_star).unwrap();
        for (a, b) in est.to_flat().iter().zip(ex.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
        // closed form by hand: p(v) = 1/4, <v_0 h | v> = v_0 / 2
        let hand = (0.25 - 0.2) * 0.5 + (0.25 - 0.3) * 0.5;
        assert!((est.dw[0] - hand).abs() < 1e-15);
    }

    #[test]
    fn aggregated_and_direct_sums_agree() {
        for (kind, hidden) in [
            (TopologyKind::Restricted, vec![5]),
            (TopologyKind::VisibleLateral, vec![3]),
            (TopologyKind::Deep, vec![3, 4]),
        ] {
            let p = random_net(kind, &hidden, 8);
            let batch = crate::samplers::gibbs_sample(&p, 3000, &Default::default(), 2).unwrap();
            let factor: Vec<f64> = (0..16).map(|v| 0.1 * v as f64 - 0.7).collect();
            let (w1, u1) = direct_sums(&batch, p.topology(), &factor);
            let (w2, u2) = aggregated_sums(&batch, p.topology(), &factor);
            for (a, b) in w1.iter().chain(&u1).zip(w2.iter().chain(&u2)) {
                assert!((a - b).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn matching_marginal_gives_zero_gradient() {
        let p = random_net(TopologyKind::VisibleLateral, &[3], 5);
        let ex = exact_distribution(&p).unwrap();
        let g = exact_gradient(&ex, ex.visible()).unwrap();
        assert!(g.norm() < 1e-15);

        let mut batch = SampleBatch::new(4, 7, BackendTag::Gibbs, 0);
        let mut r = rng::stream(1, "zero-grad");
        for _ in 0..500 {
            let s: Vec<bool> = (0..7).map(|_| r.random()).collect();
            batch.push_state(&s);
        }
        let p_hat = empirical_marginal(&batch, Marginal::Visible).unwrap();
        let g = estimate_gradient(&batch, &p_hat, &p).unwrap();
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unsampled_states_contribute_nothing() {
        let p = random_net(TopologyKind::Restricted, &[2], 1);
        let mut batch = SampleBatch::new(4, 6, BackendTag::Gibbs, 0);
        let mut s = visible_from_index(5, 4);
        s.extend([true, false]);
        batch.push_state(&s);
        let g = estimate_gradient(&batch, &bell(), &p).unwrap();
        assert!(g.first_non_finite().is_none());
        // p_hat(5) = 1, so every active product carries 1 - p*(5)
        let p5 = bell()[5];
        assert!((g.dd[1] - (1.0 - p5)).abs() < 1e-15);
        assert_eq!(g.dd[0], 0.0);
    }
}
