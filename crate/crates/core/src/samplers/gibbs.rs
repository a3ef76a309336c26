//! Sequential single-site Gibbs sampling.
//!
//! Each unit in index order computes its membrane potential
//! `u_i = bias_i + sum_k W_ki z_k` over its neighbor list and switches on with
//! probability `1 / (1 + exp(-u_i))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendTag, SampleBatch};
use crate::error::{Error, Result};
use crate::rng;
use crate::topology::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    /// Full sweeps between recorded states.
    pub sweeps_per_sample: usize,
    /// Sweeps discarded at the start of each chain.
    pub burn_in: usize,
    /// Independent chains, each seeded from its own stream and merged in order.
    pub chains: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            sweeps_per_sample: 1,
            burn_in: 100,
            chains: 1,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps_per_sample == 0 || self.chains == 0 {
            return Err(Error::Config(
                "gibbs sweeps_per_sample and chains must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Compressed neighbor lists with weights.
pub(crate) struct Couplings {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Couplings {
    pub(crate) fn new(params: &NetworkParams) -> Self {
        let t = params.topology();
        let adj = t.neighbors();
        let mut offsets = Vec::with_capacity(t.n_units() + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in &adj {
            for &(k, e) in list {
                neighbors.push(k);
                weights.push(params.weights[e]);
            }
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            weights,
            biases: (0..t.n_units()).map(|u| params.bias(u)).collect(),
        }
    }

    pub(crate) fn n_units(&self) -> usize {
        self.biases.len()
    }

    #[inline]
    fn potential(&self, unit: usize, z: &[f64]) -> f64 {
        let range = self.offsets[unit]..self.offsets[unit + 1];
        let mut u = self.biases[unit];
        for (&k, &w) in self.neighbors[range.clone()].iter().zip(&self.weights[range]) {
            u += w * z[k];
        }
        u
    }

    /// Outgoing `(target, weight)` pairs of a unit.
    pub(crate) fn outgoing(&self, unit: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[unit]..self.offsets[unit + 1];
        self.neighbors[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }
}

fn run_chain(
    couplings: &Couplings,
    samples: usize,
    cfg: &GibbsConfig,
    seed: u64,
    batch: &mut SampleBatch,
) {
    let n = couplings.n_units();
    let mut rng = rng::stream(seed, "gibbs-chain");
    let mut z: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    let sweep = |z: &mut Vec<f64>, rng: &mut rng::StreamRng| {
        for i in 0..n {
            let u = couplings.potential(i, z);
            let p = 1.0 / (1.0 + (-u).exp());
            z[i] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
    };
    for _ in 0..cfg.burn_in {
        sweep(&mut z, &mut rng);
    }
    let words = n.div_ceil(64).max(1);
    let mut packed = vec![0u64; words];
    for _ in 0..samples {
        for _ in 0..cfg.sweeps_per_sample {
            sweep(&mut z, &mut rng);
        }
        packed.iter_mut().for_each(|w| *w = 0);
        for (u, &x) in z.iter().enumerate() {
            if x != 0.0 {
                packed[u / 64] |= 1 << (u % 64);
            }
        }
        batch.push_words(&packed);
    }
}

/// Draws `s` joint states by Gibbs sampling. Deterministic given `seed`.
pub fn gibbs_sample(params: &NetworkParams, s: usize, cfg: &GibbsConfig, seed: u64) -> Result<SampleBatch> {
    if s == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    cfg.validate()?;
    let t = params.topology();
    let couplings = Couplings::new(params);
    let mut batch = SampleBatch::new(t.n_visible(), t.n_units(), BackendTag::Gibbs, seed).with_capacity(s);
    let chains = cfg.chains.min(s);
    for c in 0..chains {
        // split s as evenly as possible, earlier chains take the remainder
        let share = s / chains + usize::from(c < s % chains);
        let chain_seed = rng::derive_seed(seed, &format!("chain-{c}"));
        run_chain(&couplings, share, cfg, chain_seed, &mut batch);
    }
    Ok(batch)
}
