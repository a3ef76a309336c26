//! Sampling backends and the sample container they share.
//!
//! * [`exact`]: closed-form marginal and moments, no sampling noise.
//! * [`gibbs`]: sequential single-site Gibbs MCMC.
//! * [`lif`]: leaky integrate-and-fire emulation read out through refractory states.

pub mod exact;
pub mod gibbs;
pub mod lif;

pub use exact::{exact_distribution, ExactDistribution};
pub use gibbs::{gibbs_sample, GibbsConfig};
pub use lif::{
    lif_calibrate, lif_sample, nyquist_scan, nyquist_scan_against, Calibration, LifConfig, LifRun, NyquistPoint, SpikeLog,
};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Exact,
    Gibbs,
    Lif,
}

/// Binary joint states drawn from a network, bit-packed per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    n_visible: usize,
    n_units: usize,
    words: usize,
    states: Vec<u64>,
    backend: BackendTag,
    seed: u64,
}

impl SampleBatch {
    pub fn new(n_visible: usize, n_units: usize, backend: BackendTag, seed: u64) -> Self {
        assert!(n_visible <= 64 && n_visible <= n_units);
        Self {
            n_visible,
            n_units,
            words: n_units.div_ceil(64).max(1),
            states: Vec::new(),
            backend,
            seed,
        }
    }

    pub(crate) fn with_capacity(mut self, samples: usize) -> Self {
        self.states.reserve(samples * self.words);
        self
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn backend(&self) -> BackendTag {
        self.backend
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of recorded states, `s_total`.
    pub fn len(&self) -> usize {
        self.states.len() / self.words
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Appends a state given as unit activities.
    pub fn push_state(&mut self, state: &[bool]) {
        assert_eq!(state.len(), self.n_units);
        let start = self.states.len();
        self.states.resize(start + self.words, 0);
        for (u, &on) in state.iter().enumerate() {
            if on {
                self.states[start + u / 64] |= 1 << (u % 64);
            }
        }
    }

    pub(crate) fn push_words(&mut self, words: &[u64]) {
        debug_assert_eq!(words.len(), self.words);
        self.states.extend_from_slice(words);
    }

    pub fn words(&self, k: usize) -> &[u64] {
        &self.states[k * self.words..(k + 1) * self.words]
    }

    pub fn unit(&self, k: usize, u: usize) -> bool {
        (self.states[k * self.words + u / 64] >> (u % 64)) & 1 == 1
    }

    pub fn state(&self, k: usize) -> Vec<bool> {
        (0..self.n_units).map(|u| self.unit(k, u)).collect()
    }

    /// Visible configuration of state `k` as a flat index, first unit most significant.
    pub fn visible_index(&self, k: usize) -> usize {
        let low = self.states[k * self.words];
        let nv = self.n_visible as u32;
        let mask = if nv == 64 { u64::MAX } else { (1u64 << nv) - 1 };
        ((low & mask).reverse_bits() >> (64 - nv)) as usize
    }

    /// Joint configuration of state `k` as a flat index, first unit most significant.
    pub fn joint_index(&self, k: usize) -> usize {
        (0..self.n_units).fold(0, |acc, u| (acc << 1) | self.unit(k, u) as usize)
    }

    /// Concatenates batches over the same network in the given order.
    pub fn merge(batches: Vec<SampleBatch>) -> Result<SampleBatch> {
        let mut iter = batches.into_iter();
        let mut first = iter.next().ok_or(Error::EmptyBatch)?;
        for b in iter {
            if b.n_units != first.n_units || b.n_visible != first.n_visible {
                return Err(Error::DimensionMismatch {
                    expected: first.n_units,
                    found: b.n_units,
                });
            }
            first.states.extend_from_slice(&b.states);
        }
        Ok(first)
    }

    /// Occurrence counts keyed by the joint state written as a bit string.
    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for k in 0..self.len() {
            let key: String = (0..self.n_units)
                .map(|u| if self.unit(k, u) { '1' } else { '0' })
                .collect();
            *counts.entry(key).or_insert(0) += 1;
        }
        counts
    }

    /// JSON document `{"backend", "seed", "n_visible", "n_units", "s_total", "counts"}`.
    pub fn to_counts_json(&self) -> serde_json::Value {
        serde_json::json!({
            "backend": self.backend,
            "seed": self.seed,
            "n_visible": self.n_visible,
            "n_units": self.n_units,
            "s_total": self.len(),
            "counts": self.counts(),
        })
    }

    /// CSV with a `u0,u1,...` header and one binary row per state.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.n_units).map(|u| format!("u{u}")).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::with_capacity(2 * self.n_units);
        for k in 0..self.len() {
            line.clear();
            for u in 0..self.n_units {
                if u > 0 {
                    line.push(',');
                }
                line.push(if self.unit(k, u) { '1' } else { '0' });
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    Visible,
    Joint,
}

/// Upper bound on units for a dense joint histogram.
pub const JOINT_HISTOGRAM_LIMIT: usize = 24;

/// Normalized histogram of a batch, indexed like [`crate::topology::visible_index`].
pub fn empirical_marginal(batch: &SampleBatch, over: Marginal) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (len, index): (usize, Box<dyn Fn(usize) -> usize>) = match over {
        Marginal::Visible => (1 << batch.n_visible(), Box::new(|k| batch.visible_index(k))),
        Marginal::Joint => {
            if batch.n_units() > JOINT_HISTOGRAM_LIMIT {
                return Err(Error::TooLarge {
                    units: batch.n_units(),
                    limit: JOINT_HISTOGRAM_LIMIT,
                });
            }
            (1 << batch.n_units(), Box::new(|k| batch.joint_index(k)))
        }
    };
    let mut hist = vec![0.0; len];
    for k in 0..batch.len() {
        hist[index(k)] += 1.0;
    }
    let total = batch.len() as f64;
    hist.iter_mut().for_each(|h| *h /= total);
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from(states: &[&[bool]], nv: usize) -> SampleBatch {
        let mut b = SampleBatch::new(nv, states[0].len(), BackendTag::Gibbs, 0);
        for s in states {
            b.push_state(s);
        }
        b
    }

    #[test]
    fn single_state_gives_indicator() {
        let b = batch_from(&[&[true, false, true]], 2);
        let m = empirical_marginal(&b, Marginal::Visible).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 1.0, 0.0]);
        let j = empirical_marginal(&b, Marginal::Joint).unwrap();
        assert_eq!(j.iter().position(|&x| x == 1.0), Some(0b101));
    }

    #[test]
    fn counts_three_to_one() {
        let b = batch_from(&[&[true, false], &[true, false], &[false, false], &[true, false]], 2);
        let m = empirical_marginal(&b, Marginal::Visible).unwrap();
        assert_eq!(m, vec![0.25, 0.0, 0.75, 0.0]);
    }

    #[test]
    fn visible_marginal_sums_joint() {
        let states: Vec<Vec<bool>> = (0..40usize)
            .map(|k| (0..5).map(|u| (k * 7 + u * 3) % 5 < 2).collect())
            .collect();
        let refs: Vec<&[bool]> = states.iter().map(|s| s.as_slice()).collect();
        let b = batch_from(&refs, 2);
        let joint = empirical_marginal(&b, Marginal::Joint).unwrap();
        let vis = empirical_marginal(&b, Marginal::Visible).unwrap();
        let mut summed = vec![0.0; 4];
        for (idx, p) in joint.iter().enumerate() {
            summed[idx >> 3] += p;
        }
        for (a, b) in summed.iter().zip(&vis) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let b = SampleBatch::new(2, 3, BackendTag::Lif, 0);
        assert!(matches!(empirical_marginal(&b, Marginal::Visible), Err(Error::EmptyBatch)));
    }

    #[test]
    fn wide_states_pack_across_words() {
        let mut s = vec![false; 70];
        s[0] = true;
        s[65] = true;
        let b = batch_from(&[&s], 4);
        assert!(b.unit(0, 65));
        assert!(!b.unit(0, 64));
        assert_eq!(b.state(0), s);
        assert_eq!(b.visible_index(0), 0b1000);
    }

    #[test]
    fn exports() {
        let b = batch_from(&[&[true, false, true], &[true, false, true], &[false, false, false]], 2);
        let json = b.to_counts_json();
        assert_eq!(json["s_total"], 3);
        assert_eq!(json["counts"]["101"], 2);
        assert_eq!(json["backend"], "gibbs");
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "u0,u1,u2\n1,0,1\n1,0,1\n0,0,0\n");
    }
}
