//! Software Gibbs throughput against a fixed-rate neuromorphic sampler.
//!
//! A Gibbs sweep over `2N` visible and `M` hidden units costs
//! `2 (2N) M + 2 (2N + M)` operations per state: one multiply and one add per
//! coupling term in both directions plus a bias add and an activation per
//! unit. The hardware emits one state per `hardware_sample_time` regardless
//! of network size, up to a fixed number of neurons.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::{gibbs_sample, GibbsConfig};
use crate::topology::{build_topology, init_params, InitScheme, TopologyKind};

/// Neurons available on the hardware sampler.
pub const HARDWARE_CAPACITY: usize = 256;

/// Smallest timed sample count.
pub const MIN_TIMED_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub clock_hz: f64,
    #[serde(default = "CostModel::default_ops_per_flop")]
    pub ops_per_flop: f64,
    /// Seconds per hardware sample.
    #[serde(default = "CostModel::default_hardware_sample_time")]
    pub hardware_sample_time: f64,
    #[serde(default = "CostModel::default_capacity")]
    pub capacity: usize,
}

impl CostModel {
    fn default_ops_per_flop() -> f64 {
        1.0
    }

    fn default_hardware_sample_time() -> f64 {
        5e-6
    }

    fn default_capacity() -> usize {
        HARDWARE_CAPACITY
    }

    pub fn new(clock_hz: f64) -> Result<Self> {
        let model = Self {
            clock_hz,
            ops_per_flop: Self::default_ops_per_flop(),
            hardware_sample_time: Self::default_hardware_sample_time(),
            capacity: Self::default_capacity(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clock_hz > 0.0) {
            return Err(Error::Config(format!("clock_hz must be positive, got {}", self.clock_hz)));
        }
        if !(self.ops_per_flop > 0.0 && self.hardware_sample_time > 0.0) {
            return Err(Error::Config("ops_per_flop and hardware_sample_time must be positive".into()));
        }
        Ok(())
    }
}

fn check_sizes(n_spins: usize, m: usize, s: usize) -> Result<()> {
    if n_spins == 0 || m == 0 || s == 0 {
        return Err(Error::Domain(format!(
            "sizes must be positive, got n_spins={n_spins}, m={m}, s={s}"
        )));
    }
    Ok(())
}

/// `2 (2N) M + 2 (2N + M)`.
pub fn ops_per_state(n_spins: usize, m: usize) -> u64 {
    let nv = 2 * n_spins as u64;
    let m = m as u64;
    2 * nv * m + 2 * (nv + m)
}

pub fn model_seconds(n_spins: usize, m: usize, s: usize, model: &CostModel) -> Result<f64> {
    check_sizes(n_spins, m, s)?;
    Ok(s as f64 * ops_per_state(n_spins, m) as f64 * model.ops_per_flop / model.clock_hz)
}

/// Constant-rate hardware time; errors when `2N + M` exceeds the capacity.
pub fn hardware_seconds(n_spins: usize, m: usize, s: usize, model: &CostModel) -> Result<f64> {
    check_sizes(n_spins, m, s)?;
    let units = 2 * n_spins + m;
    if units > model.capacity {
        return Err(Error::CapacityExceeded {
            units,
            limit: model.capacity,
        });
    }
    Ok(s as f64 * model.hardware_sample_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub n_spins: usize,
    pub m_hidden: usize,
    pub s_samples: usize,
    pub measured_seconds: f64,
    pub modeled_seconds: f64,
    pub samples_per_second: f64,
}

/// Times `gibbs_sample` for `s` states of a random restricted net with `2N`
/// visible and `M` hidden units. Burn-in is excluded from the timing.
pub fn measure_throughput(n_spins: usize, m: usize, s: usize, seed: u64, model: &CostModel) -> Result<BenchResult> {
    check_sizes(n_spins, m, s)?;
    if s < MIN_TIMED_SAMPLES {
        return Err(Error::Config(format!(
            "timed runs need at least {MIN_TIMED_SAMPLES} samples, got {s}"
        )));
    }
    let topology = build_topology(TopologyKind::Restricted, 2 * n_spins, &[m])?;
    let params = init_params(&topology, seed, InitScheme::Uniform(0.5))?;
    let cfg = GibbsConfig {
        burn_in: 0,
        ..GibbsConfig::default()
    };
    // warm caches and the allocator with a short untimed run
    gibbs_sample(&params, 1000, &cfg, seed)?;
    let start = Instant::now();
    let batch = gibbs_sample(&params, s, &cfg, seed)?;
    let measured_seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(&batch);
    Ok(BenchResult {
        n_spins,
        m_hidden: m,
        s_samples: s,
        measured_seconds,
        modeled_seconds: model_seconds(n_spins, m, s, model)?,
        samples_per_second: s as f64 / measured_seconds,
    })
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Domain("a line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("a line fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Where the software time comes from in [`crossover`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossoverSource<'a> {
    Model,
    /// Per-sample time linear in `M`, fitted to measurements at the same `N`.
    Measured(&'a [BenchResult]),
}

/// Smallest `M` whose software time for `s` samples exceeds the hardware
/// time, or `None` when the capacity is reached first.
pub fn crossover(n_spins: usize, model: &CostModel, s: usize, source: CrossoverSource) -> Result<Option<usize>> {
    check_sizes(n_spins, 1, s)?;
    let software: Box<dyn Fn(usize) -> Result<f64>> = match source {
        CrossoverSource::Model => Box::new(|m| model_seconds(n_spins, m, s, model)),
        CrossoverSource::Measured(results) => {
            let (x, y): (Vec<f64>, Vec<f64>) = results
                .iter()
                .filter(|r| r.n_spins == n_spins)
                .map(|r| (r.m_hidden as f64, r.measured_seconds / r.s_samples as f64))
                .unzip();
            let fit = linear_fit(&x, &y)?;
            Box::new(move |m| Ok(s as f64 * (fit.slope * m as f64 + fit.intercept)))
        }
    };
    let max_m = model.capacity.saturating_sub(2 * n_spins);
    for m in 1..=max_m {
        if software(m)? > hardware_seconds(n_spins, m, s, model)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// CSV `n_spins,m_hidden,s,measured_s,modeled_s,hardware_s`. The hardware
/// column is empty for sizes beyond capacity.
pub fn write_csv<W: Write>(results: &[BenchResult], model: &CostModel, mut out: W) -> Result<()> {
    writeln!(out, "n_spins,m_hidden,s,measured_s,modeled_s,hardware_s")?;
    for r in results {
        let hw = hardware_seconds(r.n_spins, r.m_hidden, r.s_samples, model)
            .map(|t| format!("{t:e}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:e},{:e},{}",
            r.n_spins, r.m_hidden, r.s_samples, r.measured_seconds, r.modeled_seconds, hw
        )?;
    }
    Ok(())
}
