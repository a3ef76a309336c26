//! Leaky integrate-and-fire sampling network.
//!
//! Each neuron integrates `tau_m du/dt = leak - u + I` with an exponentially
//! decaying current `I` that sums network and Poisson background input. After
//! crossing `threshold` the neuron spikes, is clamped to `reset` for
//! `tau_ref`, and is read out as `z = 1` for as long as its last spike lies
//! within the preceding `tau_ref`. States are observed every `readout_dt`.
//!
//! Logical Boltzmann parameters reach the emulation through a [`Calibration`]:
//! a bias `b` becomes the leak potential `u0 + alpha * b`, and a weight `W`
//! becomes a current jump `W * alpha / kernel_mean`, where `kernel_mean` is the
//! average membrane response to a unit current jump over one refractory period.
//!
//! Times are in microseconds of model time. The integrator is explicit Euler
//! on a fixed grid of `sim_dt`.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gibbs::Couplings;
use super::{empirical_marginal, exact_distribution, BackendTag, Marginal, SampleBatch};
use crate::error::{Error, Result};
use crate::quantum::dkl;
use crate::rng;
use crate::topology::NetworkParams;

/// Largest acceptable RMS deviation of the logistic fit.
pub const CALIBRATION_RESIDUAL_LIMIT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifConfig {
    pub tau_m: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    pub threshold: f64,
    pub reset: f64,
    /// Leak potential used for every neuron when no calibration is attached.
    pub leak_base: f64,
    pub n_noise_exc: usize,
    pub n_noise_inh: usize,
    /// Events per microsecond of each background source.
    pub noise_rate: f64,
    pub noise_weight_exc: f64,
    /// Magnitude of an inhibitory background event.
    pub noise_weight_inh: f64,
    pub readout_dt: f64,
    pub sim_dt: f64,
    /// Draw background sources from a shared pool instead of private ones.
    pub shared_noise: bool,
    /// Pool size per polarity in shared mode.
    pub noise_pool: usize,
    /// Relative standard deviation of per-neuron refractory times.
    pub tau_ref_jitter: f64,
    /// Unrecorded settling time before the first readout.
    pub warmup: f64,
    pub calibration: Option<Calibration>,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau_m: 1.0,
            tau_syn: 10.0,
            tau_ref: 10.0,
            threshold: 1.0,
            reset: 0.0,
            leak_base: 1.0,
            n_noise_exc: 5,
            n_noise_inh: 5,
            noise_rate: 0.2,
            noise_weight_exc: 0.25,
            noise_weight_inh: 0.25,
            readout_dt: 2.0,
            sim_dt: 0.1,
            shared_noise: false,
            noise_pool: 32,
            tau_ref_jitter: 0.0,
            warmup: 100.0,
            calibration: None,
        }
    }
}

/// Logistic fit of the single-neuron activation curve plus the resulting
/// logical-to-analog parameter map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// Leak potential of half activation.
    pub u0: f64,
    /// Logistic width; analog leak change per logical bias unit.
    pub alpha: f64,
    /// Mean membrane response over `tau_ref` to a unit current jump.
    pub kernel_mean: f64,
    /// Analog current jump per logical weight unit.
    pub weight_scale: f64,
    /// RMS deviation of the measured curve from the fitted logistic.
    pub residual: f64,
    /// Measured `(leak, p_on)` pairs.
    pub table: Vec<(f64, f64)>,
}

impl Calibration {
    pub fn leak_for_bias(&self, bias: f64) -> f64 {
        self.u0 + self.alpha * bias
    }

    pub fn fitted(&self, leak: f64) -> f64 {
        1.0 / (1.0 + (-(leak - self.u0) / self.alpha).exp())
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_m", self.tau_m),
            ("tau_syn", self.tau_syn),
            ("tau_ref", self.tau_ref),
            ("readout_dt", self.readout_dt),
            ("sim_dt", self.sim_dt),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.threshold <= self.reset {
            return Err(Error::Config("threshold must exceed reset".into()));
        }
        if self.noise_rate < 0.0 || self.noise_weight_exc < 0.0 || self.noise_weight_inh < 0.0 {
            return Err(Error::Config("noise rate and weights must be non-negative".into()));
        }
        if self.shared_noise && (self.noise_pool < self.n_noise_exc || self.noise_pool < self.n_noise_inh) {
            return Err(Error::Config("noise pool smaller than sources per neuron".into()));
        }
        if !(0.0..0.5).contains(&self.tau_ref_jitter) {
            return Err(Error::Config("tau_ref_jitter must lie in [0, 0.5)".into()));
        }
        if self.warmup < 0.0 {
            return Err(Error::Config("warmup must be non-negative".into()));
        }
        Ok(())
    }

    fn steps(&self, time: f64) -> usize {
        (time / self.sim_dt).round() as usize
    }

    /// Mean over `[0, tau_ref]` of the membrane response to a unit current step
    /// decaying with `tau_syn`.
    pub fn kernel_mean(&self) -> f64 {
        let (tm, ts, tr) = (self.tau_m, self.tau_syn, self.tau_ref);
        if (ts - tm).abs() < 1e-12 {
            // limit tau_m -> tau_syn of the difference of exponentials
            let x = tr / ts;
            return (1.0 - (1.0 + x) * (-x).exp()) / x;
        }
        ts / (ts - tm) * (ts * (1.0 - (-tr / ts).exp()) - tm * (1.0 - (-tr / tm).exp())) / tr
    }

    /// Standard deviation of the stationary background current.
    pub fn noise_current_std(&self) -> f64 {
        let var = self.noise_rate * self.tau_syn / 2.0
            * (self.n_noise_exc as f64 * self.noise_weight_exc.powi(2)
                + self.n_noise_inh as f64 * self.noise_weight_inh.powi(2));
        var.sqrt()
    }
}

/// Spike times and emitting units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpikeLog {
    pub events: Vec<(f64, usize)>,
}

impl SpikeLog {
    /// CSV `time_us,unit_id`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_us,unit_id")?;
        for &(t, u) in &self.events {
            writeln!(out, "{t:.1},{u}")?;
        }
        Ok(())
    }

    pub fn spikes_of(&self, unit: usize) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.1 == unit).map(|e| e.0)
    }
}

#[derive(Debug, Clone)]
pub struct LifRun {
    pub batch: SampleBatch,
    pub spikes: SpikeLog,
}

/// Background input arriving at neurons.
struct Noise {
    /// Per source: next event time, signed weight, target neurons.
    next: Vec<f64>,
    weight: Vec<f64>,
    targets: Vec<Vec<usize>>,
    interval: Vec<Option<Exp<f64>>>,
}

impl Noise {
    fn new(cfg: &LifConfig, n_neurons: usize, rng: &mut rng::StreamRng) -> Self {
        let mut noise = Noise {
            next: Vec::new(),
            weight: Vec::new(),
            targets: Vec::new(),
            interval: Vec::new(),
        };
        let polarities = [
            (cfg.n_noise_exc, cfg.noise_weight_exc),
            (cfg.n_noise_inh, -cfg.noise_weight_inh),
        ];
        if cfg.shared_noise {
            for (per_neuron, w) in polarities {
                let first = noise.next.len();
                for _ in 0..cfg.noise_pool {
                    noise.add_source(cfg.noise_rate, w, Vec::new(), rng);
                }
                for i in 0..n_neurons {
                    for k in sample_indices(rng, cfg.noise_pool, per_neuron) {
                        noise.targets[first + k].push(i);
                    }
                }
            }
        } else {
            // independent sources merge into one Poisson process per polarity
            for i in 0..n_neurons {
                for (per_neuron, w) in polarities {
                    noise.add_source(cfg.noise_rate * per_neuron as f64, w, vec![i], rng);
                }
            }
        }
        noise
    }

    fn add_source(&mut self, rate: f64, weight: f64, targets: Vec<usize>, rng: &mut rng::StreamRng) {
        let interval = if rate > 0.0 && weight != 0.0 {
            Some(Exp::new(rate).expect("positive rate"))
        } else {
            None
        };
        self.next.push(match &interval {
            Some(d) => d.sample(rng),
            None => f64::INFINITY,
        });
        self.weight.push(weight);
        self.targets.push(targets);
        self.interval.push(interval);
    }

    /// Adds every event up to `t_end` to the target currents.
    fn deliver(&mut self, t_end: f64, current: &mut [f64], rng: &mut rng::StreamRng) {
        for s in 0..self.next.len() {
            while self.next[s] < t_end {
                for &i in &self.targets[s] {
                    current[i] += self.weight[s];
                }
                self.next[s] += self.interval[s].as_ref().expect("finite event time").sample(rng);
            }
        }
    }
}

/// Analog network: per-neuron leaks, refractory steps and synaptic couplings.
struct Circuit<'a> {
    cfg: &'a LifConfig,
    leak: Vec<f64>,
    ref_steps: Vec<usize>,
    couplings: Option<Couplings>,
    weight_scale: f64,
}

struct Recording {
    batch: SampleBatch,
    spikes: Option<SpikeLog>,
}

impl Circuit<'_> {
    fn run(&self, n_visible: usize, samples: usize, seed: u64, record_spikes: bool) -> Recording {
        let cfg = self.cfg;
        let n = self.leak.len();
        let mut rng = rng::stream(seed, "lif-noise");
        let mut noise = Noise::new(cfg, n, &mut rng);

        let decay = (-cfg.sim_dt / cfg.tau_syn).exp();
        let gain = cfg.sim_dt / cfg.tau_m;
        let readout_steps = cfg.steps(cfg.readout_dt).max(1);
        let warmup_steps = cfg.steps(cfg.warmup);
        let total_steps = warmup_steps + samples * readout_steps;

        let mut u: Vec<f64> = self.leak.iter().map(|&l| l.min(cfg.threshold) - 0.5 * (cfg.threshold - cfg.reset)).collect();
        let mut current = vec![0.0; n];
        let mut pending = vec![0.0; n];
        // step of the last spike; the far past means "never"
        let mut last_spike = vec![i64::MIN / 2; n];
        let mut refractory_until = vec![0i64; n];

        let mut batch = SampleBatch::new(n_visible, n, BackendTag::Lif, seed).with_capacity(samples);
        let mut spikes = record_spikes.then(SpikeLog::default);
        let words = n.div_ceil(64).max(1);
        let mut packed = vec![0u64; words];
        let mut fired = Vec::with_capacity(n);

        for step in 1..=total_steps as i64 {
            let t_end = step as f64 * cfg.sim_dt;
            for i in 0..n {
                current[i] = current[i] * decay + pending[i];
                pending[i] = 0.0;
            }
            noise.deliver(t_end, &mut current, &mut rng);

            fired.clear();
            for i in 0..n {
                if refractory_until[i] > step {
                    u[i] = cfg.reset;
                    continue;
                }
                u[i] += gain * (self.leak[i] - u[i] + current[i]);
                if u[i] >= cfg.threshold {
                    u[i] = cfg.reset;
                    last_spike[i] = step;
                    refractory_until[i] = step + self.ref_steps[i] as i64;
                    fired.push(i);
                }
            }
            for &i in &fired {
                if let Some(c) = &self.couplings {
                    for (k, w) in c.outgoing(i) {
                        pending[k] += w * self.weight_scale;
                    }
                }
                if let Some(log) = spikes.as_mut() {
                    log.events.push((t_end, i));
                }
            }

            let rel = step - warmup_steps as i64;
            if rel > 0 && rel % readout_steps as i64 == 0 {
                packed.iter_mut().for_each(|w| *w = 0);
                for i in 0..n {
                    if step - last_spike[i] < self.ref_steps[i] as i64 {
                        packed[i / 64] |= 1 << (i % 64);
                    }
                }
                batch.push_words(&packed);
            }
        }
        Recording { batch, spikes }
    }
}

fn ref_steps(cfg: &LifConfig, n: usize, seed: u64) -> Vec<usize> {
    let base = cfg.tau_ref;
    if cfg.tau_ref_jitter == 0.0 {
        return vec![cfg.steps(base).max(1); n];
    }
    let mut rng = rng::stream(seed, "lif-tau-ref");
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.steps(base * (1.0 + cfg.tau_ref_jitter * z)).max(1)
        })
        .collect()
}

fn network_circuit<'a>(params: &NetworkParams, cfg: &'a LifConfig, seed: u64) -> Result<Circuit<'a>> {
    cfg.validate()?;
    let cal = cfg.calibration.as_ref().ok_or(Error::Uncalibrated)?;
    let n = params.topology().n_units();
    Ok(Circuit {
        cfg,
        leak: (0..n).map(|u| cal.leak_for_bias(params.bias(u))).collect(),
        ref_steps: ref_steps(cfg, n, seed),
        couplings: Some(Couplings::new(params)),
        weight_scale: cal.weight_scale,
    })
}

/// Emulates the network for `duration` microseconds of recorded time.
///
/// Returns one state per `readout_dt` and every spike emitted after warmup
/// (times measured from the start of the simulation).
pub fn lif_sample(params: &NetworkParams, cfg: &LifConfig, duration: f64, seed: u64) -> Result<LifRun> {
    if !(duration >= 10.0 * cfg.tau_ref) {
        return Err(Error::DurationTooShort {
            duration,
            min: 10.0 * cfg.tau_ref,
        });
    }
    let circuit = network_circuit(params, cfg, seed)?;
    let samples = (duration / cfg.readout_dt).floor() as usize;
    let rec = circuit.run(params.topology().n_visible(), samples, seed, true);
    let mut spikes = rec.spikes.unwrap_or_default();
    let warmup_end = cfg.steps(cfg.warmup) as f64 * cfg.sim_dt;
    spikes.events.retain(|e| e.0 > warmup_end);
    Ok(LifRun {
        batch: rec.batch,
        spikes,
    })
}

/// Exactly `s` readouts without a spike log.
pub fn lif_sample_count(params: &NetworkParams, cfg: &LifConfig, s: usize, seed: u64) -> Result<SampleBatch> {
    if s == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let circuit = network_circuit(params, cfg, seed)?;
    Ok(circuit.run(params.topology().n_visible(), s, seed, false).batch)
}

/// Fraction of readouts with `z = 1` for isolated neurons at the given leaks.
pub fn activation(cfg: &LifConfig, leaks: &[f64], duration: f64, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = leaks.len();
    let circuit = Circuit {
        cfg,
        leak: leaks.to_vec(),
        ref_steps: ref_steps(cfg, n, seed),
        couplings: None,
        weight_scale: 0.0,
    };
    let samples = ((duration / cfg.readout_dt).floor() as usize).max(1);
    let rec = circuit.run(n.min(64), samples, seed, false);
    let batch = rec.batch;
    Ok((0..n)
        .map(|i| (0..batch.len()).filter(|&k| batch.unit(k, i)).count() as f64 / batch.len() as f64)
        .collect())
}

fn logistic(x: f64, u0: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + (-(x - u0) / alpha).exp())
}

/// Least-squares logistic fit by damped Gauss-Newton. Returns `(u0, alpha, rms)`.
fn fit_logistic(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let span = points.last().unwrap().0 - points[0].0;
    // start at the first crossing of one half
    let mut u0 = points
        .windows(2)
        .find(|w| w[0].1 < 0.5 && w[1].1 >= 0.5)
        .map(|w| w[0].0 + (0.5 - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0))
        .unwrap_or(points[points.len() / 2].0);
    let mut alpha = span / 10.0;
    let sse = |u0: f64, a: f64| -> f64 {
        points.iter().map(|&(x, p)| (logistic(x, u0, a) - p).powi(2)).sum()
    };
    let mut lambda = 1e-3;
    let mut current = sse(u0, alpha);
    for _ in 0..200 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(x, p) in points {
            let f = logistic(x, u0, alpha);
            let df = f * (1.0 - f);
            let j = [-df / alpha, -df * (x - u0) / (alpha * alpha)];
            let r = p - f;
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step = [
            (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det,
            (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det,
        ];
        let (nu, na) = (u0 + step[0], (alpha + step[1]).max(1e-9));
        let trial = sse(nu, na);
        if trial < current {
            u0 = nu;
            alpha = na;
            let done = current - trial < 1e-14;
            current = trial;
            lambda *= 0.3;
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e10 {
                break;
            }
        }
    }
    (u0, alpha, (current / points.len() as f64).sqrt())
}

/// Sweep of leak potentials used by [`lif_calibrate`]: threshold +- 4 noise sigmas.
pub fn default_sweep(cfg: &LifConfig) -> (f64, f64) {
    let sigma = cfg.noise_current_std().max(1e-3);
    (cfg.threshold - 4.0 * sigma, cfg.threshold + 4.0 * sigma)
}

/// Measures the activation curve of isolated neurons over `n_points` leak
/// potentials, fits a logistic and derives the parameter map.
pub fn lif_calibrate(cfg: &LifConfig, n_points: usize, duration_per_point: f64, seed: u64) -> Result<Calibration> {
    lif_calibrate_range(cfg, n_points, default_sweep(cfg), duration_per_point, seed)
}

pub fn lif_calibrate_range(
    cfg: &LifConfig,
    n_points: usize,
    (leak_min, leak_max): (f64, f64),
    duration_per_point: f64,
    seed: u64,
) -> Result<Calibration> {
    if n_points < 5 {
        return Err(Error::Config(format!("calibration needs at least 5 points, got {n_points}")));
    }
    if !(leak_max > leak_min) {
        return Err(Error::Config("calibration sweep range is empty".into()));
    }
    let leaks: Vec<f64> = (0..n_points)
        .map(|k| leak_min + (leak_max - leak_min) * k as f64 / (n_points - 1) as f64)
        .collect();
    let mut table = Vec::with_capacity(n_points);
    // neurons are uncoupled, so one simulation measures up to 64 leaks at once
    for (chunk_index, chunk) in leaks.chunks(64).enumerate() {
        let p = activation(cfg, chunk, duration_per_point, rng::derive_seed(seed, &format!("cal-{chunk_index}")))?;
        table.extend(chunk.iter().copied().zip(p));
    }
    let (u0, alpha, residual) = fit_logistic(&table);
    if !(residual < CALIBRATION_RESIDUAL_LIMIT) {
        return Err(Error::NonSigmoidal {
            residual,
            limit: CALIBRATION_RESIDUAL_LIMIT,
        });
    }
    let kernel_mean = cfg.kernel_mean();
    Ok(Calibration {
        u0,
        alpha,
        kernel_mean,
        weight_scale: alpha / kernel_mean,
        residual,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistPoint {
    pub dt: f64,
    /// Mean over repeats of `D_KL(exact || empirical)`.
    pub dkl: f64,
    pub dkl_std: f64,
}

/// DKL between the exact visible marginal and LIF readouts taken every `dt`,
/// at a fixed sample count per `dt`, averaged over `repeats` seeds.
pub fn nyquist_scan(
    params: &NetworkParams,
    cfg: &LifConfig,
    dts: &[f64],
    s: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<NyquistPoint>> {
    let exact = exact_distribution(params)?;
    nyquist_scan_against(params, cfg, exact.visible(), dts, s, repeats, seed)
}

/// Like [`nyquist_scan`], measured against a given visible distribution such
/// as a training target.
pub fn nyquist_scan_against(
    params: &NetworkParams,
    cfg: &LifConfig,
    reference: &[f64],
    dts: &[f64],
    s: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<NyquistPoint>> {
    if dts.iter().any(|&dt| !(dt > 0.0)) {
        return Err(Error::Config("readout intervals must be positive".into()));
    }
    let expected = 1usize << params.topology().n_visible();
    if reference.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: reference.len(),
        });
    }
    let repeats = repeats.max(1);
    dts.iter()
        .map(|&dt| {
            let cfg = LifConfig {
                readout_dt: dt,
                ..cfg.clone()
            };
            let values = (0..repeats)
                .map(|r| {
                    let run_seed = rng::derive_seed(seed, &format!("nyquist-{r}"));
                    let batch = lif_sample_count(params, &cfg, s, run_seed)?;
                    dkl(reference, &empirical_marginal(&batch, Marginal::Visible)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / repeats as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
            Ok(NyquistPoint {
                dt,
                dkl: mean,
                dkl_std: var.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, init_params, InitScheme, TopologyKind};

    fn calibrated() -> LifConfig {
        let cfg = LifConfig::default();
        let cal = lif_calibrate(&cfg, 11, 20_000.0, 3).unwrap();
        LifConfig {
            calibration: Some(cal),
            ..cfg
        }
    }

    #[test]
    fn kernel_mean_matches_numeric_integral() {
        let cfg = LifConfig::default();
        let steps = 100_000;
        let h = cfg.tau_ref / steps as f64;
        let (tm, ts) = (cfg.tau_m, cfg.tau_syn);
        let psp = |t: f64| ts / (ts - tm) * ((-t / ts).exp() - (-t / tm).exp());
        let integral: f64 = (0..steps).map(|k| psp((k as f64 + 0.5) * h) * h).sum();
        assert!((integral / cfg.tau_ref - cfg.kernel_mean()).abs() < 1e-8);
    }

    #[test]
    fn logistic_fit_recovers_parameters() {
        let points: Vec<(f64, f64)> = (0..15).map(|k| {
            let x = -3.0 + 0.4 * k as f64;
            (x, logistic(x, 0.3, 0.7))
        }).collect();
        let (u0, alpha, rms) = fit_logistic(&points);
        assert!((u0 - 0.3).abs() < 1e-6 && (alpha - 0.7).abs() < 1e-6 && rms < 1e-8);
    }

    #[test]
    fn calibration_is_sigmoidal() {
        let cfg = calibrated();
        let cal = cfg.calibration.as_ref().unwrap();
        assert!(cal.residual < CALIBRATION_RESIDUAL_LIMIT);
        assert!(cal.table.first().unwrap().1 < 0.05);
        assert!(cal.table.last().unwrap().1 > 0.9);
        assert!((cal.fitted(cal.u0) - 0.5).abs() < 1e-12);
        assert!(cal.alpha > 0.0 && cal.weight_scale > cal.alpha);
    }

    #[test]
    fn tonic_firing_reads_as_on() {
        let cfg = LifConfig::default();
        let p = activation(&cfg, &[100.0], 2_000.0, 1).unwrap();
        assert!(p[0] >= 1.0 - cfg.readout_dt / cfg.tau_ref, "{p:?}");
        // inter-spike interval equals the refractory time
        let t = build_topology(TopologyKind::Restricted, 2, &[1]).unwrap();
        let mut params = init_params(&t, 0, InitScheme::Zero).unwrap();
        params.d = vec![1e4, -1e4];
        let cfg = LifConfig {
            calibration: Some(Calibration {
                u0: 1.0,
                alpha: 0.5,
                kernel_mean: 0.6,
                weight_scale: 0.8,
                residual: 0.0,
                table: vec![],
            }),
            ..cfg
        };
        let run = lif_sample(&params, &cfg, 500.0, 2).unwrap();
        let times: Vec<f64> = run.spikes.spikes_of(0).collect();
        assert!(times.len() > 40);
        for w in times.windows(2) {
            assert!((w[1] - w[0] - cfg.tau_ref).abs() < cfg.sim_dt + 1e-9);
        }
        assert_eq!(run.spikes.spikes_of(1).count(), 0);
    }

    #[test]
    fn calibrated_zero_bias_is_half_on() {
        let cfg = calibrated();
        let cal = cfg.calibration.as_ref().unwrap();
        let p = activation(&cfg, &[cal.leak_for_bias(0.0); 8], 50_000.0, 17).unwrap();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn errors() {
        let t = build_topology(TopologyKind::Restricted, 2, &[1]).unwrap();
        let params = init_params(&t, 0, InitScheme::Zero).unwrap();
        let cfg = LifConfig::default();
        assert!(matches!(lif_sample(&params, &cfg, 1000.0, 0), Err(Error::Uncalibrated)));
        let cfg = calibrated();
        assert!(matches!(
            lif_sample(&params, &cfg, 50.0, 0),
            Err(Error::DurationTooShort { .. })
        ));
        assert!(lif_calibrate(&cfg, 4, 100.0, 0).is_err());
    }

    #[test]
    fn deterministic_and_logged() {
        let cfg = LifConfig {
            shared_noise: true,
            tau_ref_jitter: 0.05,
            ..calibrated()
        };
        let t = build_topology(TopologyKind::Restricted, 2, &[2]).unwrap();
        let params = init_params(&t, 1, InitScheme::Uniform(1.0)).unwrap();
        let a = lif_sample(&params, &cfg, 2_000.0, 4).unwrap();
        let b = lif_sample(&params, &cfg, 2_000.0, 4).unwrap();
        assert_eq!(a.batch, b.batch);
        assert_eq!(a.spikes, b.spikes);
        assert_eq!(a.batch.len(), 1000);
        let mut buf = Vec::new();
        a.spikes.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_us,unit_id\n"));
        assert_eq!(text.lines().count(), a.spikes.events.len() + 1);
    }
}
