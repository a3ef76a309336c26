//! Training loop: plug-in reweighted KL gradient, Adam with decaying step size,
//! optional quantize-on-write, and state-level evaluation.

mod adam;
mod gradient;
mod target;

pub use adam::{adam_step, learning_rate, AdamConfig, AdamState};
pub use gradient::{estimate_gradient, exact_gradient, GradientEstimate};
pub use target::{target_distribution, TargetState};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    bell_witness, dkl, fidelity, reconstruct_density, DensityMatrix, OutcomeDistribution, TetrahedralPovm,
};
use crate::rng;
use crate::samplers::lif::{lif_calibrate, lif_sample_count};
use crate::samplers::{
    empirical_marginal, exact_distribution, gibbs_sample, BackendTag, GibbsConfig, LifConfig, Marginal,
    SampleBatch,
};
use crate::topology::{
    build_topology, init_params, quantize, Checkpoint, InitScheme, NetworkParams, QuantSpec, TopologyKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub hidden_sizes: Vec<usize>,
}

fn default_eval_interval() -> usize {
    10
}

fn default_init_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub target: TargetState,
    pub topology: TopologySpec,
    pub backend: BackendTag,
    /// Defaults to 125000, or 225000 for three or more qubits.
    #[serde(default)]
    pub samples_per_epoch: Option<usize>,
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub quantized: bool,
    #[serde(default)]
    pub quant: QuantSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    /// Keep a checkpoint every this many epochs; the final epoch is always kept.
    #[serde(default)]
    pub checkpoint_interval: Option<usize>,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    /// LIF emulation settings; calibrated at startup when no calibration is attached.
    #[serde(default)]
    pub lif: Option<LifConfig>,
    #[serde(default)]
    pub step_units: StepUnits,
}

/// Coordinates in which Adam steps are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepUnits {
    /// One unit is one level of the quantization grid (`weight_scale` for
    /// weights, `bias_scale` for biases), whether or not training is quantized.
    #[default]
    Levels,
    /// Plain logical parameter units.
    Logical,
}

impl TrainConfig {
    pub fn new(target: TargetState, kind: TopologyKind, hidden_sizes: Vec<usize>, backend: BackendTag, epochs: usize) -> Self {
        Self {
            target,
            topology: TopologySpec { kind, hidden_sizes },
            backend,
            samples_per_epoch: None,
            epochs,
            adam: AdamConfig::default(),
            quantized: false,
            quant: QuantSpec::default(),
            seed: 0,
            eval_interval: default_eval_interval(),
            checkpoint_interval: None,
            init_scale: default_init_scale(),
            gibbs: GibbsConfig::default(),
            lif: None,
            step_units: StepUnits::default(),
        }
    }

    pub fn samples(&self) -> usize {
        self.samples_per_epoch
            .unwrap_or(if self.target.n_qubits() >= 3 { 225_000 } else { 125_000 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples() == 0 {
            return Err(Error::Config("samples_per_epoch must be positive".into()));
        }
        if self.eval_interval == 0 || self.checkpoint_interval == Some(0) {
            return Err(Error::Config("intervals must be positive".into()));
        }
        self.adam.validate()?;
        self.gibbs.validate()?;
        if self.quantized {
            self.quant.validate()?;
        }
        if let Some(lif) = &self.lif {
            lif.validate()?;
        }
        self.target.density()?;
        Ok(())
    }
}

/// Metrics of one training epoch; state-level metrics are filled on evaluation epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eta: f64,
    pub grad_norm: f64,
    pub saturation_count: usize,
    /// `None` when infinite (a target state was never sampled).
    pub dkl: Option<f64>,
    pub fidelity: Option<f64>,
    pub bell_witness_at_pi_over_4: Option<f64>,
}

impl EpochRecord {
    pub fn is_evaluation(&self) -> bool {
        self.fidelity.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Parameters the sampler used last, quantized in quantized mode.
    pub final_params: NetworkParams,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainReport {
    /// JSONL history with one line per evaluation epoch.
    pub fn write_history<W: Write>(&self, mut out: W) -> Result<()> {
        for r in self.records.iter().filter(|r| r.is_evaluation()) {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    /// Mean of a metric over evaluation records with `epoch > last_epoch - window`.
    pub fn tail_mean(&self, window: usize, metric: impl Fn(&EpochRecord) -> Option<f64>) -> Option<f64> {
        let last = self.records.last()?.epoch;
        let values: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.epoch + window > last)
            .filter_map(metric)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sampling backend with its settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Exact,
    Gibbs(GibbsConfig),
    Lif(LifConfig),
}

impl Backend {
    pub fn tag(&self) -> BackendTag {
        match self {
            Backend::Exact => BackendTag::Exact,
            Backend::Gibbs(_) => BackendTag::Gibbs,
            Backend::Lif(_) => BackendTag::Lif,
        }
    }

    fn sample(&self, params: &NetworkParams, s: usize, seed: u64) -> Result<SampleBatch> {
        match self {
            Backend::Exact => Err(Error::Config("the exact backend does not sample".into())),
            Backend::Gibbs(cfg) => gibbs_sample(params, s, cfg, seed),
            Backend::Lif(cfg) => lif_sample_count(params, cfg, s, seed),
        }
    }

    /// Visible marginal: closed form for the exact backend, otherwise the
    /// histogram of `s` fresh samples.
    pub fn visible_marginal(&self, params: &NetworkParams, s: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            Backend::Exact => Ok(exact_distribution(params)?.visible().to_vec()),
            _ => empirical_marginal(&self.sample(params, s, seed)?, Marginal::Visible),
        }
    }
}

fn resolve_backend(config: &TrainConfig) -> Result<Backend> {
    Ok(match config.backend {
        BackendTag::Exact => Backend::Exact,
        BackendTag::Gibbs => Backend::Gibbs(config.gibbs),
        BackendTag::Lif => {
            let mut lif = config.lif.clone().unwrap_or_default();
            if lif.calibration.is_none() {
                let seed = rng::derive_seed(config.seed, "lif-calibration");
                lif.calibration = Some(lif_calibrate(&lif, 11, 20_000.0, seed)?);
            }
            Backend::Lif(lif)
        }
    })
}

/// State-level metrics of a visible distribution against a target.
#[derive(Debug, Clone)]
pub struct StateMetrics {
    pub dkl: f64,
    pub fidelity: f64,
    pub rho: DensityMatrix,
    pub distribution: OutcomeDistribution,
}

pub fn state_metrics(p_model: &[f64], p_star: &[f64], target: &DensityMatrix, povm: &TetrahedralPovm) -> Result<StateMetrics> {
    let distribution = OutcomeDistribution::from_visible(p_model.to_vec())?;
    let rho = reconstruct_density(&distribution, povm)?;
    Ok(StateMetrics {
        dkl: dkl(p_star, p_model)?,
        fidelity: fidelity(target, &rho)?,
        rho,
        distribution,
    })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Projects continuous shadow parameters into the representable range.
fn clip_to_range(flat: &mut [f64], n_weights: usize, q: &QuantSpec) {
    let w_max = q.max_weight_level() as f64 * q.weight_scale;
    let b_max = q.bias_offset + q.max_bias_level() as f64 * q.bias_scale;
    for (k, x) in flat.iter_mut().enumerate() {
        *x = if k < n_weights {
            x.clamp(-w_max, w_max)
        } else {
            x.clamp(q.bias_offset, b_max)
        };
    }
}

/// Runs the full training loop. Deterministic given the config for every backend.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    run(config, None)
}

/// Continues training from `initial` instead of a random initialization.
pub fn train_from(config: &TrainConfig, initial: &NetworkParams) -> Result<TrainReport> {
    run(config, Some(initial))
}

fn run(config: &TrainConfig, initial: Option<&NetworkParams>) -> Result<TrainReport> {
    config.validate()?;
    let povm = TetrahedralPovm::new();
    let target_rho = config.target.density()?;
    let p_star = target_distribution(&config.target, &povm)?;
    let topology = build_topology(config.topology.kind, config.target.n_visible(), &config.topology.hidden_sizes)?;
    let backend = resolve_backend(config)?;
    if let Backend::Exact = backend {
        // fail before the loop rather than at epoch 1
        exact_distribution(&init_params(&topology, 0, InitScheme::Zero)?)?;
    }

    let mut shadow = match initial {
        Some(p) if p.topology() == &topology => p.clone(),
        Some(_) => return Err(Error::Config("initial parameters do not match the configured topology".into())),
        None => init_params(&topology, config.seed, InitScheme::Uniform(config.init_scale))?,
    };
    let n_weights = shadow.weights.len();
    let mut flat = shadow.to_flat();
    if config.quantized {
        clip_to_range(&mut flat, n_weights, &config.quant);
        shadow.set_flat(&flat)?;
    }
    let unit: Vec<f64> = match config.step_units {
        StepUnits::Levels => (0..flat.len())
            .map(|k| if k < n_weights { config.quant.weight_scale } else { config.quant.bias_scale })
            .collect(),
        StepUnits::Logical => vec![1.0; flat.len()],
    };
    let mut levels: Vec<f64> = flat.iter().zip(&unit).map(|(x, u)| x / u).collect();
    let mut adam = AdamState::new(flat.len());
    let mut records = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::new();
    let two_qubit = config.target.n_qubits() == 2;
    let s = config.samples();

    let mut sampler_params = shadow.clone();
    for epoch in 1..=config.epochs {
        let mut saturation_count = 0;
        sampler_params = if config.quantized {
            let (q, stats) = quantize(&shadow, &config.quant)?;
            saturation_count = stats.saturated;
            q
        } else {
            shadow.clone()
        };

        let (grad, p_model) = match &backend {
            Backend::Exact => {
                let ex = exact_distribution(&sampler_params)?;
                (exact_gradient(&ex, &p_star)?, ex.visible().to_vec())
            }
            sampling => {
                let seed = rng::derive_seed(config.seed, &format!("epoch-{epoch}"));
                let batch = sampling.sample(&sampler_params, s, seed)?;
                let grad = estimate_gradient(&batch, &p_star, &sampler_params)?;
                (grad, empirical_marginal(&batch, Marginal::Visible)?)
            }
        };
        if let Some(parameter) = grad.first_non_finite() {
            return Err(Error::NonFiniteGradient { epoch, parameter });
        }

        let evaluate_now = epoch % config.eval_interval == 0 || epoch == config.epochs;
        let (mut dkl_value, mut fid, mut witness) = (None, None, None);
        if evaluate_now {
            let m = state_metrics(&p_model, &p_star, &target_rho, &povm)?;
            dkl_value = finite(m.dkl);
            fid = Some(m.fidelity);
            if two_qubit {
                witness = Some(bell_witness(&m.distribution, std::f64::consts::FRAC_PI_4)?);
            }
        }

        if let Some(k) = config.checkpoint_interval {
            if epoch % k == 0 && epoch != config.epochs {
                checkpoints.push(Checkpoint {
                    params: sampler_params.clone(),
                    epoch,
                });
            }
        }

        let level_grad: Vec<f64> = grad.to_flat().iter().zip(&unit).map(|(g, u)| g * u).collect();
        let eta = adam_step(&mut adam, &mut levels, &level_grad, epoch, &config.adam);
        for ((x, l), u) in flat.iter_mut().zip(&levels).zip(&unit) {
            *x = l * u;
        }
        if config.quantized {
            clip_to_range(&mut flat, n_weights, &config.quant);
            for ((l, x), u) in levels.iter_mut().zip(&flat).zip(&unit) {
                *l = x / u;
            }
        }
        shadow.set_flat(&flat)?;

        records.push(EpochRecord {
            epoch,
            eta,
            grad_norm: grad.norm(),
            saturation_count,
            dkl: dkl_value,
            fidelity: fid,
            bell_witness_at_pi_over_4: witness,
        });
    }
    checkpoints.push(Checkpoint {
        params: sampler_params.clone(),
        epoch: config.epochs,
    });
    Ok(TrainReport {
        records,
        final_params: sampler_params,
        checkpoints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub theta: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub dkl: f64,
    pub fidelity: f64,
    /// Empty unless the target has two qubits.
    pub witness: Vec<WitnessPoint>,
    pub rho: DensityMatrix,
    pub visible: Vec<f64>,
}

/// Draws one sample set (or the closed form for the exact backend) and
/// evaluates every metric on it, including `B(theta)` for each angle.
pub fn evaluate(
    params: &NetworkParams,
    backend: &Backend,
    s: usize,
    thetas: &[f64],
    target: &TargetState,
    seed: u64,
) -> Result<EvalMetrics> {
    if params.topology().n_visible() != target.n_visible() {
        return Err(Error::DimensionMismatch {
            expected: target.n_visible(),
            found: params.topology().n_visible(),
        });
    }
    let povm = TetrahedralPovm::new();
    let p_star = target_distribution(target, &povm)?;
    let visible = backend.visible_marginal(params, s, rng::derive_seed(seed, "evaluate"))?;
    let m = state_metrics(&visible, &p_star, &target.density()?, &povm)?;
    let witness = if target.n_qubits() == 2 {
        thetas
            .iter()
            .map(|&theta| {
                Ok(WitnessPoint {
                    theta,
                    value: bell_witness(&m.distribution, theta)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(EvalMetrics {
        dkl: m.dkl,
        fidelity: m.fidelity,
        witness,
        rho: m.rho,
        visible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell_config(backend: BackendTag, epochs: usize) -> TrainConfig {
        TrainConfig::new(TargetState::Bell, TopologyKind::Restricted, vec![20], backend, epochs)
    }

    #[test]
    fn config_json_defaults_and_rejections() {
        let json = r#"{"target": {"kind": "werner", "r": 0.3},
                       "topology": {"kind": "restricted", "hidden_sizes": [20]},
                       "backend": "gibbs", "epochs": 5}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.samples(), 125_000);
        assert_eq!(cfg.adam, AdamConfig::default());
        assert_eq!(cfg.eval_interval, 10);
        let ghz = TrainConfig::new(TargetState::Ghz { n: 3 }, TopologyKind::Restricted, vec![32], BackendTag::Gibbs, 1);
        assert_eq!(ghz.samples(), 225_000);
        let bad = json.replace("\"epochs\": 5", "\"epochs\": 5, \"epoch\": 3");
        assert!(serde_json::from_str::<TrainConfig>(&bad).is_err());
        let mut cfg = cfg;
        cfg.samples_per_epoch = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exact_training_is_monotone_after_warmup() {
        let mut cfg = bell_config(BackendTag::Exact, 600);
        cfg.eval_interval = 1;
        let report = train(&cfg).unwrap();
        assert_eq!(report.records.len(), 600);
        let dkl: Vec<f64> = report.records.iter().map(|r| r.dkl.unwrap()).collect();
        for t in 200..500 {
            assert!(dkl[t + 100] <= dkl[t] + 1e-6, "epoch {t}: {} -> {}", dkl[t], dkl[t + 100]);
        }
        assert!(dkl[599] < dkl[0]);
    }

    #[test]
    fn gibbs_training_is_deterministic() {
        let mut cfg = bell_config(BackendTag::Gibbs, 3);
        cfg.samples_per_epoch = Some(2000);
        cfg.eval_interval = 1;
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_params, b.final_params);
        let mut buf = Vec::new();
        a.write_history(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn quantized_parameters_stay_on_grid() {
        let mut cfg = bell_config(BackendTag::Exact, 40);
        cfg.quantized = true;
        cfg.checkpoint_interval = Some(1);
        let report = train(&cfg).unwrap();
        assert_eq!(report.checkpoints.len(), 40);
        assert!(report.checkpoints.iter().all(|c| c.params.on_grid()));
        assert!(report.final_params.on_grid());
    }

    #[test]
    fn perfect_model_evaluates_to_identity() {
        // zero parameters give the uniform distribution, which is the Werner r = 0 target
        let t = build_topology(TopologyKind::Restricted, 4, &[3]).unwrap();
        let p = init_params(&t, 0, InitScheme::Zero).unwrap();
        let thetas = [0.0, std::f64::consts::FRAC_PI_4];
        let m = evaluate(&p, &Backend::Exact, 1, &thetas, &TargetState::Werner { r: 0.0 }, 0).unwrap();
        assert!(m.dkl.abs() < 1e-14);
        assert!((m.fidelity - 1.0).abs() < 1e-9);
        assert!(m.witness.iter().all(|w| w.value.abs() < 1e-12));
        assert!(evaluate(&p, &Backend::Exact, 1, &thetas, &TargetState::Ghz { n: 3 }, 0).is_err());
    }

    #[test]
    fn evaluation_reuses_one_sample_set() {
        let t = build_topology(TopologyKind::Restricted, 4, &[4]).unwrap();
        let p = init_params(&t, 2, InitScheme::Uniform(1.0)).unwrap();
        let backend = Backend::Gibbs(GibbsConfig::default());
        let a = evaluate(&p, &backend, 5000, &[0.3, 0.7], &TargetState::Bell, 4).unwrap();
        let b = evaluate(&p, &backend, 5000, &[0.7], &TargetState::Bell, 4).unwrap();
        assert_eq!(a.witness[1], b.witness[0]);
        assert_eq!(a.visible, b.visible);
    }
}
