use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use qsampler_core::benchmark::CostModel;
use qsampler_core::samplers::{BackendTag, GibbsConfig, LifConfig};
use qsampler_core::topology::TopologyKind;
use qsampler_core::trainer::TargetState;

use crate::Failure;

/// Reads and parses a JSON config, reporting the position of syntax errors.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = full.strip_suffix(&suffix).unwrap_or(&full);
        Failure::Config(format!(
            "{}: line {}, column {}: {message}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Resolves `path` against the directory holding the config file.
pub fn relative_to(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    config.parent().unwrap_or(Path::new(".")).join(path)
}

fn default_samples() -> usize {
    125_000
}

fn default_points() -> usize {
    11
}

fn default_duration() -> f64 {
    20_000.0
}

fn default_repeats() -> usize {
    3
}

/// Angles as an explicit list or an evenly spaced inclusive grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ThetaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl ThetaGrid {
    pub fn values(&self) -> Result<Vec<f64>, Failure> {
        match *self {
            ThetaGrid::List(ref v) => Ok(v.clone()),
            ThetaGrid::Range { start, stop, points } => {
                if points < 2 {
                    return Err(Failure::Config("theta grid needs at least 2 points".into()));
                }
                Ok((0..points)
                    .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
                    .collect())
            }
        }
    }
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid::Range {
            start: 0.0,
            stop: std::f64::consts::FRAC_PI_2,
            points: 21,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub target: TargetState,
    pub backend: BackendTag,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub thetas: ThetaGrid,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub lif: Option<LifConfig>,
    #[serde(default)]
    pub seed: u64,
}

/// Integer sizes as an explicit list or an inclusive stepped range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SizeGrid {
    List(Vec<usize>),
    Range { start: usize, stop: usize, step: usize },
}

impl SizeGrid {
    pub fn values(&self) -> Result<Vec<usize>, Failure> {
        match *self {
            SizeGrid::List(ref v) => Ok(v.clone()),
            SizeGrid::Range { start, stop, step } => {
                if step == 0 || stop < start {
                    return Err(Failure::Config("size range needs step > 0 and stop >= start".into()));
                }
                Ok((start..=stop).step_by(step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_spins: SizeGrid,
    pub m_hidden: SizeGrid,
    pub samples: usize,
    pub clock_hz: f64,
    /// Seconds per hardware sample.
    #[serde(default)]
    pub hardware_sample_time: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl BenchConfig {
    pub fn model(&self) -> Result<CostModel, Failure> {
        let mut model = CostModel::new(self.clock_hz).map_err(Failure::config)?;
        if let Some(t) = self.hardware_sample_time {
            model.hardware_sample_time = t;
        }
        model.validate().map_err(Failure::config)?;
        Ok(model)
    }
}

/// Network whose LIF emulation is scanned: a checkpoint or random parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum NetworkSource {
    Checkpoint(PathBuf),
    Random {
        kind: TopologyKind,
        n_visible: usize,
        hidden_sizes: Vec<usize>,
        scale: f64,
    },
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::Random {
            kind: TopologyKind::Restricted,
            n_visible: 4,
            hidden_sizes: vec![4],
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NyquistConfig {
    #[serde(default)]
    pub lif: LifConfig,
    /// Readout intervals in microseconds.
    pub dts: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub network: NetworkSource,
    /// Reference distribution; the network's own exact marginal when absent.
    #[serde(default)]
    pub target: Option<TargetState>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_points")]
    pub points: usize,
    /// Leak range; defaults to threshold +- 4 background-noise sigmas.
    #[serde(default)]
    pub leak_min: Option<f64>,
    #[serde(default)]
    pub leak_max: Option<f64>,
    /// Recorded microseconds per point.
    #[serde(default = "default_duration")]
    pub duration: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            points: default_points(),
            leak_min: None,
            leak_max: None,
            duration: default_duration(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default)]
    pub lif: LifConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub seed: u64,
}
