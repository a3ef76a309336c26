//! Network structure, parameters and the Boltzmann energy.
//!
//! Units are indexed visible first, then the first hidden layer, then the
//! second hidden layer (deep networks only). Weights are stored per edge in
//! the order produced by [`build_topology`].

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    /// Bipartite visible-hidden graph.
    Restricted,
    /// Bipartite graph plus all visible-visible pairs.
    VisibleLateral,
    /// Visible, first hidden and second hidden layer chained without skips.
    Deep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    n_visible: usize,
    hidden_sizes: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

/// Builds a fully connected inter-layer mask of the given kind.
pub fn build_topology(kind: TopologyKind, n_visible: usize, hidden_sizes: &[usize]) -> Result<Topology> {
    if n_visible < 2 || n_visible % 2 != 0 {
        return Err(Error::InvalidTopology(format!(
            "visible layer must hold an even number >= 2 of units, got {n_visible}"
        )));
    }
    if hidden_sizes.iter().any(|&m| m == 0) {
        return Err(Error::InvalidTopology("hidden layers must not be empty".into()));
    }
    match (kind, hidden_sizes.len()) {
        (TopologyKind::Deep, 2) => {}
        (TopologyKind::Deep, n) => {
            return Err(Error::InvalidTopology(format!(
                "deep topology needs exactly two hidden sizes, got {n}"
            )))
        }
        (_, 1) => {}
        (_, n) => {
            return Err(Error::InvalidTopology(format!(
                "{kind:?} topology needs exactly one hidden size, got {n}"
            )))
        }
    }

    let h1 = hidden_sizes[0];
    let mut edges = Vec::new();
    for i in 0..n_visible {
        for j in 0..h1 {
            edges.push((i, n_visible + j));
        }
    }
    match kind {
        TopologyKind::Restricted => {}
        TopologyKind::VisibleLateral => {
            for i in 0..n_visible {
                for k in i + 1..n_visible {
                    edges.push((i, k));
                }
            }
        }
        TopologyKind::Deep => {
            let h2 = hidden_sizes[1];
            for j in 0..h1 {
                for k in 0..h2 {
                    edges.push((n_visible + j, n_visible + h1 + k));
                }
            }
        }
    }
    Ok(Topology {
        kind,
        n_visible,
        hidden_sizes: hidden_sizes.to_vec(),
        edges,
    })
}

impl Topology {
    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_qubits(&self) -> usize {
        self.n_visible / 2
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_sizes.iter().sum()
    }

    pub fn n_units(&self) -> usize {
        self.n_visible + self.n_hidden()
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Layer of a unit: 0 visible, 1 first hidden, 2 second hidden.
    pub fn layer_of(&self, unit: usize) -> usize {
        if unit < self.n_visible {
            0
        } else if unit < self.n_visible + self.hidden_sizes[0] {
            1
        } else {
            2
        }
    }

    /// Units whose states are summed analytically by the exact backend: a
    /// layer without internal edges, conditionally independent given the rest.
    pub fn free_layer(&self) -> std::ops::Range<usize> {
        let start = self.n_visible;
        start..start + self.hidden_sizes[0]
    }

    /// Adjacency as `(neighbor, edge index)` lists per unit.
    pub fn neighbors(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_units()];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
        adj
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyRepr {
    kind: TopologyKind,
    n_visible: usize,
    hidden_sizes: Vec<usize>,
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TopologyRepr {
            kind: self.kind,
            n_visible: self.n_visible,
            hidden_sizes: self.hidden_sizes.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TopologyRepr::deserialize(deserializer)?;
        build_topology(repr.kind, repr.n_visible, &repr.hidden_sizes).map_err(serde::de::Error::custom)
    }
}

/// Hardware-style fixed-point grid for weights and biases.
///
/// Weights are signed integers in `[-(2^(bits-1) - 1), 2^(bits-1) - 1]` times
/// `weight_scale`. Biases are unsigned `bias_bits`-bit integers `k` mapped to
/// `bias_offset + k * bias_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantSpec {
    pub weight_bits: u32,
    pub bias_bits: u32,
    pub weight_scale: f64,
    pub bias_scale: f64,
    pub bias_offset: f64,
}

impl Default for QuantSpec {
    /// 6-bit weights spanning +-4 and 10-bit biases spanning +-8.
    fn default() -> Self {
        Self {
            weight_bits: 6,
            bias_bits: 10,
            weight_scale: 4.0 / 31.0,
            bias_scale: 16.0 / 1023.0,
            bias_offset: -8.0,
        }
    }
}

impl QuantSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_scale > 0.0 && self.bias_scale > 0.0) {
            return Err(Error::Config("quantization scales must be positive".into()));
        }
        if !(2..=16).contains(&self.weight_bits) || !(1..=16).contains(&self.bias_bits) {
            return Err(Error::Config("quantization bit widths out of range".into()));
        }
        if !self.bias_offset.is_finite() {
            return Err(Error::Config("bias offset must be finite".into()));
        }
        Ok(())
    }

    pub fn max_weight_level(&self) -> i64 {
        (1i64 << (self.weight_bits - 1)) - 1
    }

    pub fn max_bias_level(&self) -> i64 {
        (1i64 << self.bias_bits) - 1
    }

    /// Integer weight level, saturated. The flag reports saturation.
    pub fn weight_level(&self, w: f64) -> (i64, bool) {
        let max = self.max_weight_level();
        let k = (w / self.weight_scale).round();
        if k > max as f64 {
            (max, true)
        } else if k < -(max as f64) {
            (-max, true)
        } else {
            (k as i64, false)
        }
    }

    pub fn bias_level(&self, b: f64) -> (i64, bool) {
        let max = self.max_bias_level();
        let k = ((b - self.bias_offset) / self.bias_scale).round();
        if k > max as f64 {
            (max, true)
        } else if k < 0.0 {
            (0, true)
        } else {
            (k as i64, false)
        }
    }

    pub fn quantize_weight(&self, w: f64) -> (f64, bool) {
        let (k, sat) = self.weight_level(w);
        (k as f64 * self.weight_scale, sat)
    }

    pub fn quantize_bias(&self, b: f64) -> (f64, bool) {
        let (k, sat) = self.bias_level(b);
        (self.bias_offset + k as f64 * self.bias_scale, sat)
    }

    fn on_weight_grid(&self, w: f64) -> bool {
        self.quantize_weight(w).0 == w
    }

    fn on_bias_grid(&self, b: f64) -> bool {
        self.quantize_bias(b).0 == b
    }
}

/// Energy parameters over a topology: one weight per edge plus unit biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    topology: Topology,
    pub weights: Vec<f64>,
    /// Visible biases.
    pub d: Vec<f64>,
    /// Hidden biases, first layer then second.
    pub b: Vec<f64>,
    quant: Option<QuantSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Zero,
    /// Weights uniform in `[-eps, eps]`, biases zero.
    Uniform(f64),
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Uniform(0.01)
    }
}

/// Deterministic initial parameters for a topology.
pub fn init_params(topology: &Topology, seed: u64, scheme: InitScheme) -> Result<NetworkParams> {
    let weights = match scheme {
        InitScheme::Zero => vec![0.0; topology.n_edges()],
        InitScheme::Uniform(eps) => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("uniform init width must be positive, got {eps}")));
            }
            let mut rng = rng::stream(seed, "init-params");
            (0..topology.n_edges()).map(|_| rng.random_range(-eps..=eps)).collect()
        }
    };
    Ok(NetworkParams {
        topology: topology.clone(),
        weights,
        d: vec![0.0; topology.n_visible()],
        b: vec![0.0; topology.n_hidden()],
        quant: None,
    })
}

impl NetworkParams {
    pub fn new(topology: Topology, weights: Vec<f64>, d: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let params = Self {
            topology,
            weights,
            d,
            b,
            quant: None,
        };
        params.check_sizes()?;
        Ok(params)
    }

    fn check_sizes(&self) -> Result<()> {
        let t = &self.topology;
        for (expected, found) in [
            (t.n_edges(), self.weights.len()),
            (t.n_visible(), self.d.len()),
            (t.n_hidden(), self.b.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn quant(&self) -> Option<&QuantSpec> {
        self.quant.as_ref()
    }

    /// Bias of a unit in the global index.
    pub fn bias(&self, unit: usize) -> f64 {
        let nv = self.topology.n_visible();
        if unit < nv {
            self.d[unit]
        } else {
            self.b[unit - nv]
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.d.len() + self.b.len()
    }

    /// Parameters flattened as `[weights, d, b]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(&self.weights);
        flat.extend_from_slice(&self.d);
        flat.extend_from_slice(&self.b);
        flat
    }

    /// Overwrites all parameters from a `[weights, d, b]` slice. Clears any
    /// quantization flag since the values need not lie on the grid.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        let (w, rest) = flat.split_at(self.weights.len());
        let (d, b) = rest.split_at(self.d.len());
        self.weights.copy_from_slice(w);
        self.d.copy_from_slice(d);
        self.b.copy_from_slice(b);
        self.quant = None;
        Ok(())
    }

    /// True when every weight and bias lies on the attached quantization grid.
    pub fn on_grid(&self) -> bool {
        match &self.quant {
            None => false,
            Some(q) => {
                self.weights.iter().all(|&w| q.on_weight_grid(w))
                    && self.d.iter().chain(&self.b).all(|&b| q.on_bias_grid(b))
            }
        }
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

/// `E = -sum_edges s_i W_ij s_j - sum_i v_i d_i - sum_j h_j b_j`.
///
/// `hidden` concatenates all hidden layers in unit order.
pub fn energy(params: &NetworkParams, visible: &[bool], hidden: &[bool]) -> Result<f64> {
    let t = params.topology();
    if visible.len() != t.n_visible() {
        return Err(Error::DimensionMismatch {
            expected: t.n_visible(),
            found: visible.len(),
        });
    }
    if hidden.len() != t.n_hidden() {
        return Err(Error::DimensionMismatch {
            expected: t.n_hidden(),
            found: hidden.len(),
        });
    }
    let state = |u: usize| if u < visible.len() { visible[u] } else { hidden[u - visible.len()] };
    let mut e = 0.0;
    for (&(i, j), &w) in t.edges().iter().zip(&params.weights) {
        if state(i) && state(j) {
            e -= w;
        }
    }
    for (u, &on) in visible.iter().chain(hidden).enumerate() {
        if on {
            e -= params.bias(u);
        }
    }
    Ok(e)
}

/// Outcome statistics of a saturating quantization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantStats {
    pub saturated: usize,
}

/// Rounds every weight and bias onto the grid of `spec`, saturating silently.
pub fn quantize(params: &NetworkParams, spec: &QuantSpec) -> Result<(NetworkParams, QuantStats)> {
    spec.validate()?;
    let mut stats = QuantStats::default();
    let mut out = params.clone();
    for w in out.weights.iter_mut() {
        let (q, sat) = spec.quantize_weight(*w);
        *w = q;
        stats.saturated += sat as usize;
    }
    for b in out.d.iter_mut().chain(out.b.iter_mut()) {
        let (q, sat) = spec.quantize_bias(*b);
        *b = q;
        stats.saturated += sat as usize;
    }
    out.quant = Some(*spec);
    Ok((out, stats))
}

/// Maps per-qubit POVM outcomes to visible units, `a_i = 2 v_{2i} + v_{2i+1}`.
pub fn encode_outcomes(outcomes: &[u8]) -> Result<Vec<bool>> {
    let mut v = Vec::with_capacity(2 * outcomes.len());
    for &a in outcomes {
        if a > 3 {
            return Err(Error::Domain(format!("POVM outcome {a} outside 0..=3")));
        }
        v.push(a & 2 != 0);
        v.push(a & 1 != 0);
    }
    Ok(v)
}

/// Inverse of [`encode_outcomes`].
pub fn decode_visible(visible: &[bool]) -> Result<Vec<u8>> {
    if visible.len() % 2 != 0 {
        return Err(Error::Domain(format!(
            "visible vector of odd length {}",
            visible.len()
        )));
    }
    Ok(visible
        .chunks(2)
        .map(|pair| 2 * pair[0] as u8 + pair[1] as u8)
        .collect())
}

/// Flat index of a visible configuration, first unit most significant. Equal
/// to the flat POVM outcome index of the decoded outcomes.
pub fn visible_index(visible: &[bool]) -> usize {
    visible.iter().fold(0, |acc, &on| (acc << 1) | on as usize)
}

pub fn visible_from_index(index: usize, n_visible: usize) -> Vec<bool> {
    (0..n_visible)
        .map(|i| (index >> (n_visible - 1 - i)) & 1 == 1)
        .collect()
}

/// Parameters plus training epoch, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointRepr {
    topology: Topology,
    weights: Vec<(usize, usize, f64)>,
    d: Vec<f64>,
    b: Vec<f64>,
    quant: Option<QuantSpec>,
    epoch: usize,
}

impl Serialize for Checkpoint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let p = &self.params;
        CheckpointRepr {
            topology: p.topology.clone(),
            weights: p
                .topology
                .edges()
                .iter()
                .zip(&p.weights)
                .map(|(&(i, j), &w)| (i, j, w))
                .collect(),
            d: p.d.clone(),
            b: p.b.clone(),
            quant: p.quant,
            epoch: self.epoch,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Checkpoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CheckpointRepr::deserialize(deserializer)?;
        let topology = repr.topology;
        let mut index = std::collections::HashMap::new();
        for (e, &(i, j)) in topology.edges().iter().enumerate() {
            index.insert((i, j), e);
        }
        let mut weights = vec![None; topology.n_edges()];
        for (i, j, w) in repr.weights {
            let key = (i.min(j), i.max(j));
            let e = *index
                .get(&key)
                .ok_or_else(|| D::Error::custom(format!("weight on ({i}, {j}) is not an edge of the topology")))?;
            weights[e] = Some(w);
        }
        let weights = weights
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| D::Error::custom("checkpoint is missing edge weights"))?;
        let mut params = NetworkParams::new(topology, weights, repr.d, repr.b).map_err(D::Error::custom)?;
        if let Some(q) = repr.quant {
            params.quant = Some(q);
            if !params.on_grid() {
                return Err(D::Error::custom("quantized checkpoint holds off-grid values"));
            }
        }
        Ok(Checkpoint {
            params,
            epoch: repr.epoch,
        })
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
