//! Per-layer neuromodulation of gradient descent.
//!
//! One GRN state is kept for every (weighted layer, weights|biases) pair; all
//! of them share a single genome. At every batch update each copy receives
//! six statistics of its own layer, the same six for the following layer and
//! a constant 1.0, and answers with the hyperparameters for its group.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grn::{CompiledGrn, Genome, GrnConfig, GrnError, GrnState};
use crate::nn::{Gradients, GroupKind, LossKind, Network, NnError, Targets, Tensor};
use crate::optim::{self, AdamHyper, AdamState, Hyper, OptState, OptimError, SgdHyper, SgdState};

pub const N_FEATURES: usize = 6;
pub const N_INPUTS: usize = 2 * N_FEATURES + 1;

/// Substituted for a decided Adam epsilon of exactly zero.
pub const MIN_EPSILON: f64 = 1e-12;
/// Upper cap on decided Adam betas; a beta of 1 makes bias correction divide by zero.
pub const MAX_BETA: f64 = 1.0 - 1e-9;

#[derive(Debug, Error)]
pub enum NeuromodError {
    #[error(transparent)]
    Grn(#[from] GrnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("no features for {0}")]
    MissingFeature(GroupKey),
    #[error("genome has {inputs} inputs / {outputs} outputs, {base} needs {N_INPUTS} / {need}")]
    GenomeShape {
        inputs: usize,
        outputs: usize,
        base: BaseOptimizer,
        need: usize,
    },
    #[error("{0} optimizer states for {1} parameter groups")]
    StateCount(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseOptimizer {
    #[default]
    Sgd,
    Adam,
}

impl BaseOptimizer {
    /// Hyperparameters produced per group: (eta, alpha) or (eta, beta1, beta2, eps).
    pub fn n_hyper(self) -> usize {
        match self {
            BaseOptimizer::Sgd => 2,
            BaseOptimizer::Adam => 4,
        }
    }

    pub fn n_output_proteins(self) -> usize {
        2 * self.n_hyper()
    }

    pub fn output_names(self) -> &'static [&'static str] {
        match self {
            BaseOptimizer::Sgd => &["eta", "alpha"],
            BaseOptimizer::Adam => &["eta", "beta1", "beta2", "epsilon"],
        }
    }

    pub fn fresh_state(self, len: usize) -> OptState {
        match self {
            BaseOptimizer::Sgd => OptState::Sgd(SgdState::new(len)),
            BaseOptimizer::Adam => OptState::Adam(AdamState::new(len)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BaseOptimizer::Sgd => "sgd",
            BaseOptimizer::Adam => "adam",
        }
    }
}

impl fmt::Display for BaseOptimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaseOptimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(BaseOptimizer::Sgd),
            "adam" => Ok(BaseOptimizer::Adam),
            other => Err(format!("unknown base optimizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub layer_index: usize,
    pub group: GroupKind,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {} {}", self.layer_index, self.group.short())
    }
}

/// The six per-group statistics, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerFeatures {
    pub location: f64,
    pub mu_theta: f64,
    pub sigma_theta: f64,
    pub mu_grad: f64,
    pub sigma_grad: f64,
    pub rel_size: f64,
}

impl LayerFeatures {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.location,
            self.mu_theta,
            self.sigma_theta,
            self.mu_grad,
            self.sigma_grad,
            self.rel_size,
        ]
    }
}

fn abs_mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| {
            let d = v.abs() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Features of parameter group `index` (position in [`Network::params`]).
pub fn compute_layer_features(network: &Network, grads: &Gradients, index: usize) -> LayerFeatures {
    let group = &network.params()[index];
    let last = network.weighted_layer_count().saturating_sub(1);
    let location = if last == 0 {
        0.0
    } else {
        group.layer_index as f64 / last as f64
    };
    let largest = network.params().iter().map(|p| p.size()).max().unwrap_or(1).max(1);
    let (mu_theta, sigma_theta) = abs_mean_std(group.values.data());
    let (mu_grad, sigma_grad) = abs_mean_std(grads.groups[index].data());
    LayerFeatures {
        location,
        mu_theta: unit(mu_theta),
        sigma_theta: unit(sigma_theta),
        mu_grad: unit(mu_grad),
        sigma_grad: unit(sigma_grad),
        rel_size: group.size() as f64 / largest as f64,
    }
}

pub fn all_features(network: &Network, grads: &Gradients) -> BTreeMap<GroupKey, LayerFeatures> {
    network
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                GroupKey {
                    layer_index: p.layer_index,
                    group: p.group,
                },
                compute_layer_features(network, grads, i),
            )
        })
        .collect()
}

/// What the last weighted layer sees in place of the following layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LastLayerInputs {
    /// Its own features, repeated.
    #[default]
    Replicate,
    Zeros,
}

/// `[features(l), features(l + 1), 1.0]` for the same group kind.
pub fn assemble_inputs(
    key: GroupKey,
    features: &BTreeMap<GroupKey, LayerFeatures>,
    weighted_layers: usize,
    last_layer: LastLayerInputs,
) -> Result<[f64; N_INPUTS], NeuromodError> {
    let own = features.get(&key).ok_or(NeuromodError::MissingFeature(key))?;
    let next = if key.layer_index + 1 < weighted_layers {
        let k = GroupKey {
            layer_index: key.layer_index + 1,
            ..key
        };
        features
            .get(&k)
            .ok_or(NeuromodError::MissingFeature(k))?
            .to_array()
    } else {
        match last_layer {
            LastLayerInputs::Replicate => own.to_array(),
            LastLayerInputs::Zeros => [0.0; N_FEATURES],
        }
    };
    let mut out = [0.0; N_INPUTS];
    out[..N_FEATURES].copy_from_slice(&own.to_array());
    out[N_FEATURES..2 * N_FEATURES].copy_from_slice(&next);
    out[2 * N_FEATURES] = 1.0;
    Ok(out)
}

/// Maps decoded outputs (in output-pair order) onto optimizer hyperparameters.
pub fn decode(base: BaseOptimizer, outputs: &[f64]) -> Hyper {
    match base {
        BaseOptimizer::Sgd => Hyper::Sgd(SgdHyper {
            eta: outputs[0],
            alpha: outputs[1],
            decay: 0.0,
        }),
        BaseOptimizer::Adam => Hyper::Adam(AdamHyper {
            eta: outputs[0],
            beta1: outputs[1].min(MAX_BETA),
            beta2: outputs[2].min(MAX_BETA),
            epsilon: if outputs[3] == 0.0 { MIN_EPSILON } else { outputs[3] },
            decay: 0.0,
        }),
    }
}

/// Hyperparameter values in table order, for telemetry.
pub fn hyper_values(h: &Hyper) -> Vec<f64> {
    match h {
        Hyper::Sgd(s) => vec![s.eta, s.alpha],
        Hyper::Adam(a) => vec![a.eta, a.beta1, a.beta2, a.epsilon],
    }
}

/// Source of per-group hyperparameters for one update.
pub trait Controller {
    fn base(&self) -> BaseOptimizer;
    fn decide(&mut self, key: GroupKey, inputs: &[f64; N_INPUTS]) -> Result<Hyper, NeuromodError>;
}

/// Always answers with the same hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct FixedController(pub Hyper);

impl Controller for FixedController {
    fn base(&self) -> BaseOptimizer {
        match self.0 {
            Hyper::Sgd(_) => BaseOptimizer::Sgd,
            Hyper::Adam(_) => BaseOptimizer::Adam,
        }
    }

    fn decide(&mut self, _key: GroupKey, _inputs: &[f64; N_INPUTS]) -> Result<Hyper, NeuromodError> {
        Ok(self.0)
    }
}

/// GRN copies sharing one genome, one state per parameter group.
#[derive(Debug, Clone)]
pub struct ControllerBank {
    grn: Arc<CompiledGrn>,
    states: BTreeMap<GroupKey, GrnState>,
    base: BaseOptimizer,
    pub last_layer: LastLayerInputs,
}

impl ControllerBank {
    pub fn new(
        genome: Genome,
        config: &GrnConfig,
        base: BaseOptimizer,
        network: &Network,
    ) -> Result<Self, NeuromodError> {
        check_genome_shape(&genome, base)?;
        let grn = Arc::new(CompiledGrn::new(genome, config)?);
        Ok(Self::from_compiled(grn, base, network))
    }

    /// Shares an already compiled genome.
    pub fn from_compiled(grn: Arc<CompiledGrn>, base: BaseOptimizer, network: &Network) -> Self {
        let states = network
            .params()
            .iter()
            .map(|p| {
                (
                    GroupKey {
                        layer_index: p.layer_index,
                        group: p.group,
                    },
                    grn.init_state(),
                )
            })
            .collect();
        ControllerBank {
            grn,
            states,
            base,
            last_layer: LastLayerInputs::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, key: &GroupKey) -> Option<&GrnState> {
        self.states.get(key)
    }

    pub fn genome(&self) -> &Genome {
        self.grn.genome()
    }

    /// Queries every copy with its assembled inputs.
    pub fn modulate(
        &mut self,
        features: &BTreeMap<GroupKey, LayerFeatures>,
        weighted_layers: usize,
    ) -> Result<BTreeMap<GroupKey, Hyper>, NeuromodError> {
        let keys: Vec<GroupKey> = self.states.keys().copied().collect();
        keys.into_iter()
            .map(|key| {
                let inputs = assemble_inputs(key, features, weighted_layers, self.last_layer)?;
                Ok((key, self.decide(key, &inputs)?))
            })
            .collect()
    }
}

pub fn check_genome_shape(genome: &Genome, base: BaseOptimizer) -> Result<(), NeuromodError> {
    if genome.n_inputs() != N_INPUTS || genome.n_outputs() != base.n_output_proteins() {
        return Err(NeuromodError::GenomeShape {
            inputs: genome.n_inputs(),
            outputs: genome.n_outputs(),
            base,
            need: base.n_output_proteins(),
        });
    }
    Ok(())
}

impl Controller for ControllerBank {
    fn base(&self) -> BaseOptimizer {
        self.base
    }

    fn decide(&mut self, key: GroupKey, inputs: &[f64; N_INPUTS]) -> Result<Hyper, NeuromodError> {
        let state = self
            .states
            .get_mut(&key)
            .ok_or(NeuromodError::MissingFeature(key))?;
        let outputs = self.grn.query(state, inputs)?;
        Ok(decode(self.base, &outputs))
    }
}

/// One controller query: what it saw and what it decided.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub iteration: u64,
    pub key: GroupKey,
    pub inputs: [f64; N_INPUTS],
    pub outputs: Vec<f64>,
}

/// Fresh optimizer state for every parameter group of `network`.
pub fn init_opt_states(network: &Network, base: BaseOptimizer) -> Vec<OptState> {
    network
        .params()
        .iter()
        .map(|p| base.fresh_state(p.size()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss: f64,
    pub rows: Vec<TelemetryRow>,
}

/// Forward, backward, feature extraction, one controller query per group,
/// then the modulated optimizer update.
#[allow(clippy::too_many_arguments)]
pub fn neuromod_train_step(
    network: &mut Network,
    batch: &Tensor,
    targets: Targets<'_>,
    loss: LossKind,
    controller: &mut dyn Controller,
    opt_states: &mut [OptState],
    iteration: u64,
    last_layer: LastLayerInputs,
) -> Result<StepReport, NeuromodError> {
    if opt_states.len() != network.params().len() {
        return Err(NeuromodError::StateCount(opt_states.len(), network.params().len()));
    }
    let (loss_value, grads) = network.backward(batch, targets, loss)?;
    let features = all_features(network, &grads);
    let layers = network.weighted_layer_count();

    let mut decisions = Vec::with_capacity(opt_states.len());
    let mut rows = Vec::with_capacity(opt_states.len());
    for p in network.params() {
        let key = GroupKey {
            layer_index: p.layer_index,
            group: p.group,
        };
        let inputs = assemble_inputs(key, &features, layers, last_layer)?;
        let hyper = controller.decide(key, &inputs)?;
        rows.push(TelemetryRow {
            iteration,
            key,
            inputs,
            outputs: hyper_values(&hyper),
        });
        decisions.push(hyper);
    }

    for (((p, state), g), h) in network
        .params_mut()
        .iter_mut()
        .zip(opt_states.iter_mut())
        .zip(&grads.groups)
        .zip(&decisions)
    {
        optim::apply(p.values.data_mut(), state, g.data(), h)?;
    }
    Ok(StepReport {
        loss: loss_value,
        rows,
    })
}
