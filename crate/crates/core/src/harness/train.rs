//! Mini-batch training with a fixed optimizer or a neuromodulating controller.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::data::Dataset;
use crate::neuromod::{self, init_opt_states, BaseOptimizer, Controller, LastLayerInputs, StepReport};
use crate::nn::{LossKind, Network, Targets, Tensor};
use crate::optim::{self, Hyper, OptState};

/// How parameters are updated after each batch.
pub enum Method<'a> {
    /// A fixed optimizer with constant hyperparameters.
    Plain(Hyper),
    Neuromod(&'a mut dyn Controller),
}

impl Method<'_> {
    pub fn base(&self) -> BaseOptimizer {
        match self {
            Method::Plain(Hyper::Sgd(_)) => BaseOptimizer::Sgd,
            Method::Plain(Hyper::Adam(_)) => BaseOptimizer::Adam,
            Method::Neuromod(c) => c.base(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub shuffle_seed: u64,
    pub loss: LossKind,
    pub last_layer: LastLayerInputs,
}

/// Batches per epoch; the last batch may be short.
pub fn iterations_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Sample order for one epoch, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// One batch update with constant hyperparameters; returns the batch loss.
pub fn plain_train_step(
    network: &mut Network,
    batch: &Tensor,
    targets: Targets<'_>,
    loss: LossKind,
    states: &mut [OptState],
    hyper: &Hyper,
) -> Result<f64, HarnessError> {
    let (value, grads) = network.backward(batch, targets, loss)?;
    for ((p, state), g) in network.params_mut().iter_mut().zip(states.iter_mut()).zip(&grads.groups) {
        optim::apply(p.values.data_mut(), state, g.data(), hyper)?;
    }
    Ok(value)
}

/// Trains for `spec.epochs` epochs. `on_step` sees every neuromodulated
/// update; `on_epoch` runs after each epoch with the epoch index.
pub fn train(
    network: &mut Network,
    data: &Dataset,
    method: &mut Method<'_>,
    spec: &TrainSpec,
    on_step: &mut dyn FnMut(&StepReport),
    on_epoch: &mut dyn FnMut(usize, &Network) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    if spec.batch_size == 0 || spec.epochs == 0 {
        return Err(HarnessError::Config("epochs and batch_size must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(HarnessError::Config("empty training set".into()));
    }
    let mut states = init_opt_states(network, method.base());
    let mut iteration = 0u64;
    for epoch in 0..spec.epochs {
        let order = epoch_order(data.len(), spec.shuffle_seed, epoch);
        for chunk in order.chunks(spec.batch_size) {
            let batch = data.inputs.gather_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let targets = Targets::Labels(&labels);
            match method {
                Method::Plain(h) => {
                    plain_train_step(network, &batch, targets, spec.loss, &mut states, h)?;
                }
                Method::Neuromod(c) => {
                    let report = neuromod::neuromod_train_step(
                        network,
                        &batch,
                        targets,
                        spec.loss,
                        &mut **c,
                        &mut states,
                        iteration,
                        spec.last_layer,
                    )?;
                    on_step(&report);
                }
            }
            iteration += 1;
        }
        on_epoch(epoch, network)?;
    }
    Ok(())
}
