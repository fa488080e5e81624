//! Neuromodulated gradient descent: per-layer hyperparameters for SGD and
//! Adam chosen at every batch by copies of an evolved artificial gene
//! regulatory network.
//!
//! - [`grn`]: genomes, affinities, concentration dynamics, paired outputs.
//! - [`grneat`]: evolution of genomes with speciation and aligned crossover.
//! - [`nn`]: a small f64 CNN/MLP library with exact backpropagation.
//! - [`optim`]: SGD with momentum and decay, Adam, baseline presets.
//! - [`neuromod`]: layer features, controller banks, the modulated update.
//! - [`data`]: CIFAR readers, synthetic datasets, genome files, CSV output.
//! - [`harness`]: configuration, fitness evaluation and CLI commands.

pub mod data;
pub mod grn;
pub mod grneat;
pub mod harness;
pub mod neuromod;
pub mod nn;
pub mod optim;
