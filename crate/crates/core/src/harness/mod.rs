//! Experiment orchestration: configuration, fitness evaluation, evolution
//! runs, baseline comparisons and controller traces.

pub mod catalog;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, CompareRow, DataError, Dataset, GenomeFile, SynthKind, SynthSpec};
use crate::grn::{AffinityMode, Genome, GrnConfig, GrnError};
use crate::grneat::{self, EvalContext, EvolutionConfig, EvolutionOutcome, EvolveError};
use crate::neuromod::{BaseOptimizer, Controller, ControllerBank, LastLayerInputs, NeuromodError, TelemetryRow};
use crate::nn::{accuracy, build_network, LossKind, Network, NnError};
use crate::optim::{baseline_presets, BaselineMethod, Hyper, OptimError, PresetModel};

pub use catalog::{model_catalog, model_spec, Scale};
pub use train::{iterations_per_epoch, Method, TrainSpec};

pub const GENOME_FILE: &str = "best_genome.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Neuromod(#[from] NeuromodError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Grn(#[from] GrnError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

impl HarnessError {
    /// Process exit status: 1 usage, 2 data, 3 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    #[default]
    Blobs,
    Spirals,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            "blobs" => Ok(DatasetKind::Blobs),
            "spirals" => Ok(DatasetKind::Spirals),
            other => Err(format!("unknown dataset '{other}'")),
        }
    }
}

pub fn parse_model(s: &str) -> Result<PresetModel, String> {
    match s.to_ascii_lowercase().as_str() {
        "m0" => Ok(PresetModel::M0),
        "m1" => Ok(PresetModel::M1),
        "m2" => Ok(PresetModel::M2),
        other => Err(format!("unknown model '{other}'")),
    }
}

/// Everything a command needs. Read from a flat TOML file; every key is
/// optional and CLI flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: evolution, per-generation contexts, initial weights.
    pub seed: u64,
    pub base: BaseOptimizer,
    /// Models sampled uniformly per generation; the first one is used by
    /// `compare` and `trace`.
    pub models: Vec<PresetModel>,
    pub scale: Scale,
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    /// Training samples kept (0 keeps all).
    pub subset: usize,
    /// Test samples kept (0 keeps all).
    pub test_subset: usize,
    pub synth_n: usize,
    pub synth_classes: usize,
    pub synth_noise: f64,
    pub data_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub out: PathBuf,
    pub population: usize,
    pub generations: usize,
    pub speciation_threshold: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub p_crossover: f64,
    pub p_add_protein: f64,
    pub p_remove_protein: f64,
    pub p_mutate_tag: f64,
    pub p_mutate_dynamics: f64,
    pub initial_regulators: usize,
    pub tag_mutation_sigma: f64,
    pub dynamics_mutation_sigma: f64,
    pub affinity_mode: AffinityMode,
    pub steps_per_query: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let evo = EvolutionConfig::default();
        let grn = GrnConfig::default();
        RunConfig {
            seed: 0,
            base: BaseOptimizer::Sgd,
            models: vec![PresetModel::M0, PresetModel::M1, PresetModel::M2],
            scale: Scale::Desk,
            dataset: DatasetKind::Blobs,
            data_dir: PathBuf::from("data"),
            subset: 2000,
            test_subset: 500,
            synth_n: 400,
            synth_classes: 3,
            synth_noise: 0.1,
            data_seed: 1,
            epochs: 3,
            batch_size: 128,
            out: PathBuf::from("out"),
            population: 20,
            generations: 15,
            speciation_threshold: evo.speciation_threshold,
            tournament_size: evo.tournament_size,
            elite_count: evo.elite_count,
            p_crossover: evo.p_crossover,
            p_add_protein: evo.p_add_protein,
            p_remove_protein: evo.p_remove_protein,
            p_mutate_tag: evo.p_mutate_tag,
            p_mutate_dynamics: evo.p_mutate_dynamics,
            initial_regulators: evo.initial_regulators,
            tag_mutation_sigma: evo.tag_mutation_sigma,
            dynamics_mutation_sigma: evo.dynamics_mutation_sigma,
            affinity_mode: grn.affinity_mode,
            steps_per_query: grn.steps_per_query,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.models.is_empty() {
            return bad("models must not be empty");
        }
        self.grn_config()
            .check()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.evolution_config()
            .check()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn grn_config(&self) -> GrnConfig {
        GrnConfig {
            affinity_mode: self.affinity_mode,
            steps_per_query: self.steps_per_query,
            ..GrnConfig::default()
        }
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            population_size: self.population,
            generations: self.generations,
            speciation_threshold: self.speciation_threshold,
            tournament_size: self.tournament_size,
            elite_count: self.elite_count,
            p_crossover: self.p_crossover,
            p_add_protein: self.p_add_protein,
            p_remove_protein: self.p_remove_protein,
            p_mutate_tag: self.p_mutate_tag,
            p_mutate_dynamics: self.p_mutate_dynamics,
            initial_regulators: self.initial_regulators,
            tag_mutation_sigma: self.tag_mutation_sigma,
            dynamics_mutation_sigma: self.dynamics_mutation_sigma,
            rng_seed: self.seed,
            grn: self.grn_config(),
        }
    }

    pub fn train_spec(&self, shuffle_seed: u64) -> TrainSpec {
        TrainSpec {
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle_seed,
            loss: LossKind::CrossEntropy,
            last_layer: LastLayerInputs::Replicate,
        }
    }

    pub fn model(&self, model: PresetModel, data: &Dataset) -> crate::nn::ModelSpec {
        model_spec(model, self.scale, data.sample_shape(), data.n_classes)
    }
}

/// Training and test splits for the configured dataset.
pub fn load_datasets(run: &RunConfig) -> Result<(Dataset, Dataset), HarnessError> {
    let keep = |d: Dataset, n: usize| if n == 0 { d } else { d.take(n) };
    let synth = |kind| -> Result<(Dataset, Dataset), HarnessError> {
        let spec = SynthSpec {
            kind,
            n: run.synth_n,
            n_classes: run.synth_classes,
            noise: run.synth_noise,
            seed: run.data_seed,
        };
        let test = SynthSpec {
            n: (run.synth_n / 4).max(run.synth_classes),
            seed: run.data_seed.wrapping_add(1),
            ..spec.clone()
        };
        Ok((data::synth_dataset(&spec)?, data::synth_dataset(&test)?))
    };
    let (train, test) = match run.dataset {
        DatasetKind::Cifar10 => data::load_cifar10(&run.data_dir)?,
        DatasetKind::Cifar100 => data::load_cifar100(&run.data_dir)?,
        DatasetKind::Blobs => synth(SynthKind::Blobs)?,
        DatasetKind::Spirals => synth(SynthKind::Spirals)?,
    };
    Ok((keep(train, run.subset), keep(test, run.test_subset)))
}

/// What one generation is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationContext {
    pub generation: usize,
    pub model_id: PresetModel,
    pub init_seed: u64,
}

impl EvalContext for GenerationContext {
    fn label(&self) -> String {
        self.model_id.to_string()
    }

    fn seed(&self) -> u64 {
        self.init_seed
    }
}

/// Model and weight seed for `generation`, drawn from a stream of the
/// master seed reserved for that generation.
pub fn generation_context(master_seed: u64, generation: usize, models: &[PresetModel]) -> GenerationContext {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    // Stream 0 belongs to the evolutionary operators.
    rng.set_stream(1 + generation as u64);
    GenerationContext {
        generation,
        model_id: models[rng.random_range(0..models.len())],
        init_seed: rng.random(),
    }
}

/// Trains the context's model under the genome's controllers and returns
/// the training accuracy after the final epoch.
pub fn fitness_eval(
    genome: &Genome,
    ctx: &GenerationContext,
    run: &RunConfig,
    train_split: &Dataset,
) -> Result<f64, HarnessError> {
    let probe = build_network(&run.model(ctx.model_id, train_split), ctx.init_seed)?;
    let mut bank = ControllerBank::new(genome.clone(), &run.grn_config(), run.base, &probe)?;
    controller_fitness(&mut bank, ctx, run, train_split)
}

/// [`fitness_eval`] for an arbitrary controller.
pub fn controller_fitness(
    controller: &mut dyn Controller,
    ctx: &GenerationContext,
    run: &RunConfig,
    train_split: &Dataset,
) -> Result<f64, HarnessError> {
    let mut network = build_network(&run.model(ctx.model_id, train_split), ctx.init_seed)?;
    train::train(
        &mut network,
        train_split,
        &mut Method::Neuromod(controller),
        &run.train_spec(ctx.init_seed),
        &mut |_| {},
        &mut |_, _| Ok(()),
    )?;
    Ok(accuracy(&network, &train_split.inputs, &train_split.labels)?)
}

/// Evolves a controller genome on the training split only.
pub fn evolve_on(run: &RunConfig, train_split: &Dataset) -> Result<EvolutionOutcome, HarnessError> {
    run.check()?;
    let base = run.base;
    let outcome = grneat::evolve(
        crate::neuromod::N_INPUTS,
        base.n_output_proteins(),
        &run.evolution_config(),
        |g| generation_context(run.seed, g, &run.models),
        |genome, ctx| fitness_eval(genome, ctx, run, train_split),
    )?;
    Ok(outcome)
}

fn out_path(run: &RunConfig, name: &str) -> PathBuf {
    run.out.join(name)
}

/// Runs evolution and writes the best-ever genome and the history.
pub fn cmd_evolve(run: &RunConfig) -> Result<EvolutionOutcome, HarnessError> {
    let (train_split, _) = load_datasets(run)?;
    let outcome = evolve_on(run, &train_split)?;
    let mut genome = Vec::new();
    data::write_genome(
        &mut genome,
        &GenomeFile {
            base: run.base,
            genome: outcome.best.genome.clone(),
        },
    )
    .map_err(DataError::from)?;
    data::write_file(&out_path(run, GENOME_FILE), &genome)?;
    let mut history = Vec::new();
    data::write_history_csv(&mut history, &outcome.history)?;
    data::write_file(&out_path(run, HISTORY_FILE), &history)?;
    Ok(outcome)
}

fn method_names(base: BaseOptimizer) -> [String; 3] {
    let (plain, starred) = match base {
        BaseOptimizer::Sgd => (BaselineMethod::Sgd, BaselineMethod::SgdStar),
        BaseOptimizer::Adam => (BaselineMethod::Adam, BaselineMethod::AdamStar),
    };
    [plain.to_string(), starred.to_string(), format!("Nm-{plain}")]
}

/// Trains the default optimizer, its tuned preset and `controller` from the
/// same initial weights and sample order, recording accuracy per epoch.
pub fn compare_methods(
    run: &RunConfig,
    controller: &mut dyn Controller,
    train_split: &Dataset,
    test_split: &Dataset,
) -> Result<Vec<CompareRow>, HarnessError> {
    run.check()?;
    let model = run.models[0];
    let spec = run.model(model, train_split);
    let (plain, starred) = match run.base {
        BaseOptimizer::Sgd => (BaselineMethod::Sgd, BaselineMethod::SgdStar),
        BaseOptimizer::Adam => (BaselineMethod::Adam, BaselineMethod::AdamStar),
    };
    let names = method_names(run.base);
    let mut rows = Vec::new();
    let mut methods = [
        Method::Plain(baseline_presets(plain, model)),
        Method::Plain(baseline_presets(starred, model)),
        Method::Neuromod(controller),
    ];
    for (name, method) in names.iter().zip(methods.iter_mut()) {
        let mut network = build_network(&spec, run.seed)?;
        train::train(
            &mut network,
            train_split,
            method,
            &run.train_spec(run.seed),
            &mut |_| {},
            &mut |epoch, net: &Network| {
                rows.push(CompareRow {
                    method: name.clone(),
                    epoch: epoch + 1,
                    train_accuracy: accuracy(net, &train_split.inputs, &train_split.labels)?,
                    test_accuracy: accuracy(net, &test_split.inputs, &test_split.labels)?,
                });
                Ok(())
            },
        )?;
    }
    Ok(rows)
}

fn load_controller_genome(run: &RunConfig, genome_path: &Path) -> Result<Genome, HarnessError> {
    let file = data::load_genome(genome_path, &run.grn_config())?;
    if file.base != run.base {
        return Err(HarnessError::Config(format!(
            "genome was evolved for {}, run is configured for {}",
            file.base, run.base
        )));
    }
    Ok(file.genome)
}

/// Writes per-epoch accuracies of the three methods to `compare.csv`.
pub fn cmd_compare(run: &RunConfig, genome_path: &Path) -> Result<Vec<CompareRow>, HarnessError> {
    let genome = load_controller_genome(run, genome_path)?;
    let (train_split, test_split) = load_datasets(run)?;
    let probe = build_network(&run.model(run.models[0], &train_split), run.seed)?;
    let mut bank = ControllerBank::new(genome, &run.grn_config(), run.base, &probe)?;
    let rows = compare_methods(run, &mut bank, &train_split, &test_split)?;
    let mut buf = Vec::new();
    data::write_compare_csv(&mut buf, &rows)?;
    data::write_file(&out_path(run, COMPARE_FILE), &buf)?;
    Ok(rows)
}

/// Every controller query of one neuromodulated training run.
pub fn trace_run(
    run: &RunConfig,
    controller: &mut dyn Controller,
    train_split: &Dataset,
) -> Result<Vec<TelemetryRow>, HarnessError> {
    run.check()?;
    let mut network = build_network(&run.model(run.models[0], train_split), run.seed)?;
    let mut rows = Vec::new();
    train::train(
        &mut network,
        train_split,
        &mut Method::Neuromod(controller),
        &run.train_spec(run.seed),
        &mut |report| rows.extend_from_slice(&report.rows),
        &mut |_, _| Ok(()),
    )?;
    Ok(rows)
}

pub fn run_id(run: &RunConfig) -> String {
    format!("{}-{}-{}", run.models[0], run.base, run.seed)
}

/// Writes the controller telemetry of one training run to `telemetry.csv`.
pub fn cmd_trace(run: &RunConfig, genome_path: &Path) -> Result<Vec<TelemetryRow>, HarnessError> {
    let genome = load_controller_genome(run, genome_path)?;
    let (train_split, _) = load_datasets(run)?;
    let probe = build_network(&run.model(run.models[0], &train_split), run.seed)?;
    let mut bank = ControllerBank::new(genome, &run.grn_config(), run.base, &probe)?;
    let rows = trace_run(run, &mut bank, &train_split)?;
    let mut buf = Vec::new();
    data::write_telemetry_csv(&mut buf, &run_id(run), run.base, &rows)?;
    data::write_file(&out_path(run, TELEMETRY_FILE), &buf)?;
    Ok(rows)
}

/// Default hyperparameters of the plain optimizer for `base`.
pub fn default_hyper(base: BaseOptimizer) -> Hyper {
    match base {
        BaseOptimizer::Sgd => baseline_presets(BaselineMethod::Sgd, PresetModel::M0),
        BaseOptimizer::Adam => baseline_presets(BaselineMethod::Adam, PresetModel::M0),
    }
}
