//! GRNEAT-style evolution of GRN genomes: small initial networks,
//! speciation by genome distance, crossover that aligns regulators by protein
//! distance, and elitist generational replacement.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::grn::{validate_genome, Genome, GrnConfig, Protein, ProteinKind};

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub population_size: usize,
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
    /// Standard deviation of beta/delta perturbations.
    pub dynamics_mutation_sigma: f64,
    pub rng_seed: u64,
    /// Bounds and affinity settings for produced genomes.
    pub grn: GrnConfig,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 50,
            generations: 50,
            speciation_threshold: 0.45,
            tournament_size: 3,
            elite_count: 1,
            p_crossover: 0.7,
            p_add_protein: 0.1,
            p_remove_protein: 0.05,
            p_mutate_tag: 0.25,
            p_mutate_dynamics: 0.05,
            initial_regulators: 1,
            tag_mutation_sigma: 0.1,
            dynamics_mutation_sigma: 0.2,
            rng_seed: 0,
            grn: GrnConfig::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn check(&self) -> Result<(), EvolveError> {
        let probs = [
            self.p_crossover,
            self.p_add_protein,
            self.p_remove_protein,
            self.p_mutate_tag,
            self.p_mutate_dynamics,
        ];
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        if self.population_size == 0 || self.generations == 0 || self.tournament_size == 0 {
            return bad("population_size, generations and tournament_size must be positive");
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.elite_count > self.population_size {
            return bad("elite_count exceeds population_size");
        }
        if self.speciation_threshold.is_nan()
            || self.speciation_threshold <= 0.0
            || self.tag_mutation_sigma.is_nan()
            || self.tag_mutation_sigma <= 0.0
        {
            return bad("speciation_threshold and tag_mutation_sigma must be positive");
        }
        self.grn
            .check()
            .map_err(|e| EvolveError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("bad evolution config: {0}")]
    Config(String),
    #[error("fitness of individual {individual} in generation {generation} failed: {message}")]
    Fitness {
        generation: usize,
        individual: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
    pub species_id: Option<usize>,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Individual {
            genome,
            fitness: None,
            species_id: None,
        }
    }

    pub fn score(&self) -> f64 {
        match self.fitness {
            Some(f) if !f.is_nan() => f,
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub id: usize,
    pub representative: Genome,
    pub members: Vec<usize>,
}

/// Per-generation evaluation context handed to the fitness function.
pub trait EvalContext: Sync {
    /// Short description of what the generation was evaluated on.
    fn label(&self) -> String;
    fn seed(&self) -> u64;
}

/// Context carrying only a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedContext {
    pub generation: usize,
    pub seed: u64,
}

impl EvalContext for SeedContext {
    fn label(&self) -> String {
        "-".into()
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub species_count: usize,
    pub context: String,
    pub seed: u64,
    pub best_ever: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolutionHistory {
    pub records: Vec<GenerationRecord>,
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    /// Best individual over all generations (first found wins ties).
    pub best: Individual,
    /// Best individual of the last evaluated generation.
    pub final_best: Individual,
    pub history: EvolutionHistory,
    pub population: Vec<Individual>,
}

fn random_protein(kind: ProteinKind, rng: &mut impl Rng) -> Protein {
    Protein::new(kind, rng.random(), rng.random(), rng.random())
}

pub fn random_genome(n_inputs: usize, n_outputs: usize, config: &EvolutionConfig, rng: &mut impl Rng) -> Genome {
    let mut proteins = Vec::with_capacity(n_inputs + n_outputs + config.initial_regulators);
    for (kind, n) in [
        (ProteinKind::Input, n_inputs),
        (ProteinKind::Output, n_outputs),
        (ProteinKind::Regulator, config.initial_regulators),
    ] {
        for _ in 0..n {
            proteins.push(random_protein(kind, rng));
        }
    }
    let g = &config.grn;
    let beta = rng.random_range(g.beta_min..=g.beta_max);
    let delta = rng.random_range(g.delta_min..=g.delta_max);
    Genome::new(proteins, beta, delta)
}

/// L1 distance over the three tags.
pub fn protein_distance(a: &Protein, b: &Protein) -> f64 {
    (a.id - b.id).abs() + (a.enh - b.enh).abs() + (a.inh - b.inh).abs()
}

/// Greedy pairing by ascending distance; ties break on (i, j).
pub fn align(a: &[Protein], b: &[Protein]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = a
        .iter()
        .enumerate()
        .flat_map(|(i, pa)| b.iter().enumerate().map(move |(j, pb)| (protein_distance(pa, pb), i, j)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Cost charged for each regulator left without a partner.
pub const UNMATCHED_PENALTY: f64 = 1.0;

/// Speciation distance. Inputs and outputs are compared index-wise,
/// regulators through [`align`]; the protein part is averaged over the
/// larger genome, then `|d beta| + |d delta|` is added.
pub fn genome_distance(a: &Genome, b: &Genome) -> f64 {
    assert_eq!(a.n_inputs(), b.n_inputs(), "input counts differ");
    assert_eq!(a.n_outputs(), b.n_outputs(), "output counts differ");
    let fixed: f64 = a
        .inputs()
        .iter()
        .zip(b.inputs())
        .chain(a.outputs().iter().zip(b.outputs()))
        .map(|(x, y)| protein_distance(x, y))
        .sum();
    let (ra, rb) = (a.regulators(), b.regulators());
    let pairs = align(ra, rb);
    let matched: f64 = pairs.iter().map(|&(i, j)| protein_distance(&ra[i], &rb[j])).sum();
    let unmatched = (ra.len() + rb.len() - 2 * pairs.len()) as f64;
    let size = a.len().max(b.len()) as f64;
    (fixed + matched + UNMATCHED_PENALTY * unmatched) / size
        + (a.beta - b.beta).abs()
        + (a.delta - b.delta).abs()
}

/// Assigns every individual to the first species whose representative is
/// within `threshold`, creating species as needed. Surviving species get a
/// random member as their new representative.
pub fn speciate(
    population: &mut [Individual],
    threshold: f64,
    previous: &[Species],
    next_id: &mut usize,
    rng: &mut impl Rng,
) -> Vec<Species> {
    let mut species: Vec<Species> = previous
        .iter()
        .map(|s| Species {
            id: s.id,
            representative: s.representative.clone(),
            members: Vec::new(),
        })
        .collect();
    for (idx, ind) in population.iter_mut().enumerate() {
        let found = species
            .iter_mut()
            .find(|s| genome_distance(&s.representative, &ind.genome) <= threshold);
        let sp = match found {
            Some(s) => s,
            None => {
                species.push(Species {
                    id: *next_id,
                    representative: ind.genome.clone(),
                    members: Vec::new(),
                });
                *next_id += 1;
                species.last_mut().expect("just pushed")
            }
        };
        sp.members.push(idx);
        ind.species_id = Some(sp.id);
    }
    species.retain(|s| !s.members.is_empty());
    for s in &mut species {
        let pick = *s.members.choose(rng).expect("non-empty");
        s.representative = population[pick].genome.clone();
    }
    species
}

/// `a` is taken as the fitter parent: its unaligned regulators are kept and
/// the child's regulator order follows it.
pub fn crossover(a: &Genome, b: &Genome, rng: &mut impl Rng) -> Genome {
    assert_eq!(a.n_inputs(), b.n_inputs(), "input counts differ");
    assert_eq!(a.n_outputs(), b.n_outputs(), "output counts differ");
    let mut proteins = Vec::with_capacity(a.len());
    for (pa, pb) in a
        .inputs()
        .iter()
        .zip(b.inputs())
        .chain(a.outputs().iter().zip(b.outputs()))
    {
        proteins.push(if rng.random_bool(0.5) { *pa } else { *pb });
    }
    let (ra, rb) = (a.regulators(), b.regulators());
    let mut partner = vec![None; ra.len()];
    for (i, j) in align(ra, rb) {
        partner[i] = Some(j);
    }
    for (i, pa) in ra.iter().enumerate() {
        proteins.push(match partner[i] {
            Some(j) if rng.random_bool(0.5) => rb[j],
            _ => *pa,
        });
    }
    let beta = if rng.random_bool(0.5) { a.beta } else { b.beta };
    let delta = if rng.random_bool(0.5) { a.delta } else { b.delta };
    Genome::new(proteins, beta, delta)
}

pub fn mutate(genome: &Genome, config: &EvolutionConfig, rng: &mut impl Rng) -> Genome {
    let mut g = genome.clone();
    let bounds = &config.grn;
    if rng.random_bool(config.p_add_protein) {
        let p = random_protein(ProteinKind::Regulator, rng);
        g.proteins_mut().push(p);
    }
    if rng.random_bool(config.p_remove_protein) && g.n_regulators() > 0 {
        let first = g.n_inputs() + g.n_outputs();
        let k = rng.random_range(first..g.len());
        g.proteins_mut().remove(k);
    }
    if rng.random_bool(config.p_mutate_tag) {
        let noise = Normal::new(0.0, config.tag_mutation_sigma).expect("positive sigma");
        let k = rng.random_range(0..g.len());
        let field = rng.random_range(0..3);
        let p = &mut g.proteins_mut()[k];
        let tag = match field {
            0 => &mut p.id,
            1 => &mut p.enh,
            _ => &mut p.inh,
        };
        *tag = (*tag + noise.sample(rng)).clamp(0.0, 1.0);
    }
    if rng.random_bool(config.p_mutate_dynamics) {
        let noise = Normal::new(0.0, config.dynamics_mutation_sigma.max(f64::MIN_POSITIVE))
            .expect("positive sigma");
        if rng.random_bool(0.5) {
            g.beta = (g.beta + noise.sample(rng)).clamp(bounds.beta_min, bounds.beta_max);
        } else {
            g.delta = (g.delta + noise.sample(rng)).clamp(bounds.delta_min, bounds.delta_max);
        }
    }
    g
}

fn tournament<'a>(pop: &'a [Individual], members: &[usize], size: usize, rng: &mut impl Rng) -> &'a Individual {
    let mut best = *members.choose(rng).expect("non-empty species");
    for _ in 1..size {
        let c = *members.choose(rng).expect("non-empty species");
        if pop[c].score() > pop[best].score() {
            best = c;
        }
    }
    &pop[best]
}

/// Largest-remainder split of `total` offspring in proportion to `weights`.
fn allocate(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 && sum.is_finite() {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = shares[i] - shares[i].floor();
        let rj = shares[j] - shares[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Elites are copied unchanged; the rest are bred inside species, each
/// species getting offspring in proportion to its mean fitness.
pub fn next_generation(
    population: &[Individual],
    species: &[Species],
    config: &EvolutionConfig,
    rng: &mut impl Rng,
) -> Vec<Individual> {
    let size = population.len();
    let mut ranked: Vec<usize> = (0..size).collect();
    ranked.sort_by(|&i, &j| population[j].score().total_cmp(&population[i].score()).then(i.cmp(&j)));
    let elites = config.elite_count.min(size);
    let mut next: Vec<Individual> = ranked[..elites]
        .iter()
        .map(|&i| Individual::new(population[i].genome.clone()))
        .collect();
    let remaining = size - elites;
    if remaining == 0 || species.is_empty() {
        return next;
    }

    let floor = population
        .iter()
        .map(Individual::score)
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = species
        .iter()
        .map(|s| {
            let mean = s.members.iter().map(|&i| population[i].score()).sum::<f64>() / s.members.len() as f64;
            if mean.is_finite() {
                mean - floor + 1e-9
            } else {
                0.0
            }
        })
        .collect();

    for (s, &n) in species.iter().zip(&allocate(&weights, remaining)) {
        for _ in 0..n {
            let a = tournament(population, &s.members, config.tournament_size, rng);
            let child = if s.members.len() > 1 && rng.random_bool(config.p_crossover) {
                let b = tournament(population, &s.members, config.tournament_size, rng);
                let (fit, other) = if b.score() > a.score() { (b, a) } else { (a, b) };
                crossover(&fit.genome, &other.genome, rng)
            } else {
                a.genome.clone()
            };
            next.push(Individual::new(mutate(&child, config, rng)));
        }
    }
    next
}

/// Runs the full generational loop. `contexts` produces the evaluation
/// context for each generation; `fitness` must be a pure function of its
/// arguments, since a generation is evaluated in parallel.
pub fn evolve<C, E, Ctx, Fit>(
    n_inputs: usize,
    n_outputs: usize,
    config: &EvolutionConfig,
    mut contexts: Ctx,
    fitness: Fit,
) -> Result<EvolutionOutcome, EvolveError>
where
    C: EvalContext,
    E: fmt::Display + Send,
    Ctx: FnMut(usize) -> C,
    Fit: Fn(&Genome, &C) -> Result<f64, E> + Sync,
{
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut population: Vec<Individual> = (0..config.population_size)
        .map(|_| Individual::new(random_genome(n_inputs, n_outputs, config, &mut rng)))
        .collect();
    let mut species: Vec<Species> = Vec::new();
    let mut next_id = 0;
    let mut history = EvolutionHistory::default();
    let mut best: Option<Individual> = None;

    for generation in 0..config.generations {
        let ctx = contexts(generation);
        let scores: Vec<Result<f64, E>> = population.par_iter().map(|ind| fitness(&ind.genome, &ctx)).collect();
        for (individual, (ind, r)) in population.iter_mut().zip(scores).enumerate() {
            ind.fitness = Some(r.map_err(|e| EvolveError::Fitness {
                generation,
                individual,
                message: e.to_string(),
            })?);
        }
        species = speciate(&mut population, config.speciation_threshold, &species, &mut next_id, &mut rng);

        let gen_best = population
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.score().total_cmp(&b.score()).then(j.cmp(i)))
            .map(|(_, ind)| ind.clone())
            .expect("non-empty population");
        if best.as_ref().is_none_or(|b| gen_best.score() > b.score()) {
            best = Some(gen_best.clone());
        }
        let mean = population.iter().map(Individual::score).sum::<f64>() / population.len() as f64;
        history.records.push(GenerationRecord {
            generation,
            best_fitness: gen_best.score(),
            mean_fitness: mean,
            species_count: species.len(),
            context: ctx.label(),
            seed: ctx.seed(),
            best_ever: best.as_ref().map_or(f64::NEG_INFINITY, Individual::score),
        });

        if generation + 1 < config.generations {
            population = next_generation(&population, &species, config, &mut rng);
        }
    }

    let final_best = population
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.score().total_cmp(&b.score()).then(j.cmp(i)))
        .map(|(_, ind)| ind.clone())
        .expect("non-empty population");
    Ok(EvolutionOutcome {
        best: best.expect("at least one generation"),
        final_best,
        history,
        population,
    })
}

/// Every genome produced must satisfy the GRN invariants.
pub fn all_valid(population: &[Individual], config: &EvolutionConfig) -> bool {
    population
        .iter()
        .all(|i| validate_genome(&i.genome, &config.grn).is_empty())
}
