//! Artificial gene regulatory network: protein genomes, tag affinities,
//! concentration dynamics and the paired-output decoding used to turn output
//! protein concentrations into values in `[0, 1]`.
//!
//! A genome is an ordered list of proteins (inputs first, then outputs, then
//! regulators) plus the two dynamics constants `beta` and `delta`. The
//! influence of protein `j` on protein `i` depends on how close the enhancer
//! (or inhibitor) tag of `j` is to the identifier tag of `i`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role of a protein inside the network. Fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProteinKind {
    Input,
    Output,
    Regulator,
}

impl ProteinKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProteinKind::Input => "input",
            ProteinKind::Output => "output",
            ProteinKind::Regulator => "regulator",
        }
    }
}

impl fmt::Display for ProteinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protein {
    pub id: f64,
    pub enh: f64,
    pub inh: f64,
    pub kind: ProteinKind,
}

impl Protein {
    pub fn new(kind: ProteinKind, id: f64, enh: f64, inh: f64) -> Self {
        Protein { id, enh, inh, kind }
    }

    pub fn tags(&self) -> [f64; 3] {
        [self.id, self.enh, self.inh]
    }
}

/// Evolvable controller description.
///
/// Proteins are kept in canonical order (all inputs, then outputs, then
/// regulators); [`Genome::new`] sorts stably by kind so index identity within
/// each kind is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    proteins: Vec<Protein>,
    pub beta: f64,
    pub delta: f64,
}

impl Genome {
    pub fn new(mut proteins: Vec<Protein>, beta: f64, delta: f64) -> Self {
        proteins.sort_by_key(|p| p.kind);
        Genome {
            proteins,
            beta,
            delta,
        }
    }

    pub fn proteins(&self) -> &[Protein] {
        &self.proteins
    }

    pub fn len(&self) -> usize {
        self.proteins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proteins.is_empty()
    }

    pub fn count(&self, kind: ProteinKind) -> usize {
        self.proteins.iter().filter(|p| p.kind == kind).count()
    }

    pub fn n_inputs(&self) -> usize {
        self.count(ProteinKind::Input)
    }

    pub fn n_outputs(&self) -> usize {
        self.count(ProteinKind::Output)
    }

    pub fn n_regulators(&self) -> usize {
        self.count(ProteinKind::Regulator)
    }

    pub fn inputs(&self) -> &[Protein] {
        &self.proteins[..self.n_inputs()]
    }

    pub fn outputs(&self) -> &[Protein] {
        let start = self.n_inputs();
        &self.proteins[start..start + self.n_outputs()]
    }

    pub fn regulators(&self) -> &[Protein] {
        &self.proteins[self.n_inputs() + self.n_outputs()..]
    }

    /// Mutable access for variation operators. Kinds must not be changed.
    pub(crate) fn proteins_mut(&mut self) -> &mut Vec<Protein> {
        &mut self.proteins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityMode {
    /// `A = -beta * u`.
    PaperLiteral,
    /// `A = beta * (u - u_max)`: a perfect tag match gives the strongest
    /// influence and every exponent is `<= 0`.
    #[default]
    RelativeMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrnConfig {
    pub u_size: f64,
    pub affinity_mode: AffinityMode,
    pub steps_per_query: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for GrnConfig {
    fn default() -> Self {
        GrnConfig {
            u_size: 1.0,
            affinity_mode: AffinityMode::RelativeMax,
            steps_per_query: 1,
            beta_min: 0.05,
            beta_max: 2.0,
            delta_min: 0.05,
            delta_max: 2.0,
        }
    }
}

impl GrnConfig {
    pub fn check(&self) -> Result<(), GrnError> {
        let ok = self.u_size > 0.0
            && self.steps_per_query >= 1
            && self.beta_min <= self.beta_max
            && self.delta_min <= self.delta_max;
        if ok {
            Ok(())
        } else {
            Err(GrnError::BadConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagField {
    Id,
    Enh,
    Inh,
}

impl fmt::Display for TagField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagField::Id => "id",
            TagField::Enh => "enh",
            TagField::Inh => "inh",
        })
    }
}

/// A single broken genome invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TagOutOfRange {
        protein: usize,
        field: TagField,
        value: f64,
    },
    BetaOutOfBounds(f64),
    DeltaOutOfBounds(f64),
    NoInputs,
    NoOutputs,
    NonCanonicalOrder { protein: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TagOutOfRange {
                protein,
                field,
                value,
            } => write!(f, "protein {protein}: {field} = {value} not in [0, 1]"),
            Violation::BetaOutOfBounds(b) => write!(f, "beta = {b} outside configured bounds"),
            Violation::DeltaOutOfBounds(d) => write!(f, "delta = {d} outside configured bounds"),
            Violation::NoInputs => f.write_str("no input proteins"),
            Violation::NoOutputs => f.write_str("no output proteins"),
            Violation::NonCanonicalOrder { protein } => {
                write!(f, "protein {protein} breaks input/output/regulator order")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GrnError {
    #[error("invalid genome: {}", join_violations(.0))]
    InvalidGenome(Vec<Violation>),
    #[error("invalid GRN config: {0}")]
    BadConfig(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Collects every invariant violation; an empty list means the genome is valid.
pub fn validate_genome(genome: &Genome, config: &GrnConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, p) in genome.proteins.iter().enumerate() {
        for (field, value) in [(TagField::Id, p.id), (TagField::Enh, p.enh), (TagField::Inh, p.inh)] {
            if !in_unit(value) {
                out.push(Violation::TagOutOfRange {
                    protein: i,
                    field,
                    value,
                });
            }
        }
        if i > 0 && genome.proteins[i - 1].kind > p.kind {
            out.push(Violation::NonCanonicalOrder { protein: i });
        }
    }
    if !(config.beta_min..=config.beta_max).contains(&genome.beta) {
        out.push(Violation::BetaOutOfBounds(genome.beta));
    }
    if !(config.delta_min..=config.delta_max).contains(&genome.delta) {
        out.push(Violation::DeltaOutOfBounds(genome.delta));
    }
    if genome.n_inputs() == 0 {
        out.push(Violation::NoInputs);
    }
    if genome.n_outputs() == 0 {
        out.push(Violation::NoOutputs);
    }
    out
}

fn ensure_valid(genome: &Genome, config: &GrnConfig) -> Result<(), GrnError> {
    config.check()?;
    let v = validate_genome(genome, config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(GrnError::InvalidGenome(v))
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Enhancing and inhibiting exponents; entry `[i][j]` is the influence of
/// protein `j` on protein `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityPair {
    pub a_plus: Matrix,
    pub a_minus: Matrix,
}

pub fn compute_affinities(genome: &Genome, config: &GrnConfig) -> Result<AffinityPair, GrnError> {
    ensure_valid(genome, config)?;
    let n = genome.len();
    let mut u_plus = Matrix::zeros(n);
    let mut u_minus = Matrix::zeros(n);
    for (i, pi) in genome.proteins.iter().enumerate() {
        for (j, pj) in genome.proteins.iter().enumerate() {
            u_plus.set(i, j, config.u_size - (pj.enh - pi.id).abs());
            u_minus.set(i, j, config.u_size - (pj.inh - pi.id).abs());
        }
    }
    let beta = genome.beta;
    let (a_plus, a_minus) = match config.affinity_mode {
        AffinityMode::PaperLiteral => (u_plus.map(|u| -beta * u), u_minus.map(|u| -beta * u)),
        AffinityMode::RelativeMax => {
            let max_plus = u_plus.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let max_minus = u_minus.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (
                u_plus.map(|u| beta * (u - max_plus)),
                u_minus.map(|u| beta * (u - max_minus)),
            )
        }
    };
    Ok(AffinityPair { a_plus, a_minus })
}

/// Net pairwise influence `S = exp(A+) - exp(A-)`.
pub fn signature_matrix(genome: &Genome, config: &GrnConfig) -> Result<Matrix, GrnError> {
    let aff = compute_affinities(genome, config)?;
    Ok(signature_from(&aff))
}

fn signature_from(aff: &AffinityPair) -> Matrix {
    let n = aff.a_plus.dim();
    let mut s = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            s.set(i, j, aff.a_plus.get(i, j).exp() - aff.a_minus.get(i, j).exp());
        }
    }
    s
}

/// Protein concentrations aligned to genome order.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnState {
    pub concentrations: Vec<f64>,
}

/// Inputs start at 0; outputs and regulators share a uniform unit mass.
pub fn init_state(genome: &Genome) -> GrnState {
    let n_in = genome.n_inputs();
    let rest = genome.len() - n_in;
    let share = if rest > 0 { 1.0 / rest as f64 } else { 0.0 };
    let mut concentrations = vec![share; genome.len()];
    concentrations[..n_in].fill(0.0);
    GrnState { concentrations }
}

/// Writes environment values into the input proteins, clamped to `[0, 1]`.
/// NaN is stored as 0.
pub fn set_inputs(genome: &Genome, state: &mut GrnState, values: &[f64]) -> Result<(), GrnError> {
    let n_in = genome.n_inputs();
    if values.len() != n_in {
        return Err(GrnError::LengthMismatch {
            expected: n_in,
            got: values.len(),
        });
    }
    for (c, &v) in state.concentrations[..n_in].iter_mut().zip(values) {
        *c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
    Ok(())
}

/// Output protein concentrations in genome order.
pub fn read_raw_outputs<'a>(genome: &Genome, state: &'a GrnState) -> &'a [f64] {
    let start = genome.n_inputs();
    &state.concentrations[start..start + genome.n_outputs()]
}

/// Hyperparameter-style decoding: `O_i = |o_2i - o_2i+1| / (o_2i + o_2i+1)`,
/// with a zero-mass pair decoding to 0.
pub fn paired_outputs(raw: &[f64], n_params: usize) -> Result<Vec<f64>, GrnError> {
    if raw.len() != 2 * n_params {
        return Err(GrnError::LengthMismatch {
            expected: 2 * n_params,
            got: raw.len(),
        });
    }
    Ok(raw
        .chunks_exact(2)
        .map(|pair| {
            let sum = pair[0] + pair[1];
            if sum > 0.0 {
                ((pair[0] - pair[1]).abs() / sum).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}

/// A genome with its exponentiated affinities precomputed, ready to step
/// any number of states.
#[derive(Debug, Clone)]
pub struct CompiledGrn {
    genome: Genome,
    steps_per_query: usize,
    enhance: Matrix,
    inhibit: Matrix,
    signature: Matrix,
    n_in: usize,
    n_out: usize,
}

impl CompiledGrn {
    pub fn new(genome: Genome, config: &GrnConfig) -> Result<Self, GrnError> {
        let aff = compute_affinities(&genome, config)?;
        let signature = signature_from(&aff);
        Ok(CompiledGrn {
            n_in: genome.n_inputs(),
            n_out: genome.n_outputs(),
            steps_per_query: config.steps_per_query,
            enhance: aff.a_plus.map(f64::exp),
            inhibit: aff.a_minus.map(f64::exp),
            signature,
            genome,
        })
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn steps_per_query(&self) -> usize {
        self.steps_per_query
    }

    pub fn init_state(&self) -> GrnState {
        init_state(&self.genome)
    }

    fn is_source(&self, j: usize) -> bool {
        j < self.n_in || j >= self.n_in + self.n_out
    }

    /// One explicit Euler step using separate enhancing and inhibiting sums.
    pub fn step(&self, state: &mut GrnState) {
        let n = self.genome.len();
        let inv_n = 1.0 / n as f64;
        let c = &state.concentrations;
        let mut next = c.clone();
        for i in self.n_in..n {
            let (mut g, mut h) = (0.0, 0.0);
            for j in (0..n).filter(|&j| self.is_source(j)) {
                g += c[j] * self.enhance.get(i, j);
                h += c[j] * self.inhibit.get(i, j);
            }
            next[i] = (c[i] + self.genome.delta * (g * inv_n - h * inv_n)).max(0.0);
        }
        state.concentrations = next;
        self.normalize(state);
    }

    /// Same update, evaluated through the signature matrix.
    pub fn step_signature(&self, state: &mut GrnState) {
        let n = self.genome.len();
        let inv_n = 1.0 / n as f64;
        let c = &state.concentrations;
        let mut next = c.clone();
        for i in self.n_in..n {
            let row = self.signature.row(i);
            let net: f64 = (0..n)
                .filter(|&j| self.is_source(j))
                .map(|j| c[j] * row[j])
                .sum();
            next[i] = (c[i] + self.genome.delta * net * inv_n).max(0.0);
        }
        state.concentrations = next;
        self.normalize(state);
    }

    fn normalize(&self, state: &mut GrnState) {
        let rest = &mut state.concentrations[self.n_in..];
        let sum: f64 = rest.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            rest.iter_mut().for_each(|c| *c /= sum);
        } else {
            let share = 1.0 / rest.len() as f64;
            rest.iter_mut().for_each(|c| *c = share);
        }
    }

    /// Sets inputs, runs `steps_per_query` steps and returns the decoded
    /// paired outputs.
    pub fn query(&self, state: &mut GrnState, inputs: &[f64]) -> Result<Vec<f64>, GrnError> {
        set_inputs(&self.genome, state, inputs)?;
        for _ in 0..self.steps_per_query {
            self.step(state);
        }
        paired_outputs(read_raw_outputs(&self.genome, state), self.n_out / 2)
    }
}

/// Single dynamics step from scratch. Prefer [`CompiledGrn`] in loops.
pub fn grn_step(genome: &Genome, state: &mut GrnState, config: &GrnConfig) -> Result<(), GrnError> {
    if state.concentrations.len() != genome.len() {
        return Err(GrnError::LengthMismatch {
            expected: genome.len(),
            got: state.concentrations.len(),
        });
    }
    CompiledGrn::new(genome.clone(), config)?.step(state);
    Ok(())
}
