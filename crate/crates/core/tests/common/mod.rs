//! Helpers shared by the integration tests: a scalar reference GRN and
//! random instance generators.
#![allow(dead_code, clippy::excessive_precision, clippy::needless_range_loop)]

use agrn::grn::{Genome, Protein, ProteinKind};
use agrn::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference protein: kind code 0 input, 1 output, 2 regulator.
#[derive(Clone, Copy)]
pub struct RefProtein {
    pub kind: u8,
    pub id: f64,
    pub enh: f64,
    pub inh: f64,
}

/// Straight-line evaluation of the affinity and dynamics equations, one
/// scalar at a time, with no shared code with the library.
pub struct ReferenceGrn {
    pub proteins: Vec<RefProtein>,
    pub beta: f64,
    pub delta: f64,
    pub u_size: f64,
    pub relative: bool,
}

impl ReferenceGrn {
    pub fn from_genome(g: &Genome, relative: bool) -> Self {
        let proteins = g
            .proteins()
            .iter()
            .map(|p| RefProtein {
                kind: match p.kind {
                    ProteinKind::Input => 0,
                    ProteinKind::Output => 1,
                    ProteinKind::Regulator => 2,
                },
                id: p.id,
                enh: p.enh,
                inh: p.inh,
            })
            .collect();
        ReferenceGrn {
            proteins,
            beta: g.beta,
            delta: g.delta,
            u_size: 1.0,
            relative,
        }
    }

    fn u(&self, i: usize, j: usize, enhancing: bool) -> f64 {
        let pj = self.proteins[j];
        let tag = if enhancing { pj.enh } else { pj.inh };
        self.u_size - (tag - self.proteins[i].id).abs()
    }

    /// `A+[i][j]` (enhancing) or `A-[i][j]`.
    pub fn affinity(&self, i: usize, j: usize, enhancing: bool) -> f64 {
        let n = self.proteins.len();
        if self.relative {
            let mut max = f64::NEG_INFINITY;
            for a in 0..n {
                for b in 0..n {
                    let v = self.u(a, b, enhancing);
                    if v > max {
                        max = v;
                    }
                }
            }
            self.beta * (self.u(i, j, enhancing) - max)
        } else {
            -self.beta * self.u(i, j, enhancing)
        }
    }

    pub fn signature(&self, i: usize, j: usize) -> f64 {
        self.affinity(i, j, true).exp() - self.affinity(i, j, false).exp()
    }

    pub fn step(&self, c: &[f64]) -> Vec<f64> {
        let n = self.proteins.len();
        let mut next = c.to_vec();
        for i in 0..n {
            if self.proteins[i].kind == 0 {
                continue;
            }
            let mut g = 0.0;
            let mut h = 0.0;
            for j in 0..n {
                if self.proteins[j].kind == 1 {
                    continue;
                }
                g += c[j] * self.affinity(i, j, true).exp();
                h += c[j] * self.affinity(i, j, false).exp();
            }
            g /= n as f64;
            h /= n as f64;
            let v = c[i] + self.delta * (g - h);
            next[i] = if v > 0.0 { v } else { 0.0 };
        }
        let mut sum = 0.0;
        for i in 0..n {
            if self.proteins[i].kind != 0 {
                sum += next[i];
            }
        }
        let rest = self.proteins.iter().filter(|p| p.kind != 0).count();
        for i in 0..n {
            if self.proteins[i].kind != 0 {
                next[i] = if sum > 0.0 { next[i] / sum } else { 1.0 / rest as f64 };
            }
        }
        next
    }
}

/// The three-protein hand example: one input, one output, one regulator.
pub fn three_protein_genome() -> Genome {
    Genome::new(
        vec![
            Protein::new(ProteinKind::Input, 0.1, 0.3, 0.7),
            Protein::new(ProteinKind::Output, 0.5, 0.2, 0.9),
            Protein::new(ProteinKind::Regulator, 0.8, 0.45, 0.05),
        ],
        1.0,
        1.0,
    )
}

/// Random valid genome with the given counts; beta and delta in the default bounds.
pub fn random_genome(r: &mut impl Rng, n_in: usize, n_out: usize, n_reg: usize) -> Genome {
    let mut p = Vec::new();
    for (kind, count) in [
        (ProteinKind::Input, n_in),
        (ProteinKind::Output, n_out),
        (ProteinKind::Regulator, n_reg),
    ] {
        for _ in 0..count {
            p.push(Protein::new(kind, r.random(), r.random(), r.random()));
        }
    }
    Genome::new(p, r.random_range(0.05..=2.0), r.random_range(0.05..=2.0))
}

pub fn random_tensor(r: &mut impl Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
}

pub fn random_labels(r: &mut impl Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..classes)).collect()
}

use agrn::nn::{build_network, loss_and_grad, LayerSpec, LossKind, ModelSpec, Network, Targets};

/// Small architectures covering every layer kind.
pub fn gradient_models() -> Vec<ModelSpec> {
    let fc = |n| LayerSpec::Dense { out_units: n };
    let conv = |c| LayerSpec::Conv { out_channels: c };
    vec![
        ModelSpec {
            name: "dense".into(),
            input_shape: vec![5],
            layers: vec![fc(4), fc(3)],
            n_out: 3,
        },
        ModelSpec {
            name: "conv".into(),
            input_shape: vec![2, 4, 4],
            layers: vec![conv(3), fc(3)],
            n_out: 3,
        },
        ModelSpec {
            name: "conv-pool".into(),
            input_shape: vec![2, 4, 5],
            layers: vec![conv(3), LayerSpec::MaxPool, conv(2), fc(3)],
            n_out: 3,
        },
    ]
}

/// Network with every parameter (biases included) drawn at random.
pub fn randomized_network(spec: &ModelSpec, seed: u64) -> Network {
    let mut net = build_network(spec, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for p in net.params_mut() {
        for v in p.values.data_mut() {
            *v = r.random_range(-0.6..0.6);
        }
    }
    net
}

/// Largest relative discrepancy between backpropagated and central
/// finite-difference gradients over every parameter.
pub fn max_gradient_error(net: &mut Network, x: &Tensor, targets: Targets<'_>, loss: LossKind, h: f64) -> f64 {
    let (_, grads) = net.backward(x, targets, loss).unwrap();
    let mut worst: f64 = 0.0;
    for gi in 0..grads.groups.len() {
        for k in 0..grads.groups[gi].len() {
            let orig = net.params()[gi].values.data()[k];
            let mut eval = |v: f64| {
                net.params_mut()[gi].values.data_mut()[k] = v;
                let logits = net.forward(x).unwrap();
                loss_and_grad(&logits, targets, loss).unwrap().0
            };
            let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            net.params_mut()[gi].values.data_mut()[k] = orig;
            let analytic = grads.groups[gi].data()[k];
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-8 {
                // Both vanish; compare absolutely.
                (analytic - numeric).abs() / 1e-8
            } else {
                (analytic - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// Input batch and both target encodings for a gradient instance.
pub fn gradient_instance(spec: &ModelSpec, seed: u64) -> (Tensor, Vec<usize>, Tensor) {
    let mut r = rng(seed);
    let n = 3;
    let mut shape = vec![n];
    shape.extend(&spec.input_shape);
    let x = random_tensor(&mut r, shape, 1.0);
    let labels = random_labels(&mut r, n, spec.n_out);
    let values = random_tensor(&mut r, vec![n, spec.n_out], 1.0);
    (x, labels, values)
}

use agrn::grn::{CompiledGrn, GrnConfig};

pub const TRACK_INPUTS: usize = 13;
pub const TRACK_TARGET: [f64; 4] = [0.1, 0.9, 0.35, 0.6];

/// Output-tracking task: drive the network with a fixed input pattern for
/// 25 queries and score how close the decoded outputs end up to
/// [`TRACK_TARGET`]. Higher is better, 0 is perfect.
pub fn tracking_fitness(genome: &Genome) -> f64 {
    let grn = CompiledGrn::new(genome.clone(), &GrnConfig::default()).unwrap();
    let mut state = grn.init_state();
    let x: Vec<f64> = (0..TRACK_INPUTS).map(|i| i as f64 / TRACK_INPUTS as f64).collect();
    let mut out = Vec::new();
    for _ in 0..25 {
        out = grn.query(&mut state, &x).unwrap();
    }
    -out.iter().zip(TRACK_TARGET).map(|(o, t)| (o - t).abs()).sum::<f64>()
}

pub fn tracking_outputs() -> usize {
    2 * TRACK_TARGET.len()
}

/// Hand example values for [`three_protein_genome`] with inputs (1.0).
pub const PLUS_LITERAL: [[f64; 3]; 3] = [[-0.8, -0.9, -0.65], [-0.8, -0.7, -0.95], [-0.5, -0.4, -0.65]];
pub const MINUS_LITERAL: [[f64; 3]; 3] = [[-0.4, -0.2, -0.95], [-0.8, -0.6, -0.55], [-0.9, -0.9, -0.25]];
pub const PLUS_RELATIVE: [[f64; 3]; 3] = [[-0.15, -0.05, -0.3], [-0.15, -0.25, 0.0], [-0.45, -0.55, -0.3]];
pub const MINUS_RELATIVE: [[f64; 3]; 3] = [[-0.55, -0.75, 0.0], [-0.15, -0.35, -0.4], [-0.05, -0.05, -0.7]];

// Evaluated with 50-digit arithmetic outside this code base.
pub const SIG_LITERAL: [[f64; 3]; 3] = [
    [-0.22099108191841770931, -0.41216109333738274679, 0.13530475330651484098],
    [0.0, -0.052226332302616917924, -0.1902087869259854884],
    [0.19996099997203431172, 0.26375038629504018886, -0.25675500631038882035],
];
pub const SIG_RELATIVE: [[f64; 3]; 3] = [
    [0.28375816604457111191, 0.47886287175969930195, -0.25918177931828213393],
    [0.0, 0.07411269335269143389, 0.32967995396436069926],
    [-0.31360127287894071595, -0.37427961412022731377, 0.24423291689030835136],
];
pub const STEP_LITERAL: [f64; 3] = [1.0, 0.47199914991978080698, 0.52800085008021919302];
pub const STEP_RELATIVE: [f64; 3] = [1.0, 0.55991964833265481278, 0.44008035166734518722];

