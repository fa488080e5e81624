//! Small deterministic neural-network engine: 3x3 convolutions, 2x2 max
//! pooling and dense layers, with exact backpropagation into per-layer
//! weight and bias groups.
//!
//! Everything runs on `f64` with a fixed summation order, so forward and
//! backward passes are bitwise reproducible.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("layer {layer}: {reason}")]
    BadSpec { layer: usize, reason: String },
    #[error("empty dataset")]
    Empty,
}

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of one entry along the leading axis.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let r = self.row_len();
        &self.data[i * r..(i + 1) * r]
    }

    /// New tensor built from the given leading-axis entries, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        let r = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * r);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3x3 kernel, stride 1, zero padding 1, followed by ReLU.
    Conv { out_channels: usize },
    /// 2x2 window, stride 2.
    MaxPool,
    /// Fully connected; ReLU unless it is the final layer.
    Dense { out_units: usize },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv { out_channels } => write!(f, "conv {out_channels}"),
            LayerSpec::MaxPool => f.write_str("maxpool"),
            LayerSpec::Dense { out_units } => write!(f, "fc {out_units}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample shape: `[channels, height, width]` or `[features]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub n_out: usize,
}

impl ModelSpec {
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !matches!(l, LayerSpec::MaxPool))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKind {
    Weights,
    Biases,
}

impl GroupKind {
    pub fn short(self) -> &'static str {
        match self {
            GroupKind::Weights => "w",
            GroupKind::Biases => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    /// Index over weighted layers only.
    pub layer_index: usize,
    pub group: GroupKind,
    pub values: Tensor,
}

impl ParamGroup {
    pub fn size(&self) -> usize {
        self.values.len()
    }
}

/// Gradients aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Mse,
}

/// Training targets: class labels, or a dense `(n, n_out)` target matrix.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(&'a Tensor),
}

#[derive(Debug, Clone)]
enum Layer {
    Conv {
        c_in: usize,
        c_out: usize,
        h: usize,
        w: usize,
        group: usize,
    },
    Pool {
        c: usize,
        h: usize,
        w: usize,
    },
    Dense {
        n_in: usize,
        n_out: usize,
        relu: bool,
        group: usize,
    },
}

impl Layer {
    fn in_len(&self) -> usize {
        match *self {
            Layer::Conv { c_in, h, w, .. } => c_in * h * w,
            Layer::Pool { c, h, w } => c * h * w,
            Layer::Dense { n_in, .. } => n_in,
        }
    }

    fn out_len(&self) -> usize {
        match *self {
            Layer::Conv { c_out, h, w, .. } => c_out * h * w,
            Layer::Pool { c, h, w } => c * (h / 2) * (w / 2),
            Layer::Dense { n_out, .. } => n_out,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    params: Vec<ParamGroup>,
}

/// Builds a network with Glorot-uniform weights and zero biases.
pub fn build_network(spec: &ModelSpec, seed: u64) -> Result<Network, NnError> {
    let layers = plan(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    let mut weighted = 0;
    for layer in &layers {
        let (w_shape, b_len, fan_in, fan_out) = match *layer {
            Layer::Conv { c_in, c_out, .. } => (vec![c_out, c_in, 3, 3], c_out, c_in * 9, c_out * 9),
            Layer::Dense { n_in, n_out, .. } => (vec![n_out, n_in], n_out, n_in, n_out),
            Layer::Pool { .. } => continue,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Tensor::zeros(w_shape);
        for v in w.data_mut() {
            *v = rng.random_range(-limit..=limit);
        }
        params.push(ParamGroup {
            layer_index: weighted,
            group: GroupKind::Weights,
            values: w,
        });
        params.push(ParamGroup {
            layer_index: weighted,
            group: GroupKind::Biases,
            values: Tensor::zeros(vec![b_len]),
        });
        weighted += 1;
    }
    Ok(Network {
        spec: spec.clone(),
        layers,
        params,
    })
}

fn plan(spec: &ModelSpec) -> Result<Vec<Layer>, NnError> {
    let bad = |layer: usize, reason: String| NnError::BadSpec { layer, reason };
    match spec.layers.last() {
        Some(LayerSpec::Dense { out_units }) if *out_units == spec.n_out => {}
        _ => {
            return Err(bad(
                spec.layers.len().saturating_sub(1),
                format!("final layer must be fc {}", spec.n_out),
            ))
        }
    }
    if spec.input_shape.is_empty() || spec.input_shape.contains(&0) {
        return Err(bad(0, format!("bad input shape {:?}", spec.input_shape)));
    }
    let mut shape = spec.input_shape.clone();
    let mut out = Vec::with_capacity(spec.layers.len());
    let last = spec.layers.len() - 1;
    for (k, l) in spec.layers.iter().enumerate() {
        let group = 2 * out.iter().filter(|l| !matches!(l, Layer::Pool { .. })).count();
        match *l {
            LayerSpec::Conv { out_channels } => {
                if shape.len() != 3 {
                    return Err(bad(k, format!("conv needs [c, h, w] input, got {shape:?}")));
                }
                if out_channels == 0 {
                    return Err(bad(k, "zero channels".into()));
                }
                out.push(Layer::Conv {
                    c_in: shape[0],
                    c_out: out_channels,
                    h: shape[1],
                    w: shape[2],
                    group,
                });
                shape[0] = out_channels;
            }
            LayerSpec::MaxPool => {
                if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
                    return Err(bad(k, format!("maxpool needs [c, h>=2, w>=2], got {shape:?}")));
                }
                out.push(Layer::Pool {
                    c: shape[0],
                    h: shape[1],
                    w: shape[2],
                });
                shape = vec![shape[0], shape[1] / 2, shape[2] / 2];
            }
            LayerSpec::Dense { out_units } => {
                if out_units == 0 {
                    return Err(bad(k, "zero units".into()));
                }
                out.push(Layer::Dense {
                    n_in: shape.iter().product(),
                    n_out: out_units,
                    relu: k != last,
                    group,
                });
                shape = vec![out_units];
            }
        }
    }
    Ok(out)
}

impl Network {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[ParamGroup] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.params
    }

    pub fn weighted_layer_count(&self) -> usize {
        self.params.len() / 2
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamGroup::size).sum()
    }

    fn input_len(&self) -> usize {
        self.spec.input_shape.iter().product()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, NnError> {
        if batch.shape().len() < 2 || batch.shape()[1..] != self.spec.input_shape[..] {
            return Err(NnError::Shape(format!(
                "batch shape {:?} does not match input {:?}",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        Ok(batch.rows())
    }

    /// Logits with shape `(batch, n_out)`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_batch(batch)?;
        let mut acts = self.forward_all(batch.data(), n);
        let logits = acts.pop().unwrap_or_default();
        Tensor::new(vec![n, self.spec.n_out], logits)
    }

    /// Activations after every layer, `acts[0]` being the input.
    fn forward_all(&self, input: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().expect("input present");
            let (il, ol) = (layer.in_len(), layer.out_len());
            let mut y = vec![0.0; n * ol];
            for s in 0..n {
                self.layer_forward(layer, &x[s * il..(s + 1) * il], &mut y[s * ol..(s + 1) * ol]);
            }
            acts.push(y);
        }
        acts
    }

    fn layer_forward(&self, layer: &Layer, x: &[f64], y: &mut [f64]) {
        match *layer {
            Layer::Conv {
                c_in,
                c_out,
                h,
                w,
                group,
            } => {
                let wt = self.params[group].values.data();
                let b = self.params[group + 1].values.data();
                for co in 0..c_out {
                    let plane = &mut y[co * h * w..(co + 1) * h * w];
                    plane.fill(b[co]);
                    for ci in 0..c_in {
                        let xin = &x[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let k = wt[((co * c_in + ci) * 3 + ky) * 3 + kx];
                                tap_rows(h, w, ky, kx, |o, i, len| {
                                    for (out, &inp) in plane[o..o + len].iter_mut().zip(&xin[i..i + len]) {
                                        *out += k * inp;
                                    }
                                });
                            }
                        }
                    }
                    plane.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            Layer::Pool { c, h, w } => {
                let (oh, ow) = (h / 2, w / 2);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let idx = pool_argmax(x, ch, h, w, oy, ox);
                            y[(ch * oh + oy) * ow + ox] = x[idx];
                        }
                    }
                }
            }
            Layer::Dense {
                n_in,
                n_out,
                relu,
                group,
            } => {
                let wt = self.params[group].values.data();
                let b = self.params[group + 1].values.data();
                for o in 0..n_out {
                    let row = &wt[o * n_in..(o + 1) * n_in];
                    let mut acc = b[o];
                    for (wi, xi) in row.iter().zip(x) {
                        acc += wi * xi;
                    }
                    y[o] = if relu { acc.max(0.0) } else { acc };
                }
            }
        }
    }

    /// Loss value and exact gradients for every parameter group.
    pub fn backward(
        &self,
        batch: &Tensor,
        targets: Targets<'_>,
        loss: LossKind,
    ) -> Result<(f64, Gradients), NnError> {
        let n = self.check_batch(batch)?;
        let acts = self.forward_all(batch.data(), n);
        let logits = Tensor::new(vec![n, self.spec.n_out], acts[acts.len() - 1].clone())?;
        let (value, mut delta) = loss_and_grad(&logits, targets, loss)?;

        let mut grads: Vec<Tensor> = self
            .params
            .iter()
            .map(|p| Tensor::zeros(p.values.shape().to_vec()))
            .collect();

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (il, ol) = (layer.in_len(), layer.out_len());
            let x = &acts[k];
            let y = &acts[k + 1];
            let mut dx = vec![0.0; n * il];
            for s in 0..n {
                let xs = &x[s * il..(s + 1) * il];
                let ys = &y[s * ol..(s + 1) * ol];
                let ds = &mut delta[s * ol..(s + 1) * ol];
                let dxs = &mut dx[s * il..(s + 1) * il];
                self.layer_backward(layer, xs, ys, ds, dxs, &mut grads);
            }
            delta = dx;
        }
        Ok((value, Gradients { groups: grads }))
    }

    fn layer_backward(
        &self,
        layer: &Layer,
        x: &[f64],
        y: &[f64],
        dy: &mut [f64],
        dx: &mut [f64],
        grads: &mut [Tensor],
    ) {
        match *layer {
            Layer::Conv {
                c_in,
                c_out,
                h,
                w,
                group,
            } => {
                for (d, &out) in dy.iter_mut().zip(y) {
                    if out <= 0.0 {
                        *d = 0.0;
                    }
                }
                let wt = self.params[group].values.data();
                let (gw, rest) = grads[group..].split_at_mut(1);
                let gw = gw[0].data_mut();
                let gb = rest[0].data_mut();
                for co in 0..c_out {
                    let g = &dy[co * h * w..(co + 1) * h * w];
                    gb[co] += g.iter().sum::<f64>();
                    for ci in 0..c_in {
                        let xin = &x[ci * h * w..(ci + 1) * h * w];
                        let dxin = &mut dx[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let widx = ((co * c_in + ci) * 3 + ky) * 3 + kx;
                                let k = wt[widx];
                                let mut acc = 0.0;
                                tap_rows(h, w, ky, kx, |o, i, len| {
                                    let grow = &g[o..o + len];
                                    for (gv, xv) in grow.iter().zip(&xin[i..i + len]) {
                                        acc += gv * xv;
                                    }
                                    for (d, gv) in dxin[i..i + len].iter_mut().zip(grow) {
                                        *d += k * gv;
                                    }
                                });
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
            Layer::Pool { c, h, w } => {
                let (oh, ow) = (h / 2, w / 2);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let idx = pool_argmax(x, ch, h, w, oy, ox);
                            dx[idx] += dy[(ch * oh + oy) * ow + ox];
                        }
                    }
                }
            }
            Layer::Dense {
                n_in,
                n_out,
                relu,
                group,
            } => {
                if relu {
                    for (d, &out) in dy.iter_mut().zip(y) {
                        if out <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let wt = self.params[group].values.data();
                let (gw, rest) = grads[group..].split_at_mut(1);
                let gw = gw[0].data_mut();
                let gb = rest[0].data_mut();
                for o in 0..n_out {
                    let g = dy[o];
                    gb[o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let row = &wt[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += g * x[i];
                        dx[i] += row[i] * g;
                    }
                }
            }
        }
    }
}

/// Calls `f(out_offset, in_offset, len)` for each row segment of one 3x3 tap
/// under zero padding of 1.
#[inline]
fn tap_rows(h: usize, w: usize, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (y0, y1) = tap_range(h, ky);
    let (x0, x1) = tap_range(w, kx);
    if x1 <= x0 {
        return;
    }
    for oy in y0..y1 {
        let iy = oy + ky - 1;
        f(oy * w + x0, iy * w + x0 + kx - 1, x1 - x0);
    }
}

/// Output positions `[lo, hi)` whose input `o + k - 1` stays inside `[0, n)`.
#[inline]
fn tap_range(n: usize, k: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { n.saturating_sub(1) } else { n };
    (lo.min(hi), hi)
}

/// Flat index of the window maximum; ties go to the first position in
/// row-major order.
#[inline]
fn pool_argmax(x: &[f64], ch: usize, h: usize, w: usize, oy: usize, ox: usize) -> usize {
    let base = ch * h * w;
    let mut best = base + (2 * oy) * w + 2 * ox;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
        if x[idx] > x[best] {
            best = idx;
        }
    }
    best
}

fn dense_targets(logits: &Tensor, targets: Targets<'_>) -> Result<Vec<f64>, NnError> {
    let (n, k) = (logits.rows(), logits.row_len());
    match targets {
        Targets::Labels(labels) => {
            if labels.len() != n {
                return Err(NnError::Shape(format!("{} labels for {n} samples", labels.len())));
            }
            let mut t = vec![0.0; n * k];
            for (s, &l) in labels.iter().enumerate() {
                if l >= k {
                    return Err(NnError::Shape(format!("label {l} >= {k} outputs")));
                }
                t[s * k + l] = 1.0;
            }
            Ok(t)
        }
        Targets::Values(t) => {
            if t.shape() != logits.shape() {
                return Err(NnError::Shape(format!(
                    "targets {:?} vs logits {:?}",
                    t.shape(),
                    logits.shape()
                )));
            }
            Ok(t.data().to_vec())
        }
    }
}

/// Loss and its gradient with respect to the logits.
pub fn loss_and_grad(
    logits: &Tensor,
    targets: Targets<'_>,
    loss: LossKind,
) -> Result<(f64, Vec<f64>), NnError> {
    let (n, k) = (logits.rows(), logits.row_len());
    if n == 0 {
        return Err(NnError::Empty);
    }
    let t = dense_targets(logits, targets)?;
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; n * k];
    let mut total = 0.0;
    for s in 0..n {
        let z = logits.row(s);
        let ts = &t[s * k..(s + 1) * k];
        let gs = &mut grad[s * k..(s + 1) * k];
        match loss {
            LossKind::Mse => {
                for j in 0..k {
                    let e = z[j] - ts[j];
                    total += e * e;
                    gs[j] = 2.0 * e * inv_n;
                }
            }
            LossKind::CrossEntropy => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = z.iter().map(|&v| (v - m).exp()).sum();
                let log_z = m + sum_exp.ln();
                let mass: f64 = ts.iter().sum();
                for j in 0..k {
                    let log_p = z[j] - log_z;
                    total -= ts[j] * log_p;
                    gs[j] = (log_p.exp() * mass - ts[j]) * inv_n;
                }
            }
        }
    }
    Ok((total * inv_n, grad))
}

/// Mean over samples of the summed squared error.
pub fn loss_mse(logits: &Tensor, one_hot: &Tensor) -> Result<f64, NnError> {
    loss_and_grad(logits, Targets::Values(one_hot), LossKind::Mse).map(|r| r.0)
}

/// Mean negative log-softmax probability of the target class.
pub fn loss_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    loss_and_grad(logits, Targets::Labels(labels), LossKind::CrossEntropy).map(|r| r.0)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

const EVAL_BATCH: usize = 256;

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy(network: &Network, inputs: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let n = inputs.rows();
    if n == 0 || labels.is_empty() {
        return Err(NnError::Empty);
    }
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {n} samples", labels.len())));
    }
    if inputs.row_len() != network.input_len() {
        return Err(NnError::Shape("input size mismatch".into()));
    }
    let mut correct = 0usize;
    for start in (0..n).step_by(EVAL_BATCH) {
        let idx: Vec<usize> = (start..(start + EVAL_BATCH).min(n)).collect();
        let logits = network.forward(&inputs.gather_rows(&idx))?;
        for (r, &i) in idx.iter().enumerate() {
            if argmax(logits.row(r)) == labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spec(input: usize, layers: &[usize]) -> ModelSpec {
        ModelSpec {
            name: "mlp".into(),
            input_shape: vec![input],
            layers: layers.iter().map(|&u| LayerSpec::Dense { out_units: u }).collect(),
            n_out: *layers.last().unwrap(),
        }
    }

    fn m0_small() -> ModelSpec {
        use LayerSpec::*;
        ModelSpec {
            name: "m0-small".into(),
            input_shape: vec![3, 8, 8],
            layers: vec![
                Conv { out_channels: 4 },
                Conv { out_channels: 4 },
                MaxPool,
                Conv { out_channels: 8 },
                Conv { out_channels: 8 },
                MaxPool,
                Dense { out_units: 16 },
                Dense { out_units: 10 },
            ],
            n_out: 10,
        }
    }

    #[test]
    fn build_counts_and_init() {
        let net = build_network(&m0_small(), 3).unwrap();
        assert_eq!(net.weighted_layer_count(), 6);
        assert_eq!(net.params().len(), 12);
        for p in net.params().iter().filter(|p| p.group == GroupKind::Biases) {
            assert!(p.values.data().iter().all(|&b| b == 0.0));
        }
        let again = build_network(&m0_small(), 3).unwrap();
        assert_eq!(net.params(), again.params());
        let other = build_network(&m0_small(), 4).unwrap();
        assert_ne!(net.params(), other.params());
    }

    #[test]
    fn bad_specs_report_layer() {
        let mut s = dense_spec(4, &[3, 2]);
        s.n_out = 5;
        assert!(matches!(build_network(&s, 0), Err(NnError::BadSpec { layer: 1, .. })));
        let s = ModelSpec {
            name: "x".into(),
            input_shape: vec![4],
            layers: vec![LayerSpec::Conv { out_channels: 2 }, LayerSpec::Dense { out_units: 2 }],
            n_out: 2,
        };
        assert!(matches!(build_network(&s, 0), Err(NnError::BadSpec { layer: 0, .. })));
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let mut net = build_network(&m0_small(), 1).unwrap();
        for p in net.params_mut() {
            p.values.data_mut().fill(0.0);
        }
        let x = Tensor::new(vec![2, 3, 8, 8], (0..384).map(|i| i as f64 / 384.0).collect()).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.shape(), &[2, 10]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_passes_input() {
        let mut net = build_network(&dense_spec(3, &[3]), 0).unwrap();
        let w = net.params_mut()[0].values.data_mut();
        w.fill(0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::new(vec![1, 3], vec![0.5, -2.0, 7.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let net = build_network(&dense_spec(3, &[2]), 0).unwrap();
        let x = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
        assert!(net.forward(&x).is_err());
    }

    #[test]
    fn loss_examples() {
        let t = Tensor::new(vec![2, 3], vec![0., 1., 0., 1., 0., 0.]).unwrap();
        assert_eq!(loss_mse(&t, &t).unwrap(), 0.0);
        let z = Tensor::new(vec![2, 4], vec![0.3; 8]).unwrap();
        let ce = loss_cross_entropy(&z, &[0, 3]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-15);
        // hand-computed: logits rows (1, 0) and (0, 2), labels 0 and 0
        // CE = (ln(1 + e^-1) + ln(1 + e^2)) / 2
        let z = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let expected = ((1.0 + (-1f64).exp()).ln() + (1.0 + 2f64.exp()).ln()) / 2.0;
        assert!((loss_cross_entropy(&z, &[0, 0]).unwrap() - expected).abs() < 1e-15);
        // MSE against one-hot (1,0),(1,0): ((0)^2 + 0^2 + 1 + 4) / 2 = 2.5
        let oh = Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(loss_mse(&z, &oh).unwrap(), 2.5);
    }

    #[test]
    fn single_linear_neuron_closed_form() {
        let mut net = build_network(&dense_spec(1, &[1]), 0).unwrap();
        let w = 0.7;
        net.params_mut()[0].values.data_mut()[0] = w;
        let xs = [0.5, -1.0, 2.0];
        let ts = [1.0, 0.0, -0.5];
        let batch = Tensor::new(vec![3, 1], xs.to_vec()).unwrap();
        let targets = Tensor::new(vec![3, 1], ts.to_vec()).unwrap();
        let (_, g) = net.backward(&batch, Targets::Values(&targets), LossKind::Mse).unwrap();
        let expected: f64 = xs.iter().zip(&ts).map(|(x, t)| 2.0 * (w * x - t) * x / 3.0).sum();
        assert!((g.groups[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let mut net = build_network(&dense_spec(2, &[2]), 0).unwrap();
        let w = net.params_mut()[0].values.data_mut();
        w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (l, g) = net.backward(&x, Targets::Values(&x), LossKind::Mse).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.groups.iter().all(|t| t.data().iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn accuracy_cases() {
        let mut net = build_network(&dense_spec(3, &[3]), 0).unwrap();
        let w = net.params_mut()[0].values.data_mut();
        w.fill(0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(accuracy(&net, &x, &[0, 1, 2]).unwrap(), 1.0);
        assert!((accuracy(&net, &x, &[0, 1, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        // constant predictor: ties resolve to class 0
        let mut net = build_network(&dense_spec(1, &[10]), 0).unwrap();
        for p in net.params_mut() {
            p.values.data_mut().fill(0.0);
        }
        let x = Tensor::zeros(vec![100, 1]);
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        assert!((accuracy(&net, &x, &labels).unwrap() - 0.1).abs() < 1e-15);

        let empty = Tensor::zeros(vec![0, 1]);
        assert!(matches!(accuracy(&net, &empty, &[]), Err(NnError::Empty)));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
