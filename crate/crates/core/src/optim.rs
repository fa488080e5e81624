//! SGD with momentum and Adam, applied to one parameter group at a time.
//!
//! Hyperparameters are passed on every call, so a controller may change them
//! between updates while the optimizer state (velocity, moments, step count)
//! carries on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: params {params}, grads {grads}, state {state}")]
    Shape {
        params: usize,
        grads: usize,
        state: usize,
    },
    #[error("no preset for {method} on {model}")]
    NoPreset { method: String, model: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub eta: f64,
    pub alpha: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl SgdHyper {
    /// Framework defaults: plain SGD, no momentum.
    pub const DEFAULT: SgdHyper = SgdHyper {
        eta: 0.01,
        alpha: 0.0,
        decay: 0.0,
    };
}

impl AdamHyper {
    pub const DEFAULT: AdamHyper = AdamHyper {
        eta: 0.001,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
        decay: 0.0,
    };
}

/// Hyperparameters for either base optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    Sgd(SgdHyper),
    Adam(AdamHyper),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<f64>,
    pub step_count: u64,
}

impl SgdState {
    pub fn new(len: usize) -> Self {
        SgdState {
            velocity: vec![0.0; len],
            step_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Optimizer state for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub enum OptState {
    Sgd(SgdState),
    Adam(AdamState),
}

/// `eta / (1 + decay * t)` with `t` the number of updates already applied.
pub fn decayed_rate(eta: f64, decay: f64, t: u64) -> f64 {
    eta / (1.0 + decay * t as f64)
}

fn check(params: usize, grads: usize, state: usize) -> Result<(), OptimError> {
    if params == grads && grads == state {
        Ok(())
    } else {
        Err(OptimError::Shape {
            params,
            grads,
            state,
        })
    }
}

pub fn sgd_step(
    params: &mut [f64],
    state: &mut SgdState,
    grads: &[f64],
    hyper: &SgdHyper,
) -> Result<(), OptimError> {
    check(params.len(), grads.len(), state.velocity.len())?;
    let eta = decayed_rate(hyper.eta, hyper.decay, state.step_count);
    for ((p, v), &g) in params.iter_mut().zip(&mut state.velocity).zip(grads) {
        *v = hyper.alpha * *v - eta * g;
        *p += *v;
    }
    state.step_count += 1;
    Ok(())
}

/// Bias-corrected Adam: `p -= eta_t * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut [f64],
    state: &mut AdamState,
    grads: &[f64],
    hyper: &AdamHyper,
) -> Result<(), OptimError> {
    check(params.len(), grads.len(), state.m.len())?;
    check(params.len(), grads.len(), state.v.len())?;
    let eta = decayed_rate(hyper.eta, hyper.decay, state.t);
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, m), v), &g) in params
        .iter_mut()
        .zip(&mut state.m)
        .zip(&mut state.v)
        .zip(grads)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= eta * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
    Ok(())
}

/// Applies whichever optimizer matches the state. Mismatched pairs are a
/// shape error.
pub fn apply(
    params: &mut [f64],
    state: &mut OptState,
    grads: &[f64],
    hyper: &Hyper,
) -> Result<(), OptimError> {
    match (state, hyper) {
        (OptState::Sgd(s), Hyper::Sgd(h)) => sgd_step(params, s, grads, h),
        (OptState::Adam(s), Hyper::Adam(h)) => adam_step(params, s, grads, h),
        (s, _) => Err(OptimError::Shape {
            params: params.len(),
            grads: grads.len(),
            state: match s {
                OptState::Sgd(s) => s.velocity.len(),
                OptState::Adam(s) => s.m.len(),
            },
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    Sgd,
    SgdStar,
    Adam,
    AdamStar,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] = [
        BaselineMethod::Sgd,
        BaselineMethod::SgdStar,
        BaselineMethod::Adam,
        BaselineMethod::AdamStar,
    ];
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::Sgd => "SGD",
            BaselineMethod::SgdStar => "SGD*",
            BaselineMethod::Adam => "Adam",
            BaselineMethod::AdamStar => "Adam*",
        })
    }
}

impl FromStr for BaselineMethod {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(BaselineMethod::Sgd),
            "sgd*" => Ok(BaselineMethod::SgdStar),
            "adam" => Ok(BaselineMethod::Adam),
            "adam*" => Ok(BaselineMethod::AdamStar),
            _ => Err(OptimError::NoPreset {
                method: s.to_string(),
                model: "-".into(),
            }),
        }
    }
}

/// The three reference architectures the presets were tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetModel {
    M0,
    M1,
    M2,
}

impl fmt::Display for PresetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetModel::M0 => "m0",
            PresetModel::M1 => "m1",
            PresetModel::M2 => "m2",
        })
    }
}

/// Framework defaults and grid-searched settings per model.
pub fn baseline_presets(method: BaselineMethod, model: PresetModel) -> Hyper {
    use PresetModel::*;
    let sgd = |eta, alpha, decay| Hyper::Sgd(SgdHyper { eta, alpha, decay });
    let adam = |eta, beta1, beta2, epsilon, decay| {
        Hyper::Adam(AdamHyper {
            eta,
            beta1,
            beta2,
            epsilon,
            decay,
        })
    };
    match (method, model) {
        (BaselineMethod::Sgd, _) => Hyper::Sgd(SgdHyper::DEFAULT),
        (BaselineMethod::SgdStar, M0) => sgd(0.01, 0.75, 0.0),
        (BaselineMethod::SgdStar, M1) => sgd(0.1, 0.0, 0.001),
        (BaselineMethod::SgdStar, M2) => sgd(0.01, 0.5, 0.0),
        (BaselineMethod::Adam, _) => Hyper::Adam(AdamHyper::DEFAULT),
        (BaselineMethod::AdamStar, M0) => adam(0.001, 0.9, 0.999, 0.001, 0.0),
        (BaselineMethod::AdamStar, M1) => adam(0.1, 0.99, 0.9, 1.0, 0.001),
        (BaselineMethod::AdamStar, M2) => adam(0.1, 0.99, 0.999, 1.0, 0.001),
    }
}

/// String-keyed preset lookup, as used by the CLI.
pub fn lookup_preset(method: &str, model: &str) -> Result<Hyper, OptimError> {
    let m = method.parse::<BaselineMethod>()?;
    let pm = match model {
        "m0" => PresetModel::M0,
        "m1" => PresetModel::M1,
        "m2" => PresetModel::M2,
        _ => {
            return Err(OptimError::NoPreset {
                method: method.into(),
                model: model.into(),
            })
        }
    };
    Ok(baseline_presets(m, pm))
}
