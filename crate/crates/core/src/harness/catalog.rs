//! Reference architectures, at their published size and scaled down.

use serde::{Deserialize, Serialize};

use crate::nn::{LayerSpec, ModelSpec};
use crate::optim::PresetModel;

/// Channel and unit divisor applied at desk scale.
pub const DESK_DIVISOR: usize = 4;
/// Smallest width a desk-scale layer is reduced to.
pub const DESK_MIN_WIDTH: usize = 8;

pub const CIFAR_SHAPE: [usize; 3] = [3, 32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    #[default]
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale '{other}'")),
        }
    }
}

fn conv(c: usize) -> LayerSpec {
    LayerSpec::Conv { out_channels: c }
}

fn fc(n: usize) -> LayerSpec {
    LayerSpec::Dense { out_units: n }
}

const POOL: LayerSpec = LayerSpec::MaxPool;

/// Hidden layers of the image models; the output layer is appended later.
fn image_layers(model: PresetModel) -> Vec<LayerSpec> {
    match model {
        PresetModel::M0 => vec![conv(32), conv(32), POOL, conv(64), conv(64), POOL, fc(512)],
        PresetModel::M1 => vec![
            conv(64),
            POOL,
            conv(128),
            POOL,
            conv(256),
            POOL,
            conv(512),
            POOL,
            fc(4096),
            fc(4096),
        ],
        PresetModel::M2 => vec![
            conv(64),
            POOL,
            conv(128),
            POOL,
            conv(256),
            POOL,
            conv(512),
            POOL,
            conv(512),
            POOL,
            fc(4096),
            fc(4096),
        ],
    }
}

/// Hidden layers of the fully connected stand-ins used on vector data.
fn vector_layers(model: PresetModel) -> Vec<LayerSpec> {
    match model {
        PresetModel::M0 => vec![fc(64)],
        PresetModel::M1 => vec![fc(128), fc(128)],
        PresetModel::M2 => vec![fc(128), fc(128), fc(128)],
    }
}

fn shrink(layer: LayerSpec) -> LayerSpec {
    let w = |n: usize| (n / DESK_DIVISOR).max(DESK_MIN_WIDTH);
    match layer {
        LayerSpec::Conv { out_channels } => conv(w(out_channels)),
        LayerSpec::Dense { out_units } => fc(w(out_units)),
        LayerSpec::MaxPool => POOL,
    }
}

/// The architecture for `model` on inputs of `input_shape` (`[c, h, w]` for
/// images, `[d]` for vectors) with `n_out` classes.
pub fn model_spec(model: PresetModel, scale: Scale, input_shape: &[usize], n_out: usize) -> ModelSpec {
    let image = input_shape.len() == 3;
    let mut layers = if image {
        image_layers(model)
    } else {
        vector_layers(model)
    };
    if scale == Scale::Desk {
        layers = layers.into_iter().map(shrink).collect();
    }
    layers.push(fc(n_out));
    let name = match (image, scale) {
        (true, Scale::Paper) => model.to_string(),
        (true, Scale::Desk) => format!("{model}s"),
        (false, Scale::Paper) => format!("v{}", &model.to_string()[1..]),
        (false, Scale::Desk) => format!("v{}s", &model.to_string()[1..]),
    };
    ModelSpec {
        name,
        input_shape: input_shape.to_vec(),
        layers,
        n_out,
    }
}

/// The three image models for ten-class 32x32 colour inputs.
pub fn model_catalog(scale: Scale) -> Vec<ModelSpec> {
    [PresetModel::M0, PresetModel::M1, PresetModel::M2]
        .into_iter()
        .map(|m| model_spec(m, scale, &CIFAR_SHAPE, 10))
        .collect()
}
