//! Built-in architectures.
//!
//! The convolutional nets follow their layer tables literally, including the
//! width of the fully-connected head. Two 2x2 poolings divide the spatial side
//! by four, so `conv_cifar`'s `128*4*4` head only fits 16x16 inputs and
//! `conv_stl`'s `16*20*20` head only fits 80x80 inputs; any other input size
//! fails shape validation in [`Network::new`](crate::Network::new) rather than
//! being silently adapted. Use [`conv_net`] for a head sized to the input.

use serde::{Deserialize, Serialize};

use crate::nn::layer::LayerKind;
use crate::nn::network::LayerSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn kind(self) -> LayerKind {
        match self {
            Activation::Relu => LayerKind::Relu,
            Activation::Tanh => LayerKind::Tanh,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Fully-connected net with the given widths (input first, classes last).
/// Dense layers are named `fc1`, `fc2`, ...
pub fn mlp(widths: &[usize], act: Activation) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        if i > 0 {
            specs.push(LayerSpec::new(format!("{}{i}", act.tag()), act.kind()));
        }
        specs.push(LayerSpec::new(format!("fc{}", i + 1), LayerKind::Dense { inputs: w[0], outputs: w[1] }));
    }
    specs
}

/// `784-784-10`
pub fn mlp2(act: Activation) -> Vec<LayerSpec> {
    mlp(&[784, 784, 10], act)
}

/// `784-784-784-10`
pub fn mlp3(act: Activation) -> Vec<LayerSpec> {
    mlp(&[784, 784, 784, 10], act)
}

/// Five 3x3 convolutions in two pooled stages followed by a three-layer head.
/// Convolutions are `conv1..conv5`, head layers `fc1..fc3`.
pub fn conv_net(
    in_channels: usize,
    stage_channels: (usize, usize),
    flat_inputs: usize,
    head_width: usize,
    classes: usize,
    act: Activation,
) -> Vec<LayerSpec> {
    let (c1, c2) = stage_channels;
    let mut specs = Vec::new();
    let mut n = 0;
    let mut conv = |specs: &mut Vec<LayerSpec>, cin, cout| {
        n += 1;
        specs.push(LayerSpec::new(format!("conv{n}"), LayerKind::Conv3x3 { in_channels: cin, out_channels: cout }));
        specs.push(LayerSpec::new(format!("{}c{n}", act.tag()), act.kind()));
    };
    conv(&mut specs, in_channels, c1);
    conv(&mut specs, c1, c1);
    specs.push(LayerSpec::new("pool1", LayerKind::MaxPool2x2));
    conv(&mut specs, c1, c2);
    conv(&mut specs, c2, c2);
    conv(&mut specs, c2, c2);
    specs.push(LayerSpec::new("pool2", LayerKind::MaxPool2x2));
    specs.push(LayerSpec::new("flatten", LayerKind::Flatten));
    specs.push(LayerSpec::new("fc1", LayerKind::Dense { inputs: flat_inputs, outputs: head_width }));
    specs.push(LayerSpec::new(format!("{}f1", act.tag()), act.kind()));
    specs.push(LayerSpec::new("fc2", LayerKind::Dense { inputs: head_width, outputs: head_width }));
    specs.push(LayerSpec::new(format!("{}f2", act.tag()), act.kind()));
    specs.push(LayerSpec::new("fc3", LayerKind::Dense { inputs: head_width, outputs: classes }));
    specs
}

/// 3->64->64, pool, 64->128->128->128, pool, 2048-2048-10 head.
pub fn conv_cifar(act: Activation) -> Vec<LayerSpec> {
    conv_net(3, (64, 128), 128 * 4 * 4, 128 * 4 * 4, 10, act)
}

/// 3->8->8, pool, 8->16->16->16, pool, 6400-6400-10 head.
pub fn conv_stl(act: Activation) -> Vec<LayerSpec> {
    conv_net(3, (8, 16), 16 * 20 * 20, 16 * 20 * 20, 10, act)
}
