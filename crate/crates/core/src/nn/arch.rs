//! Architecture registry addressed by string id.

use super::layers::{LayerSpec, Shape3};
use super::model::Architecture;
use super::NnError;

pub const CONV_SMALL: &str = "conv-small";
pub const MLP_SMALL: &str = "mlp-small";

/// Grid left after the leading pooling stem (subcarriers x packets).
const STEM_TARGET: (usize, usize) = (6, 50);
const CONV_CHANNELS: [usize; 3] = [8, 16, 32];
const MLP_HIDDEN: usize = 128;

pub fn registered() -> &'static [&'static str] {
    &[CONV_SMALL, MLP_SMALL]
}

fn stem(subcarriers: usize, packets: usize) -> LayerSpec {
    LayerSpec::AvgPool {
        kh: (subcarriers / STEM_TARGET.0).max(1),
        kw: (packets / STEM_TARGET.1).max(1),
    }
}

/// Encoder mapping a `(subcarriers, packets)` view to a `feature_dim` vector.
pub fn encoder(id: &str, subcarriers: usize, packets: usize, feature_dim: usize) -> Result<Architecture, NnError> {
    if subcarriers == 0 || packets == 0 || feature_dim == 0 {
        return Err(NnError::InvalidArchitecture("encoder dimensions must be positive".into()));
    }
    let input = Shape3::new(1, subcarriers, packets);
    let stem = stem(subcarriers, packets);
    let mut layers = vec![stem];
    let mut shape = stem.output_shape(input)?;
    match id {
        CONV_SMALL => {
            // time pooling between stages, a global average at the end
            for (i, &out) in CONV_CHANNELS.iter().enumerate() {
                let conv = LayerSpec::Conv3x3 { in_channels: shape.channels, out_channels: out };
                shape = conv.output_shape(shape)?;
                let pool = if i + 1 == CONV_CHANNELS.len() {
                    LayerSpec::AvgPool { kh: shape.height, kw: shape.width }
                } else {
                    LayerSpec::AvgPool { kh: 1, kw: if shape.width >= 2 { 2 } else { 1 } }
                };
                layers.extend([conv, LayerSpec::Relu, pool]);
                shape = pool.output_shape(shape)?;
            }
            layers.push(LayerSpec::Linear { inputs: shape.len(), outputs: feature_dim });
        }
        MLP_SMALL => {
            layers.extend([
                LayerSpec::Linear { inputs: shape.len(), outputs: MLP_HIDDEN },
                LayerSpec::Relu,
                LayerSpec::Linear { inputs: MLP_HIDDEN, outputs: feature_dim },
            ]);
        }
        other => return Err(NnError::UnknownArchitecture(other.to_string())),
    }
    let arch = Architecture { id: id.to_string(), input, layers };
    arch.compile()?;
    Ok(arch)
}

/// Mirror of `encoder`: maps its feature vector back to the encoder's input
/// shape. Pooling is undone by nearest-neighbour resizing and each
/// convolution is reversed channel-wise. A global pool right before the head
/// is skipped: the head expands straight to the grid it averaged, since
/// broadcasting a single value per channel would leave nothing to decode.
pub fn decoder(encoder: &Architecture) -> Result<Architecture, NnError> {
    let (layers, _) = encoder.compile()?;
    let feature = layers.last().map(|l| l.output).unwrap_or(encoder.input);
    let mut out = Vec::new();
    let mut last = layers.len() - 1;
    let head = &layers[last];
    let LayerSpec::Linear { outputs, .. } = head.spec else {
        return Err(NnError::InvalidArchitecture("encoder must end in a linear head".into()));
    };
    debug_assert_eq!(outputs, feature.len());
    let mut grid = head.input;
    if last > 0 {
        let prev = &layers[last - 1];
        if matches!(prev.spec, LayerSpec::AvgPool { .. }) && prev.output.height * prev.output.width == 1 && prev.input.len() > prev.output.len() {
            grid = prev.input;
            last -= 1;
        }
    }
    out.push(LayerSpec::Linear { inputs: outputs, outputs: grid.len() });
    out.push(LayerSpec::Reshape {
        channels: grid.channels,
        height: grid.height,
        width: grid.width,
    });
    let has_hidden = (0..last).any(|i| matches!(layers[i].spec, LayerSpec::Linear { .. }));
    if has_hidden {
        out.push(LayerSpec::Relu);
    }
    for i in (0..last).rev() {
        let l = &layers[i];
        match l.spec {
            LayerSpec::AvgPool { .. } => out.push(LayerSpec::Resize { height: l.input.height, width: l.input.width }),
            LayerSpec::Conv3x3 { in_channels, out_channels } => {
                if out.last() != Some(&LayerSpec::Relu) {
                    out.push(LayerSpec::Relu);
                }
                out.push(LayerSpec::Conv3x3 { in_channels: out_channels, out_channels: in_channels });
            }
            LayerSpec::Linear { inputs, outputs } => {
                out.push(LayerSpec::Linear { inputs: outputs, outputs: inputs });
                out.push(LayerSpec::Reshape {
                    channels: l.input.channels,
                    height: l.input.height,
                    width: l.input.width,
                });
            }
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Reshape { .. } | LayerSpec::Resize { .. } => {}
        }
    }
    let arch = Architecture {
        id: format!("{}-decoder", encoder.id),
        input: feature,
        layers: out,
    };
    let shape = arch.output_shape()?;
    if shape != encoder.input {
        return Err(NnError::InvalidArchitecture(format!(
            "decoder produces {shape:?}, encoder takes {:?}",
            encoder.input
        )));
    }
    Ok(arch)
}
