//! Declarative layer schedules for the generator and discriminator.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Activation, PadMode, ParamSet, Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Standard deviation of the Normal(0, std) weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkRole {
    Generator,
    Discriminator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    /// 3x3 conv + instance norm, added to the block input, then the activation.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Row of the published layer table this layer is accounted under.
    pub table_row: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    #[serde(default)]
    pub output_padding: usize,
    pub pad_mode: PadMode,
    pub in_channels: usize,
    pub out_channels: usize,
    pub norm: bool,
    pub activation: Option<Activation>,
}

impl LayerSpec {
    /// Weight shape: `[out, in, k, k]` for convs, `[in, out, k, k]` for transposed.
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::ConvTranspose => vec![self.in_channels, self.out_channels, self.kernel, self.kernel],
            _ => vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn param_name(&self) -> String {
        format!("{}.weight", self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: NetworkRole,
    pub residual_blocks: usize,
    pub layers: Vec<LayerSpec>,
}

#[allow(clippy::too_many_arguments)]
fn layer(
    name: &str,
    row: &str,
    kind: LayerKind,
    kernel: usize,
    stride: usize,
    padding: usize,
    pad_mode: PadMode,
    io: (usize, usize),
    norm: bool,
    activation: Option<Activation>,
) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        table_row: row.to_string(),
        kind,
        kernel,
        stride,
        padding,
        output_padding: if kind == LayerKind::ConvTranspose { 1 } else { 0 },
        pad_mode,
        in_channels: io.0,
        out_channels: io.1,
        norm,
        activation,
    }
}

/// Generator: three down convolutions, `residual_blocks` single-conv residual
/// blocks, two transposed convolutions and a final 7x7 convolution with tanh.
/// Maps `resolution x resolution` to the same size.
pub fn build_generator(resolution: usize, residual_blocks: usize) -> Result<NetworkSpec> {
    if resolution == 0 || resolution % 4 != 0 {
        return Err(Error::InvalidResolution(resolution));
    }
    use Activation::{Relu, Tanh};
    use LayerKind::*;
    use PadMode::{Reflect, Zeros};
    let mut layers = vec![
        layer("down1", "Down Convolution1", Conv, 7, 1, 3, Reflect, (3, 16), true, Some(Relu)),
        layer("down2", "Down Convolution2", Conv, 3, 2, 1, Zeros, (16, 32), true, Some(Relu)),
        layer("down3", "Down Convolution3", Conv, 3, 2, 1, Zeros, (32, 64), true, Some(Relu)),
    ];
    for i in 1..=residual_blocks {
        layers.push(layer(&format!("res{i}"), "Residual block", Residual, 3, 1, 1, Reflect, (64, 64), true, Some(Relu)));
    }
    layers.extend([
        layer("up1", "Up Convolution1", ConvTranspose, 3, 2, 1, Zeros, (64, 32), true, Some(Relu)),
        layer("up2", "Up Convolution2", ConvTranspose, 3, 2, 1, Zeros, (32, 16), true, Some(Relu)),
        layer("up3", "Up Convolution3", Conv, 7, 1, 3, Reflect, (16, 3), false, Some(Tanh)),
    ]);
    Ok(NetworkSpec { role: NetworkRole::Generator, residual_blocks, layers })
}

/// Discriminator: four 4x4 stride-2 convolutions, then a 4x4 stride-1 conv and
/// a 1x1 conv to a one-channel patch map. Sigmoid scores are mean-pooled by
/// the forward pass into one probability per sample.
pub fn build_discriminator() -> NetworkSpec {
    use Activation::{LeakyRelu, Sigmoid};
    use LayerKind::Conv;
    use PadMode::Zeros;
    let layers = vec![
        layer("state1", "State1", Conv, 4, 2, 1, Zeros, (3, 16), false, Some(LeakyRelu)),
        layer("state2", "State2", Conv, 4, 2, 1, Zeros, (16, 32), true, Some(LeakyRelu)),
        layer("state3", "State3", Conv, 4, 2, 1, Zeros, (32, 64), true, Some(LeakyRelu)),
        layer("state4", "State4", Conv, 4, 2, 1, Zeros, (64, 128), true, Some(LeakyRelu)),
        layer("state5", "State5", Conv, 4, 1, 1, Zeros, (128, 128), false, Some(LeakyRelu)),
        layer("state5_head", "State5", Conv, 1, 1, 0, Zeros, (128, 1), false, Some(Sigmoid)),
    ];
    NetworkSpec { role: NetworkRole::Discriminator, residual_blocks: 0, layers }
}

impl NetworkSpec {
    pub fn total_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Parameter counts grouped by table row, in schedule order.
    pub fn table_rows(&self) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = Vec::new();
        for l in &self.layers {
            match rows.last_mut() {
                Some((row, count)) if *row == l.table_row => *count += l.param_count(),
                _ => rows.push((l.table_row.clone(), l.param_count())),
            }
        }
        rows
    }

    /// Spatial size after the full schedule for a square input.
    pub fn output_extent(&self, input: usize) -> usize {
        self.layers.iter().fold(input, |s, l| match l.kind {
            LayerKind::ConvTranspose => (s - 1) * l.stride + l.kernel + l.output_padding - 2 * l.padding,
            _ => (s + 2 * l.padding - l.kernel) / l.stride + 1,
        })
    }

    /// Fresh parameters drawn from Normal(0, 0.02).
    pub fn seeded_init<T: Scalar>(&self, rng: &mut SplitMix64) -> ParamSet<T> {
        let mut params = ParamSet::new();
        for l in &self.layers {
            let shape = l.weight_shape();
            let data = (0..l.param_count()).map(|_| T::from_f64_lossy(rng.normal() * INIT_STD)).collect();
            params
                .push(l.param_name(), Tensor::new(shape, data).expect("shape from spec"))
                .expect("layer names are unique");
        }
        params
    }

    /// Check that a parameter set has exactly the layout this spec expects.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<()> {
        if params.len() != self.layers.len() {
            return Err(Error::InvalidShape(format!(
                "{} parameters for {} layers",
                params.len(),
                self.layers.len()
            )));
        }
        for (l, p) in self.layers.iter().zip(params.iter()) {
            if p.name != l.param_name() || p.tensor.shape() != l.weight_shape() {
                return Err(Error::InvalidShape(format!(
                    "parameter `{}` {:?} does not match layer `{}`",
                    p.name,
                    p.tensor.shape(),
                    l.name
                )));
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: init from a bare seed.
pub fn seeded_init<T: Scalar>(spec: &NetworkSpec, seed: u64) -> ParamSet<T> {
    spec.seeded_init(&mut SplitMix64::new(seed))
}
