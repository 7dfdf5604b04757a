use super::spec::{LayerKind, NetworkRole, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{BoundParams, Scalar, Tape, Var};

pub const NORM_EPS: f64 = 1e-5;

/// Run a network schedule on the tape. For a discriminator the result is the
/// sigmoid patch map `[N, 1, h, w]`; see [`discriminator_scores`].
pub fn forward<T: Scalar>(spec: &NetworkSpec, tape: &mut Tape<T>, params: &BoundParams, input: Var) -> Result<Var> {
    if params.len() != spec.layers.len() {
        return Err(Error::InvalidShape(format!(
            "{} bound parameters for {} layers",
            params.len(),
            spec.layers.len()
        )));
    }
    let eps = T::from_f64_lossy(NORM_EPS);
    let mut x = input;
    for (i, layer) in spec.layers.iter().enumerate() {
        let w = params.get(i);
        let mut y = match layer.kind {
            LayerKind::Conv | LayerKind::Residual => tape.conv2d(x, w, layer.stride, layer.padding, layer.pad_mode)?,
            LayerKind::ConvTranspose => tape.conv_transpose2d(x, w, layer.stride, layer.padding, layer.output_padding)?,
        };
        if layer.norm {
            y = tape.instance_norm(y, eps)?;
        }
        if layer.kind == LayerKind::Residual {
            y = tape.add(y, x)?;
        }
        if let Some(act) = layer.activation {
            y = tape.activation(y, act)?;
        }
        x = y;
    }
    Ok(x)
}

/// Discriminator probabilities, one per sample: `[N]`.
pub fn discriminator_scores<T: Scalar>(
    spec: &NetworkSpec,
    tape: &mut Tape<T>,
    params: &BoundParams,
    input: Var,
) -> Result<Var> {
    debug_assert_eq!(spec.role, NetworkRole::Discriminator);
    let map = forward(spec, tape, params, input)?;
    tape.mean_per_sample(map)
}
