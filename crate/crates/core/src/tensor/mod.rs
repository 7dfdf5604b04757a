//! Minimal deterministic tensor engine: dense NCHW tensors, a Wengert tape
//! for reverse-mode differentiation, and Adam.

mod adam;
pub mod kernels;
mod scalar;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use kernels::{Activation, ConvGeometry, PadMode};
pub use scalar::Scalar;
pub use tape::{BoundParams, Gradients, Tape, Var};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major tensor. Activations use N, C, H, W order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    pub requires_grad: bool,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![T::zero(); numel], requires_grad: false, grad: None }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value], requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Shape as a fixed 4-tuple, for the NCHW ops.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::InvalidShape(format!("expected 4-d tensor, got {:?}", self.shape))),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    /// Concatenate equally shaped tensors along the leading (batch) axis.
    pub fn stack_batch(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let inner = &first.shape[1..];
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        let mut batch = 0;
        for p in parts {
            if &p.shape[1..] != inner {
                return Err(Error::InvalidShape(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            batch += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = batch;
        Tensor::new(shape, data)
    }
}

/// One named learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered parameters of one network, one entry per learnable layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T: Scalar> {
    params: Vec<NamedParam<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(NamedParam { name, tensor: tensor.with_grad() });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedParam<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedParam<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Add gradients recorded on a tape into the matching parameters.
    pub fn accumulate(&mut self, grads: &Gradients<T>, bound: &BoundParams) -> Result<()> {
        if bound.len() != self.params.len() {
            return Err(Error::InvalidShape(format!(
                "binding covers {} parameters, set has {}",
                bound.len(),
                self.params.len()
            )));
        }
        for (param, var) in self.params.iter_mut().zip(bound.vars()) {
            let Some(g) = grads.get(*var) else { continue };
            match &mut param.tensor.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += *b),
                slot @ None => *slot = Some(g.to_vec()),
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.grad = None;
        }
    }

    /// Euclidean distance between two parameter sets of identical layout.
    pub fn l2_distance(&self, other: &ParamSet<T>) -> f64 {
        self.params
            .iter()
            .zip(&other.params)
            .flat_map(|(a, b)| a.tensor.data().iter().zip(b.tensor.data()))
            .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Shape-only description of a parameter, used in serialized layouts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn param_names_unique_and_counted() {
        let mut ps = ParamSet::<f32>::new();
        ps.push("a", Tensor::zeros(vec![16, 3, 7, 7])).unwrap();
        ps.push("b", Tensor::zeros(vec![32, 16, 3, 3])).unwrap();
        assert!(ps.push("a", Tensor::zeros(vec![1])).is_err());
        assert_eq!(ps.total_count(), 2352 + 4608);
    }

    #[test]
    fn stack_batch_concatenates() {
        let a = Tensor::<f32>::new(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::new(vec![1, 1, 1, 2], vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack_batch(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 1, 2]);
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
