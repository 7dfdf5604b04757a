use super::kernels::{self, Activation, ConvGeometry, PadMode};
use super::{ParamSet, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Tape variables standing in for each entry of a [`ParamSet`], in order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, index: usize) -> Var {
        self.vars[index]
    }
}

#[derive(Debug)]
enum Op<T: Scalar> {
    Leaf,
    Conv2d { input: Var, weight: Var, geom: ConvGeometry },
    ConvTranspose2d { input: Var, weight: Var, geom: ConvGeometry },
    InstanceNorm { input: Var, plane: usize, inv_std: Vec<T> },
    Act { input: Var, kind: Activation },
    Add { a: Var, b: Var },
    Scale { input: Var, factor: T },
    /// Mean over every axis except the leading one: `[N, ...] -> [N]`.
    MeanPerSample { input: Var },
    /// Mean over everything: `[...] -> [1]`.
    Mean { input: Var },
    /// `sum(x * w)` for a fixed weight tensor: `[...] -> [1]`.
    WeightedSum { input: Var, weights: Vec<T> },
    /// `ln(clamp(x))` or `ln(1 - clamp(x))`, clamped to `[eps, 1 - eps]`.
    LogProb { input: Var, complement: bool, eps: T },
}

#[derive(Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by tape variable.
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

/// Wengert list recording forward ops for one backward pass.
///
/// A tape is single-use: after [`Tape::backward`] its contents are released
/// and any further use reports [`Error::StaleTape`].
#[derive(Debug)]
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::StaleTape)
        } else {
            Ok(())
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let value = Tensor { requires_grad, grad: None, ..value };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Record a tensor; it participates in differentiation if `requires_grad`
    /// is set on it.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Result<Var> {
        self.live()?;
        let rg = tensor.requires_grad;
        self.push(tensor, Op::Leaf, rg)
    }

    /// Record a tensor that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Result<Var> {
        self.live()?;
        self.push(tensor, Op::Leaf, false)
    }

    /// Record every parameter of a set as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet<T>) -> Result<BoundParams> {
        self.bind_with(params, true)
    }

    /// Record every parameter as a constant: gradients flow through, none are
    /// collected for the parameters themselves.
    pub fn bind_frozen(&mut self, params: &ParamSet<T>) -> Result<BoundParams> {
        self.bind_with(params, false)
    }

    fn bind_with(&mut self, params: &ParamSet<T>, trainable: bool) -> Result<BoundParams> {
        self.live()?;
        let vars = params
            .iter()
            .map(|p| {
                let t = Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec())?;
                self.push(t, Op::Leaf, trainable)
            })
            .collect::<Result<_>>()?;
        Ok(BoundParams { vars })
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize, padding: usize, pad_mode: PadMode) -> Result<Var> {
        self.live()?;
        let [n, cin, h, w] = self.value(input).dims4()?;
        let [cout, wcin, kh, kw] = self.value(weight).dims4()?;
        if cin != wcin {
            return Err(Error::InvalidShape(format!("conv2d: input has {cin} channels, weight expects {wcin}")));
        }
        let geom = ConvGeometry::conv(cin, h, w, kh, kw, stride, padding, pad_mode)?;
        let data = kernels::conv2d_forward(self.value(input).data(), n, self.value(weight).data(), cout, &geom);
        let out = Tensor::new(vec![n, cout, geom.out_h, geom.out_w], data)?;
        let rg = self.requires_grad(input) || self.requires_grad(weight);
        self.push(out, Op::Conv2d { input, weight, geom }, rg)
    }

    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        self.live()?;
        let [n, cin, h, w] = self.value(input).dims4()?;
        let [wcin, cout, kh, kw] = self.value(weight).dims4()?;
        if cin != wcin {
            return Err(Error::InvalidShape(format!(
                "conv_transpose2d: input has {cin} channels, weight expects {wcin}"
            )));
        }
        if output_padding >= stride.max(1) {
            return Err(Error::InvalidShape(format!(
                "output_padding {output_padding} must be smaller than stride {stride}"
            )));
        }
        let out_h = ((h - 1) * stride + kh + output_padding)
            .checked_sub(2 * padding)
            .ok_or_else(|| Error::InvalidShape("conv_transpose2d: padding exceeds output".into()))?;
        let out_w = ((w - 1) * stride + kw + output_padding)
            .checked_sub(2 * padding)
            .ok_or_else(|| Error::InvalidShape("conv_transpose2d: padding exceeds output".into()))?;
        let geom = ConvGeometry::conv(cout, out_h, out_w, kh, kw, stride, padding, PadMode::Zeros)?;
        debug_assert_eq!((geom.out_h, geom.out_w), (h, w));
        let data = kernels::conv_transpose2d_forward(self.value(input).data(), n, self.value(weight).data(), cin, &geom);
        let out = Tensor::new(vec![n, cout, out_h, out_w], data)?;
        let rg = self.requires_grad(input) || self.requires_grad(weight);
        self.push(out, Op::ConvTranspose2d { input, weight, geom }, rg)
    }

    pub fn instance_norm(&mut self, input: Var, eps: T) -> Result<Var> {
        self.live()?;
        let [n, c, h, w] = self.value(input).dims4()?;
        let plane = h * w;
        if plane < 2 {
            return Err(Error::DegenerateNorm);
        }
        let (data, inv_std) = kernels::instance_norm_forward(self.value(input).data(), plane, eps);
        let out = Tensor::new(vec![n, c, h, w], data)?;
        let rg = self.requires_grad(input);
        self.push(out, Op::InstanceNorm { input, plane, inv_std }, rg)
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        let data = src.data().iter().map(|&x| kind.apply(x)).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.requires_grad(input);
        self.push(out, Op::Act { input, kind }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::InvalidShape(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(out, Op::Add { a, b }, rg)
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        let data = src.data().iter().map(|&x| x * factor).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.requires_grad(input);
        self.push(out, Op::Scale { input, factor }, rg)
    }

    pub fn mean_per_sample(&mut self, input: Var) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        let n = *src.shape().first().ok_or_else(|| Error::InvalidShape("empty shape".into()))?;
        let per = src.numel() / n.max(1);
        let count = T::from_usize(per).expect("count");
        let data = src.data().chunks_exact(per).map(|c| c.iter().fold(T::zero(), |a, &v| a + v) / count).collect();
        let out = Tensor::new(vec![n], data)?;
        let rg = self.requires_grad(input);
        self.push(out, Op::MeanPerSample { input }, rg)
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        let count = T::from_usize(src.numel()).expect("count");
        let m = src.data().iter().fold(T::zero(), |a, &v| a + v) / count;
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(m), Op::Mean { input }, rg)
    }

    /// Project onto fixed weights: `sum(x * w)`.
    pub fn weighted_sum(&mut self, input: Var, weights: &Tensor<T>) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        if src.shape() != weights.shape() {
            return Err(Error::InvalidShape(format!("weighted_sum: {:?} vs {:?}", src.shape(), weights.shape())));
        }
        let total = src.data().iter().zip(weights.data()).fold(T::zero(), |a, (&x, &w)| a + x * w);
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(total), Op::WeightedSum { input, weights: weights.data().to_vec() }, rg)
    }

    /// Elementwise `ln(p)` (or `ln(1 - p)` when `complement`), with `p`
    /// clamped to `[eps, 1 - eps]`. The gradient is zero where the clamp binds.
    pub fn log_prob(&mut self, input: Var, complement: bool, eps: T) -> Result<Var> {
        self.live()?;
        let src = self.value(input);
        let hi = T::one() - eps;
        let data = src
            .data()
            .iter()
            .map(|&p| {
                let p = p.max(eps).min(hi);
                if complement {
                    (T::one() - p).ln()
                } else {
                    p.ln()
                }
            })
            .collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.requires_grad(input);
        self.push(out, Op::LogProb { input, complement, eps }, rg)
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape's recorded values.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        self.live()?;
        if self.value(loss).numel() != 1 {
            return Err(Error::NotScalar(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let node = &self.nodes[idx];
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { input, weight, geom } => {
                    let n = self.value(*input).shape()[0];
                    let cout = self.value(*weight).shape()[0];
                    let (gi, gw) = kernels::conv2d_backward(
                        self.value(*input).data(),
                        n,
                        self.value(*weight).data(),
                        cout,
                        geom,
                        &gout,
                        self.requires_grad(*input),
                        self.requires_grad(*weight),
                    );
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *weight, gw);
                }
                Op::ConvTranspose2d { input, weight, geom } => {
                    let n = self.value(*input).shape()[0];
                    let cin = self.value(*weight).shape()[0];
                    let (gi, gw) = kernels::conv_transpose2d_backward(
                        self.value(*input).data(),
                        n,
                        self.value(*weight).data(),
                        cin,
                        geom,
                        &gout,
                        self.requires_grad(*input),
                        self.requires_grad(*weight),
                    );
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *weight, gw);
                }
                Op::InstanceNorm { input, plane, inv_std } => {
                    let gi = kernels::instance_norm_backward(node.value.data(), inv_std, *plane, &gout);
                    accumulate(&mut grads, *input, Some(gi));
                }
                Op::Act { input, kind } => {
                    let x = self.value(*input).data();
                    let y = node.value.data();
                    let gi = gout
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(&g, (&xv, &yv))| g * kind.derivative(xv, yv))
                        .collect();
                    accumulate(&mut grads, *input, Some(gi));
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, Some(gout.clone()));
                    }
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, Some(gout));
                    }
                }
                Op::Scale { input, factor } => {
                    let gi = gout.iter().map(|&g| g * *factor).collect();
                    accumulate(&mut grads, *input, Some(gi));
                }
                Op::MeanPerSample { input } => {
                    let src = self.value(*input);
                    let per = src.numel() / gout.len();
                    let inv = T::one() / T::from_usize(per).expect("count");
                    let gi = gout.iter().flat_map(|&g| std::iter::repeat_n(g * inv, per)).collect();
                    accumulate(&mut grads, *input, Some(gi));
                }
                Op::Mean { input } => {
                    let numel = self.value(*input).numel();
                    let g = gout[0] / T::from_usize(numel).expect("count");
                    accumulate(&mut grads, *input, Some(vec![g; numel]));
                }
                Op::WeightedSum { input, weights } => {
                    let gi = weights.iter().map(|&w| w * gout[0]).collect();
                    accumulate(&mut grads, *input, Some(gi));
                }
                Op::LogProb { input, complement, eps } => {
                    let hi = T::one() - *eps;
                    let gi = gout
                        .iter()
                        .zip(self.value(*input).data())
                        .map(|(&g, &p)| {
                            if p < *eps || p > hi {
                                T::zero()
                            } else if *complement {
                                -g / (T::one() - p)
                            } else {
                                g / p
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *input, Some(gi));
                }
            }
        }

        // Only leaf gradients are meaningful to callers; drop the rest.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        self.nodes.clear();
        self.consumed = true;
        if grads.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], target: Var, g: Option<Vec<T>>) {
    let Some(g) = g else { return };
    match &mut grads[target.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
        slot @ None => *slot = Some(g),
    }
}

fn op_name<T: Scalar>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvTranspose2d { .. } => "conv_transpose2d",
        Op::InstanceNorm { .. } => "instance_norm",
        Op::Act { .. } => "activation",
        Op::Add { .. } => "add",
        Op::Scale { .. } => "scale",
        Op::MeanPerSample { .. } => "mean_per_sample",
        Op::Mean { .. } => "mean",
        Op::WeightedSum { .. } => "weighted_sum",
        Op::LogProb { .. } => "log_prob",
    }
}
