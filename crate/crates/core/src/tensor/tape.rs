//! Reverse-mode autodiff tape.
//!
//! Operations append nodes in execution order, so the stored order is always
//! a valid topological order of the dataflow and the backward sweep is a
//! single reverse pass that visits each node once. Recorded tensors are
//! immutable; gradients accumulate in a separate buffer keyed by node index.

use crate::error::{Error, Result};
use crate::tensor::conv::{conv2d, conv2d_backward, ConvSpec};
use crate::tensor::ops;
use crate::tensor::Tensor;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(pub(crate) usize);

impl Value {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded operation together with the operand handles (and any saved
/// forward context) its backward rule needs.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Conv2d {
        input: Value,
        weight: Value,
        bias: Option<Value>,
        spec: ConvSpec,
    },
    Relu {
        input: Value,
    },
    MaxPool {
        input: Value,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: Value,
    },
    Dense {
        input: Value,
        weight: Value,
        bias: Value,
    },
    Softmax {
        input: Value,
        axis: usize,
    },
    CrossEntropy {
        probs: Value,
        labels: Vec<usize>,
    },
    Add {
        lhs: Value,
        rhs: Value,
    },
    Mul {
        lhs: Value,
        rhs: Value,
    },
    ConcatChannels {
        inputs: Vec<Value>,
    },
    SumAll {
        input: Value,
    },
}

struct TapeNode {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recording tape for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The tensor held at `v`.
    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Value {
        let id = Value(self.nodes.len());
        self.nodes.push(TapeNode {
            value,
            requires_grad,
            op,
        });
        id
    }

    /// Records an input tensor. Its `requires_grad` flag decides whether the
    /// backward pass will produce a gradient for it.
    pub fn leaf(&mut self, t: Tensor) -> Value {
        let rg = t.requires_grad();
        self.push(t, rg, Op::Leaf)
    }

    pub fn conv2d(
        &mut self,
        input: Value,
        weight: Value,
        bias: Option<Value>,
        spec: &ConvSpec,
    ) -> Result<Value> {
        let out = conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            spec,
        )?;
        let rg = self.requires_grad(input)
            || self.requires_grad(weight)
            || bias.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(
            out,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec: *spec,
            },
        ))
    }

    pub fn relu(&mut self, input: Value) -> Value {
        let out = ops::relu(self.value(input));
        let rg = self.requires_grad(input);
        self.push(out, rg, Op::Relu { input })
    }

    pub fn max_pool(&mut self, input: Value, window: usize, stride: usize) -> Result<Value> {
        let (out, argmax) = ops::max_pool(self.value(input), window, stride)?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, rg, Op::MaxPool { input, argmax }))
    }

    pub fn global_avg_pool(&mut self, input: Value) -> Result<Value> {
        let out = ops::global_avg_pool(self.value(input))?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, rg, Op::GlobalAvgPool { input }))
    }

    pub fn dense(&mut self, input: Value, weight: Value, bias: Value) -> Result<Value> {
        let out = ops::dense(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.requires_grad(input)
            || self.requires_grad(weight)
            || self.requires_grad(bias);
        Ok(self.push(
            out,
            rg,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn softmax(&mut self, input: Value, axis: usize) -> Result<Value> {
        let out = ops::softmax(self.value(input), axis)?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, rg, Op::Softmax { input, axis }))
    }

    pub fn cross_entropy(&mut self, probs: Value, labels: &[usize]) -> Result<Value> {
        let out = ops::cross_entropy(self.value(probs), labels)?;
        let rg = self.requires_grad(probs);
        Ok(self.push(
            out,
            rg,
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    pub fn add(&mut self, lhs: Value, rhs: Value) -> Result<Value> {
        let out = ops::add(self.value(lhs), self.value(rhs))?;
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        Ok(self.push(out, rg, Op::Add { lhs, rhs }))
    }

    pub fn mul(&mut self, lhs: Value, rhs: Value) -> Result<Value> {
        let out = ops::mul(self.value(lhs), self.value(rhs))?;
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        Ok(self.push(out, rg, Op::Mul { lhs, rhs }))
    }

    pub fn concat_channels(&mut self, inputs: &[Value]) -> Result<Value> {
        let parts: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = ops::concat_channels(&parts)?;
        let rg = inputs.iter().any(|v| self.requires_grad(*v));
        Ok(self.push(
            out,
            rg,
            Op::ConcatChannels {
                inputs: inputs.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, input: Value) -> Value {
        let out = ops::sum_all(self.value(input));
        let rg = self.requires_grad(input);
        self.push(out, rg, Op::SumAll { input })
    }

    /// Runs the backward sweep from the scalar `loss`.
    ///
    /// Every node with `requires_grad` ends up with a gradient; nodes that do
    /// not lie on a path to the loss get zeros.
    pub fn backward(&self, loss: Value) -> Result<Gradients> {
        let loss_t = self.value(loss);
        if loss_t.numel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_t.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::new(loss_t.shape().to_vec(), vec![1.0])?);
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(gy);
                    continue;
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    spec,
                } => {
                    let g = conv2d_backward(
                        self.value(*input),
                        self.value(*weight),
                        spec,
                        &gy,
                        bias.is_some(),
                    )?;
                    self.accumulate(&mut grads, *input, g.input);
                    self.accumulate(&mut grads, *weight, g.weight);
                    if let (Some(b), Some(gb)) = (bias, g.bias) {
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Relu { input } => {
                    let g = ops::relu_backward(self.value(*input), &gy);
                    self.accumulate(&mut grads, *input, g);
                }
                Op::MaxPool { input, argmax } => {
                    let g = ops::max_pool_backward(self.value(*input), argmax, &gy);
                    self.accumulate(&mut grads, *input, g);
                }
                Op::GlobalAvgPool { input } => {
                    let g = ops::global_avg_pool_backward(self.value(*input), &gy);
                    self.accumulate(&mut grads, *input, g);
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let (gx, gw, gb) = ops::dense_backward(self.value(*input), self.value(*weight), &gy);
                    self.accumulate(&mut grads, *input, gx);
                    self.accumulate(&mut grads, *weight, gw);
                    self.accumulate(&mut grads, *bias, gb);
                }
                Op::Softmax { input, axis } => {
                    let g = ops::softmax_backward(&node.value, *axis, &gy);
                    self.accumulate(&mut grads, *input, g);
                }
                Op::CrossEntropy { probs, labels } => {
                    let g = ops::cross_entropy_backward(self.value(*probs), labels, gy.data()[0]);
                    self.accumulate(&mut grads, *probs, g);
                }
                Op::Add { lhs, rhs } => {
                    self.accumulate(&mut grads, *lhs, gy.clone());
                    self.accumulate(&mut grads, *rhs, gy.clone());
                }
                Op::Mul { lhs, rhs } => {
                    let ga = ops::mul(&gy, self.value(*rhs))?;
                    let gb = ops::mul(&gy, self.value(*lhs))?;
                    self.accumulate(&mut grads, *lhs, ga);
                    self.accumulate(&mut grads, *rhs, gb);
                }
                Op::ConcatChannels { inputs } => {
                    let parts: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                    let split = ops::concat_channels_backward(&parts, &gy);
                    for (v, g) in inputs.iter().zip(split) {
                        self.accumulate(&mut grads, *v, g);
                    }
                }
                Op::SumAll { input } => {
                    let g = Tensor::filled(self.value(*input).shape(), gy.data()[0]);
                    self.accumulate(&mut grads, *input, g);
                }
            }
        }

        // Off-path tensors that asked for gradients get zeros.
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Value, add: Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, a) in existing.data_mut().iter_mut().zip(add.data()) {
                    *e += *a;
                }
            }
            slot @ None => *slot = Some(add),
        }
    }
}

/// Gradient map produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, if `v` required one.
    pub fn get(&self, v: Value) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Moves the gradient for `v` out of the map.
    pub fn take(&mut self, v: Value) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
