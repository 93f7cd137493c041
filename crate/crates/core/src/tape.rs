//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! A [`GradTape`] owns every intermediate value of one forward pass. Calling
//! [`backward`] walks the record from the last operation to the first and
//! accumulates gradients for every input and every tagged parameter.

use std::collections::BTreeMap;

use crate::error::{ensure, Result};
use crate::tensor::{self, ConvGrad, ConvLayer, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Caller-chosen tag identifying which parameter block a convolution uses.
pub type ParamId = usize;

#[derive(Debug)]
enum Op {
    Input,
    Conv { input: Var, layer: ConvLayer, param: ParamId },
    Relu { input: Var },
    AvgPool { input: Var, window: usize },
    Upsample { input: Var },
    L2Normalize { input: Var, epsilon: f64 },
    Concat { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Result of a backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    pub params: BTreeMap<ParamId, ConvGrad>,
    pub inputs: BTreeMap<Var, Tensor>,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn into_value(mut self, var: Var) -> Tensor {
        self.nodes.swap_remove(var.0).value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn conv2d(&mut self, input: Var, layer: &ConvLayer, param: ParamId) -> Result<Var> {
        let value = tensor::conv2d(self.value(input), layer)?;
        Ok(self.push(
            value,
            Op::Conv {
                input,
                layer: layer.clone(),
                param,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = tensor::relu(self.value(input));
        self.push(value, Op::Relu { input })
    }

    pub fn avg_pool_blocks(&mut self, input: Var, window: usize) -> Result<Var> {
        let value = tensor::avg_pool_blocks(self.value(input), window)?;
        Ok(self.push(value, Op::AvgPool { input, window }))
    }

    pub fn bilinear_upsample(&mut self, input: Var, height: usize, width: usize) -> Result<Var> {
        let value = tensor::bilinear_upsample(self.value(input), height, width)?;
        Ok(self.push(value, Op::Upsample { input }))
    }

    pub fn l2_normalize_channels(&mut self, input: Var, epsilon: f64) -> Result<Var> {
        let value = tensor::l2_normalize_channels(self.value(input), epsilon)?;
        Ok(self.push(value, Op::L2Normalize { input, epsilon }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Concat { a, b }))
    }

    /// Sign pattern of every ReLU input, packed into a hash. Two forward
    /// passes with equal signatures lie on the same linear piece of the
    /// network, which is what finite-difference probes need to know.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for node in &self.nodes {
            if let Op::Relu { input } = node.op {
                for &v in self.value(input).data() {
                    h ^= u64::from(v > 0.0);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Back-propagates `upstream` (the gradient of a scalar objective with
/// respect to `output`) through the tape.
pub fn backward(tape: &GradTape, output: Var, upstream: &Tensor) -> Result<Gradients> {
    ensure!(output.0 < tape.nodes.len(), "output variable not on this tape");
    ensure!(
        tape.value(output).same_shape(upstream),
        "upstream gradient shape {:?} does not match output shape {:?}",
        upstream.shape(),
        tape.value(output).shape()
    );
    let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
    grads[output.0] = Some(upstream.clone());
    let mut result = Gradients::default();

    for idx in (0..=output.0).rev() {
        let Some(g) = grads[idx].take() else {
            continue;
        };
        let node = &tape.nodes[idx];
        match &node.op {
            Op::Input => {
                result.inputs.insert(Var(idx), g);
            }
            Op::Conv { input, layer, param } => {
                let (gi, gp) = tensor::conv2d_backward(tape.value(*input), layer, &g);
                result
                    .params
                    .entry(*param)
                    .and_modify(|acc| acc.add_assign(&gp))
                    .or_insert(gp);
                accumulate(&mut grads[input.0], gi);
            }
            Op::Relu { input } => {
                let gi = tensor::relu_backward(tape.value(*input), &g);
                accumulate(&mut grads[input.0], gi);
            }
            Op::AvgPool { input, window } => {
                let gi = tensor::avg_pool_blocks_backward(tape.value(*input), *window, &g);
                accumulate(&mut grads[input.0], gi);
            }
            Op::Upsample { input } => {
                let gi = tensor::bilinear_upsample_backward(tape.value(*input), &g);
                accumulate(&mut grads[input.0], gi);
            }
            Op::L2Normalize { input, epsilon } => {
                let gi = tensor::l2_normalize_backward(tape.value(*input), *epsilon, &g);
                accumulate(&mut grads[input.0], gi);
            }
            Op::Concat { a, b } => {
                let (ga, gb) = tensor::concat_backward(tape.value(*a).channels(), &g);
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[b.0], gb);
            }
        }
    }
    Ok(result)
}
