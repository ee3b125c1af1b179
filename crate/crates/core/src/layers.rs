//! Dense and LSTM layers expressed on the tape.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::RngStream;
use crate::tensor::{glorot_uniform, Scalar, Tensor};

/// Fully connected layer `x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        Self {
            kernel: glorot_uniform(&[inputs, outputs], rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> DenseVars {
        let bind = |g: &mut Graph<T>, t: &Tensor<T>| {
            if trainable {
                g.param(t)
            } else {
                g.input(t.clone())
            }
        };
        DenseVars {
            kernel: bind(g, &self.kernel),
            bias: bind(g, &self.bias),
        }
    }
}

/// Tape handles for a bound [`Dense`] layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub kernel: Var,
    pub bias: Var,
}

impl DenseVars {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.kernel)?;
        g.add_bias(y, self.bias)
    }
}

/// LSTM weights; gate blocks are ordered input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights<T> {
    /// `[D_in, 4H]`
    pub kernel: Tensor<T>,
    /// `[H, 4H]`
    pub recurrent: Tensor<T>,
    /// `[4H]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> LstmWeights<T> {
    pub fn new(input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            kernel: glorot_uniform(&[input, 4 * hidden], rng),
            recurrent: glorot_uniform(&[hidden, 4 * hidden], rng),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[input, 4 * hidden]),
            recurrent: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent.shape()[0]
    }

    /// Check `kernel`, `recurrent`, and `bias` agree on `H`.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        if self.recurrent.shape() != [h, 4 * h]
            || self.kernel.shape().len() != 2
            || self.kernel.shape()[1] != 4 * h
            || self.bias.shape() != [4 * h]
        {
            return Err(Error::Shape {
                op: "lstm weights",
                lhs: self.kernel.shape().to_vec(),
                rhs: self.recurrent.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> LstmVars {
        let bind = |g: &mut Graph<T>, t: &Tensor<T>| {
            if trainable {
                g.param(t)
            } else {
                g.input(t.clone())
            }
        };
        LstmVars {
            kernel: bind(g, &self.kernel),
            recurrent: bind(g, &self.recurrent),
            bias: bind(g, &self.bias),
            hidden: self.hidden_size(),
        }
    }
}

/// Tape handles for bound [`LstmWeights`].
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub kernel: Var,
    pub recurrent: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmVars {
    /// `x·W + b`, the input half of the gate pre-activations.
    pub fn project_input<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.kernel)?;
        g.add_bias(xw, self.bias)
    }

    /// One recurrence step given a pre-projected input.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        x_proj: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let hh = g.matmul(h_prev, self.recurrent)?;
        let z = g.add(x_proj, hh)?;
        let n = self.hidden;
        let i = g.slice_cols(z, 0, n)?;
        let f = g.slice_cols(z, n, n)?;
        let cand = g.slice_cols(z, 2 * n, n)?;
        let o = g.slice_cols(z, 3 * n, n)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }
}

/// Single LSTM step: `(h, c)` from input `x` and the previous state.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<T>,
    w: &LstmVars,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let xp = w.project_input(g, x)?;
    w.step(g, xp, h_prev, c_prev)
}
