//! Named parameter tensors and the convolution layer built on them.

use autograd::{Conv2dSpec, Tensor};
use rand::Rng;

use crate::error::{Error, Result};

/// Ordered list of named parameters. Layers refer to entries by index.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t.to_var());
        self.tensors.len() - 1
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every value, keeping names and shapes.
    pub fn set_values(&mut self, values: Vec<Vec<f64>>) -> Result<()> {
        if values.len() != self.tensors.len() {
            return Err(Error::shape("param_store", format!("{} tensors for {}", values.len(), self.tensors.len())));
        }
        for (t, v) in self.tensors.iter_mut().zip(values) {
            *t = Tensor::var(v, t.shape())?;
        }
        Ok(())
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            *t = t.zeros_like().to_var();
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::shape("param_store", format!("{} values for {} parameters", flat.len(), self.numel())));
        }
        let mut off = 0;
        let mut values = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            values.push(flat[off..off + t.numel()].to_vec());
            off += t.numel();
        }
        self.set_values(values)
    }

    /// `(name, shape)` pairs.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.names.iter().cloned().zip(self.tensors.iter().map(|t| t.shape().to_vec())).collect()
    }
}

/// How fresh weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    FanIn,
    Zero,
}

/// Square-kernel convolution with optional bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    weight: usize,
    bias: Option<usize>,
    spec: Conv2dSpec,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
        spec: Conv2dSpec,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            match init {
                Init::FanIn => (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
                Init::Zero => vec![0.0; n],
            }
        };
        let w = Tensor::new(draw(cout * cin * k * k), &[cout, cin, k, k]).expect("valid shape");
        let weight = store.push(format!("{name}.weight"), w);
        let bias = bias.then(|| {
            let b = Tensor::new(draw(cout), &[cout]).expect("valid shape");
            store.push(format!("{name}.bias"), b)
        });
        Self { weight, bias, spec, cin, cout, k }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(store.get(self.weight), self.spec)?;
        match self.bias {
            Some(b) => Ok(y.add_channel_bias(store.get(b))?),
            None => Ok(y),
        }
    }

    pub fn param_count(cin: usize, cout: usize, k: usize, bias: bool) -> usize {
        cout * cin * k * k + if bias { cout } else { 0 }
    }
}
