use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::autodiff::{Graph, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    /// Whether L2 weight decay applies (weights yes, biases no).
    pub decay: bool,
}

/// Owns every trainable tensor of a model. Layers hold [`ParamId`]s into it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
            decay,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Records every parameter on `graph` as a gradient-tracking leaf.
    /// The returned handles are indexed by [`ParamId`].
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| graph.param(p.value.clone())).collect()
    }

    /// Adds the gradients held by `graph` for `vars` into the stored grads.
    pub fn accumulate_grads(&mut self, graph: &Graph, vars: &[Var]) {
        for (p, v) in self.params.iter_mut().zip(vars) {
            if let Some(g) = graph.grad(*v) {
                for (acc, x) in p.grad.iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn set_values(&mut self, values: &[Tensor]) -> Result<(), NnError> {
        if values.len() != self.params.len() {
            return Err(NnError::ParamCount {
                expected: self.params.len(),
                got: values.len(),
            });
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(NnError::ParamShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

/// Deterministic initializer: Glorot-uniform weights in
/// `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform_weight(
        &mut self,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Tensor, NnError> {
        if rows == 0 || cols == 0 || fan_in == 0 || fan_out == 0 {
            return Err(NnError::ZeroDim);
        }
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        Ok(Tensor::new(vec![rows, cols], data)?)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
