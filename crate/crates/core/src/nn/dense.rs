use rand::Rng;

use super::params::{Initializer, ParamId, ParamStore};
use super::NnError;
use crate::autodiff::{Graph, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    None,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Tanh => g.tanh(x),
            Activation::None => x,
        }
    }
}

/// Fully connected layer: `activation(x · W + b)` with `W: [in × out]`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self, NnError> {
        let w = init.uniform_weight(in_dim, out_dim, in_dim, out_dim)?;
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![out_dim]), false);
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        })
    }

    /// `x: [batch × in_dim] → [batch × out_dim]`
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var, TensorError> {
        let rows = match g.shape(x) {
            [rows, cols] if *cols == self.in_dim => *rows,
            other => {
                return Err(TensorError::shape(
                    "dense_forward",
                    other,
                    &[self.in_dim, self.out_dim],
                ))
            }
        };
        let xw = g.matmul(x, params[self.weight.index()])?;
        let b = g.broadcast(params[self.bias.index()], &[rows, self.out_dim])?;
        let z = g.add(xw, b)?;
        Ok(self.activation.apply(g, z))
    }
}

/// Inverted dropout. Identity in eval mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub train_mode: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::DropoutRate(rate));
        }
        Ok(Self {
            rate,
            train_mode: false,
        })
    }

    /// Zeroes each element with probability `rate` and scales survivors by
    /// `1 / (1 − rate)`. Returns `x` itself in eval mode or at rate 0.
    pub fn forward<R: Rng>(&self, g: &mut Graph, x: Var, rng: &mut R) -> Result<Var, TensorError> {
        if !self.train_mode || self.rate == 0.0 {
            return Ok(x);
        }
        let shape = g.shape(x).to_vec();
        let n = shape.iter().product();
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }
}

/// Stack of dense layers: tanh hidden layers with dropout after each, then
/// a sigmoid output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub dropout: Dropout,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        dropout: f64,
    ) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(DenseLayer::new(
                store,
                init,
                &format!("{name}.{i}"),
                prev,
                h,
                Activation::Tanh,
            )?);
            prev = h;
        }
        layers.push(DenseLayer::new(
            store,
            init,
            &format!("{name}.{}", hidden.len()),
            prev,
            out_dim,
            Activation::Sigmoid,
        )?);
        Ok(Self {
            layers,
            dropout: Dropout::new(dropout)?,
        })
    }

    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        params: &[Var],
        x: Var,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        let dropout = Dropout {
            train_mode: train,
            ..self.dropout
        };
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, params, h)?;
            if i != last {
                h = dropout.forward(g, h, rng)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn layer_with(w: Tensor, b: Tensor, act: Activation) -> (ParamStore, DenseLayer) {
        let mut store = ParamStore::new();
        let (i, o) = w.dims2().unwrap();
        let weight = store.add("w", w, true);
        let bias = store.add("b", b, false);
        (
            store,
            DenseLayer {
                weight,
                bias,
                in_dim: i,
                out_dim: o,
                activation: act,
            },
        )
    }

    fn run(store: &ParamStore, layer: &DenseLayer, x: Tensor) -> Result<Tensor, TensorError> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(x);
        let y = layer.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let (s, l) = layer_with(Tensor::zeros(vec![3, 2]), Tensor::zeros(vec![2]), Activation::Sigmoid);
        let x = Tensor::new(vec![2, 3], vec![1.0, -4.0, 9.0, 0.3, 0.0, 2.0]).unwrap();
        let y = run(&s, &l, x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_layer_is_identity() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (s, l) = layer_with(eye, Tensor::zeros(vec![2]), Activation::None);
        let x = Tensor::new(vec![1, 2], vec![-3.5, 8.25]).unwrap();
        assert_eq!(run(&s, &l, x.clone()).unwrap(), x);
    }

    #[test]
    fn affine_scalar_layer() {
        let (s, l) = layer_with(
            Tensor::new(vec![1, 1], vec![2.0]).unwrap(),
            Tensor::new(vec![1], vec![1.0]).unwrap(),
            Activation::None,
        );
        let y = run(&s, &l, Tensor::new(vec![1, 1], vec![3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn input_dim_mismatch_is_shape_error() {
        let (s, l) = layer_with(Tensor::zeros(vec![3, 2]), Tensor::zeros(vec![2]), Activation::None);
        let err = run(&s, &l, Tensor::zeros(vec![1, 4])).unwrap_err();
        assert!(err.to_string().contains("dense_forward"));
    }

    #[test]
    fn initialized_biases_are_zero() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(1);
        let l = DenseLayer::new(&mut store, &mut init, "d", 4, 3, Activation::Tanh).unwrap();
        assert!(store.get(l.bias).value.data().iter().all(|&b| b == 0.0));
        let lim = (6.0f64 / 7.0).sqrt();
        assert!(store.get(l.weight).value.data().iter().all(|w| w.abs() <= lim));
    }

    #[test]
    fn eval_dropout_is_exact_identity() {
        let d = Dropout::new(0.5).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3], vec![0.1, -2.0, 7.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = d.forward(&mut g, x, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn train_dropout_zero_fraction_matches_rate() {
        for rate in [0.1, 0.5, 0.8] {
            let d = Dropout {
                rate,
                train_mode: true,
            };
            let mut g = Graph::new();
            let x = g.constant(Tensor::full(vec![100_000], 1.0));
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let y = d.forward(&mut g, x, &mut rng).unwrap();
            let vals = g.value(y).data();
            let zeros = vals.iter().filter(|&&v| v == 0.0).count() as f64 / vals.len() as f64;
            assert!((zeros - rate).abs() < 0.01, "rate {rate}: {zeros}");
            let keep = 1.0 / (1.0 - rate);
            assert!(vals.iter().all(|&v| v == 0.0 || v == keep));
        }
    }

    #[test]
    fn dropout_rate_must_be_below_one() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
        assert!(Dropout::new(0.0).is_ok());
    }
}
