use crate::autodiff::{sigmoid, Graph, Tensor, Var};

use super::ModelError;

/// Probabilities are clamped to `[EPS, 1 − EPS]` inside the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mortality: f64,
    pub auxiliary: f64,
    pub imputation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mortality: 1.0,
            auxiliary: 10.0,
            imputation: 0.001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.mortality) && ok(self.auxiliary) && ok(self.imputation) {
            Ok(())
        } else {
            Err(ModelError::Config(format!("loss weights must be non-negative: {self:?}")))
        }
    }

    /// `λ1·mort + (λ2·aux + λ3·impute)`. The two small terms are added
    /// first; the computation graph uses the same order.
    pub fn combine(&self, mort: f64, aux: f64, impute: f64) -> f64 {
        self.mortality * mort + (self.auxiliary * aux + self.imputation * impute)
    }
}

/// Scalar loss values of one evaluation. `aux` is `None` for the baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Losses {
    pub mort: f64,
    pub aux: Option<f64>,
    pub impute: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub mort: Var,
    pub aux: Option<Var>,
    pub impute: Var,
    pub total: Var,
}

impl LossVars {
    pub fn values(&self, g: &Graph) -> Losses {
        let item = |v: Var| g.value(v).item().expect("scalar loss");
        Losses {
            mort: item(self.mort),
            aux: self.aux.map(item),
            impute: item(self.impute),
            total: item(self.total),
        }
    }
}

fn check_labels(labels: &[f64]) -> Result<(), ModelError> {
    match labels.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        Some(y) => Err(ModelError::Config(format!("label {y} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn n_valid(valid: &[bool]) -> Result<usize, ModelError> {
    match valid.iter().filter(|v| **v).count() {
        0 => Err(ModelError::Config("no valid timestep in loss mask".into())),
        n => Ok(n),
    }
}

/// Mean binary cross-entropy over valid rows of `prob: [R × 1]`.
pub fn mortality_loss(
    g: &mut Graph,
    prob: Var,
    labels: &Tensor,
    valid: &[bool],
) -> Result<Var, ModelError> {
    check_labels(labels.data())?;
    let n = n_valid(valid)? as f64;
    let shape = g.shape(prob).to_vec();
    let coef = |pos: bool| -> Result<Tensor, ModelError> {
        let data = labels
            .data()
            .iter()
            .zip(valid)
            .map(|(&y, &v)| {
                let w = if pos { y } else { 1.0 - y };
                if v { -w / n } else { 0.0 }
            })
            .collect();
        Ok(Tensor::new(shape.clone(), data)?)
    };
    let a = g.constant(coef(true)?);
    let b = g.constant(coef(false)?);
    let p = g.clamp(prob, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let log_p = g.log(p)?;
    let q = g.scale(p, -1.0);
    let q = g.add_scalar(q, 1.0);
    let log_q = g.log(q)?;
    let pos = g.mul(a, log_p)?;
    let neg = g.mul(b, log_q)?;
    let s = g.add(pos, neg)?;
    Ok(g.sum(s))
}

/// Mean squared error over every concept of every valid row.
pub fn concept_loss(
    g: &mut Graph,
    concepts: Var,
    labels: &Tensor,
    valid: &[bool],
) -> Result<Var, ModelError> {
    check_labels(labels.data())?;
    let n = n_valid(valid)?;
    let shape = g.shape(concepts).to_vec();
    let n_c = shape[1];
    let w = 1.0 / (n * n_c) as f64;
    let weights: Vec<f64> = valid
        .iter()
        .flat_map(|&v| std::iter::repeat_n(if v { w } else { 0.0 }, n_c))
        .collect();
    let wv = g.constant(Tensor::new(shape, weights)?);
    let y = g.constant(labels.clone());
    let d = g.sub(concepts, y)?;
    let sq = g.square(d);
    let weighted = g.mul(sq, wv)?;
    Ok(g.sum(weighted))
}

/// `λ1·mort + (λ2·aux + λ3·impute)`, the graph counterpart of
/// [`LossWeights::combine`].
pub fn total_loss(
    g: &mut Graph,
    w: &LossWeights,
    mort: Var,
    aux: Option<Var>,
    impute: Var,
) -> Result<Var, ModelError> {
    let m = g.scale(mort, w.mortality);
    let i = g.scale(impute, w.imputation);
    let small = match aux {
        Some(a) => {
            let a = g.scale(a, w.auxiliary);
            g.add(a, i)?
        }
        None => i,
    };
    Ok(g.add(m, small)?)
}

/// Plain-number version of the loss terms for exported predictions.
/// `concepts`/`concept_labels` are row-major `[T × N]`; `aux` is computed
/// only when concepts are given.
pub fn compute_losses(
    prob: &[f64],
    concepts: Option<(&[f64], &[f64])>,
    mortality_labels: &[f64],
    valid: &[bool],
    impute_loss: f64,
    w: &LossWeights,
) -> Result<Losses, ModelError> {
    check_labels(mortality_labels)?;
    let n = n_valid(valid)? as f64;
    let mut mort = 0.0;
    for ((&p, &y), &v) in prob.iter().zip(mortality_labels).zip(valid) {
        if v {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            mort += -y / n * p.ln() + -(1.0 - y) / n * (1.0 - p).ln();
        }
    }
    let aux = match concepts {
        None => None,
        Some((c, labels)) => {
            check_labels(labels)?;
            let n_c = c.len() / valid.len().max(1);
            let wgt = 1.0 / (n * n_c as f64);
            let mut s = 0.0;
            for (row, &v) in valid.iter().enumerate() {
                if v {
                    for j in 0..n_c {
                        let d = c[row * n_c + j] - labels[row * n_c + j];
                        s += d * d * wgt;
                    }
                }
            }
            Some(s)
        }
    };
    let total = match aux {
        Some(a) => w.combine(mort, a, impute_loss),
        None => w.mortality * mort + w.imputation * impute_loss,
    };
    Ok(Losses {
        mort,
        aux,
        impute: impute_loss,
        total,
    })
}

/// Mortality probability implied by an explanation:
/// `σ(Σ_j relevance_j · concept_j)`.
pub fn relevance_weighted_probability(concepts: &[f64], relevance: &[f64]) -> f64 {
    let s: f64 = concepts.iter().zip(relevance).map(|(c, a)| a * c).sum();
    sigmoid(s)
}
