//! Self-explaining mortality model and its ablation baseline.
//!
//! Both share an encoder: the imputer fills missing inputs, a stacked LSTM
//! runs over the mixed series, and each hidden state is concatenated with
//! the patient's static features. The self-explaining model feeds that
//! representation to two independent heads, one predicting concept scores
//! `c ∈ (0,1)^N` and one predicting relevance gates `α ∈ (0,1)^N`, and
//! outputs `p = σ(Σ_j α_j · c_j)`. The baseline maps the representation
//! straight to `p` through one head.

mod batch;
mod explain;
mod loss;

pub use batch::Batch;
pub use explain::{write_explanations, EXPLANATION_HEADER};
pub use loss::{
    compute_losses, concept_loss, mortality_loss, relevance_weighted_probability, total_loss,
    LossVars, LossWeights, Losses, PROB_CLAMP,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{
    finite_difference_check, GradCheckConfig, GradCheckReport, Graph, Tensor, TensorError, Var,
};
use crate::cohort::{CohortError, PreparedPatient, N_ORGANS, STATIC_FEATURES};
use crate::imputer::{ImputedVars, Imputer, ImputerInput};
use crate::kv::{format_list, parse_list, KvError, KvMap};
use crate::nn::{Checkpoint, Initializer, LstmStack, Mlp, NnError, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Senn,
    Baseline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Senn => "senn",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "senn" => Ok(ModelKind::Senn),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(ModelError::Config(format!(
                "unknown model {other:?} (expected senn or baseline)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub d_series: usize,
    pub d_static: usize,
    pub n_concepts: usize,
    pub imputer_hidden: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Hidden layer sizes of every head.
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Full-size architecture: imputer 256, three LSTM layers of 128,
    /// heads 256/128/64, dropout 0.5.
    pub fn full(kind: ModelKind) -> Self {
        Self {
            kind,
            d_series: 87,
            d_static: STATIC_FEATURES,
            n_concepts: N_ORGANS,
            imputer_hidden: 256,
            lstm_hidden: 128,
            lstm_layers: 3,
            head_hidden: vec![256, 128, 64],
            dropout: 0.5,
            init_seed: 0,
        }
    }

    /// Laptop-scale architecture: imputer 32, three LSTM layers of 32,
    /// heads 32/16/8.
    pub fn desk(kind: ModelKind) -> Self {
        Self {
            imputer_hidden: 32,
            lstm_hidden: 32,
            head_hidden: vec![32, 16, 8],
            dropout: 0.1,
            ..Self::full(kind)
        }
    }

    pub const KEYS: [&'static str; 10] = [
        "model.kind",
        "model.d_series",
        "model.d_static",
        "model.n_concepts",
        "model.imputer_hidden",
        "model.lstm_hidden",
        "model.lstm_layers",
        "model.head_hidden",
        "model.dropout",
        "model.init_seed",
    ];

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("model.kind", self.kind);
        m.set("model.d_series", self.d_series);
        m.set("model.d_static", self.d_static);
        m.set("model.n_concepts", self.n_concepts);
        m.set("model.imputer_hidden", self.imputer_hidden);
        m.set("model.lstm_hidden", self.lstm_hidden);
        m.set("model.lstm_layers", self.lstm_layers);
        m.set("model.head_hidden", format_list(&self.head_hidden));
        m.set("model.dropout", self.dropout);
        m.set("model.init_seed", self.init_seed);
        m
    }

    /// Overwrites fields present in `kv`.
    pub fn update_from(&mut self, kv: &KvMap) -> Result<(), ModelError> {
        if let Some(k) = kv.get("model.kind") {
            self.kind = k.parse()?;
        }
        kv.update("model.d_series", &mut self.d_series)?;
        kv.update("model.d_static", &mut self.d_static)?;
        kv.update("model.n_concepts", &mut self.n_concepts)?;
        kv.update("model.imputer_hidden", &mut self.imputer_hidden)?;
        kv.update("model.lstm_hidden", &mut self.lstm_hidden)?;
        kv.update("model.lstm_layers", &mut self.lstm_layers)?;
        if let Some(h) = kv.get("model.head_hidden") {
            self.head_hidden = parse_list(h).ok_or_else(|| KvError::Value {
                key: "model.head_hidden".into(),
                value: h.into(),
            })?;
        }
        kv.update("model.dropout", &mut self.dropout)?;
        kv.update("model.init_seed", &mut self.init_seed)?;
        Ok(())
    }

    /// Reads a configuration in which every key must be present.
    pub fn from_kv(kv: &KvMap) -> Result<Self, ModelError> {
        for k in Self::KEYS {
            if !kv.contains(k) {
                return Err(KvError::Missing(k.into()).into());
            }
        }
        let mut c = Self::full(ModelKind::Senn);
        c.update_from(kv)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_series == 0
            || self.n_concepts == 0
            || self.imputer_hidden == 0
            || self.lstm_hidden == 0
            || self.lstm_layers == 0
            || self.head_hidden.contains(&0)
        {
            return Err(ModelError::Config(format!("dimensions must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Heads {
    Senn { concept: Mlp, relevance: Mlp },
    Baseline { head: Mlp },
}

/// Parameters plus the layer layout that indexes into them.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub imputer: Imputer,
    pub lstm: LstmStack,
    pub heads: Heads,
}

/// Graph handles of one forward pass over a [`Batch`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub imputed: ImputedVars,
    /// Top LSTM layer, one `[B × H]` per step.
    pub hidden: Vec<Var>,
    /// `[T·B × 1]`
    pub prob: Var,
    /// `[T·B × N]`, self-explaining model only.
    pub concepts: Option<Var>,
    pub relevance: Option<Var>,
}

/// Predictions for one stay, one row per hour.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub patient_id: u64,
    pub mortality_prob: Vec<f64>,
    /// `[T × N]`
    pub concepts: Option<Tensor>,
    /// `[T × N]`
    pub relevance: Option<Tensor>,
}

impl Model {
    /// Builds a freshly initialized model. Encoder parameters are created
    /// before head parameters, so both kinds share encoder weights for the
    /// same seed.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(config.init_seed);
        let imputer = Imputer::new(
            &mut store,
            &mut init,
            "imputer",
            config.d_series,
            config.imputer_hidden,
        )?;
        let lstm = LstmStack::new(
            &mut store,
            &mut init,
            "lstm",
            config.d_series,
            config.lstm_hidden,
            config.lstm_layers,
        )?;
        let f_dim = config.lstm_hidden + config.d_static;
        let heads = match config.kind {
            ModelKind::Senn => Heads::Senn {
                concept: Mlp::new(
                    &mut store,
                    &mut init,
                    "concept_head",
                    f_dim,
                    &config.head_hidden,
                    config.n_concepts,
                    config.dropout,
                )?,
                relevance: Mlp::new(
                    &mut store,
                    &mut init,
                    "relevance_head",
                    f_dim,
                    &config.head_hidden,
                    config.n_concepts,
                    config.dropout,
                )?,
            },
            ModelKind::Baseline => Heads::Baseline {
                head: Mlp::new(
                    &mut store,
                    &mut init,
                    "mortality_head",
                    f_dim,
                    &config.head_hidden,
                    1,
                    config.dropout,
                )?,
            },
        };
        Ok(Self {
            config,
            store,
            imputer,
            lstm,
            heads,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Parameters plus the model configuration as metadata.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_store(&self.store);
        c.metadata = self
            .config
            .to_kv()
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let kv = KvMap::from_pairs(ckpt.metadata.iter().cloned());
        let mut model = Self::new(ModelConfig::from_kv(&kv)?)?;
        ckpt.load_into(&mut model.store)?;
        Ok(model)
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        let c = &self.config;
        let d_x = batch.values.first().map_or(0, |v| v.shape()[1]);
        if d_x != c.d_series {
            return Err(TensorError::shape("model_forward", &[d_x], &[c.d_series]).into());
        }
        if batch.statics.shape()[1] != c.d_static {
            return Err(
                TensorError::shape("model_forward", batch.statics.shape(), &[batch.batch_size(), c.d_static]).into(),
            );
        }
        Ok(())
    }

    /// Imputer, LSTM, and the per-row representation `h_t ⊕ x_s`
    /// `[T·B × (H + d_s)]`.
    pub fn encode(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &Batch,
    ) -> Result<(ImputedVars, Vec<Var>, Var), ModelError> {
        self.check_batch(batch)?;
        let imputed = self.imputer.forward(
            g,
            p,
            &ImputerInput {
                values: &batch.values,
                masks: &batch.masks,
                steps: &batch.steps,
            },
        )?;
        let hidden = self.lstm.forward(g, p, &imputed.x_mixed, &batch.steps)?;
        let h_all = if hidden.len() == 1 {
            hidden[0]
        } else {
            g.concat(&hidden, 0)?
        };
        let features = if self.config.d_static == 0 {
            h_all
        } else {
            let tiled: Vec<f64> = (0..hidden.len())
                .flat_map(|_| batch.statics.data().iter().copied())
                .collect();
            let s = g.constant(Tensor::new(
                vec![hidden.len() * batch.batch_size(), self.config.d_static],
                tiled,
            )?);
            g.concat(&[h_all, s], 1)?
        };
        Ok((imputed, hidden, features))
    }

    /// Forward pass. Dropout is active only when `dropout_rng` is given.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &Batch,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardVars, ModelError> {
        let (imputed, hidden, f) = self.encode(g, p, batch)?;
        let train = dropout_rng.is_some();
        let mut idle = ChaCha8Rng::seed_from_u64(0);
        let rng = dropout_rng.unwrap_or(&mut idle);
        let (prob, concepts, relevance) = match &self.heads {
            Heads::Senn { concept, relevance } => {
                let c = concept.forward(g, p, f, train, rng)?;
                let a = relevance.forward(g, p, f, train, rng)?;
                let ac = g.mul(a, c)?;
                let logit = g.sum_axis(ac, 1)?;
                (g.sigmoid(logit), Some(c), Some(a))
            }
            Heads::Baseline { head } => (head.forward(g, p, f, train, rng)?, None, None),
        };
        Ok(ForwardVars {
            imputed,
            hidden,
            prob,
            concepts,
            relevance,
        })
    }

    /// Masked loss terms of a forward pass.
    pub fn losses(
        &self,
        g: &mut Graph,
        fwd: &ForwardVars,
        batch: &Batch,
        w: &LossWeights,
    ) -> Result<LossVars, ModelError> {
        let valid = batch.valid_rows();
        let mort = mortality_loss(g, fwd.prob, &batch.mortality_labels, &valid)?;
        let aux = match fwd.concepts {
            Some(c) => Some(concept_loss(g, c, &batch.concept_labels, &valid)?),
            None => None,
        };
        let total = total_loss(g, w, mort, aux, fwd.imputed.loss)?;
        Ok(LossVars {
            mort,
            aux,
            impute: fwd.imputed.loss,
            total,
        })
    }

    /// Splits stacked outputs back into per-patient trajectories.
    pub fn outputs(&self, g: &Graph, fwd: &ForwardVars, batch: &Batch) -> Vec<ModelOutput> {
        let b = batch.batch_size();
        let n_c = self.config.n_concepts;
        let prob = g.value(fwd.prob).data();
        let gather = |v: Option<Var>, i: usize, len: usize| {
            v.map(|v| {
                let data = g.value(v).data();
                let rows = (0..len).flat_map(|t| {
                    let r = t * b + i;
                    data[r * n_c..(r + 1) * n_c].iter().copied()
                });
                Tensor::new(vec![len, n_c], rows.collect()).expect("row count")
            })
        };
        batch
            .patient_ids
            .iter()
            .zip(&batch.lengths)
            .enumerate()
            .map(|(i, (&id, &len))| ModelOutput {
                patient_id: id,
                mortality_prob: (0..len).map(|t| prob[t * b + i]).collect(),
                concepts: gather(fwd.concepts, i, len),
                relevance: gather(fwd.relevance, i, len),
            })
            .collect()
    }

    /// Eval-mode predictions in input order.
    pub fn predict(
        &self,
        patients: &[PreparedPatient],
        batch_size: usize,
    ) -> Result<Vec<ModelOutput>, ModelError> {
        let mut out = Vec::with_capacity(patients.len());
        for chunk in patients.chunks(batch_size.max(1)) {
            let refs: Vec<&PreparedPatient> = chunk.iter().collect();
            let batch = Batch::from_patients(&refs)?;
            let mut g = Graph::new();
            let p = self.store.bind(&mut g);
            let fwd = self.forward(&mut g, &p, &batch, None)?;
            out.extend(self.outputs(&g, &fwd, &batch));
        }
        Ok(out)
    }

    /// Eval-mode losses over all patients: each batch's losses weighted by
    /// its number of valid hours.
    pub fn evaluate(
        &self,
        patients: &[PreparedPatient],
        batch_size: usize,
        w: &LossWeights,
    ) -> Result<Losses, ModelError> {
        let mut acc = [0.0; 4];
        let mut total_hours = 0.0;
        for chunk in patients.chunks(batch_size.max(1)) {
            let refs: Vec<&PreparedPatient> = chunk.iter().collect();
            let batch = Batch::from_patients(&refs)?;
            let mut g = Graph::new();
            let p = self.store.bind(&mut g);
            let fwd = self.forward(&mut g, &p, &batch, None)?;
            let l = self.losses(&mut g, &fwd, &batch, w)?.values(&g);
            let h = batch.n_valid() as f64;
            acc[0] += h * l.mort;
            acc[1] += h * l.aux.unwrap_or(0.0);
            acc[2] += h * l.impute;
            acc[3] += h * l.total;
            total_hours += h;
        }
        if total_hours == 0.0 {
            return Err(ModelError::Config("no patients to evaluate".into()));
        }
        Ok(Losses {
            mort: acc[0] / total_hours,
            aux: matches!(self.heads, Heads::Senn { .. }).then(|| acc[1] / total_hours),
            impute: acc[2] / total_hours,
            total: acc[3] / total_hours,
        })
    }
}

/// Checks the gradient of the total loss with respect to every parameter
/// against central differences, with dropout off.
pub fn loss_gradcheck(
    model: &Model,
    batch: &Batch,
    weights: &LossWeights,
    config: GradCheckConfig,
) -> Result<GradCheckReport, ModelError> {
    let as_tensor_error = |e: ModelError| match e {
        ModelError::Tensor(t) => t,
        other => TensorError::InvalidArgument(other.to_string()),
    };
    let f = |g: &mut Graph, p: &[Var]| -> Result<Var, TensorError> {
        let fwd = model.forward(g, p, batch, None).map_err(as_tensor_error)?;
        let l = model.losses(g, &fwd, batch, weights).map_err(as_tensor_error)?;
        Ok(l.total)
    };
    Ok(finite_difference_check(f, &model.store.values(), config)?)
}

#[cfg(test)]
mod tests;
