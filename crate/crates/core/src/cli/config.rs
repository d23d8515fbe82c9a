use clap::ValueEnum;

use super::{usage, Cli, CliError, Command};
use crate::cohort::GeneratorConfig;
use crate::kv::KvMap;
use crate::model::{ModelConfig, ModelKind};
use crate::pipeline::SplitName;
use crate::trainer::TrainConfig;

/// Built-in model and schedule sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Small network, 60 epochs.
    Desk,
    /// Full-size network, 500 epochs.
    Full,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

const GENERATOR_KEYS: [&str; 6] = [
    "generator.n_patients",
    "generator.prevalence",
    "generator.seed",
    "generator.d_series",
    "generator.min_los",
    "generator.max_los",
];

/// Model keys a config file may set; the others follow from the cohort and
/// the command line.
const MODEL_KEYS: [&str; 6] = [
    "model.imputer_hidden",
    "model.lstm_hidden",
    "model.lstm_layers",
    "model.head_hidden",
    "model.dropout",
    "model.init_seed",
];

const EVAL_KEYS: [&str; 3] = ["eval.split", "eval.resamples", "eval.seed"];

/// Every setting of a run after defaults, config file and flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub profile: Profile,
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_split: SplitName,
    pub eval_split_name: String,
    pub eval_resamples: usize,
    pub eval_seed: u64,
}

fn allowed_keys() -> Vec<&'static str> {
    let mut keys = vec!["run.profile"];
    keys.extend(GENERATOR_KEYS);
    keys.extend(MODEL_KEYS);
    keys.extend(TrainConfig::KEYS);
    keys.extend(EVAL_KEYS);
    keys
}

impl RunConfig {
    pub fn resolve(cli: &Cli, file: Option<&str>) -> Result<Self, CliError> {
        let kv = match file {
            Some(text) => KvMap::parse(text).map_err(usage)?,
            None => KvMap::new(),
        };
        kv.reject_unknown(&allowed_keys()).map_err(usage)?;

        let mut profile: Profile = kv.parse_value("run.profile").map_err(usage)?.unwrap_or(Profile::Desk);
        if let Command::Train(a) = &cli.command {
            profile = a.profile.unwrap_or(profile);
        }
        let kind = match &cli.command {
            Command::Train(a) => a.model.into(),
            _ => ModelKind::Senn,
        };
        let (mut model, mut train) = match profile {
            Profile::Desk => (ModelConfig::desk(kind), TrainConfig::desk()),
            Profile::Full => (ModelConfig::full(kind), TrainConfig::full()),
        };
        let mut generator = GeneratorConfig::default();
        let mut eval_split_name = "test".to_string();
        let mut eval_resamples = 1000usize;
        let mut eval_seed = 0u64;

        kv.update("generator.n_patients", &mut generator.n_patients).map_err(usage)?;
        kv.update("generator.prevalence", &mut generator.prevalence).map_err(usage)?;
        kv.update("generator.seed", &mut generator.seed).map_err(usage)?;
        kv.update("generator.d_series", &mut generator.d_series).map_err(usage)?;
        kv.update("generator.min_los", &mut generator.min_los).map_err(usage)?;
        kv.update("generator.max_los", &mut generator.max_los).map_err(usage)?;
        model.update_from(&kv).map_err(usage)?;
        train.update_from(&kv).map_err(usage)?;
        kv.update("eval.split", &mut eval_split_name).map_err(usage)?;
        kv.update("eval.resamples", &mut eval_resamples).map_err(usage)?;
        kv.update("eval.seed", &mut eval_seed).map_err(usage)?;

        if let Some(seed) = cli.seed {
            generator.seed = seed;
            model.init_seed = seed;
            train.seed = seed;
            eval_seed = seed;
        }
        match &cli.command {
            Command::Generate(a) => {
                if let Some(n) = a.n {
                    generator.n_patients = n;
                }
                if let Some(p) = a.prevalence {
                    generator.prevalence = p;
                }
                generator.validate().map_err(usage)?;
            }
            Command::Train(a) => {
                if let Some(e) = a.max_epochs {
                    train.max_epochs = e;
                }
                model.validate().map_err(usage)?;
                train.validate().map_err(usage)?;
            }
            Command::Evaluate(a) => {
                if let Some(s) = &a.split {
                    eval_split_name = s.clone();
                }
                if let Some(r) = a.resamples {
                    eval_resamples = r;
                }
                if eval_resamples == 0 {
                    return Err(usage("eval.resamples must be at least 1"));
                }
            }
            Command::Explain(_) => {}
        }
        let eval_split = eval_split_name.parse().map_err(usage)?;
        Ok(Self {
            profile,
            generator,
            model,
            train,
            eval_split,
            eval_split_name,
            eval_resamples,
            eval_seed,
        })
    }

    pub fn generator_kv(&self) -> KvMap {
        let g = &self.generator;
        let mut m = KvMap::new();
        m.set("generator.n_patients", g.n_patients);
        m.set("generator.prevalence", g.prevalence);
        m.set("generator.seed", g.seed);
        m.set("generator.d_series", g.d_series);
        m.set("generator.min_los", g.min_los);
        m.set("generator.max_los", g.max_los);
        m
    }

    pub fn train_kv(&self) -> KvMap {
        let mut m = self.model.to_kv();
        m.merge(&self.train.to_kv());
        m.set("run.profile", self.profile);
        m
    }

    pub fn eval_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("eval.split", &self.eval_split_name);
        m.set("eval.resamples", self.eval_resamples);
        m.set("eval.seed", self.eval_seed);
        m
    }
}
