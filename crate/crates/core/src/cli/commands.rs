use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::{runtime, usage, CliError, EvaluateArgs, ExplainArgs, GenerateArgs, TrainArgs};
use crate::cohort::{
    generate_cohort, prevalence, read_cohort, write_cohort, Organ, PatientRecord, PreparedPatient, ScalerParams,
    SofaTable,
};
use crate::kv::{parse_list, KvMap};
use crate::metrics::{
    bootstrap_compare, concept_regression_report, pooled, pr_curve, roc_curve, write_concept_pairs, write_curve,
    EvalSample, Metric, MetricReport,
};
use crate::model::{write_explanations, Model, ModelKind};
use crate::nn::Checkpoint;
use crate::pipeline::{
    concept_label_means, evaluate_samples, model_config_for, prepare_cohort, prepare_cohort_with_scaler, train_model,
    PipelineError,
};
use crate::trainer::{bundle_checkpoint, unbundle_checkpoint, write_epoch_log, write_epoch_timing, TrainError};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_resolved(out_dir: &Path, command: &str, kv: &KvMap) -> Result<(), CliError> {
    write_text(&out_dir.join(format!("{command}.resolved.conf")), &kv.to_text())
}

fn load_cohort(path: &Path) -> Result<Vec<PatientRecord>, CliError> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open cohort {}: {e}", path.display())))?;
    read_cohort(BufReader::new(file)).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Model, ScalerParams), CliError> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let ckpt = Checkpoint::read_from(BufReader::new(file)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let (model, scaler) = unbundle_checkpoint(&ckpt).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok((ckpt, model, scaler))
}

fn pipeline_err(e: PipelineError) -> CliError {
    runtime(e)
}

pub fn generate(cfg: &RunConfig, out_dir: &Path, args: &GenerateArgs) -> Result<(), CliError> {
    let records = generate_cohort(&cfg.generator).map_err(usage)?;
    let path = out_dir.join(&args.out);
    let mut out = create(&path)?;
    write_cohort(&mut out, &records).map_err(runtime)?;
    out.flush().map_err(runtime)?;
    let mut kv = cfg.generator_kv();
    kv.set("io.cohort", path.display());
    write_resolved(out_dir, "generate", &kv)?;
    println!(
        "wrote {} patients to {} (prevalence {:.4})",
        records.len(),
        path.display(),
        prevalence(&records)
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, out_dir: &Path, args: &TrainArgs) -> Result<(), CliError> {
    let records = load_cohort(&args.cohort)?;
    let cohort = prepare_cohort(&records, cfg.train.split, cfg.train.seed).map_err(pipeline_err)?;
    let kind = ModelKind::from(args.model);
    let model_cfg = model_config_for(&cfg.model, kind, &cohort);
    let mut kv = cfg.train_kv();
    kv.merge(&model_cfg.to_kv());
    kv.set("io.cohort", args.cohort.display());
    write_resolved(out_dir, &format!("train_{kind}"), &kv)?;

    let ckpt_path = out_dir.join(format!("{kind}.ckpt"));
    let mut history = Vec::new();
    let result = train_model(model_cfg, &cohort, &cfg.train, &mut |r| {
        println!(
            "epoch {:>3}  train {:.5}  val {:.5}{}",
            r.epoch,
            r.train.total,
            r.val.total,
            if r.improved { "  *" } else { "" }
        );
        history.push(r.clone());
    });
    let write_logs = |history: &[_]| -> Result<(), CliError> {
        let mut log = create(&out_dir.join(format!("{kind}_epoch_log.csv")))?;
        write_epoch_log(&mut log, history).map_err(runtime)?;
        log.flush().map_err(runtime)?;
        let mut timing = create(&out_dir.join(format!("{kind}_epoch_timing.csv")))?;
        write_epoch_timing(&mut timing, history).map_err(runtime)?;
        timing.flush().map_err(runtime)
    };
    let save = |model: &Model, best_epoch: usize| -> Result<(), CliError> {
        let ckpt = bundle_checkpoint(model, &cohort.scaler, &cfg.train, best_epoch);
        let mut out = create(&ckpt_path)?;
        ckpt.write_to(&mut out).map_err(runtime)?;
        out.flush().map_err(runtime)
    };
    match result {
        Ok(outcome) => {
            write_logs(&outcome.history)?;
            save(&outcome.best, outcome.best_epoch)?;
            println!(
                "best epoch {} (val loss {:.5}); checkpoint {}",
                outcome.best_epoch,
                outcome.best_val.total,
                ckpt_path.display()
            );
            Ok(())
        }
        Err(PipelineError::Train(TrainError::Diverged { epoch, reason, last_good })) => {
            write_logs(&history)?;
            let best_epoch = history.iter().filter(|r| r.improved).map(|r| r.epoch).last().unwrap_or(0);
            save(&last_good, best_epoch)?;
            Err(runtime(format!(
                "training diverged in epoch {epoch}: {reason}; last good checkpoint kept at {}",
                ckpt_path.display()
            )))
        }
        Err(e) => Err(pipeline_err(e)),
    }
}

fn split_settings(ckpt: &Checkpoint) -> Result<([f64; 3], u64), CliError> {
    let split = ckpt
        .meta("train.split")
        .and_then(parse_list::<f64>)
        .and_then(|v| <[f64; 3]>::try_from(v).ok())
        .ok_or_else(|| runtime("checkpoint has no valid train.split"))?;
    let seed = ckpt
        .meta("train.seed")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| runtime("checkpoint has no valid train.seed"))?;
    Ok((split, seed))
}

struct Evaluated {
    label: String,
    kind: ModelKind,
    samples: Vec<EvalSample>,
    train_means: Vec<f64>,
}

fn evaluate_checkpoint(
    cfg: &RunConfig,
    records: &[PatientRecord],
    path: &Path,
) -> Result<Evaluated, CliError> {
    let (ckpt, model, scaler) = load_checkpoint(path)?;
    let first = &records[0];
    if model.config.d_series != first.series.features() || model.config.d_static != first.static_features.len() {
        return Err(runtime(format!(
            "checkpoint {} expects {} series and {} static features, cohort has {} and {}",
            path.display(),
            model.config.d_series,
            model.config.d_static,
            first.series.features(),
            first.static_features.len()
        )));
    }
    let (split, seed) = split_settings(&ckpt)?;
    let cohort = prepare_cohort_with_scaler(records, split, seed, &scaler).map_err(pipeline_err)?;
    let patients = cohort.split(cfg.eval_split);
    let samples = evaluate_samples(&model, patients).map_err(pipeline_err)?;
    Ok(Evaluated {
        label: model.kind().to_string(),
        kind: model.kind(),
        samples,
        train_means: concept_label_means(&cohort.train),
    })
}

pub fn evaluate(cfg: &RunConfig, out_dir: &Path, args: &EvaluateArgs) -> Result<(), CliError> {
    let records = load_cohort(&args.cohort)?;
    if records.is_empty() {
        return Err(usage("cohort is empty"));
    }
    let mut kv = cfg.eval_kv();
    kv.set("io.cohort", args.cohort.display());
    kv.set("io.checkpoint", args.checkpoint.display());
    if let Some(b) = &args.compare {
        kv.set("io.compare", b.display());
    }
    write_resolved(out_dir, "evaluate", &kv)?;

    let mut models = vec![evaluate_checkpoint(cfg, &records, &args.checkpoint)?];
    if let Some(b) = &args.compare {
        models.push(evaluate_checkpoint(cfg, &records, b)?);
        if models[0].label == models[1].label {
            models[0].label = format!("{}_a", models[0].label);
            models[1].label = format!("{}_b", models[1].label);
        }
    }

    let mut report = String::new();
    let mut csv = String::from("model,metric,point,lower,upper,n_resamples\n");
    let mut comparisons = String::from("metric,delta,lower,upper,p_value,redraws\n");
    for metric in [Metric::Auroc, Metric::Auprc] {
        let a = &models[0];
        let b = models.get(1).unwrap_or(a);
        let c = bootstrap_compare(&a.samples, &b.samples, metric, cfg.eval_resamples, cfg.eval_seed)
            .map_err(runtime)?;
        let mut line = |label: &str, r: &MetricReport| {
            report.push_str(&format!("{label} {} {r}\n", metric.name()));
            csv.push_str(&format!("{label},{}\n", r.to_csv_row()));
        };
        line(&a.label, &c.a);
        if models.len() == 2 {
            line(&b.label, &c.b);
            report.push_str(&format!(
                "{}-{} {} {} p={:.4}\n",
                a.label,
                b.label,
                c.delta.name,
                c.delta,
                c.p_value
            ));
            comparisons.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.delta.name, c.delta.point, c.delta.lower, c.delta.upper, c.p_value, c.redraws
            ));
        }
    }
    write_text(&out_dir.join("metrics.csv"), &csv)?;
    if models.len() == 2 {
        write_text(&out_dir.join("comparison.csv"), &comparisons)?;
    }

    let names: Vec<&str> = Organ::ALL.iter().map(|o| o.name()).collect();
    for m in &models {
        let (scores, labels) = pooled(&m.samples);
        let roc = roc_curve(&scores, &labels).map_err(runtime)?;
        let pr = pr_curve(&scores, &labels).map_err(runtime)?;
        let mut out = create(&out_dir.join(format!("roc_{}.csv", m.label)))?;
        write_curve(&mut out, "fpr,tpr,threshold", &roc).map_err(runtime)?;
        out.flush().map_err(runtime)?;
        let mut out = create(&out_dir.join(format!("pr_{}.csv", m.label)))?;
        write_curve(&mut out, "recall,precision,threshold", &pr).map_err(runtime)?;
        out.flush().map_err(runtime)?;

        if m.kind == ModelKind::Senn {
            let rep = concept_regression_report(&m.samples, &m.train_means).map_err(runtime)?;
            let mut text = String::from("concept,mse,baseline_mse,n\n");
            for row in &rep.rows {
                let name = names[row.concept];
                text.push_str(&format!("{name},{},{},{}\n", row.mse, row.baseline_mse, row.n));
                report.push_str(&format!(
                    "{} concept {name} mse {:.5} (mean baseline {:.5})\n",
                    m.label, row.mse, row.baseline_mse
                ));
            }
            write_text(&out_dir.join(format!("concept_mse_{}.csv", m.label)), &text)?;
            let mut out = create(&out_dir.join(format!("concept_pairs_{}.csv", m.label)))?;
            write_concept_pairs(&mut out, &rep, &names).map_err(runtime)?;
            out.flush().map_err(runtime)?;
        }
    }
    write_text(&out_dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn explain(_cfg: &RunConfig, out_dir: &Path, args: &ExplainArgs) -> Result<(), CliError> {
    let records = load_cohort(&args.cohort)?;
    let (_, model, scaler) = load_checkpoint(&args.checkpoint)?;
    if model.kind() == ModelKind::Baseline {
        return Err(usage("baseline has no explanations"));
    }
    let raw = records
        .iter()
        .find(|r| r.patient_id == args.patient)
        .ok_or_else(|| usage(format!("no patient with id {} in {}", args.patient, args.cohort.display())))?;
    if model.config.d_series != raw.series.features() {
        return Err(runtime(format!(
            "checkpoint expects {} series features, cohort has {}",
            model.config.d_series,
            raw.series.features()
        )));
    }
    let mut kv = KvMap::new();
    kv.set("io.cohort", args.cohort.display());
    kv.set("io.checkpoint", args.checkpoint.display());
    kv.set("explain.patient", args.patient);
    write_resolved(out_dir, "explain", &kv)?;

    let patient = PreparedPatient::new(raw, &scaler, &SofaTable::default()).map_err(runtime)?;
    let outputs = model.predict(std::slice::from_ref(&patient), 1).map_err(runtime)?;
    let path: PathBuf = out_dir.join(format!("explain_{}.csv", args.patient));
    let mut out = create(&path)?;
    write_explanations(&mut out, &outputs, &[&patient]).map_err(runtime)?;
    out.flush().map_err(runtime)?;
    println!("wrote {} hours to {}", patient.record.los_hours(), path.display());
    Ok(())
}
