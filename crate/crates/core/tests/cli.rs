use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny network for fast runs
model.imputer_hidden=4
model.lstm_hidden=4
model.lstm_layers=1
model.head_hidden=4
train.max_epochs=2
train.batch_size=16
eval.resamples=50
generator.d_series=8
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icu-senn"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(dir: &Path) -> String {
    let conf = dir.join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let c = conf.to_str().unwrap().to_string();
    let o = run(dir, &["--config", &c, "--seed", "3", "generate", "--n", "60", "--prevalence", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    c
}

#[test]
fn generate_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = setup(d);
    let first = std::fs::read(d.join("cohort.csv")).unwrap();
    let o = run(d, &["--config", &conf, "--seed", "3", "generate", "--n", "60", "--prevalence", "0.2"]);
    assert!(stdout(&o).contains("prevalence 0.2000"), "{}", stdout(&o));
    assert_eq!(first, std::fs::read(d.join("cohort.csv")).unwrap());
    let resolved = std::fs::read_to_string(d.join("generate.resolved.conf")).unwrap();
    assert!(resolved.contains("generator.n_patients=60"));
    assert!(resolved.contains("generator.seed=3"));

    assert_eq!(run(d, &["generate", "--n", "0"]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "model.lstm_hiden=4\n").unwrap();
    let o = run(dir.path(), &["--config", conf.to_str().unwrap(), "generate", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.lstm_hiden"));
}

#[test]
fn missing_cohort_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train", "--cohort", "/nonexistent/cohort.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot open cohort"));
}

#[test]
fn train_evaluate_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = setup(d);
    let cohort = d.join("cohort.csv");
    let cohort = cohort.to_str().unwrap();
    for kind in ["senn", "baseline"] {
        let o = run(d, &["--config", &conf, "--seed", "3", "train", "--cohort", cohort, "--model", kind]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(d.join(format!("{kind}.ckpt")).exists());
        let log = std::fs::read_to_string(d.join(format!("{kind}_epoch_log.csv"))).unwrap();
        assert_eq!(log.lines().count(), 3);
        let resolved = std::fs::read_to_string(d.join(format!("train_{kind}.resolved.conf"))).unwrap();
        assert!(resolved.contains(&format!("model.kind={kind}")));
        assert!(resolved.contains("model.d_series=8"));
    }
    let baseline = std::fs::read(d.join("baseline.ckpt")).unwrap();
    let text = String::from_utf8_lossy(&baseline);
    assert!(!text.contains("concept_head") && !text.contains("relevance_head"));

    let senn = d.join("senn.ckpt");
    let base = d.join("baseline.ckpt");
    let o = run(
        d,
        &[
            "--config", &conf, "evaluate", "--cohort", cohort,
            "--checkpoint", senn.to_str().unwrap(),
            "--compare", base.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.contains("senn-baseline delta_auroc"), "{report}");
    let shape = |s: &str| {
        let b: Vec<char> = s.chars().collect();
        b.len() == 18 && b[5] == '[' && b[11] == '-' && b[17] == ']'
    };
    let first = report.lines().next().unwrap();
    assert!(shape(first.rsplit(' ').next().unwrap()), "{first}");
    let mse = std::fs::read_to_string(d.join("concept_mse_senn.csv")).unwrap();
    assert_eq!(mse.lines().count(), 7);
    assert!(!d.join("concept_mse_baseline.csv").exists());
    assert!(std::fs::read_to_string(d.join("comparison.csv")).unwrap().contains("delta_auprc"));
    assert!(std::fs::read_to_string(d.join("roc_senn.csv")).unwrap().starts_with("fpr,tpr,threshold"));
    assert!(d.join("pr_baseline.csv").exists());

    let o = run(d, &["explain", "--cohort", cohort, "--checkpoint", senn.to_str().unwrap(), "--patient", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(d.join("explain_7.csv")).unwrap();
    let records = std::fs::read_to_string(&cohort).unwrap();
    let los: usize = records
        .lines()
        .find(|l| l.starts_with("P,7,"))
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(rows.lines().count(), los + 1);
    // recombine from the exported columns
    let header: Vec<&str> = rows.lines().next().unwrap().split(',').collect();
    let col = |p: &str| header.iter().enumerate().filter(|(_, h)| h.starts_with(p)).map(|(i, _)| i).collect::<Vec<_>>();
    let (conc, rel) = (col("concept_"), col("relevance_"));
    let pred = header.iter().position(|h| *h == "y_pred").unwrap();
    for line in rows.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let s: f64 = conc.iter().zip(&rel).map(|(&c, &r)| v[c] * v[r]).sum();
        assert!((1.0 / (1.0 + (-s).exp()) - v[pred]).abs() < 1e-9);
    }

    let o = run(d, &["explain", "--cohort", cohort, "--checkpoint", base.to_str().unwrap(), "--patient", "7"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("baseline has no explanations"));
    let o = run(d, &["explain", "--cohort", cohort, "--checkpoint", senn.to_str().unwrap(), "--patient", "9999"]);
    assert_eq!(o.status.code(), Some(2));
}
