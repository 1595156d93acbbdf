use std::fmt::Write as _;
use std::path::Path;

use irha_core::classifier::{fit_forest, fit_gnb, fit_tree, ModelKind};
use irha_core::control::{run_scenario, Localizer};
use irha_core::eval::{evaluate, Evaluation};
use irha_core::fingerprint::split;
use irha_core::radio::collect_fingerprints;
use irha_core::{FingerprintDatabase, Model, RandomStream};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Failure;

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn load_dataset(cfg: &RunConfig) -> Result<FingerprintDatabase, Failure> {
    let path = cfg.dataset_path();
    if !path.is_file() {
        return Err(Failure::config(format!(
            "dataset {} does not exist; run `irha fingerprint` first",
            path.display()
        )));
    }
    FingerprintDatabase::load_csv(&path).map_err(|e| Failure::runtime(format!("dataset {}: {e}", path.display())))
}

fn load_model(cfg: &RunConfig) -> Result<Model, Failure> {
    let path = cfg.model_path();
    if !path.is_file() {
        return Err(Failure::config(format!(
            "model {} does not exist; run `irha train` first",
            path.display()
        )));
    }
    Model::load(&path).map_err(|e| Failure::runtime(e.to_string()))
}

fn split_dataset(cfg: &RunConfig) -> Result<(FingerprintDatabase, FingerprintDatabase), Failure> {
    let db = load_dataset(cfg)?;
    split(&db, &cfg.split_spec()).map_err(|e| Failure::runtime(format!("split: {e}")))
}

fn fit(kind: ModelKind, cfg: &RunConfig, train: &FingerprintDatabase) -> Result<Model, Failure> {
    let c = &cfg.classifier;
    let model = match kind {
        ModelKind::Tree => fit_tree(train, &c.tree).map(Model::Tree),
        ModelKind::Gnb => fit_gnb(train).map(Model::Gnb),
        ModelKind::Forest => fit_forest(train, &c.forest, cfg.seed).map(Model::Forest),
    };
    model.map_err(|e| Failure::runtime(format!("training: {e}")))
}

fn score(model: &Model, test: &FingerprintDatabase) -> Result<Evaluation<f64>, Failure> {
    evaluate(model, test).map_err(|e| Failure::runtime(format!("evaluation: {e}")))
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Tree => "tree",
        ModelKind::Gnb => "gnb",
        ModelKind::Forest => "forest",
    }
}

fn write_metrics(cfg: &RunConfig, evaluation: &Evaluation<f64>) -> Result<(), Failure> {
    write(&cfg.out.join("metrics.json"), &to_json(&evaluation.report()))?;
    write(&cfg.out.join("roc.csv"), &evaluation.roc_csv())?;
    let report = evaluation.report();
    println!("test samples: {}", report.samples);
    println!("accuracy: {:.4}", report.accuracy);
    println!("micro AUC: {:.4}  macro AUC: {:.4}", report.micro_auc, report.macro_auc);
    print!("{}", evaluation.confusion.render());
    Ok(())
}

pub fn fingerprint(cfg: &RunConfig) -> Result<(), Failure> {
    let env = cfg.environment()?;
    let mut rng = RandomStream::new(cfg.seed, "fingerprint");
    let db = collect_fingerprints(&env, cfg.samples_per_room, &mut rng);
    let path = cfg.dataset_path();
    write(&path, &db.to_csv_string())?;
    println!("wrote {} samples to {}", db.len(), path.display());
    for (room, n) in db.class_counts() {
        println!("room {room}: {n}");
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let (train, test) = split_dataset(cfg)?;
    let model = fit(cfg.classifier.kind, cfg, &train)?;
    let evaluation = score(&model, &test)?;
    let path = cfg.model_path();
    write(&path, &(model.to_json() + "\n"))?;
    println!(
        "trained {} on {} samples, wrote {}",
        kind_name(cfg.classifier.kind),
        train.len(),
        path.display()
    );
    write_metrics(cfg, &evaluation)
}

pub fn eval(cfg: &RunConfig) -> Result<(), Failure> {
    let model = load_model(cfg)?;
    let (_, test) = split_dataset(cfg)?;
    let evaluation = score(&model, &test)?;
    write_metrics(cfg, &evaluation)
}

#[derive(Serialize)]
struct ComparisonRow {
    classifier: &'static str,
    accuracy: f64,
    macro_auc: f64,
    micro_auc: f64,
}

pub fn compare(cfg: &RunConfig) -> Result<(), Failure> {
    let (train, test) = split_dataset(cfg)?;
    let mut rows = Vec::new();
    for kind in [ModelKind::Tree, ModelKind::Gnb, ModelKind::Forest] {
        let report = score(&fit(kind, cfg, &train)?, &test)?.report();
        rows.push(ComparisonRow {
            classifier: kind_name(kind),
            accuracy: report.accuracy,
            macro_auc: report.macro_auc,
            micro_auc: report.micro_auc,
        });
    }
    let mut table = format!(
        "{:<10} {:>9} {:>10} {:>10}\n",
        "classifier", "accuracy", "macro_auc", "micro_auc"
    );
    for r in &rows {
        writeln!(
            table,
            "{:<10} {:>9.4} {:>10.4} {:>10.4}",
            r.classifier, r.accuracy, r.macro_auc, r.micro_auc
        )
        .unwrap();
    }
    write(&cfg.out.join("comparison.json"), &to_json(&rows))?;
    write(&cfg.out.join("comparison.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn simulate(cfg: &RunConfig, oracle: bool) -> Result<(), Failure> {
    let env = cfg.environment()?;
    let localizer = if oracle {
        Localizer::Oracle
    } else {
        Localizer::Model {
            model: load_model(cfg)?,
            abstain: cfg.classifier.abstain_below,
        }
    };
    let log = run_scenario(&env, localizer, &cfg.scenario, cfg.channel_config(), cfg.seed)
        .map_err(|e| Failure::runtime(format!("scenario: {e}")))?;
    write(&cfg.out.join("scenario.jsonl"), &log.ticks_jsonl())?;
    write(&cfg.out.join("summary.json"), &log.summary_json())?;
    write(&cfg.out.join("events.jsonl"), &log.events_jsonl)?;
    let s = &log.summary;
    println!("ticks: {} (warmup {})", s.ticks, s.warmup_ticks);
    println!(
        "tracking accuracy: {:.4} ({}/{} in-room ticks)",
        s.tracking_accuracy, s.matched_ticks, s.scored_ticks
    );
    println!(
        "frames: {} sent, {} delivered, {} lost",
        s.frames_sent, s.frames_delivered, s.frames_lost
    );
    if let Some(latency) = s.mean_actuation_latency {
        println!("mean actuation latency: {latency:.6} s");
    }
    Ok(())
}
