use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use lpgrade_core::augment::{smote, FeatureDataset};
use lpgrade_core::feedback::validate_pack;
use lpgrade_core::metrics::{agreement_report, imbalance_report, CiMethod};
use lpgrade_core::reliability::{gate_categories, read_ratings_csv};
use lpgrade_core::rubric::{load_rubric, validate_vector, RubricSpec};
use lpgrade_core::textclf::{load_jsonl, train, training_examples, TextClassifierModel};
use lpgrade_core::{assign, LabelTable, TemplatePack};
use serde::Serialize;

use crate::config::FileConfig;
use crate::manifest::{digest_file, manifest_path, sha256_hex, sibling_path, timestamp, RunManifest};
use crate::{CiKind, Command, Format, GlobalArgs};

/// A failed run: bad input (exit 2) or something on our side (exit 1).
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<lpgrade_core::Error> for Failure {
    fn from(e: lpgrade_core::Error) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Prefix `path` onto errors that do not already name their source.
fn at(path: &Path) -> impl FnOnce(lpgrade_core::Error) -> Failure + '_ {
    move |e| match e {
        lpgrade_core::Error::Parse { .. } | lpgrade_core::Error::Io { .. } => e.into(),
        other => input(format!("{}: {other}", path.display())),
    }
}

fn input(msg: String) -> Failure {
    Failure::Input(anyhow!(msg))
}

/// Everything a command produced, written out in one place.
struct Run {
    command: &'static str,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    /// Main output, then any siblings (`path` is `None` for the main output
    /// when writing to stdout).
    outputs: Vec<(Option<PathBuf>, String)>,
    notes: Vec<String>,
}

impl Run {
    fn new(command: &'static str, config: serde_json::Value) -> Self {
        Run {
            command,
            seed: 0,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn finish(self) -> Outcome {
        let mut written = Vec::new();
        for (path, body) in &self.outputs {
            match path {
                Some(p) => {
                    std::fs::write(p, body)
                        .map_err(|e| Failure::Internal(anyhow!("cannot write {}: {e}", p.display())))?;
                    written.push(p.clone());
                }
                None => print!("{body}"),
            }
        }
        let Some(main) = written.first() else {
            return Ok(());
        };
        let digests = |paths: &[PathBuf]| -> Outcome<Vec<_>> {
            paths
                .iter()
                .map(|p| digest_file(p).map_err(|e| Failure::Internal(anyhow!("cannot read {}: {e}", p.display()))))
                .collect()
        };
        let config_text = serde_json::to_string(&self.config).expect("config serializes");
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_hash: sha256_hex(config_text.as_bytes()),
            config: self.config,
            inputs: digests(&self.inputs)?,
            outputs: digests(&written)?,
            notes: self.notes,
            timestamp: timestamp(),
        };
        let path = manifest_path(main);
        let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Failure::Internal(anyhow!("cannot write {}: {e}", path.display())))
    }
}

fn pick_format(requested: Option<Format>, allowed: &[Format], command: &str) -> Outcome<Format> {
    match requested {
        None => Ok(allowed[0]),
        Some(f) if allowed.contains(&f) => Ok(f),
        Some(f) => Err(input(
            format!("{command} does not support --format {f:?}").to_lowercase(),
        )),
    }
}

fn load_labels(paths: &[PathBuf]) -> Outcome<LabelTable> {
    let tables = paths
        .iter()
        .map(|p| LabelTable::load(p).map_err(at(p)))
        .collect::<Result<Vec<_>, _>>()?;
    if tables.len() == 1 {
        return Ok(tables.into_iter().next().expect("one table"));
    }
    LabelTable::merge(&tables).map_err(|e| {
        let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        input(format!("{}: {e}", names.join(" + ")))
    })
}

/// Where a label row came from, for diagnostics.
fn row_location(paths: &[PathBuf], index: usize) -> String {
    format!("{}:{}", paths[0].display(), index + 2)
}

pub fn run(global: &GlobalArgs, command: &Command) -> Outcome {
    let config = match &global.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Input)?,
        None => FileConfig::default(),
    };
    let seed = global.seed.or(config.seed).unwrap_or(0);
    let rubric = match &global.rubric {
        Some(p) => load_rubric(p).map_err(at(p))?,
        None => RubricSpec::electroscope(),
    };
    let mut run = match command {
        Command::Map { labels } => cmd_map(global, &rubric, labels)?,
        Command::Feedback { labels, templates } => cmd_feedback(global, &rubric, labels, templates.as_deref())?,
        Command::Irr { ratings, threshold } => cmd_irr(global, &config, &rubric, ratings, *threshold)?,
        Command::Agree {
            human,
            machine,
            ci,
            resamples,
            confidence,
        } => cmd_agree(global, &config, seed, human, machine, *ci, *resamples, *confidence)?,
        Command::Imbalance { labels } => cmd_imbalance(global, labels)?,
        Command::Smote { features, k, ratio } => cmd_smote(global, &config, seed, features, *k, *ratio)?,
        Command::TrainText {
            data,
            learning_rate,
            max_epochs,
            patience,
        } => cmd_train_text(global, &config, seed, data, *learning_rate, *max_epochs, *patience)?,
        Command::PredictText { model, data, threshold } => cmd_predict_text(global, &config, model, data, *threshold)?,
        Command::RubricValidate { templates } => cmd_rubric_validate(global, &rubric, templates.as_deref())?,
    };
    if run.command != "rubric-validate" {
        if let Some(p) = &global.rubric {
            run.inputs.insert(0, p.clone());
        }
    }
    run.seed = seed;
    run.finish()
}

fn rubric_config(rubric: &RubricSpec) -> serde_json::Value {
    serde_json::json!({ "rubric_version": rubric.version })
}

fn cmd_map(global: &GlobalArgs, rubric: &RubricSpec, paths: &[PathBuf]) -> Outcome<Run> {
    pick_format(global.format, &[Format::Csv], "map")?;
    let table = load_labels(paths)?;
    let mut out = String::from("response_id,model_level,explanation_level,accurate_count,inaccuracy_ids\n");
    for (i, (rid, v)) in table.vectors().into_iter().enumerate() {
        let v = validate_vector(rubric, &v)
            .map_err(|e| input(format!("{}: response {rid}: {e}", row_location(paths, i))))?;
        let a = assign(rubric, &v);
        let ids: Vec<String> = a.triggered_inaccuracies.iter().map(|id| id.to_string()).collect();
        writeln!(
            out,
            "{rid},{},{},{},{}",
            a.model_level.value,
            a.explanation_level.value,
            a.accurate_count_model,
            ids.join(";")
        )
        .expect("write to string");
    }
    let mut run = Run::new("map", rubric_config(rubric));
    run.inputs.extend(paths.iter().cloned());
    run.outputs.push((global.out.clone(), out));
    Ok(run)
}

#[derive(Serialize)]
struct FeedbackLine<'a> {
    response_id: &'a str,
    model_level: u8,
    explanation_level: u8,
    model_text: &'a str,
    explanation_text: &'a str,
    matched_rule_ids: &'a [String],
}

fn cmd_feedback(global: &GlobalArgs, rubric: &RubricSpec, paths: &[PathBuf], templates: Option<&Path>) -> Outcome<Run> {
    pick_format(global.format, &[Format::Jsonl], "feedback")?;
    let pack = match templates {
        Some(p) => TemplatePack::load(p).map_err(at(p))?,
        None => TemplatePack::electroscope(),
    };
    let validated = validate_pack(&pack, rubric)?;
    let table = load_labels(paths)?;
    let mut out = String::new();
    for (i, (rid, v)) in table.vectors().into_iter().enumerate() {
        let v = validate_vector(rubric, &v)
            .map_err(|e| input(format!("{}: response {rid}: {e}", row_location(paths, i))))?;
        let a = assign(rubric, &v);
        let st = validated.render(&rid, &a, &v)?;
        let line = FeedbackLine {
            response_id: &st.response_id,
            model_level: a.model_level.value,
            explanation_level: a.explanation_level.value,
            model_text: &st.model_text,
            explanation_text: &st.explanation_text,
            matched_rule_ids: &st.matched_rule_ids,
        };
        out.push_str(&serde_json::to_string(&line).expect("line serializes"));
        out.push('\n');
    }
    let mut config = rubric_config(rubric);
    config["templates_version"] = pack.version.clone().into();
    let mut run = Run::new("feedback", config);
    run.inputs.extend(templates.map(Path::to_path_buf));
    run.inputs.extend(paths.iter().cloned());
    run.outputs.push((global.out.clone(), out));
    Ok(run)
}

fn cmd_irr(
    global: &GlobalArgs,
    config: &FileConfig,
    rubric: &RubricSpec,
    path: &Path,
    threshold: Option<f64>,
) -> Outcome<Run> {
    let format = pick_format(global.format, &[Format::Csv, Format::Table], "irr")?;
    let threshold = threshold.unwrap_or(config.irr.threshold);
    let file = std::fs::File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let ratings = read_ratings_csv(file, &path.display().to_string(), &[])?;
    if let Some(id) = ratings.keys().find(|id| !rubric.contains(**id)) {
        return Err(input(format!("{}: category {id} is not in the rubric", path.display())));
    }
    let report = gate_categories(&ratings, threshold)?;
    for row in report.failing() {
        log::warn!("category {} does not pass the alpha gate", row.category);
    }
    let body = match format {
        Format::Table => report.to_table(),
        _ => report.to_csv(),
    };
    let mut run = Run::new("irr", serde_json::json!({ "threshold": threshold }));
    run.inputs.push(path.to_path_buf());
    run.outputs.push((global.out.clone(), body));
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn cmd_agree(
    global: &GlobalArgs,
    config: &FileConfig,
    seed: u64,
    human: &Path,
    machine: &Path,
    ci: Option<CiKind>,
    resamples: Option<usize>,
    confidence: Option<f64>,
) -> Outcome<Run> {
    let format = pick_format(global.format, &[Format::Csv, Format::Table], "agree")?;
    let ci = ci.unwrap_or(config.agree.ci);
    let resamples = resamples.unwrap_or(config.agree.resamples);
    let confidence = confidence.unwrap_or(config.agree.confidence);
    let method = match ci {
        CiKind::Wald => CiMethod::Wald,
        CiKind::Bootstrap => CiMethod::Bootstrap { resamples, seed },
    };
    let h = LabelTable::load(human).map_err(at(human))?;
    let m = LabelTable::load(machine).map_err(at(machine))?;
    let report = agreement_report(&h, &m, method, confidence)
        .map_err(|e| input(format!("{} vs {}: {e}", human.display(), machine.display())))?;
    let imbalance = imbalance_report(&h)?;
    let (body, extra) = match format {
        Format::Table => (report.to_table(confidence), imbalance.to_table()),
        _ => (report.to_csv(), imbalance.to_csv()),
    };
    let mut run = Run::new(
        "agree",
        serde_json::json!({ "ci": ci, "resamples": resamples, "confidence": confidence, "seed": seed }),
    );
    run.inputs.extend([human.to_path_buf(), machine.to_path_buf()]);
    match &global.out {
        Some(out) => {
            run.outputs.push((Some(out.clone()), body));
            run.outputs.push((Some(sibling_path(out, "imbalance")), extra));
        }
        None => run.outputs.push((None, format!("{body}\n{extra}"))),
    }
    Ok(run)
}

fn cmd_imbalance(global: &GlobalArgs, paths: &[PathBuf]) -> Outcome<Run> {
    let format = pick_format(global.format, &[Format::Csv, Format::Table], "imbalance")?;
    let report = imbalance_report(&load_labels(paths)?)?;
    let body = match format {
        Format::Table => report.to_table(),
        _ => report.to_csv(),
    };
    let mut run = Run::new("imbalance", serde_json::json!({}));
    run.inputs.extend(paths.iter().cloned());
    run.outputs.push((global.out.clone(), body));
    Ok(run)
}

fn cmd_smote(
    global: &GlobalArgs,
    config: &FileConfig,
    seed: u64,
    path: &Path,
    k: Option<usize>,
    ratio: Option<f64>,
) -> Outcome<Run> {
    pick_format(global.format, &[Format::Csv], "smote")?;
    let mut cfg = config.smote.clone();
    cfg.seed = seed;
    cfg.k_neighbors = k.unwrap_or(cfg.k_neighbors);
    cfg.target_ratio = ratio.unwrap_or(cfg.target_ratio);
    let data = FeatureDataset::load(path).map_err(at(path))?;
    let out = smote(&data, &cfg).map_err(at(path))?;
    let mut run = Run::new("smote", serde_json::to_value(&cfg).expect("config serializes"));
    run.notes.push(format!("{} synthetic rows", out.len() - data.len()));
    run.inputs.push(path.to_path_buf());
    run.outputs.push((global.out.clone(), out.to_csv()));
    Ok(run)
}

fn cmd_train_text(
    global: &GlobalArgs,
    config: &FileConfig,
    seed: u64,
    path: &Path,
    learning_rate: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
) -> Outcome<Run> {
    pick_format(global.format, &[Format::Jsonl], "train-text")?;
    let mut cfg = config.train.clone();
    cfg.seed = seed;
    cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
    cfg.max_epochs = max_epochs.unwrap_or(cfg.max_epochs);
    cfg.patience = patience.unwrap_or(cfg.patience);
    let records = load_jsonl(path).map_err(at(path))?;
    let (examples, rejected) = training_examples(&records).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if !rejected.is_empty() {
        log::warn!("{} records with missing labels were skipped", rejected.len());
    }
    let model = train(&examples, &config.head, &cfg).map_err(at(path))?;
    let mut run = Run::new("train-text", serde_json::json!({ "head": config.head, "train": cfg }));
    run.notes
        .extend(rejected.iter().map(|id| format!("rejected {id}: missing labels")));
    run.notes
        .push(format!("best epoch {} of {}", model.best_epoch, model.history.len()));
    run.inputs.push(path.to_path_buf());
    run.outputs.push((global.out.clone(), model.to_json()));
    Ok(run)
}

fn cmd_predict_text(
    global: &GlobalArgs,
    config: &FileConfig,
    model_path: &Path,
    path: &Path,
    threshold: Option<f64>,
) -> Outcome<Run> {
    pick_format(global.format, &[Format::Csv], "predict-text")?;
    let mut thresholds = config.predict.clone();
    if let Some(t) = threshold {
        thresholds.default = t;
    }
    let model = TextClassifierModel::load(model_path).map_err(at(model_path))?;
    let records = load_jsonl(path).map_err(at(path))?;
    let table = model.predict_table(&records, &thresholds)?;
    let mut run = Run::new(
        "predict-text",
        serde_json::to_value(&thresholds).expect("thresholds serialize"),
    );
    run.inputs.extend([model_path.to_path_buf(), path.to_path_buf()]);
    run.outputs.push((global.out.clone(), table.to_csv()));
    Ok(run)
}

fn cmd_rubric_validate(global: &GlobalArgs, rubric: &RubricSpec, templates: Option<&Path>) -> Outcome<Run> {
    pick_format(global.format, &[Format::Table], "rubric-validate")?;
    let pack = match templates {
        Some(p) => TemplatePack::load(p).map_err(at(p))?,
        None => TemplatePack::electroscope(),
    };
    let name = templates.map_or("built-in".to_string(), |p| p.display().to_string());
    validate_pack(&pack, rubric).map_err(|e| input(format!("{name}: {e}")))?;
    let body = format!(
        "rubric {}: {} categories, level rules ok\ntemplates {}: {} rules, total over every category pattern\n",
        rubric.version,
        rubric.categories().len(),
        pack.version,
        pack.rules.len()
    );
    let mut run = Run::new("rubric-validate", rubric_config(rubric));
    run.inputs.extend(global.rubric.clone());
    run.inputs.extend(templates.map(Path::to_path_buf));
    run.outputs.push((global.out.clone(), body));
    Ok(run)
}
