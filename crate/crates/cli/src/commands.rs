use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use dimabsa::dataio::{
    flatten_asr, flatten_queries, format_va_string, group_predictions, load_asr_queries,
    load_split, load_texts, write_split, write_submission, Container, DatasetSplit, PredictionRow,
    RegressionExample, SubmissionEntry,
};
use dimabsa::eda::{
    null_analysis, psi_heatmap_svg, psi_matrix, psi_table_tsv, split_stats, Feature, PsiReport,
};
use dimabsa::genio::{
    build_prompt, build_training_prompt, clamp_tuples, parse_generation, sample_demos,
    to_submission_tuples, AdapterTuneConfig, GenerationLine, PromptProfile, TemplateRegistry,
};
use dimabsa::model::denormalize_clip;
use dimabsa::regressor::{
    history_csv, load_checkpoint, mean_predictor_rmse, save_checkpoint, train, Regressor,
    ToyEncoder, TrainReport,
};
use dimabsa::scoring::{score_readers, Scores};
use dimabsa::{synthetic, Annotation, SplitKind, Subtask};

use crate::config::RunConfig;
use crate::manifest::Manifest;

/// What a command did. The process exits 0 iff `hard_errors == 0`.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub hard_errors: usize,
    pub outputs: Vec<PathBuf>,
}

fn read_file(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn file_name_for(container: Container, stem: &str) -> String {
    match container {
        Container::JsonArray => format!("{stem}.json"),
        Container::JsonLines => format!("{stem}.jsonl"),
    }
}

/// Loads a labelled split; any hard validation error aborts with the list.
pub fn load_labelled(cfg: &RunConfig, split: SplitKind, subtask: Subtask) -> Result<DatasetSplit> {
    let path = cfg.split_path(split)?;
    let report = load_split(read_file(path)?, subtask, cfg.meta(split))
        .with_context(|| format!("reading {}", path.display()))?;
    for w in report.warnings() {
        log::warn!("{}: {w}", path.display());
    }
    report
        .into_split()
        .with_context(|| format!("validating {}", path.display()))
}

fn write_manifest(dir: &Path, manifest: Manifest) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(&manifest)?;
    write_file(&dir.join("manifest.json"), text + "\n")
}

// ---------------------------------------------------------------- validate

pub fn validate(cfg: &RunConfig, input: &Path) -> Result<Outcome> {
    let subtask = cfg.subtask()?;
    let report = load_split(read_file(input)?, subtask, cfg.meta(SplitKind::Train))
        .with_context(|| format!("reading {}", input.display()))?;
    for issue in &report.issues {
        println!("{issue}");
    }
    let errors = report.errors().count();
    println!(
        "{}: {}/{} record(s) valid, {} error(s), {} warning(s)",
        input.display(),
        report.split.len(),
        report.total_records,
        errors,
        report.warnings().count()
    );
    Ok(Outcome {
        hard_errors: errors,
        outputs: Vec::new(),
    })
}

// -------------------------------------------------------------------- eval

pub fn score_files(subtask: Subtask, pred: &Path, gold: &Path) -> Result<Scores> {
    Ok(score_readers(subtask, read_file(pred)?, read_file(gold)?)?)
}

pub fn eval(cfg: &RunConfig, pred: &Path, gold: &Path) -> Result<(Outcome, Scores)> {
    let subtask = cfg.subtask()?;
    let report = score_files(subtask, pred, gold)?;
    println!("{report}");
    let score_json = serde_json::to_value(&report)?;
    let mut outcome = Outcome::default();
    if cfg.paths.output.is_some() {
        let dir = cfg.output_dir("eval")?;
        outcome.outputs.push(write_file(
            &dir.join("scores.json"),
            serde_json::to_string_pretty(&score_json)? + "\n",
        )?);
        let m = Manifest::new(
            "eval",
            cfg,
            json!({"pred": pred, "gold": gold}),
            &outcome.outputs,
            0,
        );
        outcome.outputs.push(write_manifest(&dir, m)?);
    }
    Ok((outcome, report))
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub report: TrainReport,
    pub baseline_rmse: f64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub outcome: Outcome,
}

fn regression_subtask(cfg: &RunConfig) -> Result<()> {
    match cfg.subtask {
        None | Some(Subtask::Asr) => Ok(()),
        Some(other) => bail!("regression runs on ASR data, got --subtask {other}"),
    }
}

pub fn train_cmd(cfg: &RunConfig, overrides: &TrainOverrides) -> Result<TrainSummary> {
    regression_subtask(cfg)?;
    let seed = cfg.seed()?;
    let mut tcfg = cfg.train;
    tcfg.seed = seed;
    if let Some(lr) = overrides.learning_rate {
        tcfg.learning_rate = lr;
    }
    if let Some(e) = overrides.max_epochs {
        tcfg.max_epochs = e;
    }
    if let Some(b) = overrides.batch_size {
        tcfg.batch_size = b;
    }
    let train_split = load_labelled(cfg, SplitKind::Train, Subtask::Asr)?;
    let dev_split = load_labelled(cfg, SplitKind::Dev, Subtask::Asr)?;
    let (train_rows, dev_rows) = (flatten_asr(&train_split), flatten_asr(&dev_split));
    let baseline = mean_predictor_rmse(&train_rows, &dev_rows)?;

    let mut model = Regressor::new(ToyEncoder::new(cfg.encoder), seed);
    model.input = cfg.input.clone();
    log::info!(
        "training on {} examples, validating on {} (mean-predictor RMSE_VA {baseline:.4})",
        train_rows.len(),
        dev_rows.len()
    );
    let report = train(&mut model, &train_rows, &dev_rows, &tcfg, &cfg.loss)?;
    log::info!(
        "best epoch {} with RMSE_VA {:.4}",
        report.best_epoch,
        report.best_val_rmse.unwrap_or(f64::NAN)
    );

    let dir = cfg.output_dir("train")?;
    let checkpoint = dir.join("checkpoint.json");
    save_checkpoint(
        File::create(&checkpoint).with_context(|| format!("creating {}", checkpoint.display()))?,
        &model,
        &tcfg,
        &cfg.loss,
    )?;
    let history = write_file(&dir.join("history.csv"), history_csv(&report.history))?;
    let mut outcome = Outcome {
        hard_errors: 0,
        outputs: vec![checkpoint.clone(), history.clone()],
    };
    let extra = json!({
        "effective_train_config": tcfg,
        "train_examples": train_rows.len(),
        "dev_examples": dev_rows.len(),
        "mean_predictor_rmse_va": baseline,
        "best_epoch": report.best_epoch,
        "best_val_rmse_va": report.best_val_rmse,
        "stopped_early": report.stopped_early,
    });
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("train", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(TrainSummary {
        report,
        baseline_rmse: baseline,
        checkpoint,
        history,
        outcome,
    })
}

// ----------------------------------------------------------------- predict

pub fn predict(cfg: &RunConfig, checkpoint: &Path) -> Result<Outcome> {
    regression_subtask(cfg)?;
    let (model, _) = load_checkpoint(read_file(checkpoint)?)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let input = cfg.split_path(SplitKind::Test)?;
    let (container, queries) = load_asr_queries(read_file(input)?)
        .with_context(|| format!("reading {}", input.display()))?;
    let rows = flatten_queries(&queries);
    let vas = model.predict(&rows)?;
    let preds: Vec<PredictionRow> = rows
        .iter()
        .zip(vas)
        .map(|(r, va)| PredictionRow {
            review_id: r.review_id.clone(),
            aspect: r.aspect.clone(),
            occurrence: r.occurrence,
            va,
        })
        .collect();
    let entries = group_predictions(&rows, &preds)?;
    let dir = cfg.output_dir("predict")?;
    let mut outcome = Outcome::default();
    outcome.outputs.push(write_file(
        &dir.join(file_name_for(container, "predictions")),
        write_submission(&entries, Subtask::Asr, container)?,
    )?);
    let extra = json!({"checkpoint": checkpoint, "reviews": queries.len(), "aspects": rows.len()});
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("predict", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(outcome)
}

// ----------------------------------------------------------------- flatten

fn flatten_row(cfg: &RunConfig, ex: &RegressionExample) -> Result<serde_json::Value> {
    Ok(json!({
        "ID": ex.review_id,
        "Occurrence": ex.occurrence,
        "Aspect": ex.aspect.as_wire(),
        "Text": ex.review_text,
        "Input": cfg.input.render(&ex.aspect, &ex.review_text)?,
        "VA": ex.target.map(|t| format_va_string(denormalize_clip(t))),
    }))
}

pub fn flatten(cfg: &RunConfig, input: &Path, unlabeled: bool) -> Result<Outcome> {
    regression_subtask(cfg)?;
    let rows = if unlabeled {
        let (_, queries) = load_asr_queries(read_file(input)?)
            .with_context(|| format!("reading {}", input.display()))?;
        flatten_queries(&queries)
    } else {
        let report = load_split(read_file(input)?, Subtask::Asr, cfg.meta(SplitKind::Train))
            .with_context(|| format!("reading {}", input.display()))?;
        flatten_asr(&report.into_split()?)
    };
    let mut text = String::new();
    for ex in &rows {
        text.push_str(&serde_json::to_string(&flatten_row(cfg, ex)?)?);
        text.push('\n');
    }
    let dir = cfg.output_dir("flatten")?;
    let mut outcome = Outcome::default();
    outcome
        .outputs
        .push(write_file(&dir.join("flattened.jsonl"), text)?);
    let extra = json!({"input": input, "rows": rows.len(), "unlabeled": unlabeled});
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("flatten", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(outcome)
}

// ------------------------------------------------------------ make-prompts

fn extraction_subtask(cfg: &RunConfig) -> Result<Subtask> {
    match cfg.subtask()? {
        Subtask::Asr => bail!("prompts and generations are for --subtask aste or asqp"),
        s => Ok(s),
    }
}

fn registry(cfg: &RunConfig) -> Result<TemplateRegistry> {
    Ok(match &cfg.prompt.templates {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            TemplateRegistry::from_toml(&text)?
        }
        None => TemplateRegistry::builtin(),
    })
}

/// Writes `prompts.jsonl` with one `{"ID", "Prompt"}` line per review. With
/// `with_answers`, prompts are built for the train split with gold answers
/// appended (zero-shot training format).
pub fn make_prompts(cfg: &RunConfig, with_answers: bool) -> Result<Outcome> {
    let subtask = extraction_subtask(cfg)?;
    let (language, domain) = (cfg.language()?, cfg.domain()?);
    let reg = registry(cfg)?;
    let profile = PromptProfile::for_family(cfg.prompt.profile);
    let train_split = load_labelled(cfg, SplitKind::Train, subtask)?;
    let null_policy = cfg
        .prompt
        .null_policy
        .unwrap_or_else(|| train_split.has_null_labels());

    let mut lines = String::new();
    let mut count = 0;
    if with_answers {
        let spec = reg.spec(language, domain, subtask, null_policy, Vec::new())?;
        for rec in &train_split.records {
            let prompt = build_training_prompt(&spec, &profile, &rec.review.text, rec.tuples())?;
            lines.push_str(&serde_json::to_string(
                &json!({"ID": rec.review.id, "Prompt": prompt}),
            )?);
            lines.push('\n');
            count += 1;
        }
    } else {
        let k = cfg.prompt.demos;
        let seed = if k > 0 {
            cfg.seed()?
        } else {
            cfg.seed.unwrap_or(0)
        };
        let input = cfg.split_path(SplitKind::Test)?;
        let (_, reviews) = load_texts(read_file(input)?)
            .with_context(|| format!("reading {}", input.display()))?;
        for (i, review) in reviews.iter().enumerate() {
            let demos = sample_demos(&train_split, k, seed.wrapping_add(i as u64))?;
            let spec = reg.spec(language, domain, subtask, null_policy, demos)?;
            let prompt = build_prompt(&spec, &profile, &review.text)?;
            lines.push_str(&serde_json::to_string(
                &json!({"ID": review.id, "Prompt": prompt}),
            )?);
            lines.push('\n');
            count += 1;
        }
    }
    let dir = cfg.output_dir("make-prompts")?;
    let mut outcome = Outcome::default();
    outcome
        .outputs
        .push(write_file(&dir.join("prompts.jsonl"), lines)?);
    let extra = json!({
        "profile": profile,
        "prompts": count,
        "null_policy": null_policy,
        "with_answers": with_answers,
        "draft_template": reg.is_draft(language),
    });
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("make-prompts", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(outcome)
}

// ------------------------------------------------------- parse-generations

pub fn parse_generations(cfg: &RunConfig, input: &Path, container: Container) -> Result<Outcome> {
    let subtask = extraction_subtask(cfg)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut entries = Vec::new();
    let mut repairs = String::new();
    let mut hard_errors = 0;
    let (mut items, mut rejected) = (0usize, 0usize);
    let mut seen = BTreeSet::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let gen: GenerationLine = match serde_json::from_str(line) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("error [line {}]: {e}", n + 1);
                hard_errors += 1;
                continue;
            }
        };
        if !seen.insert(gen.id.clone()) {
            eprintln!("error [line {}]: duplicate ID {:?}", n + 1, gen.id);
            hard_errors += 1;
            continue;
        }
        let rec = clamp_tuples(parse_generation(&gen.raw, subtask));
        let tuples = to_submission_tuples(&rec, subtask);
        items += tuples.len();
        rejected += rec.rejected;
        if !rec.repairs.is_empty() {
            repairs.push_str(&serde_json::to_string(&json!({
                "ID": gen.id,
                "Rejected": rec.rejected,
                "Repairs": rec.repairs,
            }))?);
            repairs.push('\n');
        }
        entries.push(SubmissionEntry {
            id: gen.id,
            text: None,
            payload: Annotation::Tuples(tuples),
        });
    }
    let dir = cfg.output_dir("parse-generations")?;
    let mut outcome = Outcome {
        hard_errors,
        outputs: Vec::new(),
    };
    outcome.outputs.push(write_file(
        &dir.join(file_name_for(container, "predictions")),
        write_submission(&entries, subtask, container)?,
    )?);
    outcome
        .outputs
        .push(write_file(&dir.join("repairs.jsonl"), repairs)?);
    let extra = json!({"input": input, "records": entries.len(), "tuples": items, "rejected_items": rejected});
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new(
            "parse-generations",
            cfg,
            extra,
            &outcome.outputs,
            hard_errors,
        ),
    )?);
    println!(
        "{} record(s), {items} tuple(s), {rejected} rejected item(s)",
        entries.len()
    );
    Ok(outcome)
}

// --------------------------------------------------------------------- eda

pub fn eda(cfg: &RunConfig) -> Result<(Outcome, Vec<PsiReport>)> {
    let subtask = cfg.subtask()?;
    let mut splits = BTreeMap::new();
    splits.insert(
        SplitKind::Train,
        load_labelled(cfg, SplitKind::Train, subtask)?,
    );
    for kind in [SplitKind::Dev, SplitKind::Test] {
        let given = match kind {
            SplitKind::Dev => cfg.paths.dev.is_some(),
            _ => cfg.paths.test.is_some(),
        };
        if given {
            splits.insert(kind, load_labelled(cfg, kind, subtask)?);
        }
    }
    let mut stats = serde_json::Map::new();
    for (kind, split) in &splits {
        let s = split_stats(split);
        let nulls = match subtask {
            Subtask::Asr => serde_json::Value::Null,
            _ => serde_json::to_value(null_analysis(split)?)?,
        };
        stats.insert(
            kind.to_string(),
            json!({
                "reviews": s.reviews,
                "mean_length": s.mean_length,
                "mean_density": s.mean_density,
                "total_items": s.total_items,
                "category_counts": s.category_counts,
                "nulls": nulls,
            }),
        );
    }
    let reports = psi_matrix(&splits, &Feature::ALL)?;
    let table = psi_table_tsv(&reports);
    print!("{table}");

    let dir = cfg.output_dir("eda")?;
    let mut outcome = Outcome::default();
    outcome.outputs.push(write_file(
        &dir.join("stats.json"),
        serde_json::to_string_pretty(&stats)? + "\n",
    )?);
    outcome
        .outputs
        .push(write_file(&dir.join("psi.tsv"), &table)?);
    outcome.outputs.push(write_file(
        &dir.join("psi.json"),
        serde_json::to_string_pretty(&reports)? + "\n",
    )?);
    let title = format!(
        "PSI vs Train: {} {} {}",
        cfg.language.map(|l| l.to_string()).unwrap_or_default(),
        cfg.domain.map(|d| d.to_string()).unwrap_or_default(),
        subtask
    );
    outcome.outputs.push(write_file(
        &dir.join("psi_heatmap.svg"),
        psi_heatmap_svg(&reports, title.trim()),
    )?);
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("eda", cfg, json!({}), &outcome.outputs, 0),
    )?);
    Ok((outcome, reports))
}

// ------------------------------------------------------------------- synth

pub fn synth(cfg: &RunConfig, n: usize, dev_fraction: f64) -> Result<Outcome> {
    let seed = cfg.seed()?;
    if !(0.0..1.0).contains(&dev_fraction) || n < 4 {
        bail!("need at least 4 examples and a dev fraction in [0, 1)");
    }
    let (train_split, dev_split) = synthetic::train_dev(n, dev_fraction, seed);
    let dir = cfg.output_dir("synth")?;
    let mut outcome = Outcome::default();
    outcome.outputs.push(write_file(
        &dir.join("train.json"),
        write_split(&train_split)?,
    )?);
    outcome
        .outputs
        .push(write_file(&dir.join("dev.json"), write_split(&dev_split)?)?);
    let extra = json!({"examples": n, "dev_fraction": dev_fraction});
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("synth", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(outcome)
}

// ---------------------------------------------------------- adapter-config

pub fn adapter_config(cfg: &RunConfig, from: Option<&Path>) -> Result<Outcome> {
    let adapter = match from {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            AdapterTuneConfig::from_toml(&text)?
        }
        None => AdapterTuneConfig::default(),
    };
    let dir = cfg.output_dir("adapter-config")?;
    let mut outcome = Outcome::default();
    outcome
        .outputs
        .push(write_file(&dir.join("adapter.toml"), adapter.to_toml()?)?);
    let extra = json!({"effective_batch_size": adapter.effective_batch_size()});
    outcome.outputs.push(write_manifest(
        &dir,
        Manifest::new("adapter-config", cfg, extra, &outcome.outputs, 0),
    )?);
    Ok(outcome)
}
