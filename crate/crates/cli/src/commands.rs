use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use mmfuse::dataset::{annotator_summary, compute_stats, fleiss_kappa, split_records, AnnotatorScores, MemeRecord, RatingsMatrix};
use mmfuse::encoders::EmbeddingSequence;
use mmfuse::evalharness::{
    category_reference, coherence, f1, macro_f1, readability, relevance, render_csv, render_table, semsim,
    MetricReport, ReportRow,
};
use mmfuse::model::{train_model, Example, ImageInput, MemeInput, TextInput};
use mmfuse::rationale::{
    build_detection_prompt, build_reasoning_prompt, context_summary, default_pool, generate_many, load_pool,
    select_shots, CompletionBackend, HttpConfig, PromptTemplate,
};
use mmfuse::synth::{planted, toy_model_config, toy_train_config, wbms_mirror, write_planted, PlantedConfig, Signal};
use mmfuse::{Category, Error, Model, Result};

use crate::config::{BackendKind, ImageSource, RunConfig};
use crate::io::{load_image, load_manifest, read_jsonl, read_text, resolve_image, to_jsonl, write_text};

fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::Validation(format!("no {what} given (flag --{what} or config key)")))
}

fn manifest_records(cfg: &RunConfig) -> Result<(PathBuf, Vec<MemeRecord>)> {
    let path = require(&cfg.manifest, "manifest")?.to_path_buf();
    let records = load_manifest(&path)?;
    Ok((path, records))
}

fn meme_input(record: &MemeRecord, manifest: &Path, cfg: &RunConfig, vocab: usize) -> Result<MemeInput> {
    let m = load_image(&resolve_image(record, manifest, cfg.embeddings_dir.as_deref()))?;
    let image = match cfg.image_source {
        ImageSource::Patches => ImageInput::Patches(m),
        ImageSource::Features => ImageInput::Features(EmbeddingSequence::new(m)?),
    };
    let text = TextInput::Tokens(mmfuse::encoders::tokenize(&record.meme_text(), vocab));
    Ok(MemeInput { text, image })
}

fn write_report(cfg: &RunConfig, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = &cfg.report_dir {
        let path = dir.join(name);
        write_text(&path, text)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<String> {
    let (_, records) = manifest_records(cfg)?;
    if records.is_empty() {
        return Err(Error::Validation("empty manifest".into()));
    }
    let s = compute_stats(&records);
    write_report(cfg, "stats.txt", &s.to_table())?;
    write_report(cfg, "stats.csv", &s.to_csv())?;
    Ok(s.to_table())
}

fn parse_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .collect())
}

/// Scores file: `accuracy,consistency,kappa` per annotator, optional header.
/// Ratings file: one row of per-category counts per item.
pub fn agreement(scores: Option<&Path>, ratings: Option<&Path>) -> Result<String> {
    let mut out = String::new();
    if let Some(path) = scores {
        let mut rows = Vec::new();
        for (i, fields) in parse_csv_rows(path)?.into_iter().enumerate() {
            let nums: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 3 => rows.push(AnnotatorScores { accuracy: v[0], consistency: v[1], kappa: v[2] }),
                _ if i == 0 => continue,
                _ => return Err(Error::Parse { line: i + 1, message: "expected accuracy,consistency,kappa".into() }),
            }
        }
        out.push_str(&annotator_summary(&rows)?.to_table());
    }
    if let Some(path) = ratings {
        let counts = parse_csv_rows(path)?
            .into_iter()
            .enumerate()
            .map(|(i, fields)| {
                fields
                    .iter()
                    .map(|f| f.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = RatingsMatrix::new(counts)?;
        writeln!(out, "Fleiss kappa over {} items, {} raters: {:.4}", m.items(), m.raters(), fleiss_kappa(&m)?).unwrap();
    }
    if out.is_empty() {
        return Err(Error::Validation("give --scores and/or --ratings".into()));
    }
    Ok(out)
}

pub fn synth_wbms(out: &Path) -> Result<String> {
    let records = wbms_mirror();
    write_text(out, &mmfuse::dataset::manifest_to_string(&records))?;
    Ok(format!("wrote {} records to {}\n", records.len(), out.display()))
}

/// Planted corpus plus a stratified split and a ready-to-use config file.
pub fn synth_planted(cfg: &RunConfig, out_dir: &Path, signal: Signal, memes: usize, train_fraction: f64) -> Result<String> {
    let pc = PlantedConfig { memes, signal, seed: cfg.seed, ..Default::default() };
    let corpus = planted(&pc);
    write_planted(out_dir, &corpus)?;
    let records: Vec<MemeRecord> = corpus.iter().map(|m| m.record.clone()).collect();
    let parts = split_records(&records, cfg.seed, train_fraction)?;
    write_text(&out_dir.join("train.jsonl"), &mmfuse::dataset::manifest_to_string(&parts.train))?;
    write_text(&out_dir.join("test.jsonl"), &mmfuse::dataset::manifest_to_string(&parts.test))?;

    let mc = toy_model_config(cfg.seed, mmfuse::model::Modality::Multimodal);
    let tc = toy_train_config();
    let conf = format!(
        "# planted toy corpus; paths are relative to this file\nseed = {}\nd_h = {}\nvocab = {}\nmax_len = {}\nraw_dim = {}\nlr = {}\nepochs = {}\nlambda = {}\nmanifest = train.jsonl\ncheckpoint = model.mmh\n",
        cfg.seed, mc.encoder.d_h, mc.encoder.vocab, mc.encoder.max_len, mc.encoder.raw_dim, tc.lr, tc.epochs, tc.lambda
    );
    write_text(&out_dir.join("toy.conf"), &conf)?;
    Ok(format!(
        "wrote {} memes ({} train, {} test) to {}\n",
        corpus.len(),
        parts.train.len(),
        parts.test.len(),
        out_dir.display()
    ))
}

pub fn train(cfg: &RunConfig) -> Result<String> {
    let (manifest, records) = manifest_records(cfg)?;
    if records.is_empty() {
        return Err(Error::Validation("empty manifest".into()));
    }
    let checkpoint = require(&cfg.checkpoint, "checkpoint")?;
    let mut model = Model::init(cfg.model_config()?)?;
    let examples = records
        .iter()
        .map(|r| {
            let label = r.misogyny_label.ok_or_else(|| Error::Validation(format!("record {} has no misogyny_label", r.id)))?;
            Ok(Example { input: meme_input(r, &manifest, cfg, cfg.vocab)?, label, category: r.category })
        })
        .collect::<Result<Vec<_>>>()?;
    let history = train_model(&mut model, &examples, &cfg.train_config())?;
    let final_loss = model.loss(&examples, cfg.lambda)?;

    model.save(checkpoint).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", checkpoint.display()))),
        other => other,
    })?;
    let mut log = String::from("epoch\tloss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(log, "{i}\t{l}").unwrap();
    }
    writeln!(log, "{}\t{final_loss}", history.len()).unwrap();
    let log_path = PathBuf::from(format!("{}.loss.tsv", checkpoint.display()));
    write_text(&log_path, &log)?;
    Ok(format!("trained {} epochs on {} memes; final loss {final_loss:.6}\n", history.len(), examples.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub label: bool,
    pub misogyny_prob: f64,
    pub category: Category,
    pub category_dist: [f64; 5],
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let model = Model::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    if cfg.d_h_set && cfg.d_h != model.d_h() {
        return Err(Error::Validation(format!("config d_h {} differs from checkpoint d_h {}", cfg.d_h, model.d_h())));
    }
    Ok(model)
}

pub fn predict(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (manifest, records) = manifest_records(cfg)?;
    let model = load_model(cfg)?;
    let inputs =
        records.iter().map(|r| meme_input(r, &manifest, cfg, model.cfg.encoder.vocab)).collect::<Result<Vec<_>>>()?;
    let preds = model.predict_batch(&inputs, cfg.workers).into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<PredictionRow> = records
        .iter()
        .zip(preds)
        .map(|(r, p)| PredictionRow {
            id: r.id.clone(),
            label: p.label,
            misogyny_prob: p.misogyny_prob,
            category: p.category,
            category_dist: p.category_dist,
        })
        .collect();
    write_text(out, &to_jsonl(&rows))?;
    Ok(format!("wrote {} predictions to {}\n", rows.len(), out.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn template(cfg: &RunConfig, name: &str, default: PromptTemplate) -> Result<PromptTemplate> {
    match &cfg.templates {
        Some(dir) if dir.join(format!("{name}.txt")).exists() => PromptTemplate::from_file(dir.join(format!("{name}.txt"))),
        Some(dir) if dir.is_file() => PromptTemplate::from_file(dir),
        _ => Ok(default),
    }
}

fn backend(cfg: &RunConfig) -> CompletionBackend {
    match cfg.backend {
        BackendKind::Stub => CompletionBackend::Stub { seed: cfg.seed },
        BackendKind::Http => {
            let mut h = HttpConfig::new(cfg.llm_base_url.clone(), cfg.llm_model.clone());
            h.timeout = Duration::from_secs(cfg.llm_timeout_secs);
            h.max_tokens = cfg.llm_max_tokens;
            CompletionBackend::Http(h)
        }
    }
}

fn by_id(records: &[MemeRecord]) -> HashMap<&str, &MemeRecord> {
    records.iter().map(|r| (r.id.as_str(), r)).collect()
}

fn unmatched<'a>(ids: impl Iterator<Item = &'a str>, known: &dyn Fn(&str) -> bool, what: &str) -> Result<()> {
    let missing: Vec<&str> = ids.filter(|id| !known(id)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("ids without a matching {what}: {}", missing.join(", "))))
    }
}

pub fn explain(cfg: &RunConfig, predictions: &Path, out: &Path, strict: bool) -> Result<String> {
    let (_, records) = manifest_records(cfg)?;
    let index = by_id(&records);
    let preds: Vec<PredictionRow> = read_jsonl(predictions)?;
    unmatched(preds.iter().map(|p| p.id.as_str()), &|id| index.contains_key(id), "manifest record")?;
    let tpl = template(cfg, "reasoning", PromptTemplate::reasoning())?;
    let prompts = preds
        .iter()
        .map(|p| {
            let summary = context_summary(&index[p.id.as_str()].meme_text(), p.category);
            build_reasoning_prompt(&summary, p.label, p.category, &tpl)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = generate_many(&backend(cfg), &prompts, cfg.workers);
    let mut rows = Vec::with_capacity(preds.len());
    let mut failures = 0;
    for (p, r) in preds.iter().zip(results) {
        match r {
            Ok(text) => rows.push(RationaleRow { id: p.id.clone(), rationale: Some(text), error: None }),
            Err(e) if strict => return Err(e),
            Err(e) => {
                warn!("{}: {e}", p.id);
                failures += 1;
                rows.push(RationaleRow { id: p.id.clone(), rationale: None, error: Some(e.to_string()) });
            }
        }
    }
    write_text(out, &to_jsonl(&rows))?;
    Ok(format!("wrote {} rationales ({failures} failed) to {}\n", rows.len(), out.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRow {
    pub id: String,
    pub prompt: String,
}

pub fn prompts(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (_, records) = manifest_records(cfg)?;
    let pool = match &cfg.fewshot_pool {
        Some(p) => load_pool(p)?,
        None => default_pool(),
    };
    let shots = select_shots(&pool, cfg.shots)?;
    let tpl = template(cfg, "detection", PromptTemplate::detection())?;
    let rows = records
        .iter()
        .map(|r| Ok(PromptRow { id: r.id.clone(), prompt: build_detection_prompt(r, shots, &tpl)? }))
        .collect::<Result<Vec<_>>>()?;
    write_text(out, &to_jsonl(&rows))?;
    Ok(format!("wrote {} {}-shot prompts to {}\n", rows.len(), cfg.shots, out.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub id: String,
    pub reference: String,
}

pub struct EvalOptions<'a> {
    pub predictions: &'a Path,
    pub rationales: &'a Path,
    pub references: Option<&'a Path>,
    pub setup: &'a str,
    pub model_name: &'a str,
}

pub fn evaluate(cfg: &RunConfig, opts: &EvalOptions<'_>) -> Result<String> {
    let (_, records) = manifest_records(cfg)?;
    let index = by_id(&records);
    let model = load_model(cfg)?;
    let preds: Vec<PredictionRow> = read_jsonl(opts.predictions)?;
    let rationales: Vec<RationaleRow> = read_jsonl(opts.rationales)?;
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to evaluate".into()));
    }
    let rat: BTreeMap<&str, &RationaleRow> = rationales.iter().map(|r| (r.id.as_str(), r)).collect();
    let pred_ids: BTreeMap<&str, ()> = preds.iter().map(|p| (p.id.as_str(), ())).collect();
    unmatched(preds.iter().map(|p| p.id.as_str()), &|id| index.contains_key(id), "manifest record")?;
    unmatched(preds.iter().map(|p| p.id.as_str()), &|id| rat.contains_key(id), "rationale")?;
    unmatched(rationales.iter().map(|r| r.id.as_str()), &|id| pred_ids.contains_key(id), "prediction")?;
    let references: HashMap<String, String> = match opts.references {
        Some(p) => read_jsonl::<ReferenceRow>(p)?.into_iter().map(|r| (r.id, r.reference)).collect(),
        None => HashMap::new(),
    };

    let mut golds = Vec::with_capacity(preds.len());
    for p in &preds {
        let r = index[p.id.as_str()];
        let label = r.misogyny_label.ok_or_else(|| Error::Validation(format!("record {} has no misogyny_label", r.id)))?;
        golds.push((label, r.category));
    }
    let mmc_f1 = f1(&preds.iter().map(|p| p.label).collect::<Vec<_>>(), &golds.iter().map(|g| g.0).collect::<Vec<_>>())?;
    let macro_ = macro_f1(&preds.iter().map(|p| p.category).collect::<Vec<_>>(), &golds.iter().map(|g| g.1).collect::<Vec<_>>())?;

    let enc = &model.encoder;
    let mut sums = [0.0; 4];
    let mut scored = 0usize;
    for (p, (_, gold_cat)) in preds.iter().zip(&golds) {
        let Some(text) = rat[p.id.as_str()].rationale.as_deref() else { continue };
        let meme_text = index[p.id.as_str()].meme_text();
        let context = if meme_text.trim().is_empty() { category_reference(*gold_cat).to_string() } else { meme_text };
        let reference = references.get(&p.id).map_or(category_reference(*gold_cat), String::as_str);
        let vals = [relevance(text, &context, enc)?, coherence(text, enc)?, readability(text)?, semsim(text, reference, enc)?];
        for (s, v) in sums.iter_mut().zip(vals) {
            *s += v;
        }
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Validation("no successful rationales to score".into()));
    }
    if scored < preds.len() {
        warn!("{} items without a rationale were left out of the rationale metrics", preds.len() - scored);
    }
    let mean = |i: usize| sums[i] / scored as f64;
    let row = ReportRow {
        setup: opts.setup.to_string(),
        model: opts.model_name.to_string(),
        metrics: MetricReport {
            mmc_f1,
            macro_f1: macro_,
            relevance: mean(0),
            coherence: mean(1),
            readability: mean(2),
            semsim: mean(3),
        },
    };
    let rows = [row];
    let table = render_table(&rows);
    write_report(cfg, "report.txt", &table)?;
    write_report(cfg, "report.csv", &render_csv(&rows))?;
    Ok(table)
}
