use std::path::Path;

use moral_core::curation::{
    self, check_references, curate, load_documents, read_records, write_records, ChatClient, GeneratorClient, QaRecord,
    StubGenerator,
};
use moral_core::evaluation::{
    evaluate, EvalMode, EvalReport, EvalResources, JudgeClient, LiveJudge, ModelResponder, StubJudge,
};
use moral_core::model::{
    build_frozen_model, gradient_check, load_checkpoint, randomize_adapters, save_checkpoint, train, QaPair,
    ToyModelConfig,
};
use moral_core::prompts::{CLOSED_BOOK, OPEN_BOOK};
use moral_core::retrieval::{chunk_document, HttpEmbedder};
use moral_core::{AdapterConfig, Embedder, Error, Result, TrigramEmbedder, VectorIndex};
use serde_json::json;

use crate::config::{EmbedderSection, RunConfig, TrainPrompt};

/// How a command ended, beyond plain success.
pub enum Outcome {
    Done,
    /// Some records could not be scored.
    Partial,
    /// The gradient audit exceeded its threshold.
    CheckFailed,
}

pub const LOSS_FILE: &str = "loss.csv";

fn embedder(cfg: &RunConfig, stub: bool) -> Result<Box<dyn Embedder>> {
    Ok(match (&cfg.embedder, stub) {
        (EmbedderSection::Http(h), false) => Box::new(HttpEmbedder::new(h)?),
        _ => Box::new(TrigramEmbedder::default()),
    })
}

fn generator(cfg: &RunConfig, stub: bool) -> Result<Box<dyn GeneratorClient>> {
    Ok(match (&cfg.generator, stub) {
        (Some(c), false) => Box::new(ChatClient::new(c)?),
        _ => Box::new(StubGenerator),
    })
}

fn judges(cfg: &RunConfig, stub: bool) -> Result<Vec<Box<dyn JudgeClient>>> {
    if stub || cfg.judges.is_empty() {
        return Ok(vec![Box::new(StubJudge)]);
    }
    cfg.judges
        .iter()
        .map(|c| Ok(Box::new(LiveJudge::new(c)?) as Box<dyn JudgeClient>))
        .collect()
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} not found at {}", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn curate_cmd(cfg: &RunConfig, stub: bool) -> Result<Outcome> {
    if !cfg.corpus.is_dir() {
        return Err(Error::Config(format!(
            "corpus directory {} does not exist",
            cfg.corpus.display()
        )));
    }
    let docs = load_documents(&cfg.corpus)?;
    let gen = generator(cfg, stub)?;
    let emb = embedder(cfg, stub)?;
    let curated = curate(&docs, gen.as_ref(), emb.as_ref(), &cfg.curation_config())?;
    curation::write_curated(&cfg.data_dir(), &curated)?;
    print_json(&json!({
        "chunks": curated.chunks.len(),
        "records": curated.train.len() + curated.test.len(),
        "train": curated.train.len(),
        "test": curated.test.len(),
        "domains": curated.domain_counts,
    }))?;
    Ok(Outcome::Done)
}

pub fn index_cmd(cfg: &RunConfig, stub: bool) -> Result<Outcome> {
    if !cfg.corpus.is_dir() {
        return Err(Error::Config(format!(
            "corpus directory {} does not exist",
            cfg.corpus.display()
        )));
    }
    let mut chunks = Vec::new();
    for doc in load_documents(&cfg.corpus)?
        .iter()
        .filter(|d| !d.text.trim().is_empty())
    {
        chunks.extend(chunk_document(&doc.id, &doc.text, &cfg.split)?);
    }
    chunks.sort_by(|a, b| a.id.cmp(&b.id));
    let emb = embedder(cfg, stub)?;
    let index = VectorIndex::build(&chunks, emb.as_ref())?;
    create_dir(&cfg.data_dir())?;
    index.save(&cfg.data_dir().join(curation::INDEX_FILE))?;
    print_json(&json!({ "chunks": index.len(), "dim": index.dim() }))?;
    Ok(Outcome::Done)
}

fn load_index(cfg: &RunConfig) -> Result<VectorIndex> {
    let path = cfg.data_dir().join(curation::INDEX_FILE);
    require(&path, "index")?;
    VectorIndex::load(&path)
}

fn load_split(cfg: &RunConfig, file: &str) -> Result<Vec<QaRecord>> {
    let path = cfg.data_dir().join(file);
    require(&path, "dataset")?;
    read_records(&path)
}

/// Training pairs in the configured prompt style.
pub fn training_pairs(cfg: &RunConfig, records: &[QaRecord]) -> Result<Vec<QaPair>> {
    let index = match cfg.train_prompt {
        TrainPrompt::OpenBook => Some(load_index(cfg)?),
        _ => None,
    };
    records
        .iter()
        .map(|r| {
            let prompt = match cfg.train_prompt {
                TrainPrompt::Plain => r.q.clone(),
                TrainPrompt::ClosedBook => CLOSED_BOOK.fill(&[("question", &r.q)])?,
                TrainPrompt::OpenBook => {
                    let golden = index
                        .as_ref()
                        .and_then(|i| i.get(&r.context_id))
                        .ok_or_else(|| Error::Validation(format!("unknown chunk id {}", r.context_id)))?;
                    OPEN_BOOK.fill(&[("context", &golden.text), ("question", &r.q)])?
                }
            };
            Ok(QaPair::new(prompt, r.ground_truth.clone()))
        })
        .collect()
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let records = load_split(cfg, curation::TRAIN_FILE)?;
    let pairs = training_pairs(cfg, &records)?;
    let mut model = build_frozen_model(cfg.model, &cfg.adapter())?;
    let outcome = train(&mut model, &pairs, &cfg.train)?;
    let dir = cfg.model_dir();
    create_dir(&dir)?;
    save_checkpoint(&model, &dir)?;
    outcome.write_csv(&dir.join(LOSS_FILE))?;
    print_json(&json!({
        "examples": pairs.len(),
        "steps": outcome.step_losses.len(),
        "initial_loss": outcome.step_losses.first(),
        "final_loss": outcome.step_losses.last(),
        "epoch_losses": outcome.epoch_losses,
        "base_fingerprint": model.base_fingerprint(),
    }))?;
    Ok(Outcome::Done)
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Open => "open",
        EvalMode::Closed => "closed",
        EvalMode::Cross => "cross",
    }
}

pub fn eval_cmd(cfg: &RunConfig, mode: EvalMode, stub: bool) -> Result<Outcome> {
    let model_dir = cfg.model_dir();
    require(&model_dir.join(moral_core::model::ADAPTER_FILE), "checkpoint")?;
    let model = load_checkpoint(&model_dir)?;
    let records = load_split(cfg, curation::TEST_FILE)?;
    let index = load_index(cfg)?;
    check_references(&records, &index)?;

    let emb = embedder(cfg, stub)?;
    let gen = generator(cfg, stub)?;
    let judges = judges(cfg, stub)?;
    let resources = EvalResources {
        index: &index,
        embedder: emb.as_ref(),
        generator: gen.as_ref(),
        judges: judges.iter().map(|j| j.as_ref()).collect(),
    };
    let responder = ModelResponder {
        model: &model,
        max_new_tokens: cfg.eval.max_new_tokens,
    };
    let ev = evaluate(&records, &responder, mode, &resources, &cfg.eval_config())?;

    let dir = cfg.reports_dir();
    create_dir(&dir)?;
    let name = mode_name(mode);
    write(&dir.join(format!("eval_{name}.json")), &ev.report.to_json()?)?;
    write(&dir.join(format!("eval_{name}.txt")), &ev.report.to_table())?;
    write_records(&dir.join(format!("records_{name}.jsonl")), &ev.records)?;
    print!("{}", ev.report.to_table());
    Ok(if ev.report.partial {
        Outcome::Partial
    } else {
        Outcome::Done
    })
}

pub fn report_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.reports_dir();
    let mut reports = Vec::new();
    for mode in [EvalMode::Open, EvalMode::Closed, EvalMode::Cross] {
        let path = dir.join(format!("eval_{}.json", mode_name(mode)));
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            reports.push(EvalReport::from_json(&text)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::Config(format!("no evaluation reports in {}", dir.display())));
    }
    let merged = EvalReport::merge(&reports)?;
    write(&dir.join("report.json"), &merged.to_json()?)?;
    write(&dir.join("report.txt"), &merged.to_table())?;
    print!("{}", merged.to_table());
    Ok(if merged.partial {
        Outcome::Partial
    } else {
        Outcome::Done
    })
}

pub fn gradcheck_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.gradcheck;
    let model_cfg = ToyModelConfig {
        vocab_size: 256,
        d_model: g.d_model,
        n_layers: g.n_layers,
        n_heads: g.n_heads,
        d_ff: g.d_ff,
        max_seq_len: 64,
        seed: cfg.seed,
    };
    let adapter = AdapterConfig {
        n_experts: g.n_experts,
        top_k: g.top_k,
        rank: g.rank,
        alpha: g.alpha,
    };
    let mut model = build_frozen_model(model_cfg, &adapter)?;
    randomize_adapters(&mut model, g.perturbation, cfg.seed);
    let sample = QaPair::new("What does the router do?", "It mixes experts.");
    let report = gradient_check(&model, &sample, g.epsilon)?;
    let passed = report.max_relative_error <= g.threshold;
    print_json(&json!({
        "max_relative_error": report.max_relative_error,
        "threshold": g.threshold,
        "passed": passed,
        "parameters_checked": report.parameters_checked,
        "worst": report.worst,
    }))?;
    Ok(if passed { Outcome::Done } else { Outcome::CheckFailed })
}
