use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::judge::JudgeClient;
use super::metrics::{classify_scenario, compute_ra, compute_rr, detect_refusal, RaWeights, Scenario, StatementMode};
use super::report::{mean, EvalMode, EvalReport, Failure};
use super::scoring::{compute_fl, compute_qr, score_faith, score_filter, JudgedAnswer};
use crate::adapter::AdaptedFfn;
use crate::curation::{GeneratorClient, QaRecord};
use crate::error::{Error, Result};
use crate::model::ToyModel;
use crate::prompts::{CLOSED_BOOK, OPEN_BOOK};
use crate::retrieval::{retrieve, Embedder, RetrievalConfig, VectorIndex};

type ScoreFn = fn(&JudgedAnswer, &dyn JudgeClient) -> Result<f64>;

/// Anything that turns a prompt into an answer.
pub trait Responder: Sync {
    fn respond(&self, prompt: &str) -> Result<String>;
}

impl<F> Responder for F
where
    F: Fn(&str) -> Result<String> + Sync,
{
    fn respond(&self, prompt: &str) -> Result<String> {
        self(prompt)
    }
}

/// Greedy decoding with a [`ToyModel`].
pub struct ModelResponder<'a, F> {
    pub model: &'a ToyModel<F>,
    pub max_new_tokens: usize,
}

impl<F: AdaptedFfn> Responder for ModelResponder<'_, F> {
    fn respond(&self, prompt: &str) -> Result<String> {
        self.model.generate(prompt, self.max_new_tokens)
    }
}

/// Where the retrieved set comes from at evaluation time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Retrieve again with the current index and threshold.
    #[default]
    Recompute,
    /// Use the ids stored in the record at curation time.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub retrieval: RetrievalConfig,
    pub context_mode: ContextMode,
    pub ra_weights: RaWeights,
    pub statement_mode: StatementMode,
    pub refusal_phrases: Vec<String>,
    /// Questions regenerated per response for QR.
    pub qr_m: usize,
    /// Upper bound on records processed at once.
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            retrieval: RetrievalConfig::default(),
            context_mode: ContextMode::default(),
            ra_weights: RaWeights::default(),
            statement_mode: StatementMode::default(),
            refusal_phrases: super::metrics::DEFAULT_REFUSALS.iter().map(|s| s.to_string()).collect(),
            qr_m: 1,
            max_in_flight: 4,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.ra_weights.validate()?;
        if self.qr_m == 0 || self.max_in_flight == 0 {
            return Err(Error::Config("qr_m and max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

/// External services an evaluation may call.
pub struct EvalResources<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
    pub generator: &'a dyn GeneratorClient,
    pub judges: Vec<&'a dyn JudgeClient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Input records with the responses of this run filled in.
    pub records: Vec<QaRecord>,
}

#[derive(Default)]
struct Outcome {
    scenario: Option<Scenario>,
    record: Option<QaRecord>,
    faith: Option<f64>,
    filter: Option<f64>,
    refused: Option<bool>,
    ra_open: Option<f64>,
    ra_closed: Option<f64>,
    qr: Vec<f64>,
    fl: Vec<f64>,
    failures: Vec<Failure>,
}

struct Ctx<'a, 'r> {
    mode: EvalMode,
    responder: &'a dyn Responder,
    res: &'a EvalResources<'r>,
    cfg: &'a EvalConfig,
}

impl Ctx<'_, '_> {
    fn ra(&self, answer: &str, truth: &str) -> Result<f64> {
        if answer.trim().is_empty() {
            return Ok(0.0);
        }
        compute_ra(
            answer,
            truth,
            &self.cfg.ra_weights,
            self.cfg.statement_mode,
            self.res.embedder,
        )
    }

    fn text_of(&self, id: &str) -> Result<String> {
        self.res
            .index
            .get(id)
            .map(|e| e.text.clone())
            .ok_or_else(|| Error::Validation(format!("unknown chunk id {id}")))
    }

    fn run(&self, record: &QaRecord) -> Outcome {
        let mut out = Outcome::default();
        let fail = |out: &mut Outcome, stage: &str, e: Error| {
            out.failures.push(Failure {
                context_id: record.context_id.clone(),
                stage: stage.to_string(),
                message: e.to_string(),
            })
        };
        let retrieved: Vec<String> = match self.cfg.context_mode {
            ContextMode::Frozen => record.retrieved.clone(),
            ContextMode::Recompute => match retrieve(&record.q, self.res.index, self.res.embedder, &self.cfg.retrieval)
            {
                Ok(hits) => hits.into_iter().map(|h| h.id).collect(),
                Err(e) => {
                    fail(&mut out, "retrieve", e);
                    return out;
                }
            },
        };
        let scenario = classify_scenario(&retrieved, &record.context_id);
        out.scenario = Some(scenario);
        let texts: Result<Vec<String>> = retrieved.iter().map(|id| self.text_of(id)).collect();
        let texts = match texts {
            Ok(t) => t,
            Err(e) => {
                fail(&mut out, "context", e);
                return out;
            }
        };
        let context = texts.join("\n\n");
        let mut updated = record.clone();
        updated.retrieved = retrieved.clone();

        let want_open = matches!(self.mode, EvalMode::Open | EvalMode::Cross);
        let want_closed = matches!(self.mode, EvalMode::Closed | EvalMode::Cross);
        let closed_prompt = CLOSED_BOOK.fill(&[("question", &record.q)]);
        let open_prompt = if retrieved.is_empty() {
            CLOSED_BOOK.fill(&[("question", &record.q)])
        } else {
            OPEN_BOOK.fill(&[("context", &context), ("question", &record.q)])
        };

        let mut responses: Vec<(String, String)> = Vec::new();
        if want_open {
            match open_prompt.and_then(|p| self.responder.respond(&p)) {
                Ok(r) => {
                    updated.open_response = Some(r.clone());
                    responses.push((r, context.clone()));
                }
                Err(e) => fail(&mut out, "respond_open", e),
            }
        }
        if want_closed {
            match closed_prompt.and_then(|p| self.responder.respond(&p)) {
                Ok(r) => {
                    updated.closed_response = Some(r.clone());
                    responses.push((r, String::new()));
                }
                Err(e) => fail(&mut out, "respond_closed", e),
            }
        }

        match self.mode {
            EvalMode::Open => {
                if let Some(r) = updated.open_response.clone() {
                    self.open_metrics(record, scenario, &retrieved, &texts, &r, &mut out);
                }
            }
            EvalMode::Closed => {
                if let Some(r) = &updated.closed_response {
                    match self.ra(r, &record.ground_truth) {
                        Ok(v) => out.ra_closed = Some(v),
                        Err(e) => fail(&mut out, "ra_closed", e),
                    }
                }
            }
            EvalMode::Cross => {
                for (response, ctx) in &responses {
                    self.cross_metrics(record, response, ctx, &mut out);
                }
            }
        }
        out.record = Some(updated);
        out
    }

    fn open_metrics(
        &self,
        record: &QaRecord,
        scenario: Scenario,
        retrieved: &[String],
        texts: &[String],
        response: &str,
        out: &mut Outcome,
    ) {
        let mut failures = Vec::new();
        let golden_context = retrieved
            .iter()
            .zip(texts)
            .find(|(id, _)| **id == record.context_id)
            .map(|(_, t)| t.clone())
            .unwrap_or_default();
        let item = JudgedAnswer {
            scenario,
            question: record.q.clone(),
            golden_context,
            distractors: retrieved
                .iter()
                .zip(texts)
                .filter(|(id, _)| **id != record.context_id)
                .map(|(_, t)| t.clone())
                .collect(),
            response: response.to_string(),
        };
        let judge = self.res.judges.first().copied();
        match scenario {
            Scenario::GoldenContext | Scenario::MixedContext => {
                let (stage, score): (&str, ScoreFn) = if scenario == Scenario::GoldenContext {
                    ("faith", score_faith)
                } else {
                    ("filter", score_filter)
                };
                let judged = judge
                    .ok_or_else(|| Error::Config("no judge configured".into()))
                    .and_then(|j| score(&item, j));
                match judged {
                    Ok(v) if scenario == Scenario::GoldenContext => out.faith = Some(v),
                    Ok(v) => out.filter = Some(v),
                    Err(e) => failures.push((stage, e)),
                }
            }
            Scenario::IrrelevantContext => out.refused = Some(detect_refusal(response, &self.cfg.refusal_phrases)),
            Scenario::EmptyContext => {}
        }
        match self.ra(response, &record.ground_truth) {
            Ok(v) => out.ra_open = Some(v),
            Err(e) => failures.push(("ra_open", e)),
        }
        for (stage, e) in failures {
            out.failures.push(Failure {
                context_id: record.context_id.clone(),
                stage: stage.into(),
                message: e.to_string(),
            });
        }
    }

    fn cross_metrics(&self, record: &QaRecord, response: &str, context: &str, out: &mut Outcome) {
        let mut push = |stage: &str, message: String| {
            out.failures.push(Failure {
                context_id: record.context_id.clone(),
                stage: stage.into(),
                message,
            })
        };
        let qr = if response.trim().is_empty() {
            Ok(0.0)
        } else {
            compute_qr(
                &record.q,
                response,
                context,
                self.res.generator,
                self.res.embedder,
                self.cfg.qr_m,
            )
        };
        match qr {
            Ok(v) => out.qr.push(v),
            Err(e) => push("qr", e.to_string()),
        }
        match compute_fl(response, &self.res.judges) {
            Ok(fl) => {
                out.fl.push(fl.score);
                for f in fl.failures {
                    push("fl_judge", f);
                }
            }
            Err(e) => push("fl", e.to_string()),
        }
    }
}

/// Scores `records` in one mode. Record-level failures are collected and
/// mark the report partial instead of aborting.
pub fn evaluate(
    records: &[QaRecord],
    responder: &dyn Responder,
    mode: EvalMode,
    resources: &EvalResources<'_>,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::Argument("evaluation dataset is empty".into()));
    }
    let ctx = Ctx {
        mode,
        responder,
        res: resources,
        cfg,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| records.par_iter().map(|r| ctx.run(r)).collect());

    let mut counts: BTreeMap<Scenario, usize> = Scenario::ALL.iter().map(|s| (*s, 0)).collect();
    let mut failures = Vec::new();
    let (mut faith, mut filter, mut refused, mut ra_open, mut ra_closed, mut qr, mut fl) =
        (vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
    let mut updated = Vec::with_capacity(records.len());
    for (o, original) in outcomes.into_iter().zip(records) {
        if let Some(s) = o.scenario {
            *counts.get_mut(&s).expect("all scenarios present") += 1;
        }
        faith.extend(o.faith);
        filter.extend(o.filter);
        refused.extend(o.refused);
        ra_open.extend(o.ra_open);
        ra_closed.extend(o.ra_closed);
        qr.extend(o.qr);
        fl.extend(o.fl);
        failures.extend(o.failures);
        updated.push(o.record.unwrap_or_else(|| original.clone()));
    }
    let mut report = EvalReport::empty(mode, counts);
    report.record_count = records.len();
    report.faith = mean(&faith);
    report.filter = mean(&filter);
    report.rr = compute_rr(&refused);
    report.ra_open = mean(&ra_open);
    report.ra_closed = mean(&ra_closed);
    report.qr = mean(&qr);
    report.fl = mean(&fl);
    report.partial = !failures.is_empty();
    report.failures = failures;
    Ok(Evaluation {
        report,
        records: updated,
    })
}
