//! Scenario routing, open/closed/cross-setting metrics, judges and the
//! aggregate report.

mod judge;
mod metrics;
mod report;
mod run;
mod scoring;

pub use judge::{parse_score, stub_consistency, stub_fluency, JudgeClient, LiveJudge, StubJudge};
pub use metrics::{
    classify_scenario, compute_ra, compute_rr, detect_refusal, normalize_text, statement_f1, tokens, F1Counts,
    RaWeights, Scenario, StatementMode, DEFAULT_REFUSALS,
};
pub use report::{EvalMode, EvalReport, Failure};
pub use run::{evaluate, ContextMode, EvalConfig, EvalResources, Evaluation, ModelResponder, Responder};
pub use scoring::{compute_fl, compute_qr, score_faith, score_filter, FluencyScore, JudgedAnswer};
