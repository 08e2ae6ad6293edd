use moral_core::curation::{QaRecord, StubGenerator};
use moral_core::evaluation::*;
use moral_core::model::{build_frozen_model, ToyModelConfig};
use moral_core::retrieval::{IndexEntry, TableEmbedder, TrigramEmbedder, VectorIndex};
use moral_core::{AdapterConfig, Embedder, Error, Result, RetrievalConfig};

const DIM: usize = 8;

fn basis(ids: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    for &i in ids {
        v[i] = 1.0;
    }
    v
}

/// Six chunks on axes 0..6; each question's vector is the sum of the axes
/// of the chunks it should retrieve (cosine 1/sqrt(k) > 0.5 for k <= 3).
struct Fixture {
    index: VectorIndex,
    embedder: TableEmbedder,
    records: Vec<QaRecord>,
}

fn fixture() -> Fixture {
    let chunk_text = |i: usize| format!("Fact {i} is stored here. Value {i}.");
    let mut embedder = TableEmbedder::new(DIM).unwrap().with_trigram_fallback();
    let mut index = VectorIndex::new(DIM).unwrap();
    for i in 0..6 {
        embedder.insert(chunk_text(i), basis(&[i])).unwrap();
        index
            .insert(IndexEntry {
                id: format!("doc#{i:04}"),
                source_doc: "doc".into(),
                text: chunk_text(i),
                embedding: basis(&[i]),
            })
            .unwrap();
    }
    // (golden chunk, retrieved axes)
    let design: [(usize, &[usize]); 6] = [
        (0, &[0]),
        (1, &[1]),
        (2, &[2, 3]),
        (3, &[3, 4, 5]),
        (4, &[5]),
        (5, &[7]),
    ];
    let mut records = Vec::new();
    for (n, (golden, axes)) in design.iter().enumerate() {
        let q = format!("Question {n}?");
        embedder.insert(q.clone(), basis(axes)).unwrap();
        records.push(QaRecord {
            q,
            context_id: format!("doc#{golden:04}"),
            retrieved: Vec::new(),
            open_response: None,
            closed_response: None,
            ground_truth: format!("Value {golden}."),
            domain_tag: "test".into(),
        });
    }
    Fixture {
        index,
        embedder,
        records,
    }
}

fn cfg() -> EvalConfig {
    EvalConfig {
        retrieval: RetrievalConfig { theta: 0.5 },
        ..EvalConfig::default()
    }
}

/// Answers with the last "Value n." sentence seen in the prompt, else refuses.
fn copier(prompt: &str) -> Result<String> {
    Ok(prompt
        .split("Value ")
        .nth(1)
        .and_then(|rest| rest.split('.').next())
        .map(|n| format!("Value {n}."))
        .unwrap_or_else(|| "I don't know".to_string()))
}

#[test]
fn designed_scenarios_are_counted() {
    let f = fixture();
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&StubJudge],
    };
    let ev = evaluate(&f.records, &copier, EvalMode::Open, &res, &cfg()).unwrap();
    let counts: Vec<usize> = Scenario::ALL.iter().map(|s| ev.report.scenario_counts[s]).collect();
    assert_eq!(counts, [2, 2, 1, 1]);
    assert_eq!(ev.report.record_count, 6);
    assert_eq!(ev.report.faith, Some(1.0));
    assert!(ev.report.filter.is_some());
    assert!(ev.report.rr.is_some());
    assert!(ev.report.ra_open.is_some());
    assert_eq!((ev.report.ra_closed, ev.report.qr, ev.report.fl), (None, None, None));
    assert!(ev
        .records
        .iter()
        .all(|r| r.open_response.is_some() && r.closed_response.is_none()));
    assert_eq!(ev.records[2].retrieved, ["doc#0002", "doc#0003"]);
}

#[test]
fn empty_retrieval_reports_only_ra() {
    let f = fixture();
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&StubJudge],
    };
    let strict = EvalConfig {
        retrieval: RetrievalConfig { theta: 0.999999 },
        ..cfg()
    };
    let seen = std::sync::Mutex::new(Vec::new());
    let responder = |p: &str| {
        seen.lock().unwrap().push(p.to_string());
        Ok("Value 0.".to_string())
    };
    let records: Vec<QaRecord> = f
        .records
        .iter()
        .filter(|r| r.q != "Question 0?" && r.q != "Question 1?" && r.q != "Question 4?")
        .cloned()
        .collect();
    let ev = evaluate(&records, &responder, EvalMode::Open, &res, &strict).unwrap();
    assert_eq!(ev.report.scenario_counts[&Scenario::EmptyContext], records.len());
    assert!(ev.report.ra_open.is_some());
    assert_eq!((ev.report.faith, ev.report.filter, ev.report.rr), (None, None, None));
    assert!(seen
        .lock()
        .unwrap()
        .iter()
        .all(|p| p.starts_with("Please answer the following question.")));
}

#[test]
fn refusing_model_on_irrelevant_records() {
    let f = fixture();
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&StubJudge],
    };
    let irrelevant: Vec<QaRecord> = f.records.iter().filter(|r| r.q == "Question 4?").cloned().collect();
    let refuse = |_: &str| Ok("I don't know".to_string());
    let ev = evaluate(&irrelevant, &refuse, EvalMode::Open, &res, &cfg()).unwrap();
    assert_eq!(ev.report.scenario_counts[&Scenario::IrrelevantContext], 1);
    assert_eq!(ev.report.rr, Some(1.0));
}

#[test]
fn qr_mean_of_pinned_similarities() {
    let mut e = TableEmbedder::new(2).unwrap();
    e.insert("q", vec![1.0, 0.0]).unwrap();
    e.insert("first", vec![0.6, 0.8]).unwrap();
    e.insert("second", vec![0.8, 0.6]).unwrap();
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let gen = |_: &str| {
        let n = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let question = ["first", "second"][n % 2];
        Ok(serde_json::json!({ "question": question }).to_string())
    };
    let qr = compute_qr("q", "an answer", "", &gen, &e, 2).unwrap();
    assert!((qr - 0.7).abs() < 1e-12);
}

#[test]
fn two_judge_fluency_is_mean_of_singles() {
    let text = "the cat sat";
    let a = StubJudge;
    let b = |_: &str| Ok(0.3);
    let both = compute_fl(text, &[&a, &b]).unwrap().score;
    let single_a = compute_fl(text, &[&a]).unwrap().score;
    let single_b = compute_fl(text, &[&b]).unwrap().score;
    assert!((both - (single_a + single_b) / 2.0).abs() < 1e-15);
    // pinned stub value: no capital, no terminator, three words
    assert!((single_a - 0.15).abs() < 1e-12);
}

#[test]
fn judge_outage_marks_report_partial() {
    let f = fixture();
    let down = |_: &str| -> Result<f64> {
        Err(Error::Client {
            message: "unavailable".into(),
            retryable: true,
        })
    };
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&down],
    };
    let ev = evaluate(&f.records, &copier, EvalMode::Open, &res, &cfg()).unwrap();
    assert!(ev.report.partial);
    assert_eq!(ev.report.failures.len(), 4);
    assert!(ev
        .report
        .failures
        .iter()
        .all(|x| x.stage == "faith" || x.stage == "filter"));
    assert_eq!((ev.report.faith, ev.report.filter), (None, None));
    assert!(ev.report.ra_open.is_some());
}

#[test]
fn cross_mode_averages_both_settings() {
    let f = fixture();
    let e = TrigramEmbedder::default();
    let mut index = VectorIndex::new(e.dim()).unwrap();
    for entry in f.index.entries() {
        index
            .insert(IndexEntry {
                embedding: e.embed(&entry.text).unwrap(),
                ..entry.clone()
            })
            .unwrap();
    }
    let res = EvalResources {
        index: &index,
        embedder: &e,
        generator: &StubGenerator,
        judges: vec![&StubJudge, &StubJudge],
    };
    let ev = evaluate(&f.records, &copier, EvalMode::Cross, &res, &cfg()).unwrap();
    let r = &ev.report;
    assert!(!r.partial, "{:?}", r.failures);
    let (qr, fl) = (r.qr.unwrap(), r.fl.unwrap());
    assert!((0.0..=1.0).contains(&qr) && (0.0..=1.0).contains(&fl));
    assert!(ev
        .records
        .iter()
        .all(|x| x.open_response.is_some() && x.closed_response.is_some()));
    let again = evaluate(&f.records, &copier, EvalMode::Cross, &res, &cfg()).unwrap();
    assert_eq!(again.report.to_json().unwrap(), r.to_json().unwrap());
}

#[test]
fn toy_model_evaluation_is_reproducible() {
    let f = fixture();
    let cfg_model = ToyModelConfig {
        d_model: 16,
        n_layers: 1,
        d_ff: 32,
        max_seq_len: 512,
        ..ToyModelConfig::default()
    };
    let model = build_frozen_model(cfg_model, &AdapterConfig::default()).unwrap();
    let responder = ModelResponder {
        model: &model,
        max_new_tokens: 8,
    };
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&StubJudge],
    };
    let closed = evaluate(&f.records, &responder, EvalMode::Closed, &res, &cfg()).unwrap();
    let again = evaluate(&f.records, &responder, EvalMode::Closed, &res, &cfg()).unwrap();
    assert_eq!(closed, again);
    let ra = closed.report.ra_closed.unwrap();
    assert!((0.0..=1.0).contains(&ra));
}

#[test]
fn empty_dataset_is_rejected() {
    let f = fixture();
    let res = EvalResources {
        index: &f.index,
        embedder: &f.embedder,
        generator: &StubGenerator,
        judges: vec![&StubJudge],
    };
    assert!(matches!(
        evaluate(&[], &copier, EvalMode::Open, &res, &cfg()),
        Err(Error::Argument(_))
    ));
}
