//! Documents to question/answer records: chunk, generate a question and a
//! ground truth per chunk, record the retrieved set, split train/test.

mod client;
mod generate;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use client::{ChatClient, ChatConfig, GeneratorClient, StubGenerator};
pub use generate::{first_sentence, generate_ground_truth, generate_question, parse_json_field, stub_question};

use crate::error::{Error, Result};
use crate::retrieval::{chunk_document, retrieve, Chunk, Embedder, RetrievalConfig, SplitConfig, VectorIndex};
use crate::rng;

/// One benchmark record. Responses stay `None` until evaluation fills them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub q: String,
    /// Id of the golden chunk the question was generated from.
    pub context_id: String,
    /// Ids of the chunks retrieved for `q` at curation time.
    pub retrieved: Vec<String>,
    pub open_response: Option<String>,
    pub closed_response: Option<String>,
    pub ground_truth: String,
    pub domain_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub domain_tag: String,
    pub text: String,
}

/// Reads every `.txt`/`.md` file under `root`. A file's domain tag is its
/// first directory below `root` (`general` for files directly in it); its id
/// is the relative path without extension.
pub fn load_documents(root: &Path) -> Result<Vec<Document>> {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if matches!(path.extension().and_then(|e| e.to_str()), Some("txt" | "md")) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(root, &mut paths)?;
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).expect("walked below root");
            let parts: Vec<String> = rel
                .with_extension("")
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            let domain_tag = if parts.len() > 1 {
                parts[0].clone()
            } else {
                "general".into()
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(Document {
                id: parts.join("/"),
                domain_tag,
                text,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub split: SplitConfig,
    pub retrieval: RetrievalConfig,
    pub seed: u64,
    pub train_fraction: f64,
    /// Upper bound on concurrent generator calls.
    pub max_in_flight: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            split: SplitConfig::default(),
            retrieval: RetrievalConfig::default(),
            seed: 0,
            train_fraction: 0.8,
            max_in_flight: 4,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.retrieval.validate()?;
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "train_fraction must lie in [0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curated {
    pub chunks: Vec<Chunk>,
    pub index: VectorIndex,
    pub train: Vec<QaRecord>,
    pub test: Vec<QaRecord>,
    pub domain_counts: BTreeMap<String, SplitCounts>,
}

pub const INDEX_FILE: &str = "index.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SUMMARY_FILE: &str = "curation_summary.json";

/// Number of training records for `n` records: `round(n · fraction)`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// Shuffles `records` with the split stream of `seed` and cuts it; both
/// halves come back sorted by chunk id.
pub fn split_records(mut records: Vec<QaRecord>, fraction: f64, seed: u64) -> (Vec<QaRecord>, Vec<QaRecord>) {
    records.sort_by(|a, b| a.context_id.cmp(&b.context_id));
    records.shuffle(&mut rng::stream(seed, &[rng::SPLIT]));
    let test = records.split_off(train_size(records.len(), fraction));
    let mut train = records;
    let mut test = test;
    train.sort_by(|a, b| a.context_id.cmp(&b.context_id));
    test.sort_by(|a, b| a.context_id.cmp(&b.context_id));
    (train, test)
}

/// Runs the whole pipeline. One record per chunk; generator calls run
/// concurrently up to `cfg.max_in_flight`, everything else is ordered by
/// chunk id so output is reproducible.
pub fn curate(
    docs: &[Document],
    gen: &dyn GeneratorClient,
    embedder: &dyn Embedder,
    cfg: &CurationConfig,
) -> Result<Curated> {
    cfg.validate()?;
    if docs.iter().all(|d| d.text.trim().is_empty()) {
        return Err(Error::Argument("no document has any text".into()));
    }
    let mut chunks = Vec::new();
    let mut domain_of = BTreeMap::new();
    for doc in docs.iter().filter(|d| !d.text.trim().is_empty()) {
        for chunk in chunk_document(&doc.id, &doc.text, &cfg.split)? {
            domain_of.insert(chunk.id.clone(), doc.domain_tag.clone());
            chunks.push(chunk);
        }
    }
    chunks.sort_by(|a, b| a.id.cmp(&b.id));
    let index = VectorIndex::build(&chunks, embedder)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<QaRecord>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|chunk| {
                let q = generate_question(&chunk.text, gen)?;
                let ground_truth = generate_ground_truth(&chunk.text, &q, gen)?;
                let retrieved = retrieve(&q, &index, embedder, &cfg.retrieval)?
                    .into_iter()
                    .map(|r| r.id)
                    .collect();
                Ok(QaRecord {
                    q,
                    context_id: chunk.id.clone(),
                    retrieved,
                    open_response: None,
                    closed_response: None,
                    ground_truth,
                    domain_tag: domain_of[&chunk.id].clone(),
                })
            })
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;

    let (train, test) = split_records(records, cfg.train_fraction, cfg.seed);
    let mut domain_counts: BTreeMap<String, SplitCounts> = BTreeMap::new();
    for r in &train {
        domain_counts.entry(r.domain_tag.clone()).or_default().train += 1;
    }
    for r in &test {
        domain_counts.entry(r.domain_tag.clone()).or_default().test += 1;
    }
    Ok(Curated {
        chunks,
        index,
        train,
        test,
        domain_counts,
    })
}

pub fn records_to_jsonl(records: &[QaRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn records_from_jsonl(reader: impl BufRead) -> Result<Vec<QaRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<records>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: QaRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            message: format!("record line {}: {e}", n + 1),
            raw: line.clone(),
        })?;
        if r.q.trim().is_empty() || r.ground_truth.trim().is_empty() {
            return Err(Error::Validation(format!(
                "record line {} has an empty q or ground_truth",
                n + 1
            )));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[QaRecord]) -> Result<()> {
    write_file(path, records_to_jsonl(records)?.as_bytes())
}

pub fn read_records(path: &Path) -> Result<Vec<QaRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    records_from_jsonl(BufReader::new(f))
}

/// Every chunk id a record mentions must exist in `index`.
pub fn check_references(records: &[QaRecord], index: &VectorIndex) -> Result<()> {
    for r in records {
        for id in std::iter::once(&r.context_id).chain(&r.retrieved) {
            if index.get(id).is_none() {
                return Err(Error::Validation(format!(
                    "record {:?} refers to unknown chunk {id}",
                    r.q
                )));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    chunks: usize,
    train: usize,
    test: usize,
    domains: &'a BTreeMap<String, SplitCounts>,
}

/// Writes the index, both splits and a per-domain summary into `dir`.
pub fn write_curated(dir: &Path, curated: &Curated) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    curated.index.save(&dir.join(INDEX_FILE))?;
    write_records(&dir.join(TRAIN_FILE), &curated.train)?;
    write_records(&dir.join(TEST_FILE), &curated.test)?;
    let summary = Summary {
        chunks: curated.chunks.len(),
        train: curated.train.len(),
        test: curated.test.len(),
        domains: &curated.domain_counts,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_file(&dir.join(SUMMARY_FILE), json.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::TrigramEmbedder;

    fn record(id: &str) -> QaRecord {
        QaRecord {
            q: format!("q {id}"),
            context_id: id.into(),
            retrieved: vec![id.into()],
            open_response: None,
            closed_response: None,
            ground_truth: "g".into(),
            domain_tag: "d".into(),
        }
    }

    #[test]
    fn record_json_keys() {
        let json = serde_json::to_value(record("a#0000")).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = [
            "q",
            "context_id",
            "retrieved",
            "open_response",
            "closed_response",
            "ground_truth",
            "domain_tag",
        ];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        let line = records_to_jsonl(&[record("a#0000")]).unwrap();
        assert_eq!(records_from_jsonl(line.as_bytes()).unwrap(), vec![record("a#0000")]);
    }

    #[test]
    fn ten_records_split_eight_two() {
        let records: Vec<QaRecord> = (0..10).map(|i| record(&format!("d#{i:04}"))).collect();
        let (train, test) = split_records(records.clone(), 0.8, 3);
        assert_eq!((train.len(), test.len()), (8, 2));
        let again = split_records(records.clone(), 0.8, 3);
        assert_eq!((train.clone(), test.clone()), again);
        let mut all: Vec<_> = train.iter().chain(&test).cloned().collect();
        all.sort_by(|a, b| a.context_id.cmp(&b.context_id));
        assert_eq!(all, records);
    }

    #[test]
    fn one_chunk_retrieves_itself() {
        let docs = vec![Document {
            id: "only".into(),
            domain_tag: "x".into(),
            text: "The router uses softmax gating.".into(),
        }];
        let cfg = CurationConfig {
            retrieval: RetrievalConfig { theta: 0.0 },
            ..Default::default()
        };
        let out = curate(&docs, &StubGenerator, &TrigramEmbedder::default(), &cfg).unwrap();
        let all: Vec<&QaRecord> = out.train.iter().chain(&out.test).collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].context_id, "only#0000");
        assert!(all[0].retrieved.contains(&"only#0000".to_string()));
        assert_eq!(all[0].q, "What does the router use?");
        check_references(&out.train, &out.index).unwrap();
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let docs = vec![Document {
            id: "blank".into(),
            domain_tag: "x".into(),
            text: "  \n".into(),
        }];
        let r = curate(
            &docs,
            &StubGenerator,
            &TrigramEmbedder::default(),
            &CurationConfig::default(),
        );
        assert!(matches!(r, Err(Error::Argument(_))));
        assert!(matches!(
            curate(
                &[],
                &StubGenerator,
                &TrigramEmbedder::default(),
                &CurationConfig::default()
            ),
            Err(Error::Argument(_))
        ));
    }
}
